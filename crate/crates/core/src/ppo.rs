//! PPO-Clip with separate actor and critic networks.
//!
//! Every update collects whole episodes with the current stochastic policy,
//! estimates advantages with GAE, runs up to `policy_iters` full-batch ascent
//! steps on the clipped surrogate (stopping once the sampled mean KL to the
//! behaviour policy exceeds `kl_threshold`) and regresses the critic onto
//! discounted returns for `value_iters` steps.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{action_mask, Action, Env, EnvConfig, EnvState, StepResult};
use crate::error::{Error, Result};
use crate::harness::Streams;
use crate::mlp::{Adam, Checkpoint, Mlp, MlpSpec};
use crate::policies::Scheduler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub kl_threshold: f64,
    /// Discount used for the critic's regression targets.
    pub gamma_return: f64,
    /// Discount inside the GAE temporal differences.
    pub gamma_gae: f64,
    pub lambda_gae: f64,
    /// Minimum number of transitions per update; episodes are never split.
    pub steps_per_update: usize,
    pub policy_iters: usize,
    pub value_iters: usize,
    pub total_updates: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
    pub hidden_sizes: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            kl_threshold: 1.5e-2,
            gamma_return: 0.99,
            gamma_gae: 1.0,
            lambda_gae: 0.97,
            steps_per_update: 4200,
            policy_iters: 80,
            value_iters: 80,
            total_updates: 500,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            normalize_advantages: false,
            hidden_sizes: vec![128, 64, 32],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::Config(format!("clip ratio {} outside (0,1)", self.clip_ratio)));
        }
        if !unit(self.gamma_return) || !unit(self.gamma_gae) || !unit(self.lambda_gae) {
            return Err(Error::Config("discount and GAE factors must lie in [0,1]".into()));
        }
        if self.steps_per_update == 0 || self.policy_iters == 0 || self.value_iters == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if !(self.kl_threshold > 0.0) || !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::Config("KL threshold and learning rates must be positive".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Actor (logits over `F + 1` actions) and critic (scalar value).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl PolicyParams {
    pub fn actor_spec(obs_dim: usize, num_actions: usize, hidden: &[usize]) -> Result<MlpSpec> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(num_actions);
        MlpSpec::new(sizes)
    }

    pub fn critic_spec(obs_dim: usize, hidden: &[usize]) -> Result<MlpSpec> {
        Self::actor_spec(obs_dim, 1, hidden)
    }

    pub fn init<R: Rng + ?Sized>(env: &EnvConfig, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let actor = Mlp::init_xavier(Self::actor_spec(env.observation_dim(), env.num_actions(), hidden)?, rng);
        let critic = Mlp::init_xavier(Self::critic_spec(env.observation_dim(), hidden)?, rng);
        Ok(Self { actor, critic })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::new([("actor", &self.actor), ("critic", &self.critic)]).save(path)
    }

    /// Loads a checkpoint and checks it against the environment's dimensions.
    pub fn load(path: &Path, env: &EnvConfig, hidden: &[usize]) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        Ok(Self {
            actor: ckpt.network("actor", &Self::actor_spec(env.observation_dim(), env.num_actions(), hidden)?)?,
            critic: ckpt.network("critic", &Self::critic_spec(env.observation_dim(), hidden)?)?,
        })
    }

    pub fn action_probs(&self, obs: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        masked_policy(&self.actor.forward(obs)?, mask)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }
}

/// Log-softmax restricted to the legal actions; illegal entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Usage(format!("{} logits for a mask of {}", logits.len(), mask.len())));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Usage("action mask has no legal action".into()));
    }
    let log_sum = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| (l - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l - log_sum } else { f64::NEG_INFINITY })
        .collect())
}

/// Softmax over the legal actions; illegal actions get probability exactly 0.
pub fn masked_policy(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    Ok(masked_log_softmax(logits, mask)?
        .into_iter()
        .map(|lp| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() })
        .collect())
}

/// A run of consecutive steps from one episode. `bootstrap_value` is the
/// value of the state after the last step: 0 after a latency violation,
/// the critic's estimate after horizon truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, mask: Vec<bool>, action: usize, log_prob: f64, reward: f64, value: f64) {
        self.observations.push(obs);
        self.masks.push(mask);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
    }

    /// Closes the open segment at the current length.
    pub fn end_segment(&mut self, bootstrap_value: f64) {
        let start = self.segments.last().map_or(0, |s| s.end);
        if start < self.len() {
            self.segments.push(Segment {
                start,
                end: self.len(),
                bootstrap_value,
            });
        }
    }

    /// Builds a reward/value-only trajectory, mainly for tests.
    pub fn from_rewards(rewards: &[f64], values: &[f64], segments: Vec<Segment>) -> Self {
        Self {
            observations: vec![Vec::new(); rewards.len()],
            masks: vec![Vec::new(); rewards.len()],
            actions: vec![0; rewards.len()],
            log_probs: vec![0.0; rewards.len()],
            rewards: rewards.to_vec(),
            values: values.to_vec(),
            segments,
        }
    }

    fn check_segments(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Usage("empty trajectory".into()));
        }
        let mut expected = 0;
        for s in &self.segments {
            if s.start != expected || s.end <= s.start {
                return Err(Error::Usage("trajectory segments are not contiguous".into()));
            }
            expected = s.end;
        }
        if expected != self.len() || self.values.len() != self.len() {
            return Err(Error::Usage("trajectory segments do not cover every step".into()));
        }
        Ok(())
    }
}

/// Raw GAE advantages, `A_t = sum_k (gamma lambda)^k delta_{t+k}`.
pub fn compute_gae(traj: &Trajectory, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    traj.check_segments()?;
    let mut adv = vec![0.0; traj.len()];
    for seg in &traj.segments {
        let mut next_value = seg.bootstrap_value;
        let mut running = 0.0;
        for t in (seg.start..seg.end).rev() {
            let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
            running = delta + gamma * lambda * running;
            adv[t] = running;
            next_value = traj.values[t];
        }
    }
    Ok(adv)
}

/// Discounted reward-to-go per segment, seeded with the bootstrap value.
pub fn discounted_returns(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    traj.check_segments()?;
    let mut ret = vec![0.0; traj.len()];
    for seg in &traj.segments {
        let mut acc = seg.bootstrap_value;
        for t in (seg.start..seg.end).rev() {
            acc = traj.rewards[t] + gamma * acc;
            ret[t] = acc;
        }
    }
    Ok(ret)
}

pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// Flattened training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_trajectory(traj: &Trajectory, cfg: &PpoConfig) -> Result<Self> {
        let mut advantages = compute_gae(traj, cfg.gamma_gae, cfg.lambda_gae)?;
        if cfg.normalize_advantages {
            normalize(&mut advantages);
        }
        let returns = discounted_returns(traj, cfg.gamma_return)?;
        let dim = traj.observations[0].len();
        let observations = Array2::from_shape_vec((traj.len(), dim), traj.observations.concat())
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(Self {
            observations,
            masks: traj.masks.clone(),
            actions: traj.actions.clone(),
            old_log_probs: traj.log_probs.clone(),
            advantages,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Clipped surrogate and its ingredients for one batch under `actor`.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    /// `mean(min(r A, clip(r, 1-eps, 1+eps) A))`.
    pub objective: f64,
    /// `mean(r A)`.
    pub plain_objective: f64,
    /// `mean(logp_old - logp_new)` over the taken actions.
    pub mean_kl: f64,
    pub ratios: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Masked action probabilities per sample.
    pub probs: Array2<f64>,
    /// Per-sample weight `r A` where the unclipped branch is active, else 0.
    active_weights: Vec<f64>,
}

pub fn evaluate_surrogate(actor: &Mlp, batch: &Batch, clip_ratio: f64) -> Result<(SurrogateEval, crate::mlp::ForwardCache)> {
    let cache = actor.forward_batch(batch.observations.view())?;
    let logits = cache.output();
    let n = batch.len();
    let mut probs = Array2::zeros(logits.dim());
    let mut log_probs = Vec::with_capacity(n);
    let mut ratios = Vec::with_capacity(n);
    let mut active_weights = Vec::with_capacity(n);
    let (mut objective, mut plain, mut kl) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let row: Vec<f64> = logits.row(i).to_vec();
        let lp = masked_log_softmax(&row, &batch.masks[i])?;
        for (j, &l) in lp.iter().enumerate() {
            probs[[i, j]] = if l == f64::NEG_INFINITY { 0.0 } else { l.exp() };
        }
        let new_lp = lp[batch.actions[i]];
        let ratio = (new_lp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip_ratio, 1.0 + clip_ratio) * adv;
        objective += unclipped.min(clipped);
        plain += unclipped;
        kl += batch.old_log_probs[i] - new_lp;
        active_weights.push(if unclipped <= clipped { unclipped } else { 0.0 });
        log_probs.push(new_lp);
        ratios.push(ratio);
    }
    let nf = n as f64;
    let eval = SurrogateEval {
        objective: objective / nf,
        plain_objective: plain / nf,
        mean_kl: kl / nf,
        ratios,
        log_probs,
        probs,
        active_weights,
    };
    if !eval.objective.is_finite() {
        return Err(Error::Training(format!("non-finite surrogate {}", eval.objective)));
    }
    Ok((eval, cache))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyUpdateStats {
    pub mean_kl: f64,
    /// Number of gradient steps taken before stopping.
    pub stop_iter: usize,
    pub initial_objective: f64,
    pub initial_plain_objective: f64,
    pub final_objective: f64,
}

/// Clipped-surrogate ascent with mean-KL early stopping.
pub fn policy_update(batch: &Batch, actor: &mut Mlp, optimizer: &mut Adam, cfg: &PpoConfig) -> Result<PolicyUpdateStats> {
    let n = batch.len() as f64;
    let mut stats = PolicyUpdateStats {
        mean_kl: 0.0,
        stop_iter: cfg.policy_iters,
        initial_objective: 0.0,
        initial_plain_objective: 0.0,
        final_objective: 0.0,
    };
    for iter in 0..cfg.policy_iters {
        let (eval, cache) = evaluate_surrogate(actor, batch, cfg.clip_ratio)?;
        if iter == 0 {
            stats.initial_objective = eval.objective;
            stats.initial_plain_objective = eval.plain_objective;
        }
        stats.mean_kl = eval.mean_kl;
        stats.final_objective = eval.objective;
        if eval.mean_kl > cfg.kl_threshold {
            stats.stop_iter = iter;
            break;
        }
        // d(-objective)/d logits = -(w/n) (onehot(a) - p)
        let mut grad = eval.probs.clone();
        for i in 0..batch.len() {
            let w = eval.active_weights[i] / n;
            grad.row_mut(i).mapv_inplace(|p| p * w);
            grad[[i, batch.actions[i]]] -= w;
        }
        let grads = actor.backward(&cache, grad.view())?;
        optimizer.step(actor, &grads)?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueUpdateStats {
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn value_loss(critic: &Mlp, batch: &Batch) -> Result<(f64, Array2<f64>, crate::mlp::ForwardCache)> {
    let cache = critic.forward_batch(batch.observations.view())?;
    let n = batch.len() as f64;
    let mut grad = Array2::zeros((batch.len(), 1));
    let mut loss = 0.0;
    for (i, &target) in batch.returns.iter().enumerate() {
        let err = cache.output()[[i, 0]] - target;
        loss += err * err;
        grad[[i, 0]] = 2.0 * err / n;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite value loss {loss}")));
    }
    Ok((loss, grad, cache))
}

/// Mean-squared-error regression of the critic onto the batch returns.
pub fn value_update(batch: &Batch, critic: &mut Mlp, optimizer: &mut Adam, cfg: &PpoConfig) -> Result<ValueUpdateStats> {
    let mut initial_loss = None;
    for _ in 0..cfg.value_iters {
        let (loss, grad, cache) = value_loss(critic, batch)?;
        initial_loss.get_or_insert(loss);
        let grads = critic.backward(&cache, grad.view())?;
        optimizer.step(critic, &grads)?;
    }
    let (final_loss, _, _) = value_loss(critic, batch)?;
    Ok(ValueUpdateStats {
        initial_loss: initial_loss.unwrap_or(final_loss),
        final_loss,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub update: usize,
    #[serde(rename = "meanEpReward")]
    pub mean_ep_reward: f64,
    #[serde(rename = "meanEpLength")]
    pub mean_ep_length: f64,
    #[serde(rename = "meanKL")]
    pub mean_kl: f64,
    #[serde(rename = "stopIter")]
    pub stop_iter: usize,
    #[serde(rename = "valueLoss")]
    pub value_loss: f64,
    #[serde(rename = "wallClockSeconds")]
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<TrainingLogRow>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.rows.is_empty() {
            w.write_record([
                "update",
                "meanEpReward",
                "meanEpLength",
                "meanKL",
                "stopIter",
                "valueLoss",
                "wallClockSeconds",
            ])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStats {
    pub episodes: usize,
    pub mean_total_reward: f64,
    pub mean_length: f64,
}

/// Samples from a probability vector; zero-probability entries are never drawn.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Collects whole episodes until at least `min_steps` transitions are stored.
pub fn collect_rollout(env: &mut Env, params: &PolicyParams, min_steps: usize, rng: &mut ChaCha8Rng) -> Result<(Trajectory, RolloutStats)> {
    let mut traj = Trajectory::default();
    let mut totals = Vec::new();
    while traj.len() < min_steps {
        let mut state = env.reset()?;
        let mut total = 0.0;
        loop {
            let obs = env.observation_vector(&state);
            let mask = action_mask(&state);
            let probs = params.action_probs(&obs, &mask)?;
            let action = sample_action(&probs, rng);
            let value = params.value(&obs)?;
            let StepResult {
                next_state,
                reward,
                done,
                info,
            } = env.step(Action(action))?;
            total += reward;
            traj.push(obs, mask, action, probs[action].ln(), reward, value);
            if done {
                let bootstrap = if info.latency_violated {
                    0.0
                } else {
                    params.value(&env.observation_vector(&next_state))?
                };
                traj.end_segment(bootstrap);
                break;
            }
            state = next_state;
        }
        totals.push(total);
    }
    let episodes = totals.len();
    Ok((
        traj.clone(),
        RolloutStats {
            episodes,
            mean_total_reward: totals.iter().sum::<f64>() / episodes as f64,
            mean_length: traj.len() as f64 / episodes as f64,
        },
    ))
}

/// Owns the parameters, optimizers and training environment.
pub struct Trainer {
    ppo: PpoConfig,
    params: PolicyParams,
    actor_opt: Adam,
    critic_opt: Adam,
    env: Env,
    policy_rng: ChaCha8Rng,
    log: TrainingLog,
    started: Instant,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, ppo: PpoConfig, seed: u64) -> Result<Self> {
        ppo.validate()?;
        let mut streams = Streams::seed_everything(seed);
        let params = PolicyParams::init(&env_config, &ppo.hidden_sizes, &mut streams.init)?;
        let env = Env::new(env_config, streams.env_streams())?;
        Ok(Self::from_parts(ppo, params, env, streams.training))
    }

    /// Trainer over a caller-supplied environment (e.g. one with a fixed grid).
    pub fn with_env(env: Env, ppo: PpoConfig, seed: u64) -> Result<Self> {
        ppo.validate()?;
        let mut streams = Streams::seed_everything(seed);
        let params = PolicyParams::init(env.config(), &ppo.hidden_sizes, &mut streams.init)?;
        Ok(Self::from_parts(ppo, params, env, streams.training))
    }

    fn from_parts(ppo: PpoConfig, params: PolicyParams, env: Env, policy_rng: ChaCha8Rng) -> Self {
        let actor_opt = Adam::new(params.actor.spec(), ppo.actor_lr);
        let critic_opt = Adam::new(params.critic.spec(), ppo.critic_lr);
        Self {
            ppo,
            params,
            actor_opt,
            critic_opt,
            env,
            policy_rng,
            log: TrainingLog::default(),
            started: Instant::now(),
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn collect(&mut self) -> Result<(Trajectory, RolloutStats)> {
        collect_rollout(&mut self.env, &self.params, self.ppo.steps_per_update, &mut self.policy_rng)
    }

    /// One collect-and-update round.
    pub fn update(&mut self) -> Result<TrainingLogRow> {
        let (traj, stats) = self.collect()?;
        let batch = Batch::from_trajectory(&traj, &self.ppo)?;
        let pi = policy_update(&batch, &mut self.params.actor, &mut self.actor_opt, &self.ppo)?;
        let v = value_update(&batch, &mut self.params.critic, &mut self.critic_opt, &self.ppo)?;
        let row = TrainingLogRow {
            update: self.log.rows.len(),
            mean_ep_reward: stats.mean_total_reward,
            mean_ep_length: stats.mean_length,
            mean_kl: pi.mean_kl,
            stop_iter: pi.stop_iter,
            value_loss: v.initial_loss,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        log::info!(
            "update {:>4}  reward {:>9.3}  len {:>6.1}  kl {:.4}  stop {:>2}  vloss {:.3}",
            row.update,
            row.mean_ep_reward,
            row.mean_ep_length,
            row.mean_kl,
            row.stop_iter,
            row.value_loss
        );
        self.log.rows.push(row.clone());
        Ok(row)
    }

    pub fn run(mut self) -> Result<(PolicyParams, TrainingLog)> {
        for _ in 0..self.ppo.total_updates {
            self.update()?;
        }
        Ok((self.params, self.log))
    }
}

/// Full training run from a master seed.
pub fn train(env_config: &EnvConfig, ppo: &PpoConfig, seed: u64) -> Result<(PolicyParams, TrainingLog)> {
    Trainer::new(env_config.clone(), ppo.clone(), seed)?.run()
}

/// Learned scheduler; greedy picks the most probable legal action.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub params: PolicyParams,
    pub greedy: bool,
}

impl PpoAgent {
    pub fn new(params: PolicyParams, greedy: bool) -> Self {
        Self { params, greedy }
    }

    pub fn probs(&self, env: &Env, state: &EnvState) -> Vec<f64> {
        let obs = env.observation_vector(state);
        self.params
            .action_probs(&obs, &action_mask(state))
            .expect("observation matches the actor")
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Scheduler for PpoAgent {
    fn name(&self) -> String {
        "ppo".to_string()
    }

    fn select(&mut self, env: &Env, state: &EnvState, rng: &mut ChaCha8Rng) -> Action {
        let probs = self.probs(env, state);
        if self.greedy {
            Action(argmax(&probs))
        } else {
            Action(sample_action(&probs, rng))
        }
    }
}
