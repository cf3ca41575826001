//! The scheduling MDP: state assembly, action application, reward and
//! termination, and per-episode randomization of traffic load and codeword
//! classes.
//!
//! Events inside one minislot `t` happen in a fixed order: the arrival of
//! minislot `t` is drawn, the agent acts on the resulting state, time advances
//! to `t + 1` (with that minislot's arrival draw, if `t + 1 < T`) and the
//! latency of the new head of the queue is checked.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ClassDistribution, ResourceGrid, MAX_CLASS};
use crate::urllc::UrllcQueue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Number of frequency resources F.
    pub freqs: usize,
    /// Minislots per slot M.
    pub minislots_per_slot: usize,
    /// Slots per episode.
    pub slots: usize,
    /// `l_u^max` in minislots.
    pub latency_budget: u32,
    /// Total number of codewords |W|.
    pub num_codewords: usize,
    pub pu_choices: Vec<f64>,
    pub dist_choices: Vec<ClassDistribution>,
    pub fixed_pu: Option<f64>,
    pub fixed_dist: Option<ClassDistribution>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            freqs: 12,
            minislots_per_slot: 14,
            slots: 10,
            latency_budget: 7,
            num_codewords: 120,
            pu_choices: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            dist_choices: ClassDistribution::standard_set(),
            fixed_pu: None,
            fixed_dist: None,
        }
    }
}

impl EnvConfig {
    /// Episode length `T = M * slots`.
    pub fn horizon(&self) -> usize {
        self.minislots_per_slot * self.slots
    }

    /// Same configuration with episode length `horizon`, keeping the number
    /// of codewords per frequency row per slot constant.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon % self.minislots_per_slot != 0 {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a positive multiple of {} minislots",
                self.minislots_per_slot
            )));
        }
        let slots = horizon / self.minislots_per_slot;
        let mut out = self.clone();
        out.num_codewords = self.num_codewords * slots / self.slots;
        out.slots = slots;
        Ok(out)
    }

    /// Magnitude of the latency-violation penalty, `3T / (F + 1)`.
    pub fn violation_penalty(&self) -> f64 {
        3.0 * self.horizon() as f64 / (self.freqs as f64 + 1.0)
    }

    pub fn num_actions(&self) -> usize {
        self.freqs + 1
    }

    pub fn observation_dim(&self) -> usize {
        self.freqs + 2
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if self.freqs == 0 || t == 0 || self.num_codewords == 0 {
            return Err(Error::Config("F, M, slots and |W| must be positive".into()));
        }
        if self.latency_budget == 0 || self.latency_budget as usize >= t {
            return Err(Error::Config(format!(
                "latency budget {} must lie in [1, T={t})",
                self.latency_budget
            )));
        }
        if self.num_codewords % self.freqs != 0 || self.num_codewords / self.freqs > t {
            return Err(Error::Config(format!(
                "{} codewords cannot tile {} rows of {t} minislots",
                self.num_codewords, self.freqs
            )));
        }
        let valid_p = |p: f64| (0.0..=1.0).contains(&p);
        match self.fixed_pu {
            Some(p) if !valid_p(p) => {
                return Err(Error::Config(format!("arrival probability {p} outside [0,1]")))
            }
            None if self.pu_choices.is_empty() => {
                return Err(Error::Config("no arrival probabilities to choose from".into()))
            }
            _ => {}
        }
        if let Some(p) = self.pu_choices.iter().find(|p| !valid_p(**p)) {
            return Err(Error::Config(format!("arrival probability {p} outside [0,1]")));
        }
        if self.fixed_dist.is_none() && self.dist_choices.is_empty() {
            return Err(Error::Config("no class distributions to choose from".into()));
        }
        for d in self.dist_choices.iter().chain(self.fixed_dist.iter()) {
            ClassDistribution::new(d.prob_class0, d.prob_class1)?;
        }
        Ok(())
    }
}

/// Action `0` holds; action `f + 1` transmits the head packet on frequency `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action(pub usize);

impl Action {
    pub const HOLD: Action = Action(0);

    pub fn transmit(freq: usize) -> Self {
        Action(freq + 1)
    }

    pub fn frequency(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

/// Observation `{Q_t, Delta_t, s_t(0..F)}` at the current minislot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub minislot: usize,
    pub queue_length: usize,
    pub head_slack: i64,
    pub residuals: Vec<i32>,
}

impl EnvState {
    pub fn freqs(&self) -> usize {
        self.residuals.len()
    }
}

/// `{0}` for an empty queue, otherwise `{0, .., F}`.
pub fn legal_actions(state: &EnvState) -> Vec<Action> {
    if state.queue_length == 0 {
        vec![Action::HOLD]
    } else {
        (0..=state.freqs()).map(Action).collect()
    }
}

/// Boolean mask over the `F + 1` actions.
pub fn action_mask(state: &EnvState) -> Vec<bool> {
    let mut mask = vec![state.queue_length > 0; state.freqs() + 1];
    mask[0] = true;
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub new_outages: usize,
    pub latency_violated: bool,
    pub packet_served: bool,
    /// Episode reached `t = T` without a violation.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Unclamped budget sums over the codewords live in the current and next
/// minislot; the next sum is 0 in the last minislot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookahead {
    pub current_budget_sum: i64,
    pub next_budget_sum: i64,
}

/// Per-environment random streams.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    /// Episode parameters, codeword placement and classes.
    pub placement: ChaCha8Rng,
    /// Initial queue and packet arrivals.
    pub arrivals: ChaCha8Rng,
}

/// One step of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub action: usize,
    pub reward: f64,
    pub queue_length: usize,
    pub head_slack: i64,
    pub outage_count: usize,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    fixed_grid: Option<ResourceGrid>,
    streams: EnvStreams,
    grid: ResourceGrid,
    queue: UrllcQueue,
    arrival_prob: f64,
    dist: ClassDistribution,
    t: usize,
    done: bool,
}

impl Env {
    pub fn new(config: EnvConfig, streams: EnvStreams) -> Result<Self> {
        config.validate()?;
        let placeholder = ResourceGrid::from_rows(1, &[vec![(1, 0)]])?;
        let queue = UrllcQueue::new(0.0, config.latency_budget)?;
        let dist = ClassDistribution::standard_set()[0];
        Ok(Self {
            config,
            fixed_grid: None,
            streams,
            grid: placeholder,
            queue,
            arrival_prob: 0.0,
            dist,
            t: 0,
            done: true,
        })
    }

    /// Environment that replays `grid` (with punctures cleared) every episode
    /// instead of drawing a fresh placement.
    pub fn with_fixed_grid(config: EnvConfig, grid: ResourceGrid, streams: EnvStreams) -> Result<Self> {
        if grid.freqs() != config.freqs || grid.minislots() != config.horizon() {
            return Err(Error::Config(format!(
                "fixed grid is {}x{}, config expects {}x{}",
                grid.minislots(),
                grid.freqs(),
                config.horizon(),
                config.freqs
            )));
        }
        let mut env = Self::new(config, streams)?;
        let mut grid = grid;
        grid.clear_punctures();
        env.fixed_grid = Some(grid);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn grid(&self) -> &ResourceGrid {
        &self.grid
    }

    pub fn queue(&self) -> &UrllcQueue {
        &self.queue
    }

    pub fn minislot(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn class_distribution(&self) -> ClassDistribution {
        self.dist
    }

    /// Starts a new episode.
    pub fn reset(&mut self) -> Result<EnvState> {
        let cfg = &self.config;
        let rng = &mut self.streams.placement;
        self.arrival_prob = match cfg.fixed_pu {
            Some(p) => p,
            None => *cfg.pu_choices.choose(rng).expect("validated non-empty"),
        };
        self.dist = match cfg.fixed_dist {
            Some(d) => d,
            None => *cfg.dist_choices.choose(rng).expect("validated non-empty"),
        };
        self.grid = match &self.fixed_grid {
            Some(g) => g.clone(),
            None => ResourceGrid::generate_placement(
                cfg.freqs,
                cfg.horizon(),
                cfg.num_codewords,
                self.dist,
                rng,
            )?,
        };
        self.queue = UrllcQueue::new(self.arrival_prob, cfg.latency_budget)?;
        let seeded = self.queue.seed_initial(&mut self.streams.arrivals)?;
        // the youngest seeded packet already occupies minislot 0
        if seeded == 0 {
            self.queue.maybe_arrive(0, &mut self.streams.arrivals);
        }
        self.t = 0;
        self.done = false;
        Ok(self.state())
    }

    pub fn state(&self) -> EnvState {
        let t = self.t.min(self.config.horizon() - 1);
        EnvState {
            minislot: self.t,
            queue_length: self.queue.len(),
            head_slack: self.queue.head_slack(self.t as i64),
            residuals: self.grid.residuals_at(t).expect("minislot in range"),
        }
    }

    pub fn lookahead(&self) -> Lookahead {
        let horizon = self.config.horizon();
        let t = self.t.min(horizon - 1);
        let next = if t + 1 < horizon {
            self.grid.budget_sum(t + 1).expect("minislot in range")
        } else {
            0
        };
        Lookahead {
            current_budget_sum: self.grid.budget_sum(t).expect("minislot in range"),
            next_budget_sum: next,
        }
    }

    pub fn legal_actions(&self) -> Vec<Action> {
        legal_actions(&self.state())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if action.0 > self.config.freqs {
            return Err(Error::Usage(format!("action {} outside 0..={}", action.0, self.config.freqs)));
        }
        let mut info = StepInfo::default();
        if let Some(freq) = action.frequency() {
            if self.queue.is_empty() {
                return Err(Error::Usage("cannot transmit from an empty URLLC queue".into()));
            }
            self.queue.pop_head()?;
            info.packet_served = true;
            if self.grid.puncture(self.t, freq)?.new_outage {
                info.new_outages = 1;
            }
        }
        let embb_penalty = -(info.new_outages as f64);

        self.t += 1;
        let horizon = self.config.horizon();
        if self.t < horizon {
            self.queue.maybe_arrive(self.t as i64, &mut self.streams.arrivals);
        }
        let latency_penalty = if self.queue.head_slack(self.t as i64) < 0 {
            info.latency_violated = true;
            -self.config.violation_penalty()
        } else {
            0.0
        };
        info.truncated = !info.latency_violated && self.t == horizon;
        self.done = info.latency_violated || self.t == horizon;
        Ok(StepResult {
            next_state: self.state(),
            reward: embb_penalty + latency_penalty,
            done: self.done,
            info,
        })
    }

    /// `[Q/T, Delta/l_max, s(0)/c, .., s(F-1)/c]` with `c = max(MAX_CLASS, 1)`.
    pub fn observation_vector(&self, state: &EnvState) -> Vec<f64> {
        observation_vector(state, self.config.horizon(), self.config.latency_budget)
    }
}

pub fn observation_vector(state: &EnvState, horizon: usize, latency_budget: u32) -> Vec<f64> {
    let class_scale = MAX_CLASS.max(1) as f64;
    let mut obs = Vec::with_capacity(state.residuals.len() + 2);
    obs.push(state.queue_length as f64 / horizon as f64);
    obs.push(state.head_slack as f64 / latency_budget as f64);
    obs.extend(state.residuals.iter().map(|&s| s as f64 / class_scale));
    obs
}
