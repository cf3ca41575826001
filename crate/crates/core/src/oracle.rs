//! Exact finite-horizon solver for tiny instances.
//!
//! A state is the minislot `t` (after that minislot's arrival draw), the set
//! of packet ages in the queue and the puncture count of every codeword.
//! Packet arrivals are at most one per minislot, so the ages form a bitmask
//! over `0..=l_max`; a head age above `l_max` is the absorbing violation.
//! Rewards and transitions mirror [`crate::env::Env::step`] exactly.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{action_mask, observation_vector, Action, Env, EnvConfig, EnvState, EnvStreams, Lookahead};
use crate::error::{Error, Result};
use crate::grid::{ResourceGrid, MAX_CLASS};
use crate::policies::PolicyKind;
use crate::ppo::{argmax, PolicyParams};

pub const MAX_FREQS: usize = 2;
pub const MAX_HORIZON: usize = 10;
pub const MAX_LATENCY: u32 = 3;
/// Refuse instances whose state-space bound exceeds this.
pub const MAX_STATE_BOUND: u128 = 5_000_000;

/// Fixed grid, fixed load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyInstance {
    pub latency_budget: u32,
    pub arrival_prob: f64,
    pub gamma: f64,
    pub grid: ResourceGrid,
}

impl TinyInstance {
    pub fn new(grid: ResourceGrid, latency_budget: u32, arrival_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&arrival_prob) {
            return Err(Error::Config(format!("arrival probability {arrival_prob} outside [0,1]")));
        }
        if latency_budget == 0 {
            return Err(Error::Config("latency budget must be at least one minislot".into()));
        }
        if grid.codewords().iter().any(|c| c.class_budget > MAX_CLASS) {
            return Err(Error::Config(format!("codeword class above {MAX_CLASS}")));
        }
        Ok(Self {
            latency_budget,
            arrival_prob,
            gamma: 0.99,
            grid,
        })
    }

    /// F=2, T=8, l_max=2 with two codewords per row and `p_u = 0.5`.
    pub fn two_by_eight() -> Self {
        let grid = ResourceGrid::from_rows(8, &[vec![(3, 0), (5, 1)], vec![(5, 1), (3, 0)]]).expect("valid rows");
        Self::new(grid, 2, 0.5).expect("valid instance")
    }

    pub fn freqs(&self) -> usize {
        self.grid.freqs()
    }

    pub fn horizon(&self) -> usize {
        self.grid.minislots()
    }

    pub fn violation_penalty(&self) -> f64 {
        3.0 * self.horizon() as f64 / (self.freqs() as f64 + 1.0)
    }

    /// Environment configuration that replays this instance.
    pub fn env_config(&self) -> EnvConfig {
        let fixed_dist = Some(crate::grid::ClassDistribution::standard_set()[2]);
        EnvConfig {
            freqs: self.freqs(),
            minislots_per_slot: self.horizon(),
            slots: 1,
            latency_budget: self.latency_budget,
            num_codewords: self.grid.codewords().len(),
            pu_choices: vec![self.arrival_prob],
            fixed_pu: Some(self.arrival_prob),
            fixed_dist,
            ..EnvConfig::default()
        }
    }

    pub fn make_env(&self, streams: EnvStreams) -> Result<Env> {
        Env::with_fixed_grid(self.env_config(), self.grid.clone(), streams)
    }

    /// Upper bound on the number of states: `T * 2^(l+1) * prod_w (len_w + 1)`.
    pub fn state_bound(&self) -> u128 {
        let mut bound = self.horizon() as u128 * (1u128 << (self.latency_budget + 1));
        for cw in self.grid.codewords() {
            bound = bound.saturating_mul(cw.length as u128 + 1);
        }
        bound
    }

    pub fn check_size(&self) -> Result<()> {
        let bound = self.state_bound();
        if self.freqs() > MAX_FREQS
            || self.horizon() > MAX_HORIZON
            || self.latency_budget > MAX_LATENCY
            || bound > MAX_STATE_BOUND
        {
            return Err(Error::TooLarge(format!(
                "F={}, T={}, l_max={} (limits {MAX_FREQS}, {MAX_HORIZON}, {MAX_LATENCY}); up to {bound} states",
                self.freqs(),
                self.horizon(),
                self.latency_budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OracleState {
    pub t: usize,
    /// Bit `a` set when a packet of age `a` is queued.
    pub ages: u32,
    pub punctures: Vec<u8>,
}

impl OracleState {
    pub fn queue_length(&self) -> usize {
        self.ages.count_ones() as usize
    }

    pub fn head_age(&self) -> Option<u32> {
        (self.ages != 0).then(|| 31 - self.ages.leading_zeros())
    }

    /// Reads the state off a live environment.
    pub fn from_env(env: &Env) -> Self {
        let t = env.minislot();
        let ages = env
            .queue()
            .iter()
            .fold(0u32, |acc, p| acc | 1 << (t as i64 - p.arrival_minislot));
        let punctures = env.grid().codewords().iter().map(|c| c.puncture_count as u8).collect();
        Self { t, ages, punctures }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub reward: f64,
    /// `None` once the episode is over.
    pub next: Option<OracleState>,
}

impl TinyInstance {
    /// Distribution of the state at `t = 0`.
    pub fn initial_states(&self) -> Vec<(f64, OracleState)> {
        let l = self.latency_budget;
        let state = |ages| OracleState {
            t: 0,
            ages,
            punctures: vec![0; self.grid.codewords().len()],
        };
        let mut out = Vec::new();
        let pk = 1.0 / l as f64;
        // k = 0: the t = 0 arrival is drawn
        if self.arrival_prob > 0.0 {
            out.push((pk * self.arrival_prob, state(1)));
        }
        if self.arrival_prob < 1.0 {
            out.push((pk * (1.0 - self.arrival_prob), state(0)));
        }
        for k in 1..l {
            out.push((pk, state((1 << k) - 1)));
        }
        out
    }

    pub fn env_state(&self, s: &OracleState) -> EnvState {
        let l = self.latency_budget as i64;
        let row = s.t.min(self.horizon() - 1);
        let residuals = (0..self.freqs())
            .map(|f| {
                let id = self.grid.codeword_id(row, f).expect("cell in range");
                let c = self.grid.codewords()[id].class_budget as i32;
                (c - s.punctures[id] as i32).max(-1)
            })
            .collect();
        EnvState {
            minislot: s.t,
            queue_length: s.queue_length(),
            head_slack: s.head_age().map_or(l, |a| l - a as i64),
            residuals,
        }
    }

    fn budget_sum(&self, s: &OracleState, t: usize) -> i64 {
        (0..self.freqs())
            .map(|f| {
                let id = self.grid.codeword_id(t, f).expect("cell in range");
                self.grid.codewords()[id].class_budget as i64 - s.punctures[id] as i64
            })
            .sum()
    }

    pub fn lookahead(&self, s: &OracleState) -> Lookahead {
        let t = s.t.min(self.horizon() - 1);
        Lookahead {
            current_budget_sum: self.budget_sum(s, t),
            next_budget_sum: if t + 1 < self.horizon() { self.budget_sum(s, t + 1) } else { 0 },
        }
    }

    pub fn legal_actions(&self, s: &OracleState) -> Vec<Action> {
        if s.ages == 0 {
            vec![Action::HOLD]
        } else {
            (0..=self.freqs()).map(Action).collect()
        }
    }

    pub fn transitions(&self, s: &OracleState, action: Action) -> Result<Vec<Transition>> {
        let mut punctures = s.punctures.clone();
        let mut ages = s.ages;
        let mut reward = 0.0;
        if let Some(f) = action.frequency() {
            let head = s
                .head_age()
                .ok_or_else(|| Error::Usage("cannot transmit from an empty URLLC queue".into()))?;
            if f >= self.freqs() {
                return Err(Error::Usage(format!("action {} outside 0..={}", action.0, self.freqs())));
            }
            ages &= !(1 << head);
            let id = self.grid.codeword_id(s.t, f)?;
            let budget = self.grid.codewords()[id].class_budget;
            let before = punctures[id] as u32;
            punctures[id] += 1;
            if before <= budget && before + 1 > budget {
                reward -= 1.0;
            }
        }
        let t = s.t + 1;
        let shifted = ages << 1;
        let branches: Vec<(f64, u32)> = if t < self.horizon() {
            [(self.arrival_prob, shifted | 1), (1.0 - self.arrival_prob, shifted)]
                .into_iter()
                .filter(|(p, _)| *p > 0.0)
                .collect()
        } else {
            vec![(1.0, shifted)]
        };
        Ok(branches
            .into_iter()
            .map(|(prob, ages)| {
                let next = OracleState {
                    t,
                    ages,
                    punctures: punctures.clone(),
                };
                let violated = next.head_age().is_some_and(|a| a > self.latency_budget);
                Transition {
                    prob,
                    reward: reward - if violated { self.violation_penalty() } else { 0.0 },
                    next: (!violated && t < self.horizon()).then_some(next),
                }
            })
            .collect())
    }
}

/// Reachable decision states, ordered by `(t, ages, punctures)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub states: Vec<OracleState>,
    pub index: HashMap<OracleState, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn enumerate_states(inst: &TinyInstance) -> Result<StateSpace> {
    inst.check_size()?;
    let mut seen: std::collections::HashSet<OracleState> = std::collections::HashSet::new();
    let mut stack: Vec<OracleState> = inst.initial_states().into_iter().map(|(_, s)| s).collect();
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        for a in inst.legal_actions(&s) {
            for tr in inst.transitions(&s, a)? {
                if let Some(n) = tr.next {
                    if !seen.contains(&n) {
                        stack.push(n);
                    }
                }
            }
        }
    }
    let mut states: Vec<OracleState> = seen.into_iter().collect();
    states.sort();
    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(StateSpace { states, index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub state: OracleState,
    pub value: f64,
    pub action: usize,
    /// Action values, `None` for illegal actions.
    pub q_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Expected discounted return from the initial-state distribution.
    pub value: f64,
    pub space: StateSpace,
    /// Indexed like `space.states`.
    pub entries: Vec<PolicyEntry>,
}

impl OracleSolution {
    pub fn action(&self, s: &OracleState) -> Option<Action> {
        self.space.index.get(s).map(|&i| Action(self.entries[i].action))
    }

    pub fn fixture(&self, inst: &TinyInstance) -> OracleFixture {
        OracleFixture {
            freqs: inst.freqs(),
            horizon: inst.horizon(),
            latency_budget: inst.latency_budget,
            arrival_prob: inst.arrival_prob,
            gamma: inst.gamma,
            value: self.value,
            state_count: self.space.len(),
            policy: self.entries.clone(),
        }
    }
}

/// Serialized solution, consumed by regression tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub freqs: usize,
    pub horizon: usize,
    pub latency_budget: u32,
    pub arrival_prob: f64,
    pub gamma: f64,
    pub value: f64,
    pub state_count: usize,
    pub policy: Vec<PolicyEntry>,
}

impl OracleFixture {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Backward induction; ties go to the lowest action index.
pub fn optimal_value(inst: &TinyInstance) -> Result<OracleSolution> {
    let space = enumerate_states(inst)?;
    let mut values = vec![0.0; space.len()];
    let mut entries: Vec<Option<PolicyEntry>> = vec![None; space.len()];
    // states are sorted by t, so a reverse sweep sees successors first
    for i in (0..space.len()).rev() {
        let s = &space.states[i];
        let mut q_values = vec![None; inst.freqs() + 1];
        let mut best: Option<(usize, f64)> = None;
        for a in inst.legal_actions(s) {
            let q = expected(inst, s, a, |n| values[space.index[n]])?;
            q_values[a.0] = Some(q);
            if best.is_none_or(|(_, b)| q > b + 1e-12) {
                best = Some((a.0, q));
            }
        }
        let (action, value) = best.expect("hold is always legal");
        values[i] = value;
        entries[i] = Some(PolicyEntry {
            state: s.clone(),
            value,
            action,
            q_values,
        });
    }
    let value = inst
        .initial_states()
        .iter()
        .map(|(p, s)| p * values[space.index[s]])
        .sum();
    Ok(OracleSolution {
        value,
        space,
        entries: entries.into_iter().map(|e| e.expect("filled")).collect(),
    })
}

fn expected(inst: &TinyInstance, s: &OracleState, a: Action, value: impl Fn(&OracleState) -> f64) -> Result<f64> {
    Ok(inst
        .transitions(s, a)?
        .iter()
        .map(|tr| tr.prob * (tr.reward + inst.gamma * tr.next.as_ref().map_or(0.0, &value)))
        .sum())
}

/// Exact expected discounted return of an observation-based stochastic
/// policy, given as action probabilities over the `F + 1` actions.
pub fn evaluate_policy(inst: &TinyInstance, mut policy: impl FnMut(&EnvState, &Lookahead) -> Vec<f64>) -> Result<f64> {
    let space = enumerate_states(inst)?;
    let mut values = vec![0.0; space.len()];
    for i in (0..space.len()).rev() {
        let s = &space.states[i];
        let probs = policy(&inst.env_state(s), &inst.lookahead(s));
        let mut v = 0.0;
        for a in inst.legal_actions(s) {
            if probs[a.0] > 0.0 {
                v += probs[a.0] * expected(inst, s, a, |n| values[space.index[n]])?;
            }
        }
        let illegal: f64 = probs.iter().enumerate().filter(|(a, _)| s.ages == 0 && *a > 0).map(|(_, p)| p).sum();
        if illegal > 0.0 {
            return Err(Error::Usage("policy puts mass on an illegal action".into()));
        }
        values[i] = v;
    }
    Ok(inst
        .initial_states()
        .iter()
        .map(|(p, s)| p * values[space.index[s]])
        .sum())
}

fn uniform_over(actions: &[usize], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &a in actions {
        p[a] = 1.0 / actions.len() as f64;
    }
    p
}

/// Exact action distribution of a heuristic scheduler.
pub fn heuristic_distribution(kind: PolicyKind, state: &EnvState, look: &Lookahead) -> Result<Vec<f64>> {
    let n = state.freqs() + 1;
    let transmit_all: Vec<usize> = (1..n).collect();
    let best = *state.residuals.iter().max().expect("at least one frequency");
    let tp: Vec<usize> = (1..n).filter(|&a| state.residuals[a - 1] == best).collect();
    if state.queue_length == 0 {
        return Ok(uniform_over(&[0], n));
    }
    Ok(match kind {
        PolicyKind::Random => {
            let mut p = uniform_over(&transmit_all, n);
            p.iter_mut().for_each(|x| *x *= 0.5);
            p[0] = 0.5;
            p
        }
        PolicyKind::Aggressive => uniform_over(&transmit_all, n),
        PolicyKind::Tp => uniform_over(&tp, n),
        PolicyKind::TpLazy => {
            if state.head_slack <= 0 || look.current_budget_sum >= look.next_budget_sum {
                uniform_over(&tp, n)
            } else {
                uniform_over(&[0], n)
            }
        }
        PolicyKind::Ppo => return Err(Error::Usage("ppo has no closed-form distribution".into())),
    })
}

/// Greedy PPO action as a one-hot distribution.
pub fn ppo_greedy_distribution(params: &PolicyParams, inst: &TinyInstance, state: &EnvState) -> Result<Vec<f64>> {
    let obs = observation_vector(state, inst.horizon(), inst.latency_budget);
    let probs = params.action_probs(&obs, &action_mask(state))?;
    let mut one_hot = vec![0.0; probs.len()];
    one_hot[argmax(&probs)] = 1.0;
    Ok(one_hot)
}

/// Plays the oracle's optimal policy inside a live environment.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub solution: OracleSolution,
}

impl crate::policies::Scheduler for OraclePolicy {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn select(&mut self, env: &Env, _state: &EnvState, _rng: &mut rand_chacha::ChaCha8Rng) -> Action {
        self.solution
            .action(&OracleState::from_env(env))
            .expect("environment state is reachable in the oracle")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(class: u32, horizon: usize, latency: u32, pu: f64) -> TinyInstance {
        let grid = ResourceGrid::from_rows(horizon, &[vec![(horizon, class)]]).unwrap();
        TinyInstance::new(grid, latency, pu).unwrap()
    }

    #[test]
    fn toy_state_count_matches_hand_enumeration() {
        // t=0 {age0}; after hold t=1 {0,1} unpunctured; after transmit t=1 {0} punctured
        let inst = single(0, 2, 1, 1.0);
        let space = enumerate_states(&inst).unwrap();
        assert_eq!(space.len(), 3);
        let sol = optimal_value(&inst).unwrap();
        // hold, then transmit at t=1: -0.99; transmit now: -1
        assert!((sol.value + 0.99).abs() < 1e-12);
        let start = &space.states[0];
        assert_eq!(sol.action(start), Some(Action::HOLD));
    }

    #[test]
    fn no_traffic_single_chain() {
        let inst = single(0, 6, 1, 0.0);
        let space = enumerate_states(&inst).unwrap();
        assert_eq!(space.len(), 6);
        assert!(space.states.iter().all(|s| s.ages == 0));
        assert_eq!(optimal_value(&inst).unwrap().value, 0.0);
    }

    #[test]
    fn class1_codeword_absorbs_two_packets() {
        let inst = single(1, 2, 2, 1.0);
        let sol = optimal_value(&inst).unwrap();
        assert!(sol.value.abs() < 1e-12, "{}", sol.value);
    }

    #[test]
    fn refuses_large_instances() {
        let grid = ResourceGrid::from_rows(12, &[vec![(12, 0)]]).unwrap();
        let inst = TinyInstance::new(grid, 2, 0.5).unwrap();
        assert!(matches!(enumerate_states(&inst), Err(Error::TooLarge(_))));
        let grid = ResourceGrid::from_rows(4, &vec![vec![(4, 0)]; 3]).unwrap();
        let inst = TinyInstance::new(grid, 2, 0.5).unwrap();
        assert!(matches!(optimal_value(&inst), Err(Error::TooLarge(_))));
        assert!(matches!(single(0, 8, 4, 0.5).check_size(), Err(Error::TooLarge(_))));
    }

    #[test]
    fn holding_beats_aggressive_when_protection_follows() {
        let grid = ResourceGrid::from_rows(4, &[vec![(2, 0), (2, 1)]]).unwrap();
        let inst = TinyInstance::new(grid, 3, 0.0).unwrap();
        let sol = optimal_value(&inst).unwrap();
        let aggressive = evaluate_policy(&inst, |s, l| heuristic_distribution(PolicyKind::Aggressive, s, l).unwrap()).unwrap();
        assert!(sol.value > aggressive + 1e-6, "{} vs {aggressive}", sol.value);
    }

    #[test]
    fn oracle_dominates_every_heuristic_exactly() {
        let inst = TinyInstance::two_by_eight();
        let sol = optimal_value(&inst).unwrap();
        for kind in PolicyKind::HEURISTICS {
            let v = evaluate_policy(&inst, |s, l| heuristic_distribution(kind, s, l).unwrap()).unwrap();
            assert!(v <= sol.value + 1e-12, "{kind}: {v} > {}", sol.value);
        }
    }

    #[test]
    fn oracle_policy_reproduces_its_value() {
        let inst = TinyInstance::two_by_eight();
        let sol = optimal_value(&inst).unwrap();
        let table: HashMap<OracleState, usize> = sol.entries.iter().map(|e| (e.state.clone(), e.action)).collect();
        let space = &sol.space;
        // exact re-evaluation of the tabulated greedy policy
        let mut values = vec![0.0; space.len()];
        for i in (0..space.len()).rev() {
            let s = &space.states[i];
            values[i] = expected(&inst, s, Action(table[s]), |n| values[space.index[n]]).unwrap();
        }
        let v: f64 = inst.initial_states().iter().map(|(p, s)| p * values[space.index[s]]).sum();
        assert!((v - sol.value).abs() < 1e-12);
    }

    #[test]
    fn initial_distribution_sums_to_one() {
        for pu in [0.0, 0.3, 1.0] {
            let inst = single(0, 4, 3, pu);
            let total: f64 = inst.initial_states().iter().map(|(p, _)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixture_round_trip() {
        let inst = single(1, 2, 2, 1.0);
        let fixture = optimal_value(&inst).unwrap().fixture(&inst);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.json");
        fixture.save(&path).unwrap();
        assert_eq!(OracleFixture::load(&path).unwrap(), fixture);
    }
}
