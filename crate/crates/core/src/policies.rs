//! Baseline URLLC schedulers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, EnvState, Lookahead};
use crate::error::{Error, Result};

/// Hold or transmit with equal probability; the frequency is uniform.
pub fn random_policy<R: Rng + ?Sized>(state: &EnvState, rng: &mut R) -> Action {
    if state.queue_length == 0 || rng.gen_bool(0.5) {
        Action::HOLD
    } else {
        Action::transmit(rng.gen_range(0..state.freqs()))
    }
}

/// Transmit immediately on a uniformly chosen frequency.
pub fn aggressive_policy<R: Rng + ?Sized>(state: &EnvState, rng: &mut R) -> Action {
    if state.queue_length == 0 {
        Action::HOLD
    } else {
        Action::transmit(rng.gen_range(0..state.freqs()))
    }
}

/// Frequency carrying the largest residual, ties broken uniformly.
fn most_protected<R: Rng + ?Sized>(residuals: &[i32], rng: &mut R) -> usize {
    let best = *residuals.iter().max().expect("at least one frequency");
    let mut seen = 0u32;
    let mut pick = 0;
    // reservoir sampling over the maximizers
    for (f, &r) in residuals.iter().enumerate() {
        if r == best {
            seen += 1;
            if rng.gen_range(0..seen) == 0 {
                pick = f;
            }
        }
    }
    pick
}

/// Threshold proportional: transmit immediately on the most protected codeword.
pub fn tp_policy<R: Rng + ?Sized>(state: &EnvState, rng: &mut R) -> Action {
    if state.queue_length == 0 {
        Action::HOLD
    } else {
        Action::transmit(most_protected(&state.residuals, rng))
    }
}

/// TP that defers while the next minislot offers a larger total budget.
/// Transmission is forced once the head packet has no slack left.
pub fn tp_lazy_policy<R: Rng + ?Sized>(state: &EnvState, lookahead: &Lookahead, rng: &mut R) -> Action {
    if state.queue_length == 0 {
        return Action::HOLD;
    }
    let forced = state.head_slack <= 0;
    if forced || lookahead.current_budget_sum >= lookahead.next_budget_sum {
        tp_policy(state, rng)
    } else {
        Action::HOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Random,
    Aggressive,
    Tp,
    TpLazy,
    Ppo,
}

impl PolicyKind {
    pub const HEURISTICS: [PolicyKind; 4] = [
        PolicyKind::Random,
        PolicyKind::Aggressive,
        PolicyKind::Tp,
        PolicyKind::TpLazy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Aggressive => "aggressive",
            PolicyKind::Tp => "tp",
            PolicyKind::TpLazy => "tp-lazy",
            PolicyKind::Ppo => "ppo",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "aggressive" => Ok(PolicyKind::Aggressive),
            "tp" => Ok(PolicyKind::Tp),
            "tp-lazy" | "tp_lazy" => Ok(PolicyKind::TpLazy),
            "ppo" => Ok(PolicyKind::Ppo),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Anything that picks an action for the environment's current state.
pub trait Scheduler {
    fn name(&self) -> String;

    fn select(&mut self, env: &Env, state: &EnvState, rng: &mut ChaCha8Rng) -> Action;
}

/// One of the four rule-based schedulers.
#[derive(Debug, Clone, Copy)]
pub struct Heuristic(PolicyKind);

impl Heuristic {
    pub fn new(kind: PolicyKind) -> Result<Self> {
        if kind == PolicyKind::Ppo {
            return Err(Error::Config("ppo is not a heuristic scheduler".into()));
        }
        Ok(Self(kind))
    }

    pub fn kind(&self) -> PolicyKind {
        self.0
    }
}

impl Scheduler for Heuristic {
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn select(&mut self, env: &Env, state: &EnvState, rng: &mut ChaCha8Rng) -> Action {
        match self.0 {
            PolicyKind::Random => random_policy(state, rng),
            PolicyKind::Aggressive => aggressive_policy(state, rng),
            PolicyKind::Tp => tp_policy(state, rng),
            PolicyKind::TpLazy => tp_lazy_policy(state, &env.lookahead(), rng),
            PolicyKind::Ppo => unreachable!("rejected in Heuristic::new"),
        }
    }
}
