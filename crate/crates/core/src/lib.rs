//! Joint eMBB/URLLC slicing by puncturing.
//!
//! The crate models a time/frequency resource grid fully occupied by eMBB
//! codewords, a Bernoulli URLLC queue with a hard per-packet latency budget,
//! and the scheduling decision of which (if any) frequency to puncture in
//! every minislot. On top of the environment it provides four heuristic
//! schedulers, a from-scratch actor-critic PPO trainer, and an exact
//! backward-induction solver for tiny instances.

pub mod env;
pub mod error;
pub mod grid;
pub mod harness;
pub mod mlp;
pub mod oracle;
pub mod policies;
pub mod ppo;
pub mod urllc;

pub use env::{Action, Env, EnvConfig, EnvState, StepInfo, StepResult};
pub use error::{Error, Result};
pub use grid::{ClassDistribution, Codeword, PunctureOutcome, ResourceGrid};
pub use policies::{PolicyKind, Scheduler};
pub use urllc::{UrllcPacket, UrllcQueue};
