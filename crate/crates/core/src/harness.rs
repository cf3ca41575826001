//! Experiment orchestration: seeded streams, run configuration, episode
//! rollouts, metric aggregation and CSV/JSON export.
//!
//! Evaluation is single-threaded, so `(seed, config)` fully determines every
//! exported number.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, EnvStreams, TraceRecord};
use crate::error::{Error, Result};
use crate::grid::ClassDistribution;
use crate::oracle::{self, TinyInstance};
use crate::policies::{Heuristic, PolicyKind, Scheduler};
use crate::ppo::{self, PolicyParams, PpoAgent, PpoConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_VAR: &str = "URLLC_SLICING_OUT";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_VAR).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

/// Independent named random streams derived from one master seed.
#[derive(Debug, Clone)]
pub struct Streams {
    pub placement: ChaCha8Rng,
    pub arrivals: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub init: ChaCha8Rng,
    pub training: ChaCha8Rng,
}

impl Streams {
    pub fn seed_everything(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    /// Streams for sub-experiment `cell` (e.g. one evaluation cell).
    pub fn derive(seed: u64, cell: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(cell * 8 + k);
            rng
        };
        Self {
            placement: stream(0),
            arrivals: stream(1),
            policy: stream(2),
            init: stream(3),
            training: stream(4),
        }
    }

    pub fn env_streams(&self) -> EnvStreams {
        EnvStreams {
            placement: self.placement.clone(),
            arrivals: self.arrivals.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    #[default]
    Eval,
    Sweep,
    OracleCheck,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "eval" => Ok(Mode::Eval),
            "sweep" => Ok(Mode::Sweep),
            "oracle-check" => Ok(Mode::OracleCheck),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub policy: PolicyKind,
    pub episodes: usize,
    pub seed: u64,
    /// Overrides the episode length of `env`.
    pub horizon: Option<usize>,
    /// Evaluate a single load instead of every `env.pu_choices` entry.
    pub pu: Option<f64>,
    /// Fix the class distribution instead of randomizing it per episode.
    pub dist: Option<ClassDistribution>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// PPO evaluation picks the most probable action instead of sampling.
    pub greedy: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Eval,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            policy: PolicyKind::TpLazy,
            episodes: 1000,
            seed: 0,
            horizon: None,
            pu: None,
            dist: None,
            checkpoint: None,
            out: None,
            format: Format::Csv,
            greedy: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Environment configuration after the horizon override.
    pub fn env_config(&self) -> Result<EnvConfig> {
        let env = match self.horizon {
            Some(h) => self.env.with_horizon(h)?,
            None => self.env.clone(),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config()?;
        self.ppo.validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if let Some(p) = self.pu {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("arrival probability {p} outside [0,1]")));
            }
        }
        let evaluates_ppo = matches!(self.mode, Mode::Eval | Mode::Sweep) && self.policy == PolicyKind::Ppo;
        if evaluates_ppo {
            match &self.checkpoint {
                None => return Err(Error::Config("evaluating ppo needs --checkpoint".into())),
                Some(p) if !p.exists() => {
                    return Err(Error::Config(format!("checkpoint {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_output_dir)
    }
}

/// Builds the scheduler a run asks for.
pub fn make_scheduler(cfg: &RunConfig, kind: PolicyKind) -> Result<Box<dyn Scheduler>> {
    if kind != PolicyKind::Ppo {
        return Ok(Box::new(Heuristic::new(kind)?));
    }
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("evaluating ppo needs --checkpoint".into()))?;
    let env = cfg.env_config()?;
    let params = PolicyParams::load(path, &env, &cfg.ppo.hidden_sizes)?;
    Ok(Box::new(PpoAgent::new(params, cfg.greedy)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub total_reward: f64,
    pub discounted_return: f64,
    pub length: usize,
    /// URLLC packets still queued when the episode ended.
    pub residual_queue: usize,
    pub outage_fraction: f64,
    pub violated: bool,
}

/// Plays one episode; `gamma` only affects `discounted_return`.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Scheduler,
    rng: &mut ChaCha8Rng,
    gamma: f64,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<EpisodeOutcome> {
    let mut state = env.reset()?;
    let mut out = EpisodeOutcome {
        total_reward: 0.0,
        discounted_return: 0.0,
        length: 0,
        residual_queue: 0,
        outage_fraction: 0.0,
        violated: false,
    };
    let mut discount = 1.0;
    loop {
        let action = policy.select(env, &state, rng);
        let step = env.step(action)?;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TraceRecord {
                t: state.minislot,
                action: action.0,
                reward: step.reward,
                queue_length: step.next_state.queue_length,
                head_slack: step.next_state.head_slack,
                outage_count: env.grid().outage_count(),
            });
        }
        out.total_reward += step.reward;
        out.discounted_return += discount * step.reward;
        discount *= gamma;
        out.length += 1;
        if step.done {
            out.violated = step.info.latency_violated;
            out.residual_queue = step.next_state.queue_length;
            out.outage_fraction = env.grid().outage_fraction();
            return Ok(out);
        }
        state = step.next_state;
    }
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub policy: String,
    pub p_u: f64,
    #[serde(rename = "distLabel")]
    pub dist_label: String,
    #[serde(rename = "meanTotalReward")]
    pub mean_total_reward: f64,
    #[serde(rename = "meanResidualQueue")]
    pub mean_residual_queue: f64,
    #[serde(rename = "outageFraction")]
    pub outage_fraction: f64,
    #[serde(rename = "violationProb")]
    pub violation_prob: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl EvalCell {
    pub fn from_outcomes(policy: &str, p_u: f64, dist_label: &str, seed: u64, outcomes: &[EpisodeOutcome]) -> Self {
        let n = outcomes.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
        Self {
            policy: policy.to_string(),
            p_u,
            dist_label: dist_label.to_string(),
            mean_total_reward: mean(&|o| o.total_reward),
            mean_residual_queue: mean(&|o| o.residual_queue as f64),
            outage_fraction: mean(&|o| o.outage_fraction),
            violation_prob: mean(&|o| f64::from(u8::from(o.violated))),
            episodes: outcomes.len(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cells: Vec<EvalCell>,
}

/// Label used when D is drawn per episode.
pub const RANDOM_DIST_LABEL: &str = "random";

/// Outcomes of `episodes` episodes of one policy under one environment.
pub fn run_cell(
    env_cfg: &EnvConfig,
    policy: &mut dyn Scheduler,
    episodes: usize,
    streams: &Streams,
) -> Result<Vec<EpisodeOutcome>> {
    let mut env = Env::new(env_cfg.clone(), streams.env_streams())?;
    let mut rng = streams.policy.clone();
    (0..episodes)
        .map(|_| run_episode(&mut env, policy, &mut rng, 1.0, None))
        .collect()
}

/// Every load in `pu_choices` (or just `cfg.pu`), D randomized unless fixed.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    let env = cfg.env_config()?;
    let loads = cfg.pu.map_or_else(|| env.pu_choices.clone(), |p| vec![p]);
    let mut policy = make_scheduler(cfg, cfg.policy)?;
    let label = cfg.dist.map_or_else(|| RANDOM_DIST_LABEL.to_string(), |d| d.label());
    let mut summary = EvalSummary::default();
    for (i, &p) in loads.iter().enumerate() {
        let cell_env = EnvConfig {
            fixed_pu: Some(p),
            fixed_dist: cfg.dist,
            ..env.clone()
        };
        let streams = Streams::derive(cfg.seed, i as u64 + 1);
        let outcomes = run_cell(&cell_env, policy.as_mut(), cfg.episodes, &streams)?;
        log::info!("{} p_u={p}: done", policy.name());
        summary
            .cells
            .push(EvalCell::from_outcomes(&policy.name(), p, &label, cfg.seed, &outcomes));
    }
    Ok(summary)
}

/// Load `p_u = 0.5` (or `cfg.pu`) across every class distribution.
pub fn run_sweep_d(cfg: &RunConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    let env = cfg.env_config()?;
    let p = cfg.pu.unwrap_or(0.5);
    let mut policy = make_scheduler(cfg, cfg.policy)?;
    let mut summary = EvalSummary::default();
    for (i, d) in ClassDistribution::standard_set().into_iter().enumerate() {
        let cell_env = EnvConfig {
            fixed_pu: Some(p),
            fixed_dist: Some(d),
            ..env.clone()
        };
        let streams = Streams::derive(cfg.seed, 100 + i as u64);
        let outcomes = run_cell(&cell_env, policy.as_mut(), cfg.episodes, &streams)?;
        summary
            .cells
            .push(EvalCell::from_outcomes(&policy.name(), p, &d.label(), cfg.seed, &outcomes));
    }
    Ok(summary)
}

/// At least six significant digits, and always the exact value.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0.00000".to_string() } else { x.to_string() };
    }
    let exponent = x.abs().log10().floor() as i32;
    let precision = (5 - exponent).max(0) as usize;
    let padded = format!("{x:.precision$}");
    if padded.parse::<f64>().ok() == Some(x) {
        padded
    } else {
        x.to_string()
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "policy",
    "p_u",
    "distLabel",
    "meanTotalReward",
    "meanResidualQueue",
    "outageFraction",
    "violationProb",
    "episodes",
    "seed",
];

fn cell_fields(c: &EvalCell) -> [String; 9] {
    [
        c.policy.clone(),
        format_number(c.p_u),
        c.dist_label.clone(),
        format_number(c.mean_total_reward),
        format_number(c.mean_residual_queue),
        format_number(c.outage_fraction),
        format_number(c.violation_prob),
        c.episodes.to_string(),
        c.seed.to_string(),
    ]
}

pub fn to_csv(summary: &EvalSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for cell in &summary.cells {
        w.write_record(cell_fields(cell))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json(summary: &EvalSummary) -> Result<String> {
    let mut out = String::from("[");
    for (i, cell) in summary.cells.iter().enumerate() {
        out.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
        let fields = cell_fields(cell);
        for (j, (name, value)) in CSV_COLUMNS.iter().zip(&fields).enumerate() {
            let quoted = matches!(*name, "policy" | "distLabel");
            let rendered = if quoted { serde_json::to_string(value)? } else { value.clone() };
            let sep = if j == 0 { "" } else { ", " };
            write!(out, "{sep}\"{name}\": {rendered}").expect("writing to a string");
        }
        out.push('}');
    }
    out.push_str(if summary.cells.is_empty() { "]\n" } else { "\n]\n" });
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<EvalSummary> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cells = r.deserialize().collect::<std::result::Result<Vec<EvalCell>, _>>()?;
    Ok(EvalSummary { cells })
}

pub fn parse_json(text: &str) -> Result<EvalSummary> {
    Ok(EvalSummary {
        cells: serde_json::from_str(text)?,
    })
}

pub fn export(summary: &EvalSummary, path: &Path, format: Format) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let text = match format {
        Format::Csv => to_csv(summary)?,
        Format::Json => to_json(summary)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Trains, then writes the checkpoint and the training log.
pub fn run_train(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let env = cfg.env_config()?;
    let (params, log) = ppo::train(&env, &cfg.ppo, cfg.seed)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let ckpt = cfg.checkpoint.clone().unwrap_or_else(|| dir.join("ppo_checkpoint.json"));
    params.save(&ckpt)?;
    let log_path = dir.join("training_log.csv");
    log.write_csv(&log_path)?;
    Ok((ckpt, log_path))
}

/// Solves the built-in tiny instance and compares every heuristic against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub optimal_value: f64,
    pub state_count: usize,
    pub policy_values: Vec<(String, f64)>,
}

pub fn run_oracle_check(cfg: &RunConfig) -> Result<OracleReport> {
    let inst = TinyInstance::two_by_eight();
    let solution = oracle::optimal_value(&inst)?;
    let mut policy_values = Vec::new();
    for kind in PolicyKind::HEURISTICS {
        let v = oracle::evaluate_policy(&inst, |s, l| {
            oracle::heuristic_distribution(kind, s, l).expect("heuristic")
        })?;
        policy_values.push((kind.name().to_string(), v));
    }
    if let Some(path) = &cfg.checkpoint {
        let params = PolicyParams::load(path, &inst.env_config(), &cfg.ppo.hidden_sizes)?;
        let v = oracle::evaluate_policy(&inst, |s, _| {
            oracle::ppo_greedy_distribution(&params, &inst, s).expect("actor matches instance")
        })?;
        policy_values.push(("ppo".to_string(), v));
    }
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    solution.fixture(&inst).save(&dir.join("oracle_fixture.json"))?;
    Ok(OracleReport {
        optimal_value: solution.value,
        state_count: solution.space.len(),
        policy_values,
    })
}
