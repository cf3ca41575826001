use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use urllc_slicing::error::{Error, Result};
use urllc_slicing::grid::ClassDistribution;
use urllc_slicing::harness::{self, Format, Mode, RunConfig};
use urllc_slicing::PolicyKind;

/// eMBB/URLLC puncturing simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// train | eval | sweep | oracle-check
    #[arg(long)]
    mode: Option<String>,
    /// random | aggressive | tp | tp-lazy | ppo
    #[arg(long)]
    policy: Option<String>,
    /// Evaluate a single URLLC arrival probability.
    #[arg(long)]
    pu: Option<f64>,
    /// Fix the codeword class distribution, e.g. "[0.5,0.5]".
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Episode length T in minislots (a multiple of 14).
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output file (eval, sweep) or directory (train, oracle-check).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(p) = &cli.policy {
        cfg.policy = p.parse::<PolicyKind>()?;
    }
    if let Some(f) = &cli.format {
        cfg.format = f.parse::<Format>()?;
    }
    if let Some(d) = &cli.dist {
        cfg.dist = Some(ClassDistribution::parse(d)?);
    }
    cfg.pu = cli.pu.or(cfg.pu);
    cfg.episodes = cli.episodes.unwrap_or(cfg.episodes);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.horizon = cli.horizon.or(cfg.horizon);
    cfg.checkpoint = cli.checkpoint.clone().or(cfg.checkpoint);
    cfg.out = cli.out.clone().or(cfg.out);
    Ok(cfg)
}

fn summary_path(cfg: &RunConfig, stem: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        let ext = match cfg.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        harness::default_output_dir().join(format!("{stem}_{}.{ext}", cfg.policy))
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    cfg.validate()?;
    match cfg.mode {
        Mode::Train => {
            let (ckpt, log) = harness::run_train(&cfg)?;
            println!("checkpoint: {}", ckpt.display());
            println!("training log: {}", log.display());
        }
        Mode::Eval | Mode::Sweep => {
            let summary = if cfg.mode == Mode::Eval {
                harness::run_eval(&cfg)?
            } else {
                harness::run_sweep_d(&cfg)?
            };
            let stem = if cfg.mode == Mode::Eval { "eval" } else { "sweep" };
            let path = summary_path(&cfg, stem);
            harness::export(&summary, &path, cfg.format)?;
            print!("{}", harness::to_csv(&summary)?);
            eprintln!("wrote {}", path.display());
        }
        Mode::OracleCheck => {
            let report = harness::run_oracle_check(&cfg)?;
            println!("states: {}", report.state_count);
            println!("optimal value: {:.6}", report.optimal_value);
            for (name, v) in &report.policy_values {
                println!("{name:>10}: {v:.6}");
            }
            let dominated = report.policy_values.iter().all(|(_, v)| *v <= report.optimal_value + 1e-9);
            if !dominated {
                return Err(Error::Training("a policy exceeded the oracle value".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
