use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use colearn::ctmc::SimMode;
use colearn::harness::{self, ExperimentConfig, ExperimentKind, ExperimentOutput, OutputFormat};
use colearn::model::RawParams;
use colearn::{Error, Result};

#[derive(Parser)]
#[command(name = "colearn", version, about = "Simulate and verify social bandit learning dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trace from the all-NULL start.
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Ctmc)]
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the mean-field ODE.
    Ode(Common),
    /// Simulated paths next to the ODE solution and the bound curve.
    Trajectory(Common),
    /// Probability of consensus on the best arm.
    Learnability(Common),
    /// Sup-norm distance between simulated paths and the ODE.
    Deviation(Common),
    /// Up-move frequency of the best-arm walk.
    WalkVerify(Common),
    /// Coupling of the best-arm walk with a standard biased walk.
    CoupleVerify(Common),
    /// Closed-form bounds.
    Bounds(Common),
    /// Success probability and rates across exploration probabilities.
    MuSweep {
        /// Comma-separated exploration probabilities.
        #[arg(long, value_delimiter = ',')]
        mu_values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Agents,
    Ctmc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Default)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of agents.
    #[arg(long)]
    n: Option<u32>,
    /// Number of arms; inferred from --p when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Clock rate of each agent.
    #[arg(long)]
    lambda: Option<f64>,
    /// Exploration probability.
    #[arg(long)]
    mu: Option<f64>,
    /// Comma-separated arm means.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// ODE step (also the sampling grid of simulated paths).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    event_cap: Option<u64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps_prime: Option<f64>,
    #[arg(long)]
    coupling_start: Option<f64>,
    /// Warm-up constant in (0, 1).
    #[arg(long)]
    c: Option<f64>,
    /// Worker threads (does not change results).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileParams {
    n: Option<u32>,
    k: Option<usize>,
    lambda: Option<f64>,
    mu: Option<f64>,
    p: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    params: FileParams,
    experiment: Option<ExperimentKind>,
    trials: Option<u64>,
    master_seed: Option<u64>,
    horizon: Option<f64>,
    ode_step: Option<f64>,
    event_cap: Option<u64>,
    delta: Option<f64>,
    eps_prime: Option<f64>,
    coupling_start: Option<f64>,
    c: Option<f64>,
    sim_mode: Option<SimMode>,
    #[serde(default)]
    mu_values: Vec<f64>,
    workers: Option<usize>,
    output_path: Option<PathBuf>,
    format: Option<OutputFormat>,
}

fn build_config(kind: ExperimentKind, common: Common, mode: Option<Mode>, mu_values: Vec<f64>) -> Result<ExperimentConfig> {
    let file: FileConfig = match &common.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    if file.experiment.is_some_and(|e| e != kind) {
        return Err(Error::Config(format!(
            "config file is for {}, not {}",
            file.experiment.map_or("", |e| e.name()),
            kind.name()
        )));
    }
    let p = common.p.or(file.params.p).unwrap_or_else(|| vec![0.8, 0.4]);
    let raw = RawParams {
        n: common.n.or(file.params.n).unwrap_or(200),
        k: common.k.or(file.params.k),
        lambda: common.lambda.or(file.params.lambda).unwrap_or(1.0),
        mu: common.mu.or(file.params.mu).unwrap_or(0.2),
        p,
    };
    let mut cfg = ExperimentConfig::new(raw.validate()?, kind);
    cfg.trials = common.trials.or(file.trials);
    cfg.master_seed = common.seed.or(file.master_seed).unwrap_or(0);
    cfg.horizon = common.horizon.or(file.horizon);
    cfg.ode_step = common.step.or(file.ode_step);
    cfg.event_cap = common.event_cap.or(file.event_cap);
    cfg.delta = common.delta.or(file.delta).unwrap_or(cfg.delta);
    cfg.eps_prime = common.eps_prime.or(file.eps_prime).unwrap_or(cfg.eps_prime);
    cfg.coupling_start = common.coupling_start.or(file.coupling_start);
    cfg.c = common.c.or(file.c).unwrap_or(cfg.c);
    cfg.sim_mode = mode
        .map(|m| match m {
            Mode::Agents => SimMode::Agents,
            Mode::Ctmc => SimMode::Ctmc,
        })
        .or(file.sim_mode);
    cfg.mu_values = if mu_values.is_empty() { file.mu_values } else { mu_values };
    cfg.workers = common.workers.or(file.workers);
    cfg.output_path = common.out.or(file.output_path);
    cfg.format = common
        .format
        .map(|f| match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        })
        .or(file.format)
        .unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    match &cfg.output_path {
        Some(dir) => {
            for path in out.write_to(dir, cfg.format)? {
                println!("wrote {}", path.display());
            }
            for e in &out.estimates {
                println!(
                    "{}: {} [{}, {}] n={}{}",
                    e.label,
                    e.point,
                    e.ci[0],
                    e.ci[1],
                    e.n,
                    e.bound.map(|b| format!(" bound={b}")).unwrap_or_default()
                );
            }
        }
        None => {
            for (name, bytes) in out.render(OutputFormat::Json)? {
                if name.ends_with(".json") {
                    print!("{}", String::from_utf8_lossy(&bytes));
                }
            }
            if !out.tables.is_empty() {
                eprintln!("pass --out to write {} CSV table(s)", out.tables.len());
            }
        }
    }
    Ok(())
}

fn execute(command: Command) -> Result<Vec<String>> {
    let (kind, common, mode, mu_values) = match command {
        Command::Simulate { mode, common } => (ExperimentKind::Simulate, common, Some(mode), Vec::new()),
        Command::Ode(c) => (ExperimentKind::Ode, c, None, Vec::new()),
        Command::Trajectory(c) => (ExperimentKind::Trajectory, c, None, Vec::new()),
        Command::Learnability(c) => (ExperimentKind::Learnability, c, None, Vec::new()),
        Command::Deviation(c) => (ExperimentKind::Deviation, c, None, Vec::new()),
        Command::WalkVerify(c) => (ExperimentKind::WalkVerify, c, None, Vec::new()),
        Command::CoupleVerify(c) => (ExperimentKind::CoupleVerify, c, None, Vec::new()),
        Command::Bounds(c) => (ExperimentKind::Bounds, c, None, Vec::new()),
        Command::MuSweep { mu_values, common } => (ExperimentKind::MuSweep, common, None, mu_values),
    };
    let cfg = build_config(kind, common, mode, mu_values)?;
    let out = harness::run(&cfg)?;
    emit(&cfg, &out)?;
    Ok(out.failures)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("invariant failed: {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant_violation() { 2 } else { 1 })
        }
    }
}
