//! `ancient-lab`: command-line runner for the ancient-flow experiments.

mod commands;
mod config;
mod error;
mod record;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CommandRegistry;
use config::{read_config, RunConfig};
use error::CliError;
use record::RunRecord;

#[derive(Parser)]
#[command(name = "ancient-lab", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct GlobalArgs {
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Registered functional: `sphere` or `warped:<arrival>`.
    #[arg(long, global = true)]
    functional: Option<String>,
    /// Grid points on the circle.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(allow_negative_numbers = true, long, global = true)]
    dt: Option<f64>,
    /// Backward horizon for ancient constructions.
    #[arg(allow_negative_numbers = true, long = "t-max", global = true)]
    t_max: Option<f64>,
    /// Command tolerance (Picard, Newton or the command's main check).
    #[arg(allow_negative_numbers = true, long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Eigenvalues and eigenfunctions of the linearization at 0.
    Spectrum,
    /// Builds the ancient solution with unstable data `a`.
    Construct(AncientArgs),
    /// Forward gradient flow from a sine profile, or the parametric latitude flow.
    Evolve(EvolveArgs),
    /// Mode energies and decay rates along a constructed ancient solution.
    Characterize(CharacterizeArgs),
    /// Samples the reduced functional on a box of neutral parameters.
    CriticalManifold(CriticalArgs),
    /// Monte Carlo check of the three-mode ODE trichotomy.
    MzVerify(MzArgs),
    /// Latitude flow on a warped surface and its arrival-time audit.
    SlowExample(SlowArgs),
    /// Runs the acceptance criteria.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct AncientArgs {
    /// Unstable parameter, comma separated.
    #[arg(long)]
    a: Option<String>,
    #[arg(allow_negative_numbers = true, long)]
    delta0: Option<f64>,
    /// Largest admissible |a|.
    #[arg(allow_negative_numbers = true, long)]
    eta: Option<f64>,
    /// Write every k-th time sample.
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(allow_negative_numbers = true, long = "t-end")]
    t_end: Option<f64>,
    #[arg(allow_negative_numbers = true, long)]
    amplitude: Option<f64>,
    /// Frequency of the initial sine.
    #[arg(long)]
    mode: Option<u32>,
    #[arg(allow_negative_numbers = true, long)]
    offset: Option<f64>,
    /// Initial latitude of a parametric circle; switches to the parametric flow.
    #[arg(allow_negative_numbers = true, long)]
    latitude: Option<f64>,
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Args)]
struct CharacterizeArgs {
    #[arg(long)]
    a: Option<String>,
    #[arg(allow_negative_numbers = true, long)]
    delta0: Option<f64>,
    #[arg(allow_negative_numbers = true, long)]
    eta: Option<f64>,
    #[arg(allow_negative_numbers = true, long = "window-start")]
    window_start: Option<f64>,
    #[arg(allow_negative_numbers = true, long = "window-end")]
    window_end: Option<f64>,
}

#[derive(Args)]
struct CriticalArgs {
    #[arg(allow_negative_numbers = true, long = "half-width")]
    half_width: Option<f64>,
    #[arg(long = "per-axis")]
    per_axis: Option<usize>,
}

#[derive(Args)]
struct MzArgs {
    #[arg(allow_negative_numbers = true, long)]
    eps: Option<f64>,
    #[arg(allow_negative_numbers = true, long)]
    horizon: Option<f64>,
    #[arg(allow_negative_numbers = true, long)]
    ds: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Coefficient generator: `uniform` or `extremal`.
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args)]
struct SlowArgs {
    /// Built-in arrival function: `exp`, `poly` or `sublog`.
    #[arg(long)]
    arrival: Option<String>,
    /// Two-column CSV of (s, tau) used instead of a built-in.
    #[arg(long = "tau-file")]
    tau_file: Option<PathBuf>,
    #[arg(allow_negative_numbers = true, long)]
    s0: Option<f64>,
    /// Length of the backward window for the arrival check.
    #[arg(allow_negative_numbers = true, long)]
    window: Option<f64>,
    /// Step for the long backward run feeding the L1 audit.
    #[arg(allow_negative_numbers = true, long = "audit-dt")]
    audit_dt: Option<f64>,
}

#[derive(Args)]
struct AcceptArgs {
    /// Criterion numbers, comma separated.
    #[arg(long)]
    only: Option<String>,
}

type Pairs = Vec<(&'static str, Option<String>)>;

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

impl GlobalArgs {
    fn pairs(&self) -> Pairs {
        vec![
            ("seed", text(&self.seed)),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("functional", self.functional.clone()),
            ("n", text(&self.n)),
            ("dt", text(&self.dt)),
            ("t_max", text(&self.t_max)),
            ("tol", text(&self.tol)),
        ]
    }
}

impl Sub {
    fn name(&self) -> &'static str {
        match self {
            Sub::Spectrum => "spectrum",
            Sub::Construct(_) => "construct",
            Sub::Evolve(_) => "evolve",
            Sub::Characterize(_) => "characterize",
            Sub::CriticalManifold(_) => "critical-manifold",
            Sub::MzVerify(_) => "mz-verify",
            Sub::SlowExample(_) => "slow-example",
            Sub::Accept(_) => "accept",
        }
    }

    fn pairs(&self) -> Pairs {
        match self {
            Sub::Spectrum => vec![],
            Sub::Construct(a) => vec![
                ("a", a.a.clone()),
                ("delta0", text(&a.delta0)),
                ("eta", text(&a.eta)),
                ("every", text(&a.every)),
            ],
            Sub::Evolve(e) => vec![
                ("t_end", text(&e.t_end)),
                ("amplitude", text(&e.amplitude)),
                ("mode", text(&e.mode)),
                ("offset", text(&e.offset)),
                ("latitude", text(&e.latitude)),
                ("every", text(&e.every)),
            ],
            Sub::Characterize(c) => vec![
                ("a", c.a.clone()),
                ("delta0", text(&c.delta0)),
                ("eta", text(&c.eta)),
                ("window_start", text(&c.window_start)),
                ("window_end", text(&c.window_end)),
            ],
            Sub::CriticalManifold(c) => vec![
                ("half_width", text(&c.half_width)),
                ("per_axis", text(&c.per_axis)),
            ],
            Sub::MzVerify(m) => vec![
                ("eps", text(&m.eps)),
                ("horizon", text(&m.horizon)),
                ("ds", text(&m.ds)),
                ("trials", text(&m.trials)),
                ("generator", m.generator.clone()),
            ],
            Sub::SlowExample(s) => vec![
                ("arrival", s.arrival.clone()),
                ("tau_file", s.tau_file.as_ref().map(|p| p.display().to_string())),
                ("s0", text(&s.s0)),
                ("window", text(&s.window)),
                ("audit_dt", text(&s.audit_dt)),
            ],
            Sub::Accept(a) => vec![("only", a.only.clone())],
        }
    }
}

fn run(cli: Cli) -> Result<RunRecord, CliError> {
    let registry = CommandRegistry::with_builtins();
    let name = cli.command.name();
    let command = registry
        .get(name)
        .unwrap_or_else(|| panic!("`{name}` missing from {:?}", registry.names()));
    let file = match &cli.global.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let flags: BTreeMap<String, String> = cli
        .global
        .pairs()
        .into_iter()
        .chain(cli.command.pairs())
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    let cfg = RunConfig::resolve(name, command.keys(), file, flags)?;
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Output {
        path: cfg.out.clone(),
        source,
    })?;
    let mut record = RunRecord::new(cfg.clone());
    command.run(&cfg, &mut record)?;
    record.finish();
    record.write(&cfg.out).map_err(|source| CliError::Output {
        path: cfg.out.join("run.json"),
        source,
    })?;
    Ok(record)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(record) => {
            for (key, check) in &record.checks {
                println!("{} {key} = {:.6e}", if check.passed { "ok  " } else { "FAIL" }, check.value);
            }
            if record.passed {
                ExitCode::SUCCESS
            } else {
                for key in record.failing() {
                    eprintln!("check failed: {key}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
