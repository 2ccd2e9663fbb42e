//! Subcommands, looked up by name in a [`CommandRegistry`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ancient_flows::acceptance::{constant_mode_solution, run_selected};
use ancient_flows::ancient::{construct_ancient, distance_to_linear, flow_residual, AncientOptions, AncientSolution};
use ancient_flows::arrival::{build_warping, ArrivalFunction, ArrivalRegistry, TabulatedArrival};
use ancient_flows::critical::{sample_critical_set, ReducedFunctional, NEWTON_TOL};
use ancient_flows::diagnostics::{
    check_caccioppoli, fit_decay_rate, mode_energies, verify_mode_inequalities, DEFAULT_NOISE_FLOOR,
};
use ancient_flows::flow::{energy_report, evolve_parametric_latitude, evolve_with, EvolveOptions};
use ancient_flows::mz::{monte_carlo, GeneratorRegistry, MonteCarloConfig, TrichotomyCase};
use ancient_flows::slow::{arrival_time_check, l1_hypothesis_audit, latitude_flow, L1Class, DEFAULT_HORIZONS};
use ancient_flows::trajectory::{FlowStatus, FlowTrajectory};
use ancient_flows::{
    eigendecompose, evaluate, gradient_split, EigenSystem, Field, FunctionalRegistry, GradientSplit, PeriodicGrid,
};

use crate::config::{ConfigError, RunConfig};
use crate::error::CliError;
use crate::record::RunRecord;

pub trait Command: Send + Sync {
    fn name(&self) -> &'static str;
    /// Settings read by this command on top of the global ones.
    fn keys(&self) -> &'static [&'static str];
    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError>;
}

pub struct CommandRegistry {
    commands: BTreeMap<&'static str, Box<dyn Command>>,
}

impl CommandRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = Self {
            commands: BTreeMap::new(),
        };
        reg.register(Box::new(Spectrum));
        reg.register(Box::new(Construct));
        reg.register(Box::new(Evolve));
        reg.register(Box::new(Characterize));
        reg.register(Box::new(CriticalManifold));
        reg.register(Box::new(MzVerify));
        reg.register(Box::new(SlowExample));
        reg.register(Box::new(Accept));
        reg
    }

    pub fn register(&mut self, command: Box<dyn Command>) {
        self.commands.insert(command.name(), command);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Command> {
        self.commands.get(name).map(|c| c.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.commands.keys().copied().collect()
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(dir: &Path, file: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(file);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output { path, source })
}

fn io(dir: &Path, file: &str) -> impl Fn(std::io::Error) -> CliError {
    let path = dir.join(file);
    move |source| CliError::Output {
        path: path.clone(),
        source,
    }
}

fn write_table(cfg: &RunConfig, file: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = create(&cfg.out, file)?;
    let err = io(&cfg.out, file);
    writeln!(w, "{header}").map_err(&err)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Every `every`-th sample plus the last one.
fn write_trajectory(cfg: &RunConfig, file: &str, traj: &FlowTrajectory, every: usize) -> Result<(), CliError> {
    let header = std::iter::once("t".to_string())
        .chain((0..traj.grid().n()).map(|i| format!("theta_{i}")))
        .collect::<Vec<_>>()
        .join(",");
    let last = traj.len() - 1;
    let rows = (0..traj.len()).filter(|k| k % every == 0 || *k == last).map(|k| {
        std::iter::once(traj.times()[k])
            .chain(traj.column(k).iter().copied())
            .map(sci)
            .collect()
    });
    write_table(cfg, file, &header, rows)
}

fn setup(cfg: &RunConfig) -> Result<(GradientSplit, EigenSystem), CliError> {
    let functional = FunctionalRegistry::with_builtins().get(&cfg.functional)?;
    let split = gradient_split(&functional, PeriodicGrid::circle(cfg.n)?)?;
    let es = eigendecompose(split.linear(), None)?;
    Ok((split, es))
}

fn every(cfg: &RunConfig) -> Result<usize, CliError> {
    let every: usize = cfg.get("every", 10)?;
    if every == 0 {
        return Err(ConfigError::Invalid {
            key: "every".into(),
            value: "0".into(),
            reason: "must be positive".into(),
        }
        .into());
    }
    Ok(every)
}

fn ancient_options(cfg: &RunConfig) -> Result<AncientOptions, CliError> {
    Ok(AncientOptions {
        delta0: cfg.get_positive("delta0", 0.5)?,
        eta: cfg.get_positive("eta", 0.3)?,
        tol: cfg.tol_or(1e-11),
        t_max: cfg.t_max,
        dt: cfg.dt,
        ..AncientOptions::default()
    })
}

/// Reads the unstable parameter `a`, one component per unstable mode.
fn build_ancient(cfg: &RunConfig, split: &GradientSplit, es: &EigenSystem) -> Result<AncientSolution, CliError> {
    let a = cfg.get_list("a", &vec![0.1; es.index()])?;
    if a.len() != es.index() {
        return Err(ConfigError::Invalid {
            key: "a".into(),
            value: format!("{a:?}"),
            reason: format!("expected {} components, one per unstable mode", es.index()),
        }
        .into());
    }
    Ok(construct_ancient(split, es, &a, &ancient_options(cfg)?)?)
}

const ANCIENT_KEYS: [&str; 4] = ["a", "delta0", "eta", "every"];

pub struct Spectrum;

impl Command for Spectrum {
    fn name(&self) -> &'static str {
        "spectrum"
    }

    fn keys(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let (_, es) = setup(cfg)?;
        let mut w = create(&cfg.out, "eigenvalues.csv")?;
        es.write_eigenvalues_csv(&mut w)?;
        w.flush().map_err(io(&cfg.out, "eigenvalues.csv"))?;
        let mut w = create(&cfg.out, "eigenfunctions.csv")?;
        es.write_eigenfunctions_csv(&mut w)?;
        w.flush().map_err(io(&cfg.out, "eigenfunctions.csv"))?;

        record.meta("index", es.index());
        record.meta("nullity", es.nullity());
        let phi = es.phi_matrix();
        let mut gram = phi.transpose() * phi * es.grid().spacing();
        for j in 0..es.len() {
            gram[(j, j)] -= 1.0;
        }
        let defect = gram.amax();
        record.at_most("eigenbasis_orthonormality", defect, 1e-10);
        if cfg.functional == "sphere" {
            let expected = [-1.0, 0.0, 0.0, 3.0, 3.0, 8.0, 8.0, 15.0, 15.0];
            let err = expected
                .iter()
                .zip(es.lambdas())
                .map(|(e, l)| (e - l).abs())
                .fold(0.0, f64::max);
            record.at_most("max_eigenvalue_error", err, 1e-3);
            record.flag("unstable_index", es.index() == 1, format!("index {}", es.index()));
            record.flag("neutral_nullity", es.nullity() == 2, format!("nullity {}", es.nullity()));
        }
        Ok(())
    }
}

pub struct Construct;

impl Command for Construct {
    fn name(&self) -> &'static str {
        "construct"
    }

    fn keys(&self) -> &'static [&'static str] {
        &ANCIENT_KEYS
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let (split, es) = setup(cfg)?;
        let sol = build_ancient(cfg, &split, &es)?;
        let traj = sol.trajectory();
        write_trajectory(cfg, "trajectory.csv", traj, every(cfg)?)?;
        write_table(
            cfg,
            "history.csv",
            "iteration,distance",
            sol.history().iter().enumerate().map(|(k, d)| vec![(k + 1).to_string(), sci(*d)]),
        )?;

        let a = sol.parameter().to_vec();
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        let distance = distance_to_linear(&es, &sol)?;
        record.meta("parameter", &a);
        record.meta("iterations", sol.iterations());
        record.meta("history", sol.history());
        record.meta("weighted_distance_to_linear", distance);
        if norm_sq > 0.0 {
            record.meta("distance_over_a_squared", distance / norm_sq);
        }
        let ratio = sol.contraction_ratios().into_iter().fold(0.0, f64::max);
        record.at_most("picard_contraction_ratio", ratio, 0.5);
        record.at_most("flow_residual", flow_residual(&split, traj), 1e-5);
        if cfg.functional == "sphere" {
            let mut err = 0.0f64;
            for k in 0..traj.len() {
                let exact = constant_mode_solution(a[0], traj.times()[k]);
                err = traj.column(k).iter().fold(err, |m, v| m.max((v - exact).abs()));
            }
            record.at_most("closed_form_error", err, 1e-4);
        }
        Ok(())
    }
}

pub struct Evolve;

impl Command for Evolve {
    fn name(&self) -> &'static str {
        "evolve"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["t_end", "amplitude", "mode", "offset", "latitude", "every"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let t_end = cfg.get_positive("t_end", 1.0)?;
        if cfg.get_string("latitude").is_some() {
            return parametric(cfg, record, cfg.get("latitude", 0.0)?, t_end);
        }
        let (amplitude, offset): (f64, f64) = (cfg.get("amplitude", 0.1)?, cfg.get("offset", 0.0)?);
        let mode: u32 = cfg.get("mode", 2)?;
        let (split, _) = setup(cfg)?;
        let u0 = Field::from_fn(*split.grid(), |x| offset + amplitude * (f64::from(mode) * x).sin());
        let traj = evolve_with(&split, &u0, 0.0, t_end, cfg.dt, &EvolveOptions::default())?;
        write_trajectory(cfg, "trajectory.csv", &traj, every(cfg)?)?;
        let functional = split.functional();
        let energies = (0..traj.len())
            .map(|k| evaluate(functional, &traj.field(k)).map(|e| vec![sci(traj.times()[k]), sci(e)]))
            .collect::<Result<Vec<_>, _>>()?;
        write_table(cfg, "energy.csv", "t,energy", energies)?;

        let rep = energy_report(functional, &traj);
        record.meta("energy", rep);
        record.meta("status", traj.status());
        record.flag(
            "graphicality_preserved",
            traj.status() == FlowStatus::Ok,
            format!("{:?}", traj.status()),
        );
        record.at_most("energy_identity_gap", rep.relative_gap, cfg.tol_or(1e-4));
        record.at_most("energy_max_increase", rep.max_increase, 1e-12);
        let cacc = check_caccioppoli(&traj);
        record.meta("caccioppoli", cacc);
        Ok(())
    }
}

fn parametric(cfg: &RunConfig, record: &mut RunRecord, phi0: f64, t_end: f64) -> Result<(), CliError> {
    let lat = evolve_parametric_latitude(phi0, 0.0, t_end, cfg.dt)?;
    write_table(
        cfg,
        "latitude.csv",
        "t,phi",
        lat.times.iter().zip(&lat.latitudes).map(|(t, p)| vec![sci(*t), sci(*p)]),
    )?;
    let drift = lat
        .times
        .iter()
        .zip(&lat.latitudes)
        .map(|(t, p)| (p.sin() * (-t).exp() - phi0.sin()).abs())
        .fold(0.0, f64::max);
    record.at_most("latitude_invariant_drift", drift, cfg.tol_or(1e-8));
    record.meta("extinction_time", lat.extinction_time);
    if let Some(e) = lat.extinction_time {
        record.at_most("extinction_time_error", (e + phi0.abs().sin().ln()).abs(), 1e-6);
    }
    Ok(())
}

pub struct Characterize;

impl Command for Characterize {
    fn name(&self) -> &'static str {
        "characterize"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["a", "delta0", "eta", "window_start", "window_end"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let (split, es) = setup(cfg)?;
        let sol = build_ancient(cfg, &split, &es)?;
        let series = mode_energies(&es, sol.trajectory())?;
        write_table(
            cfg,
            "modes.csv",
            "t,u_minus,u_zero,u_plus,l2,sigma",
            (0..series.len()).map(|k| {
                [series.times[k], series.u_minus[k], series.u_zero[k], series.u_plus[k], series.l2[k], series.sigma[k]]
                    .into_iter()
                    .map(sci)
                    .collect()
            }),
        )?;
        let (t_a, t_b): (f64, f64) = (cfg.get("window_start", -8.0)?, cfg.get("window_end", -2.0)?);
        let fit = fit_decay_rate(&series, t_a, t_b)?;
        record.meta("decay_fit", fit);
        if let Some(lambda) = series.lambda_last_unstable {
            let expected = -lambda;
            record.push(
                "dominant_mode_decay_rate",
                (fit.sigma.slope - expected).abs() <= 0.02 * expected,
                fit.sigma.slope,
                Some(expected),
                "within 2% of the weakest unstable rate".into(),
            );
        }
        record.at_most("parseval_defect", series.parseval_defect(), 1e-8);
        let modes = verify_mode_inequalities(&series, DEFAULT_NOISE_FLOOR)?;
        record.meta("mode_inequalities", modes);
        record.flag(
            "mode_dominance_constant",
            modes.dominance_constant.is_finite(),
            format!("{:.6e}", modes.dominance_constant),
        );
        let cacc = check_caccioppoli(sol.trajectory());
        record.meta("caccioppoli", cacc);
        if cacc.small {
            record.at_most("caccioppoli_ratio", cacc.max_ratio.unwrap_or(f64::INFINITY), 5.0);
        }
        Ok(())
    }
}

pub struct CriticalManifold;

impl Command for CriticalManifold {
    fn name(&self) -> &'static str {
        "critical-manifold"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["half_width", "per_axis"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let (split, es) = setup(cfg)?;
        let base = evaluate(split.functional(), &Field::zeros(*split.grid()))?;
        let reduced = ReducedFunctional::new(split, es)?.with_tolerance(cfg.tol_or(NEWTON_TOL));
        let half_width = cfg.get_positive("half_width", 0.1 / 2f64.sqrt())?;
        let per_axis: usize = cfg.get("per_axis", 5)?;
        let samples = sample_critical_set(&reduced, half_width, per_axis)?;
        let dim = reduced.dimension();
        let header = (1..=dim)
            .map(|j| format!("a_{j}"))
            .chain(["a_fin".into(), "gradient_norm".into(), "critical".into()])
            .collect::<Vec<_>>()
            .join(",");
        write_table(
            cfg,
            "critical_set.csv",
            &header,
            samples.iter().map(|s| {
                s.a.iter()
                    .chain([&s.a_fin, &s.gradient_norm])
                    .map(|v| sci(*v))
                    .chain([u8::from(s.critical).to_string()])
                    .collect()
            }),
        )?;
        let defect = samples.iter().map(|s| (s.a_fin - base).abs()).fold(0.0, f64::max);
        let grad = samples.iter().map(|s| s.gradient_norm).fold(0.0, f64::max);
        let at_zero = reduced
            .gradient_fd(&vec![0.0; dim], 1e-3)?
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()));
        record.meta("reference_energy", base);
        record.meta("samples", samples.len());
        record.at_most("reduced_energy_defect", defect, 1e-6);
        record.at_most("critical_gradient_norm", grad, 1e-8);
        record.at_most("reduced_gradient_at_zero", at_zero, 1e-8);
        Ok(())
    }
}

pub struct MzVerify;

impl Command for MzVerify {
    fn name(&self) -> &'static str {
        "mz-verify"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["eps", "horizon", "ds", "trials", "generator"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let defaults = MonteCarloConfig::default();
        let mc = MonteCarloConfig {
            eps: cfg.get_positive("eps", defaults.eps)?,
            horizon: cfg.get_positive("horizon", defaults.horizon)?,
            ds: cfg.get_positive("ds", defaults.ds)?,
            trials: cfg.get("trials", defaults.trials)?,
            base_seed: cfg.seed,
            generator: cfg.get_string("generator").unwrap_or(&defaults.generator).to_string(),
        };
        let rep = monte_carlo(&mc, &GeneratorRegistry::with_builtins())?;
        write_table(
            cfg,
            "trials.csv",
            "seed,case,neutral_ratio,case_b_constant,clamps,alarm",
            rep.records.iter().map(|r| {
                vec![
                    r.seed.to_string(),
                    match r.case {
                        Some(TrichotomyCase::A) => "A".into(),
                        Some(TrichotomyCase::B) => "B".into(),
                        None => String::new(),
                    },
                    sci(r.neutral_ratio),
                    r.case_b_constant.map(sci).unwrap_or_default(),
                    r.clamps.to_string(),
                    r.alarm.clone().unwrap_or_default().replace(',', ";"),
                ]
            }),
        )?;
        let trials = rep.trials.max(1) as f64;
        record.meta("case_a", rep.case_a);
        record.meta("case_b", rep.case_b);
        record.meta("case_b_bound", rep.case_b_bound);
        let fraction = |key: &str, passes: usize, record: &mut RunRecord| {
            let f = passes as f64 / trials;
            record.push(key, passes == rep.trials, f, Some(1.0), String::new());
        };
        fraction("neutral_bound_pass_fraction", rep.neutral_bound_passes, record);
        fraction("trichotomy_pass_fraction", rep.exactly_one_passes, record);
        record.at_most("counterexample_alarms", rep.alarms as f64, 0.0);
        record.at_most("case_b_constant", rep.max_case_b_constant, 1.1 * rep.case_b_bound);
        Ok(())
    }
}

pub struct SlowExample;

impl Command for SlowExample {
    fn name(&self) -> &'static str {
        "slow-example"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["arrival", "tau_file", "s0", "window", "audit_dt"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let (arrival, builtin): (std::sync::Arc<dyn ArrivalFunction>, _) = match cfg.get_string("tau_file") {
            Some(path) => {
                let file = File::open(path).map_err(|source| ConfigError::Io {
                    path: path.into(),
                    source,
                })?;
                (std::sync::Arc::new(TabulatedArrival::from_csv("tabulated", file)?), None)
            }
            None => {
                let name = cfg.get_string("arrival").unwrap_or("exp");
                (ArrivalRegistry::with_builtins().get(name)?, Some(name.to_string()))
            }
        };
        let metric = build_warping(arrival)?;
        let s0 = cfg.get_positive("s0", 0.5)?;
        let window = cfg.get_positive("window", 20.0)?;
        let short = latitude_flow(&metric, s0, 0.0, -window, cfg.dt)?;
        write_table(
            cfg,
            "arrival.csv",
            "t,s",
            short.times.iter().zip(&short.s).map(|(t, s)| vec![sci(*t), sci(*s)]),
        )?;
        let check = arrival_time_check(&short, metric.arrival().as_ref())?;
        record.meta("arrival_shift", check.shift);
        record.meta("admissibility", metric.admissibility());
        record.at_most("arrival_residual", check.residual, cfg.tol_or(1e-8));

        let horizon = *DEFAULT_HORIZONS.last().expect("horizons");
        let long = latitude_flow(&metric, s0, 0.0, -horizon, cfg.get_positive("audit_dt", 0.05)?)?;
        let audit = l1_hypothesis_audit(&long, &DEFAULT_HORIZONS)?;
        write_table(
            cfg,
            "l1_audit.csv",
            "horizon,integral",
            audit.horizons.iter().zip(&audit.integrals).map(|(h, i)| vec![sci(*h), sci(*i)]),
        )?;
        record.meta("l1_audit", &audit);
        let expected = match builtin.as_deref() {
            Some("exp") => Some(L1Class::Convergent),
            Some("poly" | "sublog") => Some(L1Class::Divergent),
            _ => None,
        };
        if let Some(expected) = expected {
            record.flag(
                "l1_classification",
                audit.class == expected,
                format!("{:?}, expected {expected:?}", audit.class),
            );
        }
        if builtin.as_deref() == Some("poly") {
            record.at_most("poly_log_fit_residual", audit.log_fit_residual, 0.05);
        }
        Ok(())
    }
}

pub struct Accept;

impl Command for Accept {
    fn name(&self) -> &'static str {
        "accept"
    }

    fn keys(&self) -> &'static [&'static str] {
        &["only"]
    }

    fn run(&self, cfg: &RunConfig, record: &mut RunRecord) -> Result<(), CliError> {
        let only: Vec<usize> = match cfg.get_string("only") {
            None => (1..=10).collect(),
            Some(list) => list
                .split(',')
                .map(|x| match x.trim().parse::<usize>() {
                    Ok(k) if (1..=10).contains(&k) => Ok(k),
                    _ => Err(ConfigError::Invalid {
                        key: "only".into(),
                        value: list.into(),
                        reason: "criterion numbers run from 1 to 10".into(),
                    }),
                })
                .collect::<Result<_, _>>()?,
        };
        let outcomes = run_selected(&only);
        write_table(
            cfg,
            "acceptance.csv",
            "number,name,passed",
            outcomes
                .iter()
                .map(|o| vec![o.number.to_string(), o.name.to_string(), o.passed.to_string()]),
        )?;
        for o in &outcomes {
            let key: String = o
                .name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
                .collect();
            record.flag(&key, o.passed, o.summary.clone());
            println!("[{}] criterion {:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.number, o.name, o.summary);
        }
        record.meta("criteria", &outcomes);
        Ok(())
    }
}
