//! The ten end-to-end acceptance checks, each returning its measurements.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use crate::ancient::{
    construct_ancient, tangency_check, verify_quadratic_envelope, AncientOptions, AncientSolution,
    DEFAULT_TANGENCY_SCALES,
};
use crate::arrival::{build_warping, ArrivalRegistry};
use crate::critical::{sample_critical_set, ReducedFunctional};
use crate::diagnostics::{
    check_caccioppoli, fit_decay_rate, mode_energies, verify_mode_inequalities, DEFAULT_NOISE_FLOOR,
};
use crate::error::Result;
use crate::flow::{energy_report, evolve_parametric_latitude, evolve_with, EvolveOptions};
use crate::functional::builtin_sphere_functional;
use crate::grid::{Field, PeriodicGrid};
use crate::mz::{monte_carlo, GeneratorRegistry, MonteCarloConfig};
use crate::slow::{arrival_time_check, l1_hypothesis_audit, latitude_flow, L1Class, DEFAULT_HORIZONS};
use crate::spectral::{eigendecompose, EigenSystem};
use crate::variational::{gradient_split, GradientSplit};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub number: usize,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub metrics: Vec<(String, f64)>,
    pub seconds: f64,
}

fn outcome(number: usize, name: &'static str, start: Instant, passed: bool, summary: String, metrics: Vec<(&str, f64)>) -> CriterionOutcome {
    CriterionOutcome {
        number,
        name,
        passed,
        summary,
        metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn sphere(n: usize) -> Result<(GradientSplit, EigenSystem)> {
    let split = gradient_split(&builtin_sphere_functional(), PeriodicGrid::circle(n)?)?;
    let es = eigendecompose(split.linear(), None)?;
    Ok((split, es))
}

/// 2·arctan(tan(a/(2√(2π)))·e^t): the rotation-invariant ancient solution.
pub fn constant_mode_solution(a: f64, t: f64) -> f64 {
    2.0 * ((a / (2.0 * (2.0 * PI).sqrt())).tan() * t.exp()).atan()
}

pub const AMPLITUDES: [f64; 3] = [0.05, 0.1, 0.2];

pub fn spectrum() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let (_, es) = sphere(512)?;
    let expected = [-1.0, 0.0, 0.0, 3.0, 3.0, 8.0, 8.0, 15.0, 15.0];
    let err = expected
        .iter()
        .zip(es.lambdas())
        .map(|(e, l)| (e - l).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let passed = err <= 1e-3 && es.index() == 1 && es.nullity() == 2 && secs < 5.0;
    Ok(outcome(
        1,
        "spectrum",
        start,
        passed,
        format!("max |lambda - (k^2-1)| = {err:.2e}, index {}, nullity {}, {secs:.2}s", es.index(), es.nullity()),
        vec![("max_eigenvalue_error", err), ("index", es.index() as f64), ("nullity", es.nullity() as f64)],
    ))
}

/// Sphere split, its eigensystem, and each constructed solution with its build time.
pub type AncientFamily = (GradientSplit, EigenSystem, Vec<(AncientSolution, f64)>);

/// Builds 𝒮(a) for the three acceptance amplitudes at n = 256, dt = 10⁻³.
pub fn ancient_family() -> Result<AncientFamily> {
    let (split, es) = sphere(256)?;
    let opts = AncientOptions::default();
    let sols = AMPLITUDES
        .iter()
        .map(|&a| {
            let start = Instant::now();
            let sol = construct_ancient(&split, &es, &[a], &opts)?;
            Ok((sol, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((split, es, sols))
}

pub fn constructor_vs_closed_form(family: &[(AncientSolution, f64)]) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for (sol, secs) in family {
        let a = sol.parameter()[0];
        let traj = sol.trajectory();
        for k in 0..traj.len() {
            let exact = constant_mode_solution(a, traj.times()[k]);
            for v in traj.column(k) {
                worst = worst.max((v - exact).abs());
            }
        }
        slowest = slowest.max(*secs);
    }
    Ok(outcome(
        2,
        "ancient constructor vs closed form",
        start,
        worst <= 1e-4 && slowest < 60.0,
        format!("sup error {worst:.2e} over a in {AMPLITUDES:?}, slowest construction {slowest:.1}s"),
        vec![("closed_form_error", worst), ("slowest_construction_seconds", slowest)],
    ))
}

pub fn tangency(split: &GradientSplit, es: &EigenSystem) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let rep = tangency_check(split, es, &[1.0], &DEFAULT_TANGENCY_SCALES, &AncientOptions::default())?;
    Ok(outcome(
        3,
        "tangency",
        start,
        rep.fitted_order >= 1.9,
        format!("fitted order {:.3}, deviations {:?}", rep.fitted_order, rep.deviations),
        vec![("tangency_order", rep.fitted_order)],
    ))
}

pub fn quadratic_envelope(es: &EigenSystem, family: &[(AncientSolution, f64)]) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let sols: Vec<AncientSolution> = family.iter().map(|(s, _)| s.clone()).collect();
    let rep = verify_quadratic_envelope(es, &sols)?;
    Ok(outcome(
        4,
        "quadratic envelope",
        start,
        rep.all_finite && rep.spread < 2.0,
        format!(
            "distance/|a|^2 = {:?}, spread {:.3} (needs < 2), fitted exponent {:.3}",
            rep.ratios, rep.spread, rep.fitted_exponent
        ),
        vec![("envelope_mu", rep.mu), ("envelope_spread", rep.spread), ("envelope_exponent", rep.fitted_exponent)],
    ))
}

pub fn dominant_mode_decay(split: &GradientSplit, es: &EigenSystem, family: &[(AncientSolution, f64)]) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let base = family
        .iter()
        .find(|(s, _)| s.parameter()[0] == 0.1)
        .map(|(s, _)| s.clone());
    let base = match base {
        Some(s) => s,
        None => construct_ancient(split, es, &[0.1], &AncientOptions::default())?,
    };
    let series = mode_energies(es, base.trajectory())?;
    let fit = fit_decay_rate(&series, -8.0, -2.0)?;
    let coarse = verify_mode_inequalities(&series, DEFAULT_NOISE_FLOOR)?.dominance_constant;
    let fine_sol = construct_ancient(
        split,
        es,
        &[0.1],
        &AncientOptions {
            dt: 5e-4,
            ..AncientOptions::default()
        },
    )?;
    let fine = verify_mode_inequalities(&mode_energies(es, fine_sol.trajectory())?, DEFAULT_NOISE_FLOOR)?.dominance_constant;
    let drift = if coarse.max(fine) > 0.0 {
        (coarse - fine).abs() / coarse.max(fine)
    } else {
        0.0
    };
    let rate = fit.sigma.slope;
    Ok(outcome(
        5,
        "dominant-mode decay",
        start,
        (rate - 1.0).abs() <= 0.02 && coarse.is_finite() && fine.is_finite() && drift <= 0.2,
        format!("rate {rate:.5} on [-8,-2], dominance constant {coarse:.3e} (dt/2: {fine:.3e})"),
        vec![("dominant_mode_decay_rate", rate), ("mode_dominance_constant", coarse), ("mode_dominance_drift", drift)],
    ))
}

fn energy_corpus(g: PeriodicGrid) -> Vec<(Field, f64)> {
    vec![
        (Field::from_fn(g, |x| 0.05 * (2.0 * x).sin() + 0.02), 1.0),
        (Field::from_fn(g, |x| 0.1 * (2.0 * x).sin() + 0.05 * x.cos()), 1.0),
        (Field::from_fn(g, |x| 0.08 * (3.0 * x).cos() - 0.03 * (2.0 * x).sin() + 0.01), 1.0),
        (Field::constant(g, 0.2), 1.0),
    ]
}

pub fn energy_identity() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let opts = EvolveOptions::default();
    let mut worst_gap = 0.0f64;
    let mut worst_increase = 0.0f64;
    let mut ratios = Vec::new();
    for n in [128usize, 256] {
        let split = gradient_split(&builtin_sphere_functional(), PeriodicGrid::circle(n)?)?;
        for (k, (u0, t1)) in energy_corpus(*split.grid()).into_iter().enumerate() {
            let traj = evolve_with(&split, &u0, 0.0, t1, 1e-3, &opts)?;
            let rep = energy_report(split.functional(), &traj);
            if n == 256 {
                worst_gap = worst_gap.max(rep.relative_gap);
                worst_increase = worst_increase.max(rep.max_increase);
            }
            if k == 0 {
                let cacc = check_caccioppoli(&traj);
                ratios.push((cacc.max_ratio.unwrap_or(f64::NAN), cacc.small));
            }
        }
    }
    let (coarse, fine) = (ratios[0].0, ratios[1].0);
    let drift = (coarse - fine).abs() / fine;
    let passed = worst_gap <= 1e-4
        && worst_increase <= 1e-12
        && ratios.iter().all(|r| r.1 && r.0 <= 5.0)
        && drift <= 0.05;
    Ok(outcome(
        6,
        "energy identity and monotonicity",
        start,
        passed,
        format!(
            "relative gap {worst_gap:.2e}, largest increase {worst_increase:.1e}, Caccioppoli ratio {fine:.4} (n=128: {coarse:.4})"
        ),
        vec![
            ("energy_identity_gap", worst_gap),
            ("energy_max_increase", worst_increase),
            ("caccioppoli_ratio", fine),
            ("caccioppoli_drift", drift),
        ],
    ))
}

pub fn integrability() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let (split, es) = sphere(256)?;
    let reduced = ReducedFunctional::new(split, es)?;
    let samples = sample_critical_set(&reduced, 0.1 / 2f64.sqrt(), 5)?;
    let energy = samples.iter().map(|s| (s.a_fin - 2.0 * PI).abs()).fold(0.0, f64::max);
    let grad = samples.iter().map(|s| s.gradient_norm).fold(0.0, f64::max);
    let fd = reduced
        .gradient_fd(&[0.0, 0.0], 1e-3)?
        .iter()
        .map(|g| g.abs())
        .fold(0.0, f64::max);
    Ok(outcome(
        7,
        "integrability of the equator",
        start,
        energy <= 1e-6 && grad <= 1e-8 && fd <= 1e-8,
        format!("max |A_fin - 2pi| {energy:.2e}, max gradient {grad:.2e}, |grad A_fin(0)| {fd:.2e} over 25 samples"),
        vec![("reduced_energy_defect", energy), ("critical_gradient_norm", grad), ("reduced_gradient_at_zero", fd)],
    ))
}

pub fn merle_zaag() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let cfg = MonteCarloConfig::default();
    let rep = monte_carlo(&cfg, &GeneratorRegistry::with_builtins())?;
    let secs = start.elapsed().as_secs_f64();
    let passed = rep.all_pass() && rep.max_case_b_constant <= 1.1 * rep.case_b_bound && secs < 60.0;
    Ok(outcome(
        8,
        "Merle-Zaag Monte Carlo",
        start,
        passed,
        format!(
            "{}/{} neutral bound, {}/{} exactly one case (A {}, B {}), max x/z {:.4} vs bound {:.4}, {secs:.1}s",
            rep.neutral_bound_passes,
            rep.trials,
            rep.exactly_one_passes,
            rep.trials,
            rep.case_a,
            rep.case_b,
            rep.max_case_b_constant,
            rep.case_b_bound
        ),
        vec![
            ("trichotomy_pass_fraction", rep.exactly_one_passes as f64 / rep.trials as f64),
            ("neutral_bound_pass_fraction", rep.neutral_bound_passes as f64 / rep.trials as f64),
            ("case_b_constant", rep.max_case_b_constant),
        ],
    ))
}

pub fn slow_examples() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let registry = ArrivalRegistry::with_builtins();
    let mut residual = 0.0f64;
    for name in ["exp", "poly"] {
        let metric = build_warping(registry.get(name)?)?;
        let traj = latitude_flow(&metric, 0.5, 0.0, -20.0, 1e-3)?;
        residual = residual.max(arrival_time_check(&traj, metric.arrival().as_ref())?.residual);
    }
    let mut classes = Vec::new();
    let mut poly_fit = f64::NAN;
    for name in ["exp", "poly", "sublog"] {
        let metric = build_warping(registry.get(name)?)?;
        let traj = latitude_flow(&metric, 0.5, 0.0, -1e4, 0.05)?;
        let audit = l1_hypothesis_audit(&traj, &DEFAULT_HORIZONS)?;
        if name == "poly" {
            poly_fit = audit.log_fit_residual;
        }
        classes.push(audit.class);
    }
    let passed = residual <= 1e-8
        && classes == [L1Class::Convergent, L1Class::Divergent, L1Class::Divergent]
        && poly_fit <= 0.05;
    Ok(outcome(
        9,
        "slow examples",
        start,
        passed,
        format!("arrival residual {residual:.2e}, L1 classes {classes:?}, poly log-fit residual {poly_fit:.2e}"),
        vec![("arrival_residual", residual), ("poly_log_fit_residual", poly_fit)],
    ))
}

pub fn parametric_latitude() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let mut invariant = 0.0f64;
    let mut extinction = 0.0f64;
    for phi0 in [0.1f64, 0.3, 0.7, 1.2, -0.5] {
        let lat = evolve_parametric_latitude(phi0, 0.0, 10.0, 1e-3)?;
        for (t, p) in lat.times.iter().zip(&lat.latitudes) {
            invariant = invariant.max((p.sin() * (-t).exp() - phi0.sin()).abs());
        }
        let expected = -phi0.abs().sin().ln();
        extinction = extinction.max(lat.extinction_time.map_or(f64::INFINITY, |e| (e - expected).abs()));
    }
    Ok(outcome(
        10,
        "parametric latitude flow",
        start,
        invariant <= 1e-8 && extinction <= 1e-6,
        format!("invariant drift {invariant:.2e}, extinction error {extinction:.2e}"),
        vec![("latitude_invariant_drift", invariant), ("extinction_time_error", extinction)],
    ))
}

/// Runs all ten checks; construction failures become failed outcomes.
pub fn run_all() -> Vec<CriterionOutcome> {
    run_selected(&(1..=10).collect::<Vec<_>>())
}

/// Runs the listed criteria (numbers 1 to 10) in ascending order.
pub fn run_selected(numbers: &[usize]) -> Vec<CriterionOutcome> {
    let want = |k: usize| numbers.contains(&k);
    let failed = |number: usize, name: &'static str, e: crate::Error| CriterionOutcome {
        number,
        name,
        passed: false,
        summary: format!("error: {e}"),
        metrics: Vec::new(),
        seconds: 0.0,
    };
    let mut out = Vec::new();
    if want(1) {
        out.push(spectrum().unwrap_or_else(|e| failed(1, "spectrum", e)));
    }
    let family_names = [
        (2, "ancient constructor vs closed form"),
        (3, "tangency"),
        (4, "quadratic envelope"),
        (5, "dominant-mode decay"),
    ];
    if family_names.iter().any(|&(k, _)| want(k)) {
        match ancient_family() {
            Ok((split, es, family)) => {
                if want(2) {
                    out.push(constructor_vs_closed_form(&family).unwrap_or_else(|e| failed(2, family_names[0].1, e)));
                }
                if want(3) {
                    out.push(tangency(&split, &es).unwrap_or_else(|e| failed(3, family_names[1].1, e)));
                }
                if want(4) {
                    out.push(quadratic_envelope(&es, &family).unwrap_or_else(|e| failed(4, family_names[2].1, e)));
                }
                if want(5) {
                    out.push(dominant_mode_decay(&split, &es, &family).unwrap_or_else(|e| failed(5, family_names[3].1, e)));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for (k, name) in family_names.into_iter().filter(|&(k, _)| want(k)) {
                    out.push(failed(k, name, crate::Error::InvalidArgument(msg.clone())));
                }
            }
        }
    }
    if want(6) {
        out.push(energy_identity().unwrap_or_else(|e| failed(6, "energy identity and monotonicity", e)));
    }
    if want(7) {
        out.push(integrability().unwrap_or_else(|e| failed(7, "integrability of the equator", e)));
    }
    if want(8) {
        out.push(merle_zaag().unwrap_or_else(|e| failed(8, "Merle-Zaag Monte Carlo", e)));
    }
    if want(9) {
        out.push(slow_examples().unwrap_or_else(|e| failed(9, "slow examples", e)));
    }
    if want(10) {
        out.push(parametric_latitude().unwrap_or_else(|e| failed(10, "parametric latitude flow", e)));
    }
    out
}
