//! Forward time stepping of ∂_t u = ℋ(u), and the parametric flow of
//! latitude circles.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::EllipticFunctional;
use crate::grid::Field;
use crate::trajectory::{FlowStatus, FlowTrajectory};
use crate::variational::{evaluate_unchecked, gradient_split, GradientSplit};

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Largest admissible gap between predictor and corrector (sup norm).
    pub step_tol: f64,
    /// Consecutive rejections before the run is declared blown up.
    pub max_rejections: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-3,
            max_rejections: 10,
        }
    }
}

/// Crank–Nicolson on L, Heun on the remainder. Resolvents are cached per
/// step size.
struct Stepper<'a> {
    split: &'a GradientSplit,
    resolvents: HashMap<u32, (DMatrix<f64>, DMatrix<f64>)>,
    dt: f64,
}

impl<'a> Stepper<'a> {
    fn operators(&mut self, level: u32) -> Result<&(DMatrix<f64>, DMatrix<f64>)> {
        if !self.resolvents.contains_key(&level) {
            let h = self.dt / f64::from(1u32 << level);
            let l = self.split.linear().matrix();
            let n = l.nrows();
            let implicit = DMatrix::identity(n, n) - l * (0.5 * h);
            let inverse = implicit
                .try_inverse()
                .ok_or_else(|| Error::Singular("I - dt/2 L is not invertible".into()))?;
            let explicit = DMatrix::identity(n, n) + l * (0.5 * h);
            self.resolvents.insert(level, (inverse, explicit));
        }
        Ok(&self.resolvents[&level])
    }

    /// One step of size dt/2^level; returns the new state and the
    /// predictor–corrector gap.
    fn step(&mut self, u: &DVector<f64>, level: u32) -> Result<(DVector<f64>, f64)> {
        let h = self.dt / f64::from(1u32 << level);
        let split = self.split;
        let n0 = split.remainder_values(u.as_slice());
        let (inverse, explicit) = self.operators(level)?;
        let base = explicit * u;
        let predictor = inverse * (&base + &n0 * h);
        let n1 = split.remainder_values(predictor.as_slice());
        let corrector = inverse * (base + (n0 + n1) * (0.5 * h));
        let gap = (&corrector - &predictor).amax();
        Ok((corrector, gap))
    }
}

/// Evolves `u0` from t0 to t1 with nominal step dt, storing every step.
pub fn evolve(functional: &EllipticFunctional, u0: &Field, t0: f64, t1: f64, dt: f64) -> Result<FlowTrajectory> {
    let split = gradient_split(functional, *u0.grid())?;
    evolve_with(&split, u0, t0, t1, dt, &EvolveOptions::default())
}

pub fn evolve_with(
    split: &GradientSplit,
    u0: &Field,
    t0: f64,
    t1: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<FlowTrajectory> {
    if !(t1 > t0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t1 > t0 and dt > 0, got [{t0}, {t1}], dt = {dt}"
        )));
    }
    if u0.grid() != split.grid() {
        return Err(Error::InvalidArgument("initial field and split grids differ".into()));
    }
    split.functional().check_domain(u0)?;
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let dt = (t1 - t0) / steps as f64;
    let bound = split.functional().integrand().domain_bound();
    let mut stepper = Stepper {
        split,
        resolvents: HashMap::new(),
        dt,
    };
    let mut u = u0.vector().clone();
    let mut columns = vec![u.clone()];
    let mut status = FlowStatus::Ok;

    'outer: for _ in 0..steps {
        // advance one nominal step, subdividing on rejection
        let mut level = 0u32;
        let mut remaining = 1u64 << 20;
        let mut rejections = 0;
        while remaining > 0 {
            let chunk = 1u64 << (20 - level);
            let (next, gap) = stepper.step(&u, level)?;
            let ok = next.iter().all(|v| v.is_finite()) && gap <= opts.step_tol;
            if ok {
                u = next;
                remaining -= chunk;
                rejections = 0;
                if u.iter().any(|v| !(v.abs() < bound)) {
                    status = FlowStatus::GraphicalityLost;
                    break 'outer;
                }
            } else {
                rejections += 1;
                if rejections >= opts.max_rejections || level >= 20 {
                    status = FlowStatus::BlownUp;
                    break 'outer;
                }
                level += 1;
            }
        }
        columns.push(u.clone());
    }
    let times = (0..columns.len()).map(|k| t0 + k as f64 * dt).collect();
    FlowTrajectory::new(*split.grid(), times, DMatrix::from_columns(&columns), status)
}

/// Change of 𝒜 against the dissipated energy Σ‖Δu‖²/dt.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyReport {
    pub initial: f64,
    pub change: f64,
    pub dissipation: f64,
    /// |Δ𝒜 + dissipation| / |Δ𝒜|.
    pub relative_gap: f64,
    /// Largest single-step increase of 𝒜.
    pub max_increase: f64,
}

impl EnergyReport {
    pub fn holds(&self, rel_tol: f64, slack: f64) -> bool {
        self.max_increase <= slack && (self.relative_gap <= rel_tol || self.change.abs() + self.dissipation <= slack)
    }
}

pub fn energy_report(functional: &EllipticFunctional, traj: &FlowTrajectory) -> EnergyReport {
    let dt = traj.dt();
    let grid = traj.grid();
    let values: Vec<f64> = (0..traj.len())
        .map(|k| evaluate_unchecked(functional, &traj.field(k)))
        .collect();
    let mut dissipation = 0.0;
    let mut max_increase = f64::NEG_INFINITY;
    for k in 1..traj.len() {
        let du: Vec<f64> = traj
            .column(k)
            .iter()
            .zip(traj.column(k - 1))
            .map(|(a, b)| a - b)
            .collect();
        let nrm = grid.l2_norm(&du);
        dissipation += nrm * nrm / dt;
        max_increase = max_increase.max(values[k] - values[k - 1]);
    }
    let change = values[values.len() - 1] - values[0];
    let relative_gap = if change != 0.0 {
        (change + dissipation).abs() / change.abs()
    } else if dissipation == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    EnergyReport {
        initial: values[0],
        change,
        dissipation,
        relative_gap,
        max_increase: max_increase.max(0.0),
    }
}

/// Latitude of a shrinking circle, with the extinction time when it reaches
/// a pole.
#[derive(Debug, Clone, Serialize)]
pub struct LatitudeTrajectory {
    pub times: Vec<f64>,
    pub latitudes: Vec<f64>,
    pub extinction_time: Option<f64>,
}

const EXTINCTION_COS: f64 = 0.2;

fn rk4<F: Fn(f64) -> f64>(f: F, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates dφ/dt = tan φ from φ(t0) = phi0 up to t1 or extinction.
///
/// Once cos φ drops below 0.2 the time-stepping stops and the remaining
/// time to the pole is the quadrature of ∫ cot φ dφ, whose integrand stays
/// bounded where tan φ does not.
pub fn evolve_parametric_latitude(phi0: f64, t0: f64, t1: f64, dt: f64) -> Result<LatitudeTrajectory> {
    if !(phi0.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!("|phi0| = {} is not below pi/2", phi0.abs())));
    }
    if !(t1 > t0 && dt > 0.0) {
        return Err(Error::InvalidArgument("need t1 > t0 and dt > 0".into()));
    }
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut times = vec![t0];
    let mut latitudes = vec![phi0];
    let mut phi = phi0;
    for k in 1..=steps {
        if phi.cos() < EXTINCTION_COS {
            break;
        }
        phi = rk4(f64::tan, phi, h);
        times.push(t0 + k as f64 * h);
        latitudes.push(phi);
    }
    let extinction_time = if phi.cos() < EXTINCTION_COS {
        let target = std::f64::consts::FRAC_PI_2.copysign(phi);
        let m = 2000;
        let step = (target - phi) / m as f64;
        let mut remaining = 0.0;
        for i in 0..m {
            let x = phi + i as f64 * step;
            let cot = |y: f64| y.cos() / y.sin();
            remaining += step / 6.0 * (cot(x) + 4.0 * cot(x + 0.5 * step) + cot(x + step));
        }
        Some(times[times.len() - 1] + remaining)
    } else {
        None
    };
    Ok(LatitudeTrajectory {
        times,
        latitudes,
        extinction_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::builtin_sphere_functional;
    use crate::grid::PeriodicGrid;

    #[test]
    fn zero_is_stationary() {
        let g = PeriodicGrid::circle(32).unwrap();
        let traj = evolve(&builtin_sphere_functional(), &Field::zeros(g), 0.0, 1.0, 0.01).unwrap();
        assert_eq!(traj.sup_norm(), 0.0);
        assert_eq!(traj.status(), FlowStatus::Ok);
    }

    #[test]
    fn constant_latitude_escapes_like_the_separable_ode() {
        let g = PeriodicGrid::circle(32).unwrap();
        let exact = 2.0 * (0.1f64.tan() * 1f64.exp()).atan();
        let err = |dt: f64| {
            let traj = evolve(&builtin_sphere_functional(), &Field::constant(g, 0.2), 0.0, 1.0, dt).unwrap();
            (traj.last().values()[5] - exact).abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e2 < 1e-5, "{e2}");
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn energy_decreases_with_matching_dissipation() {
        let g = PeriodicGrid::circle(128).unwrap();
        let u0 = Field::from_fn(g, |x| 0.1 * (2.0 * x).sin() + 0.05 * x.cos());
        let f = builtin_sphere_functional();
        let traj = evolve(&f, &u0, 0.0, 1.0, 1e-3).unwrap();
        let r = energy_report(&f, &traj);
        assert!(r.change < 0.0);
        assert!(r.max_increase <= 1e-12, "{}", r.max_increase);
        assert!(r.relative_gap < 1e-4, "{}", r.relative_gap);
    }

    #[test]
    fn graphicality_loss_stops_the_run() {
        let g = PeriodicGrid::circle(16).unwrap();
        let traj = evolve(&builtin_sphere_functional(), &Field::constant(g, 1.0), 0.0, 5.0, 0.01).unwrap();
        assert_eq!(traj.status(), FlowStatus::GraphicalityLost);
        assert!(traj.times().last().unwrap() < &5.0);
        assert!(evolve(&builtin_sphere_functional(), &Field::constant(g, 1.6), 0.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn latitude_invariant_and_extinction() {
        let phi0 = 0.3;
        let lat = evolve_parametric_latitude(phi0, 0.5, 10.0, 1e-3).unwrap();
        for (t, p) in lat.times.iter().zip(&lat.latitudes) {
            assert!((p.sin() * (-(t - 0.5)).exp() - phi0.sin()).abs() < 1e-8);
        }
        let ext = lat.extinction_time.unwrap();
        assert!((ext - (0.5 - phi0.sin().ln())).abs() < 1e-6, "{ext}");
        let flat = evolve_parametric_latitude(0.0, 0.0, 3.0, 1e-2).unwrap();
        assert!(flat.latitudes.iter().all(|&p| p == 0.0));
        assert!(flat.extinction_time.is_none());
        let south = evolve_parametric_latitude(-phi0, 0.0, 10.0, 1e-3).unwrap();
        assert!((south.extinction_time.unwrap() + phi0.sin().ln()).abs() < 1e-6);
    }
}
