//! Mode-energy diagnostics of flow trajectories.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::linear_fit;
use crate::spectral::EigenSystem;
use crate::trajectory::FlowTrajectory;

/// U_-, U_0, U_+ (L² norms of the three spectral projections), the L² norm
/// and the discrete C² norm σ of u(·, t) at every sample.
#[derive(Debug, Clone, Serialize)]
pub struct ModeEnergySeries {
    pub times: Vec<f64>,
    pub u_minus: Vec<f64>,
    pub u_zero: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub l2: Vec<f64>,
    pub sigma: Vec<f64>,
    /// λ_I, the unstable eigenvalue closest to zero.
    pub lambda_last_unstable: Option<f64>,
    /// λ_{I+K+1}, the first stable eigenvalue.
    pub lambda_first_stable: Option<f64>,
}

pub fn mode_energies(es: &EigenSystem, traj: &FlowTrajectory) -> Result<ModeEnergySeries> {
    if es.grid() != traj.grid() {
        return Err(Error::InvalidArgument("eigensystem and trajectory grids differ".into()));
    }
    let grid = *traj.grid();
    let coeff = es.phi_matrix().transpose() * traj.values() * grid.spacing();
    let (i, k) = (es.index(), es.nullity());
    let block = |k0: usize, len: usize, c: usize| -> f64 {
        coeff.view((k0, c), (len, 1)).norm()
    };
    let nt = traj.len();
    let u_minus = (0..nt).map(|c| block(0, i, c)).collect();
    let u_zero = (0..nt).map(|c| block(i, k, c)).collect();
    let u_plus = (0..nt).map(|c| block(i + k, es.len() - i - k, c)).collect();
    let (l2, sigma): (Vec<f64>, Vec<f64>) = (0..nt)
        .into_par_iter()
        .map(|c| {
            let f = traj.field(c);
            (f.l2_norm(), f.c2_norm())
        })
        .unzip();
    Ok(ModeEnergySeries {
        times: traj.times().to_vec(),
        u_minus,
        u_zero,
        u_plus,
        l2,
        sigma,
        lambda_last_unstable: i.checked_sub(1).map(|j| es.lambda(j + 1)),
        lambda_first_stable: es.first_stable(),
    })
}

impl ModeEnergySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |U_-² + U_0² + U_+² − ‖u‖²| / ‖u‖² over the samples.
    pub fn parseval_defect(&self) -> f64 {
        (0..self.len())
            .filter(|&k| self.l2[k] > 0.0)
            .map(|k| {
                let sum = self.u_minus[k].powi(2) + self.u_zero[k].powi(2) + self.u_plus[k].powi(2);
                (sum - self.l2[k].powi(2)).abs() / self.l2[k].powi(2)
            })
            .fold(0.0, f64::max)
    }
}

/// Least-squares exponential rate of a series on a window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// Slope of log y against t.
    pub slope: f64,
    /// RMS residual of the log fit.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub sigma: RateFit,
    pub u_minus: Option<RateFit>,
    pub u_zero: Option<RateFit>,
    pub u_plus: Option<RateFit>,
}

impl DecayFit {
    /// Magnitude of the exponential rate of σ.
    pub fn rate(&self) -> f64 {
        self.sigma.slope.abs()
    }
}

fn fit_log(times: &[f64], ys: &[f64]) -> Option<RateFit> {
    if ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, _, residual) = linear_fit(times, &logs);
    Some(RateFit { slope, residual })
}

/// Fits log σ(t) on [t_a, t_b]; the per-mode fits are omitted where a series
/// vanishes somewhere on the window.
pub fn fit_decay_rate(series: &ModeEnergySeries, t_a: f64, t_b: f64) -> Result<DecayFit> {
    let eps = 1e-9 * (1.0 + t_a.abs().max(t_b.abs()));
    let idx: Vec<usize> = (0..series.len())
        .filter(|&k| series.times[k] >= t_a - eps && series.times[k] <= t_b + eps)
        .collect();
    if idx.len() < 2 {
        return Err(Error::Window(format!(
            "[{t_a}, {t_b}] holds {} samples, need 2",
            idx.len()
        )));
    }
    let pick = |v: &[f64]| idx.iter().map(|&k| v[k]).collect::<Vec<f64>>();
    let times = pick(&series.times);
    let sigma = fit_log(&times, &pick(&series.sigma))
        .ok_or_else(|| Error::Window(format!("sigma is not positive on [{t_a}, {t_b}]")))?;
    Ok(DecayFit {
        sigma,
        u_minus: fit_log(&times, &pick(&series.u_minus)),
        u_zero: fit_log(&times, &pick(&series.u_zero)),
        u_plus: fit_log(&times, &pick(&series.u_plus)),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaccioppoliReport {
    /// max_t ‖u‖_{W^{1,2}} / ‖u‖_{L²}; `None` when u vanishes identically.
    pub max_ratio: Option<f64>,
    pub max_c1: f64,
    /// Whether ‖u‖_{C¹} ≤ 0.2 held throughout.
    pub small: bool,
}

pub const SMALLNESS_C1: f64 = 0.2;

pub fn check_caccioppoli(traj: &FlowTrajectory) -> CaccioppoliReport {
    let grid = traj.grid();
    let (ratio, max_c1) = (0..traj.len())
        .into_par_iter()
        .map(|k| {
            let u = traj.field(k);
            let l2 = u.l2_norm();
            let du = grid.l2_norm(&grid.d1(u.values()));
            let r = if l2 > 0.0 {
                Some((l2 * l2 + du * du).sqrt() / l2)
            } else {
                None
            };
            (r, u.c1_norm())
        })
        .reduce(
            || (None, 0.0f64),
            |a, b| {
                let r = match (a.0, b.0) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, None) => x,
                    (None, y) => y,
                };
                (r, a.1.max(b.1))
            },
        );
    CaccioppoliReport {
        max_ratio: ratio,
        max_c1,
        small: max_c1 <= SMALLNESS_C1,
    }
}

/// Smallest constants for which
/// U_-' + λ_I U_- ≥ −C₁σ‖u‖, |U_0'| ≤ C₂σ‖u‖, U_+' + λ_{I+K+1}U_+ ≤ C₃σ‖u‖
/// hold at every interior sample, and the constant of U_0 + U_+ ≤ Cσ U_-.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModeInequalityReport {
    pub unstable_constant: f64,
    pub neutral_constant: f64,
    pub stable_constant: f64,
    pub dominance_constant: f64,
}

/// Values below `floor·‖u‖` are treated as zero before the constants are
/// formed, so roundoff in modes that vanish identically does not register.
pub fn verify_mode_inequalities(series: &ModeEnergySeries, floor: f64) -> Result<ModeInequalityReport> {
    let nt = series.len();
    if nt < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: nt });
    }
    let dt = series.times[1] - series.times[0];
    let clean = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&series.l2)
            .map(|(&x, &n)| if x <= floor * n { 0.0 } else { x })
            .collect()
    };
    let (um, u0, up) = (clean(&series.u_minus), clean(&series.u_zero), clean(&series.u_plus));
    let lam_i = series.lambda_last_unstable.unwrap_or(0.0);
    let lam_s = series.lambda_first_stable.unwrap_or(0.0);
    let (mut c1, mut c2, mut c3, mut c4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 1..nt - 1 {
        let scale = series.sigma[k] * series.l2[k];
        if scale > 0.0 {
            let d = |v: &[f64]| (v[k + 1] - v[k - 1]) / (2.0 * dt);
            c1 = c1.max((-(d(&um) + lam_i * um[k])).max(0.0) / scale);
            c2 = c2.max(d(&u0).abs() / scale);
            c3 = c3.max((d(&up) + lam_s * up[k]).max(0.0) / scale);
        }
    }
    for k in 0..nt {
        let denom = series.sigma[k] * um[k];
        if denom > 0.0 {
            c4 = c4.max((u0[k] + up[k]) / denom);
        }
    }
    Ok(ModeInequalityReport {
        unstable_constant: c1,
        neutral_constant: c2,
        stable_constant: c3,
        dominance_constant: c4,
    })
}

pub const DEFAULT_NOISE_FLOOR: f64 = 1e-9;
