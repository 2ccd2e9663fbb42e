//! Ancient solutions of ∂_t u = Lu + h on (−∞, 0] by per-mode Duhamel
//! formulas.
//!
//! Each mode coefficient solves u_j' = −λ_j u_j + h_j. Unstable modes are
//! pinned at t = 0 to the prescribed data and integrated backward; stable and
//! neutral modes are integrated forward from −T_max, where the discarded tail
//! of the semi-infinite integral is replaced by its exponential extrapolation
//! and bounded analytically. Between samples h_j is interpolated linearly and
//! the exponential kernel is integrated exactly, so stiff modes need no step
//! restriction.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::spectral::EigenSystem;
use crate::trajectory::{backward_time_grid, FlowStatus, FlowTrajectory};

type ForcingFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Function(ForcingFn),
    Sampled { times: Vec<f64>, values: DMatrix<f64> },
}

/// Right-hand side h(θ, t) with a decay certificate e^{−δt}‖h(·,t)‖ ≤ bound.
#[derive(Clone)]
pub struct Forcing {
    grid: PeriodicGrid,
    delta: f64,
    bound: f64,
    source: Source,
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("delta", &self.delta)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InadmissibleForcing(format!(
            "decay rate must be positive, got {delta}"
        )));
    }
    Ok(())
}

impl Forcing {
    /// Analytic forcing with a caller-declared bound, checked at every sample.
    pub fn from_fn(
        grid: PeriodicGrid,
        delta: f64,
        bound: f64,
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            grid,
            delta,
            bound,
            source: Source::Function(Arc::new(h)),
        })
    }

    pub fn zero(grid: PeriodicGrid, delta: f64) -> Result<Self> {
        Self::from_fn(grid, delta, 0.0, |_, _| 0.0)
    }

    /// Forcing tabulated on a time grid; the bound is the measured maximum.
    pub fn sampled(grid: PeriodicGrid, times: Vec<f64>, values: DMatrix<f64>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if values.nrows() != grid.n() || values.ncols() != times.len() {
            return Err(Error::InvalidArgument("forcing samples have the wrong shape".into()));
        }
        let bound = (0..times.len())
            .map(|k| {
                let col = &values.as_slice()[k * grid.n()..(k + 1) * grid.n()];
                (-delta * times[k]).exp() * grid.l2_norm(col)
            })
            .fold(0.0f64, f64::max);
        Ok(Self {
            grid,
            delta,
            bound,
            source: Source::Sampled { times, values },
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn sample(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.grid.n();
        let values = match &self.source {
            Source::Function(h) => DMatrix::from_fn(n, times.len(), |i, k| h(self.grid.point(i), times[k])),
            Source::Sampled { times: own, values } => {
                let same = own.len() == times.len()
                    && own.iter().zip(times).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                if !same {
                    return Err(Error::InvalidArgument(
                        "sampled forcing does not match the solver time grid".into(),
                    ));
                }
                values.clone()
            }
        };
        for (k, &t) in times.iter().enumerate() {
            let col = &values.as_slice()[k * n..(k + 1) * n];
            let weighted = (-self.delta * t).exp() * self.grid.l2_norm(col);
            if !weighted.is_finite() || weighted > self.bound * (1.0 + 1e-9) + 1e-300 {
                return Err(Error::InadmissibleForcing(format!(
                    "e^(-delta t)||h|| = {weighted:.3e} exceeds the declared bound {:.3e} at t = {}",
                    self.bound, t
                )));
            }
        }
        Ok(values)
    }
}

/// Output of [`solve_linear_ancient`].
#[derive(Debug, Clone)]
pub struct LinearAncientSolution {
    trajectory: FlowTrajectory,
    unstable_data: Vec<f64>,
    coefficients: DMatrix<f64>,
    forcing_norms: Vec<f64>,
    tail_bound: f64,
    lambdas: Vec<f64>,
    index: usize,
}

impl LinearAncientSolution {
    pub fn trajectory(&self) -> &FlowTrajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> FlowTrajectory {
        self.trajectory
    }

    pub fn unstable_data(&self) -> &[f64] {
        &self.unstable_data
    }

    /// Coefficients u_j(t_k), one row per mode (0-based), one column per time.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Analytic bound on the error from truncating the semi-infinite integrals.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn forcing_norms(&self) -> &[f64] {
        &self.forcing_norms
    }
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

pub(crate) fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

pub(crate) fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Solves ∂_t u = Lu + h on [−T_max, 0] with Π_-u(0) = ι_-(a)(0).
pub fn solve_linear_ancient(
    es: &EigenSystem,
    a: &[f64],
    h: &Forcing,
    t_max: f64,
    dt: f64,
) -> Result<LinearAncientSolution> {
    solve_linear_ancient_with(es, a, h, t_max, dt, DEFAULT_TAIL_TOL)
}

pub fn solve_linear_ancient_with(
    es: &EigenSystem,
    a: &[f64],
    h: &Forcing,
    t_max: f64,
    dt: f64,
    tail_tol: f64,
) -> Result<LinearAncientSolution> {
    es.check_unstable_len(a)?;
    if h.grid != *es.grid() {
        return Err(Error::InvalidArgument("forcing grid differs from the eigensystem grid".into()));
    }
    let times = backward_time_grid(t_max, dt)?;
    let dt = times[1] - times[0];
    let hv = h.sample(&times)?;
    let grid = *es.grid();
    let n = grid.n();
    let nt = times.len();
    let index = es.index();
    let lambdas = es.lambdas().to_vec();

    let mut tail_bound = 0.0f64;
    for &lam in &lambdas[index..] {
        let rate = lam + h.delta;
        if rate <= 0.0 {
            return Err(Error::InadmissibleForcing(format!(
                "decay rate {} does not dominate eigenvalue {lam}",
                h.delta
            )));
        }
        tail_bound = tail_bound.max(h.bound * (-h.delta * t_max).exp() / rate);
    }
    if tail_bound > tail_tol {
        return Err(Error::HorizonTooShort {
            tail: tail_bound,
            tol: tail_tol,
        });
    }

    let phis = es.phi_matrix();
    let modal = phis.transpose() * &hv * grid.spacing();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let lam = lambdas[j];
            let hj: Vec<f64> = (0..nt).map(|k| modal[(j, k)]).collect();
            let mut u = vec![0.0; nt];
            if j < index {
                let z = lam * dt;
                let (decay, w_near, w_far) = (z.exp(), dt * (phi1(z) - phi2(z)), dt * phi2(z));
                u[nt - 1] = a[j];
                for k in (1..nt).rev() {
                    u[k - 1] = decay * u[k] - (w_near * hj[k] + w_far * hj[k - 1]);
                }
            } else {
                let z = -lam * dt;
                let (decay, w_old, w_new) = (z.exp(), dt * (phi1(z) - phi2(z)), dt * phi2(z));
                u[0] = hj[0] / (lam + h.delta);
                for k in 0..nt - 1 {
                    u[k + 1] = decay * u[k] + w_old * hj[k] + w_new * hj[k + 1];
                }
            }
            u
        })
        .collect();
    let coefficients = DMatrix::from_fn(n, nt, |j, k| rows[j][k]);
    let values = phis * &coefficients;
    let forcing_norms = (0..nt)
        .map(|k| grid.l2_norm(&hv.as_slice()[k * n..(k + 1) * n]))
        .collect();
    Ok(LinearAncientSolution {
        trajectory: FlowTrajectory::new(grid, times, values, FlowStatus::Ok)?,
        unstable_data: a.to_vec(),
        coefficients,
        forcing_norms,
        tail_bound,
        lambdas,
        index,
    })
}

/// Measured constant in e^{−δ′t}‖u − ι_-(a)‖ ≤ c (∫ e^{−2δτ}‖h‖² dτ)^{1/2}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearBoundReport {
    pub left_max: f64,
    pub right: f64,
    pub constant: f64,
}

pub fn verify_linear_bound(sol: &LinearAncientSolution, delta: f64, delta_prime: f64) -> Result<LinearBoundReport> {
    let gap = sol.lambdas.get(sol.index.wrapping_sub(1)).map_or(f64::INFINITY, |l| -l);
    if !(delta_prime < delta.min(gap)) {
        return Err(Error::InvalidArgument(format!(
            "need delta' < min(delta, -lambda_I) = {}, got {delta_prime}",
            delta.min(gap)
        )));
    }
    let traj = &sol.trajectory;
    let times = traj.times();
    let dt = traj.dt();
    let mut left_max = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        // u − ι_-(a) drops the homogeneous unstable part from each unstable coefficient.
        let mut dev = sol.coefficients.column(k).into_owned();
        for j in 0..sol.index {
            dev[j] -= sol.unstable_data[j] * (-sol.lambdas[j] * t).exp();
        }
        let norm = dev.norm();
        left_max = left_max.max((-delta_prime * t).exp() * norm);
    }
    let integrand: Vec<f64> = times
        .iter()
        .zip(&sol.forcing_norms)
        .map(|(&t, &hn)| (-2.0 * delta * t).exp() * hn * hn)
        .collect();
    let integral = dt
        * (integrand.iter().sum::<f64>() - 0.5 * (integrand[0] + integrand[integrand.len() - 1]));
    let right = integral.max(0.0).sqrt();
    // With h = 0 the left side is pure roundoff.
    let constant = if right > 0.0 {
        left_max / right
    } else if left_max <= 1e-10 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(LinearBoundReport {
        left_max,
        right,
        constant,
    })
}
