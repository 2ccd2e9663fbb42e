//! Ancient solutions emanating from the critical point along its unstable
//! directions, built by Picard iteration on the Duhamel map
//! u ↦ solve_linear_ancient(a, remainder(u)).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::holder::weighted_norm;
use crate::linear::{solve_linear_ancient_with, Forcing, DEFAULT_TAIL_TOL};
use crate::spectral::EigenSystem;
use crate::trajectory::{backward_time_grid, FlowStatus, FlowTrajectory};
use crate::variational::{gradient_values, GradientSplit};

/// Hölder exponent of the weighted norm used throughout the constructor.
pub const HOLDER_EXPONENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AncientOptions {
    /// Weight e^{−δ₀t} in the norm; must lie in (0, −λ_I).
    pub delta0: f64,
    /// Stop once successive iterates are this close in the weighted norm.
    pub tol: f64,
    pub t_max: f64,
    pub dt: f64,
    pub max_iter: usize,
    /// Largest admissible |a|.
    pub eta: f64,
    pub tail_tol: f64,
    /// The first iterate is `initial_scale · ι_-(a)`.
    pub initial_scale: f64,
}

impl Default for AncientOptions {
    fn default() -> Self {
        Self {
            delta0: 0.5,
            tol: 1e-11,
            t_max: 10.0,
            dt: 1e-3,
            max_iter: 50,
            eta: 0.3,
            tail_tol: DEFAULT_TAIL_TOL,
            initial_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AncientSolution {
    trajectory: FlowTrajectory,
    a: Vec<f64>,
    history: Vec<f64>,
    delta0: f64,
}

impl AncientSolution {
    pub fn trajectory(&self) -> &FlowTrajectory {
        &self.trajectory
    }

    pub fn parameter(&self) -> &[f64] {
        &self.a
    }

    /// Weighted distances between successive iterates.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// Ratios of successive entries of [`Self::history`].
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// ι_-(a) sampled on the given times.
pub fn iota_minus_trajectory(es: &EigenSystem, a: &[f64], times: &[f64]) -> Result<FlowTrajectory> {
    es.check_unstable_len(a)?;
    let phis = es.phi_matrix();
    let coeff = DMatrix::from_fn(a.len(), times.len(), |j, k| a[j] * (-es.lambda(j + 1) * times[k]).exp());
    let values = phis.columns(0, a.len()) * coeff;
    FlowTrajectory::new(*es.grid(), times.to_vec(), values, FlowStatus::Ok)
}

fn remainder_trajectory(split: &GradientSplit, traj: &FlowTrajectory) -> DMatrix<f64> {
    let n = traj.grid().n();
    let mut out = DMatrix::zeros(n, traj.len());
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(traj.values().as_slice().par_chunks(n))
        .for_each(|(dst, src)| dst.copy_from_slice(split.remainder_values(src).as_slice()));
    out
}

fn check_graphical(split: &GradientSplit, traj: &FlowTrajectory) -> Result<()> {
    let bound = split.functional().integrand().domain_bound();
    let n = traj.grid().n();
    match traj.values().iter().enumerate().find(|(_, v)| !(v.abs() <= bound)) {
        Some((flat, &value)) => Err(Error::Domain {
            functional: split.functional().name().to_string(),
            index: flat % n,
            value,
        }),
        None => Ok(()),
    }
}

/// Builds 𝒮(a) on [−T_max, 0].
pub fn construct_ancient(
    split: &GradientSplit,
    es: &EigenSystem,
    a: &[f64],
    opts: &AncientOptions,
) -> Result<AncientSolution> {
    es.check_unstable_len(a)?;
    if split.grid() != es.grid() {
        return Err(Error::InvalidArgument("split and eigensystem grids differ".into()));
    }
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a > opts.eta {
        return Err(Error::InvalidArgument(format!(
            "|a| = {norm_a} exceeds the convergence radius {}",
            opts.eta
        )));
    }
    let gap = es.index().checked_sub(1).map_or(f64::INFINITY, |i| -es.lambda(i + 1));
    if !(opts.delta0 > 0.0 && opts.delta0 < gap) {
        return Err(Error::InvalidArgument(format!(
            "decay rate {} not in (0, {gap})",
            opts.delta0
        )));
    }
    let times = backward_time_grid(opts.t_max, opts.dt)?;
    let mut current = iota_minus_trajectory(es, a, &times)?.scale(opts.initial_scale);
    check_graphical(split, &current)?;

    let mut history = Vec::new();
    let mut rising = 0;
    for _ in 0..opts.max_iter {
        let h = Forcing::sampled(
            *es.grid(),
            times.clone(),
            remainder_trajectory(split, &current),
            2.0 * opts.delta0,
        )?;
        let next = solve_linear_ancient_with(es, a, &h, opts.t_max, opts.dt, opts.tail_tol)?.into_trajectory();
        check_graphical(split, &next)?;
        let distance = weighted_norm(&next.sub(&current)?, 2, HOLDER_EXPONENT, opts.delta0)?;
        if let Some(&prev) = history.last() {
            if distance >= prev && prev > 0.0 {
                rising += 1;
                if rising >= 3 {
                    return Err(Error::Divergence {
                        norm_a,
                        ratio: distance / prev,
                    });
                }
            } else {
                rising = 0;
            }
        }
        history.push(distance);
        current = next;
        if distance < opts.tol {
            return Ok(AncientSolution {
                trajectory: current,
                a: a.to_vec(),
                history,
                delta0: opts.delta0,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        distance: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// max over interior samples of ‖centered ∂_t u − ℋ(u)‖_{L²}.
pub fn flow_residual(split: &GradientSplit, traj: &FlowTrajectory) -> f64 {
    let grid = traj.grid();
    let dt = traj.dt();
    (1..traj.len().saturating_sub(1))
        .into_par_iter()
        .map(|k| {
            let h = gradient_values(split.functional(), grid, traj.column(k));
            let r: Vec<f64> = (0..grid.n())
                .map(|i| (traj.column(k + 1)[i] - traj.column(k - 1)[i]) / (2.0 * dt) - h[i])
                .collect();
            grid.l2_norm(&r)
        })
        .reduce(|| 0.0, f64::max)
}

/// ‖𝒮(a) − ι_-(a)‖ in the weighted parabolic norm.
pub fn distance_to_linear(es: &EigenSystem, sol: &AncientSolution) -> Result<f64> {
    let lin = iota_minus_trajectory(es, &sol.a, sol.trajectory.times())?;
    weighted_norm(&sol.trajectory.sub(&lin)?, 2, HOLDER_EXPONENT, sol.delta0)
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    pub scales: Vec<f64>,
    /// ‖(𝒮(sa) − 𝒮(−sa))/(2s) − ι_-(a)‖ per scale.
    pub deviations: Vec<f64>,
    pub fitted_order: f64,
    /// Ratios deviation(s_i)/deviation(s_{i+1}) between consecutive scales.
    pub halving_ratios: Vec<f64>,
}

pub const DEFAULT_TANGENCY_SCALES: [f64; 3] = [0.2, 0.1, 0.05];

/// Central-difference check of d/ds 𝒮(s·a) at s = 0.
pub fn tangency_check(
    split: &GradientSplit,
    es: &EigenSystem,
    direction: &[f64],
    scales: &[f64],
    opts: &AncientOptions,
) -> Result<TangencyReport> {
    if scales.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: scales.len(),
        });
    }
    if scales.iter().any(|&s| !(s > 0.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("scales must be positive and strictly decreasing".into()));
    }
    let times = backward_time_grid(opts.t_max, opts.dt)?;
    let lin = iota_minus_trajectory(es, direction, &times)?;
    let deviations = scales
        .iter()
        .map(|&s| {
            let plus: Vec<f64> = direction.iter().map(|d| s * d).collect();
            let minus: Vec<f64> = direction.iter().map(|d| -s * d).collect();
            let up = construct_ancient(split, es, &plus, opts)?;
            let down = construct_ancient(split, es, &minus, opts)?;
            let quotient = up.trajectory().sub(down.trajectory())?.scale(0.5 / s);
            weighted_norm(&quotient.sub(&lin)?, 2, HOLDER_EXPONENT, opts.delta0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fitted_order = crate::quadrature::log_log_slope(scales, &deviations);
    let halving_ratios = deviations.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(TangencyReport {
        scales: scales.to_vec(),
        deviations,
        fitted_order,
        halving_ratios,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub amplitudes: Vec<f64>,
    pub distances: Vec<f64>,
    /// distance/|a|² for every nonzero |a|.
    pub ratios: Vec<f64>,
    /// Measured μ: the largest ratio.
    pub mu: f64,
    /// Largest over smallest ratio.
    pub spread: f64,
    /// Fitted exponent p in distance ∝ |a|^p.
    pub fitted_exponent: f64,
    pub all_finite: bool,
}

/// Measures μ in ‖𝒮(a) − ι_-(a)‖ ≤ μ|a|² across a family of solutions.
pub fn verify_quadratic_envelope(es: &EigenSystem, sols: &[AncientSolution]) -> Result<EnvelopeReport> {
    let amplitudes: Vec<f64> = sols
        .iter()
        .map(|s| s.a.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut distinct = amplitudes.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
    if distinct.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: distinct.len(),
        });
    }
    let distances = sols
        .iter()
        .map(|s| distance_to_linear(es, s))
        .collect::<Result<Vec<f64>>>()?;
    let nonzero: Vec<(f64, f64)> = amplitudes
        .iter()
        .zip(&distances)
        .filter(|(a, _)| **a > 0.0)
        .map(|(&a, &d)| (a, d))
        .collect();
    let ratios: Vec<f64> = nonzero.iter().map(|(a, d)| d / (a * a)).collect();
    let mu = ratios.iter().copied().fold(0.0f64, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { mu / min } else { f64::INFINITY };
    let (xs, ys): (Vec<f64>, Vec<f64>) = nonzero.iter().copied().unzip();
    let fitted_exponent = if xs.len() >= 2 {
        crate::quadrature::log_log_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(EnvelopeReport {
        all_finite: distances.iter().all(|d| d.is_finite()),
        amplitudes,
        distances,
        ratios,
        mu,
        spread,
        fitted_exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::builtin_sphere_functional;
    use crate::grid::PeriodicGrid;
    use crate::spectral::eigendecompose;
    use crate::variational::gradient_split;

    fn setup(n: usize) -> (GradientSplit, EigenSystem) {
        let split = gradient_split(&builtin_sphere_functional(), PeriodicGrid::circle(n).unwrap()).unwrap();
        let es = eigendecompose(split.linear(), None).unwrap();
        (split, es)
    }

    fn closed_form(a: f64, t: f64) -> f64 {
        let c = (a / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).tan();
        2.0 * (c * t.exp()).atan()
    }

    fn quick() -> AncientOptions {
        AncientOptions {
            t_max: 8.0,
            dt: 4e-3,
            ..AncientOptions::default()
        }
    }

    #[test]
    fn zero_parameter_gives_zero() {
        let (split, es) = setup(32);
        let sol = construct_ancient(&split, &es, &[0.0], &quick()).unwrap();
        assert_eq!(sol.iterations(), 1);
        assert_eq!(sol.trajectory().sup_norm(), 0.0);
    }

    #[test]
    fn matches_closed_form_and_contracts() {
        let (split, es) = setup(32);
        let sol = construct_ancient(&split, &es, &[0.1], &quick()).unwrap();
        let traj = sol.trajectory();
        let mut err = 0.0f64;
        for k in 0..traj.len() {
            let exact = closed_form(0.1, traj.times()[k]);
            for &v in traj.column(k) {
                err = err.max((v - exact).abs());
            }
        }
        assert!(err < 1e-6, "{err}");
        assert!(sol.contraction_ratios().iter().all(|&r| r <= 0.5), "{:?}", sol.history());
        assert!(flow_residual(&split, traj) < 1e-5);
        // the solution is rotation invariant
        for k in 0..traj.len() {
            let col = traj.column(k);
            let spread = col.iter().fold(0.0f64, |m, v| m.max((v - col[0]).abs()));
            assert!(spread < 1e-6);
        }
    }

    #[test]
    fn cubic_deviation_from_the_linear_solution() {
        // The sphere remainder is odd, so 𝒮(a) − ι_-(a) is cubic in a.
        let (split, es) = setup(32);
        let d = |a: f64| {
            let sol = construct_ancient(&split, &es, &[a], &quick()).unwrap();
            distance_to_linear(&es, &sol).unwrap()
        };
        let ratio = d(0.1) / d(0.05);
        assert!((ratio - 8.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn uniqueness_from_different_initial_iterates() {
        let (split, es) = setup(32);
        let opts = quick();
        let a = construct_ancient(&split, &es, &[0.15], &opts).unwrap();
        let b = construct_ancient(
            &split,
            &es,
            &[0.15],
            &AncientOptions {
                initial_scale: 0.9,
                ..opts
            },
        )
        .unwrap();
        let d = a.trajectory().sub(b.trajectory()).unwrap().sup_norm();
        assert!(d < 10.0 * opts.tol, "{d}");
    }

    #[test]
    fn preconditions() {
        let (split, es) = setup(32);
        assert!(construct_ancient(&split, &es, &[0.5], &quick()).is_err());
        assert!(construct_ancient(&split, &es, &[0.1, 0.0], &quick()).is_err());
        let bad = AncientOptions {
            delta0: 1.5,
            ..quick()
        };
        assert!(construct_ancient(&split, &es, &[0.1], &bad).is_err());
        assert!(tangency_check(&split, &es, &[1.0], &[0.1, 0.2], &quick()).is_err());
    }
}
