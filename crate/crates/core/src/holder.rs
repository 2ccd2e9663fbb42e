//! Discrete parabolic Hölder norms on trajectories.
//!
//! Suprema of derivatives run over every stored sample. Hölder quotients
//! |v(p,t) − v(q,s)| / (d(p,q)^θ + |t − s|^{θ/2}) run over all pairs of a
//! sub-lattice with fixed physical spacing, so refining the grid or the time
//! step keeps the same sample points.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trajectory::FlowTrajectory;

/// Sub-lattice used for the Hölder quotients.
#[derive(Debug, Clone, Copy)]
pub struct HolderSampling {
    /// Target number of spatial sample points.
    pub space_points: usize,
    /// Target number of samples per unit time.
    pub per_unit_time: usize,
    /// Cap on time samples in a single region.
    pub max_time_samples: usize,
    /// Spacing between the end times of consecutive unit windows.
    pub window_stride: f64,
}

impl Default for HolderSampling {
    fn default() -> Self {
        Self {
            space_points: 64,
            per_unit_time: 32,
            max_time_samples: 129,
            window_stride: 0.5,
        }
    }
}

/// Sup part and seminorm part of ‖·‖_{C^{k,θ}_P}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderParts {
    pub sup_terms: f64,
    pub seminorm: f64,
}

impl HolderParts {
    pub fn total(&self) -> f64 {
        self.sup_terms + self.seminorm
    }
}

struct Derived {
    // (i, j) multi-indices with i + 2j ≤ k, in the order u, u_θ, u_θθ, u_t.
    comps: Vec<(usize, usize, Vec<f64>)>,
    n: usize,
}

fn derive(traj: &FlowTrajectory, k: usize) -> Result<Derived> {
    if k > 2 {
        return Err(Error::InvalidArgument(format!("order k = {k} not in {{0,1,2}}")));
    }
    let n = traj.grid().n();
    let nt = traj.len();
    let dt = traj.dt();
    if k == 2 && nt < 3 {
        return Err(Error::Resolution(format!(
            "time derivative needs at least 3 samples, got {nt}"
        )));
    }
    let raw = traj.values().as_slice();
    let mut comps = vec![(0, 0, raw.to_vec())];
    if k >= 1 {
        let mut d1 = Vec::with_capacity(raw.len());
        for c in 0..nt {
            d1.extend(traj.grid().d1(traj.column(c)));
        }
        comps.push((1, 0, d1));
    }
    if k == 2 {
        let mut d2 = Vec::with_capacity(raw.len());
        for c in 0..nt {
            d2.extend(traj.grid().d2(traj.column(c)));
        }
        comps.push((2, 0, d2));
        let mut ut = vec![0.0; raw.len()];
        for c in 0..nt {
            for i in 0..n {
                let at = |cc: usize| raw[cc * n + i];
                ut[c * n + i] = if c == 0 {
                    (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * dt)
                } else if c == nt - 1 {
                    (3.0 * at(c) - 4.0 * at(c - 1) + at(c - 2)) / (2.0 * dt)
                } else {
                    (at(c + 1) - at(c - 1)) / (2.0 * dt)
                };
            }
        }
        comps.push((0, 1, ut));
    }
    Ok(Derived { comps, n })
}

fn check_resolution(traj: &FlowTrajectory) -> Result<()> {
    if traj.len() > 1 && traj.dt() > 0.25 {
        return Err(Error::Resolution(format!(
            "need at least 4 time samples per unit, dt = {}",
            traj.dt()
        )));
    }
    Ok(())
}

fn parts_on(
    traj: &FlowTrajectory,
    der: &Derived,
    k: usize,
    theta: f64,
    cols: std::ops::Range<usize>,
    sampling: &HolderSampling,
) -> HolderParts {
    let n = der.n;
    let sup_terms = der
        .comps
        .iter()
        .map(|(_, _, v)| {
            v[cols.start * n..cols.end * n]
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .sum();

    let grid = traj.grid();
    let x_stride = (n / sampling.space_points.max(1)).max(1);
    let dt = traj.dt();
    let mut t_stride = if dt > 0.0 {
        ((1.0 / (sampling.per_unit_time as f64 * dt)).round() as usize).max(1)
    } else {
        1
    };
    while cols.len().div_ceil(t_stride) > sampling.max_time_samples {
        t_stride *= 2;
    }
    let xs: Vec<usize> = (0..n).step_by(x_stride).collect();
    let ts: Vec<usize> = cols.clone().step_by(t_stride).collect();
    let space_w: Vec<f64> = (0..xs.len())
        .map(|d| grid.distance(0.0, grid.point(xs[d])).powf(theta))
        .collect();
    let time_w: Vec<f64> = (0..ts.len())
        .map(|d| (d as f64 * t_stride as f64 * dt).powf(0.5 * theta))
        .collect();
    let (mx, mt) = (xs.len(), ts.len());

    let seminorm = der
        .comps
        .iter()
        .filter(|(i, j, _)| i + 2 * j == k)
        .map(|(_, _, v)| {
            let lattice: Vec<f64> = ts
                .iter()
                .flat_map(|&c| xs.iter().map(move |&i| v[c * n + i]))
                .collect();
            (0..mt)
                .into_par_iter()
                .map(|ka| {
                    let mut best = 0.0f64;
                    for kb in ka..mt {
                        let tw = time_w[kb - ka];
                        let (ra, rb) = (&lattice[ka * mx..(ka + 1) * mx], &lattice[kb * mx..(kb + 1) * mx]);
                        for (xa, va) in ra.iter().enumerate() {
                            let first = if kb == ka { xa + 1 } else { 0 };
                            for (xb, vb) in rb.iter().enumerate().skip(first) {
                                let d = space_w[xa.abs_diff(xb)] + tw;
                                if d > 0.0 {
                                    best = best.max((va - vb).abs() / d);
                                }
                            }
                        }
                    }
                    best
                })
                .reduce(|| 0.0, f64::max)
        })
        .sum();
    HolderParts {
        sup_terms,
        seminorm,
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent {theta} not in (0,1)")));
    }
    Ok(())
}

/// ‖u‖_{C^{k,θ}_P} over the whole trajectory, split into its two parts.
pub fn parabolic_holder_parts(
    traj: &FlowTrajectory,
    k: usize,
    theta: f64,
    sampling: &HolderSampling,
) -> Result<HolderParts> {
    check_theta(theta)?;
    check_resolution(traj)?;
    let der = derive(traj, k)?;
    Ok(parts_on(traj, &der, k, theta, 0..traj.len(), sampling))
}

/// ‖u‖_{C^{k,θ}_P} over the whole trajectory.
pub fn parabolic_holder_norm(traj: &FlowTrajectory, k: usize, theta: f64) -> Result<f64> {
    Ok(parabolic_holder_parts(traj, k, theta, &HolderSampling::default())?.total())
}

/// sup over unit windows [t − 1, t] of e^{−δt} ‖u‖_{C^{k,θ}_P(window)}.
pub fn weighted_norm_with(
    traj: &FlowTrajectory,
    k: usize,
    theta: f64,
    delta: f64,
    sampling: &HolderSampling,
) -> Result<f64> {
    check_theta(theta)?;
    check_resolution(traj)?;
    let der = derive(traj, k)?;
    let times = traj.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut ends = Vec::new();
    let mut e = t1;
    while e - 1.0 >= t0 - 1e-9 {
        ends.push(e);
        e -= sampling.window_stride;
    }
    if ends.is_empty() {
        ends.push(t1);
    }
    let eps = 1e-9 * traj.dt().max(1e-12);
    let best = ends
        .iter()
        .map(|&end| {
            let lo = times.partition_point(|&t| t < end - 1.0 - eps);
            let hi = times.partition_point(|&t| t <= end + eps);
            let p = parts_on(traj, &der, k, theta, lo..hi, sampling);
            (-delta * end).exp() * p.total()
        })
        .fold(0.0f64, f64::max);
    Ok(best)
}

/// ‖u‖_{C^{k,θ,δ}_P} with the default sampling.
pub fn weighted_norm(traj: &FlowTrajectory, k: usize, theta: f64, delta: f64) -> Result<f64> {
    weighted_norm_with(traj, k, theta, delta, &HolderSampling::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::trajectory::backward_time_grid;

    #[test]
    fn constant_trajectory() {
        let g = PeriodicGrid::circle(32).unwrap();
        let traj = FlowTrajectory::from_fn(g, backward_time_grid(2.0, 0.05).unwrap(), |_, _| 1.0).unwrap();
        let p = parabolic_holder_parts(&traj, 0, 0.5, &HolderSampling::default()).unwrap();
        assert_eq!(p.sup_terms, 1.0);
        assert_eq!(p.seminorm, 0.0);
    }

    #[test]
    fn sine_seminorm_matches_one_dimensional_oracle() {
        let g = PeriodicGrid::circle(256).unwrap();
        let traj = FlowTrajectory::from_fn(g, backward_time_grid(1.0, 0.05).unwrap(), |x, _| x.sin()).unwrap();
        let p = parabolic_holder_parts(&traj, 0, 0.5, &HolderSampling::default()).unwrap();
        // sup over p and separation d of |sin p − sin(p + d)| / d^{1/2}
        let mut oracle = 0.0f64;
        let m = 2000;
        for a in 0..m {
            let x = 2.0 * std::f64::consts::PI * a as f64 / m as f64;
            for b in 1..=m / 2 {
                let d = std::f64::consts::PI * b as f64 / (m / 2) as f64;
                oracle = oracle.max((x.sin() - (x + d).sin()).abs() / d.sqrt());
            }
        }
        assert!((p.seminorm - oracle).abs() < 0.1 * oracle, "{} vs {oracle}", p.seminorm);
    }

    #[test]
    fn weighted_exponential_matches_window_formula() {
        let delta = 0.7;
        let theta = 0.5;
        let g = PeriodicGrid::circle(16).unwrap();
        let norm = |dt: f64| {
            let traj = FlowTrajectory::from_fn(g, backward_time_grid(6.0, dt).unwrap(), |_, t| {
                (delta * t).exp()
            })
            .unwrap();
            weighted_norm(&traj, 0, theta, delta).unwrap()
        };
        // Each window contributes 1 + sup_{r ∈ (0,1]} (1 − e^{−δr}) / r^{θ/2}.
        let s = (1..=10_000)
            .map(|i| {
                let r = i as f64 / 10_000.0;
                (1.0 - (-delta * r).exp()) / r.powf(theta / 2.0)
            })
            .fold(0.0f64, f64::max);
        let (a, b) = (norm(0.02), norm(0.01));
        assert!(a.is_finite() && b.is_finite());
        assert!((b - (1.0 + s)).abs() < 0.02 * (1.0 + s), "{b} vs {}", 1.0 + s);
        assert!((a - b).abs() < 0.05 * b);
    }

    #[test]
    fn refinement_stability() {
        let f = |x: f64, t: f64| (0.5 * t).exp() * (x.sin() + 0.3 * (2.0 * x).cos());
        let norm = |n: usize, dt: f64| {
            let g = PeriodicGrid::circle(n).unwrap();
            let traj = FlowTrajectory::from_fn(g, backward_time_grid(3.0, dt).unwrap(), f).unwrap();
            weighted_norm(&traj, 2, 0.5, 0.25).unwrap()
        };
        let (a, b) = (norm(64, 0.02), norm(128, 0.01));
        assert!((a - b).abs() < 0.05 * b, "{a} vs {b}");
    }

    #[test]
    fn sparse_sampling_is_a_resolution_error() {
        let g = PeriodicGrid::circle(16).unwrap();
        let traj = FlowTrajectory::from_fn(g, backward_time_grid(2.0, 0.5).unwrap(), |_, _| 0.0).unwrap();
        assert!(matches!(weighted_norm(&traj, 0, 0.5, 1.0), Err(Error::Resolution(_))));
        assert!(parabolic_holder_norm(&traj, 3, 0.5).is_err());
    }
}
