//! Ancient latitude flows on warped surfaces of revolution
//! ds² + e^{2f(s)}dθ², which reach the geodesic s = 0 as t → −∞ at a rate
//! prescribed by an arrival function τ.

use serde::Serialize;

use crate::arrival::{ArrivalFunction, WarpedMetric};
use crate::error::{Error, Result};
use crate::quadrature::{linear_fit, log_log_slope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowStatus {
    Ok,
    /// s left (0, 1]; the trajectory stops at the last admissible sample.
    DomainExit,
}

/// Distance s(t) from the geodesic, stored in increasing time.
#[derive(Debug, Clone, Serialize)]
pub struct SlowTrajectory {
    pub arrival: String,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub status: SlowStatus,
}

/// Integrates ds/dt = −f′(s) = 1/τ′(s) from s(t0) = s0 to t1 (either side of t0).
pub fn latitude_flow(metric: &WarpedMetric, s0: f64, t0: f64, t1: f64, dt: f64) -> Result<SlowTrajectory> {
    if !(s0 > 0.0 && s0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("s0 = {s0} not in (0, 1]")));
    }
    if !(dt > 0.0) || t1 == t0 {
        return Err(Error::InvalidArgument("need dt > 0 and t1 != t0".into()));
    }
    let steps = ((t1 - t0).abs() / dt).round().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let speed = |s: f64| -metric.f_prime(s);
    let mut times = vec![t0];
    let mut values = vec![s0];
    let mut s = s0;
    let mut status = SlowStatus::Ok;
    for k in 1..=steps {
        let k1 = speed(s);
        let k2 = speed(s + 0.5 * h * k1);
        let k3 = speed(s + 0.5 * h * k2);
        let k4 = speed(s + h * k3);
        let next = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(0.0..=1.0).contains(&next) {
            status = SlowStatus::DomainExit;
            break;
        }
        s = next;
        times.push(t0 + k as f64 * h);
        values.push(s);
    }
    if h < 0.0 {
        times.reverse();
        values.reverse();
    }
    Ok(SlowTrajectory {
        arrival: metric.arrival_name().to_string(),
        times,
        s: values,
        status,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ArrivalReport {
    /// Constant c minimizing max |t − τ(s(t)) − c|.
    pub shift: f64,
    pub residual: f64,
    pub samples: usize,
}

/// Checks that τ(s(t)) − t is constant along the trajectory. Samples where
/// s has underflowed to 0 are skipped.
pub fn arrival_time_check(traj: &SlowTrajectory, arrival: &dyn ArrivalFunction) -> Result<ArrivalReport> {
    let gaps: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.s)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&t, &s)| t - arrival.tau(s))
        .filter(|g| g.is_finite())
        .collect();
    if gaps.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: gaps.len(),
        });
    }
    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ArrivalReport {
        shift: 0.5 * (max + min),
        residual: 0.5 * (max - min),
        samples: gaps.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Class {
    Convergent,
    Divergent,
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Audit {
    pub horizons: Vec<f64>,
    /// ∫_{−T}^{0} s dt per horizon.
    pub integrals: Vec<f64>,
    pub class: L1Class,
    /// Fit integral ≈ slope·log T + intercept.
    pub log_slope: f64,
    pub log_intercept: f64,
    /// Largest relative deviation from the log fit.
    pub log_fit_residual: f64,
    /// Fitted p in integral ∝ T^p.
    pub power_exponent: f64,
}

pub const DEFAULT_HORIZONS: [f64; 5] = [100.0, 300.0, 1000.0, 3000.0, 10000.0];

/// Relative growth over the last horizon step below which the spacetime
/// integral counts as convergent.
const CONVERGENCE_TOL: f64 = 1e-6;

/// Spacetime L¹ norm ∫_{−T}^{0} s dt for growing T, and its growth law.
pub fn l1_hypothesis_audit(traj: &SlowTrajectory, horizons: &[f64]) -> Result<L1Audit> {
    if horizons.len() < 2 || horizons.windows(2).any(|w| !(w[1] > w[0])) || horizons[0] <= 0.0 {
        return Err(Error::InvalidArgument("horizons must be positive and increasing, at least two".into()));
    }
    let t_end = *traj.times.last().ok_or(Error::InsufficientSamples { needed: 2, got: 0 })?;
    let t_start = traj.times[0];
    let longest = horizons[horizons.len() - 1];
    if t_start > t_end - longest + 1e-9 * longest {
        return Err(Error::Window(format!(
            "trajectory starts at {t_start}, horizon {longest} needs {}",
            t_end - longest
        )));
    }
    // cumulative trapezoid from the final time backward
    let n = traj.times.len();
    let mut cumulative = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let dt = traj.times[k + 1] - traj.times[k];
        cumulative[k] = cumulative[k + 1] + 0.5 * dt * (traj.s[k] + traj.s[k + 1]);
    }
    let integrals: Vec<f64> = horizons
        .iter()
        .map(|&big_t| {
            let t = t_end - big_t;
            let k = traj.times.partition_point(|&x| x < t).min(n - 1);
            if k == 0 {
                return cumulative[0];
            }
            let (ta, tb) = (traj.times[k - 1], traj.times[k]);
            let w = (tb - t) / (tb - ta);
            // partial trapezoid on [t, tb]
            let st = traj.s[k] + w * (traj.s[k - 1] - traj.s[k]);
            cumulative[k] + 0.5 * (tb - t) * (st + traj.s[k])
        })
        .collect();
    let last = integrals[integrals.len() - 1];
    let prev = integrals[integrals.len() - 2];
    let class = if (last - prev).abs() <= CONVERGENCE_TOL * last.abs().max(f64::MIN_POSITIVE) {
        L1Class::Convergent
    } else {
        L1Class::Divergent
    };
    let logs: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let (log_slope, log_intercept, _) = linear_fit(&logs, &integrals);
    let log_fit_residual = logs
        .iter()
        .zip(&integrals)
        .map(|(l, i)| (i - log_slope * l - log_intercept).abs() / i.abs())
        .fold(0.0, f64::max);
    Ok(L1Audit {
        horizons: horizons.to_vec(),
        power_exponent: log_log_slope(horizons, &integrals),
        integrals,
        class,
        log_slope,
        log_intercept,
        log_fit_residual,
    })
}
