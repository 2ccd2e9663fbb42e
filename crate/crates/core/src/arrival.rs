//! Time-of-arrival functions τ : (0, 1] → (−∞, 0] and the warped metrics
//! ds² + e^{2f(s)} dθ² they induce.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// An admissible arrival function. `speed` is 1/τ′, the velocity of the
/// latitude circle at distance s from the waist geodesic.
pub trait ArrivalFunction: Send + Sync {
    fn name(&self) -> &str;
    fn tau(&self, s: f64) -> f64;
    fn tau_prime(&self, s: f64) -> f64;

    fn speed(&self, s: f64) -> f64 {
        1.0 / self.tau_prime(s)
    }

    fn speed_prime(&self, s: f64) -> f64 {
        let h = 1e-6 * s.max(1e-3);
        (self.speed(s + h) - self.speed((s - h).max(0.0))) / (s + h - (s - h).max(0.0))
    }

    /// Smallest s at which τ is defined.
    fn s_min(&self) -> f64 {
        0.0
    }
}

/// τ(s) = log s; exponential backward convergence.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogArrival;

impl ArrivalFunction for LogArrival {
    fn name(&self) -> &str {
        "exp"
    }
    fn tau(&self, s: f64) -> f64 {
        s.ln()
    }
    fn tau_prime(&self, s: f64) -> f64 {
        1.0 / s
    }
    fn speed(&self, s: f64) -> f64 {
        s
    }
    fn speed_prime(&self, _s: f64) -> f64 {
        1.0
    }
}

/// τ(s) = 1 − 1/s; polynomial (1/|t|) backward convergence.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolyArrival;

impl ArrivalFunction for PolyArrival {
    fn name(&self) -> &str {
        "poly"
    }
    fn tau(&self, s: f64) -> f64 {
        1.0 - 1.0 / s
    }
    fn tau_prime(&self, s: f64) -> f64 {
        1.0 / (s * s)
    }
    fn speed(&self, s: f64) -> f64 {
        s * s
    }
    fn speed_prime(&self, s: f64) -> f64 {
        2.0 * s
    }
}

/// τ(s) = e − e^{1/s}; backward convergence like 1/log|t|.
#[derive(Debug, Clone, Copy, Default)]
pub struct SublogArrival;

impl ArrivalFunction for SublogArrival {
    fn name(&self) -> &str {
        "sublog"
    }
    fn tau(&self, s: f64) -> f64 {
        std::f64::consts::E - (1.0 / s).exp()
    }
    fn tau_prime(&self, s: f64) -> f64 {
        (1.0 / s).exp() / (s * s)
    }
    fn speed(&self, s: f64) -> f64 {
        s * s * (-1.0 / s).exp()
    }
    fn speed_prime(&self, s: f64) -> f64 {
        (2.0 * s + 1.0) * (-1.0 / s).exp()
    }
}

/// Arrival function interpolated from a table of (s, τ(s)) by monotone
/// piecewise-cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct TabulatedArrival {
    name: String,
    s: Vec<f64>,
    tau: Vec<f64>,
    slope: Vec<f64>,
}

impl TabulatedArrival {
    pub fn new(name: &str, s: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if s.len() != tau.len() || s.len() < 4 {
            return Err(Error::InadmissibleArrival(format!(
                "table needs at least 4 matching (s, tau) rows, got {} and {}",
                s.len(),
                tau.len()
            )));
        }
        if s.iter().chain(&tau).any(|v| !v.is_finite()) {
            return Err(Error::InadmissibleArrival("non-finite table entry".into()));
        }
        if s[0] <= 0.0 || (s[s.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InadmissibleArrival(
                "table must cover (0, 1] ending at s = 1".into(),
            ));
        }
        for w in 0..s.len() - 1 {
            if s[w + 1] <= s[w] {
                return Err(Error::InadmissibleArrival("s column not increasing".into()));
            }
            if tau[w + 1] <= tau[w] {
                return Err(Error::InadmissibleArrival(format!(
                    "tau not increasing at s = {}",
                    s[w + 1]
                )));
            }
        }
        let slope = pchip_slopes(&s, &tau);
        Ok(Self {
            name: name.to_string(),
            s,
            tau,
            slope,
        })
    }

    /// Two-column CSV (s, tau), optional header.
    pub fn from_csv<R: Read>(name: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let (mut s, mut tau) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InadmissibleArrival(format!(
                    "row {row}: expected 2 columns, got {}",
                    rec.len()
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    s.push(a);
                    tau.push(b);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InadmissibleArrival(format!(
                        "row {row}: unparsable numbers"
                    )))
                }
            }
        }
        Self::new(name, s, tau)
    }

    fn segment(&self, s: f64) -> Option<usize> {
        if s < self.s[0] || s > self.s[self.s.len() - 1] {
            return None;
        }
        let k = self.s.partition_point(|&x| x <= s);
        Some(k.saturating_sub(1).min(self.s.len() - 2))
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && v.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            v
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    // Strictly increasing data: keep slopes positive so τ′ > 0.
    for (i, v) in m.iter_mut().enumerate() {
        if *v <= 0.0 {
            *v = d[i.min(n - 2)].min(d[i.saturating_sub(1)]) * 1e-3;
        }
    }
    m
}

impl ArrivalFunction for TabulatedArrival {
    fn name(&self) -> &str {
        &self.name
    }

    fn tau(&self, s: f64) -> f64 {
        let Some(k) = self.segment(s) else {
            return f64::NAN;
        };
        let h = self.s[k + 1] - self.s[k];
        let t = (s - self.s[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.tau[k]
            + (t3 - 2.0 * t2 + t) * h * self.slope[k]
            + (-2.0 * t3 + 3.0 * t2) * self.tau[k + 1]
            + (t3 - t2) * h * self.slope[k + 1]
    }

    fn tau_prime(&self, s: f64) -> f64 {
        let Some(k) = self.segment(s) else {
            return f64::NAN;
        };
        let h = self.s[k + 1] - self.s[k];
        let t = (s - self.s[k]) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.tau[k]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slope[k]
            + (-6.0 * t2 + 6.0 * t) / h * self.tau[k + 1]
            + (3.0 * t2 - 2.0 * t) * self.slope[k + 1]
    }

    // Linear extrapolation of the speed to 0 below the first table row.
    fn speed(&self, s: f64) -> f64 {
        if s < self.s[0] && s >= 0.0 {
            return s / self.s[0] / self.tau_prime(self.s[0]);
        }
        1.0 / self.tau_prime(s)
    }

    fn s_min(&self) -> f64 {
        self.s[0]
    }
}

/// Outcome of the admissibility checks on an arrival function.
#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    pub integral: f64,
    pub integral_refined: f64,
    pub tau_at_one: f64,
    pub min_tau_prime: f64,
    pub divergence: String,
}

impl dyn ArrivalFunction {
    pub fn check_admissible(&self) -> Result<Admissibility> {
        let lo = self.s_min().max(1e-9);
        let samples: Vec<f64> = (0..=400)
            .map(|i| lo * (1.0 / lo).powf(i as f64 / 400.0))
            .collect();
        let min_tau_prime = samples
            .iter()
            .map(|&s| self.tau_prime(s))
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min);
        if !(min_tau_prime > 0.0) {
            return Err(Error::InadmissibleArrival(format!(
                "tau' must be positive, sampled minimum {min_tau_prime:.3e}"
            )));
        }
        let tau_at_one = self.tau(1.0);
        if tau_at_one.abs() > 1e-10 {
            return Err(Error::InadmissibleArrival(format!(
                "tau(1) must vanish, got {tau_at_one:.3e}"
            )));
        }
        let divergence = self.divergence_check()?;
        let speed = |s: f64| self.speed(s);
        let integral = adaptive_simpson(&speed, 0.0, 1.0, 1e-9);
        let integral_refined = adaptive_simpson(&speed, 0.0, 1.0, 1e-12);
        if !integral_refined.is_finite()
            || (integral - integral_refined).abs() > 1e-7 * integral_refined.abs().max(1.0)
        {
            return Err(Error::InadmissibleArrival(format!(
                "integral of 1/tau' does not converge: {integral} vs {integral_refined}"
            )));
        }
        Ok(Admissibility {
            integral,
            integral_refined,
            tau_at_one,
            min_tau_prime,
            divergence,
        })
    }

    fn divergence_check(&self) -> Result<String> {
        if self.s_min() <= 1e-6 {
            let v = self.tau(1e-6);
            if v < -1e3 {
                return Ok(format!("tau(1e-6) = {v:.3e}"));
            }
        }
        // Decrements of τ over dyadic shells must not decay geometrically.
        let mut k_max = 1;
        while 0.5f64.powi(k_max + 1) >= self.s_min().max(1e-6) && k_max < 19 {
            k_max += 1;
        }
        if k_max < 5 {
            return Err(Error::InadmissibleArrival(
                "table too short to establish tau -> -inf".into(),
            ));
        }
        let dec = |k: i32| self.tau(0.5f64.powi(k)) - self.tau(0.5f64.powi(k + 1));
        let ds: Vec<f64> = (k_max - 4..k_max).map(dec).collect();
        let ok = ds.windows(2).all(|w| w[1] >= 0.9 * w[0]) && ds[0] > 0.0;
        if ok {
            Ok(format!("dyadic decrements {:?} non-decaying", ds))
        } else {
            Err(Error::InadmissibleArrival(format!(
                "tau does not diverge at 0: dyadic decrements {ds:?}"
            )))
        }
    }
}

type ArrivalFactory = Box<dyn Fn() -> Arc<dyn ArrivalFunction> + Send + Sync>;

/// Arrival functions registered by name.
pub struct ArrivalRegistry {
    factories: BTreeMap<String, ArrivalFactory>,
}

impl Default for ArrivalRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ArrivalRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register("exp", || Arc::new(LogArrival));
        reg.register("poly", || Arc::new(PolyArrival));
        reg.register("sublog", || Arc::new(SublogArrival));
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<dyn ArrivalFunction> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ArrivalFunction>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownName {
                kind: "arrival function",
                name: name.to_string(),
            })
    }
}

/// Warping function f(s) = −∫₀^s dσ/τ′(σ) tabulated on (0, 1].
///
/// The minus sign orients the curvature flow of latitude circles so that
/// ds/dt = 1/τ′(s): the waist is unstable and τ is the arrival time.
#[derive(Clone)]
pub struct WarpedMetric {
    arrival: Arc<dyn ArrivalFunction>,
    nodes: Vec<f64>,
    values: Vec<f64>,
    admissibility: Admissibility,
}

impl fmt::Debug for WarpedMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WarpedMetric")
            .field("arrival", &self.arrival.name())
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

impl WarpedMetric {
    pub const NODES: usize = 2048;

    /// Tabulates f after the admissibility checks pass.
    pub fn build(arrival: Arc<dyn ArrivalFunction>) -> Result<Self> {
        Self::build_with_tolerance(arrival, 1e-14)
    }

    pub fn build_with_tolerance(arrival: Arc<dyn ArrivalFunction>, tol: f64) -> Result<Self> {
        let admissibility = arrival.check_admissible()?;
        let nodes: Vec<f64> = (0..=Self::NODES)
            .map(|i| i as f64 / Self::NODES as f64)
            .collect();
        let speed = |s: f64| arrival.speed(s);
        let mut values = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        values.push(0.0);
        for w in nodes.windows(2) {
            acc += adaptive_simpson(&speed, w[0], w[1], tol / Self::NODES as f64);
            values.push(-acc);
        }
        Ok(Self {
            arrival,
            nodes,
            values,
            admissibility,
        })
    }

    pub fn arrival(&self) -> &Arc<dyn ArrivalFunction> {
        &self.arrival
    }

    pub fn arrival_name(&self) -> &str {
        self.arrival.name()
    }

    pub fn admissibility(&self) -> &Admissibility {
        &self.admissibility
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn table(&self) -> &[f64] {
        &self.values
    }

    /// f(s) for s ∈ [0, 1], cubic Hermite between nodes with exact slopes.
    pub fn f(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let h = 1.0 / Self::NODES as f64;
        let k = ((s / h) as usize).min(Self::NODES - 1);
        let t = (s - self.nodes[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let m0 = self.f_prime(self.nodes[k]);
        let m1 = self.f_prime(self.nodes[k + 1]);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.values[k]
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * self.values[k + 1]
            + (t3 - t2) * h * m1
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        -self.arrival.speed(s)
    }

    pub fn f_second(&self, s: f64) -> f64 {
        -self.arrival.speed_prime(s)
    }
}

/// Tabulates the warping of `arrival`.
pub fn build_warping(arrival: Arc<dyn ArrivalFunction>) -> Result<WarpedMetric> {
    WarpedMetric::build(arrival)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_admissible() {
        let reg = ArrivalRegistry::with_builtins();
        for name in reg.names() {
            let a = reg.get(&name).unwrap();
            let adm = a.check_admissible().unwrap();
            assert!(adm.integral.is_finite());
        }
    }

    #[test]
    fn warping_closed_forms() {
        let m = build_warping(Arc::new(LogArrival)).unwrap();
        for &s in &[0.1, 0.37, 0.8, 1.0] {
            assert!((m.f(s) + s * s / 2.0).abs() < 1e-12, "exp at {s}");
        }
        let m = build_warping(Arc::new(PolyArrival)).unwrap();
        for &s in &[0.1, 0.37, 0.8, 1.0] {
            assert!((m.f(s) + s.powi(3) / 3.0).abs() < 1e-12, "poly at {s}");
        }
    }

    #[test]
    fn sublog_warping_self_converges() {
        let coarse = WarpedMetric::build_with_tolerance(Arc::new(SublogArrival), 1e-9).unwrap();
        let fine = WarpedMetric::build_with_tolerance(Arc::new(SublogArrival), 1e-14).unwrap();
        for &s in &[0.2, 0.5, 1.0] {
            let oracle = adaptive_simpson(&|x: f64| x * x * (-1.0 / x).exp(), 0.0, s, 1e-15);
            assert!((coarse.f(s) - fine.f(s)).abs() < 1e-8);
            assert!((fine.f(s) + oracle).abs() < 1e-10);
            assert!(fine.f(s) < 0.0);
        }
    }

    #[test]
    fn inadmissible_arrivals_are_named() {
        // τ(s) = s − 1 stays bounded at 0.
        let s: Vec<f64> = (1..=64).map(|i| i as f64 / 64.0).collect();
        let tau: Vec<f64> = s.iter().map(|s| s - 1.0).collect();
        let t = TabulatedArrival::new("bounded", s.clone(), tau).unwrap();
        let err = (&t as &dyn ArrivalFunction).check_admissible().unwrap_err();
        assert!(err.to_string().contains("does not diverge"), "{err}");

        let tau: Vec<f64> = s.iter().map(|s| s.ln() + 0.5).collect();
        let t = TabulatedArrival::new("shifted", s, tau).unwrap();
        let err = (&t as &dyn ArrivalFunction).check_admissible().unwrap_err();
        assert!(err.to_string().contains("tau(1)"), "{err}");
    }

    #[test]
    fn tabulated_log_matches_builtin() {
        let s: Vec<f64> = (0..=200).map(|i| 1e-7f64.powf(1.0 - i as f64 / 200.0)).collect();
        let tau: Vec<f64> = s.iter().map(|s| s.ln()).collect();
        let csv: String = s
            .iter()
            .zip(&tau)
            .map(|(a, b)| format!("{a:.17e},{b:.17e}\n"))
            .collect();
        let t = TabulatedArrival::from_csv("custom", format!("s,tau\n{csv}").as_bytes()).unwrap();
        let adm = (&t as &dyn ArrivalFunction).check_admissible().unwrap();
        assert!((adm.integral - 0.5).abs() < 1e-4);
        assert!((t.tau_prime(0.3) - 1.0 / 0.3).abs() < 1e-2);
    }
}
