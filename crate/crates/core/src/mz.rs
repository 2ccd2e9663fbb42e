//! Nonnegative triples (x, y, z) obeying
//!
//! |x′| ≤ ε(x+y+z),   y′ + y ≤ ε(x+z),   z′ − z ≥ −ε(x+y),
//!
//! and the trichotomy they must satisfy: y ≤ 2ε(x+z) always, and either
//! z ≤ 8εx up to some time or x ≤ 8ε(2+8ε)z throughout.
//!
//! Trajectories are realized by coefficient generators α, β, γ ∈ [−1, 1]:
//! x′ = εα(x+y+z), y′ = −y + εβ(x+z), z′ = z − εγ(x+y). Contributions that
//! push a component down are damped by (own component)/(x+y+z), which keeps
//! every component nonnegative while staying inside the inequalities.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Coefficients (α, β, γ) as functions of s.
pub trait CoefficientGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn coefficients(&self, s: f64) -> [f64; 3];
}

/// Fixed coefficients.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCoefficients(pub [f64; 3]);

impl CoefficientGenerator for ConstantCoefficients {
    fn name(&self) -> &str {
        "constant"
    }

    fn coefficients(&self, _s: f64) -> [f64; 3] {
        self.0
    }
}

/// Independent draws on each unit interval of [−S, 0].
#[derive(Debug, Clone)]
pub struct PiecewiseCoefficients {
    name: &'static str,
    start: f64,
    values: Vec<[f64; 3]>,
}

impl PiecewiseCoefficients {
    /// Uniform draws from [−1, 1].
    pub fn uniform(rng: &mut ChaCha8Rng, horizon: f64) -> Self {
        let count = horizon.ceil() as usize + 1;
        let values = (0..count)
            .map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
            .collect();
        Self {
            name: "uniform",
            start: -horizon,
            values,
        }
    }

    /// Random signs ±1, saturating the inequalities.
    pub fn extremal(rng: &mut ChaCha8Rng, horizon: f64) -> Self {
        let count = horizon.ceil() as usize + 1;
        let sign = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let values = (0..count).map(|_| [sign(rng), sign(rng), sign(rng)]).collect();
        Self {
            name: "extremal",
            start: -horizon,
            values,
        }
    }
}

impl CoefficientGenerator for PiecewiseCoefficients {
    fn name(&self) -> &str {
        self.name
    }

    fn coefficients(&self, s: f64) -> [f64; 3] {
        let i = ((s - self.start).floor().max(0.0) as usize).min(self.values.len() - 1);
        self.values[i]
    }
}

type GeneratorFactory = Box<dyn Fn(&mut ChaCha8Rng, f64) -> Arc<dyn CoefficientGenerator> + Send + Sync>;

/// Named generator families, each drawing from a seeded stream.
pub struct GeneratorRegistry {
    factories: BTreeMap<String, GeneratorFactory>,
}

impl GeneratorRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("uniform", |rng, h| Arc::new(PiecewiseCoefficients::uniform(rng, h)));
        r.register("extremal", |rng, h| Arc::new(PiecewiseCoefficients::extremal(rng, h)));
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&mut ChaCha8Rng, f64) -> Arc<dyn CoefficientGenerator> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn make(&self, name: &str, rng: &mut ChaCha8Rng, horizon: f64) -> Result<Arc<dyn CoefficientGenerator>> {
        self.factories
            .get(name)
            .map(|f| f(rng, horizon))
            .ok_or_else(|| Error::UnknownName {
                kind: "coefficient generator",
                name: name.to_string(),
            })
    }
}

#[derive(Clone)]
pub struct MZSystem {
    pub eps: f64,
    pub generator: Arc<dyn CoefficientGenerator>,
}

impl MZSystem {
    pub fn new(eps: f64, generator: Arc<dyn CoefficientGenerator>) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.05) {
            return Err(Error::InvalidArgument(format!("eps = {eps} not in (0, 0.05]")));
        }
        Ok(Self { eps, generator })
    }

    fn rhs(&self, [alpha, beta, gamma]: [f64; 3], [x, y, z]: [f64; 3]) -> [f64; 3] {
        let eps = self.eps;
        let total = x + y + z;
        let damp = |own: f64| if total > 0.0 { own / total } else { 0.0 };
        let dx = if alpha >= 0.0 {
            eps * alpha * total
        } else {
            eps * alpha * total * damp(x)
        };
        let dy = if beta >= 0.0 {
            -y + eps * beta * (x + z)
        } else {
            -y + eps * beta * (x + z) * damp(y)
        };
        let dz = if gamma > 0.0 {
            z - eps * gamma * (x + y) * damp(z)
        } else {
            z - eps * gamma * (x + y)
        };
        [dx, dy, dz]
    }

    /// Largest violation of the three inequalities at one state, relative to
    /// x + y + z.
    fn violation(&self, c: [f64; 3], u: [f64; 3]) -> f64 {
        let [x, y, z] = u;
        let [dx, dy, dz] = self.rhs(c, u);
        let eps = self.eps;
        let total = x + y + z;
        let v = (dx.abs() - eps * total)
            .max(dy + y - eps * (x + z))
            .max(-(dz - z) - eps * (x + y));
        if total > 0.0 {
            v / total
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MZTrajectory {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub eps: f64,
    /// Number of components reset to 0 after a step.
    pub clamps: usize,
    /// Largest relative inequality residual at the stored states.
    pub max_violation: f64,
    /// min y over the earliest tenth of the window.
    pub early_min_y: f64,
}

pub const RESIDUAL_TOL: f64 = 1e-8;

/// RK4 from s = −S to 0 with coefficients frozen at each step's midpoint.
pub fn integrate_mz(sys: &MZSystem, seed_state: [f64; 3], horizon: f64, ds: f64) -> Result<MZTrajectory> {
    if !(horizon >= 50.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} below 50")));
    }
    if !(ds > 0.0 && ds <= 1.0) {
        return Err(Error::InvalidArgument(format!("step {ds} not in (0, 1]")));
    }
    if seed_state.iter().any(|&v| !(v >= 0.0)) || seed_state.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument("seed state must be nonnegative and nonzero".into()));
    }
    let steps = (horizon / ds).round() as usize;
    let h = horizon / steps as f64;
    let mut s = Vec::with_capacity(steps + 1);
    let (mut xs, mut ys, mut zs) = (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1));
    let mut u = seed_state;
    let mut clamps = 0;
    let mut max_violation = 0.0f64;
    for k in 0..=steps {
        let sk = -horizon + k as f64 * h;
        s.push(sk);
        xs.push(u[0]);
        ys.push(u[1]);
        zs.push(u[2]);
        if k == steps {
            break;
        }
        let c = sys.generator.coefficients(sk + 0.5 * h);
        max_violation = max_violation.max(sys.violation(c, u));
        let add = |a: [f64; 3], b: [f64; 3], w: f64| [a[0] + w * b[0], a[1] + w * b[1], a[2] + w * b[2]];
        let k1 = sys.rhs(c, u);
        let k2 = sys.rhs(c, add(u, k1, 0.5 * h));
        let k3 = sys.rhs(c, add(u, k2, 0.5 * h));
        let k4 = sys.rhs(c, add(u, k3, h));
        for i in 0..3 {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if u[i] < 0.0 {
                u[i] = 0.0;
                clamps += 1;
            }
        }
    }
    if max_violation > RESIDUAL_TOL {
        let worst = (0..steps)
            .max_by(|&a, &b| {
                let va = sys.violation(sys.generator.coefficients(s[a] + 0.5 * h), [xs[a], ys[a], zs[a]]);
                let vb = sys.violation(sys.generator.coefficients(s[b] + 0.5 * h), [xs[b], ys[b], zs[b]]);
                va.total_cmp(&vb)
            })
            .unwrap_or(0);
        return Err(Error::GeneratorBug {
            s: s[worst],
            violation: max_violation,
        });
    }
    let early = ((steps + 1) / 10).max(1);
    let early_min_y = ys[..early].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MZTrajectory {
        s,
        x: xs,
        y: ys,
        z: zs,
        eps: sys.eps,
        clamps,
        max_violation,
        early_min_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrichotomyCase {
    /// z ≤ 8εx up to a time s_*.
    A,
    /// x ≤ 8ε(2+8ε)z after the transient.
    B,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrichotomyReport {
    pub case: TrichotomyCase,
    /// y ≤ 2ε(x+z) after the transient.
    pub neutral_bound_holds: bool,
    /// max y/(x+z) after the transient, in units of ε.
    pub neutral_ratio: f64,
    /// The other case fails on the full window.
    pub exactly_one: bool,
    /// Latest time with z < 8εx (case A).
    pub s_star: Option<f64>,
    /// max x/z after the transient (case B).
    pub case_b_constant: Option<f64>,
}

pub const TRANSIENT: f64 = 5.0;

pub fn case_b_bound(eps: f64) -> f64 {
    8.0 * eps * (2.0 + 8.0 * eps)
}

/// Classifies a trajectory; neither case holding is a counterexample alarm.
pub fn verify_trichotomy(traj: &MZTrajectory) -> Result<TrichotomyReport> {
    let eps = traj.eps;
    let n = traj.s.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let start = traj.s[0] + TRANSIENT;
    let post: Vec<usize> = (0..n).filter(|&k| traj.s[k] >= start - 1e-12).collect();
    let slack = 1e-9;
    let neutral_ratio = post
        .iter()
        .map(|&k| {
            let d = traj.x[k] + traj.z[k];
            if d > 0.0 {
                traj.y[k] / (eps * d)
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max);
    let neutral_bound_holds = neutral_ratio <= 2.0 * (1.0 + slack);

    let star = (0..n).rev().find(|&k| traj.z[k] < 8.0 * eps * traj.x[k]);
    let a_propagates = star.is_some_and(|ks| {
        (0..=ks).all(|k| traj.z[k] <= 8.0 * eps * traj.x[k] * (1.0 + slack))
    });
    let bound = case_b_bound(eps);
    let ratio = |k: usize| {
        if traj.z[k] > 0.0 {
            traj.x[k] / traj.z[k]
        } else if traj.x[k] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let post_constant = post.iter().map(|&k| ratio(k)).fold(0.0f64, f64::max);
    let full_constant = (0..n).map(ratio).fold(0.0f64, f64::max);
    let b_post = post_constant <= bound * (1.0 + slack);
    let b_full = full_constant <= bound * (1.0 + slack);

    let (case, exactly_one) = if star.is_some() {
        if !a_propagates {
            return Err(Error::CounterexampleAlarm(format!(
                "z < 8 eps x at s = {:.4} but not on all earlier samples",
                traj.s[star.unwrap_or(0)]
            )));
        }
        (TrichotomyCase::A, !b_full)
    } else if b_post {
        (TrichotomyCase::B, true)
    } else {
        return Err(Error::CounterexampleAlarm(format!(
            "z >= 8 eps x everywhere but max x/z = {post_constant:.4e} exceeds {bound:.4e} after the transient"
        )));
    };
    Ok(TrichotomyReport {
        case,
        neutral_bound_holds,
        neutral_ratio,
        exactly_one,
        s_star: star.map(|k| traj.s[k]),
        case_b_constant: (case == TrichotomyCase::B).then_some(post_constant),
    })
}

/// Seed state with x0, z0 ~ U(0,1) and y0 ~ U(0, ε(x0+z0)).
pub fn random_seed_state(rng: &mut ChaCha8Rng, eps: f64) -> [f64; 3] {
    let x0: f64 = rng.gen_range(0.0..1.0);
    let z0: f64 = rng.gen_range(0.0..1.0);
    let y0 = rng.gen_range(0.0..1.0) * eps * (x0 + z0);
    [x0, y0, z0]
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub case: Option<TrichotomyCase>,
    pub neutral_ratio: f64,
    pub case_b_constant: Option<f64>,
    pub clamps: usize,
    pub alarm: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub eps: f64,
    pub horizon: f64,
    pub trials: usize,
    pub neutral_bound_passes: usize,
    pub exactly_one_passes: usize,
    pub case_a: usize,
    pub case_b: usize,
    pub alarms: usize,
    pub max_case_b_constant: f64,
    pub case_b_bound: f64,
    pub records: Vec<TrialRecord>,
}

impl MonteCarloReport {
    pub fn all_pass(&self) -> bool {
        self.alarms == 0 && self.neutral_bound_passes == self.trials && self.exactly_one_passes == self.trials
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub eps: f64,
    pub horizon: f64,
    pub ds: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub generator: String,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            horizon: 50.0,
            ds: 0.01,
            trials: 1000,
            base_seed: 0,
            generator: "uniform".into(),
        }
    }
}

/// Trial i uses seed base_seed + i for both its state and its generator.
pub fn monte_carlo(cfg: &MonteCarloConfig, registry: &GeneratorRegistry) -> Result<MonteCarloReport> {
    registry.make(&cfg.generator, &mut ChaCha8Rng::seed_from_u64(0), cfg.horizon)?;
    let records = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = random_seed_state(&mut rng, cfg.eps);
            let generator = registry.make(&cfg.generator, &mut rng, cfg.horizon)?;
            let traj = integrate_mz(&MZSystem::new(cfg.eps, generator)?, state, cfg.horizon, cfg.ds)?;
            Ok(match verify_trichotomy(&traj) {
                Ok(rep) => (
                    TrialRecord {
                        seed,
                        case: Some(rep.case),
                        neutral_ratio: rep.neutral_ratio,
                        case_b_constant: rep.case_b_constant,
                        clamps: traj.clamps,
                        alarm: None,
                    },
                    rep.neutral_bound_holds,
                    rep.exactly_one,
                ),
                Err(Error::CounterexampleAlarm(msg)) => (
                    TrialRecord {
                        seed,
                        case: None,
                        neutral_ratio: f64::NAN,
                        case_b_constant: None,
                        clamps: traj.clamps,
                        alarm: Some(msg),
                    },
                    false,
                    false,
                ),
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |f: &dyn Fn(&(TrialRecord, bool, bool)) -> bool| records.iter().filter(|r| f(r)).count();
    Ok(MonteCarloReport {
        eps: cfg.eps,
        horizon: cfg.horizon,
        trials: cfg.trials,
        neutral_bound_passes: count(&|r| r.1),
        exactly_one_passes: count(&|r| r.2),
        case_a: count(&|r| r.0.case == Some(TrichotomyCase::A)),
        case_b: count(&|r| r.0.case == Some(TrichotomyCase::B)),
        alarms: count(&|r| r.0.alarm.is_some()),
        max_case_b_constant: records
            .iter()
            .filter_map(|r| r.0.case_b_constant)
            .fold(0.0, f64::max),
        case_b_bound: case_b_bound(cfg.eps),
        records: records.into_iter().map(|r| r.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(c: [f64; 3]) -> MZSystem {
        MZSystem::new(0.01, Arc::new(ConstantCoefficients(c))).unwrap()
    }

    #[test]
    fn decoupled_growth_of_x() {
        let traj = integrate_mz(&constant([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0], 50.0, 0.01).unwrap();
        for (k, &s) in traj.s.iter().enumerate() {
            assert!((traj.x[k] - (0.01 * (s + 50.0)).exp()).abs() < 1e-12);
            assert_eq!(traj.y[k], 0.0);
            assert_eq!(traj.z[k], 0.0);
        }
        let rep = verify_trichotomy(&traj).unwrap();
        assert_eq!(rep.case, TrichotomyCase::A);
        assert!(rep.neutral_bound_holds && rep.exactly_one);
    }

    #[test]
    fn decoupled_growth_of_z() {
        let traj = integrate_mz(&constant([0.0, 0.0, 0.0]), [0.0, 0.0, 1.0], 50.0, 0.01).unwrap();
        let last = traj.z.len() - 1;
        assert!((traj.z[last] / 50f64.exp() - 1.0).abs() < 1e-8);
        let rep = verify_trichotomy(&traj).unwrap();
        assert_eq!(rep.case, TrichotomyCase::B);
        assert_eq!(rep.case_b_constant, Some(0.0));
    }

    #[test]
    fn random_systems_respect_the_inequalities() {
        let registry = GeneratorRegistry::with_builtins();
        for name in registry.names() {
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let state = random_seed_state(&mut rng, 0.01);
                let generator = registry.make(&name, &mut rng, 50.0).unwrap();
                let traj = integrate_mz(&MZSystem::new(0.01, generator).unwrap(), state, 50.0, 0.01).unwrap();
                assert!(traj.max_violation <= RESIDUAL_TOL);
                assert!(traj.x.iter().chain(&traj.y).chain(&traj.z).all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn small_monte_carlo_is_deterministic() {
        let cfg = MonteCarloConfig {
            trials: 40,
            base_seed: 7,
            ..MonteCarloConfig::default()
        };
        let registry = GeneratorRegistry::with_builtins();
        let a = monte_carlo(&cfg, &registry).unwrap();
        let b = monte_carlo(&cfg, &registry).unwrap();
        assert!(a.all_pass());
        assert_eq!(a.case_a + a.case_b, 40);
        assert_eq!(a.max_case_b_constant, b.max_case_b_constant);
        assert!(a.max_case_b_constant <= 1.1 * a.case_b_bound);
    }

    #[test]
    fn violating_generator_is_a_bug() {
        struct Broken;
        impl CoefficientGenerator for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn coefficients(&self, _s: f64) -> [f64; 3] {
                [2.0, 0.0, 0.0]
            }
        }
        let sys = MZSystem::new(0.01, Arc::new(Broken)).unwrap();
        assert!(matches!(integrate_mz(&sys, [1.0, 0.0, 1.0], 50.0, 0.1), Err(Error::GeneratorBug { .. })));
        assert!(MZSystem::new(0.1, Arc::new(Broken)).is_err());
        assert!(matches!(
            GeneratorRegistry::with_builtins().make("nope", &mut ChaCha8Rng::seed_from_u64(0), 50.0),
            Err(Error::UnknownName { .. })
        ));
    }
}
