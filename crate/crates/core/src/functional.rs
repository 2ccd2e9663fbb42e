//! Elliptic integrands A(x, z, q) and the name-keyed registry used to pick
//! one at runtime.
//!
//! Every integrand supplies analytic partial derivatives up to second order.
//! The built-ins are the nonparametric length of latitude graphs over the
//! equator of the round sphere (`"sphere"`) and the length of graphs over the
//! waist geodesic of a warped surface of revolution (`"warped:<id>"`).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::arrival::{ArrivalRegistry, WarpedMetric};
use crate::error::{Error, Result};
use crate::grid::Field;

/// Graphicality margin for the sphere: fields must stay in |u| ≤ π/2 − 0.05.
pub const SPHERE_MARGIN: f64 = 0.05;

/// An integrand of a one-dimensional elliptic functional.
pub trait Integrand: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, x: f64, z: f64, q: f64) -> f64;
    fn a_z(&self, x: f64, z: f64, q: f64) -> f64;
    fn a_q(&self, x: f64, z: f64, q: f64) -> f64;
    fn a_zz(&self, x: f64, z: f64, q: f64) -> f64;
    fn a_zq(&self, x: f64, z: f64, q: f64) -> f64;
    fn a_qq(&self, x: f64, z: f64, q: f64) -> f64;

    /// Mixed partial ∂_x A_q; zero for x-independent integrands.
    fn a_qx(&self, _x: f64, _z: f64, _q: f64) -> f64 {
        0.0
    }

    /// Largest admissible |z|.
    fn domain_bound(&self) -> f64 {
        f64::INFINITY
    }
}

/// An integrand that passed the Legendre–Hadamard check.
#[derive(Clone)]
pub struct EllipticFunctional {
    integrand: Arc<dyn Integrand>,
    ellipticity: f64,
}

impl fmt::Debug for EllipticFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticFunctional")
            .field("name", &self.name())
            .field("ellipticity", &self.ellipticity)
            .finish()
    }
}

impl EllipticFunctional {
    const LH_SAMPLES: usize = 64;

    pub fn new(integrand: Arc<dyn Integrand>) -> Result<Self> {
        let c = (0..Self::LH_SAMPLES)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / Self::LH_SAMPLES as f64;
                integrand.a_qq(x, 0.0, 0.0)
            })
            .fold(f64::INFINITY, f64::min);
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "integrand `{}` fails Legendre–Hadamard ellipticity: min A_qq(x,0,0) = {c}",
                integrand.name()
            )));
        }
        Ok(Self {
            integrand,
            ellipticity: c,
        })
    }

    pub fn name(&self) -> &str {
        self.integrand.name()
    }

    pub fn integrand(&self) -> &dyn Integrand {
        self.integrand.as_ref()
    }

    /// Measured Legendre–Hadamard constant min_x A_qq(x, 0, 0).
    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    /// Errors when some value of `u` is outside the integrand's domain.
    pub fn check_domain(&self, u: &Field) -> Result<()> {
        let bound = self.integrand.domain_bound();
        match u
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| v.abs() > bound)
        {
            Some((index, &value)) => Err(Error::Domain {
                functional: self.name().to_string(),
                index,
                value,
            }),
            None => Ok(()),
        }
    }

    pub fn is_graphical(&self, u: &Field) -> bool {
        self.check_domain(u).is_ok()
    }
}

/// A(x, z, q) = sqrt(q² + cos² z): length of the latitude graph
/// φ = u(θ) in the round sphere.
#[derive(Debug, Clone, Copy, Default)]
pub struct SphereLength;

impl Integrand for SphereLength {
    fn name(&self) -> &str {
        "sphere"
    }

    fn value(&self, _x: f64, z: f64, q: f64) -> f64 {
        (q * q + z.cos().powi(2)).sqrt()
    }

    fn a_z(&self, x: f64, z: f64, q: f64) -> f64 {
        -z.cos() * z.sin() / self.value(x, z, q)
    }

    fn a_q(&self, x: f64, z: f64, q: f64) -> f64 {
        q / self.value(x, z, q)
    }

    fn a_zz(&self, x: f64, z: f64, q: f64) -> f64 {
        let w = self.value(x, z, q);
        let (s, c) = z.sin_cos();
        // d/dz[-sc/w] with dw/dz = -sc/w
        -(c * c - s * s) / w - (s * c).powi(2) / w.powi(3)
    }

    fn a_zq(&self, x: f64, z: f64, q: f64) -> f64 {
        let w = self.value(x, z, q);
        q * z.cos() * z.sin() / w.powi(3)
    }

    fn a_qq(&self, x: f64, z: f64, _q: f64) -> f64 {
        let w = self.value(x, z, _q);
        z.cos().powi(2) / w.powi(3)
    }

    fn domain_bound(&self) -> f64 {
        PI / 2.0 - SPHERE_MARGIN
    }
}

/// A(x, z, q) = sqrt(q² + e^{2f(z)}) for the warped metric ds² + e^{2f(s)} dθ²,
/// with f extended evenly across the waist s = 0.
pub struct WarpedLength {
    name: String,
    metric: WarpedMetric,
}

impl WarpedLength {
    pub const MARGIN: f64 = 0.05;

    pub fn new(metric: WarpedMetric) -> Self {
        Self {
            name: format!("warped:{}", metric.arrival_name()),
            metric,
        }
    }

    pub fn metric(&self) -> &WarpedMetric {
        &self.metric
    }

    // (e^f, d/dz e^f, d²/dz² e^f)
    fn warp(&self, z: f64) -> (f64, f64, f64) {
        let s = z.abs();
        let f = self.metric.f(s);
        let fp = z.signum() * self.metric.f_prime(s);
        let fpp = self.metric.f_second(s);
        let e = f.exp();
        (e, fp * e, (fpp + fp * fp) * e)
    }
}

impl Integrand for WarpedLength {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, _x: f64, z: f64, q: f64) -> f64 {
        let (e, _, _) = self.warp(z);
        (q * q + e * e).sqrt()
    }

    fn a_z(&self, _x: f64, z: f64, q: f64) -> f64 {
        let (e, ep, _) = self.warp(z);
        let w = (q * q + e * e).sqrt();
        e * ep / w
    }

    fn a_q(&self, x: f64, z: f64, q: f64) -> f64 {
        q / self.value(x, z, q)
    }

    fn a_zz(&self, _x: f64, z: f64, q: f64) -> f64 {
        let (e, ep, epp) = self.warp(z);
        let w = (q * q + e * e).sqrt();
        ((ep * ep + e * epp) * w * w - (e * ep).powi(2)) / w.powi(3)
    }

    fn a_zq(&self, _x: f64, z: f64, q: f64) -> f64 {
        let (e, ep, _) = self.warp(z);
        let w = (q * q + e * e).sqrt();
        -q * e * ep / w.powi(3)
    }

    fn a_qq(&self, _x: f64, z: f64, q: f64) -> f64 {
        let (e, _, _) = self.warp(z);
        let w = (q * q + e * e).sqrt();
        e * e / w.powi(3)
    }

    fn domain_bound(&self) -> f64 {
        1.0 - Self::MARGIN
    }
}

type Factory = Box<dyn Fn() -> Result<Arc<dyn Integrand>> + Send + Sync>;

/// Integrands registered by name.
pub struct FunctionalRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for FunctionalRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl FunctionalRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `"sphere"` plus one `"warped:<id>"` entry per built-in arrival function.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("sphere", || Ok(Arc::new(SphereLength) as Arc<dyn Integrand>));
        for id in ArrivalRegistry::with_builtins().names() {
            let key = format!("warped:{id}");
            reg.register(&key, move || {
                let arrival = ArrivalRegistry::with_builtins().get(&id)?;
                let metric = WarpedMetric::build(arrival)?;
                Ok(Arc::new(WarpedLength::new(metric)) as Arc<dyn Integrand>)
            });
        }
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Result<Arc<dyn Integrand>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<EllipticFunctional> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "functional",
            name: name.to_string(),
        })?;
        EllipticFunctional::new(factory()?)
    }
}

/// The nonparametric latitude-graph length functional on the round sphere.
pub fn builtin_sphere_functional() -> EllipticFunctional {
    EllipticFunctional::new(Arc::new(SphereLength)).expect("sphere integrand is elliptic")
}
