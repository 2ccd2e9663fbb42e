//! Discrete functional, its negative L² gradient ℋ, and the split
//! ℋ(u) = L·u + remainder(u) about the critical point u = 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functional::EllipticFunctional;
use crate::grid::{Field, PeriodicGrid};
use crate::spectral::DiscreteOperator;

/// 𝒜(u) = ∫ A(θ, u, u_θ) dθ by the periodic trapezoid rule.
pub fn evaluate(functional: &EllipticFunctional, u: &Field) -> Result<f64> {
    functional.check_domain(u)?;
    Ok(evaluate_unchecked(functional, u))
}

pub(crate) fn evaluate_unchecked(functional: &EllipticFunctional, u: &Field) -> f64 {
    let g = u.grid();
    let a = functional.integrand();
    let p = g.d1(u.values());
    g.spacing()
        * u.values()
            .iter()
            .zip(&p)
            .enumerate()
            .map(|(i, (&z, &q))| a.value(g.point(i), z, q))
            .sum::<f64>()
}

/// ℋ(u) = ∂_θ[A_q] − A_z, expanded as A_qq u'' + A_qz u' + A_qx − A_z.
pub fn gradient(functional: &EllipticFunctional, u: &Field) -> Result<Field> {
    functional.check_domain(u)?;
    Ok(gradient_unchecked(functional, u))
}

pub(crate) fn gradient_unchecked(functional: &EllipticFunctional, u: &Field) -> Field {
    let g = *u.grid();
    Field::from_vector(g, DVector::from_vec(gradient_values(functional, &g, u.values())))
}

pub(crate) fn gradient_values(functional: &EllipticFunctional, g: &PeriodicGrid, u: &[f64]) -> Vec<f64> {
    let a = functional.integrand();
    let p = g.d1(u);
    let s = g.d2(u);
    (0..g.n())
        .map(|i| {
            let (x, z, q) = (g.point(i), u[i], p[i]);
            a.a_qq(x, z, q) * s[i] + a.a_zq(x, z, q) * q + a.a_qx(x, z, q) - a.a_z(x, z, q)
        })
        .collect()
}

/// Jacobian of the discrete gradient at `u`:
/// J = diag(c₂)·D₂ + diag(c₁)·D₁ + diag(c₀).
///
/// Third derivatives of A enter only through c₁, c₀ away from u = 0 and are
/// taken as central differences of the analytic second derivatives.
pub fn jacobian(functional: &EllipticFunctional, u: &Field) -> DMatrix<f64> {
    let g = *u.grid();
    let a = functional.integrand();
    let p = g.d1(u.values());
    let s = g.d2(u.values());
    let d1 = g.d1_matrix();
    let d2 = g.d2_matrix();
    let n = g.n();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        let (x, z, q) = (g.point(i), u.values()[i], p[i]);
        let eps_z = 1e-5 * (1.0 + z.abs());
        let eps_q = 1e-5 * (1.0 + q.abs());
        let dz = |f: &dyn Fn(f64, f64, f64) -> f64| {
            (f(x, z + eps_z, q) - f(x, z - eps_z, q)) / (2.0 * eps_z)
        };
        let dq = |f: &dyn Fn(f64, f64, f64) -> f64| {
            (f(x, z, q + eps_q) - f(x, z, q - eps_q)) / (2.0 * eps_q)
        };
        let qq = |x, z, q| a.a_qq(x, z, q);
        let zq = |x, z, q| a.a_zq(x, z, q);
        let qx = |x, z, q| a.a_qx(x, z, q);

        let c2 = a.a_qq(x, z, q);
        let (c1, c0) = if z == 0.0 && q == 0.0 && s[i] == 0.0 {
            // q·∂A_zq and s·∂A_qq vanish; A_zq cancels against itself.
            (dq(&qx), dz(&qx) - a.a_zz(x, z, q))
        } else {
            (
                dq(&qq) * s[i] + dq(&zq) * q + dq(&qx),
                dz(&qq) * s[i] + dz(&zq) * q + dz(&qx) - a.a_zz(x, z, q),
            )
        };
        for k in 0..n {
            j[(i, k)] = c2 * d2[(i, k)] + c1 * d1[(i, k)];
        }
        j[(i, i)] += c0;
    }
    j
}

/// ℋ(u) = L·u + remainder(u), with L the discrete linearization at 0.
#[derive(Debug, Clone)]
pub struct GradientSplit {
    functional: EllipticFunctional,
    linear: DiscreteOperator,
}

impl GradientSplit {
    pub const CRITICAL_TOL: f64 = 1e-10;

    pub fn functional(&self) -> &EllipticFunctional {
        &self.functional
    }

    pub fn linear(&self) -> &DiscreteOperator {
        &self.linear
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.linear.grid()
    }

    /// ⟨𝒩, ∇²u⟩ + 𝒬 evaluated as ℋ(u) − L·u.
    pub fn remainder(&self, u: &Field) -> Field {
        gradient_unchecked(&self.functional, u).sub(&self.linear.apply(u))
    }

    pub(crate) fn remainder_values(&self, u: &[f64]) -> DVector<f64> {
        let g = self.grid();
        let h = DVector::from_vec(gradient_values(&self.functional, g, u));
        h - self.linear.matrix() * DVector::from_column_slice(u)
    }
}

/// Builds the split after checking that 0 is a critical point on `grid`.
pub fn gradient_split(functional: &EllipticFunctional, grid: PeriodicGrid) -> Result<GradientSplit> {
    let zero = Field::zeros(grid);
    let h0 = gradient_unchecked(functional, &zero);
    let norm = h0.l2_norm();
    if !(norm <= GradientSplit::CRITICAL_TOL) {
        return Err(Error::NotCritical { norm });
    }
    let linear = DiscreteOperator::new(grid, jacobian(functional, &zero))?;
    Ok(GradientSplit {
        functional: functional.clone(),
        linear,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::functional::builtin_sphere_functional;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::circle(n).unwrap()
    }

    #[test]
    fn equator_length() {
        let f = builtin_sphere_functional();
        let v = evaluate(&f, &Field::zeros(grid(64))).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn constant_latitude_length() {
        let f = builtin_sphere_functional();
        let v = evaluate(&f, &Field::constant(grid(64), 0.3)).unwrap();
        assert!((v - 2.0 * PI * 0.3f64.cos()).abs() < 1e-13);
    }

    #[test]
    fn tilted_great_circle_length() {
        let f = builtin_sphere_functional();
        let u = Field::from_fn(grid(128), |t| (0.2f64.tan() * t.sin()).atan());
        let v = evaluate(&f, &u).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-7, "{}", v - 2.0 * PI);
    }

    #[test]
    fn non_graphical_fields_are_domain_errors() {
        let f = builtin_sphere_functional();
        let u = Field::constant(grid(16), 1.55);
        assert!(matches!(evaluate(&f, &u), Err(Error::Domain { .. })));
        assert!(matches!(gradient(&f, &u), Err(Error::Domain { .. })));
    }

    #[test]
    fn gradient_of_zero_is_exactly_zero() {
        let f = builtin_sphere_functional();
        let h = gradient(&f, &Field::zeros(grid(32))).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_constant_is_sine() {
        let f = builtin_sphere_functional();
        for &c in &[0.1, -0.5, 1.2] {
            let h = gradient(&f, &Field::constant(grid(32), c)).unwrap();
            for v in h.values() {
                assert!((v - c.sin()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tilted_great_circles_are_critical() {
        let f = builtin_sphere_functional();
        let norm = |n: usize| {
            let u = Field::from_fn(grid(n), |t| (0.3f64.tan() * (t - 0.4).sin()).atan());
            gradient(&f, &u).unwrap().sup_norm()
        };
        assert!(norm(128) < 1e-6);
        assert!(norm(64) / norm(128) > 12.0);
    }

    #[test]
    fn sphere_linearization_is_d2_plus_identity() {
        let f = builtin_sphere_functional();
        let g = grid(32);
        let split = gradient_split(&f, g).unwrap();
        let expected = g.d2_matrix() + DMatrix::identity(32, 32);
        assert!((split.linear().matrix() - expected).amax() < 1e-12);
    }

    #[test]
    fn remainder_vanishes_at_zero_and_reconstructs() {
        let f = builtin_sphere_functional();
        let g = grid(48);
        let split = gradient_split(&f, g).unwrap();
        assert_eq!(split.remainder(&Field::zeros(g)).sup_norm(), 0.0);
        let u = Field::from_fn(g, |t| 0.2 * (2.0 * t).sin() + 0.1 * t.cos());
        let total = gradient(&f, &u).unwrap();
        let recon = split.linear().apply(&u).add(&split.remainder(&u));
        assert!(total.sub(&recon).sup_norm() <= 4.0 * f64::EPSILON * total.sup_norm().max(1.0));
    }

    #[test]
    fn jacobian_matches_directional_difference() {
        let f = builtin_sphere_functional();
        let g = grid(40);
        let u = Field::from_fn(g, |t| 0.3 * t.sin() + 0.1 * (3.0 * t).cos());
        let v = Field::from_fn(g, |t| (2.0 * t).cos() - 0.5 * t.sin());
        let j = jacobian(&f, &u);
        let jv = &j * v.vector();
        let s = 1e-6;
        let fd = gradient(&f, &u.axpy(s, &v))
            .unwrap()
            .sub(&gradient(&f, &u.axpy(-s, &v)).unwrap())
            .scale(0.5 / s);
        let err = (jv - fd.vector()).amax();
        assert!(err < 1e-6 * fd.sup_norm().max(1.0), "{err}");
    }

    #[test]
    fn not_critical_is_reported() {
        use crate::functional::{EllipticFunctional, Integrand};
        use std::sync::Arc;
        struct Tilted;
        impl Integrand for Tilted {
            fn name(&self) -> &str {
                "tilted"
            }
            fn value(&self, _: f64, z: f64, q: f64) -> f64 {
                0.5 * q * q + z
            }
            fn a_z(&self, _: f64, _: f64, _: f64) -> f64 {
                1.0
            }
            fn a_q(&self, _: f64, _: f64, q: f64) -> f64 {
                q
            }
            fn a_zz(&self, _: f64, _: f64, _: f64) -> f64 {
                0.0
            }
            fn a_zq(&self, _: f64, _: f64, _: f64) -> f64 {
                0.0
            }
            fn a_qq(&self, _: f64, _: f64, _: f64) -> f64 {
                1.0
            }
        }
        let f = EllipticFunctional::new(Arc::new(Tilted)).unwrap();
        assert!(matches!(
            gradient_split(&f, grid(16)),
            Err(Error::NotCritical { .. })
        ));
    }
}
