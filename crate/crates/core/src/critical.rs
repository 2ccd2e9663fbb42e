//! Lyapunov–Schmidt reduction onto the kernel of the Jacobi operator.
//!
//! Ψ inverts f ↦ ℋ(f) + Π₀f near 0; 𝒜_fin(a) = 𝒜(Ψ(ι₀(a))) is the reduced
//! functional whose critical points parametrize nearby critical points.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::quadrature::log_log_slope;
use crate::spectral::EigenSystem;
use crate::variational::{evaluate, gradient, jacobian, GradientSplit};

pub const NEWTON_TOL: f64 = 1e-10;
pub const CRITICAL_TAG_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 30;

#[derive(Debug, Clone)]
pub struct PsiSolution {
    pub field: Field,
    /// ‖ℋ(f) + Π₀f − w‖ before each Newton step and after the last.
    pub residuals: Vec<f64>,
}

/// Newton iteration for ℋ(f) + Π₀f = w starting at `guess`.
pub fn psi_solve(split: &GradientSplit, es: &EigenSystem, w: &Field, guess: &Field) -> Result<PsiSolution> {
    psi_solve_with(split, es, &es.neutral_projector(), w, guess, NEWTON_TOL)
}

fn psi_solve_with(
    split: &GradientSplit,
    es: &EigenSystem,
    projector: &DMatrix<f64>,
    w: &Field,
    guess: &Field,
    tol: f64,
) -> Result<PsiSolution> {
    if w.grid() != es.grid() || guess.grid() != es.grid() {
        return Err(Error::InvalidArgument("fields and eigensystem grids differ".into()));
    }
    let functional = split.functional();
    let residual = |f: &Field| -> Result<Field> {
        let g = gradient(functional, f)?;
        Ok(g.add(&es.project_neutral(f)).sub(w))
    };
    let mut f = guess.clone();
    let mut r = residual(&f)?;
    let mut residuals = vec![r.l2_norm()];
    let mut stalled = 0;
    for _ in 0..MAX_NEWTON {
        let current = residuals[residuals.len() - 1];
        if current <= tol {
            return Ok(PsiSolution { field: f, residuals });
        }
        let jac = jacobian(functional, &f) + projector;
        let step = jac
            .lu()
            .solve(r.vector())
            .ok_or_else(|| Error::Singular("Newton matrix J + P0 is singular".into()))?;
        let next = Field::new(*f.grid(), (f.vector() - step).as_slice().to_vec())?;
        let next_r = residual(&next).map_err(|_| Error::NeighborhoodExceeded { residual: current })?;
        let next_norm = next_r.l2_norm();
        if !(next_norm < 0.5 * current) {
            stalled += 1;
            if stalled >= 2 || !next_norm.is_finite() {
                return Err(Error::NeighborhoodExceeded { residual: current.min(next_norm) });
            }
        } else {
            stalled = 0;
        }
        f = next;
        r = next_r;
        residuals.push(next_norm);
    }
    let last = residuals[residuals.len() - 1];
    if last <= tol {
        Ok(PsiSolution { field: f, residuals })
    } else {
        Err(Error::NeighborhoodExceeded { residual: last })
    }
}

/// a ↦ (Ψ(ι₀(a)), 𝒜_fin(a)).
#[derive(Debug, Clone)]
pub struct ReducedFunctional {
    split: GradientSplit,
    es: EigenSystem,
    projector: DMatrix<f64>,
    tol: f64,
}

impl ReducedFunctional {
    pub fn new(split: GradientSplit, es: EigenSystem) -> Result<Self> {
        if split.grid() != es.grid() {
            return Err(Error::InvalidArgument("split and eigensystem grids differ".into()));
        }
        let projector = es.neutral_projector();
        Ok(Self {
            split,
            es,
            projector,
            tol: NEWTON_TOL,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dimension(&self) -> usize {
        self.es.nullity()
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.es
    }

    pub fn split(&self) -> &GradientSplit {
        &self.split
    }

    pub fn psi(&self, a: &[f64]) -> Result<PsiSolution> {
        let w = self.es.iota_zero(a)?;
        psi_solve_with(&self.split, &self.es, &self.projector, &w, &w, self.tol)
    }

    pub fn a_fin(&self, a: &[f64]) -> Result<f64> {
        evaluate(self.split.functional(), &self.psi(a)?.field)
    }

    /// Central-difference gradient of 𝒜_fin with step `step`.
    pub fn gradient_fd(&self, a: &[f64], step: f64) -> Result<Vec<f64>> {
        (0..a.len())
            .map(|l| {
                let mut up = a.to_vec();
                let mut down = a.to_vec();
                up[l] += step;
                down[l] -= step;
                Ok((self.a_fin(&up)? - self.a_fin(&down)?) / (2.0 * step))
            })
            .collect()
    }
}

pub fn a_fin(reduced: &ReducedFunctional, a: &[f64]) -> Result<f64> {
    reduced.a_fin(a)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalSample {
    pub a: Vec<f64>,
    pub a_fin: f64,
    pub gradient_norm: f64,
    pub critical: bool,
    #[serde(skip)]
    pub field: Option<Field>,
}

/// Ψ(ι₀(a)) with its gradient norm, tagged critical below 10⁻⁸.
pub fn critical_set_sample(reduced: &ReducedFunctional, a: &[f64]) -> Result<CriticalSample> {
    let field = reduced.psi(a)?.field;
    let functional = reduced.split.functional();
    let gradient_norm = gradient(functional, &field)?.l2_norm();
    Ok(CriticalSample {
        a: a.to_vec(),
        a_fin: evaluate(functional, &field)?,
        gradient_norm,
        critical: gradient_norm < CRITICAL_TAG_TOL,
        field: Some(field),
    })
}

/// Samples a per_axis^K lattice on the box [−half_width, half_width]^K.
pub fn sample_critical_set(reduced: &ReducedFunctional, half_width: f64, per_axis: usize) -> Result<Vec<CriticalSample>> {
    let k = reduced.dimension();
    if per_axis < 1 {
        return Err(Error::InvalidArgument("need at least one sample per axis".into()));
    }
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| {
            if per_axis == 1 {
                0.0
            } else {
                -half_width + 2.0 * half_width * i as f64 / (per_axis - 1) as f64
            }
        })
        .collect();
    let total = per_axis.pow(k as u32);
    (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let a: Vec<f64> = (0..k)
                .map(|_| {
                    let v = axis[idx % per_axis];
                    idx /= per_axis;
                    v
                })
                .collect();
            critical_set_sample(reduced, &a).map(|mut s| {
                s.field = None;
                s
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionReport {
    pub coordinates: Vec<f64>,
    pub scales: Vec<f64>,
    /// |𝒜(f_t) − 𝒜(0)| per scale.
    pub energy_defects: Vec<f64>,
    /// ‖f_t/t − φ‖ per scale.
    pub deviations: Vec<f64>,
    pub fitted_order: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub directions: Vec<DirectionReport>,
    pub max_energy_defect: f64,
    pub min_fitted_order: f64,
}

/// Builds f_t = Ψ(ι₀(t·â)) for each Jacobi field φ (â its neutral
/// coordinates) and measures 𝒜(f_t) − 𝒜(0) and the convergence f_t/t → φ.
pub fn check_integrability(
    reduced: &ReducedFunctional,
    directions: &[Field],
    scales: &[f64],
) -> Result<IntegrabilityReport> {
    if scales.len() < 2 || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive scales".into()));
    }
    let es = &reduced.es;
    let functional = reduced.split.functional();
    let base = evaluate(functional, &Field::zeros(*es.grid()))?;
    let reports = directions
        .iter()
        .map(|phi| {
            let norm = phi.l2_norm();
            let outside = phi.sub(&es.project_neutral(phi)).l2_norm();
            if !(norm > 0.0) || outside > 1e-6 * norm {
                return Err(Error::InvalidArgument(
                    "directions must be nonzero Jacobi fields".into(),
                ));
            }
            let coordinates = es.neutral_coordinates(phi);
            let mut energy_defects = Vec::new();
            let mut deviations = Vec::new();
            for &t in scales {
                let a: Vec<f64> = coordinates.iter().map(|c| t * c).collect();
                let f = reduced.psi(&a)?.field;
                energy_defects.push((evaluate(functional, &f)? - base).abs());
                deviations.push(f.scale(1.0 / t).sub(phi).l2_norm());
            }
            let fitted_order = log_log_slope(scales, &deviations);
            Ok(DirectionReport {
                coordinates,
                scales: scales.to_vec(),
                energy_defects,
                deviations,
                fitted_order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegrabilityReport {
        max_energy_defect: reports
            .iter()
            .flat_map(|r| r.energy_defects.iter().copied())
            .fold(0.0, f64::max),
        min_fitted_order: reports
            .iter()
            .map(|r| r.fitted_order)
            .fold(f64::INFINITY, f64::min),
        directions: reports,
    })
}
