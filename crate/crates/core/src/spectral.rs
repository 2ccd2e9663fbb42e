//! Jacobi operator, eigensystem of −L, spectral projections and injections.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid};

/// A symmetric matrix acting on grid fields.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: PeriodicGrid,
    matrix: DMatrix<f64>,
}

impl DiscreteOperator {
    pub const SYMMETRY_TOL: f64 = 1e-12;

    pub fn new(grid: PeriodicGrid, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "operator is {}x{} on a grid of {} points",
                matrix.nrows(),
                matrix.ncols(),
                grid.n()
            )));
        }
        let scale = matrix.norm();
        let asymmetry = if scale > 0.0 {
            (&matrix - matrix.transpose()).norm() / scale
        } else {
            0.0
        };
        if asymmetry > Self::SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self { grid, matrix })
    }

    /// The pure second derivative ∂²_θ.
    pub fn second_derivative(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            matrix: grid.d2_matrix(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, u: &Field) -> Field {
        Field::from_vector(self.grid, &self.matrix * u.vector())
    }
}

/// Eigenvalues of −L in ascending order with L²-orthonormal eigenfields.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    grid: PeriodicGrid,
    lambdas: Vec<f64>,
    /// Column j holds φ_{j+1} at the grid points.
    phis: DMatrix<f64>,
    index: usize,
    nullity: usize,
    zero_tol: f64,
}

/// Full dense eigensolve of −L. `zero_tol` defaults to 10⁻⁶ · max|λ|.
pub fn eigendecompose(op: &DiscreteOperator, zero_tol: Option<f64>) -> Result<EigenSystem> {
    let grid = *op.grid();
    let n = grid.n();
    let neg = -op.matrix().clone();
    let eig = SymmetricEigen::try_new(neg, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let max_abs = eig.eigenvalues.amax();
    let zero_tol = zero_tol.unwrap_or(1e-6 * max_abs.max(1.0));
    if !(zero_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("zero_tol {zero_tol}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let norm = 1.0 / grid.spacing().sqrt();
    let mut lambdas = Vec::with_capacity(n);
    let mut phis = DMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        lambdas.push(eig.eigenvalues[k]);
        let mut v: DVector<f64> = eig.eigenvectors.column(k) * norm;
        // First entry of largest magnitude is made positive.
        let big = v.amax();
        let first = v
            .iter()
            .position(|x| x.abs() >= big * (1.0 - 1e-9))
            .unwrap_or(0);
        if v[first] < 0.0 {
            v.neg_mut();
        }
        phis.set_column(j, &v);
    }
    let index = lambdas.iter().filter(|&&l| l < -zero_tol).count();
    let nullity = lambdas.iter().filter(|&&l| l.abs() <= zero_tol).count();
    Ok(EigenSystem {
        grid,
        lambdas,
        phis,
        index,
        nullity,
        zero_tol,
    })
}

/// Mode coefficients u_j = ⟨u, φ_j⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoefficients(pub Vec<f64>);

impl ModeCoefficients {
    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }
}

impl EigenSystem {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Morse index I.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Nullity K.
    pub fn nullity(&self) -> usize {
        self.nullity
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Columns are the eigenfields φ_1, φ_2, … at the grid points.
    pub fn phi_matrix(&self) -> &DMatrix<f64> {
        &self.phis
    }

    /// φ_j with 1-based j.
    pub fn phi(&self, j: usize) -> Field {
        Field::from_vector(self.grid, self.phis.column(j - 1).into_owned())
    }

    /// λ_j with 1-based j.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambdas[j - 1]
    }

    /// First stable eigenvalue λ_{I+K+1}, if the grid has one.
    pub fn first_stable(&self) -> Option<f64> {
        self.lambdas.get(self.index + self.nullity).copied()
    }

    pub fn coefficients(&self, u: &Field) -> ModeCoefficients {
        let c = self.phis.tr_mul(u.vector()) * self.grid.spacing();
        ModeCoefficients(c.as_slice().to_vec())
    }

    pub fn synthesize(&self, c: &ModeCoefficients) -> Field {
        Field::from_vector(self.grid, &self.phis * DVector::from_column_slice(&c.0))
    }

    fn project_range(&self, u: &Field, range: std::ops::Range<usize>) -> Field {
        let mut out = DVector::zeros(self.grid.n());
        for j in range {
            let col = self.phis.column(j);
            let c = col.dot(u.vector()) * self.grid.spacing();
            out.axpy(c, &col, 1.0);
        }
        Field::from_vector(self.grid, out)
    }

    /// Π_-: orthogonal projection onto the unstable modes.
    pub fn project_unstable(&self, u: &Field) -> Field {
        self.project_range(u, 0..self.index)
    }

    /// Π_0: orthogonal projection onto the Jacobi fields.
    pub fn project_neutral(&self, u: &Field) -> Field {
        self.project_range(u, self.index..self.index + self.nullity)
    }

    pub fn project_stable(&self, u: &Field) -> Field {
        self.project_range(u, self.index + self.nullity..self.len())
    }

    /// Matrix of Π_0 acting on grid values.
    pub fn neutral_projector(&self) -> DMatrix<f64> {
        let k = self.phis.columns(self.index, self.nullity);
        (k * k.transpose()) * self.grid.spacing()
    }

    /// ι_-(a)(·, t) = Σ a_j e^{−λ_j t} φ_j for t ≤ 0.
    pub fn iota_minus(&self, a: &[f64], t: f64) -> Result<Field> {
        if t > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "iota_minus is defined for t <= 0, got {t}"
            )));
        }
        self.check_unstable_len(a)?;
        let mut out = DVector::zeros(self.grid.n());
        for (j, &aj) in a.iter().enumerate() {
            out.axpy(aj * (-self.lambdas[j] * t).exp(), &self.phis.column(j), 1.0);
        }
        Ok(Field::from_vector(self.grid, out))
    }

    /// ι_0(a) = Σ a_l φ_{I+l}.
    pub fn iota_zero(&self, a: &[f64]) -> Result<Field> {
        if a.len() != self.nullity {
            return Err(Error::InvalidArgument(format!(
                "expected {} neutral coordinates, got {}",
                self.nullity,
                a.len()
            )));
        }
        let mut out = DVector::zeros(self.grid.n());
        for (l, &al) in a.iter().enumerate() {
            out.axpy(al, &self.phis.column(self.index + l), 1.0);
        }
        Ok(Field::from_vector(self.grid, out))
    }

    /// Neutral coordinates ⟨u, φ_{I+l}⟩.
    pub fn neutral_coordinates(&self, u: &Field) -> Vec<f64> {
        (0..self.nullity)
            .map(|l| self.phis.column(self.index + l).dot(u.vector()) * self.grid.spacing())
            .collect()
    }

    pub(crate) fn check_unstable_len(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.index {
            return Err(Error::InvalidArgument(format!(
                "expected {} unstable coordinates, got {}",
                self.index,
                a.len()
            )));
        }
        Ok(())
    }

    /// CSV of (j, lambda_j).
    pub fn write_eigenvalues_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,lambda_j")?;
        for (j, l) in self.lambdas.iter().enumerate() {
            writeln!(w, "{},{:.16e}", j + 1, l)?;
        }
        Ok(())
    }

    /// CSV with one row per grid point: theta, phi_1, …, phi_n.
    pub fn write_eigenfunctions_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.len()).map(|j| format!("phi_{j}")).collect();
        writeln!(w, "theta,{}", header.join(","))?;
        for i in 0..self.grid.n() {
            let row: Vec<String> = self
                .phis
                .row(i)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(w, "{:.16e},{}", self.grid.point(i), row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::functional::builtin_sphere_functional;
    use crate::variational::gradient_split;

    fn sphere_es(n: usize) -> EigenSystem {
        let g = PeriodicGrid::circle(n).unwrap();
        let split = gradient_split(&builtin_sphere_functional(), g).unwrap();
        eigendecompose(split.linear(), None).unwrap()
    }

    #[test]
    fn sphere_ladder() {
        let es = sphere_es(64);
        let expected = [-1.0, 0.0, 0.0, 3.0, 3.0, 8.0, 8.0, 15.0, 15.0];
        for (l, e) in es.lambdas().iter().zip(expected) {
            assert!((l - e).abs() < 1e-2, "{l} vs {e}");
        }
        assert_eq!(es.index(), 1);
        assert_eq!(es.nullity(), 2);
    }

    #[test]
    fn flat_laplacian_ladder() {
        let g = PeriodicGrid::circle(64).unwrap();
        let es = eigendecompose(&DiscreteOperator::second_derivative(g), None).unwrap();
        let expected = [0.0, 1.0, 1.0, 4.0, 4.0];
        for (l, e) in es.lambdas().iter().zip(expected) {
            assert!((l - e).abs() < 1e-3);
        }
        assert_eq!((es.index(), es.nullity()), (0, 1));
    }

    #[test]
    fn eigen_invariants() {
        let es = sphere_es(48);
        let g = *es.grid();
        let l = gradient_split(&builtin_sphere_functional(), g).unwrap();
        for i in 1..=es.len() {
            let phi = es.phi(i);
            let lp = l.linear().apply(&phi);
            let resid = lp.add(&phi.scale(es.lambda(i))).sup_norm();
            assert!(resid < 1e-6 * es.lambda(i).abs().max(1.0));
            for j in i..=(i + 3).min(es.len()) {
                let ip = phi.inner(&es.phi(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-8);
            }
        }
        assert!(es.lambdas().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unstable_mode_is_normalized_constant() {
        let es = sphere_es(32);
        let c = 1.0 / (2.0 * PI).sqrt();
        assert!(es.phi(1).values().iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn projections_of_modes() {
        let es = sphere_es(32);
        let u = es.phi(1).scale(3.0).add(&es.phi(2).scale(2.0));
        assert!(es.project_unstable(&u).sub(&es.phi(1).scale(3.0)).sup_norm() < 1e-12);
        assert!(es.project_neutral(&u).sub(&es.phi(2).scale(2.0)).sup_norm() < 1e-12);
        assert!(es.project_neutral(&es.phi(1)).sup_norm() < 1e-12);
    }

    #[test]
    fn iota_minus_values() {
        let es = sphere_es(32);
        assert!(es.iota_minus(&[0.0], -3.0).unwrap().sup_norm() == 0.0);
        let f = es.iota_minus(&[1.0], -1.0).unwrap();
        let want = (-1.0f64).exp() / (2.0 * PI).sqrt();
        assert!(f.values().iter().all(|v| (v - want).abs() < 1e-12));
        for t in [-0.5, -2.0, -7.0] {
            let f = es.iota_minus(&[-0.4], t).unwrap();
            assert!((f.l2_norm() - 0.4 * t.exp()).abs() < 1e-12);
        }
        assert!(es.iota_minus(&[1.0], 0.5).is_err());
        assert!(es.iota_minus(&[1.0, 2.0], -1.0).is_err());
    }

    #[test]
    fn csv_export() {
        let es = sphere_es(16);
        let mut buf = Vec::new();
        es.write_eigenvalues_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("j,lambda_j\n1,-"));
        let mut buf = Vec::new();
        es.write_eigenfunctions_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 17);
    }
}
