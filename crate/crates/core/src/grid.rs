//! Uniform periodic grids, grid fields and the 4th-order centered stencils
//! used by every discrete operator in the crate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Uniform grid on a circle of circumference `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < Self::MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} points, got {n}",
                Self::MIN_POINTS
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    /// `n` points on the standard circle of length 2π.
    pub fn circle(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    /// Geodesic distance between two points of the circle.
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.length);
        d.min(self.length - d)
    }

    /// L² inner product by the periodic trapezoid rule.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.spacing() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// 4th-order centered first derivative.
    pub fn d1(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (12.0 * self.spacing());
        (0..n)
            .map(|i| {
                let m2 = u[(i + n - 2) % n];
                let m1 = u[(i + n - 1) % n];
                let p1 = u[(i + 1) % n];
                let p2 = u[(i + 2) % n];
                c * (m2 - 8.0 * m1 + 8.0 * p1 - p2)
            })
            .collect()
    }

    /// 4th-order centered second derivative (compact 5-point stencil).
    pub fn d2(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h = self.spacing();
        let c = 1.0 / (12.0 * h * h);
        (0..n)
            .map(|i| {
                let m2 = u[(i + n - 2) % n];
                let m1 = u[(i + n - 1) % n];
                let p1 = u[(i + 1) % n];
                let p2 = u[(i + 2) % n];
                c * (-m2 + 16.0 * m1 - 30.0 * u[i] + 16.0 * p1 - p2)
            })
            .collect()
    }

    /// Dense matrix of [`Self::d1`].
    pub fn d1_matrix(&self) -> DMatrix<f64> {
        let c = 1.0 / (12.0 * self.spacing());
        self.circulant(&[(-2, c), (-1, -8.0 * c), (1, 8.0 * c), (2, -c)])
    }

    /// Dense matrix of [`Self::d2`].
    pub fn d2_matrix(&self) -> DMatrix<f64> {
        let h = self.spacing();
        let c = 1.0 / (12.0 * h * h);
        self.circulant(&[
            (-2, -c),
            (-1, 16.0 * c),
            (0, -30.0 * c),
            (1, 16.0 * c),
            (2, -c),
        ])
    }

    fn circulant(&self, taps: &[(isize, f64)]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for &(off, w) in taps {
                m[(i, self.wrap(i as isize + off))] += w;
            }
        }
        m
    }
}

/// Real values on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    values: DVector<f64>,
}

impl Field {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field value at index {i} is not finite"
            )));
        }
        Ok(Self {
            grid,
            values: DVector::from_vec(values),
        })
    }

    pub(crate) fn from_vector(grid: PeriodicGrid, values: DVector<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::from_vector(grid, DVector::zeros(grid.n()))
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self::from_vector(grid, DVector::from_element(grid.n(), c))
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vector(grid, DVector::from_iterator(grid.n(), grid.points().map(f)))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn inner(&self, other: &Field) -> f64 {
        self.grid.inner(self.values(), other.values())
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(self.values())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    pub fn d1(&self) -> Field {
        Self::from_vector(self.grid, DVector::from_vec(self.grid.d1(self.values())))
    }

    pub fn d2(&self) -> Field {
        Self::from_vector(self.grid, DVector::from_vec(self.grid.d2(self.values())))
    }

    /// Discrete C² norm: sup|u| + sup|u'| + sup|u''|.
    pub fn c2_norm(&self) -> f64 {
        self.sup_norm() + self.d1().sup_norm() + self.d2().sup_norm()
    }

    /// Discrete C¹ norm: sup|u| + sup|u'|.
    pub fn c1_norm(&self) -> f64 {
        self.sup_norm() + self.d1().sup_norm()
    }

    pub fn scale(&self, s: f64) -> Field {
        Self::from_vector(self.grid, &self.values * s)
    }

    pub fn add(&self, other: &Field) -> Field {
        Self::from_vector(self.grid, &self.values + &other.values)
    }

    pub fn sub(&self, other: &Field) -> Field {
        Self::from_vector(self.grid, &self.values - &other.values)
    }

    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        Self::from_vector(self.grid, &self.values + &other.values * s)
    }

    /// Cyclic shift by whole grid points: `out[i] = u[i - k]`.
    pub fn shifted(&self, k: isize) -> Field {
        let n = self.grid.n();
        let v = (0..n)
            .map(|i| self.values[self.grid.wrap(i as isize - k)])
            .collect::<Vec<_>>();
        Self::from_vector(self.grid, DVector::from_vec(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(PeriodicGrid::circle(7).is_err());
        assert!(PeriodicGrid::circle(8).is_ok());
        assert!(PeriodicGrid::new(16, -1.0).is_err());
    }

    #[test]
    fn stencils_match_matrices() {
        let g = PeriodicGrid::circle(24).unwrap();
        let u = Field::from_fn(g, |t| (3.0 * t).sin() + 0.2 * t.cos());
        let m1 = g.d1_matrix() * u.vector();
        let m2 = g.d2_matrix() * u.vector();
        for i in 0..g.n() {
            assert!((m1[i] - u.d1().values()[i]).abs() < 1e-12);
            assert!((m2[i] - u.d2().values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn fourth_order_derivatives() {
        let err = |n: usize| {
            let g = PeriodicGrid::circle(n).unwrap();
            let u = Field::from_fn(g, |t| (2.0 * t).sin());
            let exact = Field::from_fn(g, |t| -4.0 * (2.0 * t).sin());
            u.d2().sub(&exact).sup_norm()
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn trapezoid_is_exact_for_trig_polynomials() {
        let g = PeriodicGrid::circle(16).unwrap();
        let u = Field::from_fn(g, |t| t.sin());
        assert!((u.l2_norm().powi(2) - PI).abs() < 1e-13);
        assert!((g.distance(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-14);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let g = PeriodicGrid::circle(8).unwrap();
        assert!(Field::new(g, vec![f64::NAN; 8]).is_err());
        assert!(Field::new(g, vec![0.0; 7]).is_err());
    }
}
