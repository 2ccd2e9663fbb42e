//! Time-sampled fields on a uniform time grid.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Ok,
    GraphicalityLost,
    BlownUp,
}

/// Fields u(·, t_k) stored column by column (`values[(i, k)] = u(θ_i, t_k)`).
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    grid: PeriodicGrid,
    times: Vec<f64>,
    values: DMatrix<f64>,
    status: FlowStatus,
}

/// Uniform grid −T, −T + dt, …, 0.
pub fn backward_time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && dt > 0.0 && dt <= t_max) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= T_max, got dt = {dt}, T_max = {t_max}"
        )));
    }
    let steps = (t_max / dt).round() as usize;
    if ((steps as f64) * dt - t_max).abs() > 1e-9 * t_max {
        return Err(Error::InvalidArgument(format!(
            "T_max = {t_max} is not a multiple of dt = {dt}"
        )));
    }
    Ok((0..=steps)
        .map(|k| -t_max + k as f64 * (t_max / steps as f64))
        .collect())
}

impl FlowTrajectory {
    pub fn new(
        grid: PeriodicGrid,
        times: Vec<f64>,
        values: DMatrix<f64>,
        status: FlowStatus,
    ) -> Result<Self> {
        if values.nrows() != grid.n() || values.ncols() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                grid.n(),
                times.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if !(dt > 0.0)
                || times
                    .windows(2)
                    .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
            {
                return Err(Error::InvalidArgument(
                    "trajectory times must be increasing and uniform".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            times,
            values,
            status,
        })
    }

    pub fn from_fn(grid: PeriodicGrid, times: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = DMatrix::from_fn(grid.n(), times.len(), |i, k| f(grid.point(i), times[k]));
        Self::new(grid, times, values, FlowStatus::Ok)
    }

    pub fn from_fields(fields: &[Field], times: Vec<f64>, status: FlowStatus) -> Result<Self> {
        let grid = *fields
            .first()
            .ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?
            .grid();
        let cols: Vec<DVector<f64>> = fields.iter().map(|f| f.vector().clone()).collect();
        Self::new(grid, times, DMatrix::from_columns(&cols), status)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn status(&self) -> FlowStatus {
        self.status
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let n = self.grid.n();
        &self.values.as_slice()[k * n..(k + 1) * n]
    }

    pub fn field(&self, k: usize) -> Field {
        Field::from_vector(self.grid, DVector::from_column_slice(self.column(k)))
    }

    pub fn last(&self) -> Field {
        self.field(self.len() - 1)
    }

    pub fn sub(&self, other: &FlowTrajectory) -> Result<FlowTrajectory> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::InvalidArgument("trajectory shapes differ".into()));
        }
        Self::new(
            self.grid,
            self.times.clone(),
            &self.values - &other.values,
            self.status,
        )
    }

    pub fn scale(&self, s: f64) -> FlowTrajectory {
        Self {
            values: &self.values * s,
            ..self.clone()
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    /// Restriction to the samples with t in [t_a, t_b].
    pub fn window(&self, t_a: f64, t_b: f64) -> Result<FlowTrajectory> {
        let eps = 1e-9 * self.dt().max(1e-12);
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.times[k] >= t_a - eps && self.times[k] <= t_b + eps)
            .collect();
        if idx.is_empty() {
            return Err(Error::Window(format!("no samples in [{t_a}, {t_b}]")));
        }
        let (k0, k1) = (idx[0], idx[idx.len() - 1]);
        Self::new(
            self.grid,
            self.times[k0..=k1].to_vec(),
            self.values.columns(k0, k1 - k0 + 1).into_owned(),
            self.status,
        )
    }

    /// CSV with columns t, theta_0 … theta_{n−1}, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.grid.n()).map(|i| format!("theta_{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self.column(k).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{:.16e},{}", self.times[k], row.join(","))?;
        }
        Ok(())
    }
}
