//! Uniform periodic grids on `[-R, R)^N` and real-valued grid functions.
//!
//! Nodes are cell centred, `x_i = -R + (i + 1/2) h` with `h = 2R / M`, and
//! values are flattened row-major (last axis fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::pairwise_sum_by;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    points: usize,
    halfwidth: f64,
}

impl Grid {
    pub fn new(dims: usize, points: usize, halfwidth: f64) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Domain("grid dimension must be positive".into()));
        }
        if points == 0 {
            return Err(Error::Domain("points per axis must be positive".into()));
        }
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(Error::Domain(format!("halfwidth must be positive, got {halfwidth}")));
        }
        let total = (points as u128).checked_pow(dims as u32);
        if total.map_or(true, |t| t > usize::MAX as u128 / 8) {
            return Err(Error::Domain("grid too large".into()));
        }
        Ok(Self { dims, points, halfwidth })
    }

    /// Grid with given spacing, `R = M h / 2`.
    pub fn with_spacing(dims: usize, points: usize, spacing: f64) -> Result<Self> {
        Self::new(dims, points, 0.5 * points as f64 * spacing)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.halfwidth / self.points as f64
    }

    /// Cell volume `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.halfwidth + (i as f64 + 0.5) * self.spacing()
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dims).rev() {
            out[axis] = flat % self.points;
            flat /= self.points;
        }
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    /// Node position of a flat index.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dims];
        self.unflatten(flat, &mut idx);
        idx.iter().map(|&i| self.coordinate(i)).collect()
    }

    /// Flat index of `flat + offset` with periodic wrap-around.
    pub fn offset_index(&self, flat: usize, offset: &[i64]) -> usize {
        let m = self.points as i64;
        let mut rem = flat;
        let mut stride = 1usize;
        let mut out = 0usize;
        for axis in (0..self.dims).rev() {
            let i = (rem % self.points) as i64;
            rem /= self.points;
            let j = (i + offset[axis]).rem_euclid(m) as usize;
            out += j * stride;
            stride *= self.points;
        }
        out
    }

    /// Flat-index table for a fixed offset, `table[x] = x + offset`.
    pub fn shift_table(&self, offset: &[i64]) -> Vec<usize> {
        (0..self.len()).map(|x| self.offset_index(x, offset)).collect()
    }

    pub(crate) fn check_offset(&self, offset: &[i64]) -> Result<()> {
        if offset.len() != self.dims {
            return Err(Error::DimensionMismatch { expected: self.dims, got: offset.len() });
        }
        Ok(())
    }
}

/// Real values on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut idx = vec![0; grid.dims()];
        let mut pos = vec![0.0; grid.dims()];
        let values = (0..grid.len())
            .map(|flat| {
                grid.unflatten(flat, &mut idx);
                for (p, &i) in pos.iter_mut().zip(&idx) {
                    *p = grid.coordinate(i);
                }
                f(&pos)
            })
            .collect();
        Self::new(grid, values)
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `(Σ |f|^p h^N)^{1/p}`, or `max |f|` for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    pub fn mass(&self) -> f64 {
        mass(self)
    }

    /// `h^N Σ f g`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let s = pairwise_sum_by(self.values.len(), |i| self.values[i] * other.values[i]);
        Ok(s * self.grid.cell_volume())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("L^p exponent must satisfy p >= 1, got {p}")));
    }
    let peak = f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if p.is_infinite() || peak == 0.0 {
        return Ok(peak);
    }
    // scaled by the peak so large p cannot overflow
    let s = pairwise_sum_by(f.values.len(), |i| (f.values[i].abs() / peak).powf(p));
    Ok(peak * (s * f.grid.cell_volume()).powf(1.0 / p))
}

pub fn mass(f: &GridFunction) -> f64 {
    pairwise_sum_by(f.values.len(), |i| f.values[i]) * f.grid.cell_volume()
}

/// Periodic circular shift: the value at node `x` moves to `x + offset`.
pub fn shift(f: &GridFunction, offset: &[i64]) -> Result<GridFunction> {
    f.grid.check_offset(offset)?;
    let neg: Vec<i64> = offset.iter().map(|o| -o).collect();
    let values = (0..f.grid.len())
        .map(|x| f.values[f.grid.offset_index(x, &neg)])
        .collect();
    Ok(GridFunction::from_values_unchecked(f.grid, values))
}
