//! Nonlocal operators on grid functions: the truncated jump operator, its
//! compensated variant with a near-field second difference, and the exact
//! Fourier multiplier `e^{-t|ξ|^α}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::measures::{truncate_and_atomize, AtomMeasure, LevyMeasureSpec};
use crate::reduce::pairwise_sum_by;

const PAR_THRESHOLD: usize = 4096;

/// A linear operator acting on grid functions of a fixed grid.
pub trait NonlocalOperator: Sync {
    fn grid(&self) -> &Grid;

    /// Writes `L f` into `out`; both slices have the grid length.
    fn apply_slice(&self, f: &[f64], out: &mut [f64]);

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; f.values().len()];
        self.apply_slice(f.values(), &mut out);
        GridFunction::new(*self.grid(), out)
    }
}

/// Offsets of paired atoms `±z`, stored once per pair.
#[derive(Debug, Clone)]
struct Stencil {
    grid: Grid,
    offsets: Vec<Vec<i64>>,
    weights: Vec<f64>,
}

impl Stencil {
    fn from_atoms(atoms: &AtomMeasure) -> Self {
        let half: Vec<_> = atoms.half_atoms().collect();
        Self {
            grid: *atoms.grid(),
            offsets: half.iter().map(|a| a.offset.clone()).collect(),
            weights: half.iter().map(|a| a.weight).collect(),
        }
    }

    /// `out[x] += Σ_k w_k (f(x+z_k) + f(x−z_k) − 2 f(x))`.
    fn accumulate(&self, f: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let dims = g.dims();
        let m = g.points() as i64;
        let run = |start: usize, chunk: &mut [f64]| {
            let mut idx = vec![0usize; dims];
            for (i, o) in chunk.iter_mut().enumerate() {
                let x = start + i;
                g.unflatten(x, &mut idx);
                let fx = f[x];
                let mut acc = 0.0;
                for (off, &w) in self.offsets.iter().zip(&self.weights) {
                    let mut plus = 0usize;
                    let mut minus = 0usize;
                    for axis in 0..dims {
                        let i = idx[axis] as i64;
                        plus = plus * g.points() + (i + off[axis]).rem_euclid(m) as usize;
                        minus = minus * g.points() + (i - off[axis]).rem_euclid(m) as usize;
                    }
                    acc += w * ((f[plus] - fx) + (f[minus] - fx));
                }
                *o += acc;
            }
        };
        if out.len() >= PAR_THRESHOLD {
            let chunk = 1024;
            out.par_chunks_mut(chunk).enumerate().for_each(|(c, s)| run(c * chunk, s));
        } else {
            run(0, out);
        }
    }
}

/// `L f(x) = Σ_k w_k (f(x + z_k) − f(x))` for an even bounded atom measure.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    atoms: AtomMeasure,
    stencil: Stencil,
}

impl TruncatedOperator {
    pub fn new(atoms: AtomMeasure) -> Self {
        let stencil = Stencil::from_atoms(&atoms);
        Self { atoms, stencil }
    }

    pub fn atoms(&self) -> &AtomMeasure {
        &self.atoms
    }
}

impl NonlocalOperator for TruncatedOperator {
    fn grid(&self) -> &Grid {
        self.atoms.grid()
    }

    fn apply_slice(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.stencil.accumulate(f, out);
    }
}

pub fn apply_truncated(op: &TruncatedOperator, f: &GridFunction) -> Result<GridFunction> {
    op.apply(f)
}

/// Truncated atoms plus a second-difference stand-in for the mass near the
/// origin and an optional damping term for the dropped far tail.
///
/// The near-field term is `Σ_i c_i (f(x+h e_i) − 2 f(x) + f(x−h e_i))` with
/// `c_i = ∫_{|z|≤r} z_i² dμ / (2h²)`, whose symbol `−4 c_i sin²(ξ_i h / 2)`
/// tends to `−ξ_i² ∫_{|z|≤r} z_i² dμ / 2`. The far-field term is
/// `−μ(|z| > cutoff) f(x)`, the non-oscillatory part of the tail symbol.
#[derive(Debug, Clone)]
pub struct CompensatedOperator {
    truncated: TruncatedOperator,
    near_field: Vec<f64>,
    far_field: f64,
}

impl CompensatedOperator {
    pub fn from_parts(truncated: TruncatedOperator, near_field: Vec<f64>) -> Result<Self> {
        let dims = truncated.grid().dims();
        if near_field.len() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: near_field.len() });
        }
        if near_field.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Domain("near-field coefficients must be finite and nonnegative".into()));
        }
        Ok(Self { truncated, near_field, far_field: 0.0 })
    }

    /// Atomizes `mu` on `r < |z| ≤ tail_cutoff` and fixes the near-field
    /// coefficients from the second moments of `mu` on `|z| ≤ r`.
    pub fn new(mu: &LevyMeasureSpec, grid: &Grid, r: f64, tail_cutoff: f64) -> Result<Self> {
        let atoms = truncate_and_atomize(mu, grid, r, tail_cutoff)?;
        let h2 = grid.spacing().powi(2);
        let near = mu.near_second_moments(r)?.into_iter().map(|m| m / (2.0 * h2)).collect();
        Self::from_parts(TruncatedOperator::new(atoms), near)
    }

    /// Adds `−μ(|z| > cutoff) f(x)`. Constants are then no longer in the kernel.
    pub fn with_far_field_closure(mut self) -> Self {
        self.far_field = self.truncated.atoms().discarded_tail();
        self
    }

    pub fn near_field(&self) -> &[f64] {
        &self.near_field
    }

    pub fn truncated(&self) -> &TruncatedOperator {
        &self.truncated
    }
}

impl NonlocalOperator for CompensatedOperator {
    fn grid(&self) -> &Grid {
        self.truncated.grid()
    }

    fn apply_slice(&self, f: &[f64], out: &mut [f64]) {
        self.truncated.apply_slice(f, out);
        let g = *self.grid();
        for (axis, &c) in self.near_field.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut e = vec![0i64; g.dims()];
            e[axis] = 1;
            let plus = g.shift_table(&e);
            e[axis] = -1;
            let minus = g.shift_table(&e);
            for x in 0..f.len() {
                out[x] += c * ((f[plus[x]] - f[x]) + (f[minus[x]] - f[x]));
            }
        }
        if self.far_field != 0.0 {
            for (o, v) in out.iter_mut().zip(f) {
                *o -= self.far_field * v;
            }
        }
    }
}

pub fn apply_compensated(op: &CompensatedOperator, f: &GridFunction) -> Result<GridFunction> {
    op.apply(f)
}

/// Discrete angular frequencies `πk/R`, `k ∈ [−M/2, M/2)`, in FFT order.
pub fn frequencies(grid: &Grid) -> Vec<f64> {
    let m = grid.points() as i64;
    let base = std::f64::consts::PI / grid.halfwidth();
    (0..m).map(|i| if i < (m + 1) / 2 { i } else { i - m } as f64 * base).collect()
}

/// In-place N-dimensional FFT over the row-major layout of `grid`;
/// the inverse is unnormalized.
pub(crate) fn fft_nd(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let m = grid.points();
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    let total = grid.len();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for axis in 0..grid.dims() {
        let stride = m.pow((grid.dims() - 1 - axis) as u32);
        for start in 0..total {
            // first element of each line along `axis`
            if (start / stride) % m != 0 {
                continue;
            }
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[start + k * stride];
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[start + k * stride] = *v;
            }
        }
    }
}

/// `|ξ|` for every mode of the flattened spectrum.
pub(crate) fn mode_magnitudes(grid: &Grid) -> Vec<f64> {
    let freqs = frequencies(grid);
    let mut idx = vec![0; grid.dims()];
    (0..grid.len())
        .map(|k| {
            grid.unflatten(k, &mut idx);
            idx.iter().map(|&i| freqs[i] * freqs[i]).sum::<f64>().sqrt()
        })
        .collect()
}

/// Applies the multiplier `e^{−t|ξ|^α}`, the solution operator of the linear
/// fractional heat equation. `α = 2` gives the classical heat semigroup.
pub fn fourier_fractional(alpha: f64, t: f64, f: &GridFunction) -> Result<GridFunction> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("multiplier order must lie in (0,2], got {alpha}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    let grid = *f.grid();
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&grid, &mut data, false);
    let scale = 1.0 / grid.len() as f64;
    for (d, xi) in data.iter_mut().zip(mode_magnitudes(&grid)) {
        *d *= (-t * xi.powf(alpha)).exp() * scale;
    }
    fft_nd(&grid, &mut data, true);
    GridFunction::new(grid, data.into_iter().map(|c| c.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorReport {
    pub samples: usize,
    pub seed: u64,
    /// Largest `|⟨g, Lf⟩ − ⟨f, Lg⟩|`.
    pub symmetry_defect: f64,
    /// Largest `|mass(L f)|`.
    pub row_sum_defect: f64,
    /// Largest `max(0, ⟨f, Lf⟩)`.
    pub dissipativity_defect: f64,
    /// Largest absolute size of the compared quantities (`h^N Σ |g||Lf|` and alike).
    pub scale: f64,
}

impl OperatorReport {
    pub fn worst_relative(&self) -> f64 {
        let worst = self.symmetry_defect.max(self.row_sum_defect).max(self.dissipativity_defect);
        if worst == 0.0 {
            0.0
        } else {
            worst / self.scale
        }
    }
}

/// Random-probe check of symmetry, zero row sums, and nonpositivity.
pub fn operator_report(op: &dyn NonlocalOperator, samples: usize, seed: u64) -> Result<OperatorReport> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let grid = *op.grid();
    let vol = grid.cell_volume();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OperatorReport {
        samples,
        seed,
        symmetry_defect: 0.0,
        row_sum_defect: 0.0,
        dissipativity_defect: 0.0,
        scale: 0.0,
    };
    let mut lf = vec![0.0; n];
    let mut lg = vec![0.0; n];
    for _ in 0..samples {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        op.apply_slice(&f, &mut lf);
        op.apply_slice(&g, &mut lg);
        let g_lf = vol * pairwise_sum_by(n, |i| g[i] * lf[i]);
        let f_lg = vol * pairwise_sum_by(n, |i| f[i] * lg[i]);
        let f_lf = vol * pairwise_sum_by(n, |i| f[i] * lf[i]);
        let mass = vol * pairwise_sum_by(n, |i| lf[i]);
        let abs_g_lf = vol * pairwise_sum_by(n, |i| (g[i] * lf[i]).abs());
        let abs_f_lg = vol * pairwise_sum_by(n, |i| (f[i] * lg[i]).abs());
        let abs_f_lf = vol * pairwise_sum_by(n, |i| (f[i] * lf[i]).abs());
        let abs_mass = vol * pairwise_sum_by(n, |i| lf[i].abs());
        report.symmetry_defect = report.symmetry_defect.max((g_lf - f_lg).abs());
        report.row_sum_defect = report.row_sum_defect.max(mass.abs());
        report.dissipativity_defect = report.dissipativity_defect.max(f_lf.max(0.0));
        report.scale = report.scale.max(abs_g_lf).max(abs_f_lg).max(abs_f_lf).max(abs_mass);
    }
    Ok(report)
}
