//! Nonlocal energy forms, elliptic and parabolic seminorms, the Fourier-side
//! fractional seminorm, and the mollify / truncate / mollify density construction.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::measures::{fractional_constant, AtomMeasure, KernelField};
use crate::operators::{fft_nd, mode_magnitudes, NonlocalOperator, TruncatedOperator};
use crate::quadrature::{bump, bump_profile};
use crate::reduce::{pairwise_sum, pairwise_sum_by};

/// A jump kernel `λ(x, dz)` given by grid offsets and per-node weights.
pub trait EnergyKernel: Sync {
    fn grid(&self) -> &Grid;
    fn offset_count(&self) -> usize;
    fn offset(&self, k: usize) -> &[i64];
    fn weight(&self, k: usize, x: usize) -> f64;
}

impl EnergyKernel for AtomMeasure {
    fn grid(&self) -> &Grid {
        AtomMeasure::grid(self)
    }

    fn offset_count(&self) -> usize {
        self.atoms().len()
    }

    fn offset(&self, k: usize) -> &[i64] {
        &self.atoms()[k].offset
    }

    fn weight(&self, k: usize, _x: usize) -> f64 {
        self.atoms()[k].weight
    }
}

impl EnergyKernel for KernelField {
    fn grid(&self) -> &Grid {
        KernelField::grid(self)
    }

    fn offset_count(&self) -> usize {
        self.offsets().len()
    }

    fn offset(&self, k: usize) -> &[i64] {
        &self.offsets()[k]
    }

    fn weight(&self, k: usize, x: usize) -> f64 {
        self.weights()[k][x]
    }
}

/// Per-node sums `Σ_k w_k(x) term(Δ_k f(x), Δ_k g(x))`.
fn node_sums(
    kernel: &dyn EnergyKernel,
    f: &[f64],
    g: &[f64],
    term: impl Fn(f64, f64) -> f64 + Sync,
) -> Vec<f64> {
    let grid = *kernel.grid();
    let dims = grid.dims();
    let m = grid.points() as i64;
    (0..grid.len())
        .into_par_iter()
        .with_min_len(1024)
        .map_init(
            || vec![0usize; dims],
            |idx, x| {
                grid.unflatten(x, idx);
                let mut acc = 0.0;
                for k in 0..kernel.offset_count() {
                    let off = kernel.offset(k);
                    let mut y = 0usize;
                    for axis in 0..dims {
                        y = y * grid.points() + (idx[axis] as i64 + off[axis]).rem_euclid(m) as usize;
                    }
                    acc += kernel.weight(k, x) * term(f[y] - f[x], g[y] - g[x]);
                }
                acc
            },
        )
        .collect()
}

fn check_pair(kernel: &dyn EnergyKernel, f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid() != kernel.grid() || g.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `𝓔[f, g] = ½ h^N Σ_x Σ_k w_k(x) (f(x+z_k) − f(x)) (g(x+z_k) − g(x))`.
pub fn bilinear(kernel: &dyn EnergyKernel, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_pair(kernel, f, g)?;
    let sums = node_sums(kernel, f.values(), g.values(), |a, b| a * b);
    Ok(0.5 * kernel.grid().cell_volume() * pairwise_sum(&sums))
}

/// `½ h^N Σ Σ w |Δf| |Δg|`, the natural size against which `𝓔[f,g]` is compared.
pub fn bilinear_magnitude(kernel: &dyn EnergyKernel, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_pair(kernel, f, g)?;
    let sums = node_sums(kernel, f.values(), g.values(), |a, b| (a * b).abs());
    Ok(0.5 * kernel.grid().cell_volume() * pairwise_sum(&sums))
}

/// `½ h^N Σ_x Σ_k w_k(x) (Δ_k q Δ_k r − (Δ_k s)²)`, evaluated pointwise so that
/// a pointwise nonnegative integrand gives a nonnegative sum.
pub fn chain_gap(kernel: &dyn EnergyKernel, q: &[f64], r: &[f64], s: &[f64]) -> Result<f64> {
    let n = kernel.grid().len();
    if q.len() != n || r.len() != n || s.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.len().min(r.len()).min(s.len()) });
    }
    let grid = *kernel.grid();
    let dims = grid.dims();
    let m = grid.points() as i64;
    let sums: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map_init(
            || vec![0usize; dims],
            |idx, x| {
                grid.unflatten(x, idx);
                let mut acc = 0.0;
                for k in 0..kernel.offset_count() {
                    let off = kernel.offset(k);
                    let mut y = 0usize;
                    for axis in 0..dims {
                        y = y * grid.points() + (idx[axis] as i64 + off[axis]).rem_euclid(m) as usize;
                    }
                    let ds = s[y] - s[x];
                    acc += kernel.weight(k, x) * ((q[y] - q[x]) * (r[y] - r[x]) - ds * ds);
                }
                acc
            },
        )
        .collect();
    Ok(0.5 * grid.cell_volume() * pairwise_sum(&sums))
}

/// Which kind of kernel produced an [`EnergyValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyForm {
    Measure,
    Kernel,
}

/// Squared seminorm `|f|²_E = 𝓔[f, f]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub value: f64,
    pub form: EnergyForm,
}

pub fn energy_of_measure(mu: &AtomMeasure, f: &GridFunction) -> Result<EnergyValue> {
    Ok(EnergyValue { value: bilinear(mu, f, f)?, form: EnergyForm::Measure })
}

pub fn energy_of_kernel(kernel: &KernelField, f: &GridFunction) -> Result<EnergyValue> {
    Ok(EnergyValue { value: bilinear(kernel, f, f)?, form: EnergyForm::Kernel })
}

/// `|f|_E`.
pub fn seminorm(kernel: &dyn EnergyKernel, f: &GridFunction) -> Result<f64> {
    Ok(bilinear(kernel, f, f)?.max(0.0).sqrt())
}

/// Defect of the discrete integration-by-parts identity `h^N Σ g L f = −𝓔[f, g]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummationByParts {
    pub pairing: f64,
    pub energy: f64,
    pub defect: f64,
    pub relative: f64,
}

pub fn summation_by_parts(op: &TruncatedOperator, f: &GridFunction, g: &GridFunction) -> Result<SummationByParts> {
    let lf = op.apply(f)?;
    let pairing = g.inner(&lf)?;
    let energy = bilinear(op.atoms(), f, g)?;
    let scale = bilinear_magnitude(op.atoms(), f, g)?;
    let defect = (pairing + energy).abs();
    let relative = if defect == 0.0 { 0.0 } else { defect / scale };
    Ok(SummationByParts { pairing, energy, defect, relative })
}

/// Frames on uniformly spaced times `t_k = k Δt`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunction {
    grid: Grid,
    dt: f64,
    frames: Vec<GridFunction>,
}

impl PathFunction {
    pub fn uniform(grid: Grid, dt: f64, frames: Vec<GridFunction>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidPath("at least one frame is required".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidPath(format!("time step must be positive, got {dt}")));
        }
        if frames.iter().any(|f| *f.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, dt, frames })
    }

    /// Builds a path from explicit times, which must start at 0 and be uniformly spaced.
    pub fn new(grid: Grid, times: &[f64], frames: Vec<GridFunction>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::InvalidPath(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidPath("times must start at 0".into()));
        }
        if times.len() == 1 {
            return Self::uniform(grid, 1.0, frames);
        }
        let dt = times[1] - times[0];
        let total = times[times.len() - 1];
        for (k, &t) in times.iter().enumerate() {
            if !((t - k as f64 * dt).abs() <= 1e-9 * total.abs().max(dt)) {
                return Err(Error::InvalidPath(format!("time {t} at index {k} breaks uniform spacing {dt}")));
            }
        }
        Self::uniform(grid, dt, frames)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of intervals `K`.
    pub fn intervals(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.intervals() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len()).map(|k| self.time(k)).collect()
    }

    pub fn frames(&self) -> &[GridFunction] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<GridFunction> {
        self.frames
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let frames = self.frames.iter().map(|fr| fr.map(&f)).collect::<Result<_>>()?;
        Self::uniform(self.grid, self.dt, frames)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.frames.len() != other.frames.len() || self.dt != other.dt {
            return Err(Error::InvalidPath("paths have different time grids".into()));
        }
        Ok(())
    }

    /// `(Σ_{k<K} Δt ‖f_k‖²₂)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let k = self.intervals();
        let s = pairwise_sum_by(k, |j| {
            let n = self.frames[j].lp_norm(2.0).expect("p = 2 is valid");
            n * n
        });
        (self.dt * s).sqrt()
    }

    /// Largest `|f|` over all frames.
    pub fn sup_norm(&self) -> f64 {
        self.frames.iter().map(|f| f.lp_norm(f64::INFINITY).expect("valid")).fold(0.0, f64::max)
    }

    /// `(Σ_{k<K} Δt ‖f_k − g_k‖²₂)^{1/2}`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let diff = Self::uniform(
            self.grid,
            self.dt,
            self.frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a.zip_with(b, |x, y| x - y))
                .collect::<Result<_>>()?,
        )?;
        Ok(diff.l2_norm())
    }
}

/// `Σ_{k<K} Δt 𝓔[f_k, g_k]` (left-endpoint rule).
pub fn parabolic_bilinear(kernel: &dyn EnergyKernel, f: &PathFunction, g: &PathFunction) -> Result<f64> {
    f.check_compatible(g)?;
    let mut terms = Vec::with_capacity(f.intervals());
    for k in 0..f.intervals() {
        terms.push(bilinear(kernel, &f.frames[k], &g.frames[k])?);
    }
    Ok(f.dt * pairwise_sum(&terms))
}

/// `|f|_{T,E} = (Σ_{k<K} Δt |f_k|²_E)^{1/2}`.
pub fn parabolic_seminorm(kernel: &dyn EnergyKernel, f: &PathFunction) -> Result<f64> {
    Ok(parabolic_bilinear(kernel, f, f)?.max(0.0).sqrt())
}

/// Right-tail sums `g_k = Σ_{j=k}^{K−1} f_j Δt`, with `g_K = 0`.
pub fn time_tail(f: &PathFunction) -> Result<PathFunction> {
    let n = f.grid.len();
    let mut acc = vec![0.0; n];
    let mut frames = vec![GridFunction::zeros(f.grid); f.frames.len()];
    for k in (0..f.intervals()).rev() {
        for (a, v) in acc.iter_mut().zip(f.frames[k].values()) {
            *a += v * f.dt;
        }
        frames[k] = GridFunction::new(f.grid, acc.clone())?;
    }
    PathFunction::uniform(f.grid, f.dt, frames)
}

/// Constant `C` in `|time_tail(f)|²_{T,E} ≤ C |f|²_{T,E}`: `(T²/2)(1 + Δt/T)`.
pub fn time_tail_bound_factor(f: &PathFunction) -> f64 {
    let t = f.final_time();
    0.5 * t * t + 0.5 * t * f.dt
}

/// `|f|_{Ḣ^{α/2}} = (∫ |ξ|^α |𝓕f(ξ)|² dξ)^{1/2}` with the unitary transform,
/// evaluated on the torus as `(h^{2N} (2R)^{−N} Σ_k |ξ_k|^α |f̂_k|²)^{1/2}`.
pub fn sobolev_seminorm_fourier(alpha: f64, f: &GridFunction) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("order must lie in (0,2), got {alpha}")));
    }
    let grid = *f.grid();
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&grid, &mut data, false);
    let mags = mode_magnitudes(&grid);
    let s = pairwise_sum_by(data.len(), |k| {
        if mags[k] == 0.0 {
            0.0
        } else {
            mags[k].powf(alpha) * data[k].norm_sqr()
        }
    });
    let h = grid.spacing();
    let n = grid.dims() as i32;
    Ok((s * h.powi(2 * n) / (2.0 * grid.halfwidth()).powi(n)).sqrt())
}

/// `(c_{1,α} · ½ ∫∫ |f(x+z) − f(x)|² / |z|^{1+α} dz dx)^{1/2}` for 1-D data
/// supported well inside the domain.
///
/// The inner integral `I(z) = ∫ |f(x+z) − f(x)|² dx` is taken exactly on grid
/// shifts `|z| ≤ R`; `I(z)/z²` is interpolated linearly and integrated against
/// `z^{1−α}` in closed form; beyond `R` the increments no longer overlap and
/// `I = 2‖f‖²` contributes analytically.
pub fn sobolev_seminorm_double_integral(alpha: f64, f: &GridFunction) -> Result<f64> {
    let grid = *f.grid();
    if grid.dims() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: grid.dims() });
    }
    let c = fractional_constant(1, alpha)?;
    let m = grid.points();
    let h = grid.spacing();
    let v = f.values();
    let half = m / 2;
    if half < 2 {
        return Err(Error::Precondition("at least four grid points are required".into()));
    }
    let incr = |j: usize| -> f64 {
        h * pairwise_sum_by(m, |x| {
            let d = v[(x + j) % m] - v[x];
            d * d
        })
    };
    let mut g = vec![0.0; half + 1];
    for (j, gj) in g.iter_mut().enumerate().skip(1) {
        let z = j as f64 * h;
        *gj = incr(j) / (z * z);
    }
    g[0] = (4.0 * g[1] - g[2]) / 3.0;
    // ∫_a^b z^{1−α} (g_a + (g_b − g_a)(z − a)/h) dz
    let p1 = |z: f64| z.powf(2.0 - alpha) / (2.0 - alpha);
    let p2 = |z: f64| z.powf(3.0 - alpha) / (3.0 - alpha);
    let mut pieces = Vec::with_capacity(half);
    for j in 0..half {
        let a = j as f64 * h;
        let b = a + h;
        let slope = (g[j + 1] - g[j]) / h;
        let m0 = p1(b) - p1(a);
        let m1 = p2(b) - p2(a);
        pieces.push((g[j] - slope * a) * m0 + slope * m1);
    }
    let norm2 = f.lp_norm(2.0)?.powi(2);
    let r = half as f64 * h;
    let d = pairwise_sum(&pieces) + 2.0 * norm2 * r.powf(-alpha) / alpha;
    Ok((c * d).sqrt())
}

/// `T_δ(x) = min(max(−1/δ, x − min(max(−δ, x), δ)), 1/δ)`: shrink by δ, clamp at 1/δ.
pub fn truncation_t(x: f64, delta: f64) -> f64 {
    let inner = x - x.max(-delta).min(delta);
    inner.max(-1.0 / delta).min(1.0 / delta)
}

/// Normalized discrete weights of the bump of radius `delta` at multiples of `step`.
fn discrete_bump_1d(delta: f64, step: f64) -> Vec<(i64, f64)> {
    let reach = (delta / step).ceil() as i64;
    let mut w: Vec<(i64, f64)> = (-reach..=reach)
        .map(|j| (j, bump(j as f64 * step / delta)))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    if w.is_empty() {
        return vec![(0, 1.0)];
    }
    let total: f64 = pairwise_sum(&w.iter().map(|p| p.1).collect::<Vec<_>>());
    for p in &mut w {
        p.1 /= total;
    }
    w
}

/// Periodic spatial convolution with a normalized radial bump of radius `delta`.
fn mollify_space(f: &[f64], grid: &Grid, delta: f64) -> Vec<f64> {
    let h = grid.spacing();
    let dims = grid.dims();
    let reach = (delta / h).ceil() as i64;
    let side = (2 * reach + 1) as usize;
    let mut stencil: Vec<(Vec<i64>, f64)> = Vec::new();
    let mut j = vec![0i64; dims];
    for flat in 0..side.pow(dims as u32) {
        let mut rem = flat;
        for axis in (0..dims).rev() {
            j[axis] = (rem % side) as i64 - reach;
            rem /= side;
        }
        let r2 = j.iter().map(|&v| (v as f64 * h / delta).powi(2)).sum::<f64>();
        let w = bump_profile(r2);
        if w > 0.0 {
            stencil.push((j.clone(), w));
        }
    }
    if stencil.len() <= 1 {
        return f.to_vec();
    }
    let total = pairwise_sum(&stencil.iter().map(|s| s.1).collect::<Vec<_>>());
    (0..grid.len())
        .map(|x| {
            let mut acc = 0.0;
            for (off, w) in &stencil {
                acc += w / total * f[grid.offset_index(x, off)];
            }
            acc
        })
        .collect()
}

/// Time convolution (frames outside `[0, T]` are zero) followed by spatial mollification.
fn mollify_space_time(frames: &[Vec<f64>], grid: &Grid, dt: f64, delta: f64) -> Vec<Vec<f64>> {
    let kernel = discrete_bump_1d(delta, dt);
    let n = grid.len();
    let count = frames.len() as i64;
    (0..count)
        .map(|k| {
            let mut acc = vec![0.0; n];
            for &(j, w) in &kernel {
                let s = k - j;
                if s < 0 || s >= count {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(&frames[s as usize]) {
                    *a += w * v;
                }
            }
            mollify_space(&acc, grid, delta)
        })
        .collect()
}

/// `w_δ = T_δ[(f 1_{[2δ, T−3δ]}) ∗ ρ_δ] ∗ ρ_δ` with a product bump `ρ_δ` of
/// radius δ in space and in time. The result vanishes for `t > T − δ`.
pub fn density_approximation(f: &PathFunction, delta: f64) -> Result<PathFunction> {
    let t_final = f.final_time();
    // δ = T/5 is allowed: the restriction window [2δ, T−3δ] then shrinks to a point
    if !(delta > 0.0 && delta <= t_final / 5.0 * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!("δ = {delta} must lie in (0, T/5] with T = {t_final}")));
    }
    let eps = 1e-12 * t_final;
    let restricted: Vec<Vec<f64>> = f
        .frames
        .iter()
        .enumerate()
        .map(|(k, fr)| {
            let t = f.time(k);
            if t >= 2.0 * delta - eps && t <= t_final - 3.0 * delta + eps {
                fr.values().to_vec()
            } else {
                vec![0.0; f.grid.len()]
            }
        })
        .collect();
    let big_g = mollify_space_time(&restricted, &f.grid, f.dt, delta);
    let truncated: Vec<Vec<f64>> =
        big_g.into_iter().map(|fr| fr.into_iter().map(|v| truncation_t(v, delta)).collect()).collect();
    let w = mollify_space_time(&truncated, &f.grid, f.dt, delta);
    let frames = w.into_iter().map(|v| GridFunction::new(f.grid, v)).collect::<Result<_>>()?;
    PathFunction::uniform(f.grid, f.dt, frames)
}

/// Smooth radial cut-off: 1 on `|x| ≤ R_cut`, 0 on `|x| ≥ 2 R_cut`.
pub fn cutoff_x(grid: &Grid, r_cut: f64) -> Result<GridFunction> {
    if !(r_cut > 0.0 && 2.0 * r_cut <= grid.halfwidth()) {
        return Err(Error::Precondition(format!(
            "cut-off radius {r_cut} needs 0 < 2·R_cut ≤ {}",
            grid.halfwidth()
        )));
    }
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    GridFunction::from_fn(*grid, |x| {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt() / r_cut;
        let a = psi(2.0 - s);
        let b = psi(s - 1.0);
        a / (a + b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{truncate_and_atomize, Atom, LevyMeasureSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_measure() -> AtomMeasure {
        let g = Grid::with_spacing(1, 4, 1.0).unwrap();
        AtomMeasure::new(g, vec![Atom { offset: vec![1], weight: 0.5 }, Atom { offset: vec![-1], weight: 0.5 }])
            .unwrap()
    }

    fn fractional_atoms(points: usize, halfwidth: f64, alpha: f64) -> AtomMeasure {
        let g = Grid::new(1, points, halfwidth).unwrap();
        let mu = LevyMeasureSpec::fractional(1, alpha).unwrap();
        truncate_and_atomize(&mu, &g, g.spacing(), halfwidth).unwrap()
    }

    fn random_fn(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_path(grid: Grid, frames: usize, dt: f64, rng: &mut ChaCha8Rng) -> PathFunction {
        PathFunction::uniform(grid, dt, (0..frames).map(|_| random_fn(grid, rng)).collect()).unwrap()
    }

    #[test]
    fn brute_force_pair_example() {
        let mu = pair_measure();
        let f = GridFunction::new(*mu.grid(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(bilinear(&mu, &f, &f).unwrap(), 1.0);
        let c = GridFunction::constant(*mu.grid(), 4.0);
        assert_eq!(bilinear(&mu, &f, &c).unwrap(), 0.0);
    }

    #[test]
    fn summation_by_parts_for_random_pairs() {
        let mu = fractional_atoms(128, 8.0, 1.0);
        let op = TruncatedOperator::new(mu.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_fn(*mu.grid(), &mut rng);
            let g = random_fn(*mu.grid(), &mut rng);
            let sbp = summation_by_parts(&op, &f, &g).unwrap();
            assert!(sbp.relative <= 1e-12, "{sbp:?}");
            assert_eq!(bilinear(&mu, &f, &g).unwrap(), bilinear(&mu, &g, &f).unwrap());
        }
    }

    #[test]
    fn kernel_comparability_brackets_energy() {
        let mu = fractional_atoms(64, 4.0, 1.2);
        let k = KernelField::symmetric_modulation(&mu, |x| 2.0 + x[0].sin()).unwrap();
        let (m, mm) = crate::measures::comparability_bounds(&k, &mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let f = random_fn(*mu.grid(), &mut rng);
            let e_mu = energy_of_measure(&mu, &f).unwrap().value;
            let e_k = energy_of_kernel(&k, &f).unwrap();
            assert_eq!(e_k.form, EnergyForm::Kernel);
            assert!(m * e_mu <= e_k.value * (1.0 + 1e-12));
            assert!(e_k.value <= mm * e_mu * (1.0 + 1e-12));
        }
    }

    #[test]
    fn parabolic_examples() {
        let mu = fractional_atoms(32, 2.0, 1.0);
        let g = *mu.grid();
        let c = PathFunction::uniform(g, 0.1, vec![GridFunction::constant(g, 1.0); 5]).unwrap();
        assert_eq!(parabolic_seminorm(&mu, &c).unwrap(), 0.0);

        let f = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
        let path = PathFunction::uniform(g, 0.25, vec![f.clone(); 9]).unwrap();
        let expected = 2f64.sqrt() * seminorm(&mu, &f).unwrap();
        assert!((parabolic_seminorm(&mu, &path).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn cauchy_schwarz_and_tail_bound_on_random_paths() {
        let mu = fractional_atoms(32, 2.0, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 1..8 {
            let f = random_path(*mu.grid(), k + 1, 0.1, &mut rng);
            let g = random_path(*mu.grid(), k + 1, 0.1, &mut rng);
            let lhs = parabolic_bilinear(&mu, &f, &g).unwrap().abs();
            let rhs = parabolic_seminorm(&mu, &f).unwrap() * parabolic_seminorm(&mu, &g).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));

            let tail = time_tail(&f).unwrap();
            let lhs = parabolic_seminorm(&mu, &tail).unwrap().powi(2);
            let rhs = time_tail_bound_factor(&f) * parabolic_seminorm(&mu, &f).unwrap().powi(2);
            assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} {rhs}");
        }
    }

    #[test]
    fn time_tail_examples() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let zero = PathFunction::uniform(g, 0.5, vec![GridFunction::zeros(g); 4]).unwrap();
        assert!(time_tail(&zero).unwrap().frames().iter().all(|f| f.max() == 0.0 && f.min() == 0.0));
        let frame = GridFunction::from_fn(g, |x| x[0]).unwrap();
        let path = PathFunction::uniform(g, 0.5, vec![frame.clone(); 5]).unwrap();
        let tail = time_tail(&path).unwrap();
        for (k, fr) in tail.frames().iter().enumerate() {
            let factor = path.final_time() - path.time(k);
            for (a, b) in fr.values().iter().zip(frame.values()) {
                assert!((a - factor * b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tail_seminorm_of_constant_path_is_a_sum_of_squares() {
        // |g|² = Σ_{k<K} Δt ((K−k)Δt)² |f|²_E for constant f
        let mu = fractional_atoms(32, 2.0, 1.0);
        let f = GridFunction::from_fn(*mu.grid(), |x| x[0].cos()).unwrap();
        let dt = 0.2;
        let path = PathFunction::uniform(*mu.grid(), dt, vec![f.clone(); 6]).unwrap();
        let lhs = parabolic_seminorm(&mu, &time_tail(&path).unwrap()).unwrap().powi(2);
        let e = bilinear(&mu, &f, &f).unwrap();
        let expected: f64 = (0..5).map(|k| dt * ((5 - k) as f64 * dt).powi(2) * e).sum();
        assert!((lhs - expected).abs() <= 1e-12 * expected);
        assert!(lhs <= time_tail_bound_factor(&path) * parabolic_seminorm(&mu, &path).unwrap().powi(2));
    }

    #[test]
    fn non_uniform_times_rejected() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        let frames = vec![GridFunction::zeros(g); 3];
        assert!(PathFunction::new(g, &[0.0, 0.1, 0.3], frames.clone()).is_err());
        assert!(PathFunction::new(g, &[0.1, 0.2, 0.3], frames.clone()).is_err());
        assert!(PathFunction::new(g, &[0.0, 0.1, 0.2], frames).is_ok());
    }

    #[test]
    fn fourier_seminorm_matches_operator_pairing() {
        // |f|² ≈ −⟨f, L f⟩ for the compensated operator, converging to the Fourier value
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let mut gaps = Vec::new();
        for points in [256usize, 512, 1024] {
            let g = Grid::new(1, points, 16.0).unwrap();
            let f = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
            let fourier = sobolev_seminorm_fourier(1.0, &f).unwrap();
            let op = crate::operators::CompensatedOperator::new(&mu, &g, g.spacing(), 16.0)
                .unwrap()
                .with_far_field_closure();
            let pairing = -f.inner(&op.apply(&f).unwrap()).unwrap();
            gaps.push((pairing.sqrt() - fourier).abs() / fourier);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-2, "{gaps:?}");

        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
        let base = sobolev_seminorm_fourier(1.0, &f).unwrap();
        assert_eq!(sobolev_seminorm_fourier(1.0, &GridFunction::zeros(g)).unwrap(), 0.0);
        let scaled = sobolev_seminorm_fourier(1.0, &f.scale(-3.0).unwrap()).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12 * base);
    }

    #[test]
    fn fourier_and_double_integral_agree() {
        let g = Grid::new(1, 1024, 16.0).unwrap();
        let f = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
        for alpha in [0.5, 1.0, 1.5] {
            let a = sobolev_seminorm_fourier(alpha, &f).unwrap();
            let b = sobolev_seminorm_double_integral(alpha, &f).unwrap();
            assert!((a - b).abs() < 1e-2 * a, "{alpha}: {a} vs {b}");
        }
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncation_t(0.0, 0.3), 0.0);
        assert_eq!(truncation_t(1.0, 0.5), 0.5);
        assert_eq!(truncation_t(10.0, 0.5), 2.0);
        assert_eq!(truncation_t(-10.0, 0.5), -2.0);
        assert_eq!(truncation_t(0.2, 0.5), 0.0);
    }

    proptest! {
        #[test]
        fn truncation_is_normal_contraction(a in -50.0f64..50.0, b in -50.0f64..50.0, d in 0.01f64..5.0) {
            prop_assert!(truncation_t(a, d).abs() <= a.abs());
            prop_assert!((truncation_t(a, d) - truncation_t(b, d)).abs() <= (a - b).abs() * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn energy_is_nonnegative(vals in proptest::collection::vec(-5.0f64..5.0, 32)) {
            let mu = fractional_atoms(32, 2.0, 1.3);
            let f = GridFunction::new(*mu.grid(), vals).unwrap();
            prop_assert!(bilinear(&mu, &f, &f).unwrap() >= 0.0);
        }
    }

    fn smooth_space_time(grid: Grid, frames: usize, dt: f64) -> PathFunction {
        let t_final = (frames - 1) as f64 * dt;
        let frames = (0..frames)
            .map(|k| {
                let t = k as f64 * dt;
                let time = (std::f64::consts::PI * t / t_final).sin().powi(2);
                GridFunction::from_fn(grid, |x| time * (-(x[0] * x[0]) * 2.0).exp()).unwrap()
            })
            .collect();
        PathFunction::uniform(grid, dt, frames).unwrap()
    }

    #[test]
    fn density_approximation_converges_and_stays_bounded() {
        let g = Grid::new(1, 256, 4.0).unwrap();
        let f = smooth_space_time(g, 201, 0.005);
        let t_final = f.final_time();
        let mu = truncate_and_atomize(&LevyMeasureSpec::fractional(1, 1.0).unwrap(), &g, g.spacing(), 4.0).unwrap();
        let bound = f.l2_norm() + f.sup_norm() + parabolic_seminorm(&mu, &f).unwrap();
        let mut errors = Vec::new();
        for factor in [0.2, 0.1, 0.05] {
            let w = density_approximation(&f, factor * t_final).unwrap();
            errors.push(w.l2_distance(&f).unwrap());
            let size = w.l2_norm() + w.sup_norm() + parabolic_seminorm(&mu, &w).unwrap();
            assert!(size <= bound * (1.0 + 1e-12), "{size} > {bound}");
            let last = w.intervals();
            for k in 0..=last {
                if w.time(k) > t_final - factor * t_final + 1e-12 {
                    assert_eq!(w.frames()[k].lp_norm(f64::INFINITY).unwrap(), 0.0);
                }
            }
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        let zero = PathFunction::uniform(g, 0.01, vec![GridFunction::zeros(g); 11]).unwrap();
        assert_eq!(density_approximation(&zero, 0.01).unwrap().sup_norm(), 0.0);
        assert!(density_approximation(&zero, 0.05).is_err());
    }

    #[test]
    fn cutoff_profile() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let x = cutoff_x(&g, 1.0).unwrap();
        for i in 0..g.len() {
            let r = g.coordinate(i).abs();
            let v = x.values()[i];
            assert!((0.0..=1.0).contains(&v));
            if r <= 1.0 {
                assert_eq!(v, 1.0);
            }
            if r >= 2.0 {
                assert_eq!(v, 0.0);
            }
        }
        // monotone radial decrease between R and 2R
        let mut prev = 1.0;
        for i in 32..64 {
            let v = x.values()[i];
            assert!(v <= prev);
            prev = v;
        }
        let g2 = Grid::new(2, 17, 4.0).unwrap();
        let centre = cutoff_x(&g2, 1.0).unwrap();
        assert_eq!(centre.values()[g2.flatten(&[8, 8])], 1.0);
        assert!(cutoff_x(&g, 2.5).is_err());
    }
}
