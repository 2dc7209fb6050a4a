//! Symmetric Lévy measures, their grid quadratures, and x-dependent kernels.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::{adaptive, adaptive_to_infinity};

/// Name reported when the Lévy integrability conditions fail.
pub const LEVY_INTEGRABILITY: &str = "levy-integrability";
/// Name reported when a measure is not even.
pub const LEVY_EVENNESS: &str = "levy-evenness";

const QUAD_TOL: f64 = 1e-13;

pub type RadialDensity = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MeasureKind {
    /// `c |z|^{-N-α} dz`.
    Fractional { alpha: f64, c: f64 },
    /// `ρ(|z|) dz`; `singularity_exponent` is the β in `ρ(s) ~ s^{-N-β}` near 0.
    RadialDensity { density: RadialDensity, singularity_exponent: f64 },
    /// Point masses at real offsets.
    Atomic { atoms: Vec<(Vec<f64>, f64)> },
}

impl fmt::Debug for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fractional { alpha, c } => {
                f.debug_struct("Fractional").field("alpha", alpha).field("c", c).finish()
            }
            Self::RadialDensity { singularity_exponent, .. } => f
                .debug_struct("RadialDensity")
                .field("singularity_exponent", singularity_exponent)
                .finish_non_exhaustive(),
            Self::Atomic { atoms } => f.debug_struct("Atomic").field("atoms", atoms).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevyMeasureSpec {
    dims: usize,
    kind: MeasureKind,
}

/// `c_{N,α}`, the constant for which the fractional operator has symbol `-|ξ|^α`.
pub fn fractional_constant(dims: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Assumption {
            assumption: LEVY_INTEGRABILITY,
            detail: format!("fractional order must lie in (0,2), got {alpha}"),
        });
    }
    let n = dims as f64;
    Ok(alpha * 2f64.powf(alpha - 1.0) * libm::tgamma(0.5 * (n + alpha))
        / (PI.powf(0.5 * n) * libm::tgamma(1.0 - 0.5 * alpha)))
}

/// Surface area of the unit sphere in `R^N` (2 for N = 1).
pub fn sphere_area(dims: usize) -> f64 {
    let n = dims as f64;
    2.0 * PI.powf(0.5 * n) / libm::tgamma(0.5 * n)
}

impl LevyMeasureSpec {
    pub fn fractional(dims: usize, alpha: f64) -> Result<Self> {
        let c = fractional_constant(dims, alpha)?;
        Self::fractional_with_constant(dims, alpha, c)
    }

    pub fn fractional_with_constant(dims: usize, alpha: f64, c: f64) -> Result<Self> {
        check_dims(dims)?;
        if !(alpha.is_finite() && alpha > 0.0) || !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("invalid fractional parameters alpha={alpha}, c={c}")));
        }
        Ok(Self { dims, kind: MeasureKind::Fractional { alpha, c } })
    }

    pub fn radial(dims: usize, density: RadialDensity, singularity_exponent: f64) -> Result<Self> {
        check_dims(dims)?;
        if !singularity_exponent.is_finite() {
            return Err(Error::Domain("singularity exponent must be finite".into()));
        }
        Ok(Self { dims, kind: MeasureKind::RadialDensity { density, singularity_exponent } })
    }

    /// Tempered stable density `c e^{-λ|z|} |z|^{-N-α}`.
    pub fn tempered(dims: usize, alpha: f64, decay: f64, c: f64) -> Result<Self> {
        if !(decay.is_finite() && decay >= 0.0) || !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("invalid tempered parameters decay={decay}, c={c}")));
        }
        let n = dims as f64;
        let density: RadialDensity = Arc::new(move |s: f64| c * (-decay * s).exp() * s.powf(-n - alpha));
        Self::radial(dims, density, alpha)
    }

    /// Atomic measure; atoms with equal offsets are merged and evenness is checked exactly.
    pub fn atomic(dims: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        check_dims(dims)?;
        let mut merged: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
        for (z, w) in atoms {
            if z.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: z.len() });
            }
            if !(w.is_finite() && w >= 0.0) || z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("atom weights must be finite and nonnegative, got {w}")));
            }
            if z.iter().all(|&v| v == 0.0) {
                return Err(Error::Domain("atom at the origin is not allowed".into()));
            }
            let key: Vec<u64> = z.iter().map(|v| (v + 0.0).to_bits()).collect();
            merged.entry(key).or_insert_with(|| (z.clone(), 0.0)).1 += w;
        }
        for (z, w) in merged.values() {
            let neg: Vec<u64> = z.iter().map(|v| (-v + 0.0).to_bits()).collect();
            let partner = merged.get(&neg).map(|p| p.1);
            if partner != Some(*w) {
                return Err(Error::Assumption {
                    assumption: LEVY_EVENNESS,
                    detail: format!("atom at {z:?} with weight {w} has no mirrored partner of equal weight"),
                });
            }
        }
        let atoms = merged.into_values().filter(|(_, w)| *w > 0.0).collect();
        Ok(Self { dims, kind: MeasureKind::Atomic { atoms } })
    }

    pub fn zero(dims: usize) -> Result<Self> {
        Self::atomic(dims, Vec::new())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    /// `(Σ, Π)` = (`∫_{|z|≤1} |z|² dμ`, `∫_{|z|>1} dμ`).
    pub fn moments(&self) -> Result<(f64, f64)> {
        let area = sphere_area(self.dims);
        match &self.kind {
            MeasureKind::Fractional { alpha, c } => {
                integrability_check(*alpha)?;
                Ok((area * c / (2.0 - alpha), area * c / alpha))
            }
            MeasureKind::RadialDensity { density, singularity_exponent } => {
                integrability_check(*singularity_exponent)?;
                let n = self.dims as i32;
                let near = |s: f64| s.powi(n + 1) * density(s);
                let far = |s: f64| s.powi(n - 1) * density(s);
                let sigma = adaptive(&near, 0.0, 1.0, QUAD_TOL).ok_or_else(|| divergent("Σ"))?;
                let pi = adaptive_to_infinity(&far, 1.0, QUAD_TOL).ok_or_else(|| divergent("Π"))?;
                Ok((area * sigma, area * pi))
            }
            MeasureKind::Atomic { atoms } => {
                let mut sigma = 0.0;
                let mut pi = 0.0;
                for (z, w) in atoms {
                    let r2: f64 = z.iter().map(|v| v * v).sum();
                    if r2 <= 1.0 {
                        sigma += r2 * w;
                    } else {
                        pi += w;
                    }
                }
                Ok((sigma, pi))
            }
        }
    }

    /// Mass `∫_{a<|z|≤b} dμ` of an annulus.
    pub fn annulus_mass(&self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0) || b <= a {
            return Ok(0.0);
        }
        let area = sphere_area(self.dims);
        match &self.kind {
            MeasureKind::Fractional { alpha, c } => {
                let prim = |s: f64| if s.is_infinite() { 0.0 } else { s.powf(-alpha) };
                Ok(area * c * (prim(a) - prim(b)) / alpha)
            }
            MeasureKind::RadialDensity { density, .. } => {
                let n = self.dims as i32;
                let f = |s: f64| s.powi(n - 1) * density(s);
                let v = if b.is_infinite() {
                    adaptive_to_infinity(&f, a, QUAD_TOL)
                } else {
                    adaptive(&f, a, b, QUAD_TOL)
                };
                v.map(|v| area * v).ok_or_else(|| divergent("annulus mass"))
            }
            MeasureKind::Atomic { atoms } => Ok(atoms
                .iter()
                .filter(|(z, _)| {
                    let r = norm(z);
                    r > a && r <= b
                })
                .map(|(_, w)| w)
                .sum()),
        }
    }

    /// Per-axis second moments `∫_{|z|≤r} z_i² dμ`.
    pub fn near_second_moments(&self, r: f64) -> Result<Vec<f64>> {
        let area = sphere_area(self.dims);
        let n = self.dims as f64;
        match &self.kind {
            MeasureKind::Fractional { alpha, c } => {
                integrability_check(*alpha)?;
                let total = area * c * r.powf(2.0 - alpha) / (2.0 - alpha);
                Ok(vec![total / n; self.dims])
            }
            MeasureKind::RadialDensity { density, singularity_exponent } => {
                integrability_check(*singularity_exponent)?;
                let d = self.dims as i32;
                let f = |s: f64| s.powi(d + 1) * density(s);
                let total = area * adaptive(&f, 0.0, r, QUAD_TOL).ok_or_else(|| divergent("Σ"))?;
                Ok(vec![total / n; self.dims])
            }
            MeasureKind::Atomic { atoms } => {
                let mut out = vec![0.0; self.dims];
                for (z, w) in atoms {
                    if norm(z) <= r {
                        for (o, v) in out.iter_mut().zip(z) {
                            *o += v * v * w;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

fn check_dims(dims: usize) -> Result<()> {
    if dims == 0 {
        return Err(Error::Domain("measure dimension must be positive".into()));
    }
    Ok(())
}

fn integrability_check(order: f64) -> Result<()> {
    if !(order > 0.0 && order < 2.0) {
        return Err(Error::Assumption {
            assumption: LEVY_INTEGRABILITY,
            detail: format!(
                "singularity order {order} outside (0,2): ∫_{{|z|≤1}} |z|² dμ or ∫_{{|z|>1}} dμ diverges"
            ),
        });
    }
    Ok(())
}

fn divergent(what: &str) -> Error {
    Error::Assumption {
        assumption: LEVY_INTEGRABILITY,
        detail: format!("quadrature of {what} did not converge; the integral appears divergent"),
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A single grid atom: integer offset and nonnegative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub offset: Vec<i64>,
    pub weight: f64,
}

/// Even list of grid atoms representing a bounded measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomMeasure {
    grid: Grid,
    atoms: Vec<Atom>,
    total_mass: f64,
    discarded_tail: f64,
}

impl AtomMeasure {
    /// Validates dimensions, weights, exact evenness, and absence of the zero offset.
    pub fn new(grid: Grid, atoms: Vec<Atom>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for a in atoms {
            grid.check_offset(&a.offset)?;
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::Domain(format!("atom weight must be finite and nonnegative, got {}", a.weight)));
            }
            if a.offset.iter().all(|&o| o == 0) {
                return Err(Error::Domain("zero offset is not allowed".into()));
            }
            *merged.entry(a.offset).or_insert(0.0) += a.weight;
        }
        for (o, w) in &merged {
            let neg: Vec<i64> = o.iter().map(|v| -v).collect();
            if merged.get(&neg) != Some(w) {
                return Err(Error::Assumption {
                    assumption: LEVY_EVENNESS,
                    detail: format!("offset {o:?} has weight {w} but its mirror does not match"),
                });
            }
        }
        Ok(Self::from_sorted(grid, merged, 0.0))
    }

    pub fn empty(grid: Grid) -> Self {
        Self { grid, atoms: Vec::new(), total_mass: 0.0, discarded_tail: 0.0 }
    }

    fn from_sorted(grid: Grid, merged: BTreeMap<Vec<i64>, f64>, discarded_tail: f64) -> Self {
        let atoms: Vec<Atom> = merged
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(offset, weight)| Atom { offset, weight })
            .collect();
        let total_mass = crate::reduce::pairwise_sum_by(atoms.len(), |i| atoms[i].weight);
        Self { grid, atoms, total_mass, discarded_tail }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Mass of the measure beyond the tail cutoff that was dropped.
    pub fn discarded_tail(&self) -> f64 {
        self.discarded_tail
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.grid,
            self.atoms.iter().map(|a| Atom { offset: a.offset.clone(), weight: c * a.weight }).collect(),
        )
    }

    /// `(Σ, Π)` of the atoms at their physical positions `j h`.
    pub fn moments(&self) -> (f64, f64) {
        let h = self.grid.spacing();
        let mut sigma = 0.0;
        let mut pi = 0.0;
        for a in &self.atoms {
            let r2 = a.offset.iter().map(|&o| (o as f64 * h).powi(2)).sum::<f64>();
            if r2 <= 1.0 {
                sigma += r2 * a.weight;
            } else {
                pi += a.weight;
            }
        }
        (sigma, pi)
    }

    /// Atoms with positive first nonzero coordinate, paired with their mirrors.
    pub(crate) fn half_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms
            .iter()
            .filter(|a| a.offset.iter().find(|&&o| o != 0).is_some_and(|&o| o > 0))
    }
}

/// Restricts `mu` to `r < |z| ≤ tail_cutoff` and assigns each admissible grid
/// offset the measure of its cell.
///
/// In one dimension the innermost admissible cell is extended down to `r` and
/// the outermost up to `tail_cutoff`, so the atom masses add up exactly to the
/// mass of the annulus. In higher dimensions each cell's share of the annulus
/// is integrated by a refined midpoint rule.
pub fn truncate_and_atomize(
    mu: &LevyMeasureSpec,
    grid: &Grid,
    r: f64,
    tail_cutoff: f64,
) -> Result<AtomMeasure> {
    if mu.dims() != grid.dims() {
        return Err(Error::DimensionMismatch { expected: grid.dims(), got: mu.dims() });
    }
    let h = grid.spacing();
    let atomic = matches!(mu.kind, MeasureKind::Atomic { .. });
    // atomic measures carry no mass near the origin, so any positive radius works
    if !(r.is_finite() && r > 0.0) || (!atomic && r < h) {
        return Err(Error::Precondition(format!("truncation radius {r} must be at least the grid spacing {h}")));
    }
    if !(tail_cutoff > 0.0 && tail_cutoff <= grid.halfwidth()) {
        return Err(Error::Precondition(format!(
            "tail cutoff {tail_cutoff} must lie in (0, {}]",
            grid.halfwidth()
        )));
    }
    let tail = mu.annulus_mass(tail_cutoff, f64::INFINITY)?;
    if r >= tail_cutoff {
        let mut out = AtomMeasure::empty(*grid);
        out.discarded_tail = tail;
        return Ok(out);
    }

    let mut raw: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    match &mu.kind {
        MeasureKind::Atomic { atoms } => {
            for (z, w) in atoms {
                let rz = norm(z);
                if rz <= r || rz > tail_cutoff {
                    continue;
                }
                let mut offset = Vec::with_capacity(z.len());
                for &v in z {
                    let j = (v / h).round();
                    if (v / h - j).abs() > 1e-9 * (1.0 + j.abs()) {
                        return Err(Error::Precondition(format!("atom at {z:?} is not on the grid of spacing {h}")));
                    }
                    offset.push(j as i64);
                }
                *raw.entry(offset).or_insert(0.0) += w;
            }
        }
        _ if grid.dims() == 1 => {
            let j0 = (r / h).floor() as i64 + 1;
            let jmax = (tail_cutoff / h + 1e-12).floor() as i64;
            for j in j0..=jmax {
                let lo = if j == j0 { r } else { (j as f64 - 0.5) * h };
                let hi = if j == jmax { tail_cutoff } else { (j as f64 + 0.5) * h };
                // annulus_mass counts both sides
                let w = 0.5 * mu.annulus_mass(lo, hi)?;
                raw.insert(vec![j], w);
                raw.insert(vec![-j], w);
            }
        }
        _ => atomize_cells(mu, grid, r, tail_cutoff, &mut raw)?,
    }

    // even-symmetrize by averaging mirrored weights
    let keys: Vec<Vec<i64>> = raw.keys().cloned().collect();
    let mut sym = BTreeMap::new();
    for k in keys {
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        let a = raw.get(&k).copied().unwrap_or(0.0);
        let b = raw.get(&neg).copied().unwrap_or(0.0);
        sym.insert(k, 0.5 * (a + b));
        sym.insert(neg, 0.5 * (b + a));
    }
    Ok(AtomMeasure::from_sorted(*grid, sym, tail))
}

fn atomize_cells(
    mu: &LevyMeasureSpec,
    grid: &Grid,
    r: f64,
    tail_cutoff: f64,
    out: &mut BTreeMap<Vec<i64>, f64>,
) -> Result<()> {
    let dims = grid.dims();
    let h = grid.spacing();
    let density: Box<dyn Fn(f64) -> f64> = match &mu.kind {
        MeasureKind::Fractional { alpha, c } => {
            let (a, c, n) = (*alpha, *c, dims as f64);
            Box::new(move |s: f64| c * s.powf(-n - a))
        }
        MeasureKind::RadialDensity { density, .. } => {
            let d = density.clone();
            Box::new(move |s: f64| d(s))
        }
        MeasureKind::Atomic { .. } => unreachable!("atomic measures are mapped directly"),
    };
    let sub: usize = match dims {
        2 => 8,
        3 => 4,
        _ => 2,
    };
    let jmax = (tail_cutoff / h + 1e-12).floor() as i64;
    let side = (2 * jmax + 1) as usize;
    let cells = side.pow(dims as u32);
    let sub_cells = sub.pow(dims as u32);
    let sub_vol = (h / sub as f64).powi(dims as i32);
    let mut j = vec![0i64; dims];
    let mut s = vec![0usize; dims];
    for flat in 0..cells {
        let mut rem = flat;
        for axis in (0..dims).rev() {
            j[axis] = (rem % side) as i64 - jmax;
            rem /= side;
        }
        let rj = j.iter().map(|&v| (v as f64 * h).powi(2)).sum::<f64>().sqrt();
        if rj <= r || rj > tail_cutoff {
            continue;
        }
        let mut acc = 0.0;
        for sflat in 0..sub_cells {
            let mut rem = sflat;
            for axis in (0..dims).rev() {
                s[axis] = rem % sub;
                rem /= sub;
            }
            let mut r2 = 0.0;
            for axis in 0..dims {
                let x = (j[axis] as f64 - 0.5 + (s[axis] as f64 + 0.5) / sub as f64) * h;
                r2 += x * x;
            }
            let rr = r2.sqrt();
            if rr > r && rr <= tail_cutoff {
                acc += density(rr);
            }
        }
        let w = acc * sub_vol;
        if !w.is_finite() {
            return Err(divergent("cell weight"));
        }
        out.insert(j.clone(), w);
    }
    Ok(())
}

/// x-dependent kernel `λ(x, dz)` stored as one weight vector per offset.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    grid: Grid,
    offsets: Vec<Vec<i64>>,
    /// `weights[k][x]` is the weight of `offsets[k]` at node `x`.
    weights: Vec<Vec<f64>>,
}

impl KernelField {
    pub fn new(grid: Grid, offsets: Vec<Vec<i64>>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if offsets.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: offsets.len(), got: weights.len() });
        }
        for (o, w) in offsets.iter().zip(&weights) {
            grid.check_offset(o)?;
            if o.iter().all(|&v| v == 0) {
                return Err(Error::Domain("zero offset is not allowed".into()));
            }
            if w.len() != grid.len() {
                return Err(Error::DimensionMismatch { expected: grid.len(), got: w.len() });
            }
            if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!("kernel weights must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { grid, offsets, weights })
    }

    /// x-independent kernel equal to `mu` at every node.
    pub fn from_atoms(mu: &AtomMeasure) -> Self {
        let n = mu.grid().len();
        Self {
            grid: *mu.grid(),
            offsets: mu.atoms().iter().map(|a| a.offset.clone()).collect(),
            weights: mu.atoms().iter().map(|a| vec![a.weight; n]).collect(),
        }
    }

    /// `λ(x, ·) = j(x) μ`.
    pub fn modulated(mu: &AtomMeasure, j: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let g = *mu.grid();
        let factor: Vec<f64> = (0..g.len()).map(|x| j(&g.position(x))).collect();
        let weights = mu
            .atoms()
            .iter()
            .map(|a| factor.iter().map(|f| f * a.weight).collect())
            .collect();
        Self::new(g, mu.atoms().iter().map(|a| a.offset.clone()).collect(), weights)
    }

    /// `λ(x, z) = ½ (j(x) + j(x+z)) μ(z)`, which satisfies the discrete symmetry condition.
    pub fn symmetric_modulation(mu: &AtomMeasure, j: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let g = *mu.grid();
        let factor: Vec<f64> = (0..g.len()).map(|x| j(&g.position(x))).collect();
        let weights = mu
            .atoms()
            .iter()
            .map(|a| {
                (0..g.len())
                    .map(|x| {
                        let y = g.offset_index(x, &a.offset);
                        0.5 * (factor[x] + factor[y]) * a.weight
                    })
                    .collect()
            })
            .collect();
        Self::new(g, mu.atoms().iter().map(|a| a.offset.clone()).collect(), weights)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Largest `|w(x, z) - w(x+z, -z)|`; zero for kernels inducing a symmetric `Λ(dx,dy)`.
    pub fn symmetry_defect(&self) -> f64 {
        let index: BTreeMap<&[i64], usize> =
            self.offsets.iter().enumerate().map(|(k, o)| (o.as_slice(), k)).collect();
        let mut worst = 0.0_f64;
        for (k, o) in self.offsets.iter().enumerate() {
            let neg: Vec<i64> = o.iter().map(|v| -v).collect();
            let mirror = index.get(neg.as_slice()).map(|&m| &self.weights[m]);
            for x in 0..self.grid.len() {
                let y = self.grid.offset_index(x, o);
                let other = mirror.map_or(0.0, |w| w[y]);
                worst = worst.max((self.weights[k][x] - other).abs());
            }
        }
        worst
    }
}

/// Sampled estimate of the local shift-boundedness constant: the largest
/// ratio `w(x', j) / w(x, j)` over neighbouring nodes and offsets with `|jh| ≤ 1`.
pub fn shift_bound_ratio(kernel: &KernelField) -> f64 {
    let g = &kernel.grid;
    let h = g.spacing();
    let mut worst = 1.0_f64;
    let mut steps = Vec::new();
    for axis in 0..g.dims() {
        for sgn in [-1i64, 1] {
            let mut e = vec![0i64; g.dims()];
            e[axis] = sgn;
            steps.push(g.shift_table(&e));
        }
    }
    for (o, w) in kernel.offsets.iter().zip(&kernel.weights) {
        let len = o.iter().map(|&v| (v as f64 * h).powi(2)).sum::<f64>().sqrt();
        if len > 1.0 {
            continue;
        }
        for table in &steps {
            for x in 0..g.len() {
                let (a, b) = (w[table[x]], w[x]);
                let ratio = match (a == 0.0, b == 0.0) {
                    (true, true) => 1.0,
                    (false, true) => f64::INFINITY,
                    _ => a / b,
                };
                worst = worst.max(ratio);
            }
        }
    }
    worst
}

/// Extremes `(m, M)` of `λ(x, z) / μ_ref(z)` over all nodes and offsets.
///
/// The reference is an atomized fractional measure on the same offsets.
pub fn comparability_bounds(kernel: &KernelField, reference: &AtomMeasure) -> Result<(f64, f64)> {
    if kernel.grid != *reference.grid() {
        return Err(Error::GridMismatch);
    }
    let reference_offsets: Vec<&Vec<i64>> = reference.atoms().iter().map(|a| &a.offset).collect();
    let mut kernel_offsets: Vec<&Vec<i64>> = kernel.offsets.iter().collect();
    kernel_offsets.sort();
    if kernel_offsets != reference_offsets {
        return Err(Error::Precondition("kernel and reference measure have different offset sets".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (o, w) in kernel.offsets.iter().zip(&kernel.weights) {
        let idx = reference_offsets.binary_search(&o).expect("offset sets agree");
        let base = reference.atoms()[idx].weight;
        for &v in w {
            let ratio = v / base;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    if lo > hi {
        return Ok((0.0, 0.0));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: usize, h: f64) -> Grid {
        Grid::with_spacing(1, points, h).unwrap()
    }

    fn unit_pair() -> LevyMeasureSpec {
        LevyMeasureSpec::atomic(1, vec![(vec![1.0], 0.5), (vec![-1.0], 0.5)]).unwrap()
    }

    #[test]
    fn constant_one_dimensional_alpha_one() {
        assert!((fractional_constant(1, 1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn constant_matches_closed_forms() {
        // N=1, α=1/2: the gamma factors cancel, leaving 2^{-3/2} / √π
        let expected = 2f64.powf(-1.5) / PI.sqrt();
        assert!((fractional_constant(1, 0.5).unwrap() - expected).abs() < 1e-15);
        // N=3, α=1: 1·Γ(2)/(π^{3/2} Γ(1/2)) = 1/π²
        assert!((fractional_constant(3, 1.0).unwrap() - 1.0 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn atomic_moments_count_unit_sphere_in_sigma() {
        assert_eq!(unit_pair().moments().unwrap(), (1.0, 0.0));
        assert_eq!(LevyMeasureSpec::zero(2).unwrap().moments().unwrap(), (0.0, 0.0));
    }

    #[test]
    fn fractional_moments_and_quadrature_cross_check() {
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let (s, p) = mu.moments().unwrap();
        assert!((s - 2.0 / PI).abs() < 1e-15);
        assert!((p - 2.0 / PI).abs() < 1e-15);
        let c = 1.0 / PI;
        let radial =
            LevyMeasureSpec::radial(1, Arc::new(move |z: f64| c / (z * z)), 1.0).unwrap();
        let (sq, pq) = radial.moments().unwrap();
        assert!((sq - s).abs() < 1e-10 && (pq - p).abs() < 1e-10);
    }

    #[test]
    fn divergent_orders_name_the_assumption() {
        let err = LevyMeasureSpec::fractional(1, 2.5).unwrap_err();
        assert!(matches!(err, Error::Assumption { assumption: LEVY_INTEGRABILITY, .. }));
        let mu = LevyMeasureSpec::fractional_with_constant(1, 2.0, 1.0).unwrap();
        assert!(matches!(mu.moments(), Err(Error::Assumption { .. })));
        let mu = LevyMeasureSpec::tempered(1, 2.2, 1.0, 1.0).unwrap();
        assert!(matches!(mu.moments(), Err(Error::Assumption { .. })));
    }

    #[test]
    fn odd_atomic_measure_rejected() {
        let err = LevyMeasureSpec::atomic(1, vec![(vec![1.0], 0.5), (vec![-1.0], 0.4)]).unwrap_err();
        assert!(matches!(err, Error::Assumption { assumption: LEVY_EVENNESS, .. }));
    }

    #[test]
    fn atomic_outside_radius_unchanged() {
        let g = line(16, 1.0);
        let a = truncate_and_atomize(&unit_pair(), &g, 0.5, 4.0).unwrap();
        assert_eq!(
            a.atoms(),
            &[Atom { offset: vec![-1], weight: 0.5 }, Atom { offset: vec![1], weight: 0.5 }]
        );
        let a = truncate_and_atomize(&unit_pair(), &g, 1.0, 4.0).unwrap();
        assert!(a.atoms().is_empty());
    }

    #[test]
    fn analytic_measures_need_radius_above_spacing() {
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let g = line(16, 1.0);
        assert!(matches!(truncate_and_atomize(&mu, &g, 0.5, 4.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn off_grid_atoms_rejected() {
        let mu = LevyMeasureSpec::atomic(1, vec![(vec![1.3], 1.0), (vec![-1.3], 1.0)]).unwrap();
        assert!(truncate_and_atomize(&mu, &line(16, 1.0), 1.0, 4.0).is_err());
    }

    #[test]
    fn fractional_unit_radius_example() {
        let g = line(8, 1.0);
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let a = truncate_and_atomize(&mu, &g, 1.0, 2.0).unwrap();
        // only ±2 admissible; it absorbs all of (1, 2]: ∫_1^2 z^{-2} dz / π
        let w = 0.5 / PI;
        assert_eq!(a.atoms().len(), 2);
        for atom in a.atoms() {
            assert_eq!(atom.offset[0].abs(), 2);
            assert!((atom.weight - w).abs() < 1e-15);
        }
        assert!((a.discarded_tail() - 2.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn empty_when_radius_exceeds_cutoff() {
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let a = truncate_and_atomize(&mu, &line(16, 1.0), 4.0, 3.0).unwrap();
        assert!(a.atoms().is_empty());
        assert_eq!(a.total_mass(), 0.0);
    }

    #[test]
    fn restricted_mass_is_conserved_in_one_dimension() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let mu = LevyMeasureSpec::fractional(1, alpha).unwrap();
            let g = line(512, 1.0 / 16.0);
            for &(r, cut) in &[(1.0 / 16.0, 8.0), (0.3, 5.17)] {
                let a = truncate_and_atomize(&mu, &g, r, cut).unwrap();
                let exact = mu.annulus_mass(r, cut).unwrap();
                assert!((a.total_mass() - exact).abs() <= 1e-12 * exact, "{alpha} {r} {cut}");
            }
        }
    }

    #[test]
    fn radial_atomization_matches_fractional() {
        let mu = LevyMeasureSpec::fractional(1, 1.5).unwrap();
        let c = fractional_constant(1, 1.5).unwrap();
        let radial = LevyMeasureSpec::radial(1, Arc::new(move |z: f64| c * z.powf(-2.5)), 1.5).unwrap();
        let g = line(256, 0.125);
        let a = truncate_and_atomize(&mu, &g, 0.125, 8.0).unwrap();
        let b = truncate_and_atomize(&radial, &g, 0.125, 8.0).unwrap();
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert_eq!(x.offset, y.offset);
            assert!((x.weight - y.weight).abs() < 1e-10 * x.weight);
        }
    }

    #[test]
    fn atomization_is_exactly_even() {
        let g = Grid::new(2, 32, 4.0).unwrap();
        let mu = LevyMeasureSpec::fractional(2, 0.8).unwrap();
        let a = truncate_and_atomize(&mu, &g, 0.25, 2.0).unwrap();
        let map: BTreeMap<Vec<i64>, f64> = a.atoms().iter().map(|x| (x.offset.clone(), x.weight)).collect();
        for (o, w) in &map {
            let neg: Vec<i64> = o.iter().map(|v| -v).collect();
            assert_eq!(map[&neg].to_bits(), w.to_bits());
        }
    }

    #[test]
    fn two_dimensional_mass_close_to_annulus() {
        let g = Grid::new(2, 64, 4.0).unwrap();
        let mu = LevyMeasureSpec::fractional(2, 1.0).unwrap();
        let a = truncate_and_atomize(&mu, &g, 0.5, 3.0).unwrap();
        let exact = mu.annulus_mass(0.5, 3.0).unwrap();
        // cells straddling the annulus boundary are partially dropped
        assert!((a.total_mass() - exact).abs() < 0.1 * exact);
    }

    #[test]
    fn atom_moments_converge_under_refinement() {
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let (r, cut) = (0.25, 4.0);
        let exact_sigma = mu.near_second_moments(1.0).unwrap()[0] - mu.near_second_moments(r).unwrap()[0];
        let errs: Vec<f64> = [16usize, 32, 64, 128]
            .iter()
            .map(|&m| {
                let g = Grid::new(1, m * 8, 4.0).unwrap();
                let a = truncate_and_atomize(&mu, &g, r, cut).unwrap();
                (a.moments().0 - exact_sigma).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn shift_ratio_examples() {
        let g = line(8, 0.5);
        let mu = truncate_and_atomize(&unit_pair(), &g, 0.5, 2.0).unwrap();
        assert_eq!(shift_bound_ratio(&KernelField::from_atoms(&mu)), 1.0);

        let mut k = KernelField::from_atoms(&mu);
        for w in &mut k.weights {
            w[3] *= 2.0;
        }
        assert_eq!(shift_bound_ratio(&k), 2.0);

        let mut k = KernelField::from_atoms(&mu);
        k.weights[0][4] = 0.0;
        assert_eq!(shift_bound_ratio(&k), f64::INFINITY);
    }

    #[test]
    fn comparability_examples() {
        let g = Grid::new(1, 64, PI).unwrap();
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let a = truncate_and_atomize(&mu, &g, g.spacing(), 2.0).unwrap();
        let (m, mm) = comparability_bounds(&KernelField::from_atoms(&a), &a).unwrap();
        assert_eq!((m, mm), (1.0, 1.0));
        let (m, mm) = comparability_bounds(&KernelField::from_atoms(&a.scaled(3.0).unwrap()), &a).unwrap();
        assert!((m - 3.0).abs() < 1e-15 && (mm - 3.0).abs() < 1e-15);

        let k = KernelField::modulated(&a, |x| 2.0 + x[0].sin()).unwrap();
        let (m, mm) = comparability_bounds(&k, &a).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| 2.0 + g.coordinate(i).sin()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((m - lo).abs() < 1e-14 && (mm - hi).abs() < 1e-14);
        assert!((lo - 1.0).abs() < 2e-3 && (hi - 3.0).abs() < 2e-3);

        let other = truncate_and_atomize(&mu, &g, g.spacing(), 1.0).unwrap();
        assert!(comparability_bounds(&k, &other).is_err());
    }

    #[test]
    fn symmetric_modulation_has_no_symmetry_defect() {
        let g = Grid::new(1, 32, 2.0).unwrap();
        let mu = LevyMeasureSpec::fractional(1, 1.0).unwrap();
        let a = truncate_and_atomize(&mu, &g, g.spacing(), 1.0).unwrap();
        let k = KernelField::symmetric_modulation(&a, |x| 1.5 + x[0].cos()).unwrap();
        assert!(k.symmetry_defect() < 1e-15);
        let k = KernelField::modulated(&a, |x| 1.5 + x[0].cos()).unwrap();
        assert!(k.symmetry_defect() > 1e-3);
    }
}
