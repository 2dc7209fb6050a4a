//! Monotone nonlinearities `φ`, their mollifications `φ_n`, primitives, the
//! L^p companion `Ξ_n`, and Stroock–Varopoulos chain triples.

use std::sync::Arc;

use crate::energy::{chain_gap, EnergyKernel, PathFunction};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive, bump, bump_derivative, gl16, gl64};

/// Name reported when `φ` is not continuous and nondecreasing.
pub const PHI_MONOTONE: &str = "phi-monotone";

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// `φ(u) = u |u|^{m−1}`.
    Pme { m: f64 },
    /// `φ(u) = sign(u) max(|u| − a, 0)`.
    Stefan { latent: f64 },
    Linear,
    /// Piecewise linear through the given points, constant beyond them.
    Table { points: Vec<(f64, f64)> },
}

/// A nonlinearity with its mollification index (`n = 0` means no mollification).
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    n: u32,
    /// `(φ∗ω_n)(0)` and `(Φ∗ω_n)(0)`.
    at_zero: (f64, f64),
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, n: u32) -> Result<Self> {
        let kind = match kind {
            NonlinearityKind::Pme { m } => {
                if !(m.is_finite() && m > 0.0) {
                    return Err(Error::Domain(format!("porous-medium exponent must be positive, got {m}")));
                }
                NonlinearityKind::Pme { m }
            }
            NonlinearityKind::Stefan { latent } => {
                if !(latent.is_finite() && latent > 0.0) {
                    return Err(Error::Domain(format!("latent heat must be positive, got {latent}")));
                }
                NonlinearityKind::Stefan { latent }
            }
            NonlinearityKind::Linear => NonlinearityKind::Linear,
            NonlinearityKind::Table { points } => NonlinearityKind::Table { points: normalize_table(points)? },
        };
        Ok(Self::assemble(kind, n))
    }

    fn assemble(kind: NonlinearityKind, n: u32) -> Self {
        let mut spec = Self { kind, n, at_zero: (0.0, 0.0) };
        if n > 0 && !spec.is_linear() {
            spec.at_zero = (
                spec.mollify(|v| spec.phi(v), 0.0),
                spec.mollify(|v| spec.primitive(v), 0.0),
            );
        }
        spec
    }

    pub fn pme(m: f64, n: u32) -> Result<Self> {
        Self::new(NonlinearityKind::Pme { m }, n)
    }

    pub fn linear() -> Self {
        Self::assemble(NonlinearityKind::Linear, 0)
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn index(&self) -> u32 {
        self.n
    }

    pub fn with_index(&self, n: u32) -> Self {
        Self::assemble(self.kind.clone(), n)
    }

    pub fn is_linear(&self) -> bool {
        self.kind == NonlinearityKind::Linear
    }

    /// The unmollified `φ(u)`.
    pub fn phi(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Pme { m } => u.signum() * u.abs().powf(*m) * (u != 0.0) as u8 as f64,
            NonlinearityKind::Stefan { latent } => u.signum() * (u.abs() - latent).max(0.0),
            NonlinearityKind::Linear => u,
            NonlinearityKind::Table { points } => table_value(points, u),
        }
    }

    /// `φ'(u)` where it exists (one-sided slope at table nodes).
    pub fn phi_derivative(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Pme { m } => {
                if u == 0.0 {
                    if *m > 1.0 {
                        0.0
                    } else if *m == 1.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    m * u.abs().powf(m - 1.0)
                }
            }
            NonlinearityKind::Stefan { latent } => (u.abs() > *latent) as u8 as f64,
            NonlinearityKind::Linear => 1.0,
            NonlinearityKind::Table { points } => table_slope(points, u),
        }
    }

    /// `Φ(w) = ∫_0^w φ`.
    pub fn primitive(&self, w: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Pme { m } => w.abs().powf(m + 1.0) / (m + 1.0),
            NonlinearityKind::Stefan { latent } => {
                let e = (w.abs() - latent).max(0.0);
                0.5 * e * e
            }
            NonlinearityKind::Linear => 0.5 * w * w,
            NonlinearityKind::Table { points } => table_primitive(points, w),
        }
    }

    /// Whether `φ` has an unbounded higher derivative at its kinks, calling for
    /// geometrically graded panels there.
    fn singular_kinks(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Pme { m } if m.fract() != 0.0)
    }

    /// Points where `φ` fails to be smooth.
    fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            NonlinearityKind::Pme { .. } => vec![0.0],
            NonlinearityKind::Stefan { latent } => vec![-latent, *latent],
            NonlinearityKind::Linear => Vec::new(),
            NonlinearityKind::Table { points } => points.iter().map(|p| p.0).collect(),
        }
    }

    /// `∫ g(u − s/n) ω(s) ds / ∫ ω` with 64-point panels split at 0 and at kinks of `g`.
    fn mollify(&self, g: impl Fn(f64) -> f64, u: f64) -> f64 {
        self.mollify_with(g, u, bump)
    }

    fn mollify_with(&self, g: impl Fn(f64) -> f64, u: f64, kernel: fn(f64) -> f64) -> f64 {
        let n = self.n as f64;
        let mut cuts = vec![-1.0, 0.0, 1.0];
        let mut kinks = Vec::new();
        for k in self.kinks() {
            let s = n * (u - k);
            if s > -1.0 && s < 1.0 {
                cuts.push(s);
                kinks.push(s);
            }
        }
        if self.singular_kinks() {
            for &k in &kinks {
                for end in [-1.0, 1.0] {
                    for j in 1..=16 {
                        cuts.push(k + (end - k) * 0.25f64.powi(j));
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let rule = gl64();
        let mut acc = 0.0;
        let mut norm = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let s = mid + half * x;
                let k = kernel(s) * wt * half;
                acc += k * g(u - s / n);
                norm += bump(s) * wt * half;
            }
        }
        acc / norm
    }

    /// `φ_n(u) = (φ ∗ ω_n)(u) − (φ ∗ ω_n)(0)`; `φ` itself when `n = 0`.
    pub fn phi_n(&self, u: f64) -> f64 {
        if self.n == 0 || self.is_linear() {
            return self.phi(u);
        }
        if u == 0.0 {
            return 0.0;
        }
        self.mollify(|v| self.phi(v), u) - self.at_zero.0
    }

    /// `φ_n'(u) = ∫ φ(u − s/n) n ω'(s) ds`, differentiating under the convolution.
    pub fn phi_n_derivative(&self, u: f64) -> f64 {
        if self.n == 0 || self.is_linear() {
            return self.phi_derivative(u);
        }
        let n = self.n as f64;
        let d = self.mollify_with(|v| self.phi(v), u, bump_derivative) * n;
        // φ nondecreasing makes the exact value nonnegative; clip rounding noise
        d.max(0.0)
    }

    /// `Φ_n(w) = ∫_0^w φ_n`, via `(Φ∗ω_n)(w) − (Φ∗ω_n)(0) − w (φ∗ω_n)(0)`.
    pub fn primitive_n(&self, w: f64) -> f64 {
        if self.n == 0 || self.is_linear() {
            return self.primitive(w);
        }
        if w == 0.0 {
            return 0.0;
        }
        (self.mollify(|v| self.primitive(v), w) - self.at_zero.1 - w * self.at_zero.0).max(0.0)
    }

    /// Upper bound for the Lipschitz constant of `φ_n` on `[−U, U]`.
    ///
    /// Analytic where a closed form exists, otherwise the largest of `2^14`
    /// sampled values of `φ_n'` with a 1% margin.
    pub fn lipschitz_bound(&self, range: f64) -> Result<f64> {
        let u = range.abs();
        let reach = if self.n == 0 { 0.0 } else { 1.0 / self.n as f64 };
        let analytic = match &self.kind {
            NonlinearityKind::Pme { m } if *m >= 1.0 => Some(m * (u + reach).powf(m - 1.0)),
            NonlinearityKind::Stefan { latent } => Some(if u + reach > *latent { 1.0 } else { 0.0 }),
            NonlinearityKind::Linear => Some(1.0),
            NonlinearityKind::Table { points } => {
                Some(points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).fold(0.0, f64::max))
            }
            NonlinearityKind::Pme { .. } => None,
        };
        if let Some(v) = analytic {
            return Ok(v);
        }
        if self.n == 0 {
            return Err(Error::Precondition(
                "φ has unbounded slope at 0; a mollification index n ≥ 1 is needed".into(),
            ));
        }
        let samples = 1usize << 14;
        let mut best = 0.0_f64;
        for i in 0..=samples {
            let v = -u + 2.0 * u * i as f64 / samples as f64;
            best = best.max(self.phi_n_derivative(v));
        }
        Ok(best * 1.01)
    }

    /// Checks `(a−b)(φ_n(a)−φ_n(b)) ≥ 0` on a uniform sample of `[−U, U]`.
    pub fn check_monotone(&self, range: f64, samples: usize) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=samples {
            let v = -range + 2.0 * range * i as f64 / samples.max(1) as f64;
            let p = self.phi_n(v);
            if p < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(Error::Assumption {
                    assumption: PHI_MONOTONE,
                    detail: format!("φ_n decreases near u = {v}"),
                });
            }
            prev = p;
        }
        Ok(())
    }
}

fn normalize_table(mut points: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    if points.len() < 2 {
        return Err(Error::Domain("a table nonlinearity needs at least two points".into()));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Domain("table entries must be finite".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Domain(format!("duplicate table abscissa {}", w[0].0)));
        }
        if w[1].1 < w[0].1 {
            return Err(Error::Assumption {
                assumption: PHI_MONOTONE,
                detail: format!("table decreases between u = {} and u = {}", w[0].0, w[1].0),
            });
        }
    }
    let at_zero = table_value(&points, 0.0);
    for p in &mut points {
        p.1 -= at_zero;
    }
    Ok(points)
}

fn table_value(points: &[(f64, f64)], u: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if u <= first.0 {
        return first.1;
    }
    if u >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= u) - 1;
    let (a, b) = (points[i], points[i + 1]);
    a.1 + (b.1 - a.1) * (u - a.0) / (b.0 - a.0)
}

fn table_slope(points: &[(f64, f64)], u: f64) -> f64 {
    if u < points[0].0 || u >= points[points.len() - 1].0 {
        return 0.0;
    }
    let i = points.partition_point(|p| p.0 <= u) - 1;
    let (a, b) = (points[i], points[i + 1]);
    (b.1 - a.1) / (b.0 - a.0)
}

/// Exact integral of the piecewise-linear table from 0 to `w`.
fn table_primitive(points: &[(f64, f64)], w: f64) -> f64 {
    let (lo, hi, sign) = if w >= 0.0 { (0.0, w, 1.0) } else { (w, 0.0, -1.0) };
    let mut cuts = vec![lo, hi];
    cuts.extend(points.iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
    cuts.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for c in cuts.windows(2) {
        acc += 0.5 * (c[1] - c[0]) * (table_value(points, c[0]) + table_value(points, c[1]));
    }
    sign * acc
}

/// Certificate that `sup_{0<|s|<R} |φ(s)| / |s|^β` is finite on sampled points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderCertificate {
    pub beta: f64,
    pub radius: f64,
    pub constant: f64,
}

pub fn holder_certificate(spec: &NonlinearitySpec, beta: f64, radius: f64) -> Result<HoelderCertificate> {
    if !(beta > 0.0 && beta <= 1.0) || !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("need β in (0,1] and R > 0, got β={beta}, R={radius}")));
    }
    // geometric samples down to R·2^{-40} on both sides
    let mut ratios = Vec::new();
    for i in 0..=640 {
        let s = radius * 2f64.powf(-(i as f64) / 16.0);
        for v in [s, -s] {
            ratios.push((s, spec.phi(v).abs() / s.powf(beta)));
        }
    }
    let constant = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    // growth toward the origin means the ratio is unbounded
    let inner = ratios.iter().rev().take(64).map(|r| r.1).fold(0.0, f64::max);
    let outer = ratios.iter().rev().skip(64).take(64).map(|r| r.1).fold(0.0, f64::max);
    if !constant.is_finite() || inner > outer * (1.0 + 1e-6) + 1e-300 {
        return Err(Error::Assumption {
            assumption: "phi-holder",
            detail: format!("|φ(s)|/|s|^{beta} grows as s → 0"),
        });
    }
    Ok(HoelderCertificate { beta, radius, constant })
}

/// `Λ'(ξ) = p |ξ|^{p−2} ξ` for `Λ(ξ) = |ξ|^p`.
pub fn lp_derivative(p: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        0.0
    } else {
        p * xi.signum() * xi.abs().powf(p - 1.0)
    }
}

/// `Λ''(ξ) = p(p−1)|ξ|^{p−2}`.
pub fn lp_second_derivative(p: f64, xi: f64) -> f64 {
    p * (p - 1.0) * xi.abs().powf(p - 2.0)
}

/// Regularized `Λ''_δ(ξ) = p(p−1)(δ² + ξ²)^{(p−2)/2}`; for `p < 2` it lies below
/// `Λ''` and increases to it as `δ → 0`.
pub fn lp_second_derivative_regularized(p: f64, delta: f64, xi: f64) -> f64 {
    p * (p - 1.0) * (delta * delta + xi * xi).powf(0.5 * (p - 2.0))
}

/// Regularization levels used for `p < 2`, coarsest first.
pub const XI_DELTAS: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn xi_density(spec: &NonlinearitySpec, p: f64, delta: Option<f64>, xi: f64) -> f64 {
    let lam = match delta {
        Some(d) => lp_second_derivative_regularized(p, d, xi),
        None => lp_second_derivative(p, xi),
    };
    let d = spec.phi_n_derivative(xi);
    if d == 0.0 {
        0.0
    } else {
        (lam * d).sqrt()
    }
}

fn xi_integral(spec: &NonlinearitySpec, p: f64, delta: Option<f64>, w: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = if w > 0.0 { (0.0, w) } else { (w, 0.0) };
    Ok(w.signum() * xi_piece(spec, p, delta, lo, hi)?)
}

/// `∫_lo^hi √(Λ'' φ_n')` for `lo ≤ hi`.
fn xi_piece(spec: &NonlinearitySpec, p: f64, delta: Option<f64>, lo: f64, hi: f64) -> Result<f64> {
    let f = |x: f64| xi_density(spec, p, delta, x);
    let mut cuts = vec![lo, hi];
    if let Some(d) = delta {
        for c in [10.0 * d, -10.0 * d] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for c in cuts.windows(2) {
        total += adaptive(&f, c[0], c[1], 1e-13)
            .ok_or_else(|| Error::Precondition(format!("Ξ quadrature failed on [{}, {}]", c[0], c[1])))?;
    }
    Ok(total)
}

/// `Ξ_n(w)` for `p ≥ 2` through `ξ = w s^{2/p}`, which turns the weight
/// `|ξ|^{(p−2)/2}` into a constant: `(2/p) √(p(p−1)) |w|^{p/2} ∫_0^1 √φ_n'(w s^{2/p}) ds`.
fn xi_near_zero(spec: &NonlinearitySpec, p: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let e = 2.0 / p;
    let mean = gl16().integrate(0.0, 1.0, |s| spec.phi_n_derivative(w * s.powf(e)).sqrt());
    w.signum() * e * (p * (p - 1.0)).sqrt() * w.abs().powf(0.5 * p) * mean
}

fn check_xi_args(spec: &NonlinearitySpec, p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("Ξ needs p > 1, got {p}")));
    }
    if spec.n == 0 && !spec.is_linear() {
        return Err(Error::Precondition("Ξ_n needs a mollification index n ≥ 1".into()));
    }
    Ok(())
}

/// `Ξ_n(w) = ∫_0^w √(Λ''(ξ) φ_n'(ξ)) dξ` with `Λ(ξ) = |ξ|^p`.
///
/// For `p < 2` the integrand is singular at 0; it is replaced by the
/// regularized `Λ''_δ` for each δ in [`XI_DELTAS`], the values must increase
/// in magnitude as δ shrinks, and the finest one is returned.
pub fn xi_n(spec: &NonlinearitySpec, p: f64, w: f64) -> Result<f64> {
    check_xi_args(spec, p)?;
    if p >= 2.0 {
        return xi_integral(spec, p, None, w);
    }
    let mut prev = 0.0_f64;
    let mut last = 0.0;
    for &d in &XI_DELTAS {
        let v = xi_integral(spec, p, Some(d), w)?;
        if v.abs() < prev * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!("Ξ_δ(w={w}) is not monotone in δ at δ = {d}")));
        }
        prev = v.abs();
        last = v;
    }
    Ok(last)
}

/// Tabulated `Ξ_n` on `[−U, U]`: exact cumulative integrals at nodes and cubic
/// Hermite interpolation in between.
#[derive(Debug, Clone)]
pub struct XiTable {
    spec: NonlinearitySpec,
    p: f64,
    delta: Option<f64>,
    step: f64,
    positive: Vec<(f64, f64)>,
    negative: Vec<(f64, f64)>,
}

impl XiTable {
    pub fn new(spec: &NonlinearitySpec, p: f64, range: f64) -> Result<Self> {
        check_xi_args(spec, p)?;
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::Domain(format!("table range must be positive, got {range}")));
        }
        let delta = if p < 2.0 { Some(XI_DELTAS[XI_DELTAS.len() - 1]) } else { None };
        let cells = 2048usize;
        let step = range / cells as f64;
        let build = |sign: f64| -> Result<Vec<(f64, f64)>> {
            let mut out = Vec::with_capacity(cells + 1);
            let mut acc = 0.0;
            out.push((0.0, xi_density(spec, p, delta, 0.0)));
            // magnitudes |Ξ| and slopes in |w|
            for i in 0..cells {
                let a = i as f64 * step;
                let b = (i + 1) as f64 * step;
                let (lo, hi) = if sign > 0.0 { (a, b) } else { (-b, -a) };
                acc += match delta {
                    None if i == 0 => xi_near_zero(spec, p, sign * b).abs(),
                    Some(d) if a < 20.0 * d => xi_piece(spec, p, delta, lo, hi)?,
                    // the integrand is smooth on the scale of a cell here
                    _ => gl16().integrate(lo, hi, |x| xi_density(spec, p, delta, x)),
                };
                out.push((acc, xi_density(spec, p, delta, sign * b)));
            }
            Ok(out)
        };
        Ok(Self { spec: spec.clone(), p, delta, step, positive: build(1.0)?, negative: build(-1.0)? })
    }

    pub fn range(&self) -> f64 {
        self.step * (self.positive.len() - 1) as f64
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let a = w.abs();
        // the first cell carries the δ-scale structure of the singular weight
        if a < self.step && self.delta.is_none() {
            return xi_near_zero(&self.spec, self.p, w);
        }
        if a < self.step || a > self.range() {
            return xi_integral(&self.spec, self.p, self.delta, w).unwrap_or(f64::NAN);
        }
        let table = if w > 0.0 { &self.positive } else { &self.negative };
        let i = ((a / self.step) as usize).min(table.len() - 2);
        let t = a / self.step - i as f64;
        let (y0, d0) = table[i];
        let (y1, d1) = table[i + 1];
        let h = self.step;
        // Hermite basis on the unit interval, in |w|
        let s = w.signum();
        let h00 = 2.0 * t * t * t - 3.0 * t * t + 1.0;
        let h10 = t * t * t - 2.0 * t * t + t;
        let h01 = -2.0 * t * t * t + 3.0 * t * t;
        let h11 = t * t * t - t * t;
        s * (h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1)
    }

    /// `Ξ_n'(w)`, exact rather than interpolated.
    pub fn derivative(&self, w: f64) -> f64 {
        xi_density(&self.spec, self.p, self.delta, w)
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Functions `(Q, R, S)` with derivatives, expected to satisfy `(S')² ≤ Q' R'`.
#[derive(Clone)]
pub struct ChainTriple {
    pub q: ScalarFn,
    pub r: ScalarFn,
    pub s: ScalarFn,
    pub dq: ScalarFn,
    pub dr: ScalarFn,
    pub ds: ScalarFn,
}

impl std::fmt::Debug for ChainTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChainTriple").finish_non_exhaustive()
    }
}

impl ChainTriple {
    pub fn identity() -> Self {
        let id: ScalarFn = Arc::new(|x| x);
        let one: ScalarFn = Arc::new(|_| 1.0);
        Self { q: id.clone(), r: id.clone(), s: id, dq: one.clone(), dr: one.clone(), ds: one }
    }

    /// `(Λ'(·; p), φ_n, Ξ_n)` with `Ξ_n` tabulated on `[−U, U]`.
    pub fn lp(spec: &NonlinearitySpec, p: f64, range: f64) -> Result<Self> {
        let table = Arc::new(XiTable::new(spec, p, range)?);
        let s1 = spec.clone();
        let s2 = spec.clone();
        let t1 = table.clone();
        let t2 = table;
        Ok(Self {
            q: Arc::new(move |x| lp_derivative(p, x)),
            r: Arc::new(move |x| s1.phi_n(x)),
            s: Arc::new(move |x| t1.eval(x)),
            dq: Arc::new(move |x| lp_second_derivative(p, x)),
            dr: Arc::new(move |x| s2.phi_n_derivative(x)),
            ds: Arc::new(move |x| t2.derivative(x)),
        })
    }

    /// Checks `(S')² ≤ Q'R'` at `samples + 1` points of `[lo, hi]`.
    pub fn validate(&self, lo: f64, hi: f64, samples: usize) -> Result<()> {
        for i in 0..=samples {
            let x = lo + (hi - lo) * i as f64 / samples.max(1) as f64;
            let ds = (self.ds)(x);
            if ds == 0.0 {
                continue;
            }
            let rhs = (self.dq)(x) * (self.dr)(x);
            if !(ds * ds <= rhs * (1.0 + 1e-9) + 1e-14) {
                return Err(Error::Precondition(format!(
                    "(S')² = {} exceeds Q'R' = {rhs} at {x}",
                    ds * ds
                )));
            }
        }
        Ok(())
    }
}

/// `∫_0^T 𝓔[Q(ψ), R(ψ)] dt − |S(ψ)|²_{T,E}`, evaluated pointwise in the pair
/// sum so that the chain inequality makes every term nonnegative.
pub fn sv_gap(triple: &ChainTriple, psi: &PathFunction, kernel: &dyn EnergyKernel) -> Result<f64> {
    if psi.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    let lo = psi.frames().iter().map(|f| f.min()).fold(f64::INFINITY, f64::min);
    let hi = psi.frames().iter().map(|f| f.max()).fold(f64::NEG_INFINITY, f64::max);
    triple.validate(lo, hi, 1024)?;
    let mut total = Vec::with_capacity(psi.intervals());
    for frame in &psi.frames()[..psi.intervals()] {
        let q: Vec<f64> = frame.values().iter().map(|&v| (triple.q)(v)).collect();
        let r: Vec<f64> = frame.values().iter().map(|&v| (triple.r)(v)).collect();
        let s: Vec<f64> = frame.values().iter().map(|&v| (triple.s)(v)).collect();
        total.push(chain_gap(kernel, &q, &r, &s)?);
    }
    Ok(psi.dt() * crate::reduce::pairwise_sum(&total))
}
