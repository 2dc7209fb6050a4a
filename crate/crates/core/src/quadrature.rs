//! Gauss–Legendre rules, adaptive bisection, and the standard bump mollifier.

use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Globally adaptive bisection: the interval with the largest error estimate
/// (16-point rule against its two halves) is split until the summed estimate
/// drops below `tol`.
///
/// Returns `None` if 4000 splits do not suffice or the integrand produces
/// non-finite values.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    struct Piece {
        a: f64,
        b: f64,
        value: f64,
        err: f64,
    }
    let rule = gl16();
    let eval = |a: f64, b: f64| -> Option<Piece> {
        let mid = 0.5 * (a + b);
        let whole = rule.integrate(a, b, f);
        let value = rule.integrate(a, mid, f) + rule.integrate(mid, b, f);
        if !(value.is_finite() && whole.is_finite()) {
            return None;
        }
        Some(Piece { a, b, value, err: (value - whole).abs() })
    };
    if a == b {
        return Some(0.0);
    }
    let mut pieces = vec![eval(a, b)?];
    for _ in 0..4000 {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.err).sum();
        if err <= tol.max(1e-15 * total.abs()) {
            return Some(total);
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].err.total_cmp(&pieces[j].err))
            .expect("nonempty");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return None;
        }
        pieces.push(eval(p.a, mid)?);
        pieces.push(eval(mid, p.b)?);
    }
    None
}

/// Integral over [a, ∞) through the substitution s = a / t.
pub fn adaptive_to_infinity(f: &dyn Fn(f64) -> f64, a: f64, tol: f64) -> Option<f64> {
    assert!(a > 0.0);
    let g = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            let s = a / t;
            f(s) * a / (t * t)
        }
    };
    adaptive(&g, 0.0, 1.0, tol)
}

fn bump_raw(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// ∫_{-1}^{1} exp(-1/(1-s²)) ds, two 64-point panels.
pub fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        let rule = gl64();
        rule.integrate(-1.0, 0.0, bump_raw) + rule.integrate(0.0, 1.0, bump_raw)
    })
}

/// Normalized 1-D bump `ω(s) = exp(-1/(1-s²)) / Z` supported on |s| < 1.
pub fn bump(s: f64) -> f64 {
    bump_raw(s) / bump_mass()
}

/// Derivative of [`bump`].
pub fn bump_derivative(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        bump(s) * (-2.0 * s / (q * q))
    }
}

/// Unnormalized radial bump profile in N dimensions, `exp(-1/(1-|s|²))`.
pub fn bump_profile(radius_sq: f64) -> f64 {
    let q = 1.0 - radius_sq;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}
