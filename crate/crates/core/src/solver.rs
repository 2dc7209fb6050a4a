//! Forward-Euler realization of `∂ₜu = 𝓛^{μ_r}[φ_n(u)]`, refinement studies,
//! and the budget / uniqueness reports computed from trajectories.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{bilinear, chain_gap, PathFunction};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::measures::{truncate_and_atomize, AtomMeasure, LevyMeasureSpec, MeasureKind};
use crate::nonlinearity::{lp_derivative, NonlinearitySpec, XiTable};
use crate::operators::{fourier_fractional, NonlocalOperator, TruncatedOperator};
use crate::reduce::{pairwise_sum, pairwise_sum_by};

/// Relative slack allowed when refusing a time step above the bound.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// The largest step allowed by [`cfl_dt`] that divides the final time.
    Auto,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: Grid,
    pub measure: LevyMeasureSpec,
    /// Truncation radius: atoms live on `r < |z| ≤ tail_cutoff`.
    pub r: f64,
    pub tail_cutoff: f64,
    /// Carries the mollification index `n`.
    pub nonlinearity: NonlinearitySpec,
    pub final_time: f64,
    pub dt: TimeStep,
    pub cfl_theta: f64,
    pub initial: GridFunction,
}

impl SolverConfig {
    pub fn with_r_n(&self, r: f64, n: u32) -> Self {
        let mut c = self.clone();
        c.r = r;
        c.nonlinearity = self.nonlinearity.with_index(n);
        c
    }

    pub fn atoms(&self) -> Result<AtomMeasure> {
        truncate_and_atomize(&self.measure, &self.grid, self.r, self.tail_cutoff)
    }

    fn validate(&self) -> Result<()> {
        if self.initial.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            return Err(Error::Domain(format!("final time must be positive, got {}", self.final_time)));
        }
        if !(self.cfl_theta > 0.0 && self.cfl_theta <= 1.0) {
            return Err(Error::Domain(format!("CFL factor must lie in (0,1], got {}", self.cfl_theta)));
        }
        Ok(())
    }
}

/// `Δt = θ / (2 · Lip(φ_n) · μ_r(ℝ^N))`: the update coefficient of `u(x)` stays
/// at least `1 − θ/2`, so the step is order preserving.
pub fn cfl_dt(atoms: &AtomMeasure, lipschitz: f64, theta: f64) -> Result<f64> {
    let mass = atoms.total_mass();
    if !(mass > 0.0) {
        return Err(Error::Precondition(
            "the truncated measure has zero mass: the solution is constant in time, no step needed".into(),
        ));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Precondition(format!(
            "Lipschitz constant of φ_n is {lipschitz}: the flux is constant on the data range and nothing evolves"
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Domain(format!("CFL factor must lie in (0,1], got {theta}")));
    }
    Ok(theta / (2.0 * lipschitz * mass))
}

fn step_into(u: &[f64], op: &TruncatedOperator, spec: &NonlinearitySpec, dt: f64, phi: &mut [f64], out: &mut [f64]) {
    phi.par_iter_mut().with_min_len(256).zip(u.par_iter()).for_each(|(p, &v)| *p = spec.phi_n(v));
    op.apply_slice(phi, out);
    out.par_iter_mut().with_min_len(1024).zip(u.par_iter()).for_each(|(o, &v)| *o = v + dt * *o);
}

/// One explicit step `u + Δt L[φ_n(u)]`, refused when `Δt` exceeds the CFL bound
/// for the range `[−‖u‖_∞, ‖u‖_∞]`.
pub fn step(u: &GridFunction, op: &TruncatedOperator, spec: &NonlinearitySpec, dt: f64) -> Result<GridFunction> {
    if u.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let range = u.lp_norm(f64::INFINITY)?;
    if op.atoms().total_mass() > 0.0 {
        let lip = spec.lipschitz_bound(range)?;
        if lip > 0.0 {
            let bound = cfl_dt(op.atoms(), lip, 1.0)?;
            if dt > bound * (1.0 + CFL_SLACK) {
                return Err(Error::CflViolation { dt, bound });
            }
        }
    }
    let n = u.values().len();
    let mut phi = vec![0.0; n];
    let mut out = vec![0.0; n];
    step_into(u.values(), op, spec, dt, &mut phi, &mut out);
    GridFunction::new(*u.grid(), out)
}

/// A computed solution together with everything needed to audit it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: PathFunction,
    pub atoms: AtomMeasure,
    pub nonlinearity: NonlinearitySpec,
    pub lipschitz: f64,
    pub cfl_bound: f64,
    pub r: f64,
    pub tail_cutoff: f64,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.path.dt()
    }

    /// Every `stride`-th frame.
    pub fn subsample(&self, stride: usize) -> Result<PathFunction> {
        if stride == 0 || self.path.intervals() % stride != 0 {
            return Err(Error::Precondition(format!(
                "stride {stride} does not divide {} intervals",
                self.path.intervals()
            )));
        }
        let frames = self.path.frames().iter().step_by(stride).cloned().collect();
        PathFunction::uniform(*self.path.grid(), self.dt() * stride as f64, frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
    pub min: f64,
    pub max: f64,
    /// `∫ Φ_n(u)`.
    pub phi_integral: f64,
    /// `Σ_{j<k} Δt |φ_n(u^j)|²_E`.
    pub cumulative_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub frame: usize,
    pub magnitude: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub dt: f64,
    pub cfl_bound: f64,
    pub lipschitz: f64,
    pub atom_mass: f64,
    pub discarded_tail: f64,
    pub rows: Vec<DiagnosticsRow>,
    pub violations: Vec<Violation>,
}

pub const CHECK_MASS: &str = "mass-conservation";
pub const CHECK_LP: &str = "lp-decay";
pub const CHECK_ENERGY: &str = "energy-equality";

fn phi_integral(spec: &NonlinearitySpec, u: &GridFunction) -> f64 {
    let v = u.values();
    let vals: Vec<f64> = v.par_iter().with_min_len(256).map(|&x| spec.primitive_n(x)).collect();
    pairwise_sum(&vals) * u.grid().cell_volume()
}

fn resolve_dt(config: &SolverConfig, bound: f64) -> Result<(f64, usize)> {
    let t = config.final_time;
    match config.dt {
        TimeStep::Auto => {
            let steps = (t / bound).ceil().max(1.0) as usize;
            Ok((t / steps as f64, steps))
        }
        TimeStep::Fixed(dt) => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Domain(format!("time step must be positive, got {dt}")));
            }
            if dt > bound * (1.0 + CFL_SLACK) {
                return Err(Error::CflViolation { dt, bound });
            }
            let steps = (t / dt).round();
            if steps < 1.0 || (steps * dt - t).abs() > 1e-9 * t {
                return Err(Error::Precondition(format!("time step {dt} does not divide the final time {t}")));
            }
            Ok((t / steps, steps as usize))
        }
    }
}

/// Time-steps the scheme and collects per-frame diagnostics and violations.
pub fn run(config: &SolverConfig) -> Result<(Trajectory, DiagnosticsReport)> {
    config.validate()?;
    let atoms = config.atoms()?;
    let spec = &config.nonlinearity;
    let u0 = &config.initial;
    let range = u0.lp_norm(f64::INFINITY)?;
    let op = TruncatedOperator::new(atoms.clone());

    let trivial = range == 0.0 || atoms.total_mass() == 0.0;
    let lipschitz = if range == 0.0 { 0.0 } else { spec.lipschitz_bound(range)? };
    let (bound, dt, steps) = if trivial || lipschitz == 0.0 {
        // nothing moves; any step is admissible
        let (dt, steps) = match config.dt {
            TimeStep::Fixed(_) => resolve_dt(config, f64::INFINITY)?,
            TimeStep::Auto => (config.final_time, 1),
        };
        (f64::INFINITY, dt, steps)
    } else {
        let bound = cfl_dt(&atoms, lipschitz, config.cfl_theta)?;
        let hard = cfl_dt(&atoms, lipschitz, 1.0)?;
        let bound = match config.dt {
            TimeStep::Auto => bound,
            TimeStep::Fixed(_) => hard,
        };
        let (dt, steps) = resolve_dt(config, bound)?;
        (hard, dt, steps)
    };

    let grid = config.grid;
    let n = grid.len();
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(u0.clone());
    let mut phi = vec![0.0; n];
    let mut next = vec![0.0; n];
    for k in 0..steps {
        let u = frames[k].values();
        step_into(u, &op, spec, dt, &mut phi, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { frame: k + 1 });
        }
        frames.push(GridFunction::new(grid, next.clone()).map_err(|_| Error::Blowup { frame: k + 1 })?);
    }
    let path = PathFunction::uniform(grid, dt, frames)?;
    let traj = Trajectory {
        path,
        atoms: atoms.clone(),
        nonlinearity: spec.clone(),
        lipschitz,
        cfl_bound: bound,
        r: config.r,
        tail_cutoff: config.tail_cutoff,
    };
    let report = diagnose(&traj)?;
    Ok((traj, report))
}

fn diagnose(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let path = &traj.path;
    let spec = &traj.nonlinearity;
    let dt = path.dt();
    let frames = path.frames();
    let energies: Vec<f64> = frames
        .iter()
        .map(|u| {
            let p = u.map(|v| spec.phi_n(v))?;
            bilinear(&traj.atoms, &p, &p)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut cumulative = 0.0;
    for (k, u) in frames.iter().enumerate() {
        rows.push(DiagnosticsRow {
            t: path.time(k),
            mass: u.mass(),
            l1: u.lp_norm(1.0)?,
            l2: u.lp_norm(2.0)?,
            l4: u.lp_norm(4.0)?,
            linf: u.lp_norm(f64::INFINITY)?,
            min: u.min(),
            max: u.max(),
            phi_integral: phi_integral(spec, u),
            cumulative_energy: cumulative,
        });
        cumulative += dt * energies[k];
    }

    let mut violations = Vec::new();
    let first = rows[0];
    let mass_tol = 1e-12 * first.l1;
    for (k, row) in rows.iter().enumerate() {
        let drift = (row.mass - first.mass).abs();
        if drift > mass_tol {
            violations.push(Violation { check: CHECK_MASS, frame: k, magnitude: drift, tolerance: mass_tol });
        }
    }
    for (k, w) in rows.windows(2).enumerate() {
        for (a, b) in [(w[0].l1, w[1].l1), (w[0].l2, w[1].l2), (w[0].l4, w[1].l4), (w[0].linf, w[1].linf)] {
            let tol = 1e-10 * a.max(f64::MIN_POSITIVE);
            if b > a + tol {
                violations.push(Violation { check: CHECK_LP, frame: k + 1, magnitude: b - a, tolerance: tol });
            }
        }
    }
    let budget = energy_budget(traj)?;
    for (k, (&res, &bound)) in budget.residuals.iter().zip(&budget.residual_bounds).enumerate() {
        if res < -budget.tolerance || res > bound + budget.tolerance {
            violations.push(Violation {
                check: CHECK_ENERGY,
                frame: k,
                magnitude: res,
                tolerance: bound + budget.tolerance,
            });
        }
    }
    Ok(DiagnosticsReport {
        dt,
        cfl_bound: traj.cfl_bound,
        lipschitz: traj.lipschitz,
        atom_mass: traj.atoms.total_mass(),
        discarded_tail: traj.atoms.discarded_tail(),
        rows,
        violations,
    })
}

/// Discrete energy equality: `residual_k = ∫Φ_n(u^k) + Σ_{j<k} Δt|φ_n(u^j)|²_E − ∫Φ_n(u^0)`.
///
/// For the explicit scheme the residual equals `Σ_j ½ ∫ φ_n'(ξ)(u^{j+1}−u^j)²`,
/// so it is nonnegative and bounded by `½ Lip Σ_j ‖u^{j+1}−u^j‖²₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBudget {
    pub phi_integral: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub residuals: Vec<f64>,
    pub residual_bounds: Vec<f64>,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub dissipation_nondecreasing: bool,
    pub phi_integral_nonincreasing: bool,
}

pub fn energy_budget(traj: &Trajectory) -> Result<EnergyBudget> {
    let path = &traj.path;
    let spec = &traj.nonlinearity;
    let dt = path.dt();
    let frames = path.frames();
    let phi_int: Vec<f64> = frames.iter().map(|u| phi_integral(spec, u)).collect();
    let mut dissipation = Vec::with_capacity(frames.len());
    let mut bounds = Vec::with_capacity(frames.len());
    let mut acc = 0.0;
    let mut bound = 0.0;
    for (k, u) in frames.iter().enumerate() {
        dissipation.push(acc);
        bounds.push(bound);
        if k + 1 < frames.len() {
            let p = u.map(|v| spec.phi_n(v))?;
            acc += dt * bilinear(&traj.atoms, &p, &p)?;
            let step = frames[k + 1].zip_with(u, |a, b| a - b)?.lp_norm(2.0)?;
            bound += 0.5 * traj.lipschitz * step * step;
        }
    }
    let residuals: Vec<f64> =
        phi_int.iter().zip(&dissipation).map(|(p, d)| p + d - phi_int[0]).collect();
    let tolerance = 1e-9 * phi_int[0].abs().max(f64::MIN_POSITIVE);
    let max_abs_residual = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let dissipation_nondecreasing = dissipation.windows(2).all(|w| w[1] >= w[0]);
    let phi_integral_nonincreasing =
        phi_int.windows(2).all(|w| w[1] <= w[0] + max_abs_residual + tolerance);
    Ok(EnergyBudget {
        phi_integral: phi_int,
        dissipation,
        residuals,
        residual_bounds: bounds,
        max_abs_residual,
        tolerance,
        dissipation_nondecreasing,
        phi_integral_nonincreasing,
    })
}

/// Largest energy residual for `Δt` and `Δt/2`, and their ratio.
pub fn energy_residual_ratio(config: &SolverConfig) -> Result<(f64, f64, f64)> {
    let TimeStep::Fixed(dt) = config.dt else {
        return Err(Error::Precondition("a fixed time step is needed for a halving pair".into()));
    };
    let mut fine = config.clone();
    fine.dt = TimeStep::Fixed(0.5 * dt);
    let (coarse, fine) = rayon::join(|| run(config), || run(&fine));
    let a = energy_budget(&coarse?.0)?.max_abs_residual;
    let b = energy_budget(&fine?.0)?.max_abs_residual;
    Ok((a, b, a / b))
}

/// L^p decay and, for finite `p > 1`, the summed inequality
/// `‖u^k‖_p^p + Σ_{j<k} Δt |Ξ_n(u^j)|²_E ≤ ‖u^0‖_p^p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpBudget {
    pub p: f64,
    pub norms: Vec<f64>,
    pub nonincreasing: bool,
    pub worst_increase: f64,
    /// For `p = ∞`: whether the minimum is nondecreasing.
    pub min_nondecreasing: Option<bool>,
    pub xi_energy: Option<Vec<f64>>,
    /// Smallest `‖u^0‖_p^p − ‖u^k‖_p^p − Σ_{j<k} Δt |Ξ_n(u^j)|²_E` over `k ≥ 1`.
    pub min_slack: Option<f64>,
}

pub fn lp_budget(traj: &Trajectory, p: f64) -> Result<LpBudget> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("p must lie in [1, ∞], got {p}")));
    }
    let path = &traj.path;
    let frames = path.frames();
    let norms: Vec<f64> = frames.iter().map(|u| u.lp_norm(p)).collect::<Result<_>>()?;
    let tol = 1e-10 * norms[0].max(f64::MIN_POSITIVE);
    let worst_increase = norms.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let nonincreasing = worst_increase <= tol;
    let min_nondecreasing = if p.is_infinite() {
        Some(frames.windows(2).all(|w| w[1].min() >= w[0].min() - tol))
    } else {
        None
    };
    let (xi_energy, min_slack) = if p.is_finite() && p > 1.0 && (traj.nonlinearity.index() > 0 || traj.nonlinearity.is_linear()) {
        let range = norms_range(frames);
        if range == 0.0 {
            (Some(vec![0.0; frames.len()]), Some(0.0))
        } else {
            let table = XiTable::new(&traj.nonlinearity, p, range * (1.0 + 1e-9))?;
            let mut acc = 0.0;
            let mut cumulative = Vec::with_capacity(frames.len());
            for (k, u) in frames.iter().enumerate() {
                cumulative.push(acc);
                if k + 1 < frames.len() {
                    let xi = u.map(|v| table.eval(v))?;
                    acc += path.dt() * bilinear(&traj.atoms, &xi, &xi)?;
                }
            }
            let base = norms[0].powf(p);
            let slack = norms
                .iter()
                .zip(&cumulative)
                .skip(1)
                .map(|(nk, e)| base - nk.powf(p) - e)
                .fold(f64::INFINITY, f64::min);
            (Some(cumulative), Some(slack))
        }
    } else {
        (None, None)
    };
    Ok(LpBudget { p, norms, nonincreasing, worst_increase, min_nondecreasing, xi_energy, min_slack })
}

fn norms_range(frames: &[GridFunction]) -> f64 {
    frames.iter().map(|u| u.lp_norm(f64::INFINITY).unwrap_or(0.0)).fold(0.0, f64::max)
}

/// Pointwise Stroock–Varopoulos gap of one trajectory for `(Λ'(·;p), φ_n, Ξ_n)`.
pub fn trajectory_sv_gap(traj: &Trajectory, p: f64) -> Result<f64> {
    let range = norms_range(traj.path.frames()) * (1.0 + 1e-9);
    if range == 0.0 {
        return Ok(0.0);
    }
    let table = XiTable::new(&traj.nonlinearity, p, range)?;
    let spec = &traj.nonlinearity;
    let mut parts = Vec::new();
    for u in &traj.path.frames()[..traj.path.intervals()] {
        let q: Vec<f64> = u.values().iter().map(|&v| lp_derivative(p, v)).collect();
        let r: Vec<f64> = u.values().iter().map(|&v| spec.phi_n(v)).collect();
        let s: Vec<f64> = u.values().iter().map(|&v| table.eval(v)).collect();
        parts.push(chain_gap(&traj.atoms, &q, &r, &s)?);
    }
    Ok(traj.dt() * pairwise_sum(&parts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub r: f64,
    pub n: u32,
    /// `sup_t ‖u_j(t) − u_{j+1}(t)‖_{L¹(|x| ≤ R/2)}`; absent for the last level.
    pub successive_difference: Option<f64>,
    /// `sup_t ‖u_j(t) − e^{−t|ξ|^α}u_0‖_∞` when φ is linear and μ fractional.
    pub oracle_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Successive differences strictly decrease (or all vanish).
    pub decreasing: bool,
}

fn ball_l1(a: &GridFunction, b: &GridFunction, radius: f64) -> f64 {
    let g = a.grid();
    let mask: Vec<bool> = (0..g.len())
        .map(|x| g.position(x).iter().map(|v| v * v).sum::<f64>().sqrt() <= radius)
        .collect();
    pairwise_sum_by(g.len(), |x| if mask[x] { (a.values()[x] - b.values()[x]).abs() } else { 0.0 })
        * g.cell_volume()
}

fn nonincreasing_seq(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// Runs `(r_j, n_j)` on a common grid and time step and reports successive
/// sup-in-time L¹ differences on the ball `|x| ≤ R/2`.
pub fn convergence_study(base: &SolverConfig, r_seq: &[f64], n_seq: &[u32]) -> Result<ConvergenceReport> {
    if r_seq.len() != n_seq.len() {
        return Err(Error::Precondition(format!(
            "{} radii for {} mollification indices",
            r_seq.len(),
            n_seq.len()
        )));
    }
    if r_seq.len() < 3 {
        return Err(Error::Precondition(format!(
            "a Cauchy check needs at least 3 levels, got {}",
            r_seq.len()
        )));
    }
    if !nonincreasing_seq(r_seq) || n_seq.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("radii must not increase and indices must not decrease".into()));
    }
    let configs: Vec<SolverConfig> = r_seq.iter().zip(n_seq).map(|(&r, &n)| base.with_r_n(r, n)).collect();
    let range = base.initial.lp_norm(f64::INFINITY)?;
    let mut dt = f64::INFINITY;
    if range > 0.0 {
        for c in &configs {
            let atoms = c.atoms()?;
            if atoms.total_mass() > 0.0 {
                let lip = c.nonlinearity.lipschitz_bound(range)?;
                if lip > 0.0 {
                    dt = dt.min(cfl_dt(&atoms, lip, c.cfl_theta)?);
                }
            }
        }
    }
    let steps = if dt.is_finite() { (base.final_time / dt).ceil().max(1.0) } else { 1.0 };
    let dt = base.final_time / steps;
    let runs: Vec<Trajectory> = configs
        .into_par_iter()
        .map(|mut c| {
            c.dt = TimeStep::Fixed(dt);
            run(&c).map(|(t, _)| t)
        })
        .collect::<Result<_>>()?;

    let radius = 0.5 * base.grid.halfwidth();
    let oracle = match base.measure.kind() {
        MeasureKind::Fractional { alpha, .. } if base.nonlinearity.is_linear() && *alpha < 2.0 => Some(*alpha),
        _ => None,
    };
    let oracle_frames: Option<Vec<GridFunction>> = match oracle {
        Some(alpha) => Some(
            (0..runs[0].path.frames().len())
                .map(|k| fourier_fractional(alpha, runs[0].path.time(k), &base.initial))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let mut rows = Vec::new();
    let mut diffs = Vec::new();
    for (j, traj) in runs.iter().enumerate() {
        let successive = runs.get(j + 1).map(|next| {
            traj.path
                .frames()
                .iter()
                .zip(next.path.frames())
                .map(|(a, b)| ball_l1(a, b, radius))
                .fold(0.0, f64::max)
        });
        if let Some(d) = successive {
            diffs.push(d);
        }
        let oracle_error = oracle_frames.as_ref().map(|of| {
            traj.path
                .frames()
                .iter()
                .zip(of)
                .map(|(a, b)| a.zip_with(b, |x, y| x - y).and_then(|d| d.lp_norm(f64::INFINITY)).unwrap_or(f64::NAN))
                .fold(0.0, f64::max)
        });
        rows.push(ConvergenceRow { level: j, r: traj.r, n: traj.nonlinearity.index(), successive_difference: successive, oracle_error });
    }
    let decreasing = diffs.iter().all(|&d| d == 0.0) || diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport { dt, rows, decreasing })
}

/// Quantities of the uniqueness argument for `U = u − v`, `Φ = φ_n(u) − φ_n(v)`,
/// with `ζ_j = Σ_{i=j}^{K−1} Φ_i Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OleinikReport {
    /// `I = Σ_{k<K} Δt ⟨U_k, Φ_k⟩ ≥ 0`.
    pub i_value: f64,
    /// `Q = ¼ h^N Σ_x Σ_k w_k [(Σ_j F_j)² + Σ_j F_j²]`, `F_j = Δ_k Φ_j Δt`.
    pub q_value: f64,
    /// `Σ_j Δt 𝓔[Φ_j, ζ_j]`, equal to `Q` by the tail-product identity.
    pub zeta_pairing: f64,
    pub q_consistency_defect: f64,
    /// `Σ_j Δt² |Φ_j|²_E`, the explicit-scheme remainder.
    pub scheme_term: f64,
    /// `⟨U_0, ζ_0⟩`, zero when the data agree.
    pub initial_term: f64,
    /// `|I + Q − scheme_term − initial_term|`; zero up to rounding when both
    /// paths solve the same explicit scheme.
    pub balance_defect: f64,
}

/// Evaluates the Oleĭnik quantities for any two paths on a common time grid.
pub fn oleinik_form(
    u: &PathFunction,
    v: &PathFunction,
    spec: &NonlinearitySpec,
    atoms: &AtomMeasure,
) -> Result<OleinikReport> {
    if u.grid() != v.grid() || u.grid() != atoms.grid() {
        return Err(Error::GridMismatch);
    }
    if u.frames().len() != v.frames().len() || u.dt() != v.dt() {
        return Err(Error::InvalidPath("trajectories have different time grids".into()));
    }
    let grid = *u.grid();
    let dt = u.dt();
    let kk = u.intervals();
    let vol = grid.cell_volume();
    let big_u: Vec<GridFunction> =
        u.frames().iter().zip(v.frames()).map(|(a, b)| a.zip_with(b, |x, y| x - y)).collect::<Result<_>>()?;
    let big_phi: Vec<GridFunction> = u
        .frames()
        .iter()
        .zip(v.frames())
        .map(|(a, b)| a.zip_with(b, |x, y| spec.phi_n(x) - spec.phi_n(y)))
        .collect::<Result<_>>()?;

    let i_terms: Vec<f64> = (0..kk).map(|k| big_u[k].inner(&big_phi[k])).collect::<Result<_>>()?;
    let i_value = dt * pairwise_sum(&i_terms);

    // per (x, atom) running sums of F and F²
    let atoms_list = atoms.atoms();
    let n = grid.len();
    let na = atoms_list.len();
    let shifts: Vec<Vec<usize>> = atoms_list.iter().map(|a| grid.shift_table(&a.offset)).collect();
    let mut sum_f = vec![0.0; n * na];
    let mut sum_f2 = vec![0.0; n * na];
    for phi in &big_phi[..kk] {
        let p = phi.values();
        for (k, table) in shifts.iter().enumerate() {
            for x in 0..n {
                let f = (p[table[x]] - p[x]) * dt;
                sum_f[x * na + k] += f;
                sum_f2[x * na + k] += f * f;
            }
        }
    }
    let q_value = 0.25
        * vol
        * pairwise_sum_by(n * na, |i| {
            let w = atoms_list[i % na].weight;
            w * (sum_f[i] * sum_f[i] + sum_f2[i])
        });

    let mut zeta = vec![GridFunction::zeros(grid); kk + 1];
    let mut acc = vec![0.0; n];
    for j in (0..kk).rev() {
        for (a, p) in acc.iter_mut().zip(big_phi[j].values()) {
            *a += p * dt;
        }
        zeta[j] = GridFunction::new(grid, acc.clone())?;
    }
    let zeta_terms: Vec<f64> = (0..kk).map(|j| bilinear(atoms, &big_phi[j], &zeta[j])).collect::<Result<_>>()?;
    let zeta_pairing = dt * pairwise_sum(&zeta_terms);
    let scheme_terms: Vec<f64> = (0..kk).map(|j| bilinear(atoms, &big_phi[j], &big_phi[j])).collect::<Result<_>>()?;
    let scheme_term = dt * dt * pairwise_sum(&scheme_terms);
    let initial_term = big_u[0].inner(&zeta[0])?;
    Ok(OleinikReport {
        i_value,
        q_value,
        zeta_pairing,
        q_consistency_defect: (q_value - zeta_pairing).abs(),
        scheme_term,
        initial_term,
        balance_defect: (i_value + q_value - scheme_term - initial_term).abs(),
    })
}

/// [`oleinik_form`] for two solver runs sharing scheme, times, and initial data.
pub fn oleinik_report(u: &Trajectory, v: &Trajectory) -> Result<OleinikReport> {
    if u.atoms != v.atoms || u.nonlinearity != v.nonlinearity {
        return Err(Error::Precondition("trajectories come from different schemes".into()));
    }
    if u.path.frames()[0] != v.path.frames()[0] {
        return Err(Error::Precondition("trajectories start from different data".into()));
    }
    oleinik_form(&u.path, &v.path, &u.nonlinearity, &u.atoms)
}

/// `(Σ_i Σ_{j≥i} F_i F_j, ½(ΣF)² + ½ΣF²)` by brute force and by the closed form.
pub fn tail_product_identity(f: &[f64]) -> (f64, f64) {
    let mut brute = 0.0;
    for i in 0..f.len() {
        for j in i..f.len() {
            brute += f[i] * f[j];
        }
    }
    let s: f64 = f.iter().sum();
    let s2: f64 = f.iter().map(|x| x * x).sum();
    (brute, 0.5 * s * s + 0.5 * s2)
}
