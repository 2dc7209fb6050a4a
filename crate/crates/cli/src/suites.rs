//! Named property suites run by `verify` and by the `checks` list of a config.

use std::collections::BTreeMap;

use nonlocal_pme::energy::{
    cutoff_x, density_approximation, parabolic_seminorm, sobolev_seminorm_double_integral,
    sobolev_seminorm_fourier, summation_by_parts, PathFunction,
};
use nonlocal_pme::nonlinearity::{sv_gap, ChainTriple};
use nonlocal_pme::operators::{operator_report, TruncatedOperator};
use nonlocal_pme::quadrature::bump;
use nonlocal_pme::solver::{
    energy_budget, oleinik_form, oleinik_report, run, tail_product_identity, trajectory_sv_gap, SolverConfig,
    TimeStep, Trajectory,
};
use nonlocal_pme::{Grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::CliError;

pub const SUITES: [&str; 6] = ["operator", "energy", "stroock-varopoulos", "oleinik", "density", "sobolev"];

const EXACT_TOL: f64 = 1e-12;
const SOBOLEV_TOL: f64 = 0.01;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    /// The estimate the suite exercises.
    pub anchor: &'static str,
    pub pass: bool,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub message: String,
}

impl SuiteResult {
    fn new(suite: &'static str, anchor: &'static str, seed: u64) -> Self {
        Self { suite, anchor, pass: true, seed, metrics: BTreeMap::new(), message: String::new() }
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.pass = false;
            if !self.message.is_empty() {
                self.message.push_str("; ");
            }
            self.message.push_str(&what());
        }
    }

    fn finish(mut self) -> Self {
        if self.pass {
            self.message = format!("{}: ok", self.anchor);
        } else {
            self.message = format!("{} failed: {}", self.anchor, self.message);
        }
        self
    }
}

pub fn needs_trajectory(suite: &str) -> bool {
    matches!(suite, "energy" | "stroock-varopoulos" | "oleinik" | "density")
}

pub fn check_names(names: &[String]) -> Result<(), CliError> {
    for n in names {
        if !SUITES.contains(&n.as_str()) {
            return Err(CliError::Config(format!("unknown suite {n:?}; known suites: {}", SUITES.join(", "))));
        }
    }
    Ok(())
}

pub fn run_suite(
    name: &str,
    config: &SolverConfig,
    traj: Option<&Trajectory>,
    seed: u64,
) -> Result<SuiteResult, CliError> {
    let need = || traj.ok_or_else(|| CliError::Config(format!("suite {name} needs a trajectory")));
    match name {
        "operator" => operator_suite(config, seed),
        "energy" => energy_suite(need()?, seed),
        "stroock-varopoulos" => sv_suite(config, need()?, seed),
        "oleinik" => oleinik_suite(config, need()?, seed),
        "density" => density_suite(config, need()?, seed),
        "sobolev" => sobolev_suite(config, seed),
        other => Err(CliError::Config(format!("unknown suite {other:?}; known suites: {}", SUITES.join(", ")))),
    }
}

fn random_function(grid: Grid, rng: &mut ChaCha8Rng, scale: f64) -> Result<GridFunction, CliError> {
    let v = (0..grid.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    Ok(GridFunction::new(grid, v)?)
}

fn operator_suite(config: &SolverConfig, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("operator", "nonpositive-symmetric-operator", seed);
    let op = TruncatedOperator::new(config.atoms()?);
    let report = operator_report(&op, 32, seed)?;
    res.metric("symmetry_defect", report.symmetry_defect);
    res.metric("row_sum_defect", report.row_sum_defect);
    res.metric("dissipativity_defect", report.dissipativity_defect);
    res.metric("worst_relative", report.worst_relative());
    res.metric("tolerance", EXACT_TOL);
    let worst = report.worst_relative();
    res.require(worst <= EXACT_TOL, || format!("relative defect {worst:e} exceeds {EXACT_TOL:e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sbp: f64 = 0.0;
    for _ in 0..16 {
        let f = random_function(config.grid, &mut rng, 1.0)?;
        let g = random_function(config.grid, &mut rng, 1.0)?;
        sbp = sbp.max(summation_by_parts(&op, &f, &g)?.relative);
    }
    res.metric("summation_by_parts_relative", sbp);
    res.require(sbp <= EXACT_TOL, || format!("integration-by-parts defect {sbp:e} exceeds {EXACT_TOL:e}"));
    Ok(res.finish())
}

fn energy_suite(traj: &Trajectory, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("energy", "energy-equality", seed);
    let budget = energy_budget(traj)?;
    res.metric("max_abs_residual", budget.max_abs_residual);
    res.metric("residual_bound", budget.residual_bounds.last().copied().unwrap_or(0.0));
    res.metric("tolerance", budget.tolerance);
    res.metric("dissipation", budget.dissipation.last().copied().unwrap_or(0.0));
    let within = budget
        .residuals
        .iter()
        .zip(&budget.residual_bounds)
        .all(|(&r, &b)| r >= -budget.tolerance && r <= b + budget.tolerance);
    res.require(within, || "energy residual leaves [0, ½·Lip·Σ‖Δu‖²]".into());
    res.require(budget.dissipation_nondecreasing, || "cumulative energy decreases".into());
    res.require(budget.phi_integral_nonincreasing, || "∫Φ_n(u) increases beyond the residual".into());
    Ok(res.finish())
}

fn sv_suite(config: &SolverConfig, traj: &Trajectory, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("stroock-varopoulos", "stroock-varopoulos-inequality", seed);
    let spec = &traj.nonlinearity;
    if spec.index() == 0 && !spec.is_linear() {
        return Err(CliError::Config("the Stroock-Varopoulos suite needs a mollification index n ≥ 1".into()));
    }
    let range = config.initial.lp_norm(f64::INFINITY)?;
    let range = if range > 0.0 { range } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for p in [1.5, 2.0, 3.0] {
        let triple = ChainTriple::lp(spec, p, range)?;
        for _ in 0..10 {
            let frames = (0..4).map(|_| random_function(config.grid, &mut rng, range)).collect::<Result<_, _>>()?;
            let path = PathFunction::uniform(config.grid, 0.1, frames)?;
            worst = worst.min(sv_gap(&triple, &path, &traj.atoms)?);
        }
        let along = trajectory_sv_gap(traj, p)?;
        res.metric(format!("trajectory_gap_p{p}"), along);
        worst = worst.min(along);
    }
    res.metric("smallest_gap", worst);
    res.metric("tolerance", -EXACT_TOL);
    res.require(worst >= -EXACT_TOL, || format!("gap {worst:e} below {:e}", -EXACT_TOL));
    Ok(res.finish())
}

fn oleinik_suite(config: &SolverConfig, traj: &Trajectory, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("oleinik", "oleinik-uniqueness", seed);
    let same = oleinik_report(traj, traj)?;
    res.metric("self_i", same.i_value);
    res.metric("self_q", same.q_value);
    res.require(same.i_value == 0.0 && same.q_value == 0.0, || "u = v does not give I = Q = 0".into());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_q = f64::INFINITY;
    let mut min_i = f64::INFINITY;
    for _ in 0..8 {
        let mut path = || -> Result<PathFunction, CliError> {
            let frames = (0..5).map(|_| random_function(config.grid, &mut rng, 1.0)).collect::<Result<_, _>>()?;
            Ok(PathFunction::uniform(config.grid, 0.05, frames)?)
        };
        let (u, v) = (path()?, path()?);
        let rep = oleinik_form(&u, &v, &traj.nonlinearity, &traj.atoms)?;
        min_q = min_q.min(rep.q_value);
        min_i = min_i.min(rep.i_value);
    }
    res.metric("random_min_q", min_q);
    res.metric("random_min_i", min_i);
    res.require(min_q >= 0.0, || format!("quadratic form {min_q:e} < 0"));
    res.require(min_i >= 0.0, || format!("monotonicity pairing {min_i:e} < 0"));

    let mut identity: f64 = 0.0;
    for k in 0..=6 {
        let f: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = tail_product_identity(&f);
        identity = identity.max((a - b).abs() / (1.0 + b.abs()));
    }
    res.metric("tail_identity_defect", identity);
    res.require(identity <= EXACT_TOL, || format!("tail-product identity defect {identity:e}"));

    // a second run of the same scheme from half the data
    let mut half = config.clone();
    half.initial = config.initial.scale(0.5)?;
    half.dt = TimeStep::Fixed(traj.dt());
    let (v, _) = run(&half)?;
    let rep = oleinik_form(&traj.path, &v.path, &traj.nonlinearity, &traj.atoms)?;
    let scale = rep.i_value.abs() + rep.q_value + rep.scheme_term + rep.initial_term.abs();
    res.metric("pair_i", rep.i_value);
    res.metric("pair_q", rep.q_value);
    res.metric("pair_scheme_term", rep.scheme_term);
    res.metric("pair_initial_term", rep.initial_term);
    res.metric("pair_balance_defect", rep.balance_defect);
    res.metric("pair_q_consistency_defect", rep.q_consistency_defect);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    res.require(rep.balance_defect <= tol, || format!("balance defect {:e} exceeds {tol:e}", rep.balance_defect));
    Ok(res.finish())
}

fn density_suite(config: &SolverConfig, traj: &Trajectory, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("density", "energy-density-approximation", seed);
    let grid = config.grid;
    let chi = cutoff_x(&grid, 0.25 * grid.halfwidth())?;
    let t_final = traj.path.final_time();
    let frames = traj
        .path
        .frames()
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let s = bump(2.0 * traj.path.time(k) / t_final - 1.0);
            u.zip_with(&chi, |a, b| s * a * b)
        })
        .collect::<Result<_, _>>()?;
    let f = PathFunction::uniform(grid, traj.dt(), frames)?;
    let size = |p: &PathFunction| -> Result<f64, CliError> {
        Ok(p.l2_norm() + p.sup_norm() + parabolic_seminorm(&traj.atoms, p)?)
    };
    let reference = size(&f)?;
    let mut errors = Vec::new();
    let mut constant: f64 = 0.0;
    for scale in [0.2, 0.1, 0.05] {
        let w = density_approximation(&f, scale * t_final)?;
        let e = w.l2_distance(&f)?;
        res.metric(format!("l2_error_delta_{scale}T"), e);
        errors.push(e);
        constant = constant.max(size(&w)?);
    }
    res.metric("uniform_bound", constant);
    res.metric("data_size", reference);
    res.require(errors.windows(2).all(|e| e[1] < e[0]), || format!("L² errors {errors:?} do not decrease"));
    res.require(constant <= reference * (1.0 + 1e-9), || {
        format!("approximants reach size {constant:e} above the data size {reference:e}")
    });
    Ok(res.finish())
}

fn sobolev_suite(config: &SolverConfig, seed: u64) -> Result<SuiteResult, CliError> {
    let mut res = SuiteResult::new("sobolev", "fractional-sobolev-equality", seed);
    if config.grid.dims() != 1 {
        return Err(CliError::Config("the sobolev suite runs on 1-D grids".into()));
    }
    let f = &config.initial;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 1.5] {
        let a = sobolev_seminorm_fourier(alpha, f)?;
        let b = sobolev_seminorm_double_integral(alpha, f)?;
        let rel = if a == 0.0 { b.abs() } else { (a - b).abs() / a };
        res.metric(format!("relative_gap_alpha_{alpha}"), rel);
        worst = worst.max(rel);
    }
    res.metric("tolerance", SOBOLEV_TOL);
    res.require(worst <= SOBOLEV_TOL, || format!("seminorms differ by {:.3}%", 100.0 * worst));
    Ok(res.finish())
}
