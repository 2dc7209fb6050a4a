//! JSON experiment configuration and its translation into solver inputs.

use std::path::{Path, PathBuf};

use nonlocal_pme::measures::{fractional_constant, LevyMeasureSpec};
use nonlocal_pme::nonlinearity::{NonlinearityKind, NonlinearitySpec};
use nonlocal_pme::solver::{SolverConfig, TimeStep};
use nonlocal_pme::{Grid, GridFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Data must fall below this fraction of its peak on the outermost cells,
/// since the periodic box stands in for the whole space.
const BOUNDARY_DECAY: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub measure: MeasureSection,
    pub truncation: TruncationSection,
    pub nonlinearity: NonlinearitySection,
    pub time: TimeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dims: usize,
    pub points: usize,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSection {
    Fractional {
        alpha: f64,
        #[serde(default)]
        constant: Option<f64>,
    },
    Tempered {
        alpha: f64,
        decay: f64,
        #[serde(default)]
        constant: Option<f64>,
    },
    Atomic {
        atoms: Vec<AtomEntry>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    pub offset: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    /// Defaults to the grid spacing.
    #[serde(default)]
    pub r: Option<f64>,
    pub tail_cutoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySection {
    Pme {
        m: f64,
        #[serde(default)]
        n: u32,
    },
    Stefan {
        latent: f64,
        #[serde(default)]
        n: u32,
    },
    Linear {
        #[serde(default)]
        n: u32,
    },
    Table {
        points: Vec<(f64, f64)>,
        #[serde(default)]
        n: u32,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub final_time: f64,
    #[serde(default)]
    pub dt: DtSetting,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    #[default]
    #[serde(with = "auto_literal")]
    Auto,
    Fixed(f64),
}

mod auto_literal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum InitialSection {
    Gaussian(GaussianParams),
    Box(BoxParams),
    TwoBumps(TwoBumpsParams),
    /// Whitespace-separated values in row-major order.
    File(FileParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxParams {
    #[serde(default = "one")]
    pub amplitude: f64,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBumpsParams {
    #[serde(default = "one")]
    pub amplitude: f64,
    pub separation: f64,
    #[serde(default = "one")]
    pub width: f64,
    /// Sign of the second bump relative to the first.
    #[serde(default = "one")]
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileParams {
    pub path: PathBuf,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

pub const FORMATS: [&str; 3] = ["csv", "json", "binary"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub r_seq: Vec<f64>,
    pub n_seq: Vec<u32>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative data paths are resolved against the config location
        if let InitialSection::File(p) = &mut config.initial {
            if p.path.is_relative() {
                if let Some(dir) = path.parent() {
                    p.path = dir.join(&p.path);
                }
            }
        }
        for f in &config.output.formats {
            if !FORMATS.contains(&f.as_str()) {
                return Err(CliError::Config(format!("unknown output format {f:?}; known: {FORMATS:?}")));
            }
        }
        Ok(config)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.dims, self.grid.points, self.grid.halfwidth)?)
    }

    pub fn measure(&self) -> Result<LevyMeasureSpec, CliError> {
        let dims = self.grid.dims;
        let mu = match &self.measure {
            MeasureSection::Fractional { alpha, constant } => match constant {
                Some(c) => {
                    fractional_constant(dims, *alpha)?;
                    LevyMeasureSpec::fractional_with_constant(dims, *alpha, *c)?
                }
                None => LevyMeasureSpec::fractional(dims, *alpha)?,
            },
            MeasureSection::Tempered { alpha, decay, constant } => {
                let c = match constant {
                    Some(c) => *c,
                    None => fractional_constant(dims, *alpha)?,
                };
                LevyMeasureSpec::tempered(dims, *alpha, *decay, c)?
            }
            MeasureSection::Atomic { atoms } => {
                LevyMeasureSpec::atomic(dims, atoms.iter().map(|a| (a.offset.clone(), a.weight)).collect())?
            }
        };
        // integrability of the small and large jumps
        mu.moments()?;
        Ok(mu)
    }

    pub fn nonlinearity(&self) -> Result<NonlinearitySpec, CliError> {
        let (kind, n) = match &self.nonlinearity {
            NonlinearitySection::Pme { m, n } => (NonlinearityKind::Pme { m: *m }, *n),
            NonlinearitySection::Stefan { latent, n } => (NonlinearityKind::Stefan { latent: *latent }, *n),
            NonlinearitySection::Linear { n } => (NonlinearityKind::Linear, *n),
            NonlinearitySection::Table { points, n } => (NonlinearityKind::Table { points: points.clone() }, *n),
        };
        Ok(NonlinearitySpec::new(kind, n)?)
    }

    pub fn initial(&self, grid: Grid) -> Result<GridFunction, CliError> {
        let u0 = match &self.initial {
            InitialSection::Gaussian(p) => {
                let c = centre(p.center.as_deref(), grid.dims())?;
                GridFunction::from_fn(grid, |x| {
                    let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                    p.amplitude * (-d2 / (p.width * p.width)).exp()
                })?
            }
            InitialSection::Box(p) => GridFunction::from_fn(grid, |x| {
                if x.iter().all(|v| v.abs() <= p.halfwidth) {
                    p.amplitude
                } else {
                    0.0
                }
            })?,
            InitialSection::TwoBumps(p) => GridFunction::from_fn(grid, |x| {
                let bump = |shift: f64| {
                    let d2: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| if i == 0 { (v - shift).powi(2) } else { v * v })
                        .sum();
                    (-d2 / (p.width * p.width)).exp()
                };
                p.amplitude * (bump(-0.5 * p.separation) + p.ratio * bump(0.5 * p.separation))
            })?,
            InitialSection::File(p) => {
                let text = std::fs::read_to_string(&p.path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.path.display())))?;
                let values = text
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.path.display())))?;
                GridFunction::new(grid, values)?
            }
        };
        check_initial(&u0)?;
        Ok(u0)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let grid = self.grid()?;
        let measure = self.measure()?;
        let nonlinearity = self.nonlinearity()?;
        let initial = self.initial(grid)?;
        let range = initial.lp_norm(f64::INFINITY)?;
        if range > 0.0 {
            nonlinearity.check_monotone(range, 1 << 12)?;
        }
        let dt = match self.time.dt {
            DtSetting::Auto => TimeStep::Auto,
            DtSetting::Fixed(v) => TimeStep::Fixed(v),
        };
        Ok(SolverConfig {
            grid,
            measure,
            r: self.truncation.r.unwrap_or(grid.spacing()),
            tail_cutoff: self.truncation.tail_cutoff,
            nonlinearity,
            final_time: self.time.final_time,
            dt,
            cfl_theta: self.time.theta,
            initial,
        })
    }
}

fn centre(c: Option<&[f64]>, dims: usize) -> Result<Vec<f64>, CliError> {
    match c {
        None => Ok(vec![0.0; dims]),
        Some(c) if c.len() == dims => Ok(c.to_vec()),
        Some(c) => Err(CliError::Config(format!("centre has {} coordinates on a {dims}-D grid", c.len()))),
    }
}

/// Bounded, integrable data that is negligible on the outermost cells.
fn check_initial(u0: &GridFunction) -> Result<(), CliError> {
    let grid = u0.grid();
    let peak = u0.lp_norm(f64::INFINITY)?;
    let mut idx = vec![0usize; grid.dims()];
    let last = grid.points() - 1;
    let mut worst: f64 = 0.0;
    for (flat, v) in u0.values().iter().enumerate() {
        grid.unflatten(flat, &mut idx);
        if idx.iter().any(|&i| i == 0 || i == last) {
            worst = worst.max(v.abs());
        }
    }
    if worst > BOUNDARY_DECAY * peak {
        return Err(CliError::Assumption {
            assumption: "initial-data-class",
            detail: format!(
                "|u0| reaches {worst:e} on the boundary cells (peak {peak:e}); the periodic box needs data decayed below {BOUNDARY_DECAY:e}·peak there"
            ),
        });
    }
    Ok(())
}
