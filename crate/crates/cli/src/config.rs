//! Run configuration, read from a TOML document.
//!
//! ```toml
//! schema_version = 1
//! seed = 0
//!
//! [plant.transfer_grid]      # or [plant.state_space]
//! w = 2
//! d = 2
//! v = 2
//! e = 1
//! rows = [["-0.13/(z-0.98)", "0.21/(z-0.92)", "1", "0"], ...]
//!
//! [analysis]
//! classes = ["relu", "slope"]
//! horizons = [0, 1, 2, 3]
//!
//! [solver]                   # any field of `SolverOptions`
//! [oracle]                   # optional falsification run
//! [output]
//! ```
//!
//! State-space plants give `a, b1, b2, c1, c2, d11, d12, d21, d22` as
//! arrays of rows. Channel widths are read off `d11` (`m × m`), `d12`
//! (`m × n_d`) and `d21` (`n_e × m`); the state dimension is the row count
//! of `a`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use iqc_core::lti::{realize_first_order_bank, LtiError, ScalarTf};
use iqc_core::multiplier::MultiplierClass;
use iqc_core::oracle::{GainStrategy, NonlinearityKind};
use iqc_core::{Channel, SolverOptions, StateSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {found} (this build reads {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("plant: {0}")]
    Plant(#[from] LtiError),
    #[error("horizon list is empty")]
    EmptyHorizons,
    #[error("class list is empty")]
    EmptyClasses,
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantSpec,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    TransferGrid(TransferGrid),
    StateSpace(StateSpaceSpec),
}

/// Entries are constants or first-order terms `c/(z-a)`; columns are
/// `[w, d]`, rows `[v, e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferGrid {
    pub w: usize,
    pub d: usize,
    pub v: usize,
    pub e: usize,
    pub rows: Vec<Vec<String>>,
}

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceSpec {
    #[serde(default)]
    pub a: Rows,
    #[serde(default)]
    pub b1: Rows,
    #[serde(default)]
    pub b2: Rows,
    #[serde(default)]
    pub c1: Rows,
    #[serde(default)]
    pub c2: Rows,
    pub d11: Rows,
    pub d12: Rows,
    pub d21: Rows,
    pub d22: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub classes: Vec<MultiplierClass>,
    pub horizons: Vec<usize>,
    pub warm_start: bool,
    pub assume_well_posed: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            classes: vec![MultiplierClass::Relu, MultiplierClass::Slope],
            horizons: vec![0, 1, 2, 3],
            warm_start: false,
            assume_well_posed: false,
        }
    }
}

/// Optional falsification pass: an empirical lower bound per class from
/// simulating the loop with a concrete member of the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Loop simulations per class; 0 disables the pass.
    pub budget: usize,
    pub strategy: GainStrategy,
    pub relu_nonlinearity: NonlinearityName,
    pub slope_nonlinearity: NonlinearityName,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            budget: 0,
            strategy: GainStrategy::RandomGaussian,
            relu_nonlinearity: NonlinearityName::Relu,
            slope_nonlinearity: NonlinearityName::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityName {
    Relu,
    Saturation,
    Tanh,
}

impl From<NonlinearityName> for NonlinearityKind {
    fn from(n: NonlinearityName) -> Self {
        match n {
            NonlinearityName::Relu => Self::Relu,
            NonlinearityName::Saturation => Self::Saturation,
            NonlinearityName::Tanh => Self::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths resolve against the config file's directory.
    pub dir: PathBuf,
    pub table: String,
    pub results: String,
    pub certificates: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            table: "table.txt".into(),
            results: "results.json".into(),
            certificates: "certificates".into(),
        }
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: cfg.schema_version,
            });
        }
        Ok(cfg)
    }
}

impl RunConfig {
    /// Reads and parses; relative output directories are anchored at the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = text.parse()?;
        if cfg.output.dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    /// Everything that can be checked without solving.
    pub fn validate(&self) -> Result<StateSpace, ConfigError> {
        if self.analysis.horizons.is_empty() {
            return Err(ConfigError::EmptyHorizons);
        }
        if self.analysis.classes.is_empty() {
            return Err(ConfigError::EmptyClasses);
        }
        let mut sorted = self.analysis.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != self.analysis.horizons {
            return Err(ConfigError::Invalid(format!(
                "horizons must be strictly ascending, got {:?}",
                self.analysis.horizons
            )));
        }
        let mut classes = self.analysis.classes.clone();
        classes.dedup();
        if classes.len() != self.analysis.classes.len() {
            return Err(ConfigError::Invalid("duplicate class".into()));
        }
        let s = &self.solver;
        let positive = [
            ("tol_feas", s.tol_feas),
            ("tol_gap_abs", s.tol_gap_abs),
            ("tol_gap_rel", s.tol_gap_rel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("solver.{name} must be positive")));
            }
        }
        for (name, v) in [
            ("lmi_margin", s.lmi_margin),
            ("check_l", s.check_l),
            ("check_p", s.check_p),
            ("class_slack", s.class_slack),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("solver.{name} must be nonnegative")));
            }
        }
        self.plant.build()
    }
}

impl PlantSpec {
    pub fn build(&self) -> Result<StateSpace, ConfigError> {
        match self {
            Self::TransferGrid(g) => g.build(),
            Self::StateSpace(s) => s.build(),
        }
    }
}

impl TransferGrid {
    fn build(&self) -> Result<StateSpace, ConfigError> {
        if self.w != self.v {
            return Err(ConfigError::Dimension(format!(
                "nonlinearity channel: w has width {} but v has {}",
                self.w, self.v
            )));
        }
        let grid = self
            .rows
            .iter()
            .map(|row| row.iter().map(|s| s.parse::<ScalarTf>()).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Ok(realize_first_order_bank(
            &grid,
            vec![Channel::new("w", self.w), Channel::new("d", self.d)],
            vec![Channel::new("v", self.v), Channel::new("e", self.e)],
        )?)
    }
}

fn matrix(name: &str, rows: &Rows, shape: (usize, usize)) -> Result<DMatrix<f64>, ConfigError> {
    let (r, c) = shape;
    let empty_ok = (r == 0 || c == 0) && rows.iter().all(|row| row.is_empty());
    if empty_ok && (rows.is_empty() || rows.len() == r) {
        return Ok(DMatrix::zeros(r, c));
    }
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        let found_cols = rows.first().map_or(0, Vec::len);
        return Err(ConfigError::Dimension(format!(
            "{name} is {}x{found_cols} (or ragged), expected {r}x{c}",
            rows.len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ConfigError::Invalid(format!("{name} has a non-finite entry")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl StateSpaceSpec {
    /// `(n_x, m, n_d, n_e)` as implied by `a`, `d11`, `d12`, `d21`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let cols = |r: &Rows| r.first().map_or(0, Vec::len);
        (self.a.len(), self.d11.len(), cols(&self.d12), self.d21.len())
    }

    fn build(&self) -> Result<StateSpace, ConfigError> {
        let (n, m, n_d, n_e) = self.dims();
        if m == 0 {
            return Err(ConfigError::Dimension("d11 must be m x m with m >= 1".into()));
        }
        Ok(StateSpace::lurye(
            matrix("a", &self.a, (n, n))?,
            matrix("b1", &self.b1, (n, m))?,
            matrix("b2", &self.b2, (n, n_d))?,
            matrix("c1", &self.c1, (m, n))?,
            matrix("c2", &self.c2, (n_e, n))?,
            matrix("d11", &self.d11, (m, m))?,
            matrix("d12", &self.d12, (m, n_d))?,
            matrix("d21", &self.d21, (n_e, m))?,
            matrix("d22", &self.d22, (n_e, n_d))?,
        )?)
    }
}

/// `"0..3"` (inclusive), `"0..=3"`, `"2"` or `"0,1,3"`.
pub fn parse_horizons(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (num(a)?, num(b)?);
        if b < a {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

pub fn parse_classes(s: &str) -> Result<Vec<MultiplierClass>, String> {
    s.split(',')
        .map(|t| match t.trim() {
            "relu" => Ok(MultiplierClass::Relu),
            "slope" => Ok(MultiplierClass::Slope),
            other => Err(format!("unknown class {other:?} (expected relu or slope)")),
        })
        .collect()
}
