//! Certification sweeps and their artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iqc_core::analysis::{certify, AnalysisError, AnalysisRequest, HorizonResult};
use iqc_core::filter::build_psi;
use iqc_core::lmi::{assemble_l, augment};
use iqc_core::multiplier::MultiplierClass;
use iqc_core::oracle::{empirical_gain, GainSearch, GainStrategy, NonlinearityKind};
use iqc_core::{SolveStatus, SolverOptions, StateSpace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::CertificateDump;
use crate::config::{NonlinearityName, RunConfig};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantDims {
    pub n_x: usize,
    pub m: usize,
    pub n_d: usize,
    pub n_e: usize,
    pub spectral_radius: f64,
}

impl PlantDims {
    pub fn of(g: &StateSpace) -> Self {
        Self {
            n_x: g.n_states(),
            m: g.inputs()[0].width,
            n_d: g.inputs()[1].width,
            n_e: g.outputs()[1].width,
            spectral_radius: g.spectral_radius(),
        }
    }
}

/// One `(class, N)` solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub class: MultiplierClass,
    pub horizon: usize,
    /// `optimal`, `infeasible`, `numerical-failure` or `error`.
    pub status: String,
    pub gamma: Option<f64>,
    pub seconds: f64,
    pub solves: u32,
    pub iterations: u32,
    pub lambda_max_l: Option<f64>,
    pub lambda_min_p: Option<f64>,
    pub certificate_sha256: Option<String>,
    pub certificate_file: Option<String>,
    pub note: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEntry {
    pub class: MultiplierClass,
    pub nonlinearity: NonlinearityName,
    pub strategy: GainStrategy,
    pub budget: usize,
    pub seed: u64,
    pub lower_bound: Option<f64>,
    pub evaluations: usize,
    /// Smallest certified `γ` for the class, if any.
    pub certified: Option<f64>,
    /// `lower_bound ≤ certified·(1 + 1e−6)`.
    pub consistent: Option<bool>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub schema_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub classes: Vec<MultiplierClass>,
    pub horizons: Vec<usize>,
    pub plant: PlantDims,
    pub solver: SolverOptions,
    pub runs: Vec<RunEntry>,
    pub empirical: Vec<EmpiricalEntry>,
    pub seconds: f64,
}

impl Results {
    pub fn get(&self, class: MultiplierClass, horizon: usize) -> Option<&RunEntry> {
        self.runs.iter().find(|r| r.class == class && r.horizon == horizon)
    }

    pub fn numerical_failures(&self) -> usize {
        self.runs.iter().filter(|r| r.status == "numerical-failure" || r.status == "error").count()
    }
}

pub struct RunOutput {
    pub results: Results,
    pub table: String,
    /// File name and content of each certificate.
    pub dumps: Vec<(String, CertificateDump)>,
}

pub fn dump_name(class: MultiplierClass, horizon: usize) -> String {
    format!("{class}_N{horizon}.json")
}

fn entry(class: MultiplierClass, hr: &HorizonResult, dumps: &mut Vec<(String, CertificateDump)>) -> RunEntry {
    match &hr.outcome {
        Ok(cert) => {
            let d = &cert.diagnostics;
            let mut e = RunEntry {
                class,
                horizon: hr.horizon,
                status: cert.status.to_string(),
                gamma: None,
                seconds: d.seconds,
                solves: d.solves,
                iterations: d.iterations,
                lambda_max_l: None,
                lambda_min_p: None,
                certificate_sha256: None,
                certificate_file: None,
                note: (!d.note.is_empty()).then(|| d.note.clone()),
                error: None,
            };
            if cert.status == SolveStatus::Optimal {
                e.gamma = cert.gamma;
                e.lambda_max_l = Some(d.lambda_max_l);
                e.lambda_min_p = Some(d.lambda_min_p);
                if let Ok(dump) = CertificateDump::from_certificate(cert) {
                    let name = dump_name(class, hr.horizon);
                    e.certificate_sha256 = Some(dump.checksum());
                    e.certificate_file = Some(name.clone());
                    dumps.push((name, dump));
                }
            }
            e
        }
        Err(err) => RunEntry {
            class,
            horizon: hr.horizon,
            status: "error".into(),
            gamma: None,
            seconds: 0.0,
            solves: 0,
            iterations: 0,
            lambda_max_l: None,
            lambda_min_p: None,
            certificate_sha256: None,
            certificate_file: None,
            note: None,
            error: Some(err.to_string()),
        },
    }
}

/// `x` to four significant figures.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new digit (9.9996 -> 10.000).
    if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 4 && decimals > 0 {
        let d = decimals - 1;
        return format!("{x:.d$}");
    }
    s
}

/// Rows are classes, columns horizons.
pub fn format_table(results: &Results) -> String {
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("class".to_string())
        .chain(results.horizons.iter().map(|n| format!("N={n}")))
        .collect()];
    for &class in &results.classes {
        let mut row = vec![class.to_string()];
        for &n in &results.horizons {
            row.push(match results.get(class, n) {
                Some(RunEntry { gamma: Some(g), .. }) => sig4(*g),
                Some(RunEntry { status, .. }) if status == "infeasible" => "inf".into(),
                _ => "fail".into(),
            });
        }
        cells.push(row);
    }
    let cols = cells[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|j| cells.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Runs every `(class, N)` in the configuration.
pub fn execute(cfg: &RunConfig, plant: &StateSpace, config_sha256: String) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let mut runs = Vec::new();
    let mut dumps = Vec::new();
    let mut empirical = Vec::new();
    for &class in &cfg.analysis.classes {
        let mut req = AnalysisRequest::new(plant.clone(), class.into(), cfg.analysis.horizons.clone());
        req.options = cfg.solver;
        req.warm_start = cfg.analysis.warm_start;
        req.assume_well_posed = cfg.analysis.assume_well_posed;
        let report = certify(&req)?;
        for hr in &report.results {
            runs.push(entry(class, hr, &mut dumps));
        }
        if cfg.oracle.budget > 0 {
            empirical.push(falsify(cfg, plant, class, report.best_gamma()));
        }
    }
    let results = Results {
        schema_version: RESULTS_SCHEMA_VERSION,
        config_sha256,
        seed: cfg.seed,
        classes: cfg.analysis.classes.clone(),
        horizons: cfg.analysis.horizons.clone(),
        plant: PlantDims::of(plant),
        solver: cfg.solver,
        runs,
        empirical,
        seconds: start.elapsed().as_secs_f64(),
    };
    let table = format_table(&results);
    Ok(RunOutput {
        results,
        table,
        dumps,
    })
}

fn falsify(cfg: &RunConfig, plant: &StateSpace, class: MultiplierClass, certified: Option<f64>) -> EmpiricalEntry {
    let start = Instant::now();
    let name = match class {
        MultiplierClass::Relu => cfg.oracle.relu_nonlinearity,
        MultiplierClass::Slope => cfg.oracle.slope_nonlinearity,
    };
    let mut search = GainSearch::new(cfg.oracle.strategy, cfg.oracle.budget);
    search.seed = cfg.seed;
    let est = empirical_gain(plant, NonlinearityKind::from(name), &search);
    let mut e = EmpiricalEntry {
        class,
        nonlinearity: name,
        strategy: cfg.oracle.strategy,
        budget: cfg.oracle.budget,
        seed: cfg.seed,
        lower_bound: None,
        evaluations: 0,
        certified,
        consistent: None,
        seconds: 0.0,
        error: None,
    };
    match est {
        Ok(est) => {
            e.lower_bound = Some(est.lower_bound);
            e.evaluations = est.evaluations;
            e.consistent = certified.map(|g| est.lower_bound <= g * (1.0 + 1e-6));
        }
        Err(err) => e.error = Some(err.to_string()),
    }
    e.seconds = start.elapsed().as_secs_f64();
    e
}

/// The `--validate-only` report: dimensions of every program, nothing solved.
pub fn describe(cfg: &RunConfig, plant: &StateSpace) -> Result<String, RunError> {
    let dims = PlantDims::of(plant);
    let mut out = format!(
        "plant: n_x = {}, m = {}, n_d = {}, n_e = {}, spectral radius = {:.6}\n",
        dims.n_x, dims.m, dims.n_d, dims.n_e, dims.spectral_radius
    );
    for &n in &cfg.analysis.horizons {
        let aug = augment(plant, &build_psi(n, dims.m)).map_err(AnalysisError::from)?;
        out.push_str(&format!(
            "N={n}: augmented states = {}, r width = {}, LMI size = {}",
            aug.n_states(),
            aug.filter().output_dim(),
            aug.lmi_size()
        ));
        for &class in &cfg.analysis.classes {
            let asm = assemble_l(&aug, class);
            out.push_str(&format!(", {class} variables = {}", asm.n_vars()));
        }
        out.push('\n');
    }
    Ok(out)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let err = |source| RunError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Writes the table, the results file and optionally every certificate.
/// Returns the paths written.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutput, dump_certificates: bool) -> Result<Vec<PathBuf>, RunError> {
    let dir = &cfg.output.dir;
    let mut written = Vec::new();
    if dump_certificates {
        let cdir = dir.join(&cfg.output.certificates);
        for (name, dump) in &out.dumps {
            let p = cdir.join(name);
            atomic_write(&p, dump.to_json().as_bytes())?;
            written.push(p);
        }
    }
    let table = dir.join(&cfg.output.table);
    atomic_write(&table, out.table.as_bytes())?;
    written.push(table);
    let results = dir.join(&cfg.output.results);
    let mut json = serde_json::to_string_pretty(&out.results).expect("results serialize");
    json.push('\n');
    atomic_write(&results, json.as_bytes())?;
    written.push(results);
    Ok(written)
}
