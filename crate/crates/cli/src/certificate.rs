//! Certificate dumps: `(P, multiplier families, γ)` as JSON, and replay
//! against a plant.

use std::path::Path;

use iqc_core::filter::build_psi;
use iqc_core::lmi::augment;
use iqc_core::multiplier::{Family, MultiplierClass, Violation};
use iqc_core::sdp::validate_point;
use iqc_core::{Certificate, Multiplier, ReluMultiplier, SlopeMultiplier, StateSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Rows;

pub const DUMP_SCHEMA_VERSION: u32 = 1;

/// Replay thresholds.
pub const REPLAY_TOL_L: f64 = 1e-6;
pub const REPLAY_TOL_P: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("certificate has no solution (status {0})")]
    Unsolved(String),
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot read certificate: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse certificate: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDump {
    pub family: Family,
    /// Index of `blocks[0]`: `−N` for `Q` and `Q3`, `0` for `Q1` and `Q2`.
    pub first_index: isize,
    pub blocks: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDump {
    pub schema_version: u32,
    pub class: MultiplierClass,
    pub horizon: usize,
    pub width: usize,
    pub gamma: f64,
    pub p: Rows,
    pub families: Vec<FamilyDump>,
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(name: &str, r: &Rows, n: usize) -> Result<DMatrix<f64>, DumpError> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(DumpError::Dimension(format!("{name} is not {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

impl CertificateDump {
    pub fn from_certificate(cert: &Certificate) -> Result<Self, DumpError> {
        let unsolved = || DumpError::Unsolved(cert.status.to_string());
        let gamma = cert.gamma.ok_or_else(unsolved)?;
        let p = cert.p.as_ref().ok_or_else(unsolved)?;
        let q = cert.multiplier.as_ref().ok_or_else(unsolved)?;
        let n = cert.horizon as isize;
        let fam = |family, first_index, blocks: &[DMatrix<f64>]| FamilyDump {
            family,
            first_index,
            blocks: blocks.iter().map(rows).collect(),
        };
        let families = match q {
            Multiplier::Slope(s) => vec![fam(Family::Q, -n, s.blocks())],
            Multiplier::Relu(r) => {
                let (q1, q2, q3) = r.families();
                vec![
                    fam(Family::Q1, 0, q1),
                    fam(Family::Q2, 0, q2),
                    fam(Family::Q3, -n, q3),
                ]
            }
        };
        Ok(Self {
            schema_version: DUMP_SCHEMA_VERSION,
            class: cert.class,
            horizon: cert.horizon,
            width: q.width(),
            gamma,
            p: rows(p),
            families,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of [`Self::to_json`].
    pub fn checksum(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, DumpError> {
        let dump: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if dump.schema_version != DUMP_SCHEMA_VERSION {
            return Err(DumpError::Malformed(format!(
                "schema_version {} (expected {DUMP_SCHEMA_VERSION})",
                dump.schema_version
            )));
        }
        Ok(dump)
    }

    pub fn p_matrix(&self) -> Result<DMatrix<f64>, DumpError> {
        from_rows("P", &self.p, self.p.len())
    }

    pub fn multiplier(&self) -> Result<Multiplier, DumpError> {
        let (n, m) = (self.horizon, self.width);
        let family = |f: Family, first: isize, count: usize| -> Result<Vec<DMatrix<f64>>, DumpError> {
            let d = self
                .families
                .iter()
                .find(|d| d.family == f)
                .ok_or_else(|| DumpError::Malformed(format!("missing family {f}")))?;
            if d.first_index != first || d.blocks.len() != count {
                return Err(DumpError::Dimension(format!(
                    "{f} must hold {count} blocks from index {first}"
                )));
            }
            d.blocks
                .iter()
                .enumerate()
                .map(|(k, b)| from_rows(&format!("{f}_{}", first + k as isize), b, m))
                .collect()
        };
        let expected = match self.class {
            MultiplierClass::Slope => 1,
            MultiplierClass::Relu => 3,
        };
        if self.families.len() != expected {
            return Err(DumpError::Malformed(format!(
                "{} class takes {expected} families, found {}",
                self.class,
                self.families.len()
            )));
        }
        let bad = |e: iqc_core::multiplier::MultiplierError| DumpError::Malformed(e.to_string());
        let ni = n as isize;
        Ok(match self.class {
            MultiplierClass::Slope => {
                Multiplier::Slope(SlopeMultiplier::new(n, m, family(Family::Q, -ni, 2 * n + 1)?).map_err(bad)?)
            }
            MultiplierClass::Relu => Multiplier::Relu(
                ReluMultiplier::new(
                    n,
                    m,
                    family(Family::Q1, 0, n + 1)?,
                    family(Family::Q2, 0, n + 1)?,
                    family(Family::Q3, -ni, 2 * n + 1)?,
                )
                .map_err(bad)?,
            ),
        })
    }

    pub fn family_mut(&mut self, f: Family) -> Option<&mut FamilyDump> {
        self.families.iter_mut().find(|d| d.family == f)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub class: MultiplierClass,
    pub horizon: usize,
    pub gamma: f64,
    pub lambda_max_l: f64,
    pub lambda_min_p: f64,
    pub violations: Vec<Violation>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.lambda_max_l <= REPLAY_TOL_L && self.lambda_min_p >= -REPLAY_TOL_P && self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} N={} gamma={:.6}: lambda_max(L) = {:.3e} (<= {REPLAY_TOL_L:e}), lambda_min(P) = {:.3e} (>= -{REPLAY_TOL_P:e}), {} class violations -> {}",
            self.class,
            self.horizon,
            self.gamma,
            self.lambda_max_l,
            self.lambda_min_p,
            self.violations.len(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for v in self.violations.iter().take(5) {
            s.push_str(&format!("\n    {v}"));
        }
        s
    }
}

/// Re-checks a dump against `plant` with `γ` multiplied by `gamma_scale`.
pub fn replay(
    plant: &StateSpace,
    dump: &CertificateDump,
    gamma_scale: f64,
    class_slack: f64,
) -> Result<ReplayReport, DumpError> {
    let m = plant.inputs()[0].width;
    if dump.width != m {
        return Err(DumpError::Dimension(format!(
            "certificate width {} but plant nonlinearity channel has width {m}",
            dump.width
        )));
    }
    let aug = augment(plant, &build_psi(dump.horizon, m))
        .map_err(|e| DumpError::Dimension(e.to_string()))?;
    let p = dump.p_matrix()?;
    if p.nrows() != aug.n_states() {
        return Err(DumpError::Dimension(format!(
            "P is {0}x{0} but the augmented plant has {1} states",
            p.nrows(),
            aug.n_states()
        )));
    }
    let q = dump.multiplier()?;
    let gamma = dump.gamma * gamma_scale;
    let v = validate_point(&aug, &p, &q, gamma, class_slack);
    Ok(ReplayReport {
        class: dump.class,
        horizon: dump.horizon,
        gamma,
        lambda_max_l: v.lambda_max_l,
        lambda_min_p: v.lambda_min_p,
        violations: v.class_violations,
    })
}
