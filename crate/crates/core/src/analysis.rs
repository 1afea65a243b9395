//! Horizon sweeps, stability verdicts and certificate embedding.
//!
//! A certificate is a sufficient condition: an optimal solve proves internal
//! stability and `‖F_U(G, Δ)‖ < γ`; anything else is inconclusive and says
//! nothing about instability.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::build_psi;
use crate::lmi::{augment, AugmentedPlant, LmiError};
use crate::lti::StateSpace;
use crate::multiplier::MultiplierClass;
use crate::sdp::{solve_gain, validate_point, Certificate, SdpError, SolveStatus, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityClass {
    /// Repeated ReLU.
    Relu,
    /// Any repeated nonlinearity slope-restricted to `[0, 1]`.
    SlopeRestricted,
}

impl NonlinearityClass {
    pub fn multiplier_class(self) -> MultiplierClass {
        match self {
            Self::Relu => MultiplierClass::Relu,
            Self::SlopeRestricted => MultiplierClass::Slope,
        }
    }
}

impl From<MultiplierClass> for NonlinearityClass {
    fn from(c: MultiplierClass) -> Self {
        match c {
            MultiplierClass::Relu => Self::Relu,
            MultiplierClass::Slope => Self::SlopeRestricted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MinimizeGain,
    FeasibilityAt(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub plant: StateSpace,
    pub class: NonlinearityClass,
    pub horizons: Vec<usize>,
    pub mode: Mode,
    pub options: SolverOptions,
    /// Analyse a plant with `D11 ≠ 0`; the caller vouches for
    /// well-posedness of the loop.
    pub assume_well_posed: bool,
    /// Solve horizons in order and offer the embedded previous certificate
    /// as a fallback and upper bound.
    pub warm_start: bool,
}

impl AnalysisRequest {
    pub fn new(plant: StateSpace, class: NonlinearityClass, horizons: Vec<usize>) -> Self {
        Self {
            plant,
            class,
            horizons,
            mode: Mode::MinimizeGain,
            options: SolverOptions::default(),
            assume_well_posed: false,
            warm_start: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no horizons requested")]
    NoHorizons,
    #[error("horizons must be strictly ascending, got {0:?}")]
    UnsortedHorizons(Vec<usize>),
    #[error("D11 is nonzero (max |entry| {0:.3e}); well-posedness is not checked, pass an explicit assumption to proceed")]
    NotWellPosed(f64),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("certificate at N = {horizon} is not optimal")]
    NotOptimal { horizon: usize },
    #[error("embedded certificate fails re-validation at N = {horizon}: lambda_max(L) = {lambda_max:.3e}, lambda_min(P) = {lambda_min_p:.3e}, {violations} class violations")]
    Embedding {
        horizon: usize,
        lambda_max: f64,
        lambda_min_p: f64,
        violations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum Verdict {
    /// Internally stable with `‖F_U(G, Δ)‖ < gamma`.
    Stable { gamma: f64 },
    /// No certificate found; the loop may or may not be stable.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult {
    pub horizon: usize,
    pub outcome: Result<Certificate, AnalysisError>,
}

impl HorizonResult {
    pub fn certificate(&self) -> Option<&Certificate> {
        self.outcome.as_ref().ok()
    }

    pub fn gamma(&self) -> Option<f64> {
        self.certificate().filter(|c| c.is_optimal()).and_then(|c| c.gamma)
    }

    pub fn verdict(&self) -> Verdict {
        match self.gamma() {
            Some(gamma) => Verdict::Stable { gamma },
            None => Verdict::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub class: NonlinearityClass,
    pub results: Vec<HorizonResult>,
}

impl AnalysisReport {
    pub fn gammas(&self) -> Vec<Option<f64>> {
        self.results.iter().map(HorizonResult::gamma).collect()
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.results.iter().map(HorizonResult::verdict).collect()
    }

    pub fn get(&self, horizon: usize) -> Option<&HorizonResult> {
        self.results.iter().find(|r| r.horizon == horizon)
    }

    /// Smallest certified bound over the sweep.
    pub fn best_gamma(&self) -> Option<f64> {
        self.gammas().into_iter().flatten().reduce(f64::min)
    }

    pub fn is_monotone(&self) -> bool {
        monotonicity_check(self)
    }
}

fn check_request(req: &AnalysisRequest) -> Result<(), AnalysisError> {
    if req.horizons.is_empty() {
        return Err(AnalysisError::NoHorizons);
    }
    if req.horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::UnsortedHorizons(req.horizons.clone()));
    }
    let plant = &req.plant;
    if plant.inputs().len() != 2 || plant.outputs().len() != 2 {
        return Err(LmiError::Partition {
            inputs: plant.inputs().len(),
            outputs: plant.outputs().len(),
        }
        .into());
    }
    let d11 = plant.d_block(0, 0);
    let worst = d11.amax();
    if worst != 0.0 && !req.assume_well_posed {
        return Err(AnalysisError::NotWellPosed(worst));
    }
    Ok(())
}

fn augmented(plant: &StateSpace, horizon: usize) -> Result<AugmentedPlant, AnalysisError> {
    let m = plant.inputs()[0].width;
    Ok(augment(plant, &build_psi(horizon, m))?)
}

fn solve_one(req: &AnalysisRequest, horizon: usize) -> Result<Certificate, AnalysisError> {
    let aug = augmented(&req.plant, horizon)?;
    let at = match req.mode {
        Mode::MinimizeGain => None,
        Mode::FeasibilityAt(g) => Some(g),
    };
    Ok(solve_gain(&aug, req.class.multiplier_class(), &req.options, at)?)
}

/// Runs the sweep. Request-level problems are errors; per-horizon failures
/// are recorded in the report and do not stop the sweep.
pub fn certify(req: &AnalysisRequest) -> Result<AnalysisReport, AnalysisError> {
    check_request(req)?;
    let results = if req.warm_start {
        let mut out: Vec<HorizonResult> = Vec::with_capacity(req.horizons.len());
        for &n in &req.horizons {
            let mut outcome = solve_one(req, n);
            let previous = out
                .last()
                .and_then(|r| r.certificate())
                .filter(|c| c.is_optimal())
                .cloned();
            if let Some(prev) = previous {
                let embedded = embed_to(&req.plant, &prev, n);
                if let Ok(e) = embedded {
                    let better = match &outcome {
                        Ok(c) if c.is_optimal() => e.gamma < c.gamma,
                        _ => true,
                    };
                    if better {
                        outcome = Ok(e);
                    }
                }
            }
            out.push(HorizonResult { horizon: n, outcome });
        }
        out
    } else {
        req.horizons
            .par_iter()
            .map(|&n| HorizonResult {
                horizon: n,
                outcome: solve_one(req, n),
            })
            .collect()
    };
    Ok(AnalysisReport {
        class: req.class,
        results,
    })
}

/// `γ_{N+1} ≤ γ_N + 1e−3·γ_N` over consecutive optimal horizons.
pub fn monotonicity_check(report: &AnalysisReport) -> bool {
    monotonicity_check_with(report, 1e-3)
}

pub fn monotonicity_check_with(report: &AnalysisReport, rel_tol: f64) -> bool {
    let gammas: Vec<f64> = report.gammas().into_iter().flatten().collect();
    gammas.windows(2).all(|w| w[1] <= w[0] + rel_tol * w[0])
}

/// Lifts an optimal certificate at `N` to `N + 1` at the same `γ`.
pub fn embed_certificate(plant: &StateSpace, cert: &Certificate) -> Result<Certificate, AnalysisError> {
    embed_to(plant, cert, cert.horizon + 1)
}

/// Lifts an optimal certificate to any larger horizon by zero padding:
/// the new filter states are the oldest lags of each half of `ψ`, and the
/// multiplier families gain zero blocks. Re-validated against a dense `L`
/// with tolerance `1e−6`.
pub fn embed_to(plant: &StateSpace, cert: &Certificate, horizon: usize) -> Result<Certificate, AnalysisError> {
    let from = cert.horizon;
    let (Some(gamma), Some(p), Some(q)) = (cert.gamma, &cert.p, &cert.multiplier) else {
        return Err(AnalysisError::NotOptimal { horizon: from });
    };
    if cert.status != SolveStatus::Optimal || horizon < from {
        return Err(AnalysisError::NotOptimal { horizon: from });
    }
    let aug = augmented(plant, horizon)?;
    let m = aug.width();
    let n_x = plant.n_states();
    let old_half = m * from;
    let new_half = m * horizon;
    // x and the ψ_v lags keep their indices; ψ_w shifts past the new ψ_v lags.
    let map = |i: usize| if i < n_x + old_half { i } else { i - old_half + new_half };
    let n_new = aug.n_states();
    let mut p_new = DMatrix::zeros(n_new, n_new);
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            p_new[(map(i), map(j))] = p[(i, j)];
        }
    }
    let q_new = q.extended(horizon);
    let v = validate_point(&aug, &p_new, &q_new, gamma, 1e-9);
    if !v.passes(1e-6, 1e-7) {
        return Err(AnalysisError::Embedding {
            horizon,
            lambda_max: v.lambda_max_l,
            lambda_min_p: v.lambda_min_p,
            violations: v.class_violations.len(),
        });
    }
    let mut diagnostics = cert.diagnostics.clone();
    diagnostics.lambda_max_l = v.lambda_max_l;
    diagnostics.lambda_min_p = v.lambda_min_p;
    diagnostics.class_violations = 0;
    diagnostics.note = format!("embedded from N = {from}");
    Ok(Certificate {
        status: SolveStatus::Optimal,
        class: cert.class,
        horizon,
        gamma: Some(gamma),
        p: Some(p_new),
        multiplier: Some(q_new),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::Diagnostics;

    fn scalar_plant(d11: f64) -> StateSpace {
        let s = |x: f64| DMatrix::from_element(1, 1, x);
        StateSpace::lurye(s(0.5), s(0.2), s(1.0), s(0.3), s(1.0), s(d11), s(0.0), s(0.0), s(0.0)).unwrap()
    }

    fn report(gammas: &[f64]) -> AnalysisReport {
        AnalysisReport {
            class: NonlinearityClass::Relu,
            results: gammas
                .iter()
                .enumerate()
                .map(|(n, &g)| HorizonResult {
                    horizon: n,
                    outcome: Ok(Certificate {
                        status: SolveStatus::Optimal,
                        class: MultiplierClass::Relu,
                        horizon: n,
                        gamma: Some(g),
                        p: None,
                        multiplier: None,
                        diagnostics: Diagnostics::default(),
                    }),
                })
                .collect(),
        }
    }

    #[test]
    fn monotone_sequences() {
        assert!(monotonicity_check(&report(&[4.017, 1.554, 1.300, 1.136])));
        assert!(monotonicity_check(&report(&[14.22, 1.787, 1.698, 1.698])));
        assert!(!monotonicity_check(&report(&[1.300, 4.017, 1.136, 1.554])));
        assert!(monotonicity_check(&report(&[2.0, 2.001])));
        assert!(!monotonicity_check(&report(&[2.0, 2.003])));
    }

    #[test]
    fn request_validation() {
        let mut req = AnalysisRequest::new(scalar_plant(0.0), NonlinearityClass::Relu, vec![]);
        assert_eq!(certify(&req), Err(AnalysisError::NoHorizons));
        req.horizons = vec![1, 0];
        assert!(matches!(certify(&req), Err(AnalysisError::UnsortedHorizons(_))));
        let req = AnalysisRequest::new(scalar_plant(0.5), NonlinearityClass::Relu, vec![0]);
        assert!(matches!(certify(&req), Err(AnalysisError::NotWellPosed(_))));
    }

    #[test]
    fn scalar_loop_is_certified() {
        let req = AnalysisRequest::new(scalar_plant(0.0), NonlinearityClass::Relu, vec![0, 1]);
        let rep = certify(&req).unwrap();
        assert!(rep.gammas().iter().all(Option::is_some));
        assert!(rep.is_monotone());
        let cert = rep.results[0].certificate().unwrap();
        let lifted = embed_certificate(&req.plant, cert).unwrap();
        assert_eq!(lifted.horizon, 1);
        assert_eq!(lifted.gamma, cert.gamma);
    }

    #[test]
    fn non_optimal_certificate_cannot_be_embedded() {
        let c = Certificate {
            status: SolveStatus::Infeasible,
            class: MultiplierClass::Relu,
            horizon: 0,
            gamma: None,
            p: None,
            multiplier: None,
            diagnostics: Diagnostics::default(),
        };
        assert!(matches!(
            embed_certificate(&scalar_plant(0.0), &c),
            Err(AnalysisError::NotOptimal { horizon: 0 })
        ));
    }
}
