//! Semidefinite programs over a real decision vector and a reference conic
//! backend.
//!
//! [`SdpProblem`] is deliberately small: a linear objective, affine matrix
//! inequalities `F₀ + Σ x_i F_i ⪰ 0`, scalar inequalities `aᵀx + b ≥ 0` and
//! equalities `aᵀx + b = 0`. Any solver that can load that and return a
//! primal point implements [`ConicBackend`]; [`ClarabelBackend`] is the one
//! shipped here.
//!
//! [`solve_gain`] builds the gain program for an augmented plant and turns
//! the solver output into a [`Certificate`] that has been re-checked against
//! a dense evaluation of `L`.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::sym_extreme_eigs;
use crate::lmi::{assemble_l, dense_l, AugmentedPlant, LmiAssembly};
use crate::multiplier::{Multiplier, MultiplierClass, Sign};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("backend rejected the problem: {0}")]
    Setup(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// `constant + Σ x_k·matrix_k ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixInequality {
    pub name: String,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

/// `Σ coeff·x_k + constant`, compared against zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * x[k]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub var_names: Vec<String>,
    /// Minimise `objectiveᵀ x`.
    pub objective: Vec<f64>,
    pub psd: Vec<MatrixInequality>,
    /// Each form must be `≥ 0`.
    pub inequalities: Vec<LinearForm>,
    /// Each form must be `= 0`.
    pub equalities: Vec<LinearForm>,
}

impl SdpProblem {
    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let n = self.n_vars();
        if self.objective.len() != n {
            return Err(SdpError::Malformed(format!(
                "objective has {} entries for {n} variables",
                self.objective.len()
            )));
        }
        for c in &self.psd {
            let s = c.constant.nrows();
            if !c.constant.is_square() {
                return Err(SdpError::Malformed(format!("{}: constant not square", c.name)));
            }
            for (k, f) in &c.terms {
                if *k >= n || f.nrows() != s || f.ncols() != s {
                    return Err(SdpError::Malformed(format!(
                        "{}: bad term for variable {k}",
                        c.name
                    )));
                }
            }
        }
        for f in self.inequalities.iter().chain(&self.equalities) {
            if f.terms.iter().any(|&(k, _)| k >= n) {
                return Err(SdpError::Malformed("linear form references unknown variable".into()));
            }
        }
        Ok(())
    }

    /// Plain-text sparse dump in an SDPA-like layout:
    ///
    /// ```text
    /// "comment lines"
    /// <number of variables>
    /// <number of blocks>
    /// <block sizes; the linear block is negative>
    /// <objective vector>
    /// <matno> <blkno> <i> <j> <value>   (1-based, upper triangle)
    /// ```
    ///
    /// Matrix 0 is `−F₀` so that the encoded constraint reads
    /// `Σ x_k F_k − F₀ ⪰ 0`. Block 1 is diagonal and holds the scalar
    /// inequalities followed by each equality as a pair of inequalities.
    pub fn write_sdpa(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "\"gain certificate program\"")?;
        for (k, name) in self.var_names.iter().enumerate() {
            writeln!(out, "\"x{} = {}\"", k + 1, name)?;
        }
        let linear: Vec<LinearForm> = self
            .inequalities
            .iter()
            .cloned()
            .chain(self.equalities.iter().flat_map(|f| {
                let neg = LinearForm {
                    terms: f.terms.iter().map(|&(k, c)| (k, -c)).collect(),
                    constant: -f.constant,
                };
                [f.clone(), neg]
            }))
            .collect();
        writeln!(out, "{}", self.n_vars())?;
        writeln!(out, "{}", self.psd.len() + 1)?;
        let mut sizes = vec![format!("-{}", linear.len().max(1))];
        sizes.extend(self.psd.iter().map(|c| c.constant.nrows().to_string()));
        writeln!(out, "{}", sizes.join(" "))?;
        let obj: Vec<String> = self.objective.iter().map(|c| format!("{c:.17e}")).collect();
        writeln!(out, "{}", obj.join(" "))?;
        for (row, f) in linear.iter().enumerate() {
            if f.constant != 0.0 {
                writeln!(out, "0 1 {r} {r} {:.17e}", -f.constant, r = row + 1)?;
            }
            for &(k, c) in &f.terms {
                writeln!(out, "{} 1 {r} {r} {c:.17e}", k + 1, r = row + 1)?;
            }
        }
        for (b, c) in self.psd.iter().enumerate() {
            let blk = b + 2;
            write_upper(&mut out, 0, blk, &(-&c.constant))?;
            for (k, f) in &c.terms {
                write_upper(&mut out, k + 1, blk, f)?;
            }
        }
        Ok(())
    }
}

fn write_upper(out: &mut impl Write, mat: usize, blk: usize, f: &DMatrix<f64>) -> io::Result<()> {
    for j in 0..f.ncols() {
        for i in 0..=j {
            let v = f[(i, j)];
            if v != 0.0 {
                writeln!(out, "{mat} {blk} {} {} {v:.17e}", i + 1, j + 1)?;
            }
        }
    }
    Ok(())
}

/// Raw outcome reported by a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendStatus {
    Solved,
    ReducedAccuracy,
    Infeasible,
    Unbounded,
    IterationLimit,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendResult {
    pub status: BackendStatus,
    pub detail: String,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Load a problem, solve it, return a primal point and status.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<BackendResult, SdpError>;
}

/// Adapter for the Clarabel interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

/// Column-major upper-triangle vectorisation with `√2` on off-diagonals.
fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<BackendResult, SdpError> {
        problem.validate()?;
        let n = problem.n_vars();
        // Rows of A in cone order: zero cone, nonnegative cone, PSD cones.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0usize;

        for group in [&problem.equalities, &problem.inequalities] {
            for f in group.iter() {
                for &(k, c) in &f.terms {
                    cols[k].push((row, -c));
                }
                b.push(f.constant);
                row += 1;
            }
        }
        if !problem.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(problem.equalities.len()));
        }
        if !problem.inequalities.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(problem.inequalities.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for c in &problem.psd {
            let s = c.constant.nrows();
            if s == 0 {
                continue;
            }
            for j in 0..s {
                for i in 0..=j {
                    let w = if i == j { 1.0 } else { sqrt2 };
                    b.push(w * c.constant[(i, j)]);
                }
            }
            for (k, f) in &c.terms {
                let mut r = row;
                for j in 0..s {
                    for i in 0..=j {
                        let v = f[(i, j)];
                        if v != 0.0 {
                            let w = if i == j { 1.0 } else { sqrt2 };
                            cols[*k].push((r, -w * v));
                        }
                        r += 1;
                    }
                }
            }
            row += svec_len(s);
            cones.push(SupportedConeT::PSDTriangleConeT(s));
        }

        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut cols {
            col.sort_by_key(|&(r, _)| r);
            // Several terms may hit the same row; merge them.
            let mut last: Option<usize> = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *nzval.last_mut().unwrap() += v;
                } else {
                    rowval.push(r);
                    nzval.push(v);
                    last = Some(r);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(row, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));

        let settings = DefaultSettings::<f64> {
            verbose: options.verbose,
            max_iter: options.max_iter,
            tol_feas: options.tol_feas,
            tol_gap_abs: options.tol_gap_abs,
            tol_gap_rel: options.tol_gap_rel,
            ..Default::default()
        };

        let mut solver = DefaultSolver::new(&p, &problem.objective, &a, &b, &cones, settings)
            .map_err(|e| SdpError::Setup(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => BackendStatus::Solved,
            SolverStatus::AlmostSolved => BackendStatus::ReducedAccuracy,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BackendStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => BackendStatus::IterationLimit,
            _ => BackendStatus::Stalled,
        };
        Ok(BackendResult {
            status,
            detail: format!("{:?}", sol.status),
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Strategy {
    /// One program with `t = γ²` as a decision variable.
    Direct,
    /// Feasibility problems at fixed `t`, bisecting on `γ`.
    Bisection {
        lower: f64,
        upper: f64,
        rel_tol: f64,
        max_steps: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub max_iter: u32,
    /// Relative margin: `L ⪯ −ε I` with `ε = lmi_margin·(1 + ‖L₀‖_F)`.
    pub lmi_margin: f64,
    /// Acceptance thresholds for a returned certificate.
    pub check_l: f64,
    pub check_p: f64,
    pub class_slack: f64,
    pub strategy: Strategy,
    /// Fall back to bisection when the direct solve does not certify.
    pub bisection_fallback: bool,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            max_iter: 200,
            lmi_margin: 1e-7,
            check_l: 1e-7,
            check_p: 1e-7,
            class_slack: 1e-9,
            strategy: Strategy::Direct,
            bisection_fallback: true,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub backend: String,
    pub backend_status: String,
    pub iterations: u32,
    pub solves: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `λ_max(L)` at the returned point, from a dense evaluation.
    pub lambda_max_l: f64,
    pub lambda_min_p: f64,
    pub class_violations: usize,
    pub seconds: f64,
    pub note: String,
}

/// A solved `(P, multiplier, γ)` triple, or the reason there is none.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub status: SolveStatus,
    pub class: MultiplierClass,
    pub horizon: usize,
    pub gamma: Option<f64>,
    pub p: Option<DMatrix<f64>>,
    pub multiplier: Option<Multiplier>,
    pub diagnostics: Diagnostics,
}

impl Certificate {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn failed(status: SolveStatus, class: MultiplierClass, horizon: usize, diagnostics: Diagnostics) -> Self {
        Self {
            status,
            class,
            horizon,
            gamma: None,
            p: None,
            multiplier: None,
            diagnostics,
        }
    }
}

/// Result of checking a concrete `(P, multiplier, γ)` against an augmented
/// plant with a dense evaluation of `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub lambda_max_l: f64,
    pub lambda_min_p: f64,
    pub class_violations: Vec<crate::multiplier::Violation>,
}

impl Validation {
    pub fn passes(&self, tol_l: f64, tol_p: f64) -> bool {
        self.lambda_max_l <= tol_l && self.lambda_min_p >= -tol_p && self.class_violations.is_empty()
    }
}

pub fn validate_point(
    aug: &AugmentedPlant,
    p: &DMatrix<f64>,
    q: &Multiplier,
    gamma: f64,
    class_slack: f64,
) -> Validation {
    let l = dense_l(aug, p, &q.middle_matrix(), gamma * gamma);
    Validation {
        lambda_max_l: sym_extreme_eigs(&l).1,
        lambda_min_p: sym_extreme_eigs(p).0,
        class_violations: q.violations(class_slack),
    }
}

/// The gain program: minimise `t` subject to `−L − εI ⪰ 0`, `P ⪰ 0`, the
/// multiplier sign and sum constraints and `t ≥ 0`. With `fixed_t` the
/// objective is dropped and `t` pinned by an equality.
pub fn gain_problem(asm: &LmiAssembly, margin: f64, fixed_t: Option<f64>) -> SdpProblem {
    let n = asm.n_vars();
    let size = asm.size();
    let eps = margin * (1.0 + asm.constant().norm());
    let mut objective = vec![0.0; n];
    if fixed_t.is_none() {
        objective[asm.t_index()] = 1.0;
    }
    let l_con = MatrixInequality {
        name: "-L - eps I".into(),
        constant: -asm.constant() - DMatrix::identity(size, size) * eps,
        terms: asm
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
            .map(|(k, c)| (k, -c))
            .collect(),
    };
    let ns = asm.n_states();
    let mut psd = vec![l_con];
    if ns > 0 {
        let terms = asm
            .p_range()
            .zip((0..ns).flat_map(|j| (0..=j).map(move |i| (i, j))))
            .map(|(k, (i, j))| {
                let mut e = DMatrix::zeros(ns, ns);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                (k, e)
            })
            .collect();
        psd.push(MatrixInequality {
            name: "P".into(),
            constant: DMatrix::zeros(ns, ns),
            terms,
        });
    }

    let mut inequalities = Vec::new();
    let q0 = asm.q_range().start;
    for (k, v) in asm.layout().vars().iter().enumerate() {
        let coeff = match v.sign {
            Sign::Free => continue,
            Sign::Nonnegative => 1.0,
            Sign::Nonpositive => -1.0,
        };
        inequalities.push(LinearForm {
            terms: vec![(q0 + k, coeff)],
            constant: 0.0,
        });
    }
    for sum in asm.layout().sum_constraints() {
        inequalities.push(LinearForm {
            terms: sum.into_iter().map(|(k, c)| (q0 + k, c)).collect(),
            constant: 0.0,
        });
    }
    let mut equalities = Vec::new();
    match fixed_t {
        None => inequalities.push(LinearForm {
            terms: vec![(asm.t_index(), 1.0)],
            constant: 0.0,
        }),
        Some(t) => equalities.push(LinearForm {
            terms: vec![(asm.t_index(), 1.0)],
            constant: -t,
        }),
    }
    SdpProblem {
        var_names: asm.var_names(),
        objective,
        psd,
        inequalities,
        equalities,
    }
}

/// Minimises `γ` for the given class, or tests feasibility at `gamma`.
pub fn solve_gain(
    aug: &AugmentedPlant,
    class: MultiplierClass,
    options: &SolverOptions,
    feasibility_at: Option<f64>,
) -> Result<Certificate, SdpError> {
    solve_gain_with(&ClarabelBackend, aug, class, options, feasibility_at)
}

pub fn solve_gain_with(
    backend: &dyn ConicBackend,
    aug: &AugmentedPlant,
    class: MultiplierClass,
    options: &SolverOptions,
    feasibility_at: Option<f64>,
) -> Result<Certificate, SdpError> {
    let start = Instant::now();
    let asm = assemble_l(aug, class);
    let ctx = Ctx {
        backend,
        aug,
        asm: &asm,
        class,
        options,
    };
    let mut cert = match (feasibility_at, options.strategy) {
        (Some(gamma), _) => ctx.at_fixed(gamma)?,
        (None, Strategy::Direct) => {
            let cert = ctx.direct()?;
            if !cert.is_optimal() && options.bisection_fallback {
                let mut fallback = ctx.bisect(0.0, f64::NAN, 1e-4, 60)?;
                fallback.diagnostics.note = format!(
                    "direct solve ended {} ({}); bisection fallback",
                    cert.status, cert.diagnostics.backend_status
                );
                fallback.diagnostics.solves += cert.diagnostics.solves;
                fallback
            } else {
                cert
            }
        }
        (
            None,
            Strategy::Bisection {
                lower,
                upper,
                rel_tol,
                max_steps,
            },
        ) => ctx.bisect(lower, upper, rel_tol, max_steps)?,
    };
    cert.diagnostics.seconds = start.elapsed().as_secs_f64();
    Ok(cert)
}

struct Ctx<'a> {
    backend: &'a dyn ConicBackend,
    aug: &'a AugmentedPlant,
    asm: &'a LmiAssembly,
    class: MultiplierClass,
    options: &'a SolverOptions,
}

impl Ctx<'_> {
    fn run(&self, fixed_t: Option<f64>) -> Result<(BackendResult, Diagnostics), SdpError> {
        let problem = gain_problem(self.asm, self.options.lmi_margin, fixed_t);
        let res = self.backend.solve(&problem, self.options)?;
        let diag = Diagnostics {
            backend: self.backend.name().to_string(),
            backend_status: res.detail.clone(),
            iterations: res.iterations,
            solves: 1,
            primal_residual: res.primal_residual,
            dual_residual: res.dual_residual,
            ..Diagnostics::default()
        };
        Ok((res, diag))
    }

    /// Cleans a backend point and checks it; `None` when it fails.
    fn certify_point(&self, x: &[f64], gamma_floor: Option<f64>, diag: &mut Diagnostics) -> Option<(DMatrix<f64>, Multiplier, f64)> {
        let (p, q, t) = self.asm.unpack(x).ok()?;
        if !t.is_finite() || p.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let p = (&p + p.transpose()) * 0.5;
        let q = q.projected();
        let gamma = gamma_floor.unwrap_or(t.max(0.0).sqrt());
        let v = validate_point(self.aug, &p, &q, gamma, self.options.class_slack);
        diag.lambda_max_l = v.lambda_max_l;
        diag.lambda_min_p = v.lambda_min_p;
        diag.class_violations = v.class_violations.len();
        v.passes(self.options.check_l, self.options.check_p)
            .then_some((p, q, gamma))
    }

    fn success(&self, p: DMatrix<f64>, q: Multiplier, gamma: f64, diagnostics: Diagnostics) -> Certificate {
        Certificate {
            status: SolveStatus::Optimal,
            class: self.class,
            horizon: self.aug.horizon(),
            gamma: Some(gamma),
            p: Some(p),
            multiplier: Some(q),
            diagnostics,
        }
    }

    fn failure(&self, status: SolveStatus, diagnostics: Diagnostics) -> Certificate {
        Certificate::failed(status, self.class, self.aug.horizon(), diagnostics)
    }

    fn classify(&self, res: &BackendResult) -> SolveStatus {
        match res.status {
            BackendStatus::Infeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        }
    }

    fn direct(&self) -> Result<Certificate, SdpError> {
        let (res, mut diag) = self.run(None)?;
        if matches!(res.status, BackendStatus::Solved | BackendStatus::ReducedAccuracy) {
            if let Some((p, q, g)) = self.certify_point(&res.x, None, &mut diag) {
                return Ok(self.success(p, q, g, diag));
            }
            diag.note = "solver point failed dense re-validation".into();
            return Ok(self.failure(SolveStatus::NumericalFailure, diag));
        }
        Ok(self.failure(self.classify(&res), diag))
    }

    fn at_fixed(&self, gamma: f64) -> Result<Certificate, SdpError> {
        let (res, mut diag) = self.run(Some(gamma * gamma))?;
        if matches!(res.status, BackendStatus::Solved | BackendStatus::ReducedAccuracy) {
            if let Some((p, q, g)) = self.certify_point(&res.x, Some(gamma), &mut diag) {
                return Ok(self.success(p, q, g, diag));
            }
            diag.note = "solver point failed dense re-validation".into();
            return Ok(self.failure(SolveStatus::NumericalFailure, diag));
        }
        Ok(self.failure(self.classify(&res), diag))
    }

    /// Bisection on `γ`. A NaN upper bound is bracketed by repeated ×4 steps.
    fn bisect(&self, lower: f64, upper: f64, rel_tol: f64, max_steps: u32) -> Result<Certificate, SdpError> {
        let mut solves = 0;
        let mut best: Option<Certificate> = None;
        let mut last_diag = Diagnostics::default();
        let mut hi = upper;
        if hi.is_nan() {
            let mut g = 1.0;
            let mut last_status = SolveStatus::Infeasible;
            for _ in 0..40 {
                let c = self.at_fixed(g)?;
                solves += 1;
                last_status = c.status;
                last_diag = c.diagnostics.clone();
                if c.is_optimal() {
                    best = Some(c);
                    hi = g;
                    break;
                }
                g *= 4.0;
            }
            if hi.is_nan() {
                last_diag.solves = solves;
                // Feasibility is monotone in γ, so the largest γ tried decides.
                last_diag.note = "no feasible gamma found while bracketing".into();
                return Ok(self.failure(last_status, last_diag));
            }
        } else {
            let c = self.at_fixed(hi)?;
            solves += 1;
            if !c.is_optimal() {
                let mut d = c.diagnostics;
                d.solves = solves;
                return Ok(self.failure(c.status, d));
            }
            best = Some(c);
        }
        let mut lo = lower.max(0.0);
        for _ in 0..max_steps {
            if hi - lo <= rel_tol * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let c = self.at_fixed(mid)?;
            solves += 1;
            if c.is_optimal() {
                hi = mid;
                best = Some(c);
            } else {
                lo = mid;
            }
        }
        let mut cert = best.expect("upper bracket is feasible");
        cert.diagnostics.solves = solves;
        Ok(cert)
    }
}
