//! Time-domain checks that do not trust the SDP: closed-loop simulation,
//! hard-IQC partial sums and empirical lower bounds on the loop gain.
//!
//! Every randomised routine takes an explicit seed and reports it back.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::build_psi;
use crate::lti::{simulate, LtiError, StateSpace, Trajectory};
use crate::multiplier::{MiddleMatrix, MultiplierClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("loop simulation needs D11 = 0 (max |entry| {0:.3e})")]
    ImplicitLoop(f64),
    #[error("plant must have inputs (w, d) and outputs (v, e)")]
    Partition,
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Scalar nonlinearities applied elementwise. All have `f(0) = 0` and
/// slopes in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    Relu,
    /// Clamp to `[−1, 1]`.
    Saturation,
    /// `x ↦ λx` with `λ ∈ [0, 1]`.
    ScaledIdentity(f64),
    Tanh,
}

impl NonlinearityKind {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Self::Relu => x.max(0.0),
            Self::Saturation => x.clamp(-1.0, 1.0),
            Self::ScaledIdentity(l) => l * x,
            Self::Tanh => x.tanh(),
        }
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| self.apply(x))
    }

    /// Whether IQCs of `class` are guaranteed for this nonlinearity.
    pub fn admitted_by(&self, class: MultiplierClass) -> bool {
        match class {
            MultiplierClass::Relu => *self == Self::Relu,
            MultiplierClass::Slope => match *self {
                Self::ScaledIdentity(l) => (0.0..=1.0).contains(&l),
                _ => true,
            },
        }
    }
}

/// Cached plant blocks for fast repeated loop simulation.
struct LoopPlant {
    a: DMatrix<f64>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    c1: DMatrix<f64>,
    c2: DMatrix<f64>,
    d12: DMatrix<f64>,
    d21: DMatrix<f64>,
    d22: DMatrix<f64>,
}

impl LoopPlant {
    fn new(plant: &StateSpace) -> Result<Self, OracleError> {
        if plant.inputs().len() != 2 || plant.outputs().len() != 2 {
            return Err(OracleError::Partition);
        }
        let d11 = plant.d_block(0, 0);
        if d11.amax() != 0.0 {
            return Err(OracleError::ImplicitLoop(d11.amax()));
        }
        Ok(Self {
            a: plant.a().clone(),
            b1: plant.b_block(0),
            b2: plant.b_block(1),
            c1: plant.c_block(0),
            c2: plant.c_block(1),
            d12: plant.d_block(0, 1),
            d21: plant.d_block(1, 0),
            d22: plant.d_block(1, 1),
        })
    }

    fn m(&self) -> usize {
        self.b1.ncols()
    }

    fn n_d(&self) -> usize {
        self.b2.ncols()
    }

    fn n_e(&self) -> usize {
        self.c2.nrows()
    }

    /// Top right singular vector of the `d → e` response at `e^{jω}` of the
    /// loop linearized as `w = λ v`, as per-channel amplitudes and phases.
    fn linear_direction(&self, lam: f64, omega: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.a.nrows();
        let a = &self.a + &self.b1 * &self.c1 * lam;
        let b = &self.b2 + &self.b1 * &self.d12 * lam;
        let c = &self.c2 + &self.d21 * &self.c1 * lam;
        let d = &self.d22 + &self.d21 * &self.d12 * lam;
        let cx = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let z = Complex64::from_polar(1.0, omega);
        let mut g = cx(&d);
        if n > 0 {
            let res = (DMatrix::<Complex64>::identity(n, n) * z - cx(&a))
                .lu()
                .solve(&cx(&b))?;
            g += cx(&c) * res;
        }
        if !g.iter().all(|x| x.is_finite()) {
            return None;
        }
        let svd = g.svd(false, true);
        let vt = svd.v_t?;
        let k = svd.singular_values.imax();
        let v: Vec<Complex64> = vt.row(k).iter().map(|x| x.conj()).collect();
        Some((v.iter().map(|x| x.norm()).collect(), v.iter().map(|x| x.arg()).collect()))
    }

    /// Runs the loop from `x0`, calling `sink(k, x, v, w, e)` each step.
    fn run(
        &self,
        nl: NonlinearityKind,
        d: &DMatrix<f64>,
        x0: &DVector<f64>,
        mut sink: impl FnMut(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>, &DVector<f64>),
    ) {
        let mut x = x0.clone();
        let mut xn = DVector::zeros(x.len());
        let mut v = DVector::zeros(self.m());
        let mut e = DVector::zeros(self.n_e());
        for k in 0..d.ncols() {
            let dk = d.column(k);
            v.gemv(1.0, &self.c1, &x, 0.0);
            v.gemv(1.0, &self.d12, &dk, 1.0);
            let w = nl.apply_vec(&v);
            e.gemv(1.0, &self.c2, &x, 0.0);
            e.gemv(1.0, &self.d21, &w, 1.0);
            e.gemv(1.0, &self.d22, &dk, 1.0);
            sink(k, &x, &v, &w, &e);
            if !x.is_empty() {
                xn.gemv(1.0, &self.a, &x, 0.0);
                xn.gemv(1.0, &self.b1, &w, 1.0);
                xn.gemv(1.0, &self.b2, &dk, 1.0);
                std::mem::swap(&mut x, &mut xn);
            }
        }
    }

    fn output_energy(&self, nl: NonlinearityKind, d: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        let x0 = DVector::zeros(self.a.nrows());
        self.run(nl, d, &x0, |_, _, _, _, e| total += e.norm_squared());
        total
    }
}

/// Simulates `F_U(G, Δ)` driven by channel `"d"` of `d`. Returns channels
/// `x`, `v`, `w`, `e` and `d`.
pub fn simulate_loop(
    plant: &StateSpace,
    nl: NonlinearityKind,
    d: &Trajectory,
    x0: &DVector<f64>,
) -> Result<Trajectory, OracleError> {
    let lp = LoopPlant::new(plant)?;
    let dsig = d.require("d")?;
    if dsig.nrows() != lp.n_d() {
        return Err(LtiError::Dimension {
            what: "width of `d`".into(),
            expected: lp.n_d(),
            found: dsig.nrows(),
        }
        .into());
    }
    if x0.len() != lp.a.nrows() {
        return Err(LtiError::Dimension {
            what: "initial state".into(),
            expected: lp.a.nrows(),
            found: x0.len(),
        }
        .into());
    }
    let t = dsig.ncols();
    let mut xs = DMatrix::zeros(lp.a.nrows(), t);
    let mut vs = DMatrix::zeros(lp.m(), t);
    let mut ws = DMatrix::zeros(lp.m(), t);
    let mut es = DMatrix::zeros(lp.n_e(), t);
    lp.run(nl, dsig, x0, |k, x, v, w, e| {
        xs.set_column(k, x);
        vs.set_column(k, v);
        ws.set_column(k, w);
        es.set_column(k, e);
    });
    Ok(Trajectory::new(d.horizon())
        .with("x", xs)?
        .with("v", vs)?
        .with("w", ws)?
        .with("e", es)?
        .with("d", dsig.clone())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqcCheckConfig {
    pub trials: usize,
    pub t0_max: usize,
    pub seed: u64,
    /// Pass iff every partial sum is `≥ −tolerance·energy`.
    pub tolerance: f64,
}

impl Default for IqcCheckConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            t0_max: 30,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqcReport {
    /// Smallest partial sum `Σ_{k≤T0} r(k)ᵀ M r(k)` over trials and `T0`.
    pub min_partial_sum: f64,
    /// Smallest partial sum divided by the trial's energy `Σ |v|² + |w|²`.
    pub min_normalized: f64,
    pub worst_trial: usize,
    pub worst_t0: usize,
    pub trials: usize,
    pub t0_max: usize,
    pub seed: u64,
    pub passed: bool,
}

/// Draws an input sequence `v` of one of several shapes.
fn random_v(rng: &mut ChaCha8Rng, m: usize, len: usize, kind: usize) -> DMatrix<f64> {
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    match kind % 5 {
        0 => DMatrix::from_fn(m, len, |_, _| gauss(rng)),
        1 => {
            // Heavy scale differences across time.
            let mut out = DMatrix::zeros(m, len);
            for k in 0..len {
                let s = 10f64.powf(rng.random_range(-3.0..3.0));
                for i in 0..m {
                    out[(i, k)] = s * gauss(rng);
                }
            }
            out
        }
        2 => {
            // Sparse impulses with a sign bias per channel.
            let bias: Vec<f64> = (0..m).map(|_| gauss(rng)).collect();
            DMatrix::from_fn(m, len, |i, _| {
                if rng.random_bool(0.3) {
                    bias[i] + gauss(rng)
                } else {
                    0.0
                }
            })
        }
        3 => {
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect();
            let ph: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..6.3)).collect();
            let off: Vec<f64> = (0..m).map(|_| 0.5 * gauss(rng)).collect();
            DMatrix::from_fn(m, len, |i, k| off[i] + (f[i] * k as f64 + ph[i]).sin())
        }
        _ => {
            // Random walk.
            let mut out = DMatrix::zeros(m, len);
            for i in 0..m {
                let mut s = gauss(rng);
                for k in 0..len {
                    s += 0.5 * gauss(rng);
                    out[(i, k)] = s;
                }
            }
            out
        }
    }
}

/// Empirically exercises the hard IQC defined by `M` and the filter
/// `Ψ_N`. A negative normalised minimum below tolerance means the
/// multiplier construction is wrong.
pub fn check_hard_iqc(nl: NonlinearityKind, m: &MiddleMatrix, config: &IqcCheckConfig) -> IqcReport {
    let width = m.width();
    let horizon = m.horizon();
    let filt = build_psi(horizon, width);
    let mm = m.matrix();
    let len = config.t0_max + 1;

    let per_trial: Vec<(f64, f64, usize)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial as u64);
            let v = random_v(&mut rng, width, len, trial);
            let w = v.map(|x| nl.apply(x));
            let energy = v.norm_squared() + w.norm_squared();
            let vw = Trajectory::new(config.t0_max)
                .with("v", v)
                .and_then(|t| t.with("w", w))
                .expect("consistent widths");
            let out = simulate(filt.psi(), &vw, &DVector::zeros(filt.psi().n_states()))
                .expect("filter inputs match");
            let r = out.channel("r").expect("filter output");
            let mut sum = 0.0;
            let mut worst = (f64::INFINITY, f64::INFINITY, 0);
            for k in 0..len {
                let rk = r.column(k);
                sum += (rk.transpose() * mm * rk)[(0, 0)];
                let norm = if energy > 0.0 { sum / energy } else { sum };
                if norm < worst.1 {
                    worst = (sum, norm, k);
                }
            }
            worst
        })
        .collect();

    let mut report = IqcReport {
        min_partial_sum: f64::INFINITY,
        min_normalized: f64::INFINITY,
        worst_trial: 0,
        worst_t0: 0,
        trials: config.trials,
        t0_max: config.t0_max,
        seed: config.seed,
        passed: true,
    };
    for (trial, &(sum, norm, k)) in per_trial.iter().enumerate() {
        report.min_partial_sum = report.min_partial_sum.min(sum);
        if norm < report.min_normalized {
            report.min_normalized = norm;
            report.worst_trial = trial;
            report.worst_t0 = k;
        }
    }
    report.passed = report.min_normalized >= -config.tolerance;
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainStrategy {
    RandomGaussian,
    SinusoidGrid,
    CoordinateAscent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSearch {
    pub strategy: GainStrategy,
    /// Number of loop simulations.
    pub budget: usize,
    /// Length of each disturbance sequence.
    pub horizon: usize,
    pub seed: u64,
}

impl GainSearch {
    pub fn new(strategy: GainStrategy, budget: usize) -> Self {
        Self {
            strategy,
            budget,
            horizon: match strategy {
                GainStrategy::SinusoidGrid => 2000,
                _ => 200,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    /// `max ‖e‖₂ / ‖d‖₂` over the sampled disturbances.
    pub lower_bound: f64,
    pub best_d: DMatrix<f64>,
    pub evaluations: usize,
    pub strategy: GainStrategy,
    pub seed: u64,
}

fn ratio(lp: &LoopPlant, nl: NonlinearityKind, d: &DMatrix<f64>) -> f64 {
    let dn = d.norm_squared();
    if dn == 0.0 {
        return 0.0;
    }
    (lp.output_energy(nl, d) / dn).sqrt()
}

/// Falsification lower bound on the loop gain. Any value returned is
/// attained by an actual disturbance (`best_d`), so it never exceeds the
/// true gain.
pub fn empirical_gain(
    plant: &StateSpace,
    nl: NonlinearityKind,
    search: &GainSearch,
) -> Result<GainEstimate, OracleError> {
    let lp = LoopPlant::new(plant)?;
    let n_d = lp.n_d();
    let len = search.horizon.max(1);
    let budget = search.budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);

    let (best, best_d, used) = match search.strategy {
        GainStrategy::RandomGaussian => {
            let draws: Vec<DMatrix<f64>> = (0..budget)
                .map(|i| random_disturbance(&mut rng, n_d, len, i))
                .collect();
            let (k, g) = draws
                .par_iter()
                .map(|d| ratio(&lp, nl, d))
                .enumerate()
                .reduce(|| (0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            (g, draws[k].clone(), budget)
        }
        GainStrategy::SinusoidGrid => sinusoid_search(&lp, nl, len, budget, &mut rng),
        GainStrategy::CoordinateAscent => coordinate_ascent(&lp, nl, len, budget, &mut rng),
    };
    Ok(GainEstimate {
        lower_bound: best,
        best_d,
        evaluations: used,
        strategy: search.strategy,
        seed: search.seed,
    })
}

fn random_disturbance(rng: &mut ChaCha8Rng, n_d: usize, len: usize, i: usize) -> DMatrix<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    match i % 3 {
        0 => DMatrix::from_fn(n_d, len, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
        1 => {
            // Low-pass filtered noise concentrates energy at low frequency.
            let a: f64 = rng.random_range(0.0..0.99);
            let mut out = DMatrix::zeros(n_d, len);
            for r in 0..n_d {
                let mut s = 0.0;
                for k in 0..len {
                    s = a * s + scale * rng.sample::<f64, _>(StandardNormal);
                    out[(r, k)] = s;
                }
            }
            out
        }
        _ => {
            // Short burst followed by silence.
            let burst = rng.random_range(1..=len);
            DMatrix::from_fn(n_d, len, |_, k| {
                if k < burst {
                    scale * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
        }
    }
}

fn sinusoid(dir: &[f64], phase: &[f64], omega: f64, amp: f64, len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dir.len(), len, |r, k| {
        amp * dir[r] * (omega * k as f64 + phase[r]).cos()
    })
}

#[derive(Clone, Copy)]
enum Direction {
    Fixed(usize),
    /// Follows the linearization `w = λ v` as the frequency moves.
    Linear(f64),
}

fn sinusoid_search(
    lp: &LoopPlant,
    nl: NonlinearityKind,
    len: usize,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, DMatrix<f64>, usize) {
    let n_d = lp.n_d();
    // Directions: coordinate axes plus random unit vectors and phases.
    let mut fixed: Vec<(Vec<f64>, Vec<f64>)> = (0..n_d)
        .map(|i| {
            let mut v = vec![0.0; n_d];
            v[i] = 1.0;
            (v, vec![0.0; n_d])
        })
        .collect();
    for _ in 0..2 {
        let v: Vec<f64> = (0..n_d).map(|_| rng.sample(StandardNormal)).collect();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let ph = (0..n_d).map(|_| rng.random_range(0.0..6.3)).collect();
        fixed.push((v.iter().map(|x| x / nv).collect(), ph));
    }
    let mut sources: Vec<Direction> = (0..fixed.len()).map(Direction::Fixed).collect();
    sources.extend([0.0, 0.5, 1.0].map(Direction::Linear));
    let shape = |src: Direction, omega: f64| -> (Vec<f64>, Vec<f64>) {
        match src {
            Direction::Fixed(i) => fixed[i].clone(),
            Direction::Linear(lam) => lp
                .linear_direction(lam, omega)
                .unwrap_or_else(|| fixed[0].clone()),
        }
    };
    let signal = |src: Direction, omega: f64, amp: f64| {
        let (dir, ph) = shape(src, omega);
        sinusoid(&dir, &ph, omega, amp, len)
    };

    let amps = [0.1, 1.0, 10.0];
    let grid_budget = (budget * 3 / 4).max(1);
    let per = (grid_budget / (sources.len() * amps.len())).max(1);
    let mut cands = Vec::new();
    for &src in &sources {
        for &amp in &amps {
            for j in 0..per {
                let omega = std::f64::consts::PI * j as f64 / (per.max(2) - 1) as f64;
                cands.push((src, amp, omega));
            }
        }
    }
    cands.truncate(budget);
    let scored: Vec<f64> = cands
        .par_iter()
        .map(|&(src, amp, om)| ratio(lp, nl, &signal(src, om, amp)))
        .collect();
    let mut used = scored.len();
    let (bi, mut best) = scored
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let (bsrc, bamp, mut bom) = cands[bi];
    // Local refinement in frequency around the best grid point.
    let mut step = std::f64::consts::PI / (per.max(2) - 1) as f64;
    while used + 2 <= budget && step > 1e-7 {
        let mut moved = false;
        for om in [bom - step, bom + step] {
            let om = om.clamp(0.0, std::f64::consts::PI);
            let g = ratio(lp, nl, &signal(bsrc, om, bamp));
            used += 1;
            if g > best {
                best = g;
                bom = om;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (best, signal(bsrc, bom, bamp), used)
}

fn coordinate_ascent(
    lp: &LoopPlant,
    nl: NonlinearityKind,
    len: usize,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, DMatrix<f64>, usize) {
    let n_d = lp.n_d();
    let starts = (budget / 10).clamp(1, 50);
    let mut best_d = DMatrix::zeros(n_d, len);
    let mut best = 0.0;
    for i in 0..starts {
        let d = random_disturbance(rng, n_d, len, i);
        let g = ratio(lp, nl, &d);
        if g > best {
            best = g;
            best_d = d;
        }
    }
    let mut used = starts;
    let mut step = 0.5;
    let mut fails = 0;
    while used < budget {
        let scale = best_d.norm() / ((n_d * len) as f64).sqrt();
        let mut cand = best_d.clone();
        // Perturb a random window of samples in one coordinate.
        let r = rng.random_range(0..n_d);
        let start = rng.random_range(0..len);
        let width = rng.random_range(1..=len.min(20));
        for k in start..(start + width).min(len) {
            cand[(r, k)] += step * scale.max(1e-12) * rng.sample::<f64, _>(StandardNormal);
        }
        let g = ratio(lp, nl, &cand);
        used += 1;
        if g > best {
            best = g;
            best_d = cand;
            fails = 0;
        } else {
            fails += 1;
            if fails > 50 {
                step = (step * 0.5).max(1e-3);
                fails = 0;
            }
        }
    }
    (best, best_d, used)
}

/// `sup_ω σ_max(G_{output,input}(e^{jω}))` by a uniform grid on `[0, π]`
/// followed by golden-section refinement around the best grid point.
pub fn hinf_norm_grid(sys: &StateSpace, input: usize, output: usize, points: usize) -> f64 {
    let block = |omega: f64| -> f64 {
        let g = sys.transfer_at(Complex64::from_polar(1.0, omega));
        let r0: usize = sys.outputs()[..output].iter().map(|c| c.width).sum();
        let c0: usize = sys.inputs()[..input].iter().map(|c| c.width).sum();
        let rows = sys.outputs()[output].width;
        let cols = sys.inputs()[input].width;
        let sub = g.view((r0, c0), (rows, cols)).into_owned();
        sub.singular_values().max()
    };
    let points = points.max(2);
    let h = std::f64::consts::PI / (points - 1) as f64;
    let (mut best, mut at) = (0.0, 0.0);
    for i in 0..points {
        let om = h * i as f64;
        let s = block(om);
        if s > best {
            best = s;
            at = om;
        }
    }
    let (mut lo, mut hi) = ((at - h).max(0.0), (at + h).min(std::f64::consts::PI));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if block(a) > block(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.max(block(0.5 * (lo + hi)))
}
