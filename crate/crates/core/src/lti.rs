//! Discrete-time state-space systems.
//!
//! A [`StateSpace`] carries `(A, B, C, D)` together with named input and
//! output channels, so partitioned blocks such as `B1`, `C2` or `D12` are
//! recovered by channel index rather than by hand-written slicing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("channel `{0}` has zero width")]
    EmptyChannel(String),
    #[error("trajectory is missing channel `{0}`")]
    MissingChannel(String),
    #[error("entry ({row}, {col}) is improper: numerator degree {num} >= denominator degree {den}")]
    ImproperEntry {
        row: usize,
        col: usize,
        num: usize,
        den: usize,
    },
    #[error("entry ({row}, {col}) has denominator degree {den}; only first-order terms are realizable")]
    HigherOrderEntry { row: usize, col: usize, den: usize },
    #[error("entry ({row}, {col}) has a zero denominator")]
    ZeroDenominator { row: usize, col: usize },
    #[error("cannot parse transfer entry `{0}`")]
    Parse(String),
}

pub type Result<T, E = LtiError> = std::result::Result<T, E>;

/// A named, fixed-width signal channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub width: usize,
}

impl Channel {
    pub fn new(name: impl Into<String>, width: usize) -> Self {
        Self {
            name: name.into(),
            width,
        }
    }
}

fn offsets(channels: &[Channel]) -> Vec<usize> {
    let mut acc = 0;
    channels
        .iter()
        .map(|c| {
            let o = acc;
            acc += c.width;
            o
        })
        .collect()
}

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k) + D u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    inputs: Vec<Channel>,
    outputs: Vec<Channel>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        inputs: Vec<Channel>,
        outputs: Vec<Channel>,
    ) -> Result<Self> {
        for ch in inputs.iter().chain(&outputs) {
            if ch.width == 0 {
                return Err(LtiError::EmptyChannel(ch.name.clone()));
            }
        }
        let n_x = a.nrows();
        let n_u: usize = inputs.iter().map(|c| c.width).sum();
        let n_y: usize = outputs.iter().map(|c| c.width).sum();
        let checks = [
            ("A columns", n_x, a.ncols()),
            ("B rows", n_x, b.nrows()),
            ("B columns", n_u, b.ncols()),
            ("C rows", n_y, c.nrows()),
            ("C columns", n_x, c.ncols()),
            ("D rows", n_y, d.nrows()),
            ("D columns", n_u, d.ncols()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(LtiError::Dimension {
                    what: what.to_string(),
                    expected,
                    found,
                });
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            inputs,
            outputs,
        })
    }

    /// Lurye plant with inputs `(w, d)` and outputs `(v, e)`.
    #[allow(clippy::too_many_arguments)]
    pub fn lurye(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c1: DMatrix<f64>,
        c2: DMatrix<f64>,
        d11: DMatrix<f64>,
        d12: DMatrix<f64>,
        d21: DMatrix<f64>,
        d22: DMatrix<f64>,
    ) -> Result<Self> {
        let m = b1.ncols();
        let n_d = b2.ncols();
        let n_e = c2.nrows();
        let check = |what: &str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(LtiError::Dimension {
                    what: what.to_string(),
                    expected,
                    found,
                })
            }
        };
        check("C1 rows", m, c1.nrows())?;
        check("D11 shape", m * m, d11.nrows() * d11.ncols())?;
        check("D12 rows", m, d12.nrows())?;
        check("D12 columns", n_d, d12.ncols())?;
        check("D21 rows", n_e, d21.nrows())?;
        check("D21 columns", m, d21.ncols())?;
        check("D22 rows", n_e, d22.nrows())?;
        check("D22 columns", n_d, d22.ncols())?;
        check("B1/B2 rows", b1.nrows(), b2.nrows())?;
        check("C1/C2 columns", c1.ncols(), c2.ncols())?;
        let b = crate::linalg::hstack(&[&b1, &b2]);
        let c = crate::linalg::vstack(&[&c1, &c2]);
        let top = crate::linalg::hstack(&[&d11, &d12]);
        let bottom = crate::linalg::hstack(&[&d21, &d22]);
        let d = crate::linalg::vstack(&[&top, &bottom]);
        Self::new(
            a,
            b,
            c,
            d,
            vec![Channel::new("w", m), Channel::new("d", n_d)],
            vec![Channel::new("v", m), Channel::new("e", n_e)],
        )
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn inputs(&self) -> &[Channel] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Channel] {
        &self.outputs
    }

    pub fn input_partition(&self) -> Vec<usize> {
        self.inputs.iter().map(|c| c.width).collect()
    }

    pub fn output_partition(&self) -> Vec<usize> {
        self.outputs.iter().map(|c| c.width).collect()
    }

    /// Columns of `B` driven by input channel `j`.
    pub fn b_block(&self, j: usize) -> DMatrix<f64> {
        let off = offsets(&self.inputs)[j];
        self.b.columns(off, self.inputs[j].width).into_owned()
    }

    /// Rows of `C` producing output channel `i`.
    pub fn c_block(&self, i: usize) -> DMatrix<f64> {
        let off = offsets(&self.outputs)[i];
        self.c.rows(off, self.outputs[i].width).into_owned()
    }

    pub fn d_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let ro = offsets(&self.outputs)[i];
        let co = offsets(&self.inputs)[j];
        self.d
            .view((ro, co), (self.outputs[i].width, self.inputs[j].width))
            .into_owned()
    }

    /// Same system with every column of `B` and `D` for input channel `j`
    /// multiplied by `alpha`.
    pub fn with_input_scaled(&self, j: usize, alpha: f64) -> Self {
        let off = offsets(&self.inputs)[j];
        let w = self.inputs[j].width;
        let mut out = self.clone();
        out.b.columns_mut(off, w).scale_mut(alpha);
        out.d.columns_mut(off, w).scale_mut(alpha);
        out
    }

    /// `C (zI − A)⁻¹ B + D` at a complex point `z` that is not a pole.
    pub fn transfer_at(&self, z: Complex64) -> DMatrix<Complex64> {
        let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let d = to_c(&self.d);
        let n = self.n_states();
        if n == 0 {
            return d;
        }
        let mut resolvent = -to_c(&self.a);
        for i in 0..n {
            resolvent[(i, i)] += z;
        }
        let x = resolvent
            .lu()
            .solve(&to_c(&self.b))
            .expect("transfer_at evaluated at a pole");
        to_c(&self.c) * x + d
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(self)
    }
}

/// Largest eigenvalue magnitude of `A`; zero for a pure feedthrough.
pub fn spectral_radius(sys: &StateSpace) -> f64 {
    if sys.n_states() == 0 {
        return 0.0;
    }
    sys.a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Finite-horizon sampled signals, one `width × (T0 + 1)` matrix per
/// channel. Column `k` holds the value at time `k`; times before zero are
/// taken as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    samples: usize,
    channels: BTreeMap<String, DMatrix<f64>>,
}

impl Trajectory {
    /// Empty trajectory with `horizon + 1` samples per channel.
    pub fn new(horizon: usize) -> Self {
        Self {
            samples: horizon + 1,
            channels: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.samples - 1
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn insert(&mut self, name: impl Into<String>, signal: DMatrix<f64>) -> Result<()> {
        let name = name.into();
        if signal.ncols() != self.samples {
            return Err(LtiError::Dimension {
                what: format!("samples of channel `{name}`"),
                expected: self.samples,
                found: signal.ncols(),
            });
        }
        self.channels.insert(name, signal);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, signal: DMatrix<f64>) -> Result<Self> {
        self.insert(name, signal)?;
        Ok(self)
    }

    pub fn channel(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.channels.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.channel(name)
            .ok_or_else(|| LtiError::MissingChannel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    /// Sum of squared samples of a channel.
    pub fn energy(&self, name: &str) -> f64 {
        self.channel(name).map_or(0.0, |s| s.norm_squared())
    }
}

/// Simulates `sys` from `x0` over the horizon of `inputs`.
///
/// The returned trajectory holds every output channel plus the state
/// channel `"x"` (`x(0) … x(T0)`).
pub fn simulate(sys: &StateSpace, inputs: &Trajectory, x0: &DVector<f64>) -> Result<Trajectory> {
    let n = sys.n_states();
    if x0.len() != n {
        return Err(LtiError::Dimension {
            what: "initial state".into(),
            expected: n,
            found: x0.len(),
        });
    }
    let samples = inputs.samples();
    let mut u = DMatrix::zeros(sys.n_inputs(), samples);
    let mut row = 0;
    for ch in sys.inputs() {
        let sig = inputs.require(&ch.name)?;
        if sig.nrows() != ch.width {
            return Err(LtiError::Dimension {
                what: format!("width of input `{}`", ch.name),
                expected: ch.width,
                found: sig.nrows(),
            });
        }
        u.rows_mut(row, ch.width).copy_from(sig);
        row += ch.width;
    }

    let mut xs = DMatrix::zeros(n, samples);
    let mut x = x0.clone();
    for k in 0..samples {
        xs.set_column(k, &x);
        if n > 0 {
            x = &sys.a * &x + &sys.b * u.column(k);
        }
    }
    let y = &sys.c * &xs + &sys.d * &u;

    let mut out = Trajectory::new(samples - 1);
    let mut row = 0;
    for ch in sys.outputs() {
        out.insert(ch.name.clone(), y.rows(row, ch.width).into_owned())?;
        row += ch.width;
    }
    out.insert("x", xs)?;
    Ok(out)
}

/// Scalar rational transfer function with coefficients in descending
/// powers of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTf {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl ScalarTf {
    pub fn constant(c: f64) -> Self {
        Self {
            num: vec![c],
            den: vec![1.0],
        }
    }

    /// `gain / (z − pole)`.
    pub fn first_order(gain: f64, pole: f64) -> Self {
        Self {
            num: vec![gain],
            den: vec![1.0, -pole],
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let horner = |p: &[f64]| {
            p.iter()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
        };
        horner(&self.num) / horner(&self.den)
    }
}

fn trim_leading(p: &[f64]) -> &[f64] {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len());
    &p[first..]
}

impl fmt::Display for ScalarTf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?})/({:?})", self.num, self.den)
    }
}

/// Accepts `c`, `c/z`, `c/(z-a)` and `c/(z+a)`.
impl FromStr for ScalarTf {
    type Err = LtiError;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || LtiError::Parse(s.to_string());
        let num_of = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match compact.split_once('/') {
            None => Ok(Self::constant(num_of(&compact)?)),
            Some((n, den)) => {
                let gain = num_of(n)?;
                let den = den
                    .strip_prefix('(')
                    .and_then(|d| d.strip_suffix(')'))
                    .unwrap_or(den);
                if den == "z" {
                    return Ok(Self::first_order(gain, 0.0));
                }
                let rest = den.strip_prefix('z').ok_or_else(bad)?;
                if let Some(a) = rest.strip_prefix('-') {
                    Ok(Self::first_order(gain, num_of(a)?))
                } else if let Some(a) = rest.strip_prefix('+') {
                    Ok(Self::first_order(gain, -num_of(a)?))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

enum BankEntry {
    Constant(f64),
    Pole { gain: f64, pole: f64 },
}

fn classify(tf: &ScalarTf, row: usize, col: usize) -> Result<BankEntry> {
    let num = trim_leading(&tf.num);
    let den = trim_leading(&tf.den);
    if den.is_empty() {
        return Err(LtiError::ZeroDenominator { row, col });
    }
    if num.is_empty() {
        return Ok(BankEntry::Constant(0.0));
    }
    let (dn, dd) = (num.len() - 1, den.len() - 1);
    match dd {
        0 if dn == 0 => Ok(BankEntry::Constant(num[0] / den[0])),
        1 if dn == 0 => Ok(BankEntry::Pole {
            gain: num[0] / den[0],
            pole: -den[1] / den[0],
        }),
        0 | 1 => Err(LtiError::ImproperEntry {
            row,
            col,
            num: dn,
            den: dd,
        }),
        _ => Err(LtiError::HigherOrderEntry { row, col, den: dd }),
    }
}

/// Realizes a grid of constants and strictly proper first-order terms
/// `c/(z − a)` with one state per pole term.
///
/// States are ordered row-major over the grid; state `s` for entry `(i, j)`
/// has `A[s, s] = a`, `B[s, j] = 1` and `C[i, s] = c`.
pub fn realize_first_order_bank(
    grid: &[Vec<ScalarTf>],
    inputs: Vec<Channel>,
    outputs: Vec<Channel>,
) -> Result<StateSpace> {
    let n_y: usize = outputs.iter().map(|c| c.width).sum();
    let n_u: usize = inputs.iter().map(|c| c.width).sum();
    if grid.len() != n_y {
        return Err(LtiError::Dimension {
            what: "grid rows".into(),
            expected: n_y,
            found: grid.len(),
        });
    }
    let mut poles = Vec::new();
    let mut d = DMatrix::zeros(n_y, n_u);
    for (i, row) in grid.iter().enumerate() {
        if row.len() != n_u {
            return Err(LtiError::Dimension {
                what: format!("grid row {i} columns"),
                expected: n_u,
                found: row.len(),
            });
        }
        for (j, tf) in row.iter().enumerate() {
            match classify(tf, i, j)? {
                BankEntry::Constant(c) => d[(i, j)] = c,
                BankEntry::Pole { gain, pole } => poles.push((i, j, gain, pole)),
            }
        }
    }
    let n_x = poles.len();
    let mut a = DMatrix::zeros(n_x, n_x);
    let mut b = DMatrix::zeros(n_x, n_u);
    let mut c = DMatrix::zeros(n_y, n_x);
    for (s, &(i, j, gain, pole)) in poles.iter().enumerate() {
        a[(s, s)] = pole;
        b[(s, j)] = 1.0;
        c[(i, s)] = gain;
    }
    StateSpace::new(a, b, c, d, inputs, outputs)
}
