//! Dynamic multipliers for the repeated slope-restricted and repeated ReLU
//! nonlinearities.
//!
//! Both classes are parameterised by families of `m × m` blocks and produce
//! a symmetric middle matrix `M` of size `2m(N+1)` matching the `r` layout of
//! [`crate::filter`].
//!
//! Index convention: families indexed `i = −N … N` (`Q` of the slope class
//! and `Q³` of the ReLU class) are stored as a `Vec` of length `2N + 1` with
//! `Q_i` at position `i + N`, so the most negative index comes first.
//! Families indexed `i = 0 … N` (`Q¹`, `Q²`) are stored at position `i`.
//!
//! For the ReLU class the lag blocks `Q¹_i`, `Q²_i` (`i ≥ 1`) only need to
//! be entrywise nonnegative. The arrowhead blocks `M1`, `M2` carry `Q^j_i`
//! along the first block row and `Q^j_iᵀ` down the first block column, which
//! keeps `M` symmetric. `Q¹_0`, `Q²_0` must be symmetric.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hstack, vstack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierClass {
    /// Repeated nonlinearity slope-restricted to `[0, 1]`.
    Slope,
    /// Repeated ReLU.
    Relu,
}

impl fmt::Display for MultiplierClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Slope => "slope",
            Self::Relu => "relu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Q,
    Q1,
    Q2,
    Q3,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Q => "Q",
            Self::Q1 => "Q1",
            Self::Q2 => "Q2",
            Self::Q3 => "Q3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Entries of `Q_i`, `i ≠ 0`, are nonpositive.
    LagNonpositive,
    /// Off-diagonal entries of `Q_0` are nonpositive.
    OffDiagonalNonpositive,
    /// Row sums of `[Q_{−N} … Q_N]` are nonnegative.
    RowSumNonnegative,
    /// Column sums of `[Q_{−N}; …; Q_N]` are nonnegative.
    ColumnSumNonnegative,
    Symmetric,
    Nonnegative,
    /// Off-diagonal entries of `Q³_0` are nonnegative.
    Metzler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Entry(usize, usize),
    Row(usize),
    Column(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    pub family: Family,
    /// `None` for conditions on the whole stacked family (row/column sums).
    pub index: Option<isize>,
    pub position: Position,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.condition {
            Condition::LagNonpositive => "lag entry must be <= 0",
            Condition::OffDiagonalNonpositive => "off-diagonal entry must be <= 0",
            Condition::RowSumNonnegative => "row sum of M_row must be >= 0",
            Condition::ColumnSumNonnegative => "column sum of M_col must be >= 0",
            Condition::Symmetric => "block must be symmetric",
            Condition::Nonnegative => "entry must be >= 0",
            Condition::Metzler => "off-diagonal entry must be >= 0 (Metzler)",
        };
        match self.index {
            Some(i) => write!(f, "{}_{}", self.family, i)?,
            None => write!(f, "{}", self.family)?,
        }
        match self.position {
            Position::Entry(r, c) => write!(f, "[{r},{c}]")?,
            Position::Row(r) => write!(f, " row {r}")?,
            Position::Column(c) => write!(f, " column {c}")?,
        }
        write!(f, ": {what} (value {:.3e})", self.value)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("family {family} needs {expected} blocks of size {width}x{width}, found {found}")]
    Shape {
        family: Family,
        expected: usize,
        found: usize,
        width: usize,
    },
    #[error("multiplier violates its class constraints:\n{}", list(.0))]
    Violations(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_shape(
    family: Family,
    blocks: &[DMatrix<f64>],
    expected: usize,
    width: usize,
) -> Result<(), MultiplierError> {
    let ok = blocks.len() == expected
        && blocks.iter().all(|b| b.nrows() == width && b.ncols() == width);
    if ok {
        Ok(())
    } else {
        Err(MultiplierError::Shape {
            family,
            expected,
            found: blocks.len(),
            width,
        })
    }
}

/// Zames–Falb type multiplier for repeated `[0, 1]` slope-restricted
/// nonlinearities.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeMultiplier {
    horizon: usize,
    width: usize,
    q: Vec<DMatrix<f64>>,
}

impl SlopeMultiplier {
    /// `q` holds `Q_{−N} … Q_N`. Only shapes are checked here; see
    /// [`Self::validate`].
    pub fn new(horizon: usize, width: usize, q: Vec<DMatrix<f64>>) -> Result<Self, MultiplierError> {
        check_shape(Family::Q, &q, 2 * horizon + 1, width)?;
        Ok(Self { horizon, width, q })
    }

    pub fn zeros(horizon: usize, width: usize) -> Self {
        Self {
            horizon,
            width,
            q: vec![DMatrix::zeros(width, width); 2 * horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `Q_i` for `−N ≤ i ≤ N`.
    pub fn q(&self, i: isize) -> &DMatrix<f64> {
        &self.q[(i + self.horizon as isize) as usize]
    }

    pub fn q_mut(&mut self, i: isize) -> &mut DMatrix<f64> {
        let n = self.horizon as isize;
        &mut self.q[(i + n) as usize]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    /// `[Q_{−N} … Q_N]`.
    pub fn m_row(&self) -> DMatrix<f64> {
        hstack(&self.q.iter().collect::<Vec<_>>())
    }

    /// `[Q_{−N}; …; Q_N]`, the stack whose columns are those of `M_col`.
    pub fn m_col(&self) -> DMatrix<f64> {
        vstack(&self.q.iter().collect::<Vec<_>>())
    }

    pub fn violations(&self, slack: f64) -> Vec<Violation> {
        let n = self.horizon as isize;
        let m = self.width;
        let mut out = Vec::new();
        for i in -n..=n {
            let q = self.q(i);
            for r in 0..m {
                for c in 0..m {
                    let x = q[(r, c)];
                    if i != 0 && x > slack {
                        out.push(Violation {
                            condition: Condition::LagNonpositive,
                            family: Family::Q,
                            index: Some(i),
                            position: Position::Entry(r, c),
                            value: x,
                        });
                    } else if i == 0 && r != c && x > slack {
                        out.push(Violation {
                            condition: Condition::OffDiagonalNonpositive,
                            family: Family::Q,
                            index: Some(0),
                            position: Position::Entry(r, c),
                            value: x,
                        });
                    }
                }
            }
        }
        let row = self.m_row();
        for r in 0..m {
            let s = row.row(r).sum();
            if s < -slack {
                out.push(Violation {
                    condition: Condition::RowSumNonnegative,
                    family: Family::Q,
                    index: None,
                    position: Position::Row(r),
                    value: s,
                });
            }
        }
        let col = self.m_col();
        for c in 0..m {
            let s = col.column(c).sum();
            if s < -slack {
                out.push(Violation {
                    condition: Condition::ColumnSumNonnegative,
                    family: Family::Q,
                    index: None,
                    position: Position::Column(c),
                    value: s,
                });
            }
        }
        out
    }

    pub fn validate(&self, slack: f64) -> Result<(), MultiplierError> {
        let v = self.violations(slack);
        if v.is_empty() {
            Ok(())
        } else {
            Err(MultiplierError::Violations(v))
        }
    }

    /// The arrowhead `M0` with first block row `Q_0 … Q_N` and first block
    /// column `Q_0, Q_{−1}, …, Q_{−N}`.
    pub fn m0(&self) -> DMatrix<f64> {
        let n = self.horizon as isize;
        let row: Vec<_> = (0..=n).map(|i| self.q(i)).collect();
        let col: Vec<_> = (0..=n).map(|i| self.q(-i)).collect();
        arrowhead(&row, &col, self.width)
    }

    /// `Q̄_{T0}` from the first block row `Q_0 … Q_N` and first block column
    /// `Q_0, Q_{−1}, …, Q_{−N}`, zero-padded or truncated to `T0 + 1` blocks.
    pub fn toeplitz(&self, t0: usize) -> DMatrix<f64> {
        let n = self.horizon as isize;
        let row: Vec<_> = (0..=n).map(|i| self.q(i).clone()).collect();
        let col: Vec<_> = (0..=n).map(|i| self.q(-i).clone()).collect();
        block_toeplitz(&row, &col, self.width, t0)
    }

    /// Same multiplier at a longer horizon, padded with zero blocks.
    pub fn extended(&self, horizon: usize) -> Self {
        assert!(horizon >= self.horizon);
        let pad = horizon - self.horizon;
        let zero = DMatrix::zeros(self.width, self.width);
        let mut q = vec![zero.clone(); pad];
        q.extend(self.q.iter().cloned());
        q.extend(std::iter::repeat_n(zero, pad));
        Self {
            horizon,
            width: self.width,
            q,
        }
    }

    /// The ReLU multiplier with `Q¹ = Q² = 0` and `Q³_i = −Q_i`, whose
    /// middle matrix coincides with this one.
    pub fn to_relu(&self) -> ReluMultiplier {
        let zeros = vec![DMatrix::zeros(self.width, self.width); self.horizon + 1];
        ReluMultiplier {
            horizon: self.horizon,
            width: self.width,
            q1: zeros.clone(),
            q2: zeros,
            q3: self.q.iter().map(|q| -q).collect(),
        }
    }
}

pub type Families<'a> = (&'a [DMatrix<f64>], &'a [DMatrix<f64>], &'a [DMatrix<f64>]);

/// Dynamic multiplier for the repeated ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluMultiplier {
    horizon: usize,
    width: usize,
    q1: Vec<DMatrix<f64>>,
    q2: Vec<DMatrix<f64>>,
    q3: Vec<DMatrix<f64>>,
}

impl ReluMultiplier {
    /// `q1`, `q2` hold `Q^j_0 … Q^j_N`; `q3` holds `Q³_{−N} … Q³_N`.
    pub fn new(
        horizon: usize,
        width: usize,
        q1: Vec<DMatrix<f64>>,
        q2: Vec<DMatrix<f64>>,
        q3: Vec<DMatrix<f64>>,
    ) -> Result<Self, MultiplierError> {
        check_shape(Family::Q1, &q1, horizon + 1, width)?;
        check_shape(Family::Q2, &q2, horizon + 1, width)?;
        check_shape(Family::Q3, &q3, 2 * horizon + 1, width)?;
        Ok(Self {
            horizon,
            width,
            q1,
            q2,
            q3,
        })
    }

    pub fn zeros(horizon: usize, width: usize) -> Self {
        let z = DMatrix::zeros(width, width);
        Self {
            horizon,
            width,
            q1: vec![z.clone(); horizon + 1],
            q2: vec![z.clone(); horizon + 1],
            q3: vec![z; 2 * horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn q1(&self, i: usize) -> &DMatrix<f64> {
        &self.q1[i]
    }

    pub fn q2(&self, i: usize) -> &DMatrix<f64> {
        &self.q2[i]
    }

    pub fn q3(&self, i: isize) -> &DMatrix<f64> {
        &self.q3[(i + self.horizon as isize) as usize]
    }

    pub fn q1_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.q1[i]
    }

    pub fn q2_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.q2[i]
    }

    pub fn q3_mut(&mut self, i: isize) -> &mut DMatrix<f64> {
        let n = self.horizon as isize;
        &mut self.q3[(i + n) as usize]
    }

    /// `(Q1, Q2, Q3)` in storage order.
    pub fn families(&self) -> Families<'_> {
        (&self.q1, &self.q2, &self.q3)
    }

    pub fn violations(&self, slack: f64) -> Vec<Violation> {
        let m = self.width;
        let mut out = Vec::new();
        for (family, blocks) in [(Family::Q1, &self.q1), (Family::Q2, &self.q2)] {
            for (i, q) in blocks.iter().enumerate() {
                for r in 0..m {
                    for c in 0..m {
                        if q[(r, c)] < -slack {
                            out.push(Violation {
                                condition: Condition::Nonnegative,
                                family,
                                index: Some(i as isize),
                                position: Position::Entry(r, c),
                                value: q[(r, c)],
                            });
                        }
                        if i == 0 && r < c && (q[(r, c)] - q[(c, r)]).abs() > slack {
                            out.push(Violation {
                                condition: Condition::Symmetric,
                                family,
                                index: Some(0),
                                position: Position::Entry(r, c),
                                value: q[(r, c)] - q[(c, r)],
                            });
                        }
                    }
                }
            }
        }
        let n = self.horizon as isize;
        for i in -n..=n {
            let q = self.q3(i);
            for r in 0..m {
                for c in 0..m {
                    let x = q[(r, c)];
                    if x >= -slack || (i == 0 && r == c) {
                        continue;
                    }
                    out.push(Violation {
                        condition: if i == 0 {
                            Condition::Metzler
                        } else {
                            Condition::Nonnegative
                        },
                        family: Family::Q3,
                        index: Some(i),
                        position: Position::Entry(r, c),
                        value: x,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self, slack: f64) -> Result<(), MultiplierError> {
        let v = self.violations(slack);
        if v.is_empty() {
            Ok(())
        } else {
            Err(MultiplierError::Violations(v))
        }
    }

    fn symmetric_arrowhead(&self, family: &[DMatrix<f64>]) -> DMatrix<f64> {
        let row: Vec<_> = family.iter().collect();
        let transposed: Vec<_> = family.iter().map(|q| q.transpose()).collect();
        let col: Vec<_> = transposed.iter().collect();
        arrowhead(&row, &col, self.width)
    }

    pub fn m1(&self) -> DMatrix<f64> {
        self.symmetric_arrowhead(&self.q1)
    }

    pub fn m2(&self) -> DMatrix<f64> {
        self.symmetric_arrowhead(&self.q2)
    }

    pub fn m3(&self) -> DMatrix<f64> {
        let n = self.horizon as isize;
        let row: Vec<_> = (0..=n).map(|i| self.q3(i)).collect();
        let col: Vec<_> = (0..=n).map(|i| self.q3(-i)).collect();
        arrowhead(&row, &col, self.width)
    }

    /// `(Q̄¹_{T0}, Q̄²_{T0}, Q̄³_{T0})`.
    pub fn toeplitz(&self, t0: usize) -> [DMatrix<f64>; 3] {
        let sym = |family: &[DMatrix<f64>]| {
            let col: Vec<_> = family.iter().map(|q| q.transpose()).collect();
            block_toeplitz(family, &col, self.width, t0)
        };
        let n = self.horizon as isize;
        let row3: Vec<_> = (0..=n).map(|i| self.q3(i).clone()).collect();
        let col3: Vec<_> = (0..=n).map(|i| self.q3(-i).clone()).collect();
        [
            sym(&self.q1),
            sym(&self.q2),
            block_toeplitz(&row3, &col3, self.width, t0),
        ]
    }

    pub fn extended(&self, horizon: usize) -> Self {
        assert!(horizon >= self.horizon);
        let pad = horizon - self.horizon;
        let zero = DMatrix::zeros(self.width, self.width);
        let grow = |v: &[DMatrix<f64>]| {
            let mut out = v.to_vec();
            out.extend(std::iter::repeat_n(zero.clone(), pad));
            out
        };
        let mut q3 = vec![zero.clone(); pad];
        q3.extend(self.q3.iter().cloned());
        q3.extend(std::iter::repeat_n(zero.clone(), pad));
        Self {
            horizon,
            width: self.width,
            q1: grow(&self.q1),
            q2: grow(&self.q2),
            q3,
        }
    }
}

/// A multiplier of either class.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Slope(SlopeMultiplier),
    Relu(ReluMultiplier),
}

impl Multiplier {
    pub fn zeros(class: MultiplierClass, horizon: usize, width: usize) -> Self {
        match class {
            MultiplierClass::Slope => Self::Slope(SlopeMultiplier::zeros(horizon, width)),
            MultiplierClass::Relu => Self::Relu(ReluMultiplier::zeros(horizon, width)),
        }
    }

    pub fn as_slope(&self) -> Option<&SlopeMultiplier> {
        match self {
            Self::Slope(q) => Some(q),
            Self::Relu(_) => None,
        }
    }

    pub fn as_relu(&self) -> Option<&ReluMultiplier> {
        match self {
            Self::Relu(q) => Some(q),
            Self::Slope(_) => None,
        }
    }

    pub fn class(&self) -> MultiplierClass {
        match self {
            Self::Slope(_) => MultiplierClass::Slope,
            Self::Relu(_) => MultiplierClass::Relu,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Self::Slope(q) => q.horizon(),
            Self::Relu(q) => q.horizon(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Self::Slope(q) => q.width(),
            Self::Relu(q) => q.width(),
        }
    }

    pub fn violations(&self, slack: f64) -> Vec<Violation> {
        match self {
            Self::Slope(q) => q.violations(slack),
            Self::Relu(q) => q.violations(slack),
        }
    }

    pub fn validate(&self, slack: f64) -> Result<(), MultiplierError> {
        match self {
            Self::Slope(q) => q.validate(slack),
            Self::Relu(q) => q.validate(slack),
        }
    }

    /// Middle matrix without any class validation.
    pub fn middle_matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Slope(q) => slope_middle(q),
            Self::Relu(q) => relu_middle(q),
        }
    }

    pub fn extended(&self, horizon: usize) -> Self {
        match self {
            Self::Slope(q) => Self::Slope(q.extended(horizon)),
            Self::Relu(q) => Self::Relu(q.extended(horizon)),
        }
    }

    /// Nearest point of the class in the sense the solver needs: sign
    /// constraints are clipped, `Q¹_0`/`Q²_0` symmetrised, and any remaining
    /// row or column sum deficit of a slope multiplier is added to the
    /// diagonal of `Q_0`. Used to clean solver round-off.
    pub fn projected(&self) -> Self {
        let m_of = |q: &DMatrix<f64>| q.nrows();
        match self {
            Self::Slope(q) => {
                let mut q = q.clone();
                let n = q.horizon as isize;
                for i in -n..=n {
                    let b = q.q_mut(i);
                    let m = m_of(b);
                    for r in 0..m {
                        for c in 0..m {
                            if (i != 0 || r != c) && b[(r, c)] > 0.0 {
                                b[(r, c)] = 0.0;
                            }
                        }
                    }
                }
                for j in 0..q.width {
                    // Repeat until the rounded sums are nonnegative too.
                    loop {
                        let deficit = (-q.m_row().row(j).sum()).max(-q.m_col().column(j).sum());
                        if deficit <= 0.0 {
                            break;
                        }
                        let d = &mut q.q_mut(0)[(j, j)];
                        *d += deficit.max(d.abs() * f64::EPSILON + f64::MIN_POSITIVE);
                    }
                }
                Self::Slope(q)
            }
            Self::Relu(q) => {
                let mut q = q.clone();
                for fam in [&mut q.q1, &mut q.q2] {
                    let sym = (&fam[0] + fam[0].transpose()) * 0.5;
                    fam[0] = sym;
                    for b in fam.iter_mut() {
                        b.apply(|x| *x = x.max(0.0));
                    }
                }
                let n = q.horizon as isize;
                for i in -n..=n {
                    let b = q.q3_mut(i);
                    let m = m_of(b);
                    for r in 0..m {
                        for c in 0..m {
                            if (i != 0 || r != c) && b[(r, c)] < 0.0 {
                                b[(r, c)] = 0.0;
                            }
                        }
                    }
                }
                Self::Relu(q)
            }
        }
    }
}

/// A validated middle matrix `M = Mᵀ` of size `2m(N+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiddleMatrix {
    matrix: DMatrix<f64>,
    class: MultiplierClass,
    horizon: usize,
    width: usize,
}

impl MiddleMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn class(&self) -> MultiplierClass {
        self.class
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Builds from an already-validated multiplier.
    pub fn from_multiplier(q: &Multiplier, slack: f64) -> Result<Self, MultiplierError> {
        q.validate(slack)?;
        Ok(Self {
            matrix: q.middle_matrix(),
            class: q.class(),
            horizon: q.horizon(),
            width: q.width(),
        })
    }
}

/// `M = [0, M0ᵀ; M0, −(M0 + M0ᵀ)]` after checking the slope-class
/// conditions exactly.
pub fn assemble_slope_m(q: &SlopeMultiplier) -> Result<MiddleMatrix, MultiplierError> {
    MiddleMatrix::from_multiplier(&Multiplier::Slope(q.clone()), 0.0)
}

/// `M = [M1, −M3ᵀ − M1; −M3 − M1, M1 + M2 + M3 + M3ᵀ]` after checking the
/// ReLU-class conditions exactly.
pub fn assemble_relu_m(q: &ReluMultiplier) -> Result<MiddleMatrix, MultiplierError> {
    MiddleMatrix::from_multiplier(&Multiplier::Relu(q.clone()), 0.0)
}

fn slope_middle(q: &SlopeMultiplier) -> DMatrix<f64> {
    let m0 = q.m0();
    let k = m0.nrows();
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    m.view_mut((0, k), (k, k)).copy_from(&m0.transpose());
    m.view_mut((k, 0), (k, k)).copy_from(&m0);
    m.view_mut((k, k), (k, k))
        .copy_from(&(-(&m0 + m0.transpose())));
    m
}

fn relu_middle(q: &ReluMultiplier) -> DMatrix<f64> {
    // Q¹_0, Q²_0 are symmetric up to validation slack; symmetrising M1, M2
    // and grouping M3 + M3ᵀ keeps M exactly symmetric in floating point.
    let m1 = crate::linalg::symmetric_part(&q.m1());
    let m2 = crate::linalg::symmetric_part(&q.m2());
    let m3 = q.m3();
    let k = m1.nrows();
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    let off = -(&m3 + &m1);
    m.view_mut((0, 0), (k, k)).copy_from(&m1);
    m.view_mut((0, k), (k, k)).copy_from(&off.transpose());
    m.view_mut((k, 0), (k, k)).copy_from(&off);
    m.view_mut((k, k), (k, k))
        .copy_from(&(&m1 + &m2 + (&m3 + m3.transpose())));
    m
}

fn arrowhead(row: &[&DMatrix<f64>], col: &[&DMatrix<f64>], m: usize) -> DMatrix<f64> {
    let blocks = row.len();
    let mut out = DMatrix::zeros(m * blocks, m * blocks);
    for (j, b) in row.iter().enumerate() {
        out.view_mut((0, m * j), (m, m)).copy_from(*b);
    }
    for (i, b) in col.iter().enumerate().skip(1) {
        out.view_mut((m * i, 0), (m, m)).copy_from(*b);
    }
    out
}

/// Block-Toeplitz matrix with `T0 + 1` block rows: block `(a, b)` is
/// `first_row[b − a]` above the diagonal and `first_col[a − b]` below it,
/// zero once the lag exceeds the supplied family.
pub fn block_toeplitz(
    first_row: &[DMatrix<f64>],
    first_col: &[DMatrix<f64>],
    width: usize,
    t0: usize,
) -> DMatrix<f64> {
    let blocks = t0 + 1;
    let mut out = DMatrix::zeros(width * blocks, width * blocks);
    for a in 0..blocks {
        for b in 0..blocks {
            let src = if b >= a {
                first_row.get(b - a)
            } else {
                first_col.get(a - b)
            };
            if let Some(q) = src {
                out.view_mut((width * a, width * b), (width, width))
                    .copy_from(q);
            }
        }
    }
    out
}

/// Nonpositive off-diagonal entries with every row and column sum
/// nonnegative, each tested with the given slack.
pub fn is_doubly_hyperdominant(m: &DMatrix<f64>, slack: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] > slack {
                return false;
            }
        }
    }
    (0..n).all(|i| m.row(i).sum() >= -slack && m.column(i).sum() >= -slack)
}

/// Nonnegative off-diagonal entries; the diagonal is unconstrained.
pub fn is_metzler(m: &DMatrix<f64>, slack: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] >= -slack))
}

pub fn is_symmetric_nonnegative(m: &DMatrix<f64>, slack: f64) -> bool {
    m.is_square()
        && m.iter().all(|&x| x >= -slack)
        && crate::linalg::max_asymmetry(m) <= slack
}

/// Sign attached to one scalar decision variable of a multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Free,
    Nonnegative,
    Nonpositive,
}

/// One scalar decision variable: entry `(row, col)` of block `index` of a
/// family. For the symmetric blocks `Q¹_0`, `Q²_0` the variable with
/// `row < col` also fills `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplierVar {
    pub family: Family,
    pub index: isize,
    pub row: usize,
    pub col: usize,
    pub sign: Sign,
}

impl MultiplierVar {
    fn mirrored(&self) -> bool {
        matches!(self.family, Family::Q1 | Family::Q2) && self.index == 0 && self.row != self.col
    }
}

/// The free scalar entries of a multiplier class at a given horizon and
/// width, with the sign and sum constraints that define the class.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierLayout {
    class: MultiplierClass,
    horizon: usize,
    width: usize,
    vars: Vec<MultiplierVar>,
}

impl MultiplierLayout {
    pub fn new(class: MultiplierClass, horizon: usize, width: usize) -> Self {
        let n = horizon as isize;
        let m = width;
        let mut vars = Vec::new();
        let mut push = |family, index, row, col, sign| {
            vars.push(MultiplierVar {
                family,
                index,
                row,
                col,
                sign,
            })
        };
        match class {
            MultiplierClass::Slope => {
                for i in -n..=n {
                    for r in 0..m {
                        for c in 0..m {
                            let sign = if i == 0 && r == c {
                                Sign::Free
                            } else {
                                Sign::Nonpositive
                            };
                            push(Family::Q, i, r, c, sign);
                        }
                    }
                }
            }
            MultiplierClass::Relu => {
                for family in [Family::Q1, Family::Q2] {
                    for i in 0..=n {
                        for r in 0..m {
                            let start = if i == 0 { r } else { 0 };
                            for c in start..m {
                                push(family, i, r, c, Sign::Nonnegative);
                            }
                        }
                    }
                }
                for i in -n..=n {
                    for r in 0..m {
                        for c in 0..m {
                            let sign = if i == 0 && r == c {
                                Sign::Free
                            } else {
                                Sign::Nonnegative
                            };
                            push(Family::Q3, i, r, c, sign);
                        }
                    }
                }
            }
        }
        Self {
            class,
            horizon,
            width,
            vars,
        }
    }

    pub fn class(&self) -> MultiplierClass {
        self.class
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[MultiplierVar] {
        &self.vars
    }

    /// Linear constraints `Σ coeff·x ≥ 0` beyond the per-variable signs:
    /// the row sums of `M_row` and column sums of `M_col` for the slope
    /// class, nothing for the ReLU class.
    pub fn sum_constraints(&self) -> Vec<Vec<(usize, f64)>> {
        if self.class != MultiplierClass::Slope {
            return Vec::new();
        }
        let m = self.width;
        let mut rows = vec![Vec::new(); m];
        let mut cols = vec![Vec::new(); m];
        for (k, v) in self.vars.iter().enumerate() {
            rows[v.row].push((k, 1.0));
            cols[v.col].push((k, 1.0));
        }
        rows.into_iter().chain(cols).collect()
    }

    pub fn build(&self, values: &[f64]) -> Multiplier {
        assert_eq!(values.len(), self.vars.len());
        let mut out = Multiplier::zeros(self.class, self.horizon, self.width);
        for (v, &x) in self.vars.iter().zip(values) {
            let block = match &mut out {
                Multiplier::Slope(q) => q.q_mut(v.index),
                Multiplier::Relu(q) => match v.family {
                    Family::Q1 => q.q1_mut(v.index as usize),
                    Family::Q2 => q.q2_mut(v.index as usize),
                    _ => q.q3_mut(v.index),
                },
            };
            block[(v.row, v.col)] = x;
            if v.mirrored() {
                block[(v.col, v.row)] = x;
            }
        }
        out
    }

    pub fn extract(&self, q: &Multiplier) -> Vec<f64> {
        assert_eq!(q.class(), self.class);
        self.vars
            .iter()
            .map(|v| {
                let block = match q {
                    Multiplier::Slope(q) => q.q(v.index),
                    Multiplier::Relu(q) => match v.family {
                        Family::Q1 => q.q1(v.index as usize),
                        Family::Q2 => q.q2(v.index as usize),
                        _ => q.q3(v.index),
                    },
                };
                block[(v.row, v.col)]
            })
            .collect()
    }

    /// Middle matrix of the unit multiplier for variable `k`.
    pub fn basis_matrix(&self, k: usize) -> DMatrix<f64> {
        let mut e = vec![0.0; self.vars.len()];
        e[k] = 1.0;
        self.build(&e).middle_matrix()
    }
}
