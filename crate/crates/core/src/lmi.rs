//! The augmented plant `Ĝ` and the dissipation matrix function
//!
//! ```text
//! L(P, M, γ²) = [Â B̂1 B̂2]ᵀ P [Â B̂1 B̂2] − diag(P, 0, γ² I)
//!             + [Ĉ2 D̂21 D̂22]ᵀ [Ĉ2 D̂21 D̂22] + [Ĉ1 D̂11 D̂12]ᵀ M [Ĉ1 D̂11 D̂12]
//! ```
//!
//! `L` is affine in `(P, M, γ²)`. [`assemble_l`] precomputes one symmetric
//! coefficient matrix per scalar decision variable; [`dense_l`] evaluates the
//! formula directly and is what certificates are re-checked against.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::filter::FilterRealization;
use crate::linalg::{block_diag, hstack, vstack};
use crate::lti::{Channel, LtiError, StateSpace};
use crate::multiplier::{Multiplier, MultiplierClass, MultiplierLayout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("plant must have inputs (w, d) and outputs (v, e); found {inputs} input and {outputs} output channels")]
    Partition { inputs: usize, outputs: usize },
    #[error("nonlinearity channel width mismatch: v has {v}, w has {w}, filter expects {filter}")]
    Width { v: usize, w: usize, filter: usize },
    #[error("decision vector has length {found}, expected {expected}")]
    VectorLength { expected: usize, found: usize },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// `Ĝ`: the plant in series with `Ψ_N`, with inputs `(w, d)`, outputs
/// `(r, e)` and state `x̂ = [x; ψ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPlant {
    ghat: StateSpace,
    plant: StateSpace,
    filter: FilterRealization,
}

struct PlantBlocks {
    a: DMatrix<f64>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    c1: DMatrix<f64>,
    c2: DMatrix<f64>,
    d11: DMatrix<f64>,
    d12: DMatrix<f64>,
    d21: DMatrix<f64>,
    d22: DMatrix<f64>,
}

fn split(plant: &StateSpace) -> Result<PlantBlocks, LmiError> {
    if plant.inputs().len() != 2 || plant.outputs().len() != 2 {
        return Err(LmiError::Partition {
            inputs: plant.inputs().len(),
            outputs: plant.outputs().len(),
        });
    }
    Ok(PlantBlocks {
        a: plant.a().clone(),
        b1: plant.b_block(0),
        b2: plant.b_block(1),
        c1: plant.c_block(0),
        c2: plant.c_block(1),
        d11: plant.d_block(0, 0),
        d12: plant.d_block(0, 1),
        d21: plant.d_block(1, 0),
        d22: plant.d_block(1, 1),
    })
}

fn loop_width(plant: &StateSpace) -> Result<usize, LmiError> {
    let v = plant.outputs()[0].width;
    let w = plant.inputs()[0].width;
    if v != w {
        return Err(LmiError::Width { v, w, filter: w });
    }
    Ok(w)
}

/// Composes the plant with `Ψ_N` using the closed-form block formulas.
pub fn augment(plant: &StateSpace, filt: &FilterRealization) -> Result<AugmentedPlant, LmiError> {
    let g = split(plant)?;
    let (v, w) = (plant.outputs()[0].width, plant.inputs()[0].width);
    if v != filt.width() || w != filt.width() {
        return Err(LmiError::Width {
            v,
            w,
            filter: filt.width(),
        });
    }
    let psi = filt.psi();
    let (a_psi, c_psi) = (psi.a(), psi.c());
    let (b_psi1, b_psi2) = (filt.b_v(), filt.b_w());
    let (d_psi1, d_psi2) = (filt.d_v(), filt.d_w());
    let n_x = g.a.nrows();
    let n_psi = a_psi.nrows();

    let a_hat = vstack(&[
        &hstack(&[&g.a, &DMatrix::zeros(n_x, n_psi)]),
        &hstack(&[&(&b_psi1 * &g.c1), a_psi]),
    ]);
    let b1_hat = vstack(&[&g.b1, &(&b_psi1 * &g.d11 + &b_psi2)]);
    let b2_hat = vstack(&[&g.b2, &(&b_psi1 * &g.d12)]);
    let c1_hat = hstack(&[&(&d_psi1 * &g.c1), c_psi]);
    let c2_hat = hstack(&[&g.c2, &DMatrix::zeros(g.c2.nrows(), n_psi)]);
    let d11_hat = &d_psi1 * &g.d11 + &d_psi2;
    let d12_hat = &d_psi1 * &g.d12;

    let ghat = StateSpace::new(
        a_hat,
        hstack(&[&b1_hat, &b2_hat]),
        vstack(&[&c1_hat, &c2_hat]),
        vstack(&[
            &hstack(&[&d11_hat, &d12_hat]),
            &hstack(&[&g.d21, &g.d22]),
        ]),
        plant.inputs().to_vec(),
        vec![
            Channel::new("r", filt.output_dim()),
            plant.outputs()[1].clone(),
        ],
    )?;
    Ok(AugmentedPlant {
        ghat,
        plant: plant.clone(),
        filter: filt.clone(),
    })
}

/// `Ĝ` for `Ψ = I`, written out directly: `r = [v; w]`, no filter states.
pub fn augment_static(plant: &StateSpace) -> Result<AugmentedPlant, LmiError> {
    let g = split(plant)?;
    let m = loop_width(plant)?;
    let n_d = g.b2.ncols();
    let c1_hat = vstack(&[&g.c1, &DMatrix::zeros(m, g.a.nrows())]);
    let d11_hat = vstack(&[&g.d11, &DMatrix::identity(m, m)]);
    let d12_hat = vstack(&[&g.d12, &DMatrix::zeros(m, n_d)]);
    let ghat = StateSpace::new(
        g.a.clone(),
        hstack(&[&g.b1, &g.b2]),
        vstack(&[&c1_hat, &g.c2]),
        vstack(&[
            &hstack(&[&d11_hat, &d12_hat]),
            &hstack(&[&g.d21, &g.d22]),
        ]),
        plant.inputs().to_vec(),
        vec![Channel::new("r", 2 * m), plant.outputs()[1].clone()],
    )?;
    Ok(AugmentedPlant {
        ghat,
        plant: plant.clone(),
        filter: crate::filter::build_psi(0, m),
    })
}

impl AugmentedPlant {
    pub fn ghat(&self) -> &StateSpace {
        &self.ghat
    }

    pub fn plant(&self) -> &StateSpace {
        &self.plant
    }

    pub fn filter(&self) -> &FilterRealization {
        &self.filter
    }

    pub fn horizon(&self) -> usize {
        self.filter.horizon()
    }

    /// Nonlinearity channel width `m`.
    pub fn width(&self) -> usize {
        self.filter.width()
    }

    pub fn n_states(&self) -> usize {
        self.ghat.n_states()
    }

    pub fn n_d(&self) -> usize {
        self.ghat.inputs()[1].width
    }

    pub fn n_e(&self) -> usize {
        self.ghat.outputs()[1].width
    }

    /// `n_x̂ + m + n_d`.
    pub fn lmi_size(&self) -> usize {
        self.n_states() + self.width() + self.n_d()
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        self.ghat.a()
    }

    pub fn b1_hat(&self) -> DMatrix<f64> {
        self.ghat.b_block(0)
    }

    pub fn b2_hat(&self) -> DMatrix<f64> {
        self.ghat.b_block(1)
    }

    pub fn c1_hat(&self) -> DMatrix<f64> {
        self.ghat.c_block(0)
    }

    pub fn c2_hat(&self) -> DMatrix<f64> {
        self.ghat.c_block(1)
    }

    pub fn d11_hat(&self) -> DMatrix<f64> {
        self.ghat.d_block(0, 0)
    }

    pub fn d12_hat(&self) -> DMatrix<f64> {
        self.ghat.d_block(0, 1)
    }

    pub fn d21_hat(&self) -> DMatrix<f64> {
        self.ghat.d_block(1, 0)
    }

    pub fn d22_hat(&self) -> DMatrix<f64> {
        self.ghat.d_block(1, 1)
    }

    /// `[Â B̂1 B̂2]`.
    pub fn state_row(&self) -> DMatrix<f64> {
        hstack(&[self.ghat.a(), self.ghat.b()])
    }

    /// `[Ĉ1 D̂11 D̂12]`.
    pub fn r_row(&self) -> DMatrix<f64> {
        hstack(&[&self.c1_hat(), &self.d11_hat(), &self.d12_hat()])
    }

    /// `[Ĉ2 D̂21 D̂22]`.
    pub fn e_row(&self) -> DMatrix<f64> {
        hstack(&[&self.c2_hat(), &self.d21_hat(), &self.d22_hat()])
    }
}

/// Dense evaluation of `L(P, M, t)` straight from the formula.
pub fn dense_l(aug: &AugmentedPlant, p: &DMatrix<f64>, m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let x = aug.state_row();
    let y = aug.e_row();
    let z = aug.r_row();
    let lower = block_diag(&[
        p,
        &DMatrix::zeros(aug.width(), aug.width()),
        &(DMatrix::identity(aug.n_d(), aug.n_d()) * t),
    ]);
    x.transpose() * p * &x - lower + y.transpose() * &y + z.transpose() * m * &z
}

/// `L` as `L₀ + Σ_k x_k L_k` over the decision vector
/// `x = [svec-free entries of P (upper triangle, column-major); multiplier
/// entries in layout order; t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiAssembly {
    size: usize,
    n_states: usize,
    layout: MultiplierLayout,
    constant: DMatrix<f64>,
    coefficients: Vec<DMatrix<f64>>,
}

/// Upper-triangular index pairs of an `n × n` symmetric matrix, column by
/// column.
fn triangle(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(|j| (0..=j).map(move |i| (i, j)))
}

pub fn assemble_l(aug: &AugmentedPlant, class: MultiplierClass) -> LmiAssembly {
    let n = aug.n_states();
    let size = aug.lmi_size();
    let x = aug.state_row();
    let y = aug.e_row();
    let z = aug.r_row();
    let layout = MultiplierLayout::new(class, aug.horizon(), aug.width());
    let mut coefficients = Vec::with_capacity(n * (n + 1) / 2 + layout.len() + 1);

    for (i, j) in triangle(n) {
        // Rows i and j of X give the congruence of the symmetric unit E_ij.
        let xi = x.row(i);
        let xj = x.row(j);
        let mut c = if i == j {
            xi.transpose() * xi
        } else {
            xi.transpose() * xj + xj.transpose() * xi
        };
        c[(i, j)] -= 1.0;
        if i != j {
            c[(j, i)] -= 1.0;
        }
        coefficients.push(c);
    }
    for k in 0..layout.len() {
        let mk = layout.basis_matrix(k);
        coefficients.push(z.transpose() * mk * &z);
    }
    let mut ct = DMatrix::zeros(size, size);
    for i in n + aug.width()..size {
        ct[(i, i)] = -1.0;
    }
    coefficients.push(ct);

    LmiAssembly {
        size,
        n_states: n,
        layout,
        constant: y.transpose() * &y,
        coefficients,
    }
}

impl LmiAssembly {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn layout(&self) -> &MultiplierLayout {
        &self.layout
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    pub fn n_vars(&self) -> usize {
        self.coefficients.len()
    }

    pub fn p_range(&self) -> std::ops::Range<usize> {
        0..self.n_states * (self.n_states + 1) / 2
    }

    pub fn q_range(&self) -> std::ops::Range<usize> {
        let start = self.p_range().end;
        start..start + self.layout.len()
    }

    pub fn t_index(&self) -> usize {
        self.n_vars() - 1
    }

    /// Human-readable variable names in decision-vector order.
    pub fn var_names(&self) -> Vec<String> {
        let mut out: Vec<String> = triangle(self.n_states)
            .map(|(i, j)| format!("P[{i},{j}]"))
            .collect();
        out.extend(
            self.layout
                .vars()
                .iter()
                .map(|v| format!("{}_{}[{},{}]", v.family, v.index, v.row, v.col)),
        );
        out.push("t".into());
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>, LmiError> {
        if x.len() != self.n_vars() {
            return Err(LmiError::VectorLength {
                expected: self.n_vars(),
                found: x.len(),
            });
        }
        let mut l = self.constant.clone();
        for (c, &xk) in self.coefficients.iter().zip(x) {
            if xk != 0.0 {
                l += c * xk;
            }
        }
        Ok(l)
    }

    pub fn pack(&self, p: &DMatrix<f64>, q: &Multiplier, t: f64) -> Vec<f64> {
        assert_eq!(p.nrows(), self.n_states);
        let mut x: Vec<f64> = triangle(self.n_states).map(|(i, j)| p[(i, j)]).collect();
        x.extend(self.layout.extract(q));
        x.push(t);
        x
    }

    pub fn unpack(&self, x: &[f64]) -> Result<(DMatrix<f64>, Multiplier, f64), LmiError> {
        if x.len() != self.n_vars() {
            return Err(LmiError::VectorLength {
                expected: self.n_vars(),
                found: x.len(),
            });
        }
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        for ((i, j), &v) in triangle(n).zip(x) {
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
        let q = self.layout.build(&x[self.q_range()]);
        Ok((p, q, x[self.t_index()]))
    }
}
