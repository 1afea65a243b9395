//! The FIR stacking filter `Ψ_N`.
//!
//! Driven by `(v, w)` from rest, `Ψ_N` outputs
//!
//! ```text
//! r(k) = [v(k); v(k−1); …; v(k−N); w(k); w(k−1); …; w(k−N)]
//! ```
//!
//! The multiplier assembly depends on this ordering. States hold the delayed
//! `v` blocks first (`v(k−1) … v(k−N)`, `mN` states) and then the delayed `w`
//! blocks, so the state dimension is `2mN`.

use nalgebra::DMatrix;

use crate::lti::{Channel, LtiError, StateSpace, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRealization {
    horizon: usize,
    width: usize,
    psi: StateSpace,
}

impl FilterRealization {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn psi(&self) -> &StateSpace {
        &self.psi
    }

    /// `2m(N+1)`.
    pub fn output_dim(&self) -> usize {
        2 * self.width * (self.horizon + 1)
    }

    /// `B_ψ1`: state input from `v`.
    pub fn b_v(&self) -> DMatrix<f64> {
        self.psi.b_block(0)
    }

    /// `B_ψ2`: state input from `w`.
    pub fn b_w(&self) -> DMatrix<f64> {
        self.psi.b_block(1)
    }

    /// `D_ψ1`: feedthrough from `v`.
    pub fn d_v(&self) -> DMatrix<f64> {
        self.psi.d_block(0, 0)
    }

    /// `D_ψ2`: feedthrough from `w`.
    pub fn d_w(&self) -> DMatrix<f64> {
        self.psi.d_block(0, 1)
    }
}

/// Builds `Ψ_N` for a channel width `m ≥ 1`.
pub fn build_psi(horizon: usize, width: usize) -> FilterRealization {
    assert!(width >= 1, "filter width must be positive");
    let (n, m) = (horizon, width);
    let half = m * n;
    let n_states = 2 * half;
    let n_out = 2 * m * (n + 1);
    let eye = DMatrix::<f64>::identity(m, m);

    let mut a = DMatrix::zeros(n_states, n_states);
    let mut b = DMatrix::zeros(n_states, 2 * m);
    let mut c = DMatrix::zeros(n_out, n_states);
    let mut d = DMatrix::zeros(n_out, 2 * m);

    for base in [0, half] {
        for i in 1..n {
            a.view_mut((base + i * m, base + (i - 1) * m), (m, m))
                .copy_from(&eye);
        }
    }
    if n > 0 {
        b.view_mut((0, 0), (m, m)).copy_from(&eye);
        b.view_mut((half, m), (m, m)).copy_from(&eye);
    }
    // r blocks 1..=N read v(k−i) and blocks N+2..=2N+1 read w(k−i).
    let w_out = m * (n + 1);
    for i in 0..n {
        c.view_mut((m * (i + 1), m * i), (m, m)).copy_from(&eye);
        c.view_mut((w_out + m * (i + 1), half + m * i), (m, m))
            .copy_from(&eye);
    }
    d.view_mut((0, 0), (m, m)).copy_from(&eye);
    d.view_mut((w_out, m), (m, m)).copy_from(&eye);

    let psi = StateSpace::new(
        a,
        b,
        c,
        d,
        vec![Channel::new("v", m), Channel::new("w", m)],
        vec![Channel::new("r", n_out)],
    )
    .expect("filter blocks are consistent by construction");
    FilterRealization {
        horizon,
        width,
        psi,
    }
}

/// Builds the `r` channel directly by shifting `v` and `w` with zero
/// padding for negative times.
pub fn stacked_output(vw: &Trajectory, horizon: usize) -> Result<Trajectory, LtiError> {
    let v = vw.require("v")?;
    let w = vw.require("w")?;
    let m = v.nrows();
    if w.nrows() != m {
        return Err(LtiError::Dimension {
            what: "width of `w`".into(),
            expected: m,
            found: w.nrows(),
        });
    }
    let samples = vw.samples();
    let mut r = DMatrix::zeros(2 * m * (horizon + 1), samples);
    let w_out = m * (horizon + 1);
    for k in 0..samples {
        for lag in 0..=horizon.min(k) {
            r.view_mut((m * lag, k), (m, 1))
                .copy_from(&v.column(k - lag));
            r.view_mut((w_out + m * lag, k), (m, 1))
                .copy_from(&w.column(k - lag));
        }
    }
    Trajectory::new(vw.horizon()).with("r", r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::simulate;
    use nalgebra::DVector;

    #[test]
    fn static_filter_is_identity() {
        let f = build_psi(0, 2);
        assert_eq!(f.psi().n_states(), 0);
        assert_eq!(f.psi().d(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn dimensions_follow_horizon() {
        let f = build_psi(2, 2);
        assert_eq!(f.psi().n_states(), 8);
        assert_eq!(f.psi().n_outputs(), 12);
        assert_eq!(f.output_dim(), 12);
    }

    #[test]
    fn two_step_stack_by_hand() {
        let f = build_psi(1, 1);
        let input = Trajectory::new(1)
            .with("v", DMatrix::from_row_slice(1, 2, &[1.0, 2.0]))
            .unwrap()
            .with("w", DMatrix::from_row_slice(1, 2, &[3.0, 4.0]))
            .unwrap();
        let out = simulate(f.psi(), &input, &DVector::zeros(2)).unwrap();
        let r = out.channel("r").unwrap();
        assert_eq!(r.column(0).as_slice(), &[1.0, 0.0, 3.0, 0.0]);
        assert_eq!(r.column(1).as_slice(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(stacked_output(&input, 1).unwrap().channel("r"), Some(r));
    }

    #[test]
    fn shift_matrix_is_nilpotent() {
        for n in 0..5 {
            let f = build_psi(n, 2);
            let a = f.psi().a();
            let power = (0..n).fold(DMatrix::identity(a.nrows(), a.nrows()), |acc, _| acc * a);
            assert_eq!(power.norm(), 0.0, "A_psi^N != 0 for N = {n}");
        }
    }

    #[test]
    fn zero_signals_stack_to_zero() {
        let vw = Trajectory::new(5)
            .with("v", DMatrix::zeros(3, 6))
            .unwrap()
            .with("w", DMatrix::zeros(3, 6))
            .unwrap();
        let r = stacked_output(&vw, 2).unwrap();
        assert_eq!(r.channel("r").unwrap().norm(), 0.0);
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let vw = Trajectory::new(1)
            .with("v", DMatrix::zeros(2, 2))
            .unwrap()
            .with("w", DMatrix::zeros(1, 2))
            .unwrap();
        assert!(stacked_output(&vw, 1).is_err());
    }
}
