#![allow(dead_code)]

use iqc_core::lti::{realize_first_order_bank, ScalarTf};
use iqc_core::{Channel, ReluMultiplier, SlopeMultiplier, StateSpace};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The two-channel RNN-like example plant: `m = 2`, `n_d = 2`, `n_e = 1`.
pub fn example_plant() -> StateSpace {
    let grid = [
        ["-0.13/(z-0.98)", "0.21/(z-0.92)", "1", "0"],
        ["-0.3/(z-0.97)", "-0.1/(z-0.91)", "0", "1"],
        ["1", "0", "0", "0"],
    ];
    let grid: Vec<Vec<ScalarTf>> = grid
        .iter()
        .map(|row| row.iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    realize_first_order_bank(
        &grid,
        vec![Channel::new("w", 2), Channel::new("d", 2)],
        vec![Channel::new("v", 2), Channel::new("e", 1)],
    )
    .unwrap()
}

/// The nonlinearity disconnected (`B1 = 0`, `D21 = 0`): `d` drives the
/// example's dynamics and `e` reads the first row of its output.
pub fn open_loop_plant() -> StateSpace {
    let g = example_plant();
    let n = g.n_states();
    StateSpace::lurye(
        g.a().clone(),
        DMatrix::zeros(n, 2),
        g.b_block(0),
        g.c_block(0),
        g.c_block(0).rows(0, 1).into_owned(),
        g.d_block(0, 0),
        g.d_block(0, 1),
        DMatrix::zeros(1, 2),
        DMatrix::zeros(1, 2),
    )
    .unwrap()
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * gauss(rng))
}

/// Random plant with `D11 = 0` and spectral radius of `A` at most `rho_max`.
pub fn random_stable_plant(
    rng: &mut ChaCha8Rng,
    n_x: usize,
    m: usize,
    n_d: usize,
    n_e: usize,
    rho_max: f64,
) -> StateSpace {
    let mut a = random_matrix(rng, n_x, n_x, 1.0);
    if n_x > 0 {
        let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let target = rng.random_range(0.2..rho_max);
        if rho > 0.0 {
            a *= target / rho;
        }
    }
    StateSpace::lurye(
        a,
        random_matrix(rng, n_x, m, 0.5),
        random_matrix(rng, n_x, n_d, 1.0),
        random_matrix(rng, m, n_x, 0.5),
        random_matrix(rng, n_e, n_x, 1.0),
        DMatrix::zeros(m, m),
        random_matrix(rng, m, n_d, 0.5),
        random_matrix(rng, n_e, m, 0.5),
        random_matrix(rng, n_e, n_d, 0.3),
    )
    .unwrap()
}

fn sparse_abs(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.3) {
        0.0
    } else {
        gauss(rng).abs()
    }
}

/// Random member of the slope class: nonpositive lags and off-diagonals,
/// with the diagonal of `Q_0` raised until every row and column sum of the
/// stacked family is nonnegative.
pub fn random_slope_multiplier(rng: &mut ChaCha8Rng, horizon: usize, m: usize) -> SlopeMultiplier {
    let mut q = SlopeMultiplier::zeros(horizon, m);
    let n = horizon as isize;
    for i in -n..=n {
        let b = q.q_mut(i);
        for r in 0..m {
            for c in 0..m {
                if i != 0 || r != c {
                    b[(r, c)] = -sparse_abs(rng);
                }
            }
        }
    }
    for j in 0..m {
        // Occasionally sit on the boundary (up to rounding).
        let extra = if rng.random_bool(0.2) { 0.0 } else { sparse_abs(rng) };
        let need = (-q.m_row().row(j).sum()).max(-q.m_col().column(j).sum());
        q.q_mut(0)[(j, j)] += need + extra;
    }
    iqc_core::Multiplier::Slope(q).projected().as_slope().unwrap().clone()
}

/// Random member of the ReLU class.
pub fn random_relu_multiplier(rng: &mut ChaCha8Rng, horizon: usize, m: usize) -> ReluMultiplier {
    let mut q = ReluMultiplier::zeros(horizon, m);
    for i in 0..=horizon {
        for fam in 0..2 {
            let mut b = DMatrix::from_fn(m, m, |_, _| 0.0);
            for r in 0..m {
                for c in 0..m {
                    b[(r, c)] = sparse_abs(rng);
                }
            }
            if i == 0 {
                b = (&b + b.transpose()) * 0.5;
            }
            if fam == 0 {
                *q.q1_mut(i) = b;
            } else {
                *q.q2_mut(i) = b;
            }
        }
    }
    let n = horizon as isize;
    for i in -n..=n {
        let b = q.q3_mut(i);
        for r in 0..m {
            for c in 0..m {
                b[(r, c)] = if i == 0 && r == c {
                    3.0 * gauss(rng)
                } else {
                    sparse_abs(rng)
                };
            }
        }
    }
    q
}
