mod common;

use approx::assert_relative_eq;
use iqc_core::analysis::{
    certify, embed_certificate, monotonicity_check, AnalysisRequest, NonlinearityClass, Verdict,
};
use iqc_core::filter::build_psi;
use iqc_core::lmi::{augment, augment_static};
use iqc_core::multiplier::MultiplierClass;
use iqc_core::sdp::{solve_gain, SolverOptions};
use nalgebra::DMatrix;

fn sweep(class: NonlinearityClass) -> iqc_core::AnalysisReport {
    certify(&AnalysisRequest::new(common::example_plant(), class, vec![0, 1, 2, 3])).unwrap()
}

#[test]
fn realization_matches_expected_blocks() {
    let g = common::example_plant();
    assert_eq!(g.a(), &DMatrix::from_diagonal(&nalgebra::dvector![0.98, 0.92, 0.97, 0.91]));
    assert_eq!(
        g.b_block(0),
        DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0])
    );
    assert_eq!(
        g.c_block(0),
        DMatrix::from_row_slice(2, 4, &[-0.13, 0.21, 0.0, 0.0, 0.0, 0.0, -0.3, -0.1])
    );
    assert_eq!(g.d_block(0, 1), DMatrix::identity(2, 2));
    assert_eq!(g.c_block(1), DMatrix::zeros(1, 4));
    assert_eq!(g.d_block(1, 0), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    assert_eq!(g.d_block(1, 1), DMatrix::zeros(1, 2));
    assert_eq!(g.d_block(0, 0), DMatrix::zeros(2, 2));
    assert_relative_eq!(g.spectral_radius(), 0.98, epsilon = 1e-12);
}

#[test]
fn augmented_dimension_at_horizon_three() {
    let aug = augment(&common::example_plant(), &build_psi(3, 2)).unwrap();
    assert_eq!(aug.n_states(), 16);
    assert_eq!(aug.lmi_size(), 16 + 2 + 2);
}

#[test]
fn relu_sweep_is_certified_and_monotone() {
    let rep = sweep(NonlinearityClass::Relu);
    let g: Vec<f64> = rep.gammas().into_iter().map(Option::unwrap).collect();
    for (got, want) in g.iter().zip([4.017, 1.554, 1.300]) {
        assert_relative_eq!(*got, want, max_relative = 2e-3);
    }
    assert!(rep.verdicts().iter().all(|v| matches!(v, Verdict::Stable { .. })));
    assert!(monotonicity_check(&rep));
}

#[test]
fn slope_sweep_matches_reference_row() {
    let rep = sweep(NonlinearityClass::SlopeRestricted);
    let g: Vec<f64> = rep.gammas().into_iter().map(Option::unwrap).collect();
    for (got, want) in g.iter().zip([14.22, 1.787, 1.698, 1.698]) {
        assert_relative_eq!(*got, want, max_relative = 2e-3);
    }
    assert!(monotonicity_check(&rep));
}

#[test]
fn every_certificate_embeds_one_horizon_up() {
    let g = common::example_plant();
    for class in [NonlinearityClass::Relu, NonlinearityClass::SlopeRestricted] {
        for r in &sweep(class).results {
            let c = r.certificate().unwrap();
            let lifted = embed_certificate(&g, c).unwrap();
            assert_eq!(lifted.horizon, c.horizon + 1);
            assert!(lifted.diagnostics.lambda_max_l <= 1e-6);
        }
    }
}

#[test]
fn static_route_agrees_at_horizon_zero() {
    let g = common::example_plant();
    let opts = SolverOptions::default();
    for class in [MultiplierClass::Relu, MultiplierClass::Slope] {
        let dynamic = solve_gain(&augment(&g, &build_psi(0, 2)).unwrap(), class, &opts, None).unwrap();
        let stat = solve_gain(&augment_static(&g).unwrap(), class, &opts, None).unwrap();
        assert_relative_eq!(dynamic.gamma.unwrap(), stat.gamma.unwrap(), max_relative = 1e-6);
    }
}

#[test]
fn relu_bound_never_exceeds_slope_bound() {
    let r = sweep(NonlinearityClass::Relu).gammas();
    let s = sweep(NonlinearityClass::SlopeRestricted).gammas();
    for (a, b) in r.iter().zip(&s) {
        assert!(a.unwrap() <= b.unwrap() * (1.0 + 1e-3));
    }
}

#[test]
fn warm_started_sweep_is_no_worse() {
    let g = common::example_plant();
    let mut req = AnalysisRequest::new(g, NonlinearityClass::Relu, vec![0, 1, 2]);
    let cold = certify(&req).unwrap().gammas();
    req.warm_start = true;
    let warm = certify(&req).unwrap().gammas();
    for (c, w) in cold.iter().zip(&warm) {
        assert!(w.unwrap() <= c.unwrap() * (1.0 + 1e-6));
    }
}
