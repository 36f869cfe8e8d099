use super::builtins::*;
use super::*;
use crate::stream::replication_stream;
use std::sync::Arc;

fn unit_vol_diffusion(beta: RealFn, name: &str) -> DiffusionModel {
    DiffusionModel {
        name: name.into(),
        drift: beta,
        volatility: Arc::new(|_| 1.0),
        volatility_deriv: Arc::new(|_| 0.0),
        reference_point: 0.0,
        domain: (-50.0, 50.0),
        transform: None,
        jumps: None,
        phi_floor: -10.0,
        phi_lipschitz: Some(10.0),
    }
}

#[test]
fn unit_volatility_transform_is_identity_on_alpha_and_phi() {
    let m = unit_vol_diffusion(Arc::new(|v: f64| -v), "ou-raw");
    let t = lamperti_transform(&m).unwrap();
    for &x in &[-2.0, -0.5, 0.0, 0.3, 1.7] {
        assert!((t.alpha(x) - (-x)).abs() < 1e-9, "alpha at {x}");
        assert!((t.phi_value(x) - 0.5 * (x * x - 1.0)).abs() < 1e-7, "phi at {x}");
        // Endpoints map through the identity.
        assert!((t.to_transformed(x).unwrap() - x).abs() < 1e-9);
    }
}

#[test]
fn geometric_volatility_transforms_to_log_scale() {
    // sigma(v) = v on v > 0 with zero drift and v* = 1: eta = ln v,
    // alpha = -1/2, phi = 1/8.
    let m = DiffusionModel {
        name: "gbm0".into(),
        drift: Arc::new(|_| 0.0),
        volatility: Arc::new(|v| v),
        volatility_deriv: Arc::new(|_| 1.0),
        reference_point: 1.0,
        domain: (1e-9, 1e9),
        transform: None,
        jumps: None,
        phi_floor: 0.124,
        phi_lipschitz: Some(1.0),
    };
    let t = lamperti_transform(&m).unwrap();
    for &v in &[0.25, 0.5, 1.0, 2.0, 5.0] {
        let x = t.to_transformed(v).unwrap();
        assert!((x - v.ln()).abs() < 1e-8, "eta({v}) = {x}");
        assert!((t.to_original(x).unwrap() - v).abs() < 1e-7);
    }
    for &x in &[-1.0, 0.0, 0.8] {
        assert!((t.alpha(x) + 0.5).abs() < 1e-8);
        assert!((t.phi_value(x) - 0.125).abs() < 1e-5);
    }
}

#[test]
fn non_positive_volatility_is_an_invalid_model() {
    let m = DiffusionModel {
        name: "bad".into(),
        drift: Arc::new(|_| 0.0),
        volatility: Arc::new(|_| 0.0),
        volatility_deriv: Arc::new(|_| 0.0),
        reference_point: 0.0,
        domain: (-1.0, 1.0),
        transform: None,
        jumps: None,
        phi_floor: 0.0,
        phi_lipschitz: None,
    };
    assert!(matches!(lamperti_transform(&m), Err(Error::InvalidModel(_))));
}

#[test]
fn evaluate_phi_examples() {
    assert_eq!(evaluate_phi(&zero_drift(), 3.7).unwrap(), 0.0);
    let ou = ornstein_uhlenbeck(1.0).unwrap();
    assert!((evaluate_phi(&ou, 0.0).unwrap() + 0.5).abs() < 1e-15);
    let sine = sine_drift();
    assert!((evaluate_phi(&sine, 0.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn phi_consistency_and_derivative_check() {
    // phi agrees with (alpha^2 + alpha')/2 to 1e-12 relative tolerance and
    // alpha' agrees with a central finite difference of alpha.
    let models = [
        zero_drift(),
        ornstein_uhlenbeck(1.3).unwrap(),
        sine_drift(),
        logistic(0.7, 2.0, 0.5).unwrap(),
    ];
    for m in &models {
        let mut x = -3.0;
        while x <= 3.0 {
            let direct = 0.5 * m.alpha(x).powi(2) + 0.5 * m.alpha_deriv(x);
            let phi = m.phi_value(x);
            let scale = phi.abs().max(1.0);
            assert!(
                (phi - direct).abs() <= 1e-12 * scale,
                "{}: phi mismatch at {x}",
                m.name
            );
            let h = 1e-5;
            let fd = (m.alpha(x + h) - m.alpha(x - h)) / (2.0 * h);
            assert!(
                (fd - m.alpha_deriv(x)).abs() < 1e-6 * m.alpha_deriv(x).abs().max(1.0),
                "{}: alpha' mismatch at {x}",
                m.name
            );
            x += 0.1;
        }
    }
}

#[test]
fn phi_range_brackets_phi_on_random_bands() {
    let mut rng = replication_stream(51, 0);
    let models = [
        ornstein_uhlenbeck(0.8).unwrap(),
        sine_drift(),
        logistic(1.1, 1.5, 0.6).unwrap(),
    ];
    use rand::Rng;
    for m in &models {
        for _ in 0..200 {
            let a: f64 = -4.0 + 8.0 * rng.random::<f64>();
            let b: f64 = -4.0 + 8.0 * rng.random::<f64>();
            let (l, u) = (a.min(b), a.max(b) + 1e-6);
            let (pl, pu) = m.phi_range(l, u);
            assert!(pl >= m.phi_floor - 1e-12);
            for i in 0..1000 {
                let x = l + (u - l) * (i as f64 + 0.5) / 1000.0;
                let p = m.phi_value(x);
                assert!(
                    p >= pl - 1e-10 && p <= pu + 1e-10,
                    "{}: phi({x}) = {p} outside [{pl}, {pu}] from [{l}, {u}]",
                    m.name
                );
            }
        }
    }
}

#[test]
fn log_rnd_diffusion_examples() {
    // Zero drift: every term vanishes.
    let zero = zero_drift();
    let path = GridPath {
        x0: 0.0,
        x_end: 0.4,
        times: vec![0.0, 0.5, 1.0],
        values: vec![0.0, 0.2, 0.4],
        jumps: vec![],
    };
    assert_eq!(log_rnd_unconditioned(&zero, &path, 1.0).unwrap(), 0.0);

    // Mean-reverting drift on a constant path at 0 with X_T = 1:
    // A(1) - A(0) - phi(0) * T = -1/2 + 1/2 = 0.
    let ou = ornstein_uhlenbeck(1.0).unwrap();
    let const_path = GridPath {
        x0: 0.0,
        x_end: 1.0,
        times: vec![0.0, 1.0],
        values: vec![0.0, 0.0],
        jumps: vec![],
    };
    let v = log_rnd_unconditioned(&ou, &const_path, 1.0).unwrap();
    assert!(v.abs() < 1e-14, "got {v}");
}

#[test]
fn log_rnd_jump_ratio_of_one_contributes_nothing() {
    // lambda = Lambda, f_nu = f_delta and A = 0: the jump product is 1, and
    // the intensity integral cancels against the compensator, so the value
    // equals the diffusion-only formula (here zero drift: exactly 0).
    let m = zero_drift_with_jumps(0.5, 0.5, 1.0).unwrap();
    let path = GridPath {
        x0: 0.0,
        x_end: 0.7,
        times: vec![0.0, 0.3, 0.3, 1.0],
        values: vec![0.0, 0.1, 0.8, 0.7],
        jumps: vec![(0.3, 0.1, 0.8)],
    };
    let v = log_rnd_unconditioned(&m, &path, 1.0).unwrap();
    assert!(v.abs() < 1e-14, "got {v}");
}

#[test]
fn validate_model_phi_floor_pass_and_fail() {
    let grid: Vec<f64> = (0..2001).map(|i| -10.0 + 0.01 * i as f64).collect();
    let mut rng = replication_stream(51, 1);

    let sine = sine_drift();
    let report = validate_model(&sine, &grid, 1000, &mut rng).unwrap();
    assert!(report.all_pass(), "{report}");

    // The same drift with a wrong floor must fail with a witness near pi.
    let mut wrong = sine_drift();
    wrong.phi_floor = 0.0;
    let report = validate_model(&wrong, &grid, 1000, &mut rng).unwrap();
    let check = report
        .checks
        .iter()
        .find(|c| c.name == "phi-floor")
        .unwrap();
    assert_eq!(check.status, CheckStatus::Fail);
    let witness = check.witness.unwrap().0;
    assert!(wrong.phi_value(witness) < 0.0, "witness must violate the floor");
    let nearest = (witness / std::f64::consts::PI).round();
    assert_eq!(nearest as i64 % 2 != 0, true, "witness {witness} not near an odd pi multiple");
    assert!((witness - nearest * std::f64::consts::PI).abs() < 0.05);
    assert!((wrong.phi_value(witness) - -0.5).abs() < 0.01);
}

#[test]
fn validate_model_jump_rate_at_bound_passes() {
    let grid: Vec<f64> = (0..100).map(|i| -1.0 + 0.02 * i as f64).collect();
    let mut rng = replication_stream(51, 2);
    let m = zero_drift_with_jumps(0.5, 0.5, 1.0).unwrap();
    let report = validate_model(&m, &grid, 500, &mut rng).unwrap();
    assert!(report.all_pass(), "{report}");
}

#[test]
fn empty_grid_is_rejected() {
    let mut rng = replication_stream(51, 3);
    assert!(validate_model(&zero_drift(), &[], 10, &mut rng).is_err());
}

mod properties {
    use super::super::builtins::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// The analytic range oracles bracket phi on arbitrary bands.
        #[test]
        fn phi_range_brackets_phi(
            theta in 0.2f64..3.0,
            r in 0.2f64..2.0,
            s in 0.2f64..1.2,
            a in -5.0f64..5.0,
            width in 1e-3f64..6.0,
        ) {
            let models = [
                ornstein_uhlenbeck(theta).unwrap(),
                sine_drift(),
                logistic(r, 1.5, s).unwrap(),
            ];
            let (l, u) = (a, a + width);
            for m in &models {
                let (pl, pu) = m.phi_range(l, u);
                prop_assert!(pl >= m.phi_floor - 1e-12);
                for i in 0..400 {
                    let x = l + (u - l) * (i as f64 + 0.5) / 400.0;
                    let p = m.phi_value(x);
                    prop_assert!(
                        p >= pl - 1e-9 && p <= pu + 1e-9,
                        "{}: phi({x}) = {p} outside [{pl}, {pu}]",
                        m.name
                    );
                }
            }
        }
    }
}
