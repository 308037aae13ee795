use ltssl_autodiff::{Adam, AdamConfig, Error};

#[test]
fn first_step_moves_by_learning_rate() {
    let mut adam = Adam::new(AdamConfig::with_lr(0.001));
    let mut p = [1.0];
    adam.step(&mut [&mut p], &[&[4.0]]).unwrap();
    // m_hat = 4, v_hat = 16 -> update = lr * 4 / (4 + eps)
    let expected = 1.0 - 0.001 * 4.0 / (4.0 + 1e-8);
    assert!((p[0] - expected).abs() < 1e-15);
    assert!((p[0] - 0.999).abs() < 1e-9);
    assert_eq!(adam.state().t, 1);
}

#[test]
fn zero_gradient_leaves_params_unchanged() {
    let mut adam = Adam::new(AdamConfig::with_lr(0.1));
    let mut p = [1.5, -2.0];
    for _ in 0..5 {
        adam.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
    }
    assert_eq!(p, [1.5, -2.0]);
    assert_eq!(adam.state().t, 5);
}

/// Scalar reference run of the Adam formulas, written independently.
fn reference_quadratic(steps: usize, lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut x, mut m, mut v) = (0.0f64, 0.0, 0.0);
    for t in 1..=steps {
        let g = 2.0 * (x - 3.0);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        x -= lr * (m / (1.0 - b1.powi(t as i32))) / ((v / (1.0 - b2.powi(t as i32))).sqrt() + eps);
    }
    x
}

#[test]
fn converges_on_quadratic() {
    let mut adam = Adam::new(AdamConfig::with_lr(0.1));
    let mut x = [0.0];
    for _ in 0..200 {
        let g = 2.0 * (x[0] - 3.0);
        adam.step(&mut [&mut x], &[&[g]]).unwrap();
    }
    assert!((x[0] - 3.0).abs() < 0.05, "x = {}", x[0]);
    assert_eq!(x[0], reference_quadratic(200, 0.1));
}

#[test]
fn nan_gradient_aborts_without_update() {
    let mut adam = Adam::new(AdamConfig::default());
    let mut p = [1.0, 2.0];
    let err = adam.step(&mut [&mut p], &[&[0.5, f64::NAN]]).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient { .. }));
    assert_eq!(p, [1.0, 2.0]);
    assert_eq!(adam.state().t, 0);
}

#[test]
fn moments_track_param_layout() {
    let mut adam = Adam::new(AdamConfig::default());
    let (mut a, mut b) = ([0.0; 3], [0.0; 2]);
    adam.step(&mut [&mut a, &mut b], &[&[1.0, -1.0, 2.0], &[0.5, 0.5]]).unwrap();
    let s = adam.state();
    assert_eq!(s.m.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2]);
    assert!(s.v.iter().flatten().all(|&v| v >= 0.0));
    let mut c = [0.0; 4];
    assert!(adam.step(&mut [&mut c], &[&[0.0; 4]]).is_err());
}
