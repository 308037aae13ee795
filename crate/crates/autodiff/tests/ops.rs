use ltssl_autodiff::gradcheck::relative_error;
use ltssl_autodiff::{gradcheck, Error, GradCheckOptions, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random fixed weights so that no gradient vanishes by symmetry.
fn probe_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
}

fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let w = probe_weights(tape.value(v).len(), seed);
    let s = tape.scale(v, w)?;
    tape.sum(s)
}

const GRAD_TOL: f64 = 1e-6;

#[test]
fn conv_identity_kernel_reproduces_input() {
    let mut tape = Tape::new();
    let x = tape.constant(random(&[4, 4, 1], 1));
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let k = tape.leaf(Tensor::new(vec![3, 3, 1, 1], k).unwrap());
    let b = tape.leaf(Tensor::zeros(&[1]));
    let y = tape.conv2d(x, k, b).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());
}

#[test]
fn conv_all_ones_counts_overlaps() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[3, 3, 1], 1.0));
    let k = tape.leaf(Tensor::full(&[3, 3, 1, 1], 1.0));
    let b = tape.leaf(Tensor::zeros(&[1]));
    let y = tape.conv2d(x, k, b).unwrap();
    let out = tape.value(y).data();
    assert_eq!(out[4], 9.0);
    assert_eq!(out[0], 4.0);
    assert_eq!(out[1], 6.0);
}

#[test]
fn conv_channel_mismatch_is_shape_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[4, 4, 2]));
    let k = tape.leaf(Tensor::zeros(&[3, 3, 3, 1]));
    let b = tape.leaf(Tensor::zeros(&[1]));
    assert!(matches!(tape.conv2d(x, k, b), Err(Error::Shape { .. })));
}

#[test]
fn conv_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            t.sum(y)
        },
        &[random(&[5, 5, 2], 2), random(&[3, 3, 2, 3], 3), random(&[3], 4)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn conv_batched_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            weighted_sum(t, y, 9)
        },
        &[random(&[2, 4, 6, 3], 5), random(&[3, 3, 3, 2], 6), random(&[2], 7)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn maxpool_picks_window_maximum() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = tape.max_pool2(x).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);
    assert_eq!(tape.shape(y), &[1, 1, 1]);
}

#[test]
fn maxpool_tie_routes_gradient_to_first_element() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[4, 4, 1], 2.5));
    let y = tape.max_pool2(x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 2.5));
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    let g = tape.grad(x).unwrap();
    let mut expected = vec![0.0; 16];
    for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        expected[r * 4 + c] = 1.0;
    }
    assert_eq!(g, expected.as_slice());
}

#[test]
fn maxpool_odd_size_is_shape_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[3, 4, 1]));
    assert!(matches!(tape.max_pool2(x), Err(Error::Shape { .. })));
}

#[test]
fn maxpool_gradcheck() {
    // A random point has unique window maxima almost surely.
    let report = gradcheck(
        |t, v| {
            let y = t.max_pool2(v[0])?;
            weighted_sum(t, y, 11)
        },
        &[random(&[8, 8, 2], 10)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn batchnorm_train_standardizes_channels() {
    let mut tape = Tape::new();
    let raw = random(&[4, 3, 3, 2], 12);
    let shifted: Vec<f64> = raw.data().iter().enumerate().map(|(i, v)| 5.0 * v + (i % 2) as f64 * 10.0).collect();
    let x = tape.constant(Tensor::new(vec![4, 3, 3, 2], shifted).unwrap());
    let gamma = tape.leaf(Tensor::full(&[2], 1.0));
    let beta = tape.leaf(Tensor::zeros(&[2]));
    let (y, stats) = tape.batch_norm_train(x, gamma, beta).unwrap();
    let out = tape.value(y).data();
    for c in 0..2 {
        let vals: Vec<f64> = out.iter().skip(c).step_by(2).copied().collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-6, "mean {m}");
        assert!((var - 1.0).abs() < 1e-5, "var {var}");
    }
    assert!((stats.mean[1] - stats.mean[0] - 10.0).abs() < 5.0);
}

#[test]
fn batchnorm_affine_sets_mean_and_std() {
    let mut tape = Tape::new();
    // Standardized input: alternating ±1 per channel.
    let data: Vec<f64> = (0..16).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = tape.constant(Tensor::new(vec![8, 2], data).unwrap());
    let gamma = tape.leaf(Tensor::full(&[2], 2.0));
    let beta = tape.leaf(Tensor::full(&[2], 3.0));
    let (y, _) = tape.batch_norm_train(x, gamma, beta).unwrap();
    let out = tape.value(y).data();
    let m = out.iter().sum::<f64>() / 16.0;
    let sd = (out.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 16.0).sqrt();
    assert!((m - 3.0).abs() < 1e-9);
    assert!((sd - 2.0).abs() < 1e-4);
}

#[test]
fn batchnorm_train_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let (y, _) = t.batch_norm_train(v[0], v[1], v[2])?;
            weighted_sum(t, y, 13)
        },
        &[random(&[3, 2, 2, 3], 14), random(&[3], 15), random(&[3], 16)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn batchnorm_eval_gradcheck() {
    let stats = ltssl_autodiff::BatchStats {
        mean: vec![0.1, -0.2],
        var: vec![0.5, 2.0],
    };
    let report = gradcheck(
        |t, v| {
            let y = t.batch_norm_eval(v[0], v[1], v[2], &stats)?;
            weighted_sum(t, y, 17)
        },
        &[random(&[2, 3, 3, 2], 18), random(&[2], 19), random(&[2], 20)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn dense_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
    let w = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let zero = tape.leaf(Tensor::zeros(&[2]));
    let one = tape.leaf(Tensor::full(&[2], 1.0));
    let y0 = tape.dense(x, w, zero).unwrap();
    let y1 = tape.dense(x, w, one).unwrap();
    assert_eq!(tape.value(y0).data(), &[1.0, 2.0]);
    assert_eq!(tape.value(y1).data(), &[2.0, 3.0]);

    let bad = tape.leaf(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.dense(x, bad, zero), Err(Error::Shape { .. })));
}

#[test]
fn dense_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            weighted_sum(t, y, 21)
        },
        &[random(&[3, 4], 22), random(&[4, 5], 23), random(&[5], 24)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn activation_and_loss_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);

    let z = tape.leaf(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
    let s = tape.softmax(z).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

    let p = tape.leaf(Tensor::scalar(5.0));
    let l = tape.l2_loss(p, &[3.0]).unwrap();
    assert_eq!(tape.value(l).item(), 4.0);

    let img = tape.leaf(Tensor::from_vec(vec![0.0, 1.0, 0.5, 0.5]));
    let m = tape.mse(img, &[0.0, 0.0, 0.0, 0.5]).unwrap();
    assert!((tape.value(m).item() - 1.25 / 4.0).abs() < 1e-15);
}

#[test]
fn cross_entropy_clamps_zero_probability() {
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
    let l = tape.cross_entropy(p, &[1]).unwrap();
    assert!((tape.value(l).item() + 1e-12f64.ln()).abs() < 1e-9);
    tape.backward(l).unwrap();
    assert!(tape.grad(p).unwrap().iter().all(|g| g.is_finite()));
}

#[test]
fn cross_entropy_rejects_non_distribution() {
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::new(vec![1, 2], vec![0.7, 0.7]).unwrap());
    assert!(tape.cross_entropy(p, &[0]).is_err());
}

#[test]
fn softmax_cross_entropy_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let p = t.softmax(v[0])?;
            t.cross_entropy(p, &[1, 0, 1])
        },
        &[random(&[3, 2], 25)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn shape_ops_gradcheck() {
    let report = gradcheck(
        |t, v| {
            let c = t.concat(v[0], v[1], 1)?;
            let r = t.relu(c)?;
            let top = t.slice_rows(r, 1, 2)?;
            let flat = t.reshape(top, &[2 * 5])?;
            let l = t.l2_loss(flat, &[0.3; 10])?;
            let up = t.upsample2(v[2])?;
            let m = t.mul(up, up)?;
            let s = weighted_sum(t, m, 3)?;
            let both = t.concat(l, s, 0)?;
            t.sum(both)
        },
        &[random(&[3, 2], 26), random(&[3, 3], 27), random(&[1, 2, 2, 2], 28)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn concat_backward_splits_upstream_exactly() {
    let mut tape = Tape::new();
    let a = tape.leaf(random(&[2, 3], 29));
    let b = tape.leaf(random(&[2, 4], 30));
    let c = tape.concat(a, b, 1).unwrap();
    let w: Vec<f64> = (0..14).map(f64::from).collect();
    let s = tape.scale(c, w.clone()).unwrap();
    let s = tape.sum(s).unwrap();
    tape.backward(s).unwrap();
    let (ga, gb) = (tape.grad(a).unwrap(), tape.grad(b).unwrap());
    assert_eq!(ga.len() + gb.len(), w.len());
    assert_eq!(ga, &[0.0, 1.0, 2.0, 7.0, 8.0, 9.0]);
    assert_eq!(gb, &[3.0, 4.0, 5.0, 6.0, 10.0, 11.0, 12.0, 13.0]);
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut tape = Tape::new();
        let x = tape.constant(random(&[2, 6, 6, 2], 31));
        let k = tape.leaf(random(&[3, 3, 2, 4], 32));
        let b = tape.leaf(random(&[4], 33));
        let y = tape.conv2d(x, k, b).unwrap();
        let y = tape.max_pool2(y).unwrap();
        tape.value(y).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_forward_is_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![f64::NAN, 1.0]));
    assert!(matches!(tape.relu(x), Err(Error::NonFinite { .. })));
}

#[test]
fn gradcheck_of_sum_of_squares_is_exact() {
    let report = gradcheck(
        |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.sum(sq)
        },
        &[random(&[6], 34)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= GRAD_TOL, "{report:?}");
}

#[test]
fn gradcheck_detects_corrupted_backward_rule() {
    let report = gradcheck(
        |t, v| {
            let x = t.value(v[0]).clone();
            let out = Tensor::new(x.shape().to_vec(), x.data().iter().map(|a| a * a).collect())?;
            // Correct rule would be 2x.
            let sq = t.custom(&[v[0]], out, |inputs, g| {
                vec![inputs[0].data().iter().zip(g).map(|(x, gi)| 3.0 * x * gi).collect()]
            })?;
            t.sum(sq)
        },
        &[random(&[6], 35)],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}

#[test]
fn relative_error_uses_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert_eq!(relative_error(2.0, 1.0), 0.5);
}

#[test]
fn gradcheck_reprobes_across_relu_kink() {
    // The kink at 0 lies inside the default step around x = 4e-7.
    let x = Tensor::new(vec![1], vec![4e-7]).unwrap();
    let report = gradcheck(
        |t, v| {
            let y = t.relu(v[0])?;
            t.sum(y)
        },
        &[x],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.kink_retries >= 1, "{report:?}");
    assert!(report.max_rel_error < 1e-9, "{report:?}");
}
