use ltssl_autodiff::{gradcheck, GradCheckOptions, ParamId, ParamKind, Tape, Tensor, Var};
use ltssl_core::data::{generate_cohort, prepare_cohort, Image, PreprocessSpec, SynthConfig};
use ltssl_core::models::*;
use ltssl_core::training::{AutoencoderTrainer, ClassifierTrainer, SiameseTrainer};
use ltssl_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-5;

fn toy(variant: Variant) -> EncoderConfig {
    EncoderConfig {
        variant,
        block_channels: vec![4, 6, 8],
        layers_per_block: 3,
        embedding_dim: 12,
        input_size: 16,
    }
}

fn images(n: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Image::new(size, size, (0..size * size).map(|_| rng.random::<f32>()).collect()).unwrap())
        .collect()
}

fn refs(v: &[Image]) -> Vec<&Image> {
    v.iter().collect()
}

fn probe(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Moves every trainable parameter off its initial value (zero biases put
/// ReLU inputs exactly on the kink) and primes batch-norm running statistics
/// with one train-mode pass.
fn prime<M: Model>(model: &mut M, forward: impl Fn(&M, &mut Ctx<'_>) -> ltssl_core::Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for id in model.store().trainable_ids() {
        for v in model.store_mut().value_mut(id).data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let updates = {
        let mut ctx = Ctx::new(model.store(), Mode::Train).with_dropout_rng(ChaCha8Rng::seed_from_u64(0));
        forward(model, &mut ctx).unwrap();
        ctx.into_parts().1
    };
    apply_bn_updates(model.store_mut(), &updates);
}

/// Gradchecks a probe-weighted sum of the model output with respect to all
/// trainable parameters except `skip`.
fn check<M: Model>(
    model: &M,
    mode: Mode,
    skip: &[ParamId],
    forward: impl Fn(&M, &mut Ctx<'_>) -> ltssl_core::Result<Var>,
) -> f64 {
    let ids: Vec<ParamId> = model
        .store()
        .trainable_ids()
        .into_iter()
        .filter(|id| !skip.contains(id))
        .collect();
    let inputs: Vec<Tensor> = ids.iter().map(|&id| model.store().value(id).clone()).collect();
    let f = |tape: &mut Tape, vars: &[Var]| -> ltssl_autodiff::Result<Var> {
        let taken = std::mem::replace(tape, Tape::new());
        let mut ctx = Ctx::with_tape(taken, model.store(), mode).with_dropout_rng(ChaCha8Rng::seed_from_u64(9));
        for (&id, &v) in ids.iter().zip(vars) {
            ctx.bind(id, v);
        }
        let out = forward(model, &mut ctx).map_err(|e| match e {
            Error::Autodiff(a) => a,
            other => panic!("{other}"),
        })?;
        let weights = probe(ctx.tape.value(out).len(), 5);
        let weighted = ctx.tape.scale(out, weights)?;
        let loss = ctx.tape.sum(weighted)?;
        *tape = ctx.into_parts().0;
        Ok(loss)
    };
    let opts = GradCheckOptions {
        max_coords_per_input: Some(4),
        ..GradCheckOptions::default()
    };
    let report = gradcheck(f, &inputs, &opts).unwrap();
    assert!(report.coords_checked > 0);
    if let (Some(w), true) = (&report.worst, report.max_rel_error > GRAD_TOL) {
        eprintln!("worst coordinate in {}: {w:?}", model.store().get(ids[w.input]).name);
    }
    report.max_rel_error
}

fn siamese_forward<'a>(a: &'a [Image], b: &'a [Image]) -> impl Fn(&SiameseModel, &mut Ctx<'_>) -> ltssl_core::Result<Var> + 'a {
    move |m, ctx| m.forward(ctx, &refs(a), &refs(b))
}

#[test]
fn gradcheck_siamese_both_variants() {
    for variant in [Variant::Vgg, Variant::Dense] {
        let (a, b) = (images(2, 16, 1), images(2, 16, 2));
        let mut model = SiameseModel::new(&toy(variant), 3).unwrap();
        prime(&mut model, siamese_forward(&a, &b));
        let skip = model.encoder().conv_biases();
        let train = check(&model, Mode::Train, &skip, siamese_forward(&a, &b));
        let eval = check(&model, Mode::Eval, &[], siamese_forward(&a, &b));
        assert!(train <= GRAD_TOL, "{variant} train-mode error {train}");
        assert!(eval <= GRAD_TOL, "{variant} eval-mode error {eval}");
    }
}

#[test]
fn gradcheck_autoencoder_and_classifier() {
    let x = images(2, 16, 4);
    let ae_forward = |m: &AutoencoderModel, ctx: &mut Ctx<'_>| m.forward(ctx, &refs(&x));
    let mut ae = AutoencoderModel::new(&toy(Variant::Vgg), 5).unwrap();
    prime(&mut ae, ae_forward);
    let skip = ae.encoder().conv_biases();
    assert!(check(&ae, Mode::Train, &skip, ae_forward) <= GRAD_TOL);
    assert!(check(&ae, Mode::Eval, &[], ae_forward) <= GRAD_TOL);

    let head = ClassifierConfig { hidden: 5, dropout: 0.5 };
    let clf_forward = |m: &ClassifierModel, ctx: &mut Ctx<'_>| m.forward(ctx, &refs(&x));
    let mut clf = ClassifierModel::new(&toy(Variant::Dense), head, 6).unwrap();
    prime(&mut clf, clf_forward);
    let skip = clf.encoder().conv_biases();
    assert!(check(&clf, Mode::Train, &skip, clf_forward) <= GRAD_TOL);
    assert!(check(&clf, Mode::Eval, &[], clf_forward) <= GRAD_TOL);
}

#[test]
fn conv_bias_gradient_vanishes_under_batch_norm() {
    let (a, b) = (images(2, 16, 1), images(2, 16, 2));
    let model = SiameseModel::new(&toy(Variant::Vgg), 3).unwrap();
    let mut ctx = Ctx::new(model.store(), Mode::Train);
    let y = model.forward(&mut ctx, &refs(&a), &refs(&b)).unwrap();
    let loss = ctx.tape.l2_loss(y, &[0.3, -0.2]).unwrap();
    ctx.tape.backward(loss).unwrap();
    for g in ctx.param_grads(&model.encoder().conv_biases()) {
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }
}

#[test]
fn feature_map_trace_at_full_size() {
    let cfg = EncoderConfig::default();
    let mut store = ltssl_autodiff::ParamStore::new();
    let encoder = Encoder::build(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let x = images(2, 128, 0);
    let mut ctx = Ctx::new(&store, Mode::Train);
    let input = ctx.input(batch_tensor(&refs(&x), 128).unwrap());
    let trace = encoder.forward_trace(&mut ctx, input).unwrap();
    let shapes: Vec<Vec<usize>> = trace.iter().map(|&v| ctx.tape.shape(v).to_vec()).collect();
    assert_eq!(shapes, vec![vec![2, 64, 64, 16], vec![2, 32, 32, 32], vec![2, 16, 16, 64], vec![2, 128]]);
    assert_eq!(cfg.flat_dim(), 16384);
}

#[test]
fn dense_variant_keeps_embedding_width() {
    let cfg = EncoderConfig {
        variant: Variant::Dense,
        ..EncoderConfig::default()
    };
    assert_eq!(cfg.block_input_channels(1), 17);
    assert_eq!(cfg.block_input_channels(2), 49);
    let model = SiameseModel::new(&cfg, 1).unwrap();
    let x = images(1, 128, 3);
    let mut ctx = Ctx::new(model.store(), Mode::Train);
    let (h1, _) = model.encode_pair(&mut ctx, &refs(&x), &refs(&x)).unwrap();
    assert_eq!(ctx.tape.shape(h1), &[1, 128]);
}

/// Independent count: Σ 9·C_in·C_out + C_out (conv) + 2·C_out (batch norm
/// scale and shift) over layers, plus the embedding layer.
fn hand_count(channels: &[usize], layers: usize, size: usize, emb: usize) -> usize {
    let mut total = 0;
    let mut c_in = 1;
    for &c in channels {
        for _ in 0..layers {
            total += 9 * c_in * c + c + 2 * c;
            c_in = c;
        }
    }
    let side = size / 8;
    total + side * side * channels[2] * emb + emb
}

#[test]
fn vgg_parameter_count_matches_formula() {
    for (channels, layers, size, emb) in [(vec![16, 32, 64], 3, 128, 128), (vec![4, 6, 8], 2, 16, 12), (vec![8, 16, 32], 3, 32, 64)] {
        let cfg = EncoderConfig {
            variant: Variant::Vgg,
            block_channels: channels.clone(),
            layers_per_block: layers,
            embedding_dim: emb,
            input_size: size,
        };
        let mut store = ltssl_autodiff::ParamStore::new();
        Encoder::build(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let trainable: usize = store
            .iter()
            .filter(|(_, p)| p.kind == ParamKind::Trainable)
            .map(|(_, p)| p.value.len())
            .sum();
        assert_eq!(trainable, hand_count(&channels, layers, size, emb));
    }
}

#[test]
fn branches_share_weights_exactly() {
    let mut model = SiameseModel::new(&toy(Variant::Vgg), 2).unwrap();
    let x = images(2, 16, 8);
    let embed_both = |m: &SiameseModel| {
        let mut ctx = Ctx::new(m.store(), Mode::Train);
        let (h1, h2) = m.encode_pair(&mut ctx, &refs(&x), &refs(&x)).unwrap();
        (ctx.tape.value(h1).data().to_vec(), ctx.tape.value(h2).data().to_vec())
    };
    let (a1, a2) = embed_both(&model);
    assert_eq!(a1, a2);
    let id = model.store().id("encoder.block0.layer0.conv.kernel").unwrap();
    model.store_mut().value_mut(id).data_mut()[0] += 0.5;
    let (b1, b2) = embed_both(&model);
    assert_eq!(b1, b2);
    assert_ne!(a1, b1);
}

#[test]
fn eval_mode_needs_running_statistics_and_is_deterministic() {
    let mut model = SiameseModel::new(&toy(Variant::Vgg), 2).unwrap();
    let x = images(3, 16, 1);
    assert!(matches!(model.embed(&refs(&x)), Err(Error::NoRunningStats(_))));
    prime(&mut model, |m, ctx| m.forward(ctx, &refs(&x), &refs(&x)));
    assert_eq!(model.embed(&refs(&x)).unwrap(), model.embed(&refs(&x)).unwrap());
}

#[test]
fn wrong_input_size_is_a_shape_error() {
    let model = SiameseModel::new(&toy(Variant::Vgg), 2).unwrap();
    let x = images(1, 24, 1);
    let mut ctx = Ctx::new(model.store(), Mode::Train);
    let err = model.forward(&mut ctx, &refs(&x), &refs(&x)).unwrap_err();
    assert!(matches!(err, Error::Autodiff(ltssl_autodiff::Error::Shape { .. })), "{err}");
    let bad = EncoderConfig {
        input_size: 20,
        ..toy(Variant::Vgg)
    };
    assert!(SiameseModel::new(&bad, 0).is_err());
}

fn embedding(values: Vec<f64>) -> Embedding {
    Embedding {
        values,
        eye_id: 0,
        scan_index: 0,
        bscan_index: 0,
        time: 0.0,
    }
}

#[test]
fn zeroed_head_predicts_zero_and_order_matters() {
    let mut model = SiameseModel::new(&toy(Variant::Vgg), 4).unwrap();
    let h1 = embedding(probe(12, 1));
    let h2 = embedding(probe(12, 2));
    let forward = model.predict_interval(&h1, &h2).unwrap();
    let backward = model.predict_interval(&h2, &h1).unwrap();
    assert_ne!(forward, -backward);
    assert!(model.predict_interval(&h1, &embedding(vec![0.0; 5])).is_err());
    model.zero_output_layer();
    assert_eq!(model.predict_interval(&h1, &h2).unwrap(), 0.0);
    assert_eq!(model.predict_interval(&h2, &h1).unwrap(), 0.0);
}

fn small() -> EncoderConfig {
    EncoderConfig {
        block_channels: vec![8, 16, 32],
        embedding_dim: 32,
        input_size: 16,
        ..EncoderConfig::default()
    }
}

#[test]
fn siamese_overfits_ten_pairs() {
    let scans = images(20, 16, 11);
    let (a, b) = scans.split_at(10);
    let deltas: Vec<f64> = (0..10).map(|i| [-12.0, -6.0, -3.0, 3.0, 6.0, 9.0, 12.0, 18.0, -18.0, 24.0][i]).collect();
    let mut trainer = SiameseTrainer::new(SiameseModel::new(&small(), 1).unwrap(), 3e-3);
    let pairs: Vec<ltssl_core::data::ScanPair<'_>> = (0..10)
        .map(|i| ltssl_core::data::ScanPair {
            bscan_a: &a[i],
            bscan_b: &b[i],
            delta_t: deltas[i],
            eye_id: 0,
            bscan_index: 0,
            scan_a: i,
            scan_b: i + 10,
        })
        .collect();
    let first_loss = trainer.train_step(&pairs).unwrap();
    let mut last = first_loss;
    for _ in 0..400 {
        last = trainer.train_step(&pairs).unwrap();
    }
    assert!(last < 0.1 * first_loss, "{first_loss} -> {last}");
    let pred = trainer.model().predict_pairs(&refs(a), &refs(b)).unwrap();
    let mae = pred.iter().zip(&deltas).map(|(p, d)| (p - d).abs()).sum::<f64>() / 10.0;
    assert!(mae < 0.5, "training MAE {mae}, predictions {pred:?}");
}

#[test]
fn overfit_single_pair_reaches_target() {
    let scans = images(2, 16, 12);
    let pair = ltssl_core::data::ScanPair {
        bscan_a: &scans[0],
        bscan_b: &scans[1],
        delta_t: 12.0,
        eye_id: 0,
        bscan_index: 0,
        scan_a: 0,
        scan_b: 1,
    };
    let mut trainer = SiameseTrainer::new(SiameseModel::new(&small(), 2).unwrap(), 3e-3);
    for _ in 0..200 {
        trainer.train_step(&[pair, pair]).unwrap();
    }
    let h = trainer.model().embed(&refs(&scans)).unwrap();
    let e = |i: usize| embedding(h[i].clone());
    let pred = trainer.model().predict_interval(&e(0), &e(1)).unwrap();
    assert!((pred - 12.0).abs() < 0.5, "{pred}");
}

/// Preprocessed noise-free synthetic B-scans from distinct eyes.
fn bscans(n: usize) -> Vec<Image> {
    let cfg = SynthConfig {
        n_patients: n,
        image_size: 16,
        noise_std: 0.0,
        seed: 3,
        ..SynthConfig::default()
    };
    let eyes = prepare_cohort(&generate_cohort(&cfg).unwrap(), &PreprocessSpec::square(16)).unwrap();
    eyes.iter().take(n).map(|e| e.images[0][0].clone()).collect()
}

fn overfit_autoencoder(x: &[Image], steps: usize) -> (f64, f64, f64) {
    let cfg = EncoderConfig {
        input_size: 16,
        ..EncoderConfig::default()
    };
    let mut trainer = AutoencoderTrainer::new(AutoencoderModel::new(&cfg, 3).unwrap(), 5e-4);
    let first = trainer.train_step(&refs(x)).unwrap();
    let mut last = first;
    for _ in 0..steps {
        last = trainer.train_step(&refs(x)).unwrap();
    }
    let recon = trainer.model().reconstruct(&refs(x)).unwrap();
    assert!(recon.iter().all(|r| r.height == 16 && r.width == 16));
    let mse = recon
        .iter()
        .zip(x)
        .flat_map(|(r, t)| r.pixels.iter().zip(&t.pixels).map(|(a, b)| ((a - b) as f64).powi(2)))
        .sum::<f64>()
        / (x.len() * 256) as f64;
    (first, last, mse)
}

#[test]
fn autoencoder_overfits_five_images() {
    let (first, last, mse) = overfit_autoencoder(&bscans(5), 2500);
    assert!(mse < 1e-3, "reconstruction MSE {mse}, training {first} -> {last}");
}

#[test]
fn autoencoder_overfits_one_image() {
    let (first, last, mse) = overfit_autoencoder(&bscans(1), 1000);
    assert!(mse < 1e-3, "reconstruction MSE {mse}, training {first} -> {last}");
}

#[test]
fn classifier_overfits_four_samples() {
    let x = images(4, 16, 14);
    let labels = [0usize, 1, 1, 0];
    let head = ClassifierConfig { hidden: 16, dropout: 0.0 };
    let mut trainer = ClassifierTrainer::new(ClassifierModel::new(&small(), head, 4).unwrap(), 1e-3, 4);
    let first = trainer.train_step(&refs(&x), &labels).unwrap();
    let mut last = first;
    for _ in 0..150 {
        last = trainer.train_step(&refs(&x), &labels).unwrap();
    }
    assert!(last < 0.1 * first);
    let probs = trainer.model().predict_probs(&refs(&x)).unwrap();
    for (p, &l) in probs.iter().zip(&labels) {
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        assert_eq!(usize::from(p[1] > 0.5), l, "{probs:?}");
    }
}

#[test]
fn softmax_of_equal_logits_is_half() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
    let p = tape.softmax(x).unwrap();
    assert_eq!(tape.value(p).data(), &[0.5, 0.5]);
}

#[test]
fn transfer_copies_encoder_and_reinitializes_head() {
    let x = images(4, 16, 15);
    let mut source = SiameseModel::new(&small(), 7).unwrap();
    prime(&mut source, |m, ctx| m.forward(ctx, &refs(&x[..2]), &refs(&x[2..])));
    let head = ClassifierConfig { hidden: 8, dropout: 0.0 };
    let mut a = ClassifierModel::new(&small(), head, 1).unwrap();
    let mut b = ClassifierModel::new(&small(), head, 2).unwrap();
    transfer_encoder(source.store(), &mut a).unwrap();
    transfer_encoder(source.store(), &mut b).unwrap();
    assert_eq!(a.embed(&refs(&x)).unwrap(), source.embed(&refs(&x)).unwrap());
    for (name, value) in [("classifier.hidden.weight", 0), ("classifier.output.weight", 0)] {
        let (pa, pb) = (a.store().by_name(name).unwrap(), b.store().by_name(name).unwrap());
        assert_ne!(pa.value.data()[value], pb.value.data()[value]);
    }
    assert!(a.store().by_name("encoder.block0.layer0.conv.kernel").unwrap().kind == ParamKind::Trainable);
}

#[test]
fn transfer_across_variants_names_first_mismatch() {
    let source = SiameseModel::new(&toy(Variant::Vgg), 1).unwrap();
    let head = ClassifierConfig { hidden: 4, dropout: 0.0 };
    let mut target = ClassifierModel::new(&toy(Variant::Dense), head, 1).unwrap();
    let before = target.store().clone();
    match transfer_encoder(source.store(), &mut target) {
        Err(Error::ArchitectureMismatch { param, .. }) => assert_eq!(param, "encoder.block1.layer0.conv.kernel"),
        other => panic!("expected mismatch, got {other:?}"),
    }
    let unchanged = before.iter().zip(target.store().iter()).all(|((_, p), (_, q))| p.value == q.value);
    assert!(unchanged, "a failed transfer must not modify the target");
}

#[test]
fn descriptor_round_trips() {
    let head = ClassifierConfig { hidden: 8, dropout: 0.25 };
    let model = ClassifierModel::new(&toy(Variant::Dense), head, 1).unwrap();
    let meta = model.describe();
    assert_eq!(meta["arch.variant"], "dense");
    assert_eq!(meta["arch.block_channels"], "4,6,8");
    assert_eq!(EncoderConfig::from_description(&meta).unwrap(), toy(Variant::Dense));
    assert_eq!(ClassifierModel::head_from_description(&meta).unwrap(), head);
}
