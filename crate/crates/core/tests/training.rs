use fixhead::data::{make_blobs, write_idx, Dataset};
use fixhead::experiment::{
    compare_fixed_vs_learned, run, run_on, AlphaPolicy, BlobsConfig, DataSource, ExperimentConfig,
};
use fixhead::gradcheck::{central_difference, relative_error};
use fixhead::head::{nll_loss, CosineReduction};
use fixhead::projection::random_orthonormal;
use fixhead::{Head, HeadMode, LossKind, Matrix, Mlp, Rng, SgdConfig};

fn blobs(classes: usize, dim: usize, per_class: usize, sigma: f64) -> DataSource {
    DataSource::Blobs(BlobsConfig {
        n_classes: classes,
        dim,
        per_class,
        noise_sigma: sigma,
    })
}

fn heads(n: usize, c: usize, seed: u64) -> Vec<Head> {
    let mut rng = Rng::new(seed);
    vec![
        Head::learned(Matrix::from_vec(n, c, rng.normal_vec(n * c)).unwrap()),
        Head::orthonormal(random_orthonormal(n, c, seed).unwrap()),
        Head::hadamard(n, c).unwrap(),
    ]
}

fn batch_loss(mlp: &Mlp, samples: &[(Vec<f64>, usize)]) -> f64 {
    samples
        .iter()
        .map(|(z, t)| {
            let (x, y) = mlp.predict(z).unwrap();
            match mlp.loss_kind() {
                LossKind::CrossEntropy => nll_loss(&y, *t).unwrap(),
                LossKind::Cosine(r) => {
                    let mut h = mlp.head().clone();
                    h.set_alpha(1.0);
                    h.cosine_loss_and_grads(&x, *t, r).unwrap().0
                }
            }
        })
        .sum()
}

// Two hidden layers, 8-wide representation, 4 classes, a batch of 5.
#[test]
fn two_layer_batch_gradient_matches_finite_differences() {
    let mut rng = Rng::new(21);
    let samples: Vec<(Vec<f64>, usize)> = (0..5).map(|i| (rng.normal_vec(6), i % 4)).collect();
    let losses = [
        LossKind::CrossEntropy,
        LossKind::Cosine(CosineReduction::Sum),
        LossKind::Cosine(CosineReduction::Mean),
    ];
    for head in heads(8, 4, 3) {
        for &loss in &losses {
            if !head.mode().is_fixed() && loss != LossKind::CrossEntropy {
                continue;
            }
            let mut head = head.clone();
            if head.mode().is_fixed() {
                head.set_alpha(2.5);
            }
            let mut mlp = Mlp::new(6, &[7, 8], head, loss).unwrap();
            mlp.init_params(9);
            let refs: Vec<(&[f64], usize)> =
                samples.iter().map(|(z, t)| (z.as_slice(), *t)).collect();
            mlp.zero_grad();
            mlp.accumulate_batch(&refs, 1).unwrap();
            let analytic = mlp.gradient_vector();
            let params = mlp.parameters();
            let mut probe = mlp.clone();
            let mut worst: f64 = 0.0;
            for k in 0..params.len() {
                let num = central_difference(
                    &mut |p| {
                        probe.set_parameters(p).unwrap();
                        batch_loss(&probe, &samples)
                    },
                    &params,
                    k,
                    1e-6,
                );
                worst = worst.max(relative_error(analytic[k], num));
            }
            assert!(worst < 1e-4, "{} {loss}: {worst:e}", mlp.head().mode());
        }
    }
}

#[test]
fn small_learning_rate_decreases_full_batch_loss() {
    let (train, _) = make_blobs(4, 6, 20, 0.5, 1).unwrap();
    let train = train.slice(0..64);
    let samples: Vec<(&[f64], usize)> = (0..train.len()).map(|i| train.sample(i)).collect();
    let sgd = SgdConfig {
        learning_rate: 1e-3,
        momentum: 0.0,
        weight_decay: 0.0,
        lr_schedule: Vec::new(),
    };
    for head in heads(8, 4, 5) {
        let mode = head.mode();
        let mut mlp = Mlp::new(6, &[16, 8], head, LossKind::CrossEntropy).unwrap();
        mlp.init_params(2);
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            mlp.zero_grad();
            let (loss, _) = mlp.accumulate_batch(&samples, 1).unwrap();
            assert!(loss < prev, "{mode} step {step}: {loss} after {prev}");
            prev = loss;
            mlp.sgd_step(&sgd, samples.len());
        }
    }
}

#[test]
fn zero_noise_blobs_are_solved_by_every_head() {
    for mode in [HeadMode::Learned, HeadMode::Orthonormal, HeadMode::Hadamard] {
        let config = ExperimentConfig {
            head_mode: mode,
            epochs: 5,
            data: blobs(10, 32, 50, 0.0),
            ..ExperimentConfig::default()
        };
        let r = run(&config).unwrap();
        assert_eq!(r.final_row().val_error, 0.0, "{mode}");
    }
}

#[test]
fn cosine_loss_trains_fixed_heads() {
    for (mode, loss) in [
        (HeadMode::Orthonormal, "cosine"),
        (HeadMode::Hadamard, "cosine"),
        (HeadMode::Orthonormal, "cosine-mean"),
        (HeadMode::Hadamard, "cosine-mean"),
    ] {
        let config = ExperimentConfig {
            head_mode: mode,
            loss: loss.parse().unwrap(),
            epochs: 15,
            data: blobs(5, 16, 60, 0.1),
            ..ExperimentConfig::default()
        };
        let r = run(&config).unwrap();
        assert!(
            r.final_row().val_error < 0.1,
            "{mode} {loss}: {:?}",
            r.final_row()
        );
        assert_eq!(r.initial_head_checksum, r.final_head_checksum);
    }
}

#[test]
fn runs_are_reproducible_and_pairs_share_sample_order() {
    let config = ExperimentConfig {
        epochs: 3,
        data: blobs(4, 8, 40, 0.3),
        ..ExperimentConfig::default()
    };
    let a = run(&config).unwrap();
    let b = run(&config).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model.parameter_checksum(), b.model.parameter_checksum());

    let c = compare_fixed_vs_learned(&config).unwrap();
    assert_eq!(c.learned.shuffle_checksum, c.fixed.shuffle_checksum);
    assert_eq!(c.learned.model.head().mode(), HeadMode::Learned);
    assert_eq!(c.fixed.model.head().mode(), HeadMode::Orthonormal);
    assert_eq!(c.deltas.len(), 3);
    // The hidden layers start from the same weights in both arms.
    let fresh_l = config
        .with_head(HeadMode::Learned)
        .build_model(8, 4)
        .unwrap();
    let fresh_f = config.build_model(8, 4).unwrap();
    assert_eq!(fresh_l.layers()[0].w, fresh_f.layers()[0].w);
}

#[test]
fn frozen_alpha_stays_put_and_fixed_weights_never_move() {
    for mode in [HeadMode::Orthonormal, HeadMode::Hadamard] {
        let config = ExperimentConfig {
            head_mode: mode,
            alpha_policy: AlphaPolicy::Frozen(4.0),
            epochs: 3,
            data: blobs(4, 8, 40, 0.3),
            ..ExperimentConfig::default()
        };
        let r = run(&config).unwrap();
        assert!(r.metrics.iter().all(|m| m.alpha == Some(4.0)));
        assert_eq!(r.initial_head_checksum, r.final_head_checksum);
    }
}

#[test]
fn worker_count_changes_only_rounding() {
    let config = ExperimentConfig {
        epochs: 3,
        data: blobs(4, 8, 40, 0.3),
        ..ExperimentConfig::default()
    };
    let one = run(&config).unwrap();
    let three = run(&ExperimentConfig {
        threads: 3,
        ..config.clone()
    })
    .unwrap();
    for (a, b) in one.metrics.iter().zip(&three.metrics) {
        assert!((a.train_loss - b.train_loss).abs() < 1e-9 * a.train_loss);
        assert!((a.alpha.unwrap() - b.alpha.unwrap()).abs() < 1e-9);
    }
    assert_eq!(
        run(&ExperimentConfig {
            threads: 3,
            ..config
        })
        .unwrap()
        .metrics,
        three.metrics
    );
}

#[test]
fn divergence_is_reported_with_its_epoch() {
    let config = ExperimentConfig {
        head_mode: HeadMode::Learned,
        sgd: SgdConfig {
            learning_rate: 1e6,
            ..SgdConfig::default()
        },
        epochs: 5,
        data: blobs(4, 8, 40, 0.3),
        ..ExperimentConfig::default()
    };
    match run(&config) {
        Err(fixhead::Error::Diverged { epoch, .. }) => assert!((1..=5).contains(&epoch)),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.metrics)),
    }
}

#[test]
fn idx_files_feed_training() {
    let (train, val) = make_blobs(3, 4, 30, 0.2, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let scale = |d: &Dataset| d.to_unit_range(-2.0, 2.0);
    write_idx(&scale(&train), p("ti"), p("tl")).unwrap();
    write_idx(&scale(&val), p("vi"), p("vl")).unwrap();
    let config = ExperimentConfig {
        epochs: 3,
        data: DataSource::Idx {
            images: p("ti"),
            labels: p("tl"),
            val_images: Some(p("vi")),
            val_labels: Some(p("vl")),
            limit: None,
        },
        ..ExperimentConfig::default()
    };
    let (tr, va) = config.load_data().unwrap();
    assert_eq!((tr.len(), va.len(), tr.dim()), (72, 18, 4));
    let r = run_on(&config, &tr, &va).unwrap();
    assert_eq!(r.metrics.len(), 3);

    let held_out = ExperimentConfig {
        data: DataSource::Idx {
            images: p("ti"),
            labels: p("tl"),
            val_images: None,
            val_labels: None,
            limit: Some(50),
        },
        ..config
    };
    let (tr, va) = held_out.load_data().unwrap();
    assert_eq!((tr.len(), va.len()), (40, 10));
}
