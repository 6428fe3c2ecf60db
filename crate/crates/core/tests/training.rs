mod common;

use cbc_core::evaluation::evaluate_accuracy;
use cbc_core::training::{fit, fit_with, init_model, EpochRecord};
use cbc_core::{DistanceKind, Error, HeadKind, LossKind, TemperatureMode, TrainConfig};

fn blob_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        batch_size: 32,
        seed,
        p0: 0.1,
        components: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_blobs_are_learned() {
    for seed in 0..3 {
        let data = common::blobs(3, 100, 0.05, seed);
        let config = blob_config(seed);
        let (model, history) = fit(init_model(&data, &config).unwrap(), &data, &config).unwrap();
        let acc = evaluate_accuracy(&model, &data).unwrap();
        assert!(acc >= 0.99, "seed {seed}: accuracy {acc}");
        assert_eq!(history.epochs.len(), config.epochs);
        assert!(history.epochs.iter().all(|e| (0.0..=1.0).contains(&e.accuracy)));
        model.validate().unwrap();
    }
}

#[test]
fn margin_loss_descends_within_band() {
    let data = common::blobs(4, 100, 0.07, 9);
    let config = blob_config(9);
    let (_, history) = fit(init_model(&data, &config).unwrap(), &data, &config).unwrap();
    for w in history.epochs.windows(2) {
        assert!(
            w[1].loss <= 1.1 * w[0].loss + 1e-12,
            "loss rose from {} to {} at epoch {}",
            w[0].loss,
            w[1].loss,
            w[1].epoch
        );
    }
    assert!(history.epochs.last().unwrap().loss < history.epochs[0].loss);
}

#[test]
fn same_seed_same_model() {
    let data = common::blobs(3, 40, 0.08, 1);
    let config = TrainConfig {
        epochs: 5,
        distance: DistanceKind::SquaredTangent,
        subspace_dim: 1,
        ..blob_config(4)
    };
    let run = || fit(init_model(&data, &config).unwrap(), &data, &config).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (c, _) = fit(
        init_model(&data, &TrainConfig { seed: 5, ..config.clone() }).unwrap(),
        &data,
        &TrainConfig { seed: 5, ..config.clone() },
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn every_head_trains_on_blobs() {
    let data = common::blobs(3, 60, 0.05, 2);
    let cases = [
        (HeadKind::Glvq, LossKind::Glvq, DistanceKind::SquaredEuclidean, 0.9),
        (HeadKind::Rbf, LossKind::CrossEntropy, DistanceKind::SquaredEuclidean, 0.9),
        (HeadKind::RbfNorm, LossKind::CrossEntropy, DistanceKind::SquaredEuclidean, 0.9),
        (HeadKind::OriginalCbc, LossKind::Margin { gamma: 0.3 }, DistanceKind::Euclidean, 0.9),
        (HeadKind::Cbc, LossKind::RobustSquared { gamma: 0.05, lambda: 0.09 }, DistanceKind::SquaredEuclidean, 0.9),
        (HeadKind::Cbc, LossKind::RobustDelta { gamma: 0.3 }, DistanceKind::Tangent, 0.9),
        (HeadKind::RbfNorm, LossKind::LogLikelihoodRatio, DistanceKind::Euclidean, 0.9),
    ];
    for (head, loss, distance, floor) in cases {
        let config = TrainConfig {
            head,
            loss,
            distance,
            components: 6,
            subspace_dim: 1,
            learning_rate: 0.02,
            ..blob_config(2)
        };
        let mut epochs = Vec::new();
        let (model, _) = fit_with(init_model(&data, &config).unwrap(), &data, &config, |e: &EpochRecord| {
            epochs.push(e.clone())
        })
        .unwrap();
        let acc = evaluate_accuracy(&model, &data).unwrap();
        assert!(acc >= floor, "{} / {}: accuracy {acc}", head.name(), loss.name());
        assert_eq!(epochs.len(), config.epochs);
        assert!(epochs.iter().all(|e| e.sigma_min > 0.0 && e.loss.is_finite()));
    }
}

#[test]
fn shared_temperature_stays_shared() {
    let data = common::blobs(2, 30, 0.05, 3);
    let config = TrainConfig {
        epochs: 3,
        temperature_mode: TemperatureMode::Shared,
        ..blob_config(3)
    };
    let (model, _) = fit(init_model(&data, &config).unwrap(), &data, &config).unwrap();
    assert_eq!(model.components.temperatures.len(), 1);
    assert_eq!(model.components.temperature_mode(), TemperatureMode::Shared);
}

#[test]
fn configuration_errors() {
    let data = common::blobs(2, 10, 0.05, 0);
    let zero = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(zero.validate(), Err(Error::Config(_))));
    let config = TrainConfig {
        head: HeadKind::Rbf,
        loss: LossKind::Margin { gamma: 0.3 },
        ..blob_config(0)
    };
    let model = init_model(&data, &TrainConfig { loss: LossKind::CrossEntropy, ..config.clone() }).unwrap();
    assert!(fit(model, &data, &config).is_err());
}
