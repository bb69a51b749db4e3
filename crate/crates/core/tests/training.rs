use geofuse_core::dataset::{
    extract_samples, generate_synthetic, normalize_cube, stratified_split, SampleSet, SplitSpec, SyntheticSpec,
};
use geofuse_core::layers::Mode;
use geofuse_core::model::{DualBranchModel, ModelConfig, ModelGrads};
use geofuse_core::numerics::Rng;
use geofuse_core::optim::{adam_step, train, AdamState, TrainConfig};
use geofuse_core::Error;

fn small_config(bands: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        filters: 6,
        kernel: 5,
        dense_width: 24,
        coord_hidden: 32,
        ..ModelConfig::new(bands, classes)
    }
}

fn separable_set(seed: u64, fraction: f64) -> SampleSet {
    let mut rng = Rng::new(seed);
    let spec = SyntheticSpec::separable(24, 24, 20, 2);
    let (cube, labels) = generate_synthetic(&mut rng, &spec).unwrap();
    let cube = normalize_cube(&cube).unwrap();
    let split = stratified_split(&labels, &SplitSpec::new(fraction), &mut rng).unwrap();
    extract_samples(&cube, &labels, &split.train).unwrap()
}

#[test]
fn separable_two_class_fits_within_50_epochs() {
    let set = separable_set(1, 0.2);
    let mut rng = Rng::new(2);
    let mut model = DualBranchModel::build(ModelConfig::new(20, 2), &mut rng).unwrap();
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let history = train(&mut model, &set, &cfg, &mut rng).unwrap();
    assert_eq!(history.epochs.len(), 50);
    let best = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert!(best >= 0.99, "best train accuracy {best}");
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let set = separable_set(3, 0.1);
    let mut rng = Rng::new(4);
    let mut model = DualBranchModel::build(small_config(20, 2), &mut rng).unwrap();
    let before = model.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        max_epochs: 3,
        batch_size: 7,
        ..TrainConfig::default()
    };
    train(&mut model, &set, &cfg, &mut rng).unwrap();
    for (a, b) in before.parameters().iter().zip(model.parameters()) {
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
}

#[test]
fn same_seed_same_parameters() {
    let set = separable_set(5, 0.1);
    let run = || {
        let mut rng = Rng::new(6);
        let mut model = DualBranchModel::build(small_config(20, 2), &mut rng).unwrap();
        let cfg = TrainConfig {
            max_epochs: 4,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let h = train(&mut model, &set, &cfg, &mut rng).unwrap();
        (model, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    for (x, y) in a.parameters().iter().zip(b.parameters()) {
        let bits = |t: &geofuse_core::numerics::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn full_batch_loss_decreases_without_dropout() {
    let set = separable_set(7, 0.15);
    let mut rng = Rng::new(8);
    let cfg = ModelConfig {
        keep_prob: 1.0,
        ..ModelConfig::new(20, 2)
    };
    let mut model = DualBranchModel::build(cfg, &mut rng).unwrap();
    let tc = TrainConfig::default();
    let mut state = AdamState::new(&model.parameters());
    let mut grads = ModelGrads::zeros_for(&model);
    let mut losses = Vec::new();
    for _ in 0..=10 {
        grads.clear();
        let mut loss = 0.0;
        for s in set.iter() {
            let cache = model.forward(&s.features, s.coords, Mode::Train, &mut rng).unwrap();
            loss += model.accumulate_gradients(&cache, s.label, &mut grads).unwrap();
        }
        losses.push(loss / set.len() as f64);
        grads.scale(1.0 / set.len() as f64);
        adam_step(&mut model.parameters_mut(), &grads.tensors, &mut state, &tc).unwrap();
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn empty_or_mismatched_sets_rejected() {
    let mut rng = Rng::new(0);
    let mut model = DualBranchModel::build(small_config(20, 2), &mut rng).unwrap();
    let empty = SampleSet::default();
    assert!(matches!(
        train(&mut model, &empty, &TrainConfig::default(), &mut rng),
        Err(Error::Empty(_))
    ));
    let mut wrong = DualBranchModel::build(small_config(19, 2), &mut rng).unwrap();
    let set = separable_set(1, 0.1);
    assert!(matches!(
        train(&mut wrong, &set, &TrainConfig::default(), &mut rng),
        Err(Error::DimMismatch { .. })
    ));
}
