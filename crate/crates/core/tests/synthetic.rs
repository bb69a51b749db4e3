use geofuse_core::dataset::{
    extract_samples, generate_synthetic, normalize_cube, stratified_split, SplitSpec, SyntheticSpec,
};
use geofuse_core::model::{DualBranchModel, ModelConfig};
use geofuse_core::numerics::Rng;
use geofuse_core::optim::{train, TrainConfig};

/// Nearest class mean on the raw spectra, fitted on the training split.
fn nearest_centroid_twin_accuracy(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let spec = SyntheticSpec::coordinate_separable(64, 64, 30, 6);
    let (cube, labels) = generate_synthetic(&mut rng, &spec).unwrap();
    let split = stratified_split(&labels, &SplitSpec::new(0.05), &mut rng).unwrap();
    let train_set = extract_samples(&cube, &labels, &split.train).unwrap();
    let test_set = extract_samples(&cube, &labels, &split.test).unwrap();

    let (k, b) = (6, 30);
    let mut sums = vec![vec![0.0; b]; k];
    let mut n = vec![0usize; k];
    for s in train_set.iter() {
        let c = s.label as usize - 1;
        n[c] += 1;
        for (acc, v) in sums[c].iter_mut().zip(&s.features) {
            *acc += v;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&n)
        .map(|(s, &m)| s.iter().map(|v| v / m as f64).collect())
        .collect();

    let (mut hit, mut total) = (0, 0);
    for s in test_set.iter().filter(|s| s.label <= 2) {
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in centroids.iter().enumerate() {
            let d: f64 = centroid.iter().zip(&s.features).map(|(a, x)| (a - x) * (a - x)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        total += 1;
        if best.1 + 1 == s.label as usize {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn spectral_centroids_cannot_separate_twins() {
    for seed in 0..3 {
        let acc = nearest_centroid_twin_accuracy(seed);
        assert!(acc <= 0.60, "seed {seed}: twin accuracy {acc}");
    }
}

#[test]
fn spectral_baseline_separates_distinct_classes() {
    let mut rng = Rng::new(11);
    let spec = SyntheticSpec::separable(32, 32, 30, 2);
    let (cube, labels) = generate_synthetic(&mut rng, &spec).unwrap();
    let cube = normalize_cube(&cube).unwrap();
    let split = stratified_split(&labels, &SplitSpec::new(0.05), &mut rng).unwrap();
    let train_set = extract_samples(&cube, &labels, &split.train).unwrap();
    let test_set = extract_samples(&cube, &labels, &split.test).unwrap();

    let mut model = DualBranchModel::build(ModelConfig::new(30, 2).as_baseline(), &mut rng).unwrap();
    let cfg = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &cfg, &mut rng).unwrap();
    let correct = test_set
        .iter()
        .filter(|s| model.predict(&s.features, s.coords).unwrap() == s.label)
        .count();
    let oa = correct as f64 / test_set.len() as f64;
    assert!(oa >= 0.99, "baseline OA {oa}");
}
