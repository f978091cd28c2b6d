use nica::harness::eeg::{prepare, synthetic_eeg, EegConfig};
use nica::metrics::{fit_linear_classifier, majority_baseline_error, ClassifierConfig};
use nica::nn::gaussian_matrix;
use nica::rng;

#[test]
fn noise_features_score_at_the_majority_baseline() {
    let cfg = EegConfig::default();
    let data = prepare(&synthetic_eeg(cfg.synthetic_rows, 11), &cfg).unwrap();
    for seed in 0..3u64 {
        let mut r = rng::seeded(100 + seed);
        let train = gaussian_matrix(data.train_labels.len(), 5, &mut r);
        let test = gaussian_matrix(data.test_labels.len(), 5, &mut r);
        let clf = fit_linear_classifier(train.view(), &data.train_labels, &ClassifierConfig::default()).unwrap();
        let err = clf.error_rate(test.view(), &data.test_labels).unwrap();
        let base = majority_baseline_error(&data.test_labels);
        assert!((err - base).abs() <= 0.03, "seed {seed}: error {err} vs baseline {base}");
    }
}
