mod common;

use exsynth::dsp::{MagSpectrogram, StftParams, Window};
use exsynth::eval::{
    kl_divergence, mse_db, normalize_or_uniform, normalize_spectrogram, relative_error_db, score,
    ExperimentCorpus, ExperimentSpec, DB_FLOOR,
};
use exsynth::features::FeatureSetId;
use exsynth::index::{DbMode, FeatureGroups};
use exsynth::synth::Method;
use exsynth::Error;
use proptest::prelude::*;
use rand::Rng;

fn params() -> StftParams {
    StftParams::new(16, 8, Window::Hann).unwrap()
}

fn spec_from(values: Vec<f64>) -> MagSpectrogram {
    let frames = values.len() / 9;
    MagSpectrogram::new(values, frames, params(), 8000).unwrap()
}

fn random_spec(seed: u64, frames: usize) -> MagSpectrogram {
    let mut r = common::rng(seed);
    spec_from((0..9 * frames).map(|_| r.random_range(0.0..2.0)).collect())
}

fn oracle_rel_db(s: &[f64], e: &[f64]) -> f64 {
    let num: f64 = s.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = s.iter().map(|a| a * a).sum();
    10.0 * (num / den).log10()
}

#[test]
fn constructed_perturbations_hit_expected_levels() {
    let s = random_spec(1, 20);
    for (ratio, expected_rel, expected_mse) in [(0.1, -20.0, -10.0), (10f64.powf(-0.5), -10.0, -5.0)] {
        let e = spec_from(s.values().iter().map(|a| a * (1.0 + ratio)).collect());
        let rel = relative_error_db(&s, &e).unwrap();
        let mse = mse_db(&s, &e).unwrap();
        assert!((rel - expected_rel).abs() < 1e-9, "{rel}");
        assert!((mse - expected_mse).abs() < 1e-9, "{mse}");
        assert!((rel - oracle_rel_db(s.values(), e.values())).abs() < 1e-9);
    }
}

#[test]
fn identical_estimate_is_floored_and_zero_reference_fails() {
    let s = random_spec(3, 4);
    assert_eq!(relative_error_db(&s, &s).unwrap(), DB_FLOOR);
    assert_eq!(mse_db(&s, &s).unwrap(), DB_FLOOR);
    let z = spec_from(vec![0.0; 36]);
    assert!(matches!(relative_error_db(&z, &s), Err(Error::ZeroReference)));
    assert!(relative_error_db(&s, &random_spec(3, 5)).is_err());
}

#[test]
fn kl_hand_value_and_validation() {
    let p = spec_from([vec![0.5, 0.5], vec![0.0; 7]].concat());
    let q = spec_from([vec![0.25, 0.75], vec![0.0; 7]].concat());
    let expected = 0.5 * (2.0f64).ln() + 0.5 * (0.5f64 / 0.75).ln();
    assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
    let unnorm = random_spec(4, 1);
    assert!(matches!(kl_divergence(&unnorm, &q), Err(Error::NotNormalized(_))));
    let u = normalize_or_uniform(&spec_from(vec![0.0; 9])).unwrap();
    assert!(u.values().iter().all(|v| (*v - 1.0 / 9.0).abs() < 1e-15));
    assert!(kl_divergence(&p, &u).unwrap().is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn db_metrics_differ_by_factor_two(a in 0u64..10_000, b in 0u64..10_000, frames in 1usize..6) {
        let s = random_spec(a, frames);
        let e = random_spec(b.wrapping_add(77_777), frames);
        let sc = score(&s, &e).unwrap();
        prop_assert!((sc.relative_error_db - 2.0 * sc.mse_db).abs() < 1e-9);
        prop_assert!((sc.relative_error_db - oracle_rel_db(s.values(), e.values())).abs() < 1e-9);
    }

    #[test]
    fn relative_error_is_scale_invariant(a in 0u64..10_000, b in 0u64..10_000, c in 0.01f64..100.0) {
        let s = random_spec(a, 3);
        let e = random_spec(b.wrapping_add(99_999), 3);
        let cs = spec_from(s.values().iter().map(|v| v * c).collect());
        let ce = spec_from(e.values().iter().map(|v| v * c).collect());
        let d = relative_error_db(&s, &e).unwrap() - relative_error_db(&cs, &ce).unwrap();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(a in 0u64..10_000, b in 0u64..10_000, frames in 1usize..6) {
        let p = normalize_spectrogram(&random_spec(a, frames)).unwrap();
        let q = normalize_spectrogram(&random_spec(b.wrapping_add(5), frames)).unwrap();
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
    }

    #[test]
    fn normalized_spectrogram_sums_to_one(a in 0u64..10_000, frames in 1usize..6) {
        let n = normalize_spectrogram(&random_spec(a, frames)).unwrap();
        prop_assert!((n.sum() - 1.0).abs() < 1e-12);
        prop_assert!(n.values().iter().all(|v| *v >= 0.0));
    }
}

fn speech_experiment() -> ExperimentCorpus {
    let files = common::speech_corpus(4, 2, 12.0, 8000, 21);
    ExperimentCorpus::new(
        files,
        DbMode::Frame,
        StftParams::new(256, 128, Window::Hann).unwrap(),
        FeatureSetId::Frame8,
    )
    .unwrap()
}

fn small_frame_spec() -> ExperimentSpec {
    ExperimentSpec {
        m_values: vec![3, 8],
        n_values: vec![200, 800],
        p_values: vec![1, 5],
        trials: 4,
        split_seed: 7,
        test_len: 60,
        ..ExperimentSpec::frame_default()
    }
}

#[test]
fn experiment_is_deterministic() {
    let corpus = speech_experiment();
    let a = corpus.run(&small_frame_spec()).unwrap().to_csv().unwrap();
    let b = corpus.run(&small_frame_spec()).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    let header = String::from_utf8(a.clone()).unwrap();
    assert!(header.starts_with("M,N,P,method,feature_combo,seed,relative_error_db,mse_db,kl"));
    assert_eq!(header.lines().count(), 1 + 2 * 2 * 2 * 4);
    let mut other = small_frame_spec();
    other.split_seed = 8;
    assert_ne!(a, corpus.run(&other).unwrap().to_csv().unwrap());
}

#[test]
fn test_file_never_enters_development_set() {
    let corpus = speech_experiment();
    let report = corpus.run(&small_frame_spec()).unwrap();
    for r in &report.records {
        assert!(!r.dev_files.contains(&r.test_file));
        let group = r.test_file.split('/').next().unwrap();
        assert!(r.dev_files.iter().all(|d| !d.starts_with(&format!("{group}/"))));
        assert!(r.relative_error_db.is_finite() && r.kl.is_finite() && r.kl >= 0.0);
    }
    let mut open = small_frame_spec();
    open.genre_exclusion = false;
    let report = corpus.run(&open).unwrap();
    assert!(report.records.iter().all(|r| !r.dev_files.contains(&r.test_file)));
    assert!(report.records.iter().any(|r| {
        let group = r.test_file.split('/').next().unwrap();
        r.dev_files.iter().any(|d| d.starts_with(&format!("{group}/")))
    }));
}

#[test]
fn nested_development_sets_share_the_test_excerpt() {
    let corpus = speech_experiment();
    let report = corpus.run(&small_frame_spec()).unwrap();
    for t in 0..4 {
        let rows: Vec<_> = report.records.iter().filter(|r| r.trial == t).collect();
        assert!(rows.windows(2).all(|w| w[0].test_file == w[1].test_file && w[0].seed == w[1].seed));
        let small = rows.iter().find(|r| r.n == 200).unwrap();
        let large = rows.iter().find(|r| r.n == 800).unwrap();
        assert!(small.dev_files.is_subset(&large.dev_files));
    }
    let summary = report.summary();
    assert_eq!(summary.len(), 8);
    assert!(summary.iter().all(|c| c.trials == 4));
}

#[test]
fn oversized_cells_are_reported() {
    let corpus = speech_experiment();
    let mut spec = small_frame_spec();
    spec.n_values = vec![10_000_000];
    assert!(matches!(corpus.run(&spec), Err(Error::CorpusTooSmall { .. })));
    let mut spec = small_frame_spec();
    spec.p_values = vec![500];
    assert!(corpus.run(&spec).is_err());
    let mut spec = small_frame_spec();
    spec.methods = vec![Method::AddMean];
    assert!(spec.validate().is_err());
}

#[test]
fn segment_experiment_scores_every_combination() {
    let files = common::music_corpus(2, 8.0, 16000, 4);
    let corpus =
        ExperimentCorpus::new(files, DbMode::Segment, StftParams::default(), FeatureSetId::Msd27)
            .unwrap();
    let spec = ExperimentSpec {
        n_values: vec![60],
        p_values: vec![3],
        methods: vec![Method::AddMedian, Method::CrossPlain],
        feature_combos: FeatureGroups::combinations(),
        trials: 2,
        test_len: 6,
        ..ExperimentSpec::segment_default()
    };
    let report = corpus.run(&spec).unwrap();
    assert_eq!(report.records.len(), 2 * 7 * 2);
    assert!(report.records.iter().all(|r| r.m == 27 && r.kl.is_finite() && r.kl >= 0.0));
    assert!(report.cell(27, 60, 3, "add-median", "chroma+timbre+loudness").is_some());
    let json: serde_json::Value = serde_json::from_str(&report.summary_json().unwrap()).unwrap();
    assert_eq!(json.as_array().map(|a| a.len()), Some(14));
}
