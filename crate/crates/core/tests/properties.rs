//! Property and end-to-end checks across modules.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillflip::dataset::{load_dataset, save_dataset, UniverseSizes};
use skillflip::model::{fit_gbt, load_model, save_model};
use skillflip::pipeline::{build_dataset, train_model, DataConfig, TrainConfig};
use skillflip::search::apply_changes;
use skillflip::{
    exact_shapley, find_counterfactual, lime_like, shap_like, BinaryVector, Class, FeatureId, Gbt,
    GbtParams, LimeConfig, Linear, Model, Predictor, SearchConfig, ThresholdClassifier,
};

fn random_gbt(rng: &mut ChaCha8Rng, dim: usize, n_trees: usize) -> Gbt {
    let rows: Vec<Vec<FeatureId>> = (0..200)
        .map(|_| {
            (0..dim as FeatureId)
                .filter(|_| rng.random_bool(0.5))
                .collect()
        })
        .collect();
    let coef: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let targets: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().map(|&f| coef[f as usize]).sum();
            let pair = (r.contains(&0) && r.contains(&1)) as u8 as f64;
            lin + 4.0 * pair + rng.random_range(-0.3..0.3)
        })
        .collect();
    let params = GbtParams {
        n_trees,
        max_depth: 3,
        ..GbtParams::default()
    };
    fit_gbt(dim, &rows, &targets, &params).unwrap()
}

fn max_abs_error(a: &skillflip::Attribution, b: &skillflip::Attribution) -> f64 {
    a.scores
        .iter()
        .map(|(f, v)| (v - b.scores[f]).abs())
        .fold(0.0, f64::max)
}

/// Mean worst-feature error over ten small models; a single model can get a
/// lucky 100-permutation draw, so the comparison is on the aggregate.
#[test]
fn shap_error_shrinks_with_more_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut coarse_total, mut fine_total) = (0.0, 0.0);
    for _ in 0..10 {
        let dim = rng.random_range(6..=12);
        let model = random_gbt(&mut rng, dim, 25);
        let x = BinaryVector::from_active(
            dim,
            (0..dim as FeatureId)
                .filter(|_| rng.random_bool(0.7))
                .chain([0]),
        );
        let baseline = BinaryVector::zeros(dim);
        let exact = exact_shapley(&model, &x, &baseline).unwrap();
        let seed = rng.random();
        coarse_total += max_abs_error(
            &shap_like(&model, &x, &baseline, 100, seed).unwrap(),
            &exact,
        );
        fine_total += max_abs_error(
            &shap_like(&model, &x, &baseline, 2000, seed).unwrap(),
            &exact,
        );
    }
    assert!(
        fine_total <= coarse_total,
        "2000: {fine_total} 100: {coarse_total}"
    );
}

#[test]
fn lime_top_three_on_additive_predictors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..5 {
        let dim = 40;
        let weights: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let active: Vec<FeatureId> = (0..dim as FeatureId)
            .filter(|_| rng.random_bool(0.3))
            .collect();
        let x = BinaryVector::from_active(dim, active.iter().copied());
        let linear = Linear::new(weights.clone(), 0.0);
        let config = LimeConfig {
            n_samples: 5000,
            seed: case,
            ..LimeConfig::default()
        };
        let result = lime_like(&linear, &x, &config).unwrap();
        let lime_top: Vec<FeatureId> = result
            .ranking
            .iter()
            .copied()
            .filter(|f| x.get(*f))
            .take(3)
            .collect();
        // toggling an active feature removes it, changing the score by -w
        let mut by_weight = active.clone();
        by_weight.sort_by(|a, b| {
            weights[*b as usize]
                .abs()
                .total_cmp(&weights[*a as usize].abs())
        });
        assert_eq!(lime_top, by_weight[..3], "case {case}");
    }
}

fn arb_instance(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>, f64)> {
    (
        prop::collection::vec(-4.0f64..6.0, dim),
        prop::collection::vec(any::<bool>(), dim),
        0.0f64..1.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_outputs_are_valid_irreducible_and_deterministic(
        (weights, bits, t) in arb_instance(10),
        addition in any::<bool>(),
    ) {
        let x = BinaryVector::from_active(10, (0..10).filter(|&i| bits[i]).map(|i| i as FeatureId));
        let linear = Linear::new(weights, 0.0);
        let score = linear.score(&x);
        let config = if addition { SearchConfig::addition() } else { SearchConfig::removal() };
        // a threshold on the far side of the current score from the target
        let tau = if addition { score + t * 5.0 } else { score - t * 5.0 - 1e-9 };
        let clf = ThresholdClassifier::new(&linear, tau);
        let first = find_counterfactual(&clf, &x, &config);
        let again = find_counterfactual(&clf, &x, &config);
        match (&first, &again) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.changes, &b.changes);
                let target = config.target_class;
                prop_assert_eq!(clf.classify_unchecked(&apply_changes(&x, &a.changes)), target);
                for skip in 0..a.changes.len() {
                    let mut rest = a.changes.clone();
                    rest.remove(skip);
                    prop_assert_ne!(clf.classify_unchecked(&apply_changes(&x, &rest)), target);
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "nondeterministic outcome"),
        }
    }

    #[test]
    fn larger_budget_never_gives_larger_sets(
        seed in any::<u64>(),
        small in 1usize..6,
        extra in 1usize..50,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 12;
        let model = random_gbt(&mut rng, dim, 15);
        let x = BinaryVector::from_active(dim, (0..dim as FeatureId).filter(|_| rng.random_bool(0.6)));
        let clf = ThresholdClassifier::new(&model, model.score(&x) - 0.5);
        let run = |budget| {
            let config = SearchConfig { max_expansions: budget, ..SearchConfig::removal() };
            find_counterfactual(&clf, &x, &config).map(|cf| cf.len()).ok()
        };
        if let Some(n_small) = run(small) {
            let n_large = run(small + extra);
            prop_assert!(n_large.is_some_and(|n| n <= n_small));
        }
    }
}

#[test]
fn data_model_search_round_trip() {
    let config = DataConfig {
        universe: UniverseSizes {
            competency: 120,
            study: 30,
            study_area: 10,
            language: 5,
        },
        n_jobs: 300,
        skills_per_job_mean: 4.0,
        n_profiles: 400,
        skills_per_profile_mean: 7.0,
        fulfillment_fraction: 0.6,
        seed: 12,
    };
    let data = build_dataset(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&data, dir.path().join("d.jsonl")).unwrap();
    let data = load_dataset(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(data, build_dataset(&config).unwrap());

    let train = TrainConfig {
        gbt: GbtParams {
            n_trees: 40,
            ..GbtParams::default()
        },
        ..TrainConfig::default()
    };
    let (model, metrics) = train_model::<f64>(&data, &train).unwrap();
    save_model(&Model::from(model.clone()), dir.path().join("m.json")).unwrap();
    let loaded: Model = load_model(dir.path().join("m.json")).unwrap();
    let clf = ThresholdClassifier::new(&loaded, metrics.threshold);
    let reference = ThresholdClassifier::new(&model, metrics.threshold);

    let mut found = 0;
    for p in &data.profiles {
        let x = p.features(data.dim());
        assert_eq!(clf.score(&x), reference.score(&x));
        if clf.classify_unchecked(&x) != Class::Unfavorable {
            continue;
        }
        if let Ok(cf) = find_counterfactual(&clf, &x, &SearchConfig::addition()) {
            found += 1;
            assert_eq!(
                clf.classify_unchecked(&apply_changes(&x, &cf.changes)),
                Class::Favorable
            );
        }
    }
    assert!(found > 0);
}
