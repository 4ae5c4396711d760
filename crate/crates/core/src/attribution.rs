//! Feature-importance baselines: a local weighted linear surrogate, a
//! Monte-Carlo permutation Shapley estimator and exact Shapley values by
//! subset enumeration.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinaryVector, FeatureId};
use crate::model::Predictor;
use crate::scalar::Scalar;

/// Largest number of differing features [`exact_shapley`] will enumerate.
pub const EXACT_SHAPLEY_MAX_FEATURES: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("all perturbation samples are identical")]
    DegenerateSample,
    #[error("instance equals the baseline; nothing to attribute")]
    EmptyCoalition,
    #[error("{0} differing features exceed the exact-enumeration limit")]
    TooLarge(usize),
    #[error("expected dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult<T> {
    pub scores: BTreeMap<FeatureId, T>,
    /// `scores` keys by decreasing |score|, lower id first on ties.
    pub ranking: Vec<FeatureId>,
    pub n_samples_used: usize,
}

impl<T: Scalar> AttributionResult<T> {
    fn from_scores(scores: BTreeMap<FeatureId, T>, n_samples_used: usize) -> Self {
        let mut ranking: Vec<FeatureId> = scores.keys().copied().collect();
        ranking.sort_by(|a, b| {
            scores[b]
                .abs()
                .partial_cmp(&scores[a].abs())
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(b))
        });
        Self {
            scores,
            ranking,
            n_samples_used,
        }
    }

    pub fn total(&self) -> T {
        self.scores.values().copied().sum()
    }
}

fn check_dim<T: Scalar>(p: &impl Predictor<T>, x: &BinaryVector) -> Result<(), AttributionError> {
    if p.dim() == x.dim() {
        Ok(())
    } else {
        Err(AttributionError::Shape {
            expected: p.dim(),
            actual: x.dim(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 · sqrt(number of perturbed features)`.
    pub kernel_width: Option<f64>,
    pub n_top: usize,
    /// Absent features perturbed alongside the active ones, chosen by the
    /// magnitude of their single-toggle effect.
    pub absent_pool: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            n_top: 20,
            absent_pool: 50,
            ridge: 1e-3,
            seed: 0,
        }
    }
}

/// Absent features with the largest |f(x + e_i) − f(x)|, lower id on ties.
fn absent_pool<T: Scalar>(p: &impl Predictor<T>, x: &BinaryVector, size: usize) -> Vec<FeatureId> {
    if size == 0 {
        return Vec::new();
    }
    let base = p.score(x);
    let mut scratch = x.clone();
    let mut effects: Vec<(T, FeatureId)> = (0..x.dim() as FeatureId)
        .filter(|&i| !x.get(i))
        .map(|i| {
            scratch.set(i, true);
            let e = (p.score(&scratch) - base).abs();
            scratch.set(i, false);
            (e, i)
        })
        .collect();
    effects.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    effects.truncate(size);
    effects.into_iter().map(|(_, i)| i).collect()
}

/// Local surrogate: perturb `x` by toggling each considered feature with
/// probability 1/2, weight each sample by `exp(-D²/w²)` with `D` the
/// Euclidean distance to `x`, and fit a ridge-damped weighted linear model
/// from toggle indicators to scores. A coefficient is the surrogate's effect
/// of toggling that feature; the `n_top` largest by magnitude are returned.
pub fn lime_like<T: Scalar>(
    predictor: &impl Predictor<T>,
    x: &BinaryVector,
    config: &LimeConfig,
) -> Result<AttributionResult<T>, AttributionError> {
    check_dim(predictor, x)?;
    if config.n_samples < 50 {
        return Err(AttributionError::InvalidParameter(format!(
            "n_samples must be at least 50, got {}",
            config.n_samples
        )));
    }
    if config.n_top == 0 {
        return Err(AttributionError::InvalidParameter(
            "n_top must be at least 1".into(),
        ));
    }

    let mut features: Vec<FeatureId> = x.active().collect();
    features.extend(absent_pool(predictor, x, config.absent_pool));
    features.sort_unstable();
    let p = features.len();
    if p == 0 {
        return Err(AttributionError::DegenerateSample);
    }
    let width = config.kernel_width.unwrap_or(0.75 * (p as f64).sqrt());
    let inv_w2 = T::of(1.0 / (width * width));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_samples;
    let mut design = vec![false; n * p];
    let mut targets = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for row in design.chunks_mut(p) {
        let mut z = x.clone();
        let mut toggled = 0usize;
        for (slot, &f) in row.iter_mut().zip(&features) {
            if rng.random_bool(0.5) {
                *slot = true;
                z.toggle(f);
                toggled += 1;
            }
        }
        targets.push(predictor.score(&z));
        // Euclidean distance between binary points: D² = number of toggles
        weights.push((-T::from_count(toggled) * inv_w2).exp());
    }
    if design.chunks(p).all(|r| r == &design[..p]) {
        return Err(AttributionError::DegenerateSample);
    }

    let coef = weighted_ridge(&design, p, &targets, &weights, T::of(config.ridge))
        .ok_or(AttributionError::DegenerateSample)?;
    let all = AttributionResult::from_scores(features.into_iter().zip(coef).collect(), n);
    let keep: Vec<FeatureId> = all.ranking.iter().take(config.n_top).copied().collect();
    Ok(AttributionResult {
        scores: keep.iter().map(|id| (*id, all.scores[id])).collect(),
        ranking: keep,
        n_samples_used: n,
    })
}

/// Solves `min Σ w_i (y_i − b − z_i·β)² + λ‖β‖²` with an unpenalized
/// intercept `b`, by centering on the weighted means and a Cholesky solve of
/// the normal equations. Returns β, or `None` if all weights vanish.
fn weighted_ridge<T: Scalar>(
    design: &[bool],
    p: usize,
    y: &[T],
    w: &[T],
    ridge: T,
) -> Option<Vec<T>> {
    let w_sum: T = w.iter().copied().sum();
    if w_sum.is_nan() || w_sum <= T::zero() {
        return None;
    }
    let one = |b: bool| if b { T::one() } else { T::zero() };
    let mut z_mean = vec![T::zero(); p];
    let mut y_mean = T::zero();
    for ((row, &yi), &wi) in design.chunks(p).zip(y).zip(w) {
        for (m, &b) in z_mean.iter_mut().zip(row) {
            *m = *m + wi * one(b);
        }
        y_mean = y_mean + wi * yi;
    }
    z_mean.iter_mut().for_each(|m| *m = *m / w_sum);
    y_mean = y_mean / w_sum;

    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    let mut zc = vec![T::zero(); p];
    for ((row, &yi), &wi) in design.chunks(p).zip(y).zip(w) {
        for ((c, &b), &m) in zc.iter_mut().zip(row).zip(&z_mean) {
            *c = one(b) - m;
        }
        let yc = yi - y_mean;
        for j in 0..p {
            let wz = wi * zc[j];
            rhs[j] = rhs[j] + wz * yc;
            for k in 0..=j {
                gram[j * p + k] = gram[j * p + k] + wz * zc[k];
            }
        }
    }
    for j in 0..p {
        gram[j * p + j] = gram[j * p + j] + ridge;
    }
    cholesky_solve(&mut gram, p, rhs)
}

/// Solves `A x = b` for symmetric positive-definite `A` given by its lower
/// triangle (row-major). `A` is overwritten by its factor.
fn cholesky_solve<T: Scalar>(a: &mut [T], n: usize, mut b: Vec<T>) -> Option<Vec<T>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= T::zero() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(b)
}

fn differing(x: &BinaryVector, baseline: &BinaryVector) -> Vec<FeatureId> {
    (0..x.dim() as FeatureId)
        .filter(|&i| x.get(i) != baseline.get(i))
        .collect()
}

fn check_pair<T: Scalar>(
    p: &impl Predictor<T>,
    x: &BinaryVector,
    baseline: &BinaryVector,
) -> Result<Vec<FeatureId>, AttributionError> {
    check_dim(p, x)?;
    check_dim(p, baseline)?;
    let diff = differing(x, baseline);
    if diff.is_empty() {
        return Err(AttributionError::EmptyCoalition);
    }
    Ok(diff)
}

/// Permutation-sampling Shapley values of the features where `x` differs
/// from `baseline`. Permutations are drawn in antithetic pairs (a random
/// order followed by its reverse); an odd `n_permutations` ends with an
/// unpaired draw.
pub fn shap_like<T: Scalar>(
    predictor: &impl Predictor<T>,
    x: &BinaryVector,
    baseline: &BinaryVector,
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionResult<T>, AttributionError> {
    let diff = check_pair(predictor, x, baseline)?;
    if n_permutations < 10 {
        return Err(AttributionError::InvalidParameter(format!(
            "n_permutations must be at least 10, got {n_permutations}"
        )));
    }
    let m = diff.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_score = predictor.score(baseline);
    let mut sums = vec![T::zero(); m];
    let mut order: Vec<usize> = (0..m).collect();
    let walk = |order: &[usize], sums: &mut [T]| {
        let mut z = baseline.clone();
        let mut prev = base_score;
        for &j in order {
            z.toggle(diff[j]);
            let cur = predictor.score(&z);
            sums[j] = sums[j] + (cur - prev);
            prev = cur;
        }
    };
    let mut done = 0;
    while done < n_permutations {
        order.shuffle(&mut rng);
        walk(&order, &mut sums);
        done += 1;
        if done < n_permutations {
            order.reverse();
            walk(&order, &mut sums);
            done += 1;
        }
    }
    let n = T::from_count(n_permutations);
    let scores = diff
        .into_iter()
        .zip(sums)
        .map(|(f, s)| (f, s / n))
        .collect();
    Ok(AttributionResult::from_scores(scores, n_permutations))
}

/// Exact Shapley values by evaluating every coalition of the differing
/// features, weighting each marginal contribution by `|S|!(m−|S|−1)!/m!`.
pub fn exact_shapley<T: Scalar>(
    predictor: &impl Predictor<T>,
    x: &BinaryVector,
    baseline: &BinaryVector,
) -> Result<AttributionResult<T>, AttributionError> {
    let diff = check_pair(predictor, x, baseline)?;
    let m = diff.len();
    if m > EXACT_SHAPLEY_MAX_FEATURES {
        return Err(AttributionError::TooLarge(m));
    }
    let values: Vec<T> = (0u32..1 << m)
        .map(|mask| {
            let mut z = baseline.clone();
            for (j, &f) in diff.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    z.toggle(f);
                }
            }
            predictor.score(&z)
        })
        .collect();
    // weight[s] = s!(m-s-1)!/m!
    let weight: Vec<T> = (0..m)
        .map(|s| {
            let w =
                (0..s).fold(1.0, |acc, i| acc * (s - i) as f64 / (m - i) as f64) / (m - s) as f64;
            T::of(w)
        })
        .collect();
    let mut phi = vec![T::zero(); m];
    for mask in 0u32..1 << m {
        let size = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                let with = values[(mask | 1 << j) as usize];
                *p = *p + weight[size] * (with - values[mask as usize]);
            }
        }
    }
    let scores = diff.into_iter().zip(phi).collect();
    Ok(AttributionResult::from_scores(scores, 1 << m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lime,
    Shap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub profile_id: u32,
    pub method: Method,
    pub scores: BTreeMap<FeatureId, f64>,
    pub ranking: Vec<FeatureId>,
}

impl AttributionRecord {
    pub fn new<T: Scalar>(profile_id: u32, method: Method, result: &AttributionResult<T>) -> Self {
        Self {
            profile_id,
            method,
            scores: result
                .scores
                .iter()
                .map(|(&k, v)| (k, v.as_f64()))
                .collect(),
            ranking: result.ranking.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearPredictor;

    type Linear = LinearPredictor<f64>;

    struct Table(Vec<f64>, usize);

    // predictor given by its value on each point of {0,1}^d (bit i = feature i)
    impl Predictor<f64> for Table {
        fn dim(&self) -> usize {
            self.1
        }
        fn score(&self, x: &BinaryVector) -> f64 {
            self.0[x.active().map(|i| 1usize << i).sum::<usize>()]
        }
    }

    #[test]
    fn lime_recovers_linear_order() {
        let lin = Linear::new(vec![5.0, 3.0, 1.0], 0.0);
        let x = BinaryVector::from_active(3, [0, 1, 2]);
        let config = LimeConfig {
            n_samples: 5000,
            ..Default::default()
        };
        let r = lime_like(&lin, &x, &config).unwrap();
        assert_eq!(r.ranking, vec![0, 1, 2]);
        // toggling a present feature off costs its weight
        for (id, w) in [(0, 5.0), (1, 3.0), (2, 1.0)] {
            assert!((r.scores[&id] + w).abs() < 1e-3, "{id}: {}", r.scores[&id]);
        }
    }

    #[test]
    fn lime_constant_predictor() {
        let lin = Linear::new(vec![0.0; 6], 2.5);
        let x = BinaryVector::from_active(6, [0, 3]);
        let r = lime_like(&lin, &x, &LimeConfig::default()).unwrap();
        assert!(r.scores.values().all(|s| s.abs() < 1e-6));
    }

    #[test]
    fn lime_is_seed_deterministic() {
        let lin = Linear::new(vec![0.3, -1.0, 2.0, 0.5, 0.0], 1.0);
        let x = BinaryVector::from_active(5, [1, 2]);
        let config = LimeConfig {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(
            lime_like(&lin, &x, &config).unwrap(),
            lime_like(&lin, &x, &config).unwrap()
        );
    }

    #[test]
    fn lime_without_features_is_degenerate() {
        let lin = Linear::new(vec![1.0; 3], 0.0);
        let x = BinaryVector::zeros(3);
        let config = LimeConfig {
            absent_pool: 0,
            ..Default::default()
        };
        assert_eq!(
            lime_like(&lin, &x, &config),
            Err(AttributionError::DegenerateSample)
        );
    }

    #[test]
    fn lime_parameter_checks() {
        let lin = Linear::new(vec![1.0; 3], 0.0);
        let x = BinaryVector::from_active(3, [0]);
        let few = LimeConfig {
            n_samples: 49,
            ..Default::default()
        };
        assert!(matches!(
            lime_like(&lin, &x, &few),
            Err(AttributionError::InvalidParameter(_))
        ));
        let none = LimeConfig {
            n_top: 0,
            ..Default::default()
        };
        assert!(matches!(
            lime_like(&lin, &x, &none),
            Err(AttributionError::InvalidParameter(_))
        ));
    }

    #[test]
    fn lime_truncates_to_top_features() {
        let lin = Linear::new((0..30).map(|i| i as f64).collect(), 0.0);
        let x = BinaryVector::from_active(30, 0..10);
        let config = LimeConfig {
            n_top: 4,
            absent_pool: 5,
            ..Default::default()
        };
        let r = lime_like(&lin, &x, &config).unwrap();
        assert_eq!(r.ranking.len(), 4);
        assert_eq!(r.scores.len(), 4);
        // pooled absent features are 25..29, the strongest effects overall
        assert_eq!(r.ranking, vec![29, 28, 27, 26]);
    }

    #[test]
    fn shap_on_additive_model_is_exact() {
        let lin = Linear::new(vec![2.0, -1.0], 0.0);
        let x = BinaryVector::from_active(2, [0, 1]);
        let zero = BinaryVector::zeros(2);
        for n in [10, 11, 500] {
            let r = shap_like(&lin, &x, &zero, n, 3).unwrap();
            assert_eq!(r.scores[&0], 2.0);
            assert_eq!(r.scores[&1], -1.0);
            assert_eq!(r.n_samples_used, n);
        }
    }

    #[test]
    fn shap_needs_a_coalition() {
        let lin = Linear::new(vec![2.0, -1.0], 0.0);
        let x = BinaryVector::from_active(2, [1]);
        assert_eq!(
            shap_like(&lin, &x, &x, 100, 0),
            Err(AttributionError::EmptyCoalition)
        );
        assert_eq!(
            exact_shapley(&lin, &x, &x),
            Err(AttributionError::EmptyCoalition)
        );
    }

    #[test]
    fn exact_on_linear_model_equals_weights() {
        let lin = Linear::new(vec![0.5, 1.5, -2.0, 4.0], 1.0);
        let x = BinaryVector::from_active(4, [0, 2, 3]);
        let r = exact_shapley(&lin, &x, &BinaryVector::zeros(4)).unwrap();
        assert_eq!(r.scores.len(), 3);
        for id in [0, 2, 3] {
            assert!((r.scores[&id] - lin.weights[id as usize]).abs() < 1e-12);
        }
        assert_eq!(r.ranking, vec![3, 2, 0]);
    }

    #[test]
    fn exact_on_pure_interaction() {
        // f(∅)=0, f(a)=f(b)=1, f(ab)=3
        let t = Table(vec![0.0, 1.0, 1.0, 3.0], 2);
        let r = exact_shapley(
            &t,
            &BinaryVector::from_active(2, [0, 1]),
            &BinaryVector::zeros(2),
        )
        .unwrap();
        assert_eq!(r.scores[&0], 1.5);
        assert_eq!(r.scores[&1], 1.5);
    }

    #[test]
    fn exact_efficiency_and_symmetry() {
        let d = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut table: Vec<f64> = (0..1 << d).map(|_| rng.random_range(-3.0..3.0)).collect();
        // make features 1 and 4 interchangeable
        for mask in 0..1usize << d {
            let swapped = (mask & !(1 << 1 | 1 << 4)) | (mask >> 1 & 1) << 4 | (mask >> 4 & 1) << 1;
            if swapped < mask {
                table[mask] = table[swapped];
            }
        }
        let t = Table(table, d);
        let x = BinaryVector::from_active(d, 0..d as u32);
        let zero = BinaryVector::zeros(d);
        let r = exact_shapley(&t, &x, &zero).unwrap();
        assert!((r.total() - (t.score(&x) - t.score(&zero))).abs() < 1e-9);
        assert!((r.scores[&1] - r.scores[&4]).abs() < 1e-9);
    }

    #[test]
    fn exact_refuses_large_coalitions() {
        let lin = Linear::new(vec![1.0; 16], 0.0);
        let x = BinaryVector::from_active(16, 0..16);
        assert_eq!(
            exact_shapley(&lin, &x, &BinaryVector::zeros(16)),
            Err(AttributionError::TooLarge(16))
        );
    }

    #[test]
    fn attribution_record_json() {
        let lin = Linear::new(vec![2.0, -1.0], 0.0);
        let x = BinaryVector::from_active(2, [0, 1]);
        let r = exact_shapley(&lin, &x, &BinaryVector::zeros(2)).unwrap();
        let json = serde_json::to_string(&AttributionRecord::new(3, Method::Shap, &r)).unwrap();
        assert_eq!(
            json,
            r#"{"profile_id":3,"method":"shap","scores":{"0":2.0,"1":-1.0},"ranking":[0,1]}"#
        );
    }
}
