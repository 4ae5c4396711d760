//! Squared-error gradient boosting with depth-capped trees over binary
//! features. Each internal node tests a single feature, so every feature has
//! exactly one candidate split and the split search is exact.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Predictor};
use crate::bits::{BinaryVector, FeatureId};
use crate::dataset::MarketDataset;
use crate::scalar::Scalar;

/// Minimum dataset size accepted by [`train_gbt`].
pub const MIN_TRAIN_PROFILES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Node<T> {
    /// Go to `absent` when the feature is 0 and `present` when it is 1.
    Split {
        feature: FeatureId,
        absent: u32,
        present: u32,
    },
    Leaf {
        value: T,
    },
}

/// Flat node array; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf(value: T) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    #[inline]
    pub fn eval(&self, x: &BinaryVector) -> T {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    absent,
                    present,
                } => i = if x.get(*feature) { *present } else { *absent } as usize,
            }
        }
    }

    pub fn features(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    fn validate(&self, dim: usize) -> Result<(), String> {
        let n = self.nodes.len();
        if n == 0 {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                absent,
                present,
            } = node
            {
                if *feature as usize >= dim {
                    return Err(format!("node {i} tests feature {feature} >= dim {dim}"));
                }
                // children always follow their parent, which also rules out cycles
                for &c in [absent, present] {
                    if c as usize <= i || c as usize >= n {
                        return Err(format!("node {i} has invalid child {c}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `score(x) = base_score + Σ_t learning_rate · tree_t(x)`, accumulated tree
/// by tree in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GbtModel<T> {
    pub dim: usize,
    pub base_score: T,
    pub learning_rate: T,
    pub trees: Vec<Tree<T>>,
}

impl<T: Scalar> GbtModel<T> {
    /// Scores after 0, 1, ..., n trees.
    pub fn staged_scores<'a>(&'a self, x: &'a BinaryVector) -> impl Iterator<Item = T> + 'a {
        std::iter::once(self.base_score).chain(self.trees.iter().scan(self.base_score, |acc, t| {
            *acc = *acc + self.learning_rate * t.eval(x);
            Some(*acc)
        }))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(self.dim).map_err(|e| format!("tree {i}: {e}"))?;
        }
        Ok(())
    }
}

impl<T: Scalar> Predictor<T> for GbtModel<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &BinaryVector) -> T {
        self.trees.iter().fold(self.base_score, |acc, t| {
            acc + self.learning_rate * t.eval(x)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Smallest number of samples allowed on either side of a split.
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 1,
        }
    }
}

impl GbtParams {
    fn check(&self) -> Result<(), ModelError> {
        if self.n_trees == 0 {
            return Err(ModelError::InvalidParameter(
                "n_trees must be at least 1".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(ModelError::InvalidParameter(
                "max_depth must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidParameter(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fits a boosted ensemble to `(rows, targets)`. Each row lists its active
/// features.
pub fn fit_gbt<T: Scalar>(
    dim: usize,
    rows: &[Vec<FeatureId>],
    targets: &[T],
    params: &GbtParams,
) -> Result<GbtModel<T>, ModelError> {
    params.check()?;
    if rows.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if rows.len() != targets.len() {
        return Err(ModelError::Shape {
            expected: rows.len(),
            actual: targets.len(),
        });
    }
    if let Some(bad) = rows.iter().flatten().find(|&&f| f as usize >= dim) {
        return Err(ModelError::InvalidParameter(format!(
            "feature {bad} out of range for dimension {dim}"
        )));
    }

    let lr = T::of(params.learning_rate);
    let base_score = targets.iter().copied().sum::<T>() / T::from_count(targets.len());
    let mut model = GbtModel {
        dim,
        base_score,
        learning_rate: lr,
        trees: Vec::with_capacity(params.n_trees),
    };
    let mut pred = vec![base_score; rows.len()];
    let mut builder = TreeBuilder::new(dim, rows, params);
    for _ in 0..params.n_trees {
        let residual: Vec<T> = targets.iter().zip(&pred).map(|(&y, &p)| y - p).collect();
        let (tree, leaf_of) = builder.build(&residual);
        for (p, &leaf) in pred.iter_mut().zip(&leaf_of) {
            if let Node::Leaf { value } = tree.nodes[leaf as usize] {
                *p = *p + lr * value;
            }
        }
        model.trees.push(tree);
    }
    Ok(model)
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<FeatureId>],
    params: &'a GbtParams,
    // scratch, indexed by feature
    sum_present: Vec<f64>,
    count_present: Vec<usize>,
    touched: Vec<FeatureId>,
}

impl<'a> TreeBuilder<'a> {
    fn new(dim: usize, rows: &'a [Vec<FeatureId>], params: &'a GbtParams) -> Self {
        Self {
            rows,
            params,
            sum_present: vec![0.0; dim],
            count_present: vec![0; dim],
            touched: Vec::new(),
        }
    }

    /// Returns the tree and, per row, the index of the leaf it lands in.
    fn build<T: Scalar>(&mut self, residual: &[T]) -> (Tree<T>, Vec<u32>) {
        let mut nodes = Vec::new();
        let mut leaf_of = vec![0u32; self.rows.len()];
        let all: Vec<u32> = (0..self.rows.len() as u32).collect();
        // (node index, samples, depth)
        let mut stack = vec![(0usize, all, 0usize)];
        nodes.push(Node::Leaf { value: T::zero() });
        while let Some((at, samples, depth)) = stack.pop() {
            let split = if depth < self.params.max_depth {
                self.best_split(&samples, residual)
            } else {
                None
            };
            match split {
                Some(feature) => {
                    let (present, absent): (Vec<u32>, Vec<u32>) = samples
                        .into_iter()
                        .partition(|&i| self.rows[i as usize].binary_search(&feature).is_ok());
                    let a = nodes.len();
                    nodes.push(Node::Leaf { value: T::zero() });
                    nodes.push(Node::Leaf { value: T::zero() });
                    nodes[at] = Node::Split {
                        feature,
                        absent: a as u32,
                        present: a as u32 + 1,
                    };
                    stack.push((a + 1, present, depth + 1));
                    stack.push((a, absent, depth + 1));
                }
                None => {
                    let value = mean(samples.iter().map(|&i| residual[i as usize]));
                    nodes[at] = Node::Leaf { value };
                    for &i in &samples {
                        leaf_of[i as usize] = at as u32;
                    }
                }
            }
        }
        (Tree { nodes }, leaf_of)
    }

    /// Feature with the largest squared-error reduction; ties go to the
    /// lowest feature id. `None` when no split improves the fit.
    fn best_split<T: Scalar>(&mut self, samples: &[u32], residual: &[T]) -> Option<FeatureId> {
        let n = samples.len();
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let mut total = 0.0;
        for &i in samples {
            let r = residual[i as usize].as_f64();
            total += r;
            for &f in &self.rows[i as usize] {
                if self.count_present[f as usize] == 0 {
                    self.touched.push(f);
                }
                self.count_present[f as usize] += 1;
                self.sum_present[f as usize] += r;
            }
        }
        self.touched.sort_unstable();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, FeatureId)> = None;
        for &f in &self.touched {
            let n_p = self.count_present[f as usize];
            let n_a = n - n_p;
            if n_p >= min_leaf && n_a >= min_leaf {
                let s_p = self.sum_present[f as usize];
                let s_a = total - s_p;
                let gain = s_p * s_p / n_p as f64 + s_a * s_a / n_a as f64 - parent;
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, f));
                }
            }
        }
        for &f in &self.touched {
            self.count_present[f as usize] = 0;
            self.sum_present[f as usize] = 0.0;
        }
        self.touched.clear();
        // gains this small are rounding noise from cancelling sums
        let tolerance = 1e-12 * (1.0 + parent.abs());
        best.filter(|&(g, _)| g > tolerance).map(|(_, f)| f)
    }
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>) -> T {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        T::zero()
    } else {
        sum / T::from_count(n)
    }
}

/// A trained model with its held-out evaluation and the split it used.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub model: GbtModel<T>,
    pub test_rmse: f64,
    /// Indices into `dataset.profiles`.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffles the profiles with `seed`, fits on the first `train_fraction` of
/// them and reports RMSE on the rest.
pub fn train_gbt<T: Scalar>(
    dataset: &MarketDataset,
    params: &GbtParams,
    train_fraction: f64,
    seed: u64,
) -> Result<TrainedModel<T>, ModelError> {
    let n = dataset.profiles.len();
    if n < MIN_TRAIN_PROFILES {
        return Err(ModelError::TooFewSamples {
            required: MIN_TRAIN_PROFILES,
            got: n,
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut train_indices = order[..n_train].to_vec();
    let mut test_indices = order[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    let rows: Vec<Vec<FeatureId>> = train_indices
        .iter()
        .map(|&i| dataset.profiles[i].skills.clone())
        .collect();
    let targets: Vec<T> = train_indices
        .iter()
        .map(|&i| T::from_u32(dataset.profiles[i].label).expect("label fits the scalar"))
        .collect();
    let model = fit_gbt(dataset.dim(), &rows, &targets, params)?;

    let sq: f64 = test_indices
        .iter()
        .map(|&i| {
            let p = &dataset.profiles[i];
            let err = model.score(&p.features(dataset.dim())).as_f64() - p.label as f64;
            err * err
        })
        .sum();
    Ok(TrainedModel {
        model,
        test_rmse: (sq / test_indices.len() as f64).sqrt(),
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        generate_universe, job_reach, CandidateProfile, JobPosting, UniverseSizes,
    };

    fn two_feature_dataset(jobs: Vec<JobPosting>) -> MarketDataset {
        let universe = generate_universe(
            UniverseSizes {
                competency: 2,
                study: 0,
                study_area: 0,
                language: 0,
            },
            0,
        )
        .unwrap();
        // every point of {0,1}^2, twice
        let profiles = (0..8u32)
            .map(|i| {
                let skills: Vec<u32> = (0..2).filter(|b| (i % 4) >> b & 1 == 1).collect();
                let x = BinaryVector::from_active(2, skills.iter().copied());
                CandidateProfile {
                    id: i,
                    label: job_reach(&x, &jobs, 1.0).unwrap(),
                    skills,
                }
            })
            .collect();
        MarketDataset {
            universe,
            jobs,
            profiles,
            fulfillment_fraction: 1.0,
        }
    }

    #[test]
    fn constant_target_is_reproduced() {
        // no jobs, so every label is 0
        let d = two_feature_dataset(vec![]);
        let trained = train_gbt::<f64>(&d, &GbtParams::default(), 0.75, 3).unwrap();
        for p in &d.profiles {
            assert_eq!(trained.model.score(&p.features(2)), 0.0);
        }
        assert_eq!(trained.test_rmse, 0.0);
    }

    #[test]
    fn recovers_five_times_feature_a() {
        // five jobs that each require only skill a: label = 5·x_a
        let jobs = (0..5)
            .map(|j| JobPosting::new(j, vec![0]).unwrap())
            .collect();
        let d = two_feature_dataset(jobs);
        let rows: Vec<_> = d.profiles.iter().map(|p| p.skills.clone()).collect();
        let y: Vec<f64> = d.profiles.iter().map(|p| p.label as f64).collect();
        assert_eq!(y[..4], [0.0, 5.0, 0.0, 5.0]);
        let model = fit_gbt(2, &rows, &y, &GbtParams::default()).unwrap();
        for (p, &t) in d.profiles.iter().zip(&y) {
            assert!((model.score(&p.features(2)) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn fits_in_f32_too() {
        let rows = vec![vec![], vec![0], vec![1], vec![0, 1]];
        let y = vec![0.0f32, 1.0, 2.0, 3.0];
        let model = fit_gbt(2, &rows, &y, &GbtParams::default()).unwrap();
        let x = BinaryVector::from_active(2, [0, 1]);
        assert!((model.score(&x) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn too_few_samples() {
        let mut d = two_feature_dataset(vec![]);
        d.profiles.truncate(7);
        assert!(matches!(
            train_gbt::<f64>(&d, &GbtParams::default(), 0.75, 0),
            Err(ModelError::TooFewSamples { got: 7, .. })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        let d = two_feature_dataset(vec![]);
        let bad = [
            GbtParams {
                n_trees: 0,
                ..Default::default()
            },
            GbtParams {
                max_depth: 0,
                ..Default::default()
            },
            GbtParams {
                learning_rate: -1.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(train_gbt::<f64>(&d, &p, 0.75, 0).is_err());
        }
        assert!(train_gbt::<f64>(&d, &GbtParams::default(), 1.0, 0).is_err());
    }

    #[test]
    fn staged_scores_follow_boosting_recurrence() {
        let rows = vec![vec![], vec![0], vec![1], vec![0, 1], vec![2], vec![0, 2]];
        let y = vec![0.0, 2.0, 1.0, 4.0, -1.0, 0.5];
        let params = GbtParams {
            n_trees: 25,
            max_depth: 2,
            ..Default::default()
        };
        let model = fit_gbt(3, &rows, &y, &params).unwrap();
        for r in &rows {
            let x = BinaryVector::from_active(3, r.iter().copied());
            let staged: Vec<f64> = model.staged_scores(&x).collect();
            assert_eq!(staged.len(), 26);
            for (t, tree) in model.trees.iter().enumerate() {
                assert_eq!(
                    staged[t + 1],
                    staged[t] + model.learning_rate * tree.eval(&x)
                );
            }
            assert_eq!(*staged.last().unwrap(), model.score(&x));
        }
    }

    #[test]
    fn depth_is_capped() {
        let rows: Vec<Vec<u32>> = (0..32u32)
            .map(|i| (0..5).filter(|b| i >> b & 1 == 1).collect())
            .collect();
        let y: Vec<f64> = (0..32).map(|i| (i * 7 % 11) as f64).collect();
        let params = GbtParams {
            n_trees: 5,
            max_depth: 2,
            ..Default::default()
        };
        let model = fit_gbt(5, &rows, &y, &params).unwrap();
        for t in &model.trees {
            assert!(t.nodes.len() <= 7);
        }
        model.validate().unwrap();
    }
}
