//! Greedy best-first counterfactual search over binary feature toggles.
//!
//! Starting from the factual instance, the search keeps a frontier of toggle
//! sets ordered by how far their score still is from the threshold (plus a
//! tiny cost term), expands the most promising set by one more toggle, and
//! stops at the first generated set whose class is the target. That set is
//! then pruned until no single toggle can be dropped.
//!
//! Removal mode toggles present features off and explains a decision;
//! addition mode toggles absent features on and gives guidance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinaryVector, FeatureId};
use crate::model::{Class, ModelError, Predictor, ThresholdClassifier};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Removal,
    Addition,
}

impl Mode {
    pub fn direction(self) -> Direction {
        match self {
            Mode::Removal => Direction::Remove,
            Mode::Addition => Direction::Add,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "1->0")]
    Remove,
    #[serde(rename = "0->1")]
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Change {
    pub skill_id: FeatureId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No feature may be toggled in this mode once locks are applied.
    NoCandidates,
    /// Every reachable toggle set up to `max_set_size` was tried.
    Exhausted,
    ExpansionBudget,
    TimeBudget,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no counterfactual found ({reason:?}) after {expansions} expansions; best score {best_score}")]
    NoCounterfactualFound {
        reason: StopReason,
        expansions: usize,
        best_score: f64,
        elapsed: Duration,
    },
    #[error("changes do not move the instance into the target class")]
    NotACounterfactual,
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub mode: Mode,
    pub target_class: Class,
    pub max_set_size: usize,
    pub max_expansions: usize,
    pub time_budget: Duration,
    /// Addition mode only: the absent features kept as candidates, ranked by
    /// the score gain of toggling each one alone.
    pub candidate_pool: usize,
    pub locked_features: BTreeSet<FeatureId>,
    /// Per-feature cost (≥ 1); unlisted features cost 1.
    pub feature_costs: BTreeMap<FeatureId, f64>,
}

impl SearchConfig {
    /// Explanations: remove present features until the decision turns
    /// unfavorable.
    pub fn removal() -> Self {
        Self {
            mode: Mode::Removal,
            target_class: Class::Unfavorable,
            ..Self::addition()
        }
    }

    /// Guidance: add absent features until the decision turns favorable.
    pub fn addition() -> Self {
        Self {
            mode: Mode::Addition,
            target_class: Class::Favorable,
            max_set_size: 10,
            max_expansions: 50_000,
            time_budget: Duration::from_secs(120),
            candidate_pool: 200,
            locked_features: BTreeSet::new(),
            feature_costs: BTreeMap::new(),
        }
    }

    pub fn with_locks(mut self, locked: impl IntoIterator<Item = FeatureId>) -> Self {
        self.locked_features.extend(locked);
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.max_set_size == 0 {
            return Err(SearchError::InvalidConfig(
                "max_set_size must be at least 1".into(),
            ));
        }
        if self.mode == Mode::Addition && self.candidate_pool < self.max_set_size {
            return Err(SearchError::InvalidConfig(format!(
                "candidate_pool ({}) must be at least max_set_size ({})",
                self.candidate_pool, self.max_set_size
            )));
        }
        if let Some((id, c)) = self
            .feature_costs
            .iter()
            .find(|(_, &c)| !(c >= 1.0 && c.is_finite()))
        {
            return Err(SearchError::InvalidConfig(format!(
                "cost of feature {id} is {c}; costs must be finite and at least 1"
            )));
        }
        Ok(())
    }

    fn cost(&self, id: FeatureId) -> f64 {
        self.feature_costs.get(&id).copied().unwrap_or(1.0)
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::addition()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual<T> {
    /// Toggles in the order the search added them.
    pub changes: Vec<Change>,
    pub score_before: T,
    pub score_after: T,
    pub class_before: Class,
    pub class_after: Class,
    pub expansions_used: usize,
    pub elapsed: Duration,
}

impl<T> Counterfactual<T> {
    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.changes.iter().map(|c| c.skill_id)
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

/// Applies toggles to a copy of `x`.
pub fn apply_changes(x: &BinaryVector, changes: &[Change]) -> BinaryVector {
    let mut out = x.clone();
    for c in changes {
        out.set(c.skill_id, c.direction == Direction::Add);
    }
    out
}

/// Features in the order the search included them.
pub fn change_ranking<T>(cf: &Counterfactual<T>) -> Vec<FeatureId> {
    cf.ids().collect()
}

/// Drops toggles that are not needed to reach `target`, scanning from the
/// most recently included one and repeating until nothing can be dropped.
/// The result satisfies: removing any single remaining toggle leaves `x`
/// outside `target`.
pub fn irreducibility_pass<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    x: &BinaryVector,
    changes: &[Change],
    target: Class,
) -> Result<Vec<Change>, SearchError>
where
    T: Scalar,
    P: Predictor<T>,
{
    classifier.check_dim(x)?;
    let reaches = |set: &[Change]| classifier.classify_unchecked(&apply_changes(x, set)) == target;
    if !reaches(changes) {
        return Err(SearchError::NotACounterfactual);
    }
    let mut current = changes.to_vec();
    loop {
        let mut dropped = false;
        let mut i = current.len();
        while i > 0 {
            i -= 1;
            let mut trial = current.clone();
            trial.remove(i);
            if reaches(&trial) {
                current = trial;
                dropped = true;
            }
        }
        if !dropped {
            return Ok(current);
        }
    }
}

struct Frontier<T> {
    /// Remaining distance to the threshold plus the cost term.
    key: T,
    cost: f64,
    sorted: Box<[FeatureId]>,
    order: Box<[FeatureId]>,
}

impl<T: Scalar> Ord for Frontier<T> {
    // BinaryHeap pops the maximum, so "greater" means "expand first".
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .partial_cmp(&self.key)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.cost.total_cmp(&self.cost))
            .then_with(|| other.sorted.cmp(&self.sorted))
    }
}

impl<T: Scalar> PartialOrd for Frontier<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> PartialEq for Frontier<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Frontier<T> {}

/// Candidate toggles for `x` under `config`, by ascending id.
fn candidates<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    x: &BinaryVector,
    config: &SearchConfig,
    score_before: T,
) -> Vec<FeatureId>
where
    T: Scalar,
    P: Predictor<T>,
{
    let unlocked = |id: &FeatureId| !config.locked_features.contains(id);
    let mut pool: Vec<FeatureId> = match config.mode {
        Mode::Removal => x.active().filter(unlocked).collect(),
        Mode::Addition => {
            let toward_target = |s: T| match config.target_class {
                Class::Favorable => s - score_before,
                Class::Unfavorable => score_before - s,
            };
            let mut scratch = x.clone();
            let mut ranked: Vec<(T, FeatureId)> = (0..x.dim() as FeatureId)
                .filter(|&id| !x.get(id) && unlocked(&id))
                .map(|id| {
                    scratch.set(id, true);
                    let gain = toward_target(classifier.score(&scratch));
                    scratch.set(id, false);
                    (gain, id)
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            ranked
                .into_iter()
                .take(config.candidate_pool)
                .map(|(_, id)| id)
                .collect()
        }
    };
    pool.sort_unstable();
    pool
}

/// Finds a small irreducible set of toggles that moves `x` into
/// `config.target_class`. Returns an empty counterfactual when `x` is
/// already there.
pub fn find_counterfactual<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    x: &BinaryVector,
    config: &SearchConfig,
) -> Result<Counterfactual<T>, SearchError>
where
    T: Scalar,
    P: Predictor<T>,
{
    let start = Instant::now();
    classifier.check_dim(x)?;
    config.validate()?;

    let score_before = classifier.score(x);
    let class_before = classifier.class_of(score_before);
    let target = config.target_class;
    if class_before == target {
        return Ok(Counterfactual {
            changes: Vec::new(),
            score_before,
            score_after: score_before,
            class_before,
            class_after: class_before,
            expansions_used: 0,
            elapsed: start.elapsed(),
        });
    }

    let tau = classifier.threshold;
    let gap = |s: T| match target {
        Class::Favorable => tau - s,
        Class::Unfavorable => s - tau,
    };
    let lambda = T::of(1e-6) * (tau.abs() + T::one());
    let direction = config.mode.direction();
    let to_changes = |ids: &[FeatureId]| -> Vec<Change> {
        ids.iter()
            .map(|&skill_id| Change {
                skill_id,
                direction,
            })
            .collect()
    };

    let pool = candidates(classifier, x, config, score_before);
    let mut best_score = score_before;
    let not_found = |reason, expansions, best: T| SearchError::NoCounterfactualFound {
        reason,
        expansions,
        best_score: best.as_f64(),
        elapsed: start.elapsed(),
    };
    if pool.is_empty() {
        return Err(not_found(StopReason::NoCandidates, 0, best_score));
    }

    let mut visited: HashSet<Box<[FeatureId]>> = HashSet::new();
    let mut frontier = BinaryHeap::new();
    frontier.push(Frontier {
        key: gap(score_before),
        cost: 0.0,
        sorted: Box::new([]),
        order: Box::new([]),
    });
    let mut expansions = 0usize;

    while let Some(node) = frontier.pop() {
        if node.sorted.len() >= config.max_set_size {
            continue;
        }
        if expansions >= config.max_expansions {
            return Err(not_found(
                StopReason::ExpansionBudget,
                expansions,
                best_score,
            ));
        }
        if start.elapsed() > config.time_budget {
            return Err(not_found(StopReason::TimeBudget, expansions, best_score));
        }
        expansions += 1;

        // Every child is scored; when several flip, the best-ranked one wins.
        let mut flipping: Option<Frontier<T>> = None;
        for &c in &pool {
            let Err(pos) = node.sorted.binary_search(&c) else {
                continue;
            };
            let mut sorted = Vec::with_capacity(node.sorted.len() + 1);
            sorted.extend_from_slice(&node.sorted[..pos]);
            sorted.push(c);
            sorted.extend_from_slice(&node.sorted[pos..]);
            let sorted = sorted.into_boxed_slice();
            if visited.contains(&sorted) {
                continue;
            }
            let mut order = Vec::with_capacity(node.order.len() + 1);
            order.extend_from_slice(&node.order);
            order.push(c);

            let score = classifier.score(&x.toggled(sorted.iter()));
            if gap(score) < gap(best_score) {
                best_score = score;
            }
            let cost = node.cost + config.cost(c);
            let child = Frontier {
                key: gap(score) + lambda * T::of(cost),
                cost,
                sorted,
                order: order.into_boxed_slice(),
            };
            if classifier.class_of(score) == target {
                if flipping.as_ref().is_none_or(|f| child > *f) {
                    flipping = Some(child);
                }
                continue;
            }
            visited.insert(child.sorted.clone());
            frontier.push(child);
        }
        if let Some(found) = flipping {
            let changes = irreducibility_pass(classifier, x, &to_changes(&found.order), target)?;
            let score_after = classifier.score(&apply_changes(x, &changes));
            return Ok(Counterfactual {
                changes,
                score_before,
                score_after,
                class_before,
                class_after: classifier.class_of(score_after),
                expansions_used: expansions,
                elapsed: start.elapsed(),
            });
        }
    }
    Err(not_found(StopReason::Exhausted, expansions, best_score))
}

/// Serialized outcome of one search, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub profile_id: u32,
    pub mode: Mode,
    pub changes: Vec<Change>,
    pub score_before: f64,
    pub score_after: f64,
    pub expansions: usize,
    /// Wall-clock seconds. Left out of files that must be reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Found,
    NotFound,
    AlreadyTarget,
}

impl CounterfactualRecord {
    /// Folds a search outcome into a record. Errors other than
    /// "not found" are returned unchanged.
    pub fn from_outcome<T: Scalar>(
        profile_id: u32,
        mode: Mode,
        score_before: T,
        outcome: Result<Counterfactual<T>, SearchError>,
    ) -> Result<Self, SearchError> {
        match outcome {
            Ok(cf) => Ok(Self {
                profile_id,
                mode,
                status: if cf.is_empty() {
                    Status::AlreadyTarget
                } else {
                    Status::Found
                },
                changes: cf.changes,
                score_before: cf.score_before.as_f64(),
                score_after: cf.score_after.as_f64(),
                expansions: cf.expansions_used,
                elapsed_s: Some(cf.elapsed.as_secs_f64()),
            }),
            Err(SearchError::NoCounterfactualFound {
                expansions,
                best_score,
                elapsed,
                ..
            }) => Ok(Self {
                profile_id,
                mode,
                changes: Vec::new(),
                score_before: score_before.as_f64(),
                score_after: best_score,
                expansions,
                elapsed_s: Some(elapsed.as_secs_f64()),
                status: Status::NotFound,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.changes.iter().map(|c| c.skill_id)
    }

    pub fn without_timing(mut self) -> Self {
        self.elapsed_s = None;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearPredictor;

    const A: FeatureId = 0;
    const B: FeatureId = 1;
    const C: FeatureId = 2;

    fn clf(weights: &[f64], tau: f64) -> ThresholdClassifier<LinearPredictor<f64>, f64> {
        ThresholdClassifier::new(LinearPredictor::new(weights.to_vec(), 0.0), tau)
    }

    fn removes(ids: &[FeatureId]) -> Vec<Change> {
        ids.iter()
            .map(|&skill_id| Change {
                skill_id,
                direction: Direction::Remove,
            })
            .collect()
    }

    fn adds(ids: &[FeatureId]) -> Vec<Change> {
        ids.iter()
            .map(|&skill_id| Change {
                skill_id,
                direction: Direction::Add,
            })
            .collect()
    }

    /// Every removal subset of `active` (as bitmask-selected id lists).
    fn flipping_subsets(
        c: &ThresholdClassifier<LinearPredictor<f64>, f64>,
        x: &BinaryVector,
    ) -> Vec<Vec<FeatureId>> {
        let active: Vec<_> = x.active().collect();
        (1u32..1 << active.len())
            .map(|m| {
                active
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| m >> i & 1 == 1)
                    .map(|(_, &id)| id)
                    .collect::<Vec<_>>()
            })
            .filter(|s| c.classify_unchecked(&x.toggled(s.iter())) == Class::Unfavorable)
            .collect()
    }

    #[test]
    fn removal_single_feature() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        let flips = flipping_subsets(&c, &x);
        assert_eq!(
            flips.iter().filter(|s| s.len() == 1).collect::<Vec<_>>(),
            vec![&vec![A]]
        );

        let cf = find_counterfactual(&c, &x, &SearchConfig::removal()).unwrap();
        assert_eq!(cf.changes, removes(&[A]));
        assert_eq!(cf.score_after, 4.0);
        assert_eq!(cf.class_before, Class::Favorable);
        assert_eq!(cf.class_after, Class::Unfavorable);
    }

    #[test]
    fn removal_pair_tie_breaks_lexicographically() {
        let c = clf(&[3.0, 3.0, 3.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        let flips = flipping_subsets(&c, &x);
        assert!(flips.iter().all(|s| s.len() >= 2));
        assert_eq!(flips.iter().filter(|s| s.len() == 2).count(), 3);

        let cf = find_counterfactual(&c, &x, &SearchConfig::removal()).unwrap();
        assert_eq!(cf.changes, removes(&[A, B]));
        assert_eq!(cf.score_after, 3.0);
    }

    #[test]
    fn addition_single_feature() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        let cf = find_counterfactual(&c, &x, &SearchConfig::addition()).unwrap();
        assert_eq!(cf.changes, adds(&[A]));
        assert_eq!(cf.score_after, 6.0);
    }

    #[test]
    fn already_in_target_class() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        let cf = find_counterfactual(&c, &x, &SearchConfig::removal()).unwrap();
        assert!(cf.is_empty());
        assert_eq!(cf.score_after, cf.score_before);
        assert_eq!(cf.class_after, Class::Unfavorable);
    }

    #[test]
    fn locked_feature_leaves_no_counterfactual() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        let config = SearchConfig::addition().with_locks([A]);
        match find_counterfactual(
            &c,
            &x,
            &SearchConfig {
                candidate_pool: 10,
                ..config
            },
        ) {
            Err(SearchError::NoCounterfactualFound {
                reason: StopReason::Exhausted,
                best_score,
                ..
            }) => assert_eq!(best_score, 4.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn everything_locked() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        let config = SearchConfig::removal().with_locks([A, B, C]);
        assert!(matches!(
            find_counterfactual(&c, &x, &config),
            Err(SearchError::NoCounterfactualFound {
                reason: StopReason::NoCandidates,
                ..
            })
        ));
    }

    #[test]
    fn expansion_budget_is_reported() {
        let c = clf(&[1.0; 8], 0.5);
        let x = BinaryVector::from_active(8, 0..8);
        let config = SearchConfig {
            max_expansions: 3,
            ..SearchConfig::removal()
        };
        match find_counterfactual(&c, &x, &config) {
            Err(SearchError::NoCounterfactualFound {
                reason: StopReason::ExpansionBudget,
                expansions,
                ..
            }) => assert_eq!(expansions, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_set_size_bounds_the_search() {
        let c = clf(&[1.0; 6], 0.5);
        let x = BinaryVector::from_active(6, 0..6);
        let config = SearchConfig {
            max_set_size: 5,
            ..SearchConfig::removal()
        };
        assert!(matches!(
            find_counterfactual(&c, &x, &config),
            Err(SearchError::NoCounterfactualFound {
                reason: StopReason::Exhausted,
                ..
            })
        ));
        let config = SearchConfig {
            max_set_size: 6,
            ..SearchConfig::removal()
        };
        assert_eq!(find_counterfactual(&c, &x, &config).unwrap().len(), 6);
    }

    #[test]
    fn costs_break_ties() {
        let c = clf(&[3.0, 3.0, 3.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        let mut config = SearchConfig::removal();
        config.feature_costs.insert(A, 5.0);
        let cf = find_counterfactual(&c, &x, &config).unwrap();
        assert_eq!(cf.changes, removes(&[B, C]));
    }

    #[test]
    fn invalid_configs() {
        let c = clf(&[1.0], 0.0);
        let x = BinaryVector::zeros(1);
        let bad = [
            SearchConfig {
                max_set_size: 0,
                ..SearchConfig::addition()
            },
            SearchConfig {
                candidate_pool: 3,
                ..SearchConfig::addition()
            },
            SearchConfig {
                feature_costs: [(0, 0.5)].into(),
                ..SearchConfig::addition()
            },
        ];
        for config in bad {
            assert!(matches!(
                find_counterfactual(&c, &x, &config),
                Err(SearchError::InvalidConfig(_))
            ));
        }
        assert!(matches!(
            find_counterfactual(&c, &BinaryVector::zeros(2), &SearchConfig::addition()),
            Err(SearchError::Model(ModelError::Shape { .. }))
        ));
    }

    #[test]
    fn prune_drops_unneeded_toggle() {
        let c = clf(&[5.0, 3.0], 4.0);
        let x = BinaryVector::from_active(2, [A, B]);
        assert_eq!(
            c.classify_unchecked(&x.toggled([A].iter())),
            Class::Unfavorable
        );
        assert_eq!(
            c.classify_unchecked(&x.toggled([B].iter())),
            Class::Favorable
        );
        let pruned = irreducibility_pass(&c, &x, &removes(&[A, B]), Class::Unfavorable).unwrap();
        assert_eq!(pruned, removes(&[A]));
    }

    #[test]
    fn prune_keeps_irreducible_set() {
        let c = clf(&[3.0, 3.0, 3.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        let set = removes(&[B, C]);
        assert_eq!(
            irreducibility_pass(&c, &x, &set, Class::Unfavorable).unwrap(),
            set
        );
    }

    #[test]
    fn prune_empty_on_flipped_instance() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        assert!(irreducibility_pass(&c, &x, &[], Class::Unfavorable)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn prune_rejects_non_counterfactual() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [A, B, C]);
        assert!(matches!(
            irreducibility_pass(&c, &x, &removes(&[C]), Class::Unfavorable),
            Err(SearchError::NotACounterfactual)
        ));
    }

    #[test]
    fn ranking_projects_inclusion_order() {
        let cf = Counterfactual {
            changes: adds(&[4, 1, 9]),
            score_before: 0.0,
            score_after: 1.0,
            class_before: Class::Unfavorable,
            class_after: Class::Favorable,
            expansions_used: 3,
            elapsed: Duration::ZERO,
        };
        assert_eq!(change_ranking(&cf), vec![4, 1, 9]);
        let empty = Counterfactual {
            changes: vec![],
            ..cf
        };
        assert!(change_ranking(&empty).is_empty());
    }

    #[test]
    fn record_json_shape() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        let out = find_counterfactual(&c, &x, &SearchConfig::addition());
        let rec = CounterfactualRecord::from_outcome(7, Mode::Addition, 1.0, out)
            .unwrap()
            .without_timing();
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"profile_id":7,"mode":"addition","changes":[{"skill_id":0,"direction":"0->1"}],"score_before":1.0,"score_after":6.0,"expansions":1,"status":"found"}"#
        );
        let back: CounterfactualRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn record_for_missing_counterfactual() {
        let c = clf(&[5.0, 3.0, 1.0], 4.0);
        let x = BinaryVector::from_active(3, [C]);
        let config = SearchConfig {
            candidate_pool: 10,
            ..SearchConfig::addition().with_locks([A])
        };
        let out = find_counterfactual(&c, &x, &config);
        let rec = CounterfactualRecord::from_outcome(1, Mode::Addition, 1.0, out).unwrap();
        assert_eq!(rec.status, Status::NotFound);
        assert!(rec.changes.is_empty());
    }
}
