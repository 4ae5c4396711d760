//! Evaluation protocols: per-instance sequential flipping, population-wide
//! top-k flipping, frequency tables, and sparsity/timing summaries.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinaryVector, FeatureId};
use crate::dataset::{JobPosting, SkillUniverse};
use crate::model::{Class, Predictor, ThresholdClassifier};
use crate::scalar::Scalar;
use crate::search::{CounterfactualRecord, Status};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("k_max must be at least 1")]
    InvalidK,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("record for profile {0} carries no timing")]
    MissingTiming(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Percentage of instances flipped to favorable by step k, for k = 1..=K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipCurve {
    pub method: String,
    /// `flip_pct[k - 1]` is the value at k.
    pub flip_pct: Vec<f64>,
}

impl FlipCurve {
    pub fn at(&self, k: usize) -> f64 {
        self.flip_pct[k - 1]
    }

    pub fn k_max(&self) -> usize {
        self.flip_pct.len()
    }

    pub fn is_monotone(&self) -> bool {
        self.flip_pct.windows(2).all(|w| w[0] <= w[1])
    }

    /// True when `self` is at least `other` at every shared k.
    pub fn dominates(&self, other: &FlipCurve) -> bool {
        self.flip_pct
            .iter()
            .zip(&other.flip_pct)
            .all(|(a, b)| a >= b)
    }
}

/// Population standard deviation throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub mean_changes: f64,
    pub std_changes: f64,
    pub mean_active: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub max_s: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_batch<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    instances: &[BinaryVector],
    k_max: usize,
) -> Result<(), EvalError>
where
    T: Scalar,
    P: Predictor<T>,
{
    if instances.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    if k_max == 0 {
        return Err(EvalError::InvalidK);
    }
    for (i, x) in instances.iter().enumerate() {
        match classifier.classify(x) {
            Ok(Class::Unfavorable) => {}
            Ok(Class::Favorable) => {
                return Err(EvalError::Precondition(format!(
                    "instance {i} is already favorable"
                )))
            }
            Err(e) => return Err(EvalError::Precondition(format!("instance {i}: {e}"))),
        }
    }
    Ok(())
}

fn check_distinct(ranking: &[FeatureId], dim: usize, what: &str) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for &id in ranking {
        if id as usize >= dim {
            return Err(EvalError::Precondition(format!(
                "{what}: feature {id} out of range"
            )));
        }
        if !seen.insert(id) {
            return Err(EvalError::Precondition(format!(
                "{what}: feature {id} repeated"
            )));
        }
    }
    Ok(())
}

fn curve(
    method: &str,
    flipped_at: impl Iterator<Item = Option<usize>>,
    n: usize,
    k_max: usize,
) -> FlipCurve {
    let mut counts = vec![0usize; k_max];
    for k in flipped_at.flatten() {
        counts[k - 1] += 1;
    }
    let mut running = 0;
    let flip_pct = counts
        .into_iter()
        .map(|c| {
            running += c;
            100.0 * running as f64 / n as f64
        })
        .collect();
    FlipCurve {
        method: method.to_string(),
        flip_pct,
    }
}

/// For each method, inverts the first `min(k, len)` ranked features of each
/// instance and records the first k at which it turns favorable. An
/// instance flipped at k stays counted for every larger k.
///
/// `rankings` holds one `(method, per-instance rankings)` entry per method.
pub fn sequential_flip_eval<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    instances: &[BinaryVector],
    rankings: &[(String, Vec<Vec<FeatureId>>)],
    k_max: usize,
) -> Result<Vec<FlipCurve>, EvalError>
where
    T: Scalar,
    P: Predictor<T>,
{
    check_batch(classifier, instances, k_max)?;
    let dim = classifier.dim();
    rankings
        .iter()
        .map(|(method, per_instance)| {
            if per_instance.len() != instances.len() {
                return Err(EvalError::Precondition(format!(
                    "{method}: {} rankings for {} instances",
                    per_instance.len(),
                    instances.len()
                )));
            }
            let mut flipped = Vec::with_capacity(instances.len());
            for (x, ranking) in instances.iter().zip(per_instance) {
                check_distinct(ranking, dim, method)?;
                let mut z = x.clone();
                let mut at = None;
                for (k, &f) in ranking.iter().take(k_max).enumerate() {
                    z.toggle(f);
                    if classifier.classify_unchecked(&z) == Class::Favorable {
                        at = Some(k + 1);
                        break;
                    }
                }
                flipped.push(at);
            }
            Ok(curve(method, flipped.into_iter(), instances.len(), k_max))
        })
        .collect()
}

/// Sets the same top-k features to 1 in every instance, for k = 1..=k_max.
pub fn global_topk_flip_eval<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    instances: &[BinaryVector],
    method: &str,
    ranked_features: &[FeatureId],
    k_max: usize,
) -> Result<FlipCurve, EvalError>
where
    T: Scalar,
    P: Predictor<T>,
{
    check_batch(classifier, instances, k_max)?;
    check_distinct(ranked_features, classifier.dim(), method)?;
    let flipped = instances.iter().map(|x| {
        let mut z = x.clone();
        for (k, &f) in ranked_features.iter().take(k_max).enumerate() {
            z.set(f, true);
            if classifier.classify_unchecked(&z) == Class::Favorable {
                return Some(k + 1);
            }
        }
        None
    });
    Ok(curve(method, flipped, instances.len(), k_max))
}

/// Statistics over the `found` records; `instances[i]` is the factual
/// instance of `records[i]`.
pub fn sparsity_stats(
    records: &[CounterfactualRecord],
    instances: &[BinaryVector],
) -> Result<SparsityStats, EvalError> {
    if records.len() != instances.len() {
        return Err(EvalError::Precondition(format!(
            "{} records for {} instances",
            records.len(),
            instances.len()
        )));
    }
    let (sizes, active): (Vec<f64>, Vec<f64>) = records
        .iter()
        .zip(instances)
        .filter(|(r, _)| r.status == Status::Found)
        .map(|(r, x)| (r.changes.len() as f64, x.count_ones() as f64))
        .unzip();
    if sizes.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let (mean_changes, std_changes) = mean_std(&sizes);
    Ok(SparsityStats {
        mean_changes,
        std_changes,
        mean_active: mean_std(&active).0,
    })
}

/// Wall-clock statistics over the `found` records.
pub fn timing_stats(records: &[CounterfactualRecord]) -> Result<TimingStats, EvalError> {
    let times = records
        .iter()
        .filter(|r| r.status == Status::Found)
        .map(|r| r.elapsed_s.ok_or(EvalError::MissingTiming(r.profile_id)))
        .collect::<Result<Vec<f64>, _>>()?;
    if times.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let (mean_s, std_s) = mean_std(&times);
    Ok(TimingStats {
        mean_s,
        std_s,
        max_s: times.iter().copied().fold(0.0, f64::max),
    })
}

fn tally<I, S>(sets: I) -> Vec<(FeatureId, usize)>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = FeatureId>,
{
    let mut counts: BTreeMap<FeatureId, usize> = BTreeMap::new();
    for set in sets {
        for id in set {
            *counts.entry(id).or_default() += 1;
        }
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    // BTreeMap order gives ascending id; the stable sort keeps it within ties
    out.sort_by_key(|p| std::cmp::Reverse(p.1));
    out
}

/// How often each feature appears across counterfactual change sets, most
/// frequent first, lower id on ties.
pub fn counterfactual_frequency<I, S>(change_sets: I) -> Vec<(FeatureId, usize)>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = FeatureId>,
{
    tally(change_sets)
}

/// How often each skill is required across postings, same ordering rule.
pub fn demand_frequency(jobs: &[JobPosting]) -> Result<Vec<(FeatureId, usize)>, EvalError> {
    if jobs.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    Ok(tally(jobs.iter().map(|j| j.required.iter().copied())))
}

/// `method,k,flip_pct` rows.
pub fn write_curves_csv<W: Write>(curves: &[FlipCurve], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,k,flip_pct")?;
    for c in curves {
        for (i, v) in c.flip_pct.iter().enumerate() {
            writeln!(out, "{},{},{}", c.method, i + 1, v)?;
        }
    }
    Ok(())
}

/// `skill_id,name,count` rows; names are quoted.
pub fn write_frequency_csv<W: Write>(
    table: &[(FeatureId, usize)],
    universe: &SkillUniverse,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "skill_id,name,count")?;
    for &(id, count) in table {
        let name = universe.get(id).map(|s| s.name.as_str()).unwrap_or("");
        writeln!(out, "{id},\"{}\",{count}", name.replace('"', "\"\""))?;
    }
    Ok(())
}
