//! End-to-end runs shared by the command-line tool and the benchmark:
//! dataset synthesis, training, batch search and attribution over a worker
//! pool, the two flip protocols, and the files they read and write.
//!
//! Every stage is a pure function of its inputs and seeds. Per-instance
//! randomness is seeded from `(seed, profile_id)`, and batch results are
//! collected in input order, so outputs do not depend on the worker count.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{
    lime_like, shap_like, AttributionError, AttributionRecord, LimeConfig, Method,
};
use crate::bits::{BinaryVector, FeatureId};
use crate::dataset::{
    generate_market, generate_profiles, generate_universe, save_dataset, DatasetError,
    MarketDataset, UniverseSizes,
};
use crate::eval::{
    counterfactual_frequency, demand_frequency, global_topk_flip_eval, sequential_flip_eval,
    sparsity_stats, timing_stats, write_curves_csv, write_frequency_csv, EvalError, FlipCurve,
    SparsityStats, TimingStats,
};
use crate::model::{
    percentile_threshold, save_model, train_gbt, AnyModel, Class, GbtModel, GbtParams, ModelError,
    Predictor, ThresholdClassifier,
};
use crate::scalar::Scalar;
use crate::search::{
    apply_changes, find_counterfactual, CounterfactualRecord, Mode, SearchConfig, SearchError,
    Status,
};

/// A profile id and its feature vector.
pub type Instance = (u32, BinaryVector);

/// Feature ids in the order they are to be changed.
pub type Ranking = Vec<FeatureId>;

/// Seed used by every default configuration.
pub const DEFAULT_SEED: u64 = 7;

// Stage keys for `derive_seed`, kept away from the profile-id range.
const UNIVERSE_KEY: u64 = u64::MAX;
const MARKET_KEY: u64 = u64::MAX - 1;
const PROFILES_KEY: u64 = u64::MAX - 2;
const TRAIN_KEY: u64 = u64::MAX - 3;
const LIME_KEY: u64 = u64::MAX - 4;
const SHAP_KEY: u64 = u64::MAX - 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Mixes a seed with a key (a stage tag or a profile id) into a seed for an
/// independent stream.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(key))
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
    if workers == 0 {
        return Err(PipelineError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

// ---------------------------------------------------------------- data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub universe: UniverseSizes,
    pub n_jobs: usize,
    pub skills_per_job_mean: f64,
    pub n_profiles: usize,
    pub skills_per_profile_mean: f64,
    pub fulfillment_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            universe: UniverseSizes::default(),
            n_jobs: 10_000,
            skills_per_job_mean: 11.04,
            n_profiles: 10_000,
            skills_per_profile_mean: 11.04,
            fulfillment_fraction: 1.0,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn build_dataset(config: &DataConfig) -> Result<MarketDataset, DatasetError> {
    let universe = generate_universe(config.universe, derive_seed(config.seed, UNIVERSE_KEY))?;
    let jobs = generate_market(
        &universe,
        config.n_jobs,
        config.skills_per_job_mean,
        derive_seed(config.seed, MARKET_KEY),
    )?;
    let profiles = generate_profiles(
        &universe,
        &jobs,
        config.n_profiles,
        config.skills_per_profile_mean,
        config.fulfillment_fraction,
        derive_seed(config.seed, PROFILES_KEY),
    )?;
    Ok(MarketDataset {
        universe,
        jobs,
        profiles,
        fulfillment_fraction: config.fulfillment_fraction,
    })
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gbt: GbtParams,
    pub train_fraction: f64,
    /// Percentile of the training labels used as the decision threshold.
    pub percentile: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gbt: GbtParams::default(),
            train_fraction: 0.75,
            percentile: 90.0,
            seed: DEFAULT_SEED,
        }
    }
}

/// Written next to a trained model; `threshold` turns the model into a
/// classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub test_rmse: f64,
    pub threshold: f64,
    pub percentile: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub gbt: GbtParams,
    pub n_train: usize,
    pub n_test: usize,
    /// Held-out profile ids, ascending.
    pub test_ids: Vec<u32>,
}

pub fn train_model<T: Scalar>(
    dataset: &MarketDataset,
    config: &TrainConfig,
) -> Result<(GbtModel<T>, TrainMetrics), ModelError> {
    let trained = train_gbt::<T>(
        dataset,
        &config.gbt,
        config.train_fraction,
        derive_seed(config.seed, TRAIN_KEY),
    )?;
    let train_labels: Vec<T> = trained
        .train_indices
        .iter()
        .map(|&i| T::from_count(dataset.profiles[i].label as usize))
        .collect();
    let threshold = percentile_threshold(&train_labels, config.percentile)?;
    let mut test_ids: Vec<u32> = trained
        .test_indices
        .iter()
        .map(|&i| dataset.profiles[i].id)
        .collect();
    test_ids.sort_unstable();
    let metrics = TrainMetrics {
        test_rmse: trained.test_rmse,
        threshold: threshold.as_f64(),
        percentile: config.percentile,
        train_fraction: config.train_fraction,
        seed: config.seed,
        gbt: config.gbt,
        n_train: trained.train_indices.len(),
        n_test: trained.test_indices.len(),
        test_ids,
    };
    Ok((trained.model, metrics))
}

// ---------------------------------------------------------------- search

/// The serializable part of a [`SearchConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub max_set_size: usize,
    pub max_expansions: usize,
    pub time_budget_s: f64,
    pub candidate_pool: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let c = SearchConfig::addition();
        Self {
            max_set_size: c.max_set_size,
            max_expansions: c.max_expansions,
            time_budget_s: c.time_budget.as_secs_f64(),
            candidate_pool: c.candidate_pool,
        }
    }
}

impl SearchSettings {
    pub fn to_config(&self, mode: Mode) -> Result<SearchConfig, PipelineError> {
        if !(self.time_budget_s > 0.0 && self.time_budget_s.is_finite()) {
            return Err(PipelineError::Config(format!(
                "time budget must be positive, got {}",
                self.time_budget_s
            )));
        }
        let base = match mode {
            Mode::Removal => SearchConfig::removal(),
            Mode::Addition => SearchConfig::addition(),
        };
        let config = SearchConfig {
            max_set_size: self.max_set_size,
            max_expansions: self.max_expansions,
            time_budget: Duration::from_secs_f64(self.time_budget_s),
            candidate_pool: self.candidate_pool,
            ..base
        };
        config.validate()?;
        Ok(config)
    }
}

/// Looks up `ids` in `dataset`, keeping those the classifier puts in
/// `class` (all of them when `None`), in the given order, at most `limit`.
pub fn select_instances<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    dataset: &MarketDataset,
    ids: &[u32],
    class: Option<Class>,
    limit: Option<usize>,
) -> Result<Vec<Instance>, PipelineError>
where
    T: Scalar,
    P: Predictor<T>,
{
    if classifier.dim() != dataset.dim() {
        return Err(ModelError::Shape {
            expected: classifier.dim(),
            actual: dataset.dim(),
        }
        .into());
    }
    let by_id: HashMap<u32, usize> = dataset
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id, i))
        .collect();
    let mut out = Vec::new();
    for &id in ids {
        if limit.is_some_and(|l| out.len() >= l) {
            break;
        }
        let &i = by_id
            .get(&id)
            .ok_or_else(|| PipelineError::Config(format!("unknown profile id {id}")))?;
        let x = dataset.profiles[i].features(dataset.dim());
        if class.is_none_or(|c| classifier.classify_unchecked(&x) == c) {
            out.push((id, x));
        }
    }
    Ok(out)
}

/// Runs the search on every item across `workers` threads. Records keep the
/// input order and carry timing.
pub fn explain_batch<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    items: &[Instance],
    config: &SearchConfig,
    workers: usize,
) -> Result<Vec<CounterfactualRecord>, PipelineError>
where
    T: Scalar,
    P: Predictor<T>,
{
    config.validate()?;
    let records = with_pool(workers, || {
        items
            .par_iter()
            .map(|(id, x)| {
                let outcome = find_counterfactual(classifier, x, config);
                CounterfactualRecord::from_outcome(*id, config.mode, classifier.score(x), outcome)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(records)
}

/// Ids of the changes that fail either check for one found record:
/// `Err(())` when applying all changes does not reach the target, otherwise
/// the changes whose removal still reaches it.
fn recheck<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    x: &BinaryVector,
    record: &CounterfactualRecord,
    target: Class,
) -> Result<Vec<FeatureId>, ()>
where
    T: Scalar,
    P: Predictor<T>,
{
    if classifier.classify_unchecked(&apply_changes(x, &record.changes)) != target {
        return Err(());
    }
    Ok((0..record.changes.len())
        .filter(|&skip| {
            let rest: Vec<_> = record
                .changes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, c)| *c)
                .collect();
            classifier.classify_unchecked(&apply_changes(x, &rest)) == target
        })
        .map(|i| record.changes[i].skill_id)
        .collect())
}

// ---------------------------------------------------------------- attribution

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSettings {
    pub lime_samples: usize,
    pub lime_top: usize,
    pub lime_absent_pool: usize,
    pub lime_kernel_width: Option<f64>,
    pub shap_permutations: usize,
    pub seed: u64,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        let lime = LimeConfig::default();
        Self {
            lime_samples: lime.n_samples,
            lime_top: lime.n_top,
            lime_absent_pool: lime.absent_pool,
            lime_kernel_width: lime.kernel_width,
            shap_permutations: 200,
            seed: DEFAULT_SEED,
        }
    }
}

/// Attributes every item with `method` across `workers` threads. Shapley
/// values use the all-absent baseline; an empty instance gets an empty
/// record.
pub fn attribute_batch<T, P>(
    predictor: &P,
    items: &[Instance],
    method: Method,
    settings: &AttributionSettings,
    workers: usize,
) -> Result<Vec<AttributionRecord>, PipelineError>
where
    T: Scalar,
    P: Predictor<T>,
{
    let records = with_pool(workers, || {
        items
            .par_iter()
            .map(|(id, x)| {
                let result = match method {
                    Method::Lime => {
                        let config = LimeConfig {
                            n_samples: settings.lime_samples,
                            kernel_width: settings.lime_kernel_width,
                            n_top: settings.lime_top,
                            absent_pool: settings.lime_absent_pool,
                            seed: derive_seed(derive_seed(settings.seed, LIME_KEY), *id as u64),
                            ..LimeConfig::default()
                        };
                        lime_like(predictor, x, &config)
                    }
                    Method::Shap => shap_like(
                        predictor,
                        x,
                        &BinaryVector::zeros(x.dim()),
                        settings.shap_permutations,
                        derive_seed(derive_seed(settings.seed, SHAP_KEY), *id as u64),
                    ),
                };
                match result {
                    Ok(r) => Ok(AttributionRecord::new(*id, method, &r)),
                    Err(AttributionError::EmptyCoalition) => Ok(AttributionRecord {
                        profile_id: *id,
                        method,
                        scores: Default::default(),
                        ranking: Vec::new(),
                    }),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(records)
}

// ---------------------------------------------------------------- evaluation

/// The searched instances behind `records` (already-target ones dropped)
/// and, for each, the change order of its counterfactual (empty when none
/// was found).
pub fn flip_inputs(
    dataset: &MarketDataset,
    records: &[CounterfactualRecord],
) -> Result<(Vec<Instance>, Vec<Ranking>), PipelineError> {
    let by_id: HashMap<u32, usize> = dataset
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id, i))
        .collect();
    let mut items = Vec::new();
    let mut rankings = Vec::new();
    for r in records.iter().filter(|r| r.status != Status::AlreadyTarget) {
        let &i = by_id.get(&r.profile_id).ok_or_else(|| {
            PipelineError::Config(format!("record for unknown profile id {}", r.profile_id))
        })?;
        items.push((r.profile_id, dataset.profiles[i].features(dataset.dim())));
        rankings.push(r.ids().collect());
    }
    Ok((items, rankings))
}

fn ranking_for(
    records: &[AttributionRecord],
    items: &[Instance],
    method: Method,
) -> Result<Vec<Vec<FeatureId>>, PipelineError> {
    let by_id: HashMap<u32, &AttributionRecord> = records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.profile_id, r))
        .collect();
    items
        .iter()
        .map(|(id, _)| {
            by_id.get(id).map(|r| r.ranking.clone()).ok_or_else(|| {
                PipelineError::Config(format!("no {method:?} attribution for profile {id}"))
            })
        })
        .collect()
}

/// Per-instance sequential flipping for `lime`, `shap` and `sedc`.
pub fn sequential_report<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    items: &[Instance],
    sedc: &[Vec<FeatureId>],
    attributions: &[AttributionRecord],
    k_max: usize,
) -> Result<Vec<FlipCurve>, PipelineError>
where
    T: Scalar,
    P: Predictor<T>,
{
    let instances: Vec<BinaryVector> = items.iter().map(|(_, x)| x.clone()).collect();
    let rankings = vec![
        (
            "lime".to_string(),
            ranking_for(attributions, items, Method::Lime)?,
        ),
        (
            "shap".to_string(),
            ranking_for(attributions, items, Method::Shap)?,
        ),
        ("sedc".to_string(), sedc.to_vec()),
    ];
    Ok(sequential_flip_eval(
        classifier, &instances, &rankings, k_max,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// `avg` (demand ranking) then `sedc` (counterfactual ranking).
    pub curves: Vec<FlipCurve>,
    pub counterfactual_frequency: Vec<(FeatureId, usize)>,
    pub demand_frequency: Vec<(FeatureId, usize)>,
}

/// Population-wide top-k flipping with the demand ranking against the
/// ranking aggregated from the counterfactuals.
pub fn aggregate_report<T, P>(
    classifier: &ThresholdClassifier<P, T>,
    dataset: &MarketDataset,
    items: &[Instance],
    sedc: &[Vec<FeatureId>],
    k_max: usize,
) -> Result<AggregateReport, PipelineError>
where
    T: Scalar,
    P: Predictor<T>,
{
    let instances: Vec<BinaryVector> = items.iter().map(|(_, x)| x.clone()).collect();
    let cf_freq = counterfactual_frequency(sedc.iter().map(|s| s.iter().copied()));
    let demand = demand_frequency(&dataset.jobs)?;
    let top = |t: &[(FeatureId, usize)]| -> Vec<FeatureId> {
        t.iter().take(k_max).map(|p| p.0).collect()
    };
    let curves = vec![
        global_topk_flip_eval(classifier, &instances, "avg", &top(&demand), k_max)?,
        global_topk_flip_eval(classifier, &instances, "sedc", &top(&cf_freq), k_max)?,
    ];
    Ok(AggregateReport {
        curves,
        counterfactual_frequency: cf_freq,
        demand_frequency: demand,
    })
}

// ---------------------------------------------------------------- files

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<'a, S, I>(path: &Path, rows: I) -> Result<(), PipelineError>
where
    S: Serialize + 'a,
    I: IntoIterator<Item = &'a S>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("serializable row");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<D: DeserializeOwned>(path: &Path) -> Result<Vec<D>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

pub fn write_curves(path: &Path, curves: &[FlipCurve]) -> Result<(), PipelineError> {
    write_csv(path, |out| write_curves_csv(curves, out))
}

pub fn write_frequency(
    path: &Path,
    table: &[(FeatureId, usize)],
    dataset: &MarketDataset,
) -> Result<(), PipelineError> {
    write_csv(path, |out| {
        write_frequency_csv(table, &dataset.universe, out)
    })
}

/// One line of a timing sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub profile_id: u32,
    pub elapsed_s: f64,
}

/// `out.jsonl` → `out.timing.jsonl`.
pub fn timing_path(path: &Path) -> PathBuf {
    path.with_extension("timing.jsonl")
}

/// Writes the records without timing to `path` and their timings to the
/// sidecar at [`timing_path`].
pub fn write_counterfactuals(
    path: &Path,
    records: &[CounterfactualRecord],
) -> Result<(), PipelineError> {
    let plain: Vec<_> = records.iter().map(|r| r.clone().without_timing()).collect();
    write_jsonl(path, &plain)?;
    let timings: Vec<_> = records
        .iter()
        .filter_map(|r| {
            r.elapsed_s.map(|elapsed_s| TimingEntry {
                profile_id: r.profile_id,
                elapsed_s,
            })
        })
        .collect();
    write_jsonl(&timing_path(path), &timings)
}

/// Reads records and, when the sidecar exists, their timings.
pub fn read_counterfactuals(path: &Path) -> Result<Vec<CounterfactualRecord>, PipelineError> {
    let mut records: Vec<CounterfactualRecord> = read_jsonl(path)?;
    let sidecar = timing_path(path);
    if sidecar.exists() {
        let times: HashMap<u32, f64> = read_jsonl::<TimingEntry>(&sidecar)?
            .into_iter()
            .map(|t| (t.profile_id, t.elapsed_s))
            .collect();
        for r in &mut records {
            r.elapsed_s = times.get(&r.profile_id).copied();
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Unfavorable held-out instances to explain.
    pub n_instances: usize,
    pub search: SearchSettings,
    pub attribution: AttributionSettings,
    /// Per-instance protocol depth.
    pub k_sequential: usize,
    /// Depth over which SEDC must beat both attribution methods.
    pub k_compare: usize,
    /// Population-wide protocol depth.
    pub k_global: usize,
}

impl BenchConfig {
    /// Default benchmark with every stage seeded from `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            data: DataConfig {
                seed,
                ..DataConfig::default()
            },
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            n_instances: 1000,
            search: SearchSettings::default(),
            attribution: AttributionSettings {
                seed,
                ..AttributionSettings::default()
            },
            k_sequential: 10,
            k_compare: 5,
            k_global: 10,
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::new(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// The reproducible part of a benchmark run; wall-clock figures live in a
/// separate timing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub test_rmse: f64,
    pub threshold: f64,
    pub n_test_unfavorable: usize,
    pub n_instances: usize,
    pub found: usize,
    pub not_found: usize,
    pub max_changes: usize,
    pub sparsity: SparsityStats,
    pub sequential: Vec<FlipCurve>,
    pub aggregate: Vec<FlipCurve>,
    pub checks: Vec<Check>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub timing: TimingStats,
    pub dataset: MarketDataset,
    pub model: GbtModel<f64>,
    pub metrics: TrainMetrics,
    /// The explained instances, in record order.
    pub instances: Vec<Instance>,
    /// Search records with timing.
    pub records: Vec<CounterfactualRecord>,
    pub attributions: Vec<AttributionRecord>,
}

/// File names written by [`run_bench`].
pub mod files {
    pub const DATASET: &str = "dataset.jsonl";
    pub const MODEL: &str = "model.json";
    pub const METRICS: &str = "metrics.json";
    pub const COUNTERFACTUALS: &str = "counterfactuals.jsonl";
    pub const COUNTERFACTUAL_TIMING: &str = "counterfactuals.timing.jsonl";
    pub const ATTRIBUTIONS: &str = "attributions.jsonl";
    pub const SEQUENTIAL: &str = "sequential_flip.csv";
    pub const AGGREGATE: &str = "aggregate_flip.csv";
    pub const FREQ_COUNTERFACTUAL: &str = "frequency_counterfactual.csv";
    pub const FREQ_DEMAND: &str = "frequency_demand.csv";
    pub const REPORT: &str = "report.json";
    pub const TIMING: &str = "timing.json";

    /// Files whose bytes depend only on the configuration.
    pub const REPRODUCIBLE: [&str; 10] = [
        DATASET,
        MODEL,
        METRICS,
        COUNTERFACTUALS,
        ATTRIBUTIONS,
        SEQUENTIAL,
        AGGREGATE,
        FREQ_COUNTERFACTUAL,
        FREQ_DEMAND,
        REPORT,
    ];
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Generates the market, trains the model, explains unfavorable held-out
/// profiles in addition mode, runs both flip protocols and checks the
/// outcome. Writes every artifact to `out_dir` when given.
pub fn run_bench(
    config: &BenchConfig,
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<BenchOutcome, PipelineError> {
    if config.k_compare > config.k_sequential {
        return Err(PipelineError::Config(
            "k_compare must not exceed k_sequential".into(),
        ));
    }
    let seed = config.data.seed;
    let dataset = build_dataset(&config.data)?;
    let (model, metrics) = train_model::<f64>(&dataset, &config.train)?;
    let classifier = ThresholdClassifier::new(&model, metrics.threshold);

    let unfavorable = select_instances(
        &classifier,
        &dataset,
        &metrics.test_ids,
        Some(Class::Unfavorable),
        None,
    )?;
    let n_test_unfavorable = unfavorable.len();
    let items: Vec<_> = unfavorable.into_iter().take(config.n_instances).collect();

    let search = config.search.to_config(Mode::Addition)?;
    let records = explain_batch(&classifier, &items, &search, workers)?;
    let mut attributions =
        attribute_batch(&model, &items, Method::Lime, &config.attribution, workers)?;
    attributions.extend(attribute_batch(
        &model,
        &items,
        Method::Shap,
        &config.attribution,
        workers,
    )?);

    let (eval_items, sedc) = flip_inputs(&dataset, &records)?;
    let sequential = sequential_report(
        &classifier,
        &eval_items,
        &sedc,
        &attributions,
        config.k_sequential,
    )?;
    let aggregate = aggregate_report(&classifier, &dataset, &eval_items, &sedc, config.k_global)?;

    let instances: Vec<BinaryVector> = items.iter().map(|(_, x)| x.clone()).collect();
    let sparsity = sparsity_stats(&records, &instances)?;
    let timing = timing_stats(&records)?;
    let found = records.iter().filter(|r| r.status == Status::Found).count();
    let max_changes = records.iter().map(|r| r.changes.len()).max().unwrap_or(0);

    let mut invalid = Vec::new();
    let mut reducible = Vec::new();
    for (r, (_, x)) in records
        .iter()
        .zip(&items)
        .filter(|(r, _)| r.status == Status::Found)
    {
        match recheck(&classifier, x, r, Class::Favorable) {
            Err(()) => invalid.push(r.profile_id),
            Ok(extra) if !extra.is_empty() => reducible.push(r.profile_id),
            Ok(_) => {}
        }
    }
    let curve = |name: &str| {
        sequential
            .iter()
            .find(|c| c.method == name)
            .expect("method present")
    };
    let (lime, shap, sedc_curve) = (curve("lime"), curve("shap"), curve("sedc"));
    let beats = |other: &FlipCurve| (1..=config.k_compare).all(|k| sedc_curve.at(k) >= other.at(k));
    let reaches = max_changes >= 1
        && max_changes <= config.k_sequential
        && sedc_curve.at(max_changes) == 100.0;
    let fmt = |c: &FlipCurve, k: usize| format!("{:?}", &c.flip_pct[..k]);
    let checks = vec![
        check(
            "validity",
            invalid.is_empty(),
            format!("{found} found, {} fail to flip {invalid:?}", invalid.len()),
        ),
        check(
            "irreducibility",
            reducible.is_empty(),
            format!("{} reducible {reducible:?}", reducible.len()),
        ),
        check(
            "sequential_dominance",
            beats(lime) && beats(shap),
            format!(
                "k=1..{}: sedc {} lime {} shap {}",
                config.k_compare,
                fmt(sedc_curve, config.k_compare),
                fmt(lime, config.k_compare),
                fmt(shap, config.k_compare)
            ),
        ),
        check(
            "sequential_complete",
            reaches,
            format!(
                "max changes {max_changes}, sedc curve {:?}",
                sedc_curve.flip_pct
            ),
        ),
        check(
            "sparsity",
            sparsity.mean_changes <= 0.5 * sparsity.mean_active,
            format!(
                "mean changes {:.4} vs mean active {:.4}",
                sparsity.mean_changes, sparsity.mean_active
            ),
        ),
        check(
            "aggregate_dominance",
            aggregate.curves[1].dominates(&aggregate.curves[0]),
            format!(
                "seed {seed}: sedc {:?} avg {:?}",
                aggregate.curves[1].flip_pct, aggregate.curves[0].flip_pct
            ),
        ),
    ];

    let report = BenchReport {
        config: config.clone(),
        test_rmse: metrics.test_rmse,
        threshold: metrics.threshold,
        n_test_unfavorable,
        n_instances: items.len(),
        found,
        not_found: records.len()
            - found
            - records
                .iter()
                .filter(|r| r.status == Status::AlreadyTarget)
                .count(),
        max_changes,
        sparsity,
        sequential,
        aggregate: aggregate.curves.clone(),
        checks,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        save_dataset(&dataset, dir.join(files::DATASET))?;
        save_model(&AnyModel::from(model.clone()), dir.join(files::MODEL))?;
        write_json(&dir.join(files::METRICS), &metrics)?;
        write_counterfactuals(&dir.join(files::COUNTERFACTUALS), &records)?;
        write_jsonl(&dir.join(files::ATTRIBUTIONS), &attributions)?;
        write_curves(&dir.join(files::SEQUENTIAL), &report.sequential)?;
        write_curves(&dir.join(files::AGGREGATE), &report.aggregate)?;
        write_frequency(
            &dir.join(files::FREQ_COUNTERFACTUAL),
            &aggregate.counterfactual_frequency,
            &dataset,
        )?;
        write_frequency(
            &dir.join(files::FREQ_DEMAND),
            &aggregate.demand_frequency,
            &dataset,
        )?;
        write_json(&dir.join(files::REPORT), &report)?;
        write_json(&dir.join(files::TIMING), &timing)?;
    }

    Ok(BenchOutcome {
        report,
        timing,
        dataset,
        model,
        metrics,
        instances: items,
        records,
        attributions,
    })
}
