//! `skillflip`: generate a synthetic skills market, train a model on it,
//! search counterfactuals and evaluate them.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
//! and I/O errors (including a benchmark whose checks fail).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use skillflip::attribution::{AttributionError, Method};
use skillflip::dataset::{load_dataset, save_dataset, DatasetError, MarketDataset, UniverseSizes};
use skillflip::eval::{EvalError, FlipCurve};
use skillflip::model::{load_model, save_model, AnyModel, GbtParams, ModelError};
use skillflip::pipeline::{self, files, PipelineError};
use skillflip::search::{Mode, SearchError};
use skillflip::{FeatureId, ThresholdClassifier};

#[derive(Debug, Parser)]
#[command(
    name = "skillflip",
    version,
    about = "Counterfactual explanations on a synthetic skills market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a skill universe, job postings and labeled profiles.
    GenData(GenDataArgs),
    /// Train the boosted-tree model and derive the decision threshold.
    Train(TrainArgs),
    /// Explain favorable decisions by removing skills.
    Explain(SearchArgs),
    /// Guide unfavorable profiles by adding skills.
    Guide(SearchArgs),
    /// Per-instance sequential flip comparison of SEDC, LIME and SHAP.
    EvalFlip(EvalFlipArgs),
    /// Population-wide top-k flip comparison against skill demand.
    EvalAggregate(EvalAggregateArgs),
    /// Run the whole pipeline and check the benchmark criteria.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output dataset (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4450)]
    competencies: usize,
    #[arg(long, default_value_t = 500)]
    studies: usize,
    #[arg(long, default_value_t = 0)]
    study_areas: usize,
    #[arg(long, default_value_t = 50)]
    languages: usize,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    profiles: u64,
    #[arg(long, default_value_t = 11.04)]
    skills_per_job: f64,
    #[arg(long, default_value_t = 11.04)]
    skills_per_profile: f64,
    /// Fraction of a job's required skills a profile needs for the job to count.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output model (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Output metrics (JSON): test RMSE, threshold and the held-out ids.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    min_leaf: u64,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    /// Percentile of the training labels used as the threshold.
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
}

/// Inputs shared by every command that needs a classifier.
#[derive(Debug, Args)]
struct ClassifierArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Metrics written by `train`; supplies the threshold and held-out ids.
    #[arg(long)]
    metrics: PathBuf,
    /// Overrides the threshold from the metrics file.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    inputs: ClassifierArgs,
    /// Output counterfactuals (JSON lines); timings go to `<out>.timing.jsonl`.
    #[arg(long)]
    out: PathBuf,
    /// Profile ids to process, comma separated. Defaults to the held-out
    /// profiles of the opposite class to the target.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<u32>,
    #[arg(long)]
    limit: Option<usize>,
    /// Skill id that must not change; repeatable.
    #[arg(long = "lock")]
    locks: Vec<FeatureId>,
    /// Cost of changing a skill as `id=cost` (cost ≥ 1); repeatable.
    #[arg(long = "cost", value_parser = parse_cost)]
    costs: Vec<(FeatureId, f64)>,
    #[arg(long, default_value_t = 10)]
    max_set_size: usize,
    #[arg(long, default_value_t = 50_000)]
    max_expansions: usize,
    /// Per-instance time budget in seconds.
    #[arg(long, default_value_t = 120.0)]
    time_budget: f64,
    /// Addition mode: absent skills kept as candidates.
    #[arg(long, default_value_t = 200)]
    candidate_pool: usize,
}

#[derive(Debug, Args)]
struct EvalFlipArgs {
    #[command(flatten)]
    inputs: ClassifierArgs,
    /// Counterfactuals written by `guide`.
    #[arg(long)]
    counterfactuals: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k_max: u64,
    #[arg(long, default_value_t = 1000)]
    lime_samples: usize,
    #[arg(long, default_value_t = 20)]
    lime_top: usize,
    #[arg(long, default_value_t = 50)]
    lime_absent_pool: usize,
    #[arg(long)]
    lime_kernel_width: Option<f64>,
    #[arg(long, default_value_t = 200)]
    shap_permutations: usize,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalAggregateArgs {
    #[command(flatten)]
    inputs: ClassifierArgs,
    #[arg(long)]
    counterfactuals: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k_max: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
    /// Unfavorable held-out profiles to explain.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    profiles: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_cost(s: &str) -> Result<(FeatureId, f64), String> {
    let (id, cost) = s.split_once('=').ok_or("expected id=cost")?;
    let id = id
        .trim()
        .parse()
        .map_err(|e| format!("bad skill id: {e}"))?;
    let cost = cost.trim().parse().map_err(|e| format!("bad cost: {e}"))?;
    Ok((id, cost))
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let usage = match &e {
            PipelineError::Config(_) => true,
            PipelineError::Dataset(d) => is_usage_dataset(d),
            PipelineError::Model(m) => is_usage_model(m),
            PipelineError::Search(SearchError::InvalidConfig(_)) => true,
            PipelineError::Attribution(AttributionError::InvalidParameter(_)) => true,
            PipelineError::Eval(EvalError::InvalidK) => true,
            _ => false,
        };
        if usage {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn is_usage_dataset(e: &DatasetError) -> bool {
    matches!(
        e,
        DatasetError::EmptyUniverse
            | DatasetError::InfeasibleMean { .. }
            | DatasetError::InvalidFraction(_)
            | DatasetError::InvalidParameter(_)
    )
}

fn is_usage_model(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::InvalidParameter(_)
            | ModelError::InvalidPercentile(_)
            | ModelError::TooFewSamples { .. }
    )
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        PipelineError::from(e).into()
    }
}

struct Clock(Instant);

impl Clock {
    fn log(&self, message: &str) {
        eprintln!("[{:>8.2}s] {message}", self.0.elapsed().as_secs_f64());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let clock = Clock(Instant::now());
    let result = match cli.command {
        Command::GenData(a) => gen_data(a, &clock),
        Command::Train(a) => train(a, &clock),
        Command::Explain(a) => search(a, Mode::Removal, &clock),
        Command::Guide(a) => search(a, Mode::Addition, &clock),
        Command::EvalFlip(a) => eval_flip(a, &clock),
        Command::EvalAggregate(a) => eval_aggregate(a, &clock),
        Command::Bench(a) => bench(a, &clock),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn gen_data(a: GenDataArgs, clock: &Clock) -> Result<(), Failure> {
    let config = pipeline::DataConfig {
        universe: UniverseSizes {
            competency: a.competencies,
            study: a.studies,
            study_area: a.study_areas,
            language: a.languages,
        },
        n_jobs: a.jobs as usize,
        skills_per_job_mean: a.skills_per_job,
        n_profiles: a.profiles as usize,
        skills_per_profile_mean: a.skills_per_profile,
        fulfillment_fraction: a.rho,
        seed: a.seed,
    };
    let dataset = pipeline::build_dataset(&config)?;
    save_dataset(&dataset, &a.out)?;
    clock.log(&format!(
        "wrote {} skills, {} jobs, {} profiles to {}",
        dataset.universe.len(),
        dataset.jobs.len(),
        dataset.profiles.len(),
        a.out.display()
    ));
    Ok(())
}

fn train(a: TrainArgs, clock: &Clock) -> Result<(), Failure> {
    let dataset = load_dataset(&a.data)?;
    clock.log(&format!("loaded {}", a.data.display()));
    let config = pipeline::TrainConfig {
        gbt: GbtParams {
            n_trees: a.trees as usize,
            max_depth: a.depth as usize,
            learning_rate: a.learning_rate,
            min_samples_leaf: a.min_leaf as usize,
        },
        train_fraction: a.train_fraction,
        percentile: a.percentile,
        seed: a.seed,
    };
    let (model, metrics) = pipeline::train_model::<f64>(&dataset, &config)?;
    save_model(&AnyModel::from(model), &a.model)?;
    pipeline::write_json(&a.metrics, &metrics)?;
    clock.log(&format!(
        "trained: test RMSE {:.4}, threshold {}",
        metrics.test_rmse, metrics.threshold
    ));
    Ok(())
}

struct Loaded {
    dataset: MarketDataset,
    model: AnyModel<f64>,
    metrics: pipeline::TrainMetrics,
    threshold: f64,
}

fn load(inputs: &ClassifierArgs, clock: &Clock) -> Result<Loaded, Failure> {
    let dataset = load_dataset(&inputs.data)?;
    let model: AnyModel<f64> = load_model(&inputs.model)?;
    let metrics: pipeline::TrainMetrics = pipeline::read_json(&inputs.metrics)?;
    if inputs.workers == 0 {
        return Err(Failure::Usage("workers must be at least 1".into()));
    }
    clock.log("loaded dataset, model and metrics");
    let threshold = inputs.threshold.unwrap_or(metrics.threshold);
    Ok(Loaded {
        dataset,
        model,
        metrics,
        threshold,
    })
}

fn search(a: SearchArgs, mode: Mode, clock: &Clock) -> Result<(), Failure> {
    let l = load(&a.inputs, clock)?;
    let classifier = ThresholdClassifier::new(&l.model, l.threshold);
    let settings = pipeline::SearchSettings {
        max_set_size: a.max_set_size,
        max_expansions: a.max_expansions,
        time_budget_s: a.time_budget,
        candidate_pool: a.candidate_pool,
    };
    let mut config = settings.to_config(mode)?;
    config.locked_features = a.locks.iter().copied().collect::<BTreeSet<_>>();
    config.feature_costs = a.costs.iter().copied().collect::<BTreeMap<_, _>>();
    let (ids, class) = if a.ids.is_empty() {
        (
            l.metrics.test_ids.clone(),
            Some(config.target_class.opposite()),
        )
    } else {
        (a.ids.clone(), None)
    };
    let items = pipeline::select_instances(&classifier, &l.dataset, &ids, class, a.limit)?;
    clock.log(&format!("searching {} instances", items.len()));
    let records = pipeline::explain_batch(&classifier, &items, &config, a.inputs.workers)?;
    pipeline::write_counterfactuals(&a.out, &records)?;
    let found = records
        .iter()
        .filter(|r| r.status == skillflip::Status::Found)
        .count();
    clock.log(&format!(
        "{found} of {} found; wrote {}",
        records.len(),
        a.out.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct CurvesFile<'a> {
    k_max: usize,
    curves: &'a [FlipCurve],
}

fn eval_flip(a: EvalFlipArgs, clock: &Clock) -> Result<(), Failure> {
    let l = load(&a.inputs, clock)?;
    let classifier = ThresholdClassifier::new(&l.model, l.threshold);
    let records = pipeline::read_counterfactuals(&a.counterfactuals)?;
    let (items, sedc) = pipeline::flip_inputs(&l.dataset, &records)?;
    let settings = pipeline::AttributionSettings {
        lime_samples: a.lime_samples,
        lime_top: a.lime_top,
        lime_absent_pool: a.lime_absent_pool,
        lime_kernel_width: a.lime_kernel_width,
        shap_permutations: a.shap_permutations,
        seed: a.seed,
    };
    clock.log(&format!("attributing {} instances", items.len()));
    let mut attributions =
        pipeline::attribute_batch(&l.model, &items, Method::Lime, &settings, a.inputs.workers)?;
    attributions.extend(pipeline::attribute_batch(
        &l.model,
        &items,
        Method::Shap,
        &settings,
        a.inputs.workers,
    )?);
    let k_max = a.k_max as usize;
    let curves = pipeline::sequential_report(&classifier, &items, &sedc, &attributions, k_max)?;
    create_dir(&a.out_dir)?;
    pipeline::write_jsonl(&a.out_dir.join(files::ATTRIBUTIONS), &attributions)?;
    pipeline::write_curves(&a.out_dir.join(files::SEQUENTIAL), &curves)?;
    pipeline::write_json(
        &a.out_dir.join("sequential_flip.json"),
        &CurvesFile {
            k_max,
            curves: &curves,
        },
    )?;
    for c in &curves {
        println!("{:<5} {:?}", c.method, c.flip_pct);
    }
    clock.log(&format!("wrote {}", a.out_dir.display()));
    Ok(())
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    k_max: usize,
    curves: &'a [FlipCurve],
    sedc_dominates_avg: bool,
}

fn eval_aggregate(a: EvalAggregateArgs, clock: &Clock) -> Result<(), Failure> {
    let l = load(&a.inputs, clock)?;
    let classifier = ThresholdClassifier::new(&l.model, l.threshold);
    let records = pipeline::read_counterfactuals(&a.counterfactuals)?;
    let (items, sedc) = pipeline::flip_inputs(&l.dataset, &records)?;
    let k_max = a.k_max as usize;
    let report = pipeline::aggregate_report(&classifier, &l.dataset, &items, &sedc, k_max)?;
    let pass = report.curves[1].dominates(&report.curves[0]);
    create_dir(&a.out_dir)?;
    pipeline::write_curves(&a.out_dir.join(files::AGGREGATE), &report.curves)?;
    pipeline::write_json(
        &a.out_dir.join("aggregate_flip.json"),
        &AggregateFile {
            k_max,
            curves: &report.curves,
            sedc_dominates_avg: pass,
        },
    )?;
    pipeline::write_frequency(
        &a.out_dir.join(files::FREQ_COUNTERFACTUAL),
        &report.counterfactual_frequency,
        &l.dataset,
    )?;
    pipeline::write_frequency(
        &a.out_dir.join(files::FREQ_DEMAND),
        &report.demand_frequency,
        &l.dataset,
    )?;
    for c in &report.curves {
        println!("{:<5} {:?}", c.method, c.flip_pct);
    }
    println!(
        "{} sedc-aggregate >= avg at every k <= {k_max}",
        if pass { "PASS" } else { "FAIL" }
    );
    clock.log(&format!("wrote {}", a.out_dir.display()));
    Ok(())
}

fn bench(a: BenchArgs, clock: &Clock) -> Result<(), Failure> {
    let mut config = pipeline::BenchConfig::new(a.seed);
    config.n_instances = a.instances as usize;
    config.data.fulfillment_fraction = a.rho;
    config.data.n_jobs = a.jobs as usize;
    config.data.n_profiles = a.profiles as usize;
    config.train.gbt.n_trees = a.trees as usize;
    let outcome = pipeline::run_bench(&config, a.workers, Some(&a.out_dir))?;
    let r = &outcome.report;
    clock.log(&format!(
        "explained {} instances: {} found, mean {:.3} changes, mean {:.4}s (max {:.4}s)",
        r.n_instances,
        r.found,
        r.sparsity.mean_changes,
        outcome.timing.mean_s,
        outcome.timing.max_s
    ));
    for c in &r.checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "benchmark checks failed for seed {}",
            a.seed
        )))
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}
