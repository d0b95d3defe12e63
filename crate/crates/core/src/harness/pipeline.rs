//! Add switches, learn them, rank, prune, fine-tune and evaluate.

use super::config::ExperimentConfig;
use super::mnist::{load_mnist_split, Split};
use super::{rng_for, write_csv_file};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    build_lenet5, count_flops, count_params, evaluate, load_model, save_model, train_epoch, ModelGraph,
    SgdSchedule, SgdState,
};
use crate::pruning::{
    apply_plan, finetune, make_plan, rank_derivative, rank_dirichlet, rank_magnitude, rank_random, KeepSpec,
    Norm, PruningPlan, RankMethod, RankingReport,
};
use crate::switch::{init_states, train_switches, InactiveSwitch, SwitchSchedule, SwitchState, SwitchTraining};
use std::path::Path;
use std::time::Instant;

/// Evaluation batch size; does not affect results.
const EVAL_BATCH: usize = 500;

/// RNG stream per phase.
const STREAM_BASELINE: u64 = 10;
const STREAM_SWITCH: u64 = 11;
const STREAM_RANK: u64 = 12;
const STREAM_FINETUNE: u64 = 13;

#[derive(Clone, Debug)]
pub struct MnistData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl MnistData {
    /// Splits `val_size` examples off the end of `train`.
    pub fn split(train: Dataset, test: Dataset, val_size: usize) -> Result<Self> {
        if val_size == 0 || val_size >= train.len() {
            return Err(Error::config(format!(
                "val_size {val_size} must be in 1..{} (training examples)",
                train.len()
            )));
        }
        let cut = train.len() - val_size;
        let val = train.subset(&(cut..train.len()).collect::<Vec<_>>())?;
        let train = train.head(cut)?;
        Ok(MnistData { train, val, test })
    }

    /// Reads `mnist_dir`, applying `train_subset`, `test_subset` and `val_size`.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let dir = config.path("mnist_dir").expect("has default");
        let mut train = load_mnist_split(&dir, Split::Train)?;
        let mut test = load_mnist_split(&dir, Split::Test)?;
        if let Some(n) = config.parsed::<usize>("train_subset")? {
            train = train.head(n)?;
        }
        if let Some(n) = config.parsed::<usize>("test_subset")? {
            test = test.head(n)?;
        }
        Self::split(train, test, config.value("val_size")?)
    }
}

fn weight_schedule(config: &ExperimentConfig, epochs: &str, lr: &str) -> Result<SgdSchedule> {
    Ok(SgdSchedule {
        epochs: config.value(epochs)?,
        batch_size: config.value("batch_size")?,
        lr: config.value(lr)?,
        momentum: config.value("momentum")?,
        weight_decay: config.value("weight_decay")?,
    })
}

/// Trains `model` for `baseline_epochs`.
pub fn train_baseline(model: &mut ModelGraph, data: &MnistData, config: &ExperimentConfig) -> Result<()> {
    let schedule = weight_schedule(config, "baseline_epochs", "baseline_lr")?;
    let mut rng = rng_for(config.seed()?, STREAM_BASELINE);
    let mut state = SgdState::default();
    for epoch in 0..schedule.epochs {
        let loss = train_epoch(model, &data.train, &schedule, &mut state, &mut rng)?;
        let val = evaluate(model, &data.val, EVAL_BATCH)?;
        log::info!(
            "baseline epoch {}: train loss {loss:.4}, val error {:.2}%",
            epoch + 1,
            val.error_pct()
        );
    }
    model
        .metadata
        .training_history
        .push(format!("baseline {} epochs lr {}", schedule.epochs, schedule.lr));
    Ok(())
}

/// The model from `model_in`, or a freshly initialised LeNet-5 of `widths`.
pub fn initial_model(config: &ExperimentConfig) -> Result<ModelGraph> {
    match config.path("model_in") {
        Some(p) => load_model(p),
        None => {
            let w = config.list("widths")?.unwrap_or_default();
            let widths: [usize; 4] = w
                .try_into()
                .map_err(|w| Error::config(format!("widths needs 4 entries, got {w:?}")))?;
            build_lenet5(widths, config.seed()?)
        }
    }
}

/// Trains switches on `model` (switches are inserted if missing) and
/// stores their posterior means in the returned model.
pub fn learn_switches(
    model: &ModelGraph,
    train: &Dataset,
    config: &ExperimentConfig,
) -> Result<(ModelGraph, SwitchTraining)> {
    let mut model = model.with_switches()?;
    let mut states: Vec<SwitchState> = init_states(&model, config.value("alpha0")?, config.estimator()?)?;
    let kl_weight: Option<f64> = config.parsed("kl_weight")?;
    for s in &mut states {
        s.kl_weight = kl_weight;
    }
    let inactive = match config.get("inactive_switch") {
        Some("mean") => InactiveSwitch::Mean,
        Some("unit") => InactiveSwitch::Unit,
        other => return Err(Error::config(format!("inactive_switch = {other:?}: expected mean | unit"))),
    };
    let schedule = SwitchSchedule {
        mode: config.mode()?,
        epochs: config.value("switch_epochs")?,
        batch_size: config.value("switch_batch_size")?,
        lr: config.value("switch_lr")?,
        inactive,
    };
    let subset = match config.parsed::<usize>("switch_subset")? {
        Some(n) => train.head(n)?,
        None => train.clone(),
    };
    let mut rng = rng_for(config.seed()?, STREAM_SWITCH);
    let trained = train_switches(&model, states, &subset, &schedule, &mut rng)?;
    let means: Vec<Vec<f64>> = trained.states.iter().map(|s| s.mean()).collect();
    model.set_switch_values(&means)?;
    model
        .metadata
        .training_history
        .push(format!("switches trained ({:?}, {:?})", schedule.mode, config.estimator()?));
    Ok((model, trained))
}

/// Ranking from the switch values stored in a model (posterior means
/// after [`learn_switches`]).
pub fn rank_stored_switches(model: &ModelGraph) -> Result<RankingReport> {
    let owners = model.switch_owners();
    if owners.len() != model.prunable_layers().len() || owners.iter().enumerate().any(|(i, &o)| i != o) {
        return Err(Error::contract("dirichlet ranking needs one switch per prunable layer"));
    }
    Ok(RankingReport::from_scores(
        RankMethod::Dirichlet,
        model.switch_values().iter().map(|v| v.to_vec()).collect(),
    ))
}

/// Ranks `model` with `method`; `states` are used for the Dirichlet
/// ranking when available, otherwise the stored switch values. Only the
/// derivative ranker reads `data`.
pub fn rank_model(
    model: &ModelGraph,
    method: RankMethod,
    states: Option<&[SwitchState]>,
    data: Option<&Dataset>,
    config: &ExperimentConfig,
) -> Result<RankingReport> {
    match method {
        RankMethod::Dirichlet => match states {
            Some(s) => Ok(rank_dirichlet(s)),
            None => rank_stored_switches(model),
        },
        RankMethod::L1 => Ok(rank_magnitude(model, Norm::L1)),
        RankMethod::L2 => Ok(rank_magnitude(model, Norm::L2)),
        RankMethod::Derivative => {
            let data = data.ok_or_else(|| Error::contract("derivative ranking needs data"))?;
            rank_derivative(model, &data.head(config.value("rank_batch")?)?)
        }
        RankMethod::Random => Ok(rank_random(model, &mut rng_for(config.seed()?, STREAM_RANK))),
    }
}

pub fn keep_spec(config: &ExperimentConfig) -> Result<KeepSpec> {
    match (config.list("keep_counts")?, config.parsed::<f64>("rate")?) {
        (Some(c), None) => Ok(KeepSpec::Counts(c)),
        (None, Some(r)) => Ok(KeepSpec::Rate(r)),
        (Some(_), Some(_)) => Err(Error::config("set only one of keep_counts and rate")),
        (None, None) => Err(Error::config("missing config keys: keep_counts or rate")),
    }
}

/// Makes and applies a plan. Unless `fold_switch_means` is set, switch
/// values are reset to one first so kept channels are not rescaled.
pub fn prune_model(model: &ModelGraph, ranking: &RankingReport, config: &ExperimentConfig) -> Result<(PruningPlan, ModelGraph)> {
    let plan = make_plan(ranking, &keep_spec(config)?)?;
    let mut source = model.clone();
    if !config.value::<bool>("fold_switch_means")? {
        let ones: Vec<Vec<f64>> = source.switch_dims().into_iter().map(|d| vec![1.0; d]).collect();
        source.set_switch_values(&ones)?;
    }
    let pruned = apply_plan(&source, &plan)?;
    Ok((plan, pruned))
}

pub fn finetune_model(model: &ModelGraph, data: &MnistData, config: &ExperimentConfig) -> Result<ModelGraph> {
    let schedule = weight_schedule(config, "finetune_epochs", "finetune_lr")?;
    let mut rng = rng_for(config.seed()?, STREAM_FINETUNE);
    Ok(finetune(model, &data.train, &data.val, &schedule, &mut rng)?.model)
}

/// One row of the metrics report.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub phase: String,
    pub arch_string: String,
    /// Test error in percent, when the phase changed the model.
    pub error_pct: Option<f64>,
    pub params: usize,
    pub flops: u64,
    pub seconds: f64,
}

impl MetricsRow {
    pub fn measure(phase: &str, model: &ModelGraph, test: Option<&Dataset>, seconds: f64) -> Result<Self> {
        let error_pct = test
            .map(|t| evaluate(model, t, EVAL_BATCH).map(|e| e.error_pct()))
            .transpose()?;
        Ok(MetricsRow {
            phase: phase.to_string(),
            arch_string: model.arch_string(),
            error_pct,
            params: count_params(model),
            flops: count_flops(model, model.input_shape())?,
            seconds,
        })
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv_file(
        path,
        &["phase", "arch_string", "error_pct", "params", "flops", "seconds"],
        rows.iter().map(|r| {
            vec![
                r.phase.clone(),
                r.arch_string.clone(),
                r.error_pct.map(|e| format!("{e:.4}")).unwrap_or_default(),
                r.params.to_string(),
                r.flops.to_string(),
                format!("{:.3}", r.seconds),
            ]
        }),
    )
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub baseline: ModelGraph,
    pub pruned: ModelGraph,
    pub finetuned: ModelGraph,
    pub ranking: RankingReport,
    pub plan: PruningPlan,
    pub rows: Vec<MetricsRow>,
}

impl PipelineOutcome {
    fn error(&self, phase: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.phase == phase).and_then(|r| r.error_pct)
    }

    pub fn baseline_error(&self) -> Option<f64> {
        self.error("baseline")
    }

    pub fn pruned_error(&self) -> Option<f64> {
        self.error("prune")
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error("finetune")
    }

    /// Writes `metrics.csv`, `ranking.csv`, `plan.json` and
    /// `pruned.dpm` (or `model_out`).
    pub fn write_artifacts(&self, out_dir: &Path, model_out: Option<&Path>) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        write_metrics(&out_dir.join("metrics.csv"), &self.rows)?;
        self.ranking
            .write_csv(std::fs::File::create(out_dir.join("ranking.csv"))?)?;
        std::fs::write(out_dir.join("plan.json"), self.plan.to_json()?)?;
        let default_out = out_dir.join("pruned.dpm");
        save_model(&self.finetuned, model_out.unwrap_or(&default_out))
    }
}

fn timed<T>(phase: &str, f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_phase(phase))?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Loads MNIST and runs [`run_pipeline_on`].
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutcome> {
    let data = MnistData::load(config).map_err(|e| e.in_phase("load-data"))?;
    run_pipeline_on(config, &data)
}

/// The full pipeline on loaded data: baseline (trained unless
/// `model_in` is given), switch training for the Dirichlet ranker,
/// ranking, pruning, fine-tuning and a test evaluation after each
/// model-changing phase.
pub fn run_pipeline_on(config: &ExperimentConfig, data: &MnistData) -> Result<PipelineOutcome> {
    config.log_resolved("pipeline");
    let method: RankMethod = config.get("method").unwrap_or("dirichlet").parse()?;
    let mut rows = Vec::new();

    let (baseline, secs) = timed("train-baseline", || {
        let mut m = initial_model(config)?;
        if !config.is_set("model_in") {
            train_baseline(&mut m, data, config)?;
        }
        Ok(m)
    })?;
    rows.push(MetricsRow::measure("baseline", &baseline, Some(&data.test), secs).map_err(|e| e.in_phase("evaluate"))?);

    let mut switched = baseline.with_switches()?;
    let mut states = None;
    if method == RankMethod::Dirichlet {
        let ((m, trained), secs) = timed("switch-train", || learn_switches(&baseline, &data.train, config))?;
        switched = m;
        states = Some(trained.states);
        rows.push(MetricsRow::measure("switch-train", &switched, None, secs)?);
    }

    let (ranking, secs) = timed("rank", || rank_model(&switched, method, states.as_deref(), Some(&data.train), config))?;
    rows.push(MetricsRow::measure("rank", &switched, None, secs)?);

    let ((plan, pruned), secs) = timed("prune", || prune_model(&switched, &ranking, config))?;
    rows.push(MetricsRow::measure("prune", &pruned, Some(&data.test), secs).map_err(|e| e.in_phase("evaluate"))?);

    let (finetuned, secs) = timed("finetune", || finetune_model(&pruned, data, config))?;
    rows.push(MetricsRow::measure("finetune", &finetuned, Some(&data.test), secs).map_err(|e| e.in_phase("evaluate"))?);

    for r in &rows {
        log::info!(
            "{:<12} {:<16} error {:>8} params {:>8} flops {:>10} {:.1}s",
            r.phase,
            r.arch_string,
            r.error_pct.map(|e| format!("{e:.2}%")).unwrap_or_else(|| "-".into()),
            r.params,
            r.flops,
            r.seconds
        );
    }
    Ok(PipelineOutcome {
        baseline,
        pruned,
        finetuned,
        ranking,
        plan,
        rows,
    })
}
