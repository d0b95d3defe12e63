use clap::{Parser, Subcommand};
use dirichlet_pruning::harness::pipeline::{
    finetune_model, initial_model, train_baseline, learn_switches, prune_model, rank_model, write_metrics, MetricsRow, MnistData,
};
use dirichlet_pruning::harness::{
    config::KEYS, export_feature_maps, load_mnist_split, run_pipeline, run_posterior_compare, ExperimentConfig,
    Split,
};
use dirichlet_pruning::models::{load_model, save_model, ModelGraph};
use dirichlet_pruning::pruning::{RankMethod, RankingReport};
use dirichlet_pruning::switch::posterior_report;
use dirichlet_pruning::{Error, Result};
use std::path::PathBuf;
use std::time::Instant;

/// Dirichlet channel pruning toolkit.
///
/// Every setting lives in a flat key=value config; `--set key=value`
/// overrides single keys. Run `dprune keys` to list them.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Config file (key = value per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a LeNet-5 baseline on MNIST (or continue `model_in`).
    Train,
    /// Learn importance switches for `model_in`; stores posterior means.
    SwitchTrain,
    /// Rank channels of `model_in` with `method`; writes `ranking`.
    Rank,
    /// Prune `model_in` using the `ranking` CSV and `keep_counts`/`rate`.
    Prune,
    /// Fine-tune `model_in` on MNIST.
    Finetune,
    /// Report test error, parameters and FLOPs of `model_in`.
    Eval,
    /// Compare implicit-MC and analytic-mean switch posteriors on a synthetic task.
    PosteriorCompare,
    /// Write per-channel feature maps of one test image as PGM files.
    ExportMaps,
    /// Run switch training, ranking, pruning and fine-tuning end to end.
    Pipeline,
    /// List the accepted config keys.
    Keys,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(1);
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for pair in &cli.set {
        config.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string())?;
    }
    Ok(config)
}

fn required_path(config: &ExperimentConfig, key: &str) -> Result<PathBuf> {
    config.require(&[key])?;
    Ok(config.path(key).expect("checked"))
}

fn out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = config.path("out_dir").expect("has default");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn save(model: &ModelGraph, config: &ExperimentConfig) -> Result<()> {
    let path = required_path(config, "model_out")?;
    save_model(model, &path)?;
    println!("model {} ({}) -> {}", model.arch_string(), model.metadata.training_history.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    match cli.command {
        Command::Keys => {
            for (k, default, meaning) in KEYS {
                println!("{k:<18} {:<16} {meaning}", default.unwrap_or("-"));
            }
            Ok(())
        }
        Command::Train => {
            config.require(&["model_out"])?;
            config.log_resolved("train");
            let data = MnistData::load(&config)?;
            let mut model = initial_model(&config)?;
            train_baseline(&mut model, &data, &config)?;
            report_eval(&model, &data.test)?;
            save(&model, &config)
        }
        Command::SwitchTrain => {
            let model = load_model(required_path(&config, "model_in")?)?;
            config.require(&["model_out"])?;
            config.log_resolved("switch-train");
            let data = MnistData::load(&config)?;
            let (switched, trained) = learn_switches(&model, &data.train, &config)?;
            let path = out_dir(&config)?.join("switches.csv");
            dirichlet_pruning::harness::write_csv_file(
                &path,
                &["layer", "channel", "phi", "mean", "std"],
                trained.states.iter().enumerate().flat_map(|(l, s)| {
                    let phi = s.phi();
                    posterior_report(s)
                        .into_iter()
                        .enumerate()
                        .map(move |(c, (m, sd))| {
                            vec![l.to_string(), c.to_string(), format!("{:e}", phi[c]), format!("{m:e}"), format!("{sd:e}")]
                        })
                        .collect::<Vec<_>>()
                }),
            )?;
            for e in &trained.epochs {
                println!(
                    "switch {:?} epoch {}: neg ELBO {:.5} ({:.2}s)",
                    e.switch, e.epoch, e.mean_neg_elbo, e.seconds
                );
            }
            println!("posteriors -> {}", path.display());
            save(&switched, &config)
        }
        Command::Rank => {
            let model = load_model(required_path(&config, "model_in")?)?;
            let path = required_path(&config, "ranking")?;
            config.log_resolved("rank");
            let method: RankMethod = config.get("method").unwrap_or("dirichlet").parse()?;
            let data = match method {
                RankMethod::Derivative => Some(MnistData::load(&config)?.train),
                _ => None,
            };
            let ranking = rank_model(&model.with_switches()?, method, None, data.as_ref(), &config)?;
            ranking.write_csv(std::fs::File::create(&path)?)?;
            println!("{method} ranking of {} -> {}", model.arch_string(), path.display());
            Ok(())
        }
        Command::Prune => {
            let model = load_model(required_path(&config, "model_in")?)?;
            let ranking = RankingReport::read_csv(std::fs::File::open(required_path(&config, "ranking")?)?)?;
            config.require(&["model_out"])?;
            config.log_resolved("prune");
            let (plan, pruned) = prune_model(&model.with_switches()?, &ranking, &config)?;
            let plan_path = config
                .path("plan")
                .unwrap_or_else(|| out_dir(&config).map(|d| d.join("plan.json")).unwrap_or_else(|_| "plan.json".into()));
            std::fs::write(&plan_path, plan.to_json()?)?;
            println!("plan -> {}", plan_path.display());
            save(&pruned, &config)
        }
        Command::Finetune => {
            let model = load_model(required_path(&config, "model_in")?)?;
            config.require(&["model_out"])?;
            config.log_resolved("finetune");
            let data = MnistData::load(&config)?;
            let tuned = finetune_model(&model, &data, &config)?;
            report_eval(&tuned, &data.test)?;
            save(&tuned, &config)
        }
        Command::Eval => {
            let model = load_model(required_path(&config, "model_in")?)?;
            config.log_resolved("eval");
            let mut test = load_mnist_split(config.path("mnist_dir").expect("default"), Split::Test)?;
            if let Some(n) = config.parsed::<usize>("test_subset")? {
                test = test.head(n)?;
            }
            let start = Instant::now();
            let mut row = MetricsRow::measure("eval", &model, Some(&test), 0.0)?;
            row.seconds = start.elapsed().as_secs_f64();
            println!(
                "{}: test error {:.2}% on {} images, {} params, {} flops",
                row.arch_string,
                row.error_pct.unwrap_or(f64::NAN),
                test.len(),
                row.params,
                row.flops
            );
            let path = out_dir(&config)?.join("eval.csv");
            write_metrics(&path, &[row])?;
            println!("metrics -> {}", path.display());
            Ok(())
        }
        Command::PosteriorCompare => {
            let cmp = run_posterior_compare(&config)?;
            let (a, b) = cmp.write_reports(&out_dir(&config)?)?;
            println!(
                "spearman vs true switch: implicit_mc {:.4}, analytic_mean {:.4}",
                cmp.spearman_mc, cmp.spearman_am
            );
            println!(
                "epoch seconds: implicit_mc {:.3}, analytic_mean {:.3}",
                cmp.mean_epoch_seconds("implicit_mc"),
                cmp.mean_epoch_seconds("analytic_mean")
            );
            println!("reports -> {}, {}", a.display(), b.display());
            Ok(())
        }
        Command::ExportMaps => {
            let model = load_model(required_path(&config, "model_in")?)?;
            config.log_resolved("export-maps");
            let test = load_mnist_split(config.path("mnist_dir").expect("default"), Split::Test)?;
            let index: usize = config.value("image_index")?;
            if index >= test.len() {
                return Err(Error::Index(format!("image_index {index} of {} test images", test.len())));
            }
            let image = test.inputs.select_rows(&[index])?;
            let ranking = config
                .path("ranking")
                .map(|p| std::fs::File::open(p).map_err(Error::from).and_then(RankingReport::read_csv))
                .transpose()?;
            let layer: usize = config.value("layer")?;
            let dir = out_dir(&config)?.join(format!("maps_layer{layer}"));
            let files = export_feature_maps(&model, &image, layer, ranking.as_ref(), &dir)?;
            println!("{} feature maps -> {}", files.len(), dir.display());
            Ok(())
        }
        Command::Pipeline => {
            let outcome = run_pipeline(&config)?;
            let dir = out_dir(&config)?;
            outcome.write_artifacts(&dir, config.path("model_out").as_deref())?;
            for r in &outcome.rows {
                println!(
                    "{:<12} {:<16} {:>8} params {:>8} flops {:>10}",
                    r.phase,
                    r.arch_string,
                    r.error_pct.map(|e| format!("{e:.2}%")).unwrap_or_else(|| "-".into()),
                    r.params,
                    r.flops
                );
            }
            println!("artifacts -> {}", dir.display());
            Ok(())
        }
    }
}

fn report_eval(model: &ModelGraph, test: &dirichlet_pruning::data::Dataset) -> Result<()> {
    let e = dirichlet_pruning::models::evaluate(model, test, 500)?;
    println!(
        "{}: test error {:.2}% (loss {:.4}) on {} images",
        model.arch_string(),
        e.error_pct(),
        e.loss,
        test.len()
    );
    Ok(())
}
