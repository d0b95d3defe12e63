//! Ranks the channels of a LeNet-5 with every method, prunes half of each
//! layer and reports the test error before fine-tuning.
//!
//! Needs MNIST under `mnist_dir` (see `scripts/fetch_mnist.sh`).
//!
//! ```text
//! cargo run --release --example rank_compare -- [config] [key=value ...]
//! cargo run --release --example rank_compare -- examples/configs/rank_compare.conf
//! ```

use dirichlet_pruning::harness::pipeline::{learn_switches, prune_model, rank_model, train_baseline};
use dirichlet_pruning::harness::{ExperimentConfig, MnistData};
use dirichlet_pruning::models::{build_lenet5, evaluate, load_model};
use dirichlet_pruning::pruning::RankMethod;

fn main() -> dirichlet_pruning::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = ExperimentConfig::from_args(
        &[("train_subset", "10000"), ("rate", "0.5"), ("mode", "joint"), ("switch_subset", "2000")],
        std::env::args().skip(1),
    )?;
    let data = MnistData::load(&config)?;
    let model = match config.path("model_in") {
        Some(p) => load_model(p)?,
        None => {
            let mut m = build_lenet5([20, 50, 800, 500], config.seed()?)?;
            train_baseline(&mut m, &data, &config)?;
            m
        }
    };
    println!("baseline {}: {:.2}% test error", model.arch_string(), evaluate(&model, &data.test, 500)?.error_pct());

    let (switched, trained) = learn_switches(&model, &data.train, &config)?;
    for method in [RankMethod::Dirichlet, RankMethod::L1, RankMethod::L2, RankMethod::Derivative, RankMethod::Random] {
        let ranking = rank_model(&switched, method, Some(&trained.states), Some(&data.train), &config)?;
        let (_, pruned) = prune_model(&switched, &ranking, &config)?;
        println!(
            "{method:<10} -> {}: {:.2}% test error before fine-tuning",
            pruned.arch_string(),
            evaluate(&pruned, &data.test, 500)?.error_pct()
        );
    }
    Ok(())
}
