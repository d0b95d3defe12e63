//! The full pruning pipeline on MNIST: baseline training, switch learning,
//! Dirichlet ranking, pruning to fixed widths and fine-tuning.
//!
//! Needs MNIST under `mnist_dir` (see `scripts/fetch_mnist.sh`).
//!
//! ```text
//! cargo run --release --example lenet_pipeline -- examples/configs/lenet_fast.conf
//! cargo run --release --example lenet_pipeline -- examples/configs/lenet_full.conf
//! ```

use dirichlet_pruning::harness::{run_pipeline, ExperimentConfig};

fn main() -> dirichlet_pruning::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = ExperimentConfig::from_args(
        &[("keep_counts", "6,8,40,20"), ("out_dir", "out/lenet")],
        std::env::args().skip(1),
    )?;
    let outcome = run_pipeline(&config)?;
    println!("phase        arch              error    params     flops   seconds");
    for r in &outcome.rows {
        println!(
            "{:<12} {:<16} {:>7} {:>9} {:>9} {:>9.1}",
            r.phase,
            r.arch_string,
            r.error_pct.map(|e| format!("{e:.2}%")).unwrap_or_else(|| "-".into()),
            r.params,
            r.flops,
            r.seconds
        );
    }
    let out = config.path("out_dir").expect("has default");
    outcome.write_artifacts(&out, config.path("model_out").as_deref())?;
    println!("artifacts in {}", out.display());
    Ok(())
}
