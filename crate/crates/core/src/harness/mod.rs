//! Experiment drivers: configuration, data ingestion, synthetic tasks,
//! the end-to-end pruning pipeline and report writers.

pub mod config;
pub mod maps;
pub mod mnist;
pub mod pipeline;
pub mod posterior;
pub mod stats;
pub mod synthetic;

pub use config::ExperimentConfig;
pub use maps::{export_feature_maps, read_pgm, write_pgm};
pub use mnist::{load_mnist_idx, load_mnist_split, Split};
pub use pipeline::{run_pipeline, MetricsRow, MnistData, PipelineOutcome};
pub use posterior::{run_posterior_compare, PosteriorComparison};
pub use synthetic::{gen_synthetic, SyntheticTask};

use crate::error::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// An RNG for one phase of a run: same seed, separate stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Writes a header row and records, creating parent directories.
pub fn write_csv_file<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}
