//! Writes the first-layer feature maps of one MNIST test digit as PGM
//! images, named by their rank under a ranking CSV when one is given.
//!
//! ```text
//! cargo run --release --example feature_maps -- model_in=out/lenet/pruned.dpm [ranking=...] [layer=0]
//! ```

use dirichlet_pruning::harness::{export_feature_maps, load_mnist_split, ExperimentConfig, Split};
use dirichlet_pruning::models::load_model;
use dirichlet_pruning::pruning::RankingReport;
use dirichlet_pruning::Error;

fn main() -> dirichlet_pruning::Result<()> {
    let config = ExperimentConfig::from_args(&[("out_dir", "out/maps")], std::env::args().skip(1))?;
    config.require(&["model_in"])?;
    let model = load_model(config.path("model_in").expect("required"))?;
    let test = load_mnist_split(config.path("mnist_dir").expect("has default"), Split::Test)?;
    let index: usize = config.value("image_index")?;
    if index >= test.len() {
        return Err(Error::Index(format!("image_index {index} of {}", test.len())));
    }
    let ranking = match config.path("ranking") {
        Some(p) => Some(RankingReport::read_csv(std::fs::File::open(p)?)?),
        None => None,
    };
    let layer: usize = config.value("layer")?;
    let image = test.inputs.select_rows(&[index])?;
    let out = config.path("out_dir").expect("has default");
    let files = export_feature_maps(&model, &image, layer, ranking.as_ref(), &out)?;
    println!("digit {} (label {}): {} maps", index, test.labels[index], files.len());
    for f in &files {
        println!("  {}", f.display());
    }
    Ok(())
}
