//! Building LeNet-5, counting parameters and FLOPs, and a DPM1 round trip.
//!
//! ```text
//! cargo run --release --example model_io -- [path]
//! ```

use dirichlet_pruning::models::{
    build_lenet5, count_flops, count_flops_with, count_params, load_model, save_model, FlopConvention,
};
use dirichlet_pruning::tensor::Tensor;

fn main() -> dirichlet_pruning::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "out/lenet.dpm".into());
    let model = build_lenet5([20, 50, 800, 500], 0)?;
    for widths in [[20, 50, 800, 500], [6, 8, 40, 20]] {
        let m = build_lenet5(widths, 0)?;
        println!(
            "{:<14} params {:>7}  MACs {:>8}  2xMAC {:>8}",
            m.arch_string(),
            count_params(&m),
            count_flops(&m, m.input_shape())?,
            count_flops_with(&m, m.input_shape(), FlopConvention::MultiplyAndAdd)?
        );
    }

    if let Some(dir) = std::path::Path::new(&path).parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&model, &path)?;
    let loaded = load_model(&path)?;
    let x = Tensor::full(&[1, 1, 28, 28], 0.5);
    let same = model.forward(&x)?.data() == loaded.forward(&x)?.data();
    println!(
        "saved {} ({} bytes); reloaded forward identical: {same}",
        path,
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}
