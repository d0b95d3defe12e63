//! Trains the switch of a synthetic one-hidden-layer network with both
//! estimators and compares the learned posteriors with the simulated
//! ground-truth switch.
//!
//! ```text
//! cargo run --release --example posterior_compare -- [config] [key=value ...]
//! cargo run --release --example posterior_compare -- examples/configs/posterior_100_20.conf
//! ```

use dirichlet_pruning::harness::{run_posterior_compare, ExperimentConfig};

fn main() -> dirichlet_pruning::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = ExperimentConfig::from_args(&[("dims", "100,20"), ("out_dir", "out/posterior")], std::env::args().skip(1))?;
    let cmp = run_posterior_compare(&config)?;
    println!("channel  true      mean_mc   std_mc    mean_am   std_am");
    for r in &cmp.rows {
        println!(
            "{:>7}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}",
            r.channel, r.true_switch, r.mean_mc, r.std_mc, r.mean_am, r.std_am
        );
    }
    let smaller = cmp.rows.iter().filter(|r| r.std_mc <= r.std_am).count();
    println!("spearman(true, mc) = {:.4}", cmp.spearman_mc);
    println!("spearman(true, am) = {:.4}", cmp.spearman_am);
    println!("std_mc <= std_am on {smaller}/{} channels", cmp.rows.len());
    println!(
        "epoch seconds: implicit_mc {:.3}, analytic_mean {:.3}",
        cmp.mean_epoch_seconds("implicit_mc"),
        cmp.mean_epoch_seconds("analytic_mean")
    );
    let (a, b) = cmp.write_reports(&config.path("out_dir").expect("has default"))?;
    println!("wrote {} and {}", a.display(), b.display());
    Ok(())
}
