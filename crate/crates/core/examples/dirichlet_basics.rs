//! Dirichlet sampling, means and the closed-form KL divergence.
//!
//! ```text
//! cargo run --release --example dirichlet_basics
//! ```

use dirichlet_pruning::dirichlet::{kl_divergence, mean, sample_values, DirichletParams};
use dirichlet_pruning::harness::rng_for;

fn main() -> dirichlet_pruning::Result<()> {
    let prior = DirichletParams::symmetric(0.5, 4)?;
    let posterior = DirichletParams::new(vec![8.0, 3.0, 0.6, 0.4])?;
    let mut rng = rng_for(0, 0);

    println!("posterior mean    {:.4?}", mean(&posterior).values());
    println!("posterior var     {:.4?}", posterior.marginal_variance());
    let n = 20_000;
    let mut acc = vec![0.0; 4];
    for _ in 0..n {
        for (a, s) in acc.iter_mut().zip(sample_values(&posterior, &mut rng)?.values()) {
            *a += s / n as f64;
        }
    }
    println!("empirical mean    {acc:.4?} ({n} draws)");

    println!("a sparse prior puts mass near the corners:");
    for _ in 0..3 {
        println!("  {:.4?}", sample_values(&prior, &mut rng)?.values());
    }
    println!("KL(posterior || prior) = {:.6}", kl_divergence(&posterior, &prior)?);
    println!("KL(prior || prior)     = {:.6}", kl_divergence(&prior, &prior)?);
    Ok(())
}
