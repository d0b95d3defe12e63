//! Implicit reparameterisation of Gamma draws: the shape-gradient of a
//! draw at fixed CDF level, compared with a finite difference of the
//! quantile function.
//!
//! ```text
//! cargo run --release --example gamma_gradients
//! ```

use dirichlet_pruning::harness::rng_for;
use dirichlet_pruning::special::{gamma_implicit_grad, gamma_quantile, gamma_regularized_p, gamma_sample};

fn main() -> dirichlet_pruning::Result<()> {
    println!("shape     u    value       implicit      finite diff");
    for shape in [0.3, 1.0, 3.0, 10.0] {
        for u in [0.1, 0.5, 0.9] {
            let y = gamma_quantile(shape, u)?;
            let g = gamma_implicit_grad(shape, y)?;
            let h = 1e-5 * shape;
            let fd = (gamma_quantile(shape + h, u)? - gamma_quantile(shape - h, u)?) / (2.0 * h);
            println!("{shape:>5} {u:>5} {y:>9.5} {g:>13.7} {fd:>13.7}");
        }
    }

    let mut rng = rng_for(1, 0);
    let d = gamma_sample(2.5, &mut rng)?;
    println!(
        "draw Gam(2.5): value {:.5}, P(2.5, value) = {:.5} (u = {:.5}), d value / d shape = {:.5}",
        d.value,
        gamma_regularized_p(2.5, d.value)?,
        d.u,
        d.dvalue_dshape
    );
    Ok(())
}
