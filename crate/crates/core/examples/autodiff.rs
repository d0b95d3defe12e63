//! The reverse-mode tape: a small convolutional network's loss gradient
//! checked against central finite differences.
//!
//! ```text
//! cargo run --release --example autodiff
//! ```

use dirichlet_pruning::harness::rng_for;
use dirichlet_pruning::tensor::{Tape, Tensor};

fn loss(x: &Tensor, k: &Tensor, w: &Tensor, labels: &[usize]) -> dirichlet_pruning::Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.leaf(k.clone(), true);
    let wv = tape.leaf(w.clone(), true);
    let h = tape.conv2d(xv, kv, 1, 1)?;
    let h = tape.relu(h);
    let h = tape.max_pool2d(h, 2, 2)?;
    let h = tape.flatten(h)?;
    let logits = tape.linear(h, wv, None)?;
    let l = tape.softmax_cross_entropy(logits, labels)?;
    tape.backward(l)?;
    Ok((tape.value(l).item()?, tape.grad(kv).expect("leaf").to_vec()))
}

fn main() -> dirichlet_pruning::Result<()> {
    let mut rng = rng_for(2, 0);
    let x = Tensor::uniform(&[2, 1, 6, 6], -1.0, 1.0, &mut rng);
    let k = Tensor::uniform(&[3, 1, 3, 3], -0.5, 0.5, &mut rng);
    let w = Tensor::uniform(&[4, 27], -0.3, 0.3, &mut rng);
    let labels = [1, 3];
    let (value, grad) = loss(&x, &k, &w, &labels)?;
    println!("loss {value:.6}");
    println!("kernel entry   autodiff        finite diff");
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..k.numel() {
        let mut plus = k.clone();
        plus.data_mut()[i] += h;
        let mut minus = k.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&x, &plus, &w, &labels)?.0 - loss(&x, &minus, &w, &labels)?.0) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs());
        if i < 6 {
            println!("{i:>12} {:>14.9} {fd:>14.9}", grad[i]);
        }
    }
    println!("largest absolute difference over {} entries: {worst:.2e}", k.numel());
    Ok(())
}
