use super::kernels::{self, ConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};
use crate::special::psi1;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Linear { x: Var, w: Var, b: Option<Var> },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Relu { x: Var },
    ChannelMul { h: Var, s: Var },
    ChannelAdd { h: Var, b: Var },
    Conv2d { x: Var, k: Var, geom: ConvGeometry },
    MaxPool { x: Var, argmax: Vec<usize> },
    Reshape { x: Var },
    Sum { x: Var },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Softplus { x: Var },
    Normalize { x: Var },
    DirichletReparam { phi: Var, dgamma_dphi: Vec<f64>, gamma_sum: f64 },
    KlDirichlet { q: Var, prior: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    retain: bool,
    grad: Option<Vec<f64>>,
}

/// Append-only record of a differentiable computation.
///
/// Leaves created with `requires_grad` (and nodes marked with
/// [`Tape::retain_grad`]) keep their gradients across `backward` calls, so
/// repeated backward passes accumulate. All other gradients are transient.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node and saved activation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Drops every node created after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf or retained node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Keep this node's gradient after `backward`.
    pub fn retain_grad(&mut self, v: Var) {
        self.nodes[v.0].retain = true;
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            retain: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    // ---- primitives ---------------------------------------------------

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul shape mismatch: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, 0.0);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b }, rg))
    }

    /// Fully-connected map `x[N×d_in] · w[d_out×d_in]ᵀ + b[d_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(Error::dim(format!("linear shape mismatch: input {sx:?}, weight {sw:?}")));
        }
        let (n, d_in, d_out) = (sx[0], sx[1], sw[0]);
        let mut out = vec![0.0; n * d_out];
        kernels::gemm(n, d_in, d_out, self.data(x), false, self.data(w), true, &mut out, 0.0);
        if let Some(b) = b {
            let bias = self.data(b);
            if bias.len() != d_out {
                return Err(Error::dim(format!(
                    "linear bias length {} does not match {d_out} outputs",
                    bias.len()
                )));
            }
            for row in out.chunks_mut(d_out) {
                for (o, bb) in row.iter_mut().zip(bias) {
                    *o += bb;
                }
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(Tensor::new(vec![n, d_out], out)?, Op::Linear { x, w, b }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what} shape mismatch: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|v| v * c).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Scale { x, c }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Relu { x }, rg)
    }

    fn check_channels(&self, h: Var, s: Var, what: &str) -> Result<(usize, usize)> {
        let sh = self.shape(h);
        let ss = self.shape(s);
        if sh.len() < 2 || ss.len() != 1 || ss[0] != sh[1] {
            return Err(Error::dim(format!(
                "{what}: channel vector {ss:?} does not match channel axis of {sh:?}"
            )));
        }
        Ok((sh[1], self.value(h).channel_stride()))
    }

    /// Multiplies channel `j` (axis 1) of `h` by `s[j]`.
    pub fn broadcast_mul_channels(&mut self, h: Var, s: Var) -> Result<Var> {
        let (c, inner) = self.check_channels(h, s, "broadcast_mul_channels")?;
        let sv = self.data(s);
        let mut out = self.data(h).to_vec();
        for (i, chunk) in out.chunks_mut(inner).enumerate() {
            let f = sv[i % c];
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.any_grad(&[h, s]);
        let shape = self.shape(h).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelMul { h, s }, rg))
    }

    /// Adds `b[j]` to every element of channel `j` (axis 1) of `h`.
    pub fn add_channel_bias(&mut self, h: Var, b: Var) -> Result<Var> {
        let (c, inner) = self.check_channels(h, b, "add_channel_bias")?;
        let bv = self.data(b);
        let mut out = self.data(h).to_vec();
        for (i, chunk) in out.chunks_mut(inner).enumerate() {
            let f = bv[i % c];
            chunk.iter_mut().for_each(|v| *v += f);
        }
        let rg = self.any_grad(&[h, b]);
        let shape = self.shape(h).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelAdd { h, b }, rg))
    }

    /// Cross-correlation of `x[N×C_in×H×W]` with `k[C_out×C_in×kh×kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(k), stride, pad)?;
        let out = kernels::conv2d_im2col(self.data(x), self.data(k), &geom);
        let rg = self.any_grad(&[x, k]);
        Ok(self.push(Tensor::new(geom.output_shape(), out)?, Op::Conv2d { x, k, geom }, rg))
    }

    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (out, argmax, shape) = kernels::max_pool2d(self.data(x), self.shape(x), k, stride)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MaxPool { x, argmax }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), self.data(x).to_vec())?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Collapses all axes after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let shape = [s[0], s[1..].iter().product()];
        self.reshape(x, &shape)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.data(x).iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    /// Batch-mean of `-log softmax(logits)[label]`, using a max shift.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim(format!(
                "softmax_cross_entropy: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Index(format!("label {bad} out of range for {k} classes")));
        }
        let n = labels.len();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for (i, row) in self.data(logits).chunks(k).enumerate() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + z.ln();
            loss += lse - row[labels[i]];
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / n as f64),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `ln(1 + e^x) + floor`, elementwise.
    pub fn softplus(&mut self, x: Var, floor: f64) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| softplus(v) + floor).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Softplus { x }, rg)
    }

    /// `x / Σx` for a positive vector.
    pub fn normalize(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.data(x).iter().sum();
        if !(total > 0.0) {
            return Err(Error::numeric(format!("normalize: non-positive total {total}")));
        }
        let out: Vec<f64> = self.data(x).iter().map(|v| v / total).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Normalize { x }, rg))
    }

    /// Simplex point `γ/Σγ` built from Gamma draws `γ_j ~ Gam(φ_j, 1)`.
    ///
    /// The forward value is fixed by the draws; the backward pass routes
    /// through the normalization's quotient rule and the supplied implicit
    /// derivatives `∂γ_j/∂φ_j`.
    pub fn dirichlet_reparam(&mut self, phi: Var, gamma: &[f64], dgamma_dphi: &[f64]) -> Result<Var> {
        let d = self.value(phi).numel();
        if gamma.len() != d || dgamma_dphi.len() != d {
            return Err(Error::dim(format!(
                "dirichlet_reparam: {d} concentrations, {} draws, {} derivatives",
                gamma.len(),
                dgamma_dphi.len()
            )));
        }
        let gamma_sum: f64 = gamma.iter().sum();
        if !(gamma_sum > 0.0) {
            return Err(Error::numeric("dirichlet_reparam: all Gamma draws underflowed"));
        }
        let out: Vec<f64> = gamma.iter().map(|g| g / gamma_sum).collect();
        let rg = self.any_grad(&[phi]);
        Ok(self.push(
            Tensor::vector(out),
            Op::DirichletReparam {
                phi,
                dgamma_dphi: dgamma_dphi.to_vec(),
                gamma_sum,
            },
            rg,
        ))
    }

    /// `KL(Dir(q) ‖ Dir(prior))` as a scalar node, differentiable in `q`.
    pub fn kl_dirichlet(&mut self, q: Var, prior: &[f64]) -> Result<Var> {
        let qv = self.data(q);
        if qv.len() != prior.len() {
            return Err(Error::dim(format!(
                "kl_dirichlet: {} vs {} concentrations",
                qv.len(),
                prior.len()
            )));
        }
        let kl = crate::dirichlet::kl_unchecked(qv, prior);
        let rg = self.any_grad(&[q]);
        Ok(self.push(
            Tensor::scalar(kl),
            Op::KlDirichlet {
                q,
                prior: prior.to_vec(),
            },
            rg,
        ))
    }

    // ---- reverse pass -------------------------------------------------

    /// Back-propagates from a scalar `loss`, accumulating into leaves.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.backward_scaled(loss, 1.0)
    }

    /// Like [`Tape::backward`] with the seed gradient set to `seed`.
    pub fn backward_scaled(&mut self, loss: Var, seed: f64) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::contract("backward: loss is not on this tape"));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![seed]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            if matches!(node.op, Op::Leaf) || node.retain {
                grads[idx] = Some(g);
            }
        }
        for (idx, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut self.nodes[idx];
            match node.grad.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g, false, self.data(*b), true, &mut ga, 0.0);
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(k, m, n, self.data(*a), true, g, false, &mut gb, 0.0);
                    accumulate(grads, *b, gb);
                }
            }
            Op::Linear { x, w, b } => {
                let (n, d_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                let d_out = self.shape(*w)[0];
                if self.wants(*x) {
                    let mut gx = vec![0.0; n * d_in];
                    kernels::gemm(n, d_out, d_in, g, false, self.data(*w), false, &mut gx, 0.0);
                    accumulate(grads, *x, gx);
                }
                if self.wants(*w) {
                    let mut gw = vec![0.0; d_out * d_in];
                    kernels::gemm(d_out, n, d_in, g, true, self.data(*x), false, &mut gw, 0.0);
                    accumulate(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut gb = vec![0.0; d_out];
                        for row in g.chunks(d_out) {
                            gb.iter_mut().zip(row).for_each(|(a, r)| *a += r);
                        }
                        accumulate(grads, *b, gb);
                    }
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let ga = g.iter().zip(self.data(*b)).map(|(x, y)| x * y).collect();
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let gb = g.iter().zip(self.data(*a)).map(|(x, y)| x * y).collect();
                    accumulate(grads, *b, gb);
                }
            }
            Op::Scale { x, c } => {
                accumulate(grads, *x, g.iter().map(|v| v * c).collect());
            }
            Op::Relu { x } => {
                let gx = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::ChannelMul { h, s } => {
                let c = self.shape(*s)[0];
                let inner = self.value(*h).channel_stride();
                let sv = self.data(*s);
                if self.wants(*h) {
                    let mut gh = g.to_vec();
                    for (i, chunk) in gh.chunks_mut(inner).enumerate() {
                        let f = sv[i % c];
                        chunk.iter_mut().for_each(|v| *v *= f);
                    }
                    accumulate(grads, *h, gh);
                }
                if self.wants(*s) {
                    let mut gs = vec![0.0; c];
                    for (i, (gc, hc)) in g.chunks(inner).zip(self.data(*h).chunks(inner)).enumerate() {
                        gs[i % c] += gc.iter().zip(hc).map(|(a, b)| a * b).sum::<f64>();
                    }
                    accumulate(grads, *s, gs);
                }
            }
            Op::ChannelAdd { h, b } => {
                if self.wants(*h) {
                    accumulate(grads, *h, g.to_vec());
                }
                if self.wants(*b) {
                    let c = self.shape(*b)[0];
                    let inner = self.value(*h).channel_stride();
                    let mut gb = vec![0.0; c];
                    for (i, gc) in g.chunks(inner).enumerate() {
                        gb[i % c] += gc.iter().sum::<f64>();
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Conv2d { x, k, geom } => {
                let (gx, gk) = kernels::conv2d_backward(
                    self.data(*x),
                    self.data(*k),
                    g,
                    geom,
                    self.wants(*x),
                    self.wants(*k),
                );
                if let Some(gx) = gx {
                    accumulate(grads, *x, gx);
                }
                if let Some(gk) = gk {
                    accumulate(grads, *k, gk);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![0.0; self.value(*x).numel()];
                for (gv, &src) in g.iter().zip(argmax) {
                    gx[src] += gv;
                }
                accumulate(grads, *x, gx);
            }
            Op::Reshape { x } => accumulate(grads, *x, g.to_vec()),
            Op::Sum { x } => {
                accumulate(grads, *x, vec![g[0]; self.value(*x).numel()]);
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gl[i * k + l] -= scale;
                }
                accumulate(grads, *logits, gl);
            }
            Op::Softplus { x } => {
                let gx = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(gv, &xv)| gv * sigmoid(xv))
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Normalize { x } => {
                let y = node.value.data();
                let total: f64 = self.data(*x).iter().sum();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                accumulate(grads, *x, g.iter().map(|gv| (gv - dot) / total).collect());
            }
            Op::DirichletReparam {
                phi,
                dgamma_dphi,
                gamma_sum,
            } => {
                let s = node.value.data();
                let dot: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
                let gphi = g
                    .iter()
                    .zip(dgamma_dphi)
                    .map(|(gv, dg)| (gv - dot) / gamma_sum * dg)
                    .collect();
                accumulate(grads, *phi, gphi);
            }
            Op::KlDirichlet { q, prior } => {
                let qv = self.data(*q);
                let q_total: f64 = qv.iter().sum();
                let p_total: f64 = prior.iter().sum();
                let common = (q_total - p_total) * psi1(q_total);
                let gq = qv
                    .iter()
                    .zip(prior)
                    .map(|(&qj, &pj)| g[0] * ((qj - pj) * psi1(qj) - common))
                    .collect();
                accumulate(grads, *q, gq);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match grads[v.0].as_mut() {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => grads[v.0] = Some(g),
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
