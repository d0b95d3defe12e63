//! Slice-level numeric kernels shared by the tape and the tests.

use crate::error::{Error, Result};

/// `c = op(a) · op(b) + beta · c` for row-major operands.
///
/// `op(a)` is `m×k`; when `trans_a` is set, `a` is stored as `k×m`.
/// Likewise `op(b)` is `k×n`, stored `n×k` when `trans_b` is set.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above guarantee every index reached through these
    // strides lies inside the three slices, and `c` does not alias `a`/`b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output extent of a strided, zero-padded window.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::dim("stride must be at least 1"));
    }
    let padded = input + 2 * pad;
    if kernel == 0 || kernel > padded {
        return Err(Error::dim(format!(
            "kernel extent {kernel} does not fit padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Geometry of one 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub height: usize,
    pub width: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::dim(format!(
                "conv2d expects 4-D input and kernel, got {input:?} and {kernel:?}"
            )));
        }
        if input[1] != kernel[1] {
            return Err(Error::dim(format!(
                "conv2d channel mismatch: input {input:?} vs kernel {kernel:?}"
            )));
        }
        let out_h = conv_out_dim(input[2], kernel[2], stride, pad)
            .map_err(|e| Error::dim(format!("input {input:?}, kernel {kernel:?}: {e}")))?;
        let out_w = conv_out_dim(input[3], kernel[3], stride, pad)
            .map_err(|e| Error::dim(format!("input {input:?}, kernel {kernel:?}: {e}")))?;
        Ok(ConvGeometry {
            batch: input[0],
            c_in: input[1],
            height: input[2],
            width: input[3],
            c_out: kernel[0],
            kh: kernel[2],
            kw: kernel[3],
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.c_out, self.out_h, self.out_w]
    }

    fn image_len(&self) -> usize {
        self.c_in * self.height * self.width
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate hit by output `o` and kernel tap `t`, if not padding.
    #[inline]
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < extent {
            Some(pos as usize)
        } else {
            None
        }
    }
}

/// Reference cross-correlation written as plain nested loops.
pub fn conv2d_direct(input: &[f64], kernel: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.c_out * g.out_plane()];
    for n in 0..g.batch {
        for co in 0..g.c_out {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = 0.0;
                    for ci in 0..g.c_in {
                        for ky in 0..g.kh {
                            let Some(iy) = g.source(oy, ky, g.height) else {
                                continue;
                            };
                            for kx in 0..g.kw {
                                let Some(ix) = g.source(ox, kx, g.width) else {
                                    continue;
                                };
                                acc += input[((n * g.c_in + ci) * g.height + iy) * g.width + ix]
                                    * kernel[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                            }
                        }
                    }
                    out[((n * g.c_out + co) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    out
}

/// Unfolds one image into a `patch_len × out_plane` column matrix.
pub fn im2col(image: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let plane = g.out_plane();
    for ci in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = g.source(oy, ky, g.height);
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match (iy, g.source(ox, kx, g.width)) {
                            (Some(iy), Some(ix)) => image[(ci * g.height + iy) * g.width + ix],
                            _ => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
pub fn col2im(cols: &[f64], g: &ConvGeometry, image: &mut [f64]) {
    let plane = g.out_plane();
    for ci in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            image[(ci * g.height + iy) * g.width + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation through im2col and GEMM, one image at a time.
pub fn conv2d_im2col(input: &[f64], kernel: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let plane = g.out_plane();
    let mut out = vec![0.0; g.batch * g.c_out * plane];
    let mut cols = vec![0.0; g.patch_len() * plane];
    for n in 0..g.batch {
        im2col(&input[n * g.image_len()..(n + 1) * g.image_len()], g, &mut cols);
        gemm(
            g.c_out,
            g.patch_len(),
            plane,
            kernel,
            false,
            &cols,
            false,
            &mut out[n * g.c_out * plane..(n + 1) * g.c_out * plane],
            0.0,
        );
    }
    out
}

/// Gradients of [`conv2d_im2col`] with respect to input and kernel.
pub fn conv2d_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let plane = g.out_plane();
    let patch = g.patch_len();
    let mut g_input = want_input.then(|| vec![0.0; input.len()]);
    let mut g_kernel = want_kernel.then(|| vec![0.0; kernel.len()]);
    let mut cols = vec![0.0; patch * plane];
    for n in 0..g.batch {
        let go = &grad_out[n * g.c_out * plane..(n + 1) * g.c_out * plane];
        if let Some(gk) = g_kernel.as_mut() {
            im2col(&input[n * g.image_len()..(n + 1) * g.image_len()], g, &mut cols);
            // gK += gO · colsᵀ
            gemm(g.c_out, plane, patch, go, false, &cols, true, gk, 1.0);
        }
        if let Some(gi) = g_input.as_mut() {
            // gcols = Kᵀ · gO
            gemm(patch, g.c_out, plane, kernel, true, go, false, &mut cols, 0.0);
            col2im(
                &cols,
                g,
                &mut gi[n * g.image_len()..(n + 1) * g.image_len()],
            );
        }
    }
    (g_input, g_kernel)
}

/// Max pooling over `k×k` windows; returns the pooled values and the flat
/// input index each one came from.
pub fn max_pool2d(
    input: &[f64],
    shape: &[usize],
    k: usize,
    stride: usize,
) -> Result<(Vec<f64>, Vec<usize>, Vec<usize>)> {
    if shape.len() != 4 {
        return Err(Error::dim(format!("max_pool2d expects 4-D input, got {shape:?}")));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let oh = conv_out_dim(h, k, stride, 0)?;
    let ow = conv_out_dim(w, k, stride, 0)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = input[best_idx];
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    Ok((out, arg, vec![n, c, oh, ow]))
}
