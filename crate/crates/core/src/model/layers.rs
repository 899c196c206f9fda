//! Tensor primitives with hand-written backward passes. A tensor is one
//! image's activations, `channels x height x width`, row-major.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Shape and offset of one convolution inside the flat parameter vector.
/// Weights are `[cout][cin][ky][kx]`, followed by `cout` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub offset: usize,
}

impl ConvSpec {
    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn num_weights(&self) -> usize {
        self.cout * self.fan_in()
    }

    pub fn num_params(&self) -> usize {
        self.num_weights() + self.cout
    }

    fn weights<'a>(&self, theta: &'a [f64]) -> ArrayView2<'a, f64> {
        let w = &theta[self.offset..self.offset + self.num_weights()];
        ArrayView2::from_shape((self.cout, self.fan_in()), w).expect("weight block shape")
    }

    fn bias<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.num_weights();
        &theta[start..start + self.cout]
    }
}

/// Unfolds `x` into a `(cin*k*k) x (h*w)` patch matrix with zero padding
/// `k/2`.
fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    if k == 1 {
        return x.data.clone();
    }
    let (h, w, hw) = (x.h, x.w, x.plane());
    let pad = (k / 2) as isize;
    let mut cols = vec![0.0; x.c * k * k * hw];
    for ci in 0..x.c {
        let src = &x.data[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xo in x0..x1 {
                        dst[xo] = src_row[(xo as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Tensor {
    if k == 1 {
        return Tensor {
            c,
            h,
            w,
            data: cols.to_vec(),
        };
    }
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst_row = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xo in x0..x1 {
                        dst_row[(xo as isize + dx) as usize] += src[xo];
                    }
                }
            }
        }
    }
    out
}

/// Same-size convolution (cross-correlation) plus bias, optionally followed
/// by a rectifier.
pub(crate) fn conv_forward(spec: &ConvSpec, theta: &[f64], x: &Tensor, relu: bool) -> Tensor {
    debug_assert_eq!(x.c, spec.cin);
    let hw = x.plane();
    let cols = im2col(x, spec.k);
    let cols = ArrayView2::from_shape((spec.fan_in(), hw), &cols).expect("patch shape");
    let mut out = Tensor::zeros(spec.cout, x.h, x.w);
    for (co, &b) in spec.bias(theta).iter().enumerate() {
        out.data[co * hw..(co + 1) * hw].fill(b);
    }
    {
        let mut view =
            ArrayViewMut2::from_shape((spec.cout, hw), &mut out.data).expect("output shape");
        general_mat_mul(1.0, &spec.weights(theta), &cols, 1.0, &mut view);
    }
    if relu {
        for v in &mut out.data {
            *v = v.max(0.0);
        }
    }
    out
}

/// Backward of [`conv_forward`] given the gradient with respect to the
/// pre-activation output. Accumulates parameter gradients into `grad` and
/// returns the input gradient when `need_input` is set.
pub(crate) fn conv_backward(
    spec: &ConvSpec,
    theta: &[f64],
    x: &Tensor,
    d_out: &Tensor,
    grad: &mut [f64],
    need_input: bool,
) -> Option<Tensor> {
    let hw = x.plane();
    let cols = im2col(x, spec.k);
    let cols = ArrayView2::from_shape((spec.fan_in(), hw), &cols).expect("patch shape");
    let d = ArrayView2::from_shape((spec.cout, hw), &d_out.data).expect("gradient shape");

    let nw = spec.num_weights();
    {
        let gw = &mut grad[spec.offset..spec.offset + nw];
        let mut gw =
            ArrayViewMut2::from_shape((spec.cout, spec.fan_in()), gw).expect("weight block shape");
        general_mat_mul(1.0, &d, &cols.t(), 1.0, &mut gw);
    }
    let gb = &mut grad[spec.offset + nw..spec.offset + nw + spec.cout];
    for (co, g) in gb.iter_mut().enumerate() {
        *g += d_out.data[co * hw..(co + 1) * hw].iter().sum::<f64>();
    }

    need_input.then(|| {
        let mut d_cols = vec![0.0; spec.fan_in() * hw];
        {
            let mut view =
                ArrayViewMut2::from_shape((spec.fan_in(), hw), &mut d_cols).expect("patch shape");
            general_mat_mul(1.0, &spec.weights(theta).t(), &d, 0.0, &mut view);
        }
        col2im(&d_cols, x.c, x.h, x.w, spec.k)
    })
}

/// Zeroes gradient entries where the rectified output was not positive.
pub(crate) fn relu_backward(out: &Tensor, d_out: &mut Tensor) {
    for (g, &y) in d_out.data.iter_mut().zip(&out.data) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max pooling with ceil output size. Returns the pooled tensor and the
/// flat source index of every output cell.
pub(crate) fn max_pool(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (oh, ow) = (x.h.div_ceil(2), x.w.div_ceil(2));
    let mut out = Tensor::zeros(x.c, oh, ow);
    let mut arg = vec![0usize; x.c * oh * ow];
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = usize::MAX;
                for y in 2 * oy..(2 * oy + 2).min(x.h) {
                    for xx in 2 * ox..(2 * ox + 2).min(x.w) {
                        let p = (c * x.h + y) * x.w + xx;
                        if best == usize::MAX || x.data[p] > x.data[best] {
                            best = p;
                        }
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                out.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool_backward(
    d_out: &Tensor,
    arg: &[usize],
    c: usize,
    h: usize,
    w: usize,
) -> Tensor {
    let mut d = Tensor::zeros(c, h, w);
    for (g, &src) in d_out.data.iter().zip(arg) {
        d.data[src] += g;
    }
    d
}

/// Nearest-neighbour 2x upsampling cropped to `h x w`.
pub(crate) fn upsample(x: &Tensor, h: usize, w: usize) -> Tensor {
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                out.data[(c * h + y) * w + xx] = x.data[(c * x.h + y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(d_out: &Tensor, h: usize, w: usize) -> Tensor {
    let mut d = Tensor::zeros(d_out.c, h, w);
    for c in 0..d_out.c {
        for y in 0..d_out.h {
            for x in 0..d_out.w {
                d.data[(c * h + y / 2) * w + x / 2] += d_out.data[(c * d_out.h + y) * d_out.w + x];
            }
        }
    }
    d
}

/// Channel concatenation `[a; b]`.
pub(crate) fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor {
        c: a.c + b.c,
        h: a.h,
        w: a.w,
        data,
    }
}

/// Splits a concatenated gradient back into its `a` and `b` parts.
pub(crate) fn split(d: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let cut = ca * d.plane();
    let a = Tensor {
        c: ca,
        h: d.h,
        w: d.w,
        data: d.data[..cut].to_vec(),
    };
    let b = Tensor {
        c: d.c - ca,
        h: d.h,
        w: d.w,
        data: d.data[cut..].to_vec(),
    };
    (a, b)
}

/// Per-pixel softmax over channels.
pub(crate) fn softmax(logits: &Tensor) -> Vec<f64> {
    let (c_n, m) = (logits.c, logits.plane());
    let mut out = vec![0.0; c_n * m];
    for j in 0..m {
        let max = (0..c_n)
            .map(|c| logits.data[c * m + j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..c_n {
            let e = (logits.data[c * m + j] - max).exp();
            out[c * m + j] = e;
            sum += e;
        }
        for c in 0..c_n {
            out[c * m + j] /= sum;
        }
    }
    out
}

/// Gradient with respect to the logits given the gradient with respect to
/// the softmax output `p`.
pub(crate) fn softmax_backward(p: &[f64], d_p: &[f64], c_n: usize, h: usize, w: usize) -> Tensor {
    let m = h * w;
    let mut d = Tensor::zeros(c_n, h, w);
    for j in 0..m {
        let dot: f64 = (0..c_n).map(|c| p[c * m + j] * d_p[c * m + j]).sum();
        for c in 0..c_n {
            d.data[c * m + j] = p[c * m + j] * (d_p[c * m + j] - dot);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn naive_conv(spec: &ConvSpec, theta: &[f64], x: &Tensor) -> Tensor {
        let pad = (spec.k / 2) as isize;
        let mut out = Tensor::zeros(spec.cout, x.h, x.w);
        for co in 0..spec.cout {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = theta[spec.offset + spec.num_weights() + co];
                    for ci in 0..spec.cin {
                        for ky in 0..spec.k {
                            for kx in 0..spec.k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                    continue;
                                }
                                let wi = ((co * spec.cin + ci) * spec.k + ky) * spec.k + kx;
                                acc += theta[spec.offset + wi]
                                    * x.data[(ci * x.h + sy as usize) * x.w + sx as usize];
                            }
                        }
                    }
                    out.data[(co * x.h + y) * x.w + xx] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n)
            .map(|i| ((i * 7919 % 97) as f64 / 48.5 - 1.0) * scale)
            .collect()
    }

    #[test]
    fn im2col_convolution_matches_nested_loops() {
        for k in [1, 3] {
            let spec = ConvSpec {
                cin: 3,
                cout: 4,
                k,
                offset: 5,
            };
            let theta = ramp(5 + spec.num_params(), 0.7);
            let x = Tensor {
                c: 3,
                h: 5,
                w: 7,
                data: ramp(105, 1.3),
            };
            let fast = conv_forward(&spec, &theta, &x, false);
            let slow = naive_conv(&spec, &theta, &x);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let x = Tensor {
            c: 2,
            h: 4,
            w: 3,
            data: ramp(24, 1.0),
        };
        let y = ramp(2 * 9 * 12, 0.5);
        let lhs: f64 = im2col(&x, 3).iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, 2, 4, 3, 3);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pooling_with_odd_sizes() {
        let x = Tensor {
            c: 1,
            h: 3,
            w: 3,
            data: vec![1.0, 5.0, 2.0, 0.0, 3.0, 9.0, 7.0, 4.0, 6.0],
        };
        let (p, arg) = max_pool(&x);
        assert_eq!((p.h, p.w), (2, 2));
        assert_eq!(p.data, vec![5.0, 9.0, 7.0, 6.0]);
        assert_eq!(arg, vec![1, 5, 6, 8]);
        let up = upsample(&p, 3, 3);
        assert_eq!(up.data, vec![5.0, 5.0, 9.0, 5.0, 5.0, 9.0, 7.0, 7.0, 6.0]);
        let back = upsample_backward(&up, 2, 2);
        assert_eq!(back.data, vec![20.0, 18.0, 14.0, 6.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&Tensor::zeros(4, 2, 2));
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
