//! Minimal neural-network primitives over named `f64` arrays.
//!
//! Layers are stateless descriptors; parameters and gradients live in
//! [`Tensors`] keyed by dotted names (`stem.conv.w`). Convolution weights
//! are stored pre-flattened as `[out_ch, in_ch * k * k]` so forward and
//! backward are plain matrix products over im2col patches.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, Array4, ArrayD, ArrayView1, ArrayView2, ArrayView3, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Named parameter/gradient/buffer store with deterministic iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensors(pub BTreeMap<String, ArrayD<f64>>);

impl Tensors {
    pub fn new() -> Self {
        Tensors(BTreeMap::new())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.0
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor `{name}`"))
    }

    pub fn a2(&self, name: &str) -> ArrayView2<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not 2-D"))
    }

    pub fn a1(&self, name: &str) -> ArrayView1<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not 1-D"))
    }

    /// Accumulate `value` into the named gradient slot.
    pub fn add_to(&mut self, name: &str, value: ArrayD<f64>) {
        match self.0.get_mut(name) {
            Some(current) => *current += &value,
            None => {
                self.0.insert(name.to_string(), value);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.0.values().map(|v| v.len()).sum()
    }
}

/// 3x3 or 1x1 convolution without bias (batch norm always follows).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    fn w_name(&self) -> String {
        format!("{}.w", self.name)
    }

    /// He-normal init, deterministic under the caller's generator.
    pub fn init(&self, params: &mut Tensors, rng: &mut ChaCha8Rng) {
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let w = Array2::from_shape_fn((self.out_ch, fan_in), |_| normal.sample(rng));
        params.insert(self.w_name(), w.into_dyn());
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward(&self, params: &Tensors, x: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let weight = params.a2(&self.w_name());
        let mut out = Array4::zeros((n, self.out_ch, oh, ow));
        for i in 0..n {
            let col = im2col(&x.index_axis(ndarray::Axis(0), i), self.kernel, self.stride, self.pad, oh, ow);
            let y = weight.dot(&col);
            for c in 0..self.out_ch {
                for p in 0..oh * ow {
                    out[[i, c, p / ow, p % ow]] = y[[c, p]];
                }
            }
        }
        out
    }

    /// Returns the input gradient and accumulates the weight gradient.
    pub fn backward(
        &self,
        params: &Tensors,
        x: &Array4<f64>,
        grad_out: &Array4<f64>,
        grads: &mut Tensors,
    ) -> Array4<f64> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let weight = params.a2(&self.w_name());
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let mut dw = Array2::<f64>::zeros((self.out_ch, fan_in));
        let mut dx = Array4::zeros(x.raw_dim());
        for i in 0..n {
            let col = im2col(&x.index_axis(ndarray::Axis(0), i), self.kernel, self.stride, self.pad, oh, ow);
            let mut g = Array2::zeros((self.out_ch, oh * ow));
            for c in 0..self.out_ch {
                for p in 0..oh * ow {
                    g[[c, p]] = grad_out[[i, c, p / ow, p % ow]];
                }
            }
            dw += &g.dot(&col.t());
            let dcol = weight.t().dot(&g);
            let dxi = col2im(&dcol, self.in_ch, h, w, self.kernel, self.stride, self.pad, oh, ow);
            dx.index_axis_mut(ndarray::Axis(0), i).assign(&dxi);
        }
        grads.add_to(&self.w_name(), dw.into_dyn());
        dx
    }
}

fn im2col(
    x: &ArrayView3<f64>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (c_in, h, w) = x.dim();
    let mut col = Array2::zeros((c_in * k * k, oh * ow));
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        col[[row, oy * ow + ox]] = x[[c, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcol: &Array2<f64>,
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array3<f64> {
    let mut dx = Array3::zeros((c_in, h, w));
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dx[[c, iy as usize, ix as usize]] += dcol[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    dx
}

/// Per-channel batch normalization over `(N, H, W)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub name: String,
    pub ch: usize,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Values forward must retain for the backward pass.
pub struct BnCache {
    x_hat: Array4<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    fn names(&self) -> (String, String, String, String) {
        (
            format!("{}.gamma", self.name),
            format!("{}.beta", self.name),
            format!("{}.running_mean", self.name),
            format!("{}.running_var", self.name),
        )
    }

    pub fn init(&self, params: &mut Tensors, buffers: &mut Tensors) {
        let (gamma, beta, rmean, rvar) = self.names();
        params.insert(gamma, Array1::ones(self.ch).into_dyn());
        params.insert(beta, Array1::zeros(self.ch).into_dyn());
        buffers.insert(rmean, Array1::zeros(self.ch).into_dyn());
        buffers.insert(rvar, Array1::ones(self.ch).into_dyn());
    }

    /// Training mode: normalize by batch statistics (biased variance).
    /// Running statistics move toward the batch values unless the caller
    /// freezes them (finite-difference checks re-run forward many times).
    pub fn forward_train(
        &self,
        params: &Tensors,
        buffers: &mut Tensors,
        x: &Array4<f64>,
        update_running: bool,
    ) -> (Array4<f64>, BnCache) {
        let (gamma_n, beta_n, rmean_n, rvar_n) = self.names();
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ch in 0..c {
            let slice = x.slice(ndarray::s![.., ch, .., ..]);
            let mu = slice.sum() / m;
            let v = slice.iter().map(|&e| (e - mu) * (e - mu)).sum::<f64>() / m;
            mean[ch] = mu;
            var[ch] = v;
        }
        if update_running {
            for (buf_name, batch) in [(&rmean_n, &mean), (&rvar_n, &var)] {
                let running = buffers.0.get_mut(buf_name).expect("bn buffers init");
                running.iter_mut().zip(batch.iter()).for_each(|(r, &b)| {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                });
            }
        }
        let gamma = params.a1(&gamma_n);
        let beta = params.a1(&beta_n);
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut x_hat = Array4::zeros(x.raw_dim());
        let mut y = Array4::zeros(x.raw_dim());
        for ch in 0..c {
            let (mu, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in 0..n {
                for yh in 0..h {
                    for xw in 0..w {
                        let xh = (x[[i, ch, yh, xw]] - mu) * is;
                        x_hat[[i, ch, yh, xw]] = xh;
                        y[[i, ch, yh, xw]] = g * xh + b;
                    }
                }
            }
        }
        (y, BnCache { x_hat, inv_std })
    }

    /// Inference mode: normalize by running statistics.
    pub fn forward_eval(&self, params: &Tensors, buffers: &Tensors, x: &Array4<f64>) -> Array4<f64> {
        let (gamma_n, beta_n, rmean_n, rvar_n) = self.names();
        let gamma = params.a1(&gamma_n);
        let beta = params.a1(&beta_n);
        let rmean = buffers.a1(&rmean_n);
        let rvar = buffers.a1(&rvar_n);
        let (n, c, h, w) = x.dim();
        let mut y = Array4::zeros(x.raw_dim());
        for ch in 0..c {
            let is = 1.0 / (rvar[ch] + BN_EPS).sqrt();
            let (mu, g, b) = (rmean[ch], gamma[ch], beta[ch]);
            for i in 0..n {
                for yh in 0..h {
                    for xw in 0..w {
                        y[[i, ch, yh, xw]] = g * (x[[i, ch, yh, xw]] - mu) * is + b;
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        params: &Tensors,
        cache: &BnCache,
        grad_out: &Array4<f64>,
        grads: &mut Tensors,
    ) -> Array4<f64> {
        let (gamma_n, beta_n, ..) = self.names();
        let gamma = params.a1(&gamma_n);
        let (n, c, h, w) = grad_out.dim();
        let m = (n * h * w) as f64;
        let mut dgamma = Array1::zeros(c);
        let mut dbeta = Array1::zeros(c);
        let mut dx = Array4::zeros(grad_out.raw_dim());
        for ch in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for i in 0..n {
                for yh in 0..h {
                    for xw in 0..w {
                        let g = grad_out[[i, ch, yh, xw]];
                        sum_g += g;
                        sum_gx += g * cache.x_hat[[i, ch, yh, xw]];
                    }
                }
            }
            dgamma[ch] = sum_gx;
            dbeta[ch] = sum_g;
            let scale = gamma[ch] * cache.inv_std[ch] / m;
            for i in 0..n {
                for yh in 0..h {
                    for xw in 0..w {
                        let g = grad_out[[i, ch, yh, xw]];
                        let xh = cache.x_hat[[i, ch, yh, xw]];
                        dx[[i, ch, yh, xw]] = scale * (m * g - sum_g - xh * sum_gx);
                    }
                }
            }
        }
        grads.add_to(&gamma_n, dgamma.into_dyn());
        grads.add_to(&beta_n, dbeta.into_dyn());
        dx
    }
}

pub fn relu4(x: &Array4<f64>) -> Array4<f64> {
    // f64::max would return 0 for NaN inputs, hiding numeric corruption
    // from downstream finite checks; keep NaN as NaN instead.
    x.mapv(|v| if v.is_nan() { v } else { v.max(0.0) })
}

/// Gradient through ReLU given its *output* (positive iff input was).
pub fn relu4_backward(out: &Array4<f64>, grad_out: &Array4<f64>) -> Array4<f64> {
    let mut g = grad_out.clone();
    g.zip_mut_with(out, |gv, &ov| {
        if ov <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

/// Affine layer `y = x Wᵀ + b` with weights `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    fn w_name(&self) -> String {
        format!("{}.w", self.name)
    }

    fn b_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut Tensors, rng: &mut ChaCha8Rng) {
        let normal = Normal::new(0.0, (2.0 / self.in_dim as f64).sqrt()).expect("positive std");
        let w = Array2::from_shape_fn((self.out_dim, self.in_dim), |_| normal.sample(rng));
        params.insert(self.w_name(), w.into_dyn());
        params.insert(self.b_name(), Array1::zeros(self.out_dim).into_dyn());
    }

    pub fn forward(&self, params: &Tensors, x: &Array2<f64>) -> Array2<f64> {
        let w = params.a2(&self.w_name());
        let b = params.a1(&self.b_name());
        let mut y = x.dot(&w.t());
        for mut row in y.rows_mut() {
            row += &b;
        }
        y
    }

    pub fn backward(
        &self,
        params: &Tensors,
        x: &Array2<f64>,
        grad_out: &Array2<f64>,
        grads: &mut Tensors,
    ) -> Array2<f64> {
        let w = params.a2(&self.w_name());
        grads.add_to(&self.w_name(), grad_out.t().dot(x).into_dyn());
        grads.add_to(&self.b_name(), grad_out.sum_axis(ndarray::Axis(0)).into_dyn());
        grad_out.dot(&w)
    }
}

/// Mean and standard deviation over the time axis, concatenated.
///
/// Input `[N, C, T, F]`, output `[N, 2·C·F]`: the mean block first, then
/// the std block, both in `(c, f)` row-major order. The std uses the
/// biased variance with a small floor so gradients stay finite on
/// constant inputs.
pub struct MeanStdPool;

pub const POOL_EPS: f64 = 1e-5;

pub struct PoolCache {
    x: Array4<f64>,
    mean: Array3<f64>,
    std: Array3<f64>,
}

impl MeanStdPool {
    pub fn forward(x: &Array4<f64>) -> (Array2<f64>, PoolCache) {
        let (n, c, t, f) = x.dim();
        let mut mean = Array3::zeros((n, c, f));
        let mut std = Array3::zeros((n, c, f));
        let mut out = Array2::zeros((n, 2 * c * f));
        for i in 0..n {
            for ch in 0..c {
                for fr in 0..f {
                    let mut mu = 0.0;
                    for tt in 0..t {
                        mu += x[[i, ch, tt, fr]];
                    }
                    mu /= t as f64;
                    let mut var = 0.0;
                    for tt in 0..t {
                        let d = x[[i, ch, tt, fr]] - mu;
                        var += d * d;
                    }
                    var /= t as f64;
                    let sd = (var + POOL_EPS).sqrt();
                    mean[[i, ch, fr]] = mu;
                    std[[i, ch, fr]] = sd;
                    out[[i, ch * f + fr]] = mu;
                    out[[i, c * f + ch * f + fr]] = sd;
                }
            }
        }
        (
            out,
            PoolCache {
                x: x.clone(),
                mean,
                std,
            },
        )
    }

    pub fn backward(cache: &PoolCache, grad_out: &Array2<f64>) -> Array4<f64> {
        let (n, c, t, f) = cache.x.dim();
        let mut dx = Array4::zeros(cache.x.raw_dim());
        for i in 0..n {
            for ch in 0..c {
                for fr in 0..f {
                    let g_mean = grad_out[[i, ch * f + fr]];
                    let g_std = grad_out[[i, c * f + ch * f + fr]];
                    let mu = cache.mean[[i, ch, fr]];
                    let sd = cache.std[[i, ch, fr]];
                    for tt in 0..t {
                        let centered = cache.x[[i, ch, tt, fr]] - mu;
                        dx[[i, ch, tt, fr]] =
                            g_mean / t as f64 + g_std * centered / (t as f64 * sd);
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Central finite difference of `f` w.r.t. one named tensor entry.
    pub fn fd_grad(
        params: &mut Tensors,
        name: &str,
        flat_idx: usize,
        h: f64,
        mut f: impl FnMut(&Tensors) -> f64,
    ) -> f64 {
        let original = params.get(name).as_slice().unwrap()[flat_idx];
        set_flat(params, name, flat_idx, original + h);
        let up = f(params);
        set_flat(params, name, flat_idx, original - h);
        let down = f(params);
        set_flat(params, name, flat_idx, original);
        (up - down) / (2.0 * h)
    }

    pub fn set_flat(params: &mut Tensors, name: &str, flat_idx: usize, value: f64) {
        params
            .0
            .get_mut(name)
            .unwrap()
            .as_slice_mut()
            .unwrap()[flat_idx] = value;
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }
}
