//! Layer kernels over minibatches stored as contiguous `f64` buffers.
//!
//! Conv activations are laid out `batch × channel × row × col`; linear
//! activations `batch × feature`. Every reduction runs in a fixed order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConvMfError, ConvSpec};
use crate::linalg::{axpy, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu,
    Sigmoid,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub const ALL: [Activation; 4] = [Self::Tanh, Self::Relu, Self::LeakyRelu, Self::Sigmoid];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Relu => z.max(0.0),
            Self::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Self::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at pre-activation `z` whose output is `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Self::Sigmoid => a * (1.0 - a),
        }
    }

    pub(crate) fn apply_all(self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| self.apply(v)).collect()
    }

    /// Turns an output gradient into a pre-activation gradient in place.
    pub(crate) fn backprop(self, z: &[f64], a: &[f64], grad: &mut [f64]) {
        for ((g, &zi), &ai) in grad.iter_mut().zip(z).zip(a) {
            *g *= self.derivative(zi, ai);
        }
    }
}

/// `⌊(extent + 2·padding − dilation·(kernel − 1) − 1)/stride⌋ + 1`, or `None`
/// when the dilated kernel does not fit the padded extent.
pub fn conv_output_extent(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Option<usize> {
    let reach = dilation * (kernel - 1) + 1;
    let padded = extent + 2 * padding;
    (padded >= reach && stride > 0).then(|| (padded - reach) / stride + 1)
}

fn uniform_init(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Single-sample `channels × height × width` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ConvMfError> {
        if data.len() != channels * height * width {
            return Err(ConvMfError::ShapeMismatch {
                context: "tensor data",
                expected: vec![channels * height * width],
                got: vec![data.len()],
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Cross-correlation layer with weights `out × in × kernel × kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub spec: ConvSpec,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, spec: ConvSpec) -> Self {
        let k = spec.kernel;
        Self {
            in_channels,
            spec,
            weight: vec![0.0; spec.out_channels * in_channels * k * k],
            bias: vec![0.0; spec.out_channels],
        }
    }

    pub(crate) fn init(in_channels: usize, spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let k = spec.kernel;
        let fan_in = in_channels * k * k;
        let weight = uniform_init(rng, spec.out_channels * fan_in, fan_in);
        let bias = uniform_init(rng, spec.out_channels, fan_in);
        Self {
            in_channels,
            spec,
            weight,
            bias,
        }
    }

    pub fn output_shape(&self, height: usize, width: usize) -> Option<(usize, usize, usize)> {
        let s = &self.spec;
        let oh = conv_output_extent(height, s.kernel, s.stride, s.padding, s.dilation)?;
        let ow = conv_output_extent(width, s.kernel, s.stride, s.padding, s.dilation)?;
        Some((s.out_channels, oh, ow))
    }

    fn pad(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let p = self.spec.padding;
        if p == 0 {
            return input.to_vec();
        }
        let (ph, pw) = (h + 2 * p, w + 2 * p);
        let mut out = vec![0.0; self.in_channels * ph * pw];
        for c in 0..self.in_channels {
            for y in 0..h {
                let src = &input[(c * h + y) * w..(c * h + y + 1) * w];
                let dst = (c * ph + y + p) * pw + p;
                out[dst..dst + w].copy_from_slice(src);
            }
        }
        out
    }

    /// One sample: `input` is `in × h × w`, result `out × oh × ow`.
    pub(crate) fn forward_sample(&self, input: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let s = &self.spec;
        let (k, st, d) = (s.kernel, s.stride, s.dilation);
        let padded = self.pad(input, h, w);
        let pw = w + 2 * s.padding;
        let ph = h + 2 * s.padding;
        let mut out = vec![0.0; s.out_channels * oh * ow];
        for o in 0..s.out_channels {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for c in 0..self.in_channels {
                let src_plane = &padded[c * ph * pw..(c + 1) * ph * pw];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[((o * self.in_channels + c) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let row = &src_plane[(oy * st + ky * d) * pw..][..pw];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            if st == 1 {
                                axpy(wv, &row[kx * d..kx * d + ow], dst);
                            } else {
                                for (ox, v) in dst.iter_mut().enumerate() {
                                    *v += wv * row[ox * st + kx * d];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients for one sample and returns the
    /// input gradient when requested.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_sample(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        grad_out: &[f64],
        oh: usize,
        ow: usize,
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let s = &self.spec;
        let (k, st, d, p) = (s.kernel, s.stride, s.dilation, s.padding);
        let padded = self.pad(input, h, w);
        let (ph, pw) = (h + 2 * p, w + 2 * p);
        let mut d_padded = if want_input_grad {
            vec![0.0; padded.len()]
        } else {
            Vec::new()
        };
        for o in 0..s.out_channels {
            let g_plane = &grad_out[o * oh * ow..(o + 1) * oh * ow];
            d_bias[o] += g_plane.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let src_plane = &padded[c * ph * pw..(c + 1) * ph * pw];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * self.in_channels + c) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let r0 = (oy * st + ky * d) * pw;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            if st == 1 {
                                let lo = r0 + kx * d;
                                acc += dot(g_row, &src_plane[lo..lo + ow]);
                                if want_input_grad {
                                    let base = c * ph * pw + lo;
                                    axpy(wv, g_row, &mut d_padded[base..base + ow]);
                                }
                            } else {
                                for (ox, &g) in g_row.iter().enumerate() {
                                    let idx = r0 + ox * st + kx * d;
                                    acc += g * src_plane[idx];
                                    if want_input_grad {
                                        d_padded[c * ph * pw + idx] += wv * g;
                                    }
                                }
                            }
                        }
                        d_weight[widx] += acc;
                    }
                }
            }
        }
        if !want_input_grad {
            return None;
        }
        if p == 0 {
            return Some(d_padded);
        }
        let mut d_in = vec![0.0; self.in_channels * h * w];
        for c in 0..self.in_channels {
            for y in 0..h {
                let src = (c * ph + y + p) * pw + p;
                d_in[(c * h + y) * w..(c * h + y + 1) * w].copy_from_slice(&d_padded[src..src + w]);
            }
        }
        Some(d_in)
    }
}

/// Standard cross-correlation of a single sample.
pub fn conv2d_forward(input: &Tensor3, layer: &ConvLayer) -> Result<Tensor3, ConvMfError> {
    if input.channels != layer.in_channels {
        return Err(ConvMfError::ShapeMismatch {
            context: "conv2d input channels",
            expected: vec![layer.in_channels],
            got: vec![input.channels],
        });
    }
    let (oc, oh, ow) = layer.output_shape(input.height, input.width).ok_or_else(|| {
        ConvMfError::InvalidArchitecture(format!(
            "kernel {} (dilation {}) exceeds padded input {}×{}",
            layer.spec.kernel, layer.spec.dilation, input.height, input.width
        ))
    })?;
    let data = layer.forward_sample(&input.data, input.height, input.width, oh, ow);
    Tensor3::new(oc, oh, ow, data)
}

/// Fully connected layer `y = W·x + b` with `W` stored `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub(crate) fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inputs,
            outputs,
            weight: uniform_init(rng, inputs * outputs, inputs),
            bias: uniform_init(rng, outputs, inputs),
        }
    }

    /// `x` is `batch × inputs`; returns `batch × outputs`.
    pub(crate) fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (ni, no) = (self.inputs, self.outputs);
        let mut y = vec![0.0; batch * no];
        for o in 0..no {
            let w = &self.weight[o * ni..(o + 1) * ni];
            let mut b = 0;
            while b + 4 <= batch {
                let xs: [&[f64]; 4] = std::array::from_fn(|k| &x[(b + k) * ni..(b + k + 1) * ni]);
                for (k, d) in dot_many(w, xs).into_iter().enumerate() {
                    y[(b + k) * no + o] = d + self.bias[o];
                }
                b += 4;
            }
            for b in b..batch {
                y[b * no + o] = dot(w, &x[b * ni..(b + 1) * ni]) + self.bias[o];
            }
        }
        y
    }

    /// Accumulates parameter gradients from `grad_y` (`batch × outputs`) and
    /// returns the input gradient when requested. Sums over the batch (for
    /// weights) and over outputs (for inputs) run in index order.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        grad_y: &[f64],
        batch: usize,
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let (ni, no) = (self.inputs, self.outputs);
        for o in 0..no {
            for b in 0..batch {
                d_bias[o] += grad_y[b * no + o];
            }
        }
        let mut d_x = vec![0.0; if want_input_grad { batch * ni } else { 0 }];
        // Column tiles keep the batch slices of `x` and `d_x` cache-resident
        // while each weight row streams through once. Tiling does not change
        // the order of any sum.
        for lo in (0..ni).step_by(LINEAR_TILE) {
            let hi = (lo + LINEAR_TILE).min(ni);
            let xs = |b: usize| &x[b * ni + lo..b * ni + hi];
            for o in 0..no {
                let dw = &mut d_weight[o * ni + lo..o * ni + hi];
                let mut b = 0;
                while b + 4 <= batch {
                    let g: [f64; 4] = std::array::from_fn(|k| grad_y[(b + k) * no + o]);
                    axpy_many(dw, g, std::array::from_fn(|k| xs(b + k)));
                    b += 4;
                }
                for b in b..batch {
                    axpy(grad_y[b * no + o], xs(b), dw);
                }
            }
            if !want_input_grad {
                continue;
            }
            let mut o = 0;
            while o + 4 <= no {
                let w: [&[f64]; 4] = std::array::from_fn(|k| &self.weight[(o + k) * ni + lo..(o + k) * ni + hi]);
                for b in 0..batch {
                    let g: [f64; 4] = std::array::from_fn(|k| grad_y[b * no + o + k]);
                    axpy_many(&mut d_x[b * ni + lo..b * ni + hi], g, w);
                }
                o += 4;
            }
            for o in o..no {
                let w = &self.weight[o * ni + lo..o * ni + hi];
                for b in 0..batch {
                    axpy(grad_y[b * no + o], w, &mut d_x[b * ni + lo..b * ni + hi]);
                }
            }
        }
        if !want_input_grad {
            return None;
        }
        Some(d_x)
    }
}

const LINEAR_TILE: usize = 512;

/// `y += a[0]·x[0]; y += a[1]·x[1]; …` fused into one pass, rounding
/// exactly as the sequence of separate [`axpy`] calls would.
fn axpy_many(y: &mut [f64], a: [f64; 4], x: [&[f64]; 4]) {
    let n = y.len();
    let x = x.map(|v| &v[..n]);
    for i in 0..n {
        y[i] = (((y[i] + a[0] * x[0][i]) + a[1] * x[1][i]) + a[2] * x[2][i]) + a[3] * x[3][i];
    }
}

/// `N` dot products against a shared `w`, each with the same summation order
/// as [`dot`].
fn dot_many<const N: usize>(w: &[f64], xs: [&[f64]; N]) -> [f64; N] {
    let n = w.len();
    let mut acc = [[0.0f64; 4]; N];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        let wv = [w[i], w[i + 1], w[i + 2], w[i + 3]];
        for (a, x) in acc.iter_mut().zip(&xs) {
            let x = &x[i..i + 4];
            a[0] += wv[0] * x[0];
            a[1] += wv[1] * x[1];
            a[2] += wv[2] * x[2];
            a[3] += wv[3] * x[3];
        }
    }
    std::array::from_fn(|k| {
        let mut tail = 0.0;
        for i in 4 * chunks..n {
            tail += w[i] * xs[k][i];
        }
        (acc[k][0] + acc[k][1]) + (acc[k][2] + acc[k][3]) + tail
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn spec(kernel: usize, stride: usize, padding: usize, dilation: usize, out: usize) -> ConvSpec {
        ConvSpec {
            kernel,
            stride,
            padding,
            dilation,
            out_channels: out,
        }
    }

    /// Direct sliding-window evaluation, one output element at a time.
    fn naive_conv(input: &Tensor3, layer: &ConvLayer) -> Tensor3 {
        let s = layer.spec;
        let (oc, oh, ow) = layer.output_shape(input.height, input.width).unwrap();
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for c in 0..input.channels {
                        for ky in 0..s.kernel {
                            for kx in 0..s.kernel {
                                let y = (oy * s.stride + ky * s.dilation) as isize - s.padding as isize;
                                let x = (ox * s.stride + kx * s.dilation) as isize - s.padding as isize;
                                if y < 0 || x < 0 || y >= input.height as isize || x >= input.width as isize {
                                    continue;
                                }
                                let wv = layer.weight[((o * input.channels + c) * s.kernel + ky) * s.kernel + kx];
                                acc += wv * input.at(c, y as usize, x as usize);
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Tensor3::new(oc, oh, ow, out).unwrap()
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv_output_extent(64, 5, 1, 3, 1), Some(66));
        assert_eq!(conv_output_extent(66, 3, 1, 0, 1), Some(64));
        assert_eq!(conv_output_extent(10, 3, 2, 1, 2), Some(4));
        assert_eq!(conv_output_extent(2, 5, 1, 0, 1), None);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..2 * 7 * 9).map(|_| rng.gen::<f64>()).collect();
        let input = Tensor3::new(2, 7, 9, data).unwrap();
        let mut layer = ConvLayer::zeros(2, spec(3, 1, 1, 1, 2));
        for c in 0..2 {
            layer.weight[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let out = conv2d_forward(&input, &layer).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_on_constant_interior() {
        let input = Tensor3::new(1, 6, 6, vec![1.0; 36]).unwrap();
        let mut layer = ConvLayer::zeros(1, spec(3, 1, 1, 1, 1));
        layer.weight.iter_mut().for_each(|w| *w = 1.0);
        let out = conv2d_forward(&input, &layer).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert_eq!(out.at(0, y, x), 9.0);
            }
        }
        assert_eq!(out.at(0, 0, 0), 4.0);
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in [
            spec(5, 1, 3, 1, 3),
            spec(3, 1, 0, 1, 2),
            spec(3, 2, 1, 1, 2),
            spec(6, 3, 2, 1, 1),
            spec(3, 1, 2, 2, 2),
        ] {
            let layer = ConvLayer::init(2, s, &mut rng);
            let data: Vec<f64> = (0..2 * 11 * 13).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let input = Tensor3::new(2, 11, 13, data).unwrap();
            let fast = conv2d_forward(&input, &layer).unwrap();
            let slow = naive_conv(&input, &layer);
            assert_eq!((fast.channels, fast.height, fast.width), (slow.channels, slow.height, slow.width));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let input = Tensor3::new(1, 2, 2, vec![0.0; 4]).unwrap();
        let layer = ConvLayer::zeros(1, spec(5, 1, 0, 1, 1));
        assert!(matches!(
            conv2d_forward(&input, &layer),
            Err(ConvMfError::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn linear_single_sample_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Linear::init(4, 3, &mut rng);
        let x = [0.5, -1.0, 2.0, 0.25];
        let g = [1.0, -2.0, 0.5];
        let mut dw = vec![0.0; 12];
        let mut db = vec![0.0; 3];
        let dx = layer.backward(&x, &g, 1, &mut dw, &mut db, true).unwrap();
        for o in 0..3 {
            for i in 0..4 {
                assert_eq!(dw[o * 4 + i], g[o] * x[i]);
            }
        }
        assert_eq!(db, g);
        for (i, d) in dx.iter().enumerate() {
            let expect: f64 = (0..3).map(|o| g[o] * layer.weight[o * 4 + i]).sum();
            assert!((d - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in Activation::ALL {
            for z in [-1.3, -0.2, 0.4, 2.1] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                let an = act.derivative(z, act.apply(z));
                assert!((fd - an).abs() < 1e-8, "{act:?} at {z}");
            }
        }
    }
}
