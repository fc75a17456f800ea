use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Activation, ConvLayer, Linear};
use super::{ConvMfError, Hyperparameters};
use crate::linalg::{axpy, dot, FactorPair, Matrix};

/// Network parameters plus the hyperparameters that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvMfModel {
    pub input_shape: (usize, usize),
    pub rank: usize,
    pub hyper: Hyperparameters,
    pub convs: Vec<ConvLayer>,
    pub stem: Vec<Linear>,
    pub fork_u: Vec<Linear>,
    pub fork_v: Vec<Linear>,
    /// `(channels, height, width)` entering each conv layer, plus the final
    /// conv output.
    conv_shapes: Vec<(usize, usize, usize)>,
}

/// Per-tensor parameter gradients in [`ConvMfModel::tensor_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ConvMfModel) -> Self {
        Self {
            tensors: model.tensor_values().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m: f64, g| m.max(g.abs()))
    }
}

/// Loss gradient with respect to one sample's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGrad {
    pub du: Matrix,
    pub dv: Matrix,
}

/// Pre-activations `z` and outputs `a` of each layer for one minibatch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    conv: Vec<(Vec<f64>, Vec<f64>)>,
    stem: Vec<(Vec<f64>, Vec<f64>)>,
    fork_u: Vec<(Vec<f64>, Vec<f64>)>,
    fork_v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Closed-form parameter count of the architecture `hyper` builds for an
/// `m × n` input.
pub fn parameter_count(m: usize, n: usize, hyper: &Hyperparameters) -> Result<usize, ConvMfError> {
    let (flat, conv_params) = conv_walk(m, n, hyper)?;
    let linear = |dims: &[usize]| dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
    let mut stem = vec![flat];
    stem.extend(&hyper.stem_dims);
    let head_in = *stem.last().unwrap();
    let fork = |out: usize| {
        let mut d = vec![head_in];
        d.extend(&hyper.fork_dims);
        d.push(out);
        linear(&d)
    };
    Ok(conv_params + linear(&stem) + fork(m * hyper.rank) + fork(hyper.rank * n))
}

/// Flattened conv-stem output size and conv parameter count.
fn conv_walk(m: usize, n: usize, hyper: &Hyperparameters) -> Result<(usize, usize), ConvMfError> {
    let (mut c, mut h, mut w) = (1, m, n);
    let mut params = 0;
    for (i, s) in hyper.conv_layers.iter().enumerate() {
        let layer = ConvLayer::zeros(c, *s);
        let (oc, oh, ow) = layer.output_shape(h, w).ok_or_else(|| {
            ConvMfError::InvalidArchitecture(format!(
                "conv layer {i}: kernel {} does not fit a padded {h}×{w} input",
                s.kernel
            ))
        })?;
        params += oc * c * s.kernel * s.kernel + oc;
        (c, h, w) = (oc, oh, ow);
    }
    Ok((c * h * w, params))
}

pub fn build_convmf(m: usize, n: usize, hyper: &Hyperparameters) -> Result<ConvMfModel, ConvMfError> {
    hyper.validate()?;
    if m == 0 || n == 0 {
        return Err(ConvMfError::InvalidArchitecture(format!("input {m}×{n}")));
    }
    conv_walk(m, n, hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut shape = (1, m, n);
    let mut conv_shapes = vec![shape];
    let mut convs = Vec::with_capacity(hyper.conv_layers.len());
    for spec in &hyper.conv_layers {
        let layer = ConvLayer::init(shape.0, *spec, &mut rng);
        shape = layer.output_shape(shape.1, shape.2).expect("checked by conv_walk");
        conv_shapes.push(shape);
        convs.push(layer);
    }
    let mut width = shape.0 * shape.1 * shape.2;
    let mut stem = Vec::new();
    for &d in &hyper.stem_dims {
        stem.push(Linear::init(width, d, &mut rng));
        width = d;
    }
    let mut fork = |out: usize| {
        let mut layers = Vec::new();
        let mut w = width;
        for &d in hyper.fork_dims.iter().chain(std::iter::once(&out)) {
            layers.push(Linear::init(w, d, &mut rng));
            w = d;
        }
        layers
    };
    let fork_u = fork(m * hyper.rank);
    let fork_v = fork(hyper.rank * n);
    Ok(ConvMfModel {
        input_shape: (m, n),
        rank: hyper.rank,
        hyper: hyper.clone(),
        convs,
        stem,
        fork_u,
        fork_v,
        conv_shapes,
    })
}

fn chain_forward(
    layers: &[Linear],
    input: &[f64],
    batch: usize,
    act: Activation,
    activate_last: bool,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let x = out.last().map_or(input, |(_, a)| a.as_slice());
        let z = layer.forward(x, batch);
        let a = if activate_last || i + 1 < layers.len() {
            act.apply_all(&z)
        } else {
            z.clone()
        };
        out.push((z, a));
    }
    out
}

/// Backpropagates `grad` (w.r.t. the chain output) and returns the gradient
/// w.r.t. the chain input when requested.
#[allow(clippy::too_many_arguments)]
fn chain_backward(
    layers: &[Linear],
    cache: &[(Vec<f64>, Vec<f64>)],
    input: &[f64],
    mut grad: Vec<f64>,
    batch: usize,
    act: Activation,
    activate_last: bool,
    grads: &mut [Vec<f64>],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    for i in (0..layers.len()).rev() {
        let (z, a) = &cache[i];
        if activate_last || i + 1 < layers.len() {
            act.backprop(z, a, &mut grad);
        }
        let x = if i == 0 { input } else { cache[i - 1].1.as_slice() };
        let (dw, rest) = grads[2 * i..].split_at_mut(1);
        let need = i > 0 || want_input_grad;
        grad = layers[i].backward(x, &grad, batch, &mut dw[0], &mut rest[0], need)?;
    }
    Some(grad)
}

impl ConvMfModel {
    pub fn num_parameters(&self) -> usize {
        self.tensor_values().iter().map(|t| t.len()).sum()
    }

    pub fn conv_output_shape(&self) -> (usize, usize, usize) {
        *self.conv_shapes.last().unwrap()
    }

    /// Canonical tensor names, e.g. `conv0.weight`, `stem1.bias`,
    /// `fork_u2.weight`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut push = |prefix: &str, count: usize| {
            for i in 0..count {
                names.push(format!("{prefix}{i}.weight"));
                names.push(format!("{prefix}{i}.bias"));
            }
        };
        push("conv", self.convs.len());
        push("stem", self.stem.len());
        push("fork_u", self.fork_u.len());
        push("fork_v", self.fork_v.len());
        names
    }

    pub fn tensor_dims(&self) -> Vec<Vec<usize>> {
        let mut dims = Vec::new();
        for c in &self.convs {
            let k = c.spec.kernel;
            dims.push(vec![c.spec.out_channels, c.in_channels, k, k]);
            dims.push(vec![c.spec.out_channels]);
        }
        for l in self.stem.iter().chain(&self.fork_u).chain(&self.fork_v) {
            dims.push(vec![l.outputs, l.inputs]);
            dims.push(vec![l.outputs]);
        }
        dims
    }

    pub fn tensor_values(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for l in self.stem.iter().chain(&self.fork_u).chain(&self.fork_v) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensor_values_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for l in self
            .stem
            .iter_mut()
            .chain(self.fork_u.iter_mut())
            .chain(self.fork_v.iter_mut())
        {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    fn check_input(&self, x: &Matrix) -> Result<(), ConvMfError> {
        if x.shape() != self.input_shape {
            return Err(ConvMfError::ShapeMismatch {
                context: "network input",
                expected: vec![self.input_shape.0, self.input_shape.1],
                got: vec![x.rows(), x.cols()],
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<FactorPair, ConvMfError> {
        Ok(self.forward_cached(&[x])?.0.pop().unwrap())
    }

    /// Batched forward pass keeping every intermediate needed by
    /// [`ConvMfModel::backward`].
    pub fn forward_cached(&self, inputs: &[&Matrix]) -> Result<(Vec<FactorPair>, ForwardCache), ConvMfError> {
        for x in inputs {
            self.check_input(x)?;
        }
        let (m, n) = self.input_shape;
        let batch = inputs.len();
        let act = self.hyper.activation;
        let mut input = Vec::with_capacity(batch * m * n);
        for x in inputs {
            input.extend_from_slice(x.as_slice());
        }

        let mut conv: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.convs.len());
        for (i, layer) in self.convs.iter().enumerate() {
            let (c, h, w) = self.conv_shapes[i];
            let (oc, oh, ow) = self.conv_shapes[i + 1];
            let prev = conv.last().map_or(input.as_slice(), |(_, a)| a.as_slice());
            let mut z = Vec::with_capacity(batch * oc * oh * ow);
            for b in 0..batch {
                z.extend(layer.forward_sample(&prev[b * c * h * w..(b + 1) * c * h * w], h, w, oh, ow));
            }
            let a = act.apply_all(&z);
            conv.push((z, a));
        }
        let flat = conv.last().map_or(input.as_slice(), |(_, a)| a.as_slice());
        let stem = chain_forward(&self.stem, flat, batch, act, true);
        let head = stem.last().map_or(flat, |(_, a)| a.as_slice());
        let fork_u = chain_forward(&self.fork_u, head, batch, act, false);
        let fork_v = chain_forward(&self.fork_v, head, batch, act, false);

        let pairs = self.pairs_of(&fork_u.last().unwrap().1, &fork_v.last().unwrap().1, batch)?;
        let cache = ForwardCache {
            batch,
            input,
            conv,
            stem,
            fork_u,
            fork_v,
        };
        Ok((pairs, cache))
    }

    /// Factor pairs after changing tensor `tensor`, reusing cached
    /// activations of every layer upstream of it.
    fn rerun_from(&self, inputs: &[&Matrix], cache: &ForwardCache, tensor: usize) -> Result<Vec<FactorPair>, ConvMfError> {
        let layer = tensor / 2;
        let (nc, ns, nu) = (self.convs.len(), self.stem.len(), self.fork_u.len());
        if layer < nc {
            return Ok(self.forward_cached(inputs)?.0);
        }
        let batch = cache.batch;
        let act = self.hyper.activation;
        let flat = cache.conv.last().map_or(cache.input.as_slice(), |(_, a)| a.as_slice());
        let rerun = |layers: &[Linear], cached: &[(Vec<f64>, Vec<f64>)], from: usize, input: &[f64], last: bool| {
            let start = if from == 0 { input } else { cached[from - 1].1.as_slice() };
            chain_forward(&layers[from..], start, batch, act, last)
                .pop()
                .map_or_else(|| start.to_vec(), |(_, a)| a)
        };
        let head_of = |stem: &[(Vec<f64>, Vec<f64>)]| stem.last().map_or(flat, |(_, a)| a.as_slice()).to_vec();
        let (u_out, v_out) = if layer < nc + ns {
            let k = layer - nc;
            let start = if k == 0 { flat } else { cache.stem[k - 1].1.as_slice() };
            let head = chain_forward(&self.stem[k..], start, batch, act, true).pop().unwrap().1;
            (
                rerun(&self.fork_u, &[], 0, &head, false),
                rerun(&self.fork_v, &[], 0, &head, false),
            )
        } else if layer < nc + ns + nu {
            let head = head_of(&cache.stem);
            (
                rerun(&self.fork_u, &cache.fork_u, layer - nc - ns, &head, false),
                cache.fork_v.last().unwrap().1.clone(),
            )
        } else {
            let head = head_of(&cache.stem);
            (
                cache.fork_u.last().unwrap().1.clone(),
                rerun(&self.fork_v, &cache.fork_v, layer - nc - ns - nu, &head, false),
            )
        };
        self.pairs_of(&u_out, &v_out, batch)
    }

    fn pairs_of(&self, u_out: &[f64], v_out: &[f64], batch: usize) -> Result<Vec<FactorPair>, ConvMfError> {
        let (m, n) = self.input_shape;
        let r = self.rank;
        let mut pairs = Vec::with_capacity(batch);
        for b in 0..batch {
            let u = Matrix::from_vec(m, r, u_out[b * m * r..(b + 1) * m * r].to_vec())?;
            let v = Matrix::from_vec(r, n, v_out[b * r * n..(b + 1) * r * n].to_vec())?;
            pairs.push(FactorPair::new(u, v)?);
        }
        Ok(pairs)
    }

    /// Exact parameter gradients given `∂L/∂U` and `∂L/∂V` for every sample
    /// of the cached minibatch. The two fork contributions to the shared stem
    /// are summed unweighted.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[FactorGrad]) -> Result<Gradients, ConvMfError> {
        let (m, n) = self.input_shape;
        let r = self.rank;
        let batch = cache.batch;
        if upstream.len() != batch {
            return Err(ConvMfError::ShapeMismatch {
                context: "upstream batch",
                expected: vec![batch],
                got: vec![upstream.len()],
            });
        }
        for g in upstream {
            if g.du.shape() != (m, r) || g.dv.shape() != (r, n) {
                return Err(ConvMfError::ShapeMismatch {
                    context: "upstream factor gradient",
                    expected: vec![m, r, r, n],
                    got: vec![g.du.rows(), g.du.cols(), g.dv.rows(), g.dv.cols()],
                });
            }
        }
        let act = self.hyper.activation;
        let mut grads = Gradients::zeros_like(self);
        let n_conv = 2 * self.convs.len();
        let n_stem = 2 * self.stem.len();
        let n_fu = 2 * self.fork_u.len();
        let (g_conv, rest) = grads.tensors.split_at_mut(n_conv);
        let (g_stem, rest) = rest.split_at_mut(n_stem);
        let (g_fu, g_fv) = rest.split_at_mut(n_fu);

        let flat = cache.conv.last().map_or(cache.input.as_slice(), |(_, a)| a.as_slice());
        let head = cache.stem.last().map_or(flat, |(_, a)| a.as_slice());
        let need_below = !self.stem.is_empty() || !self.convs.is_empty();

        let du: Vec<f64> = upstream.iter().flat_map(|g| g.du.as_slice().iter().copied()).collect();
        let dv: Vec<f64> = upstream.iter().flat_map(|g| g.dv.as_slice().iter().copied()).collect();
        let gu = chain_backward(&self.fork_u, &cache.fork_u, head, du, batch, act, false, g_fu, need_below);
        let gv = chain_backward(&self.fork_v, &cache.fork_v, head, dv, batch, act, false, g_fv, need_below);
        let (Some(mut g_head), Some(gv)) = (gu, gv) else {
            return Ok(grads);
        };
        axpy(1.0, &gv, &mut g_head);

        let need_below = !self.convs.is_empty();
        let Some(mut g) = chain_backward(&self.stem, &cache.stem, flat, g_head, batch, act, true, g_stem, need_below)
        else {
            return Ok(grads);
        };

        for i in (0..self.convs.len()).rev() {
            let (c, h, w) = self.conv_shapes[i];
            let (oc, oh, ow) = self.conv_shapes[i + 1];
            let (z, a) = &cache.conv[i];
            act.backprop(z, a, &mut g);
            let prev = if i == 0 { cache.input.as_slice() } else { cache.conv[i - 1].1.as_slice() };
            let (dw, db) = g_conv[2 * i..].split_at_mut(1);
            let mut g_prev = Vec::with_capacity(if i > 0 { batch * c * h * w } else { 0 });
            for b in 0..batch {
                let out = self.convs[i].backward_sample(
                    &prev[b * c * h * w..(b + 1) * c * h * w],
                    h,
                    w,
                    &g[b * oc * oh * ow..(b + 1) * oc * oh * ow],
                    oh,
                    ow,
                    &mut dw[0],
                    &mut db[0],
                    i > 0,
                );
                if let Some(gp) = out {
                    g_prev.extend(gp);
                }
            }
            g = g_prev;
        }
        Ok(grads)
    }
}

/// Analytic and central-difference derivative of the summed reconstruction
/// loss for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientProbe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Result of [`probe_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub probes: Vec<GradientProbe>,
    pub loss: f64,
    /// `‖∇L‖_∞` over every parameter of the model.
    pub gradient_scale: f64,
}

impl GradientCheck {
    /// Central differences carry roundoff of order `ε·|L|/h`, so entries far
    /// below the gradient's own scale cannot be resolved to a fixed relative
    /// tolerance. Errors are measured against `max(|a|, |n|, ‖∇L‖_∞)`.
    pub fn worst_scaled_error(&self) -> f64 {
        self.probes
            .iter()
            .map(|p| p.relative_error(self.gradient_scale))
            .fold(0.0, f64::max)
    }
}

impl GradientProbe {
    /// `|a − n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

/// Sum of `‖X − UV‖²_F` over `inputs`.
pub fn reconstruction_loss(model: &ConvMfModel, inputs: &[&Matrix]) -> Result<f64, ConvMfError> {
    let (pairs, _) = model.forward_cached(inputs)?;
    Ok(summed_loss(inputs, &pairs))
}

fn summed_loss(inputs: &[&Matrix], pairs: &[FactorPair]) -> f64 {
    inputs
        .iter()
        .zip(pairs)
        .map(|(x, p)| reconstruction_loss_grad(x, p).0)
        .sum()
}

/// Compares backpropagated gradients of the summed reconstruction loss with
/// central differences of step `h` at each `(tensor, index)`. Perturbed
/// evaluations rerun only the layers downstream of the perturbed tensor,
/// which is bitwise identical to a full forward pass.
pub fn probe_gradients(
    model: &mut ConvMfModel,
    inputs: &[&Matrix],
    sites: &[(usize, usize)],
    h: f64,
) -> Result<GradientCheck, ConvMfError> {
    let (pairs, cache) = model.forward_cached(inputs)?;
    let upstream: Vec<FactorGrad> = inputs
        .iter()
        .zip(&pairs)
        .map(|(x, p)| reconstruction_loss_grad(x, p).1)
        .collect();
    let grads = model.backward(&cache, &upstream)?;
    let mut out = Vec::with_capacity(sites.len());
    for &(tensor, index) in sites {
        let orig = model.tensor_values()[tensor][index];
        model.tensor_values_mut()[tensor][index] = orig + h;
        let plus = summed_loss(inputs, &model.rerun_from(inputs, &cache, tensor)?);
        model.tensor_values_mut()[tensor][index] = orig - h;
        let minus = summed_loss(inputs, &model.rerun_from(inputs, &cache, tensor)?);
        model.tensor_values_mut()[tensor][index] = orig;
        out.push(GradientProbe {
            tensor,
            index,
            analytic: grads.tensors[tensor][index],
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    Ok(GradientCheck {
        probes: out,
        loss: summed_loss(inputs, &pairs),
        gradient_scale: grads.max_abs(),
    })
}

/// `‖X − UV‖²_F` and its gradients `2RVᵀ`, `2UᵀR` with `R = UV − X`.
pub(crate) fn reconstruction_loss_grad(x: &Matrix, pair: &FactorPair) -> (f64, FactorGrad) {
    let residual = pair.product().sub(x).expect("shapes checked by forward");
    let (m, n) = x.shape();
    let r = pair.rank();
    let mut du = Matrix::zeros(m, r);
    for i in 0..m {
        let res_row = residual.row(i);
        for k in 0..r {
            du.row_mut(i)[k] = 2.0 * dot(res_row, pair.v.row(k));
        }
    }
    let mut dv = Matrix::zeros(r, n);
    for i in 0..m {
        for k in 0..r {
            axpy(2.0 * pair.u[(i, k)], residual.row(i), dv.row_mut(k));
        }
    }
    (residual.frobenius_norm_sq(), FactorGrad { du, dv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convmf::ConvSpec;
    use rand::Rng;

    fn tiny_hyper(rank: usize) -> Hyperparameters {
        Hyperparameters {
            conv_layers: vec![
                ConvSpec {
                    kernel: 3,
                    stride: 1,
                    padding: 2,
                    dilation: 1,
                    out_channels: 2,
                },
                ConvSpec {
                    kernel: 3,
                    stride: 1,
                    padding: 0,
                    dilation: 1,
                    out_channels: 2,
                },
            ],
            stem_dims: vec![12, 8],
            fork_dims: vec![10, 6],
            rank,
            ..Hyperparameters::default()
        }
    }

    #[test]
    fn default_head_sizes() {
        let model = build_convmf(64, 128, &Hyperparameters::with_rank(12)).unwrap();
        assert_eq!(model.fork_u.last().unwrap().outputs, 768);
        assert_eq!(model.fork_v.last().unwrap().outputs, 1536);
        assert_eq!(model.fork_u.len(), 3);
        assert_eq!(model.conv_output_shape(), (1, 64, 128));
    }

    #[test]
    fn parameter_count_agrees_with_built_tensors() {
        let h = tiny_hyper(3);
        let model = build_convmf(6, 9, &h).unwrap();
        assert_eq!(parameter_count(6, 9, &h).unwrap(), model.num_parameters());
        assert_eq!(model.tensor_names().len(), model.tensor_dims().len());
        for (dims, t) in model.tensor_dims().iter().zip(model.tensor_values()) {
            assert_eq!(dims.iter().product::<usize>(), t.len());
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let h = tiny_hyper(2);
        let a = build_convmf(5, 7, &h).unwrap();
        let b = build_convmf(5, 7, &h).unwrap();
        assert_eq!(a, b);
        let c = build_convmf(5, 7, &Hyperparameters { seed: 1, ..h }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_chain_rejected() {
        let mut h = tiny_hyper(2);
        h.conv_layers[1].kernel = 40;
        assert!(matches!(build_convmf(5, 7, &h), Err(ConvMfError::InvalidArchitecture(_))));
        let h = Hyperparameters {
            learning_rate: 0.0,
            ..tiny_hyper(2)
        };
        assert!(build_convmf(5, 7, &h).is_err());
    }

    #[test]
    fn zeroed_output_layers_give_zero_factors() {
        let mut model = build_convmf(5, 7, &tiny_hyper(2)).unwrap();
        for l in [model.fork_u.last_mut().unwrap(), model.fork_v.last_mut().unwrap()] {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = Matrix::from_fn(5, 7, |i, j| (i + 2 * j) as f64);
        let p = model.forward(&x).unwrap();
        assert_eq!(p.u.max_abs(), 0.0);
        assert_eq!(p.v.max_abs(), 0.0);
    }

    #[test]
    fn batch_forward_matches_single() {
        let model = build_convmf(5, 7, &tiny_hyper(2)).unwrap();
        let a = Matrix::from_fn(5, 7, |i, j| (i as f64 - j as f64).sin());
        let b = Matrix::from_fn(5, 7, |i, j| (i * j) as f64 * 0.1);
        let (pairs, _) = model.forward_cached(&[&a, &b]).unwrap();
        assert_eq!(pairs[0], model.forward(&a).unwrap());
        assert_eq!(pairs[1], model.forward(&b).unwrap());
        assert!(model.forward(&Matrix::zeros(7, 5)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let model = build_convmf(5, 7, &tiny_hyper(2)).unwrap();
        let x = Matrix::from_fn(5, 7, |i, j| (i + j) as f64 * 0.1);
        let (_, cache) = model.forward_cached(&[&x]).unwrap();
        let up = FactorGrad {
            du: Matrix::zeros(5, 2),
            dv: Matrix::zeros(2, 7),
        };
        let g = model.backward(&cache, std::slice::from_ref(&up)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(model.backward(&cache, &[up.clone(), up]).is_err());
    }

    fn probe_sites(model: &ConvMfModel, per_tensor: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let sizes: Vec<usize> = model.tensor_values().iter().map(|t| t.len()).collect();
        (0..sizes.len())
            .flat_map(|t| (0..per_tensor).map(move |_| t))
            .map(|t| (t, rng.gen_range(0..sizes[t])))
            .collect()
    }

    #[test]
    fn partial_rerun_matches_full_forward() {
        let mut model = build_convmf(5, 7, &tiny_hyper(2)).unwrap();
        let x = Matrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64).sin());
        let (_, cache) = model.forward_cached(&[&x]).unwrap();
        for t in 0..model.tensor_names().len() {
            model.tensor_values_mut()[t][0] += 0.01;
            let full = model.forward_cached(&[&x]).unwrap().0;
            assert_eq!(model.rerun_from(&[&x], &cache, t).unwrap(), full, "tensor {t}");
            model.tensor_values_mut()[t][0] -= 0.01;
        }
    }

    #[test]
    fn gradients_match_central_differences_for_every_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in Activation::ALL {
            let hyper = Hyperparameters {
                activation: act,
                ..tiny_hyper(2)
            };
            let mut model = build_convmf(5, 7, &hyper).unwrap();
            let xs: Vec<Matrix> = (0..2)
                .map(|_| Matrix::from_fn(5, 7, |_, _| rng.gen_range(0.0..1.0)))
                .collect();
            let refs: Vec<&Matrix> = xs.iter().collect();
            let sites = probe_sites(&model, 6, &mut rng);
            let check = probe_gradients(&mut model, &refs, &sites, 1e-5).unwrap();
            assert!(check.worst_scaled_error() < 1e-5, "{act:?}: {}", check.worst_scaled_error());
            // Well-resolved entries also meet the tolerance without a floor.
            for p in check.probes.iter().filter(|p| p.analytic.abs() > 1e-2 * check.gradient_scale) {
                assert!(p.relative_error(0.0) < 1e-5, "{act:?} {p:?}");
            }
        }
    }
}
