//! Layer catalog, shape-checked stack builder, and the tape-based
//! forward/backward passes.
//!
//! A [`LayerStack`] is a sequential network description whose adjacent
//! shapes were validated at build time. `forward` records per-layer
//! activations on a [`Tape`]; `backward` replays the tape to produce
//! exact gradients for every parameter plus the input gradient.

use super::kernels::{col2im_acc, conv_out_dim, gemm_acc, gemm_nt_acc, gemm_tn_acc, im2col};
use super::params::{ParamGrads, ParameterSet};
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Dense { units: usize },
    Elu,
    Relu,
    Flatten,
    /// Dense projection to `units` logits followed by a softmax.
    SoftmaxHead { units: usize },
    /// Two 3x3 convolutions with a skip connection and ReLU activations.
    /// A 1x1 projection is inserted on the skip path when the channel
    /// count or stride changes.
    ResidualBlock { channels: usize, stride: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Elu => "elu",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxHead { .. } => "softmax-head",
            LayerSpec::ResidualBlock { .. } => "residual-block",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuiltLayer {
    pub spec: LayerSpec,
    pub name: String,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

/// A validated sequential network. `name` prefixes every parameter this
/// stack owns inside a [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct LayerStack {
    pub name: String,
    pub layers: Vec<BuiltLayer>,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

fn shape_err(name: &str, kind: &str, msg: String) -> NnError {
    NnError::ShapeMismatch { layer: name.to_string(), kind: kind.to_string(), msg }
}

pub fn build_stack(
    name: &str,
    input_shape: &[usize],
    specs: Vec<LayerSpec>,
) -> Result<LayerStack, NnError> {
    let mut layers = Vec::with_capacity(specs.len());
    let mut shape = input_shape.to_vec();
    for (i, spec) in specs.into_iter().enumerate() {
        let layer_name = format!("{name}.{i}");
        let out_shape = match &spec {
            LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
                if shape.len() != 3 {
                    return Err(shape_err(&layer_name, spec.kind(), format!("expects [C,H,W] input, got {shape:?}")));
                }
                let (h, w) = (shape[1], shape[2]);
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(shape_err(&layer_name, spec.kind(), format!("kernel {kernel} larger than padded input {shape:?}")));
                }
                if *stride == 0 {
                    return Err(shape_err(&layer_name, spec.kind(), "stride must be positive".into()));
                }
                vec![*out_channels, conv_out_dim(h, *kernel, *stride, *padding), conv_out_dim(w, *kernel, *stride, *padding)]
            }
            LayerSpec::Dense { units } | LayerSpec::SoftmaxHead { units } => {
                if shape.len() != 1 {
                    return Err(shape_err(&layer_name, spec.kind(), format!("expects flat input, got {shape:?}")));
                }
                vec![*units]
            }
            LayerSpec::Elu | LayerSpec::Relu => shape.clone(),
            LayerSpec::Flatten => vec![shape.iter().product()],
            LayerSpec::ResidualBlock { channels, stride } => {
                if shape.len() != 3 {
                    return Err(shape_err(&layer_name, spec.kind(), format!("expects [C,H,W] input, got {shape:?}")));
                }
                let (h, w) = (shape[1], shape[2]);
                if h + 2 < 3 || w + 2 < 3 || *stride == 0 {
                    return Err(shape_err(&layer_name, spec.kind(), format!("invalid geometry for {shape:?}")));
                }
                vec![*channels, conv_out_dim(h, 3, *stride, 1), conv_out_dim(w, 3, *stride, 1)]
            }
        };
        layers.push(BuiltLayer { spec, name: layer_name, in_shape: shape.clone(), out_shape: out_shape.clone() });
        shape = out_shape;
    }
    Ok(LayerStack {
        name: name.to_string(),
        layers,
        input_shape: input_shape.to_vec(),
        output_shape: shape,
    })
}

impl LayerStack {
    /// Register fan-in scaled uniform weights and zero biases for every
    /// parameterized layer in this stack.
    pub fn init_params<S: Scalar, R: rand::Rng>(&self, params: &mut ParameterSet<S>, rng: &mut R) {
        for layer in &self.layers {
            match &layer.spec {
                LayerSpec::Conv2d { out_channels, kernel, .. } => {
                    let in_c = layer.in_shape[0];
                    let fan_in = in_c * kernel * kernel;
                    params.insert(
                        format!("{}.w", layer.name),
                        init_uniform(&[*out_channels, in_c, *kernel, *kernel], fan_in, rng),
                    );
                    params.insert(format!("{}.b", layer.name), Tensor::zeros(&[*out_channels]));
                }
                LayerSpec::Dense { units } | LayerSpec::SoftmaxHead { units } => {
                    let in_dim = layer.in_shape[0];
                    params.insert(format!("{}.w", layer.name), init_uniform(&[*units, in_dim], in_dim, rng));
                    params.insert(format!("{}.b", layer.name), Tensor::zeros(&[*units]));
                }
                LayerSpec::ResidualBlock { channels, stride } => {
                    let in_c = layer.in_shape[0];
                    params.insert(format!("{}.c1.w", layer.name), init_uniform(&[*channels, in_c, 3, 3], in_c * 9, rng));
                    params.insert(format!("{}.c1.b", layer.name), Tensor::zeros(&[*channels]));
                    params.insert(format!("{}.c2.w", layer.name), init_uniform(&[*channels, *channels, 3, 3], channels * 9, rng));
                    params.insert(format!("{}.c2.b", layer.name), Tensor::zeros(&[*channels]));
                    if in_c != *channels || *stride != 1 {
                        params.insert(format!("{}.proj.w", layer.name), init_uniform(&[*channels, in_c, 1, 1], in_c, rng));
                        params.insert(format!("{}.proj.b", layer.name), Tensor::zeros(&[*channels]));
                    }
                }
                LayerSpec::Elu | LayerSpec::Relu | LayerSpec::Flatten => {}
            }
        }
    }

    /// Number of scalar parameters this stack contributes.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        for layer in &self.layers {
            match &layer.spec {
                LayerSpec::Conv2d { out_channels, kernel, .. } => {
                    count += out_channels * layer.in_shape[0] * kernel * kernel + out_channels;
                }
                LayerSpec::Dense { units } | LayerSpec::SoftmaxHead { units } => {
                    count += units * layer.in_shape[0] + units;
                }
                LayerSpec::ResidualBlock { channels, stride } => {
                    let in_c = layer.in_shape[0];
                    count += channels * in_c * 9 + channels;
                    count += channels * channels * 9 + channels;
                    if in_c != *channels || *stride != 1 {
                        count += channels * in_c + channels;
                    }
                }
                _ => {}
            }
        }
        count
    }
}

fn init_uniform<S: Scalar, R: rand::Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            S::from((2.0 * u - 1.0) * bound).unwrap()
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

// ── Tape ────────────────────────────────────────────────────────────

#[derive(Debug)]
enum TapeEntry<S> {
    Conv2d { input: Tensor<S> },
    Dense { input: Tensor<S> },
    Elu { input: Tensor<S> },
    Relu { input: Tensor<S> },
    Flatten,
    SoftmaxHead { input: Tensor<S>, probs: Tensor<S> },
    Residual { input: Tensor<S>, pre1: Tensor<S>, pre_out: Tensor<S> },
}

/// Activation record produced by [`forward`]; consumed exactly once by
/// [`backward`] against the same parameter version.
#[derive(Debug)]
pub struct Tape<S = super::tensor::Real> {
    stack_name: String,
    param_version: u64,
    consumed: bool,
    entries: Vec<TapeEntry<S>>,
    output_shape: Vec<usize>,
}

pub fn forward<S: Scalar>(
    stack: &LayerStack,
    params: &ParameterSet<S>,
    input: &Tensor<S>,
) -> Result<(Tensor<S>, Tape<S>), NnError> {
    let mut entries = Vec::with_capacity(stack.layers.len());
    let out = run_layers(stack, params, input, Some(&mut entries))?;
    let tape = Tape {
        stack_name: stack.name.clone(),
        param_version: params.version(),
        consumed: false,
        entries,
        output_shape: out.shape().to_vec(),
    };
    Ok((out, tape))
}

/// Forward pass without recording activations (inference path).
pub fn infer<S: Scalar>(
    stack: &LayerStack,
    params: &ParameterSet<S>,
    input: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    run_layers(stack, params, input, None)
}

fn run_layers<S: Scalar>(
    stack: &LayerStack,
    params: &ParameterSet<S>,
    input: &Tensor<S>,
    mut tape: Option<&mut Vec<TapeEntry<S>>>,
) -> Result<Tensor<S>, NnError> {
    if input.shape() != stack.input_shape.as_slice() {
        return Err(shape_err(
            &stack.name,
            "stack-input",
            format!("expected {:?}, got {:?}", stack.input_shape, input.shape()),
        ));
    }
    let mut x = input.clone();
    for layer in &stack.layers {
        let (out, entry) = layer_forward(layer, params, x, tape.is_some())?;
        if let Some(t) = tape.as_deref_mut() {
            t.push(entry.expect("tape entry requested"));
        }
        x = out;
    }
    Ok(x)
}

fn get_param<'a, S: Scalar>(params: &'a ParameterSet<S>, name: &str) -> Result<&'a Tensor<S>, NnError> {
    params.get(name).ok_or_else(|| NnError::MissingParam { name: name.to_string() })
}

type ForwardOut<S> = (Tensor<S>, Option<TapeEntry<S>>);

fn layer_forward<S: Scalar>(
    layer: &BuiltLayer,
    params: &ParameterSet<S>,
    input: Tensor<S>,
    want_tape: bool,
) -> Result<ForwardOut<S>, NnError> {
    match &layer.spec {
        LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let b = get_param(params, &format!("{}.b", layer.name))?;
            let out = conv_forward(input.data(), &layer.in_shape, w.data(), b.data(), *out_channels, *kernel, *stride, *padding);
            let out = Tensor::new(layer.out_shape.clone(), out);
            Ok((out, want_tape.then(|| TapeEntry::Conv2d { input })))
        }
        LayerSpec::Dense { units } => {
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let b = get_param(params, &format!("{}.b", layer.name))?;
            let out = dense_forward(input.data(), w.data(), b.data(), *units);
            let out = Tensor::new(vec![*units], out);
            Ok((out, want_tape.then(|| TapeEntry::Dense { input })))
        }
        LayerSpec::Elu => {
            let out: Vec<S> = input.data().iter().map(|&v| elu(v)).collect();
            let out = Tensor::new(input.shape().to_vec(), out);
            Ok((out, want_tape.then(|| TapeEntry::Elu { input })))
        }
        LayerSpec::Relu => {
            let out: Vec<S> = input.data().iter().map(|&v| v.max(S::zero())).collect();
            let out = Tensor::new(input.shape().to_vec(), out);
            Ok((out, want_tape.then(|| TapeEntry::Relu { input })))
        }
        LayerSpec::Flatten => {
            let out = input.reshaped(&layer.out_shape);
            Ok((out, want_tape.then_some(TapeEntry::Flatten)))
        }
        LayerSpec::SoftmaxHead { units } => {
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let b = get_param(params, &format!("{}.b", layer.name))?;
            let logits = dense_forward(input.data(), w.data(), b.data(), *units);
            let probs = softmax(&logits);
            let probs = Tensor::new(vec![*units], probs);
            let entry = want_tape.then(|| TapeEntry::SoftmaxHead { input, probs: probs.clone() });
            Ok((probs, entry))
        }
        LayerSpec::ResidualBlock { channels, stride } => {
            let (out, pre1, pre_out) = residual_forward(layer, params, &input, *channels, *stride)?;
            let entry = want_tape.then(|| TapeEntry::Residual { input, pre1, pre_out });
            Ok((Tensor::new(layer.out_shape.clone(), out), entry))
        }
    }
}

#[inline]
fn elu<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        v
    } else {
        v.exp() - S::one()
    }
}

fn dense_forward<S: Scalar>(x: &[S], w: &[S], b: &[S], units: usize) -> Vec<S> {
    let in_dim = x.len();
    assert_eq!(w.len(), units * in_dim);
    let mut out = b.to_vec();
    gemm_acc(w, x, &mut out, units, in_dim, 1);
    out
}

fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |a, &b| a + b);
    exps.iter().map(|&e| e / sum).collect()
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    w: &[S],
    b: &[S],
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Vec<S> {
    let (c, h, wd) = (in_shape[0], in_shape[1], in_shape[2]);
    let oh = conv_out_dim(h, kernel, stride, padding);
    let ow = conv_out_dim(wd, kernel, stride, padding);
    let n = oh * ow;
    let ckk = c * kernel * kernel;
    let mut cols = vec![S::zero(); ckk * n];
    im2col(input, c, h, wd, kernel, stride, padding, &mut cols);
    let mut out = vec![S::zero(); out_channels * n];
    for (oc, chunk) in out.chunks_exact_mut(n).enumerate() {
        chunk.fill(b[oc]);
    }
    gemm_acc(w, &cols, &mut out, out_channels, ckk, n);
    out
}

/// Returns (dw, db, dx).
#[allow(clippy::too_many_arguments)]
fn conv_backward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    w: &[S],
    grad_out: &[S],
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let (c, h, wd) = (in_shape[0], in_shape[1], in_shape[2]);
    let oh = conv_out_dim(h, kernel, stride, padding);
    let ow = conv_out_dim(wd, kernel, stride, padding);
    let n = oh * ow;
    let ckk = c * kernel * kernel;
    let mut cols = vec![S::zero(); ckk * n];
    im2col(input, c, h, wd, kernel, stride, padding, &mut cols);

    let mut dw = vec![S::zero(); out_channels * ckk];
    gemm_nt_acc(grad_out, &cols, &mut dw, out_channels, n, ckk);

    let mut db = vec![S::zero(); out_channels];
    for (oc, dbv) in db.iter_mut().enumerate() {
        let row = &grad_out[oc * n..(oc + 1) * n];
        *dbv = row.iter().fold(S::zero(), |a, &g| a + g);
    }

    let mut dcols = vec![S::zero(); ckk * n];
    gemm_tn_acc(w, grad_out, &mut dcols, ckk, out_channels, n);
    let mut dx = vec![S::zero(); c * h * wd];
    col2im_acc(&dcols, c, h, wd, kernel, stride, padding, &mut dx);
    (dw, db, dx)
}

type ResidualOut<S> = (Vec<S>, Tensor<S>, Tensor<S>);

fn residual_forward<S: Scalar>(
    layer: &BuiltLayer,
    params: &ParameterSet<S>,
    input: &Tensor<S>,
    channels: usize,
    stride: usize,
) -> Result<ResidualOut<S>, NnError> {
    let in_c = layer.in_shape[0];
    let w1 = get_param(params, &format!("{}.c1.w", layer.name))?;
    let b1 = get_param(params, &format!("{}.c1.b", layer.name))?;
    let w2 = get_param(params, &format!("{}.c2.w", layer.name))?;
    let b2 = get_param(params, &format!("{}.c2.b", layer.name))?;

    let pre1 = conv_forward(input.data(), &layer.in_shape, w1.data(), b1.data(), channels, 3, stride, 1);
    let r1: Vec<S> = pre1.iter().map(|&v| v.max(S::zero())).collect();
    let mid_shape = layer.out_shape.clone();
    let a2 = conv_forward(&r1, &mid_shape, w2.data(), b2.data(), channels, 3, 1, 1);

    let shortcut: Vec<S> = if in_c != channels || stride != 1 {
        let wp = get_param(params, &format!("{}.proj.w", layer.name))?;
        let bp = get_param(params, &format!("{}.proj.b", layer.name))?;
        conv_forward(input.data(), &layer.in_shape, wp.data(), bp.data(), channels, 1, stride, 0)
    } else {
        input.data().to_vec()
    };
    let pre_out: Vec<S> = a2.iter().zip(&shortcut).map(|(&a, &s)| a + s).collect();
    let out: Vec<S> = pre_out.iter().map(|&v| v.max(S::zero())).collect();
    Ok((
        out,
        Tensor::new(mid_shape.clone(), pre1),
        Tensor::new(mid_shape, pre_out),
    ))
}

/// Run reverse mode over a recorded tape.
///
/// Errors if the tape was already consumed or if the parameters stepped
/// since the forward pass (the recorded activations would be stale).
pub fn backward<S: Scalar>(
    tape: &mut Tape<S>,
    stack: &LayerStack,
    params: &ParameterSet<S>,
    out_grad: &Tensor<S>,
) -> Result<(ParamGrads<S>, Tensor<S>), NnError> {
    if tape.stack_name != stack.name {
        return Err(NnError::Invalid(format!(
            "tape belongs to stack {}, not {}",
            tape.stack_name, stack.name
        )));
    }
    if tape.consumed {
        return Err(NnError::TapeConsumed { stack: stack.name.clone() });
    }
    if tape.param_version != params.version() {
        return Err(NnError::StaleTape { stack: stack.name.clone() });
    }
    if out_grad.shape() != tape.output_shape.as_slice() {
        return Err(shape_err(
            &stack.name,
            "stack-output",
            format!("gradient shape {:?} does not match output {:?}", out_grad.shape(), tape.output_shape),
        ));
    }
    tape.consumed = true;

    let mut grads = ParamGrads::new();
    let mut g = out_grad.clone();
    for (layer, entry) in stack.layers.iter().zip(tape.entries.iter()).rev() {
        g = layer_backward(layer, entry, params, &g, &mut grads)?;
    }
    Ok((grads, g))
}

fn layer_backward<S: Scalar>(
    layer: &BuiltLayer,
    entry: &TapeEntry<S>,
    params: &ParameterSet<S>,
    grad_out: &Tensor<S>,
    grads: &mut ParamGrads<S>,
) -> Result<Tensor<S>, NnError> {
    match (&layer.spec, entry) {
        (LayerSpec::Conv2d { out_channels, kernel, stride, padding }, TapeEntry::Conv2d { input }) => {
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let (dw, db, dx) = conv_backward(
                input.data(), &layer.in_shape, w.data(), grad_out.data(), *out_channels, *kernel, *stride, *padding,
            );
            grads.accumulate(&format!("{}.w", layer.name), &Tensor::new(w.shape().to_vec(), dw));
            grads.accumulate(&format!("{}.b", layer.name), &Tensor::new(vec![*out_channels], db));
            Ok(Tensor::new(layer.in_shape.clone(), dx))
        }
        (LayerSpec::Dense { units }, TapeEntry::Dense { input }) => {
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let (dw, db, dx) = dense_backward(input.data(), w.data(), grad_out.data(), *units);
            grads.accumulate(&format!("{}.w", layer.name), &Tensor::new(w.shape().to_vec(), dw));
            grads.accumulate(&format!("{}.b", layer.name), &Tensor::new(vec![*units], db));
            Ok(Tensor::new(layer.in_shape.clone(), dx))
        }
        (LayerSpec::Elu, TapeEntry::Elu { input }) => {
            let dx: Vec<S> = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x >= S::zero() { g } else { g * x.exp() })
                .collect();
            Ok(Tensor::new(layer.in_shape.clone(), dx))
        }
        (LayerSpec::Relu, TapeEntry::Relu { input }) => {
            let dx: Vec<S> = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x > S::zero() { g } else { S::zero() })
                .collect();
            Ok(Tensor::new(layer.in_shape.clone(), dx))
        }
        (LayerSpec::Flatten, TapeEntry::Flatten) => Ok(grad_out.reshaped(&layer.in_shape)),
        (LayerSpec::SoftmaxHead { units }, TapeEntry::SoftmaxHead { input, probs }) => {
            // dz_j = p_j (g_j - sum_i g_i p_i)
            let p = probs.data();
            let g = grad_out.data();
            let dot = p.iter().zip(g).fold(S::zero(), |a, (&pi, &gi)| a + pi * gi);
            let dz: Vec<S> = p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)).collect();
            let w = get_param(params, &format!("{}.w", layer.name))?;
            let (dw, db, dx) = dense_backward(input.data(), w.data(), &dz, *units);
            grads.accumulate(&format!("{}.w", layer.name), &Tensor::new(w.shape().to_vec(), dw));
            grads.accumulate(&format!("{}.b", layer.name), &Tensor::new(vec![*units], db));
            Ok(Tensor::new(layer.in_shape.clone(), dx))
        }
        (LayerSpec::ResidualBlock { channels, stride }, TapeEntry::Residual { input, pre1, pre_out }) => {
            residual_backward(layer, params, input, pre1, pre_out, grad_out, *channels, *stride, grads)
        }
        _ => Err(NnError::Invalid(format!("tape entry does not match layer {}", layer.name))),
    }
}

/// Returns (dw, db, dx) for y = Wx + b.
fn dense_backward<S: Scalar>(x: &[S], w: &[S], grad_out: &[S], units: usize) -> (Vec<S>, Vec<S>, Vec<S>) {
    let in_dim = x.len();
    let mut dw = vec![S::zero(); units * in_dim];
    for (u, dw_row) in dw.chunks_exact_mut(in_dim).enumerate() {
        let g = grad_out[u];
        if g == S::zero() {
            continue;
        }
        for (dwv, &xv) in dw_row.iter_mut().zip(x) {
            *dwv = g * xv;
        }
    }
    let db = grad_out.to_vec();
    let mut dx = vec![S::zero(); in_dim];
    gemm_tn_acc(w, grad_out, &mut dx, in_dim, units, 1);
    (dw, db, dx)
}

#[allow(clippy::too_many_arguments)]
fn residual_backward<S: Scalar>(
    layer: &BuiltLayer,
    params: &ParameterSet<S>,
    input: &Tensor<S>,
    pre1: &Tensor<S>,
    pre_out: &Tensor<S>,
    grad_out: &Tensor<S>,
    channels: usize,
    stride: usize,
    grads: &mut ParamGrads<S>,
) -> Result<Tensor<S>, NnError> {
    let in_c = layer.in_shape[0];
    let w1 = get_param(params, &format!("{}.c1.w", layer.name))?;
    let w2 = get_param(params, &format!("{}.c2.w", layer.name))?;

    // through the output ReLU
    let dz: Vec<S> = pre_out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&z, &g)| if z > S::zero() { g } else { S::zero() })
        .collect();

    // main path: conv2 over relu(pre1)
    let r1: Vec<S> = pre1.data().iter().map(|&v| v.max(S::zero())).collect();
    let mid_shape = layer.out_shape.clone();
    let (dw2, db2, dr1) = conv_backward(&r1, &mid_shape, w2.data(), &dz, channels, 3, 1, 1);
    grads.accumulate(&format!("{}.c2.w", layer.name), &Tensor::new(w2.shape().to_vec(), dw2));
    grads.accumulate(&format!("{}.c2.b", layer.name), &Tensor::new(vec![channels], db2));

    let da1: Vec<S> = pre1
        .data()
        .iter()
        .zip(&dr1)
        .map(|(&a, &g)| if a > S::zero() { g } else { S::zero() })
        .collect();
    let (dw1, db1, dx_main) = conv_backward(input.data(), &layer.in_shape, w1.data(), &da1, channels, 3, stride, 1);
    grads.accumulate(&format!("{}.c1.w", layer.name), &Tensor::new(w1.shape().to_vec(), dw1));
    grads.accumulate(&format!("{}.c1.b", layer.name), &Tensor::new(vec![channels], db1));

    // skip path
    let mut dx = dx_main;
    if in_c != channels || stride != 1 {
        let wp = get_param(params, &format!("{}.proj.w", layer.name))?;
        let (dwp, dbp, dx_skip) =
            conv_backward(input.data(), &layer.in_shape, wp.data(), &dz, channels, 1, stride, 0);
        grads.accumulate(&format!("{}.proj.w", layer.name), &Tensor::new(wp.shape().to_vec(), dwp));
        grads.accumulate(&format!("{}.proj.b", layer.name), &Tensor::new(vec![channels], dbp));
        for (a, b) in dx.iter_mut().zip(&dx_skip) {
            *a = *a + *b;
        }
    } else {
        for (a, &b) in dx.iter_mut().zip(&dz) {
            *a = *a + b;
        }
    }
    Ok(Tensor::new(layer.in_shape.clone(), dx))
}
