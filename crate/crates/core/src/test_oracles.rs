//! Straight-line reference implementations used only by tests. These
//! recompute network outputs with direct nested loops in f64, sharing no
//! code with the im2col/gemm path they check.

use crate::nn::{ParameterSet, Tensor};

/// Direct convolution, valid padding. Returns (data, out_h, out_w).
pub fn naive_conv(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    bias: &[f32],
    oc: usize,
    k: usize,
    s: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = vec![0.0f64; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o] as f64;
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy * s + ky;
                            let ix = ox * s + kx;
                            acc += weights[((o * c + ci) * k + ky) * k + kx] as f64
                                * input[(ci * h + iy) * w + ix];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

fn naive_elu(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = x.exp() - 1.0;
        }
    }
}

pub fn naive_dense(input: &[f64], weights: &[f32], bias: &[f32], units: usize) -> Vec<f64> {
    let in_dim = input.len();
    (0..units)
        .map(|u| {
            let mut acc = bias[u] as f64;
            for i in 0..in_dim {
                acc += weights[u * in_dim + i] as f64 * input[i];
            }
            acc
        })
        .collect()
}

/// Reference forward pass of the small encoder
/// (conv 32 k8 s4, elu, conv 64 k4 s2, elu, flatten, dense 128).
pub fn naive_small_encoder(params: &ParameterSet, prefix: &str, obs: &Tensor) -> Vec<f64> {
    let get = |name: &str| params.get(&format!("{prefix}.{name}")).unwrap();
    let input: Vec<f64> = obs.data().iter().map(|&v| v as f64).collect();
    let res = obs.shape()[1];

    let (mut a, h1, w1) = naive_conv(&input, 3, res, res, get("0.w").data(), get("0.b").data(), 32, 8, 4);
    naive_elu(&mut a);
    let (mut b, _, _) = naive_conv(&a, 32, h1, w1, get("2.w").data(), get("2.b").data(), 64, 4, 2);
    naive_elu(&mut b);
    naive_dense(&b, get("5.w").data(), get("5.b").data(), 128)
}

/// Softmax in f64 for oracle comparisons.
pub fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

pub use naive_dense as dense;
