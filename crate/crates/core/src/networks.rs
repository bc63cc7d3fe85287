//! Factories for the visual encoders and the head networks used by the
//! world model and the actor.
//!
//! Three encoder sizes are supported: small (2 conv layers, ELU),
//! medium (4 conv layers, ELU), and large (a conv stem plus 7 two-layer
//! residual blocks, ReLU — 15 conv layers total, channels 32 to 64).
//! Every encoder ends in a 128-unit fully-connected feature layer
//! regardless of input resolution.

use serde::{Deserialize, Serialize};

use crate::env::action::ONE_HOT_DIM;
use crate::nn::{build_stack, LayerSpec, LayerStack, NnError, ParameterSet, Scalar};

/// Feature width shared by all encoders.
pub const FEATURE_DIM: usize = 128;

pub const SUPPORTED_RESOLUTIONS: [usize; 3] = [64, 96, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderSize {
    Small,
    Medium,
    Large,
}

impl EncoderSize {
    pub const ALL: [EncoderSize; 3] = [EncoderSize::Small, EncoderSize::Medium, EncoderSize::Large];

    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderSize::Small => "small",
            EncoderSize::Medium => "medium",
            EncoderSize::Large => "large",
        }
    }
}

impl std::fmt::Display for EncoderSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EncoderSize {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(EncoderSize::Small),
            "medium" => Ok(EncoderSize::Medium),
            "large" => Ok(EncoderSize::Large),
            other => Err(format!("unknown encoder size {other:?} (expected small/medium/large)")),
        }
    }
}

/// A visual encoder: conv tower plus the fully-connected feature layer.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    pub stack: LayerStack,
    pub feature_dim: usize,
}

fn check_resolution(resolution: usize) -> Result<(), NnError> {
    if SUPPORTED_RESOLUTIONS.contains(&resolution) {
        Ok(())
    } else {
        Err(NnError::Invalid(format!(
            "unsupported resolution {resolution} (expected one of {SUPPORTED_RESOLUTIONS:?})"
        )))
    }
}

/// Build an encoder mapping `[channels, resolution, resolution]` to a
/// 128-dimensional feature vector.
pub fn build_encoder(
    name: &str,
    size: EncoderSize,
    resolution: usize,
    channels: usize,
) -> Result<EncoderNet, NnError> {
    check_resolution(resolution)?;
    if channels != 3 {
        return Err(NnError::Invalid(format!("encoders take RGB input (3 channels), got {channels}")));
    }
    let mut layers = match size {
        EncoderSize::Small => vec![
            LayerSpec::Conv2d { out_channels: 32, kernel: 8, stride: 4, padding: 0 },
            LayerSpec::Elu,
            LayerSpec::Conv2d { out_channels: 64, kernel: 4, stride: 2, padding: 0 },
            LayerSpec::Elu,
        ],
        EncoderSize::Medium => vec![
            LayerSpec::Conv2d { out_channels: 32, kernel: 8, stride: 4, padding: 0 },
            LayerSpec::Elu,
            LayerSpec::Conv2d { out_channels: 64, kernel: 4, stride: 2, padding: 0 },
            LayerSpec::Elu,
            LayerSpec::Conv2d { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Elu,
            LayerSpec::Conv2d { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Elu,
        ],
        EncoderSize::Large => vec![
            // stem + 7 residual blocks of 2 convs each = 15 conv layers
            LayerSpec::Conv2d { out_channels: 32, kernel: 8, stride: 4, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::ResidualBlock { channels: 32, stride: 1 },
            LayerSpec::ResidualBlock { channels: 32, stride: 1 },
            LayerSpec::ResidualBlock { channels: 32, stride: 1 },
            LayerSpec::ResidualBlock { channels: 64, stride: 2 },
            LayerSpec::ResidualBlock { channels: 64, stride: 1 },
            LayerSpec::ResidualBlock { channels: 64, stride: 1 },
            LayerSpec::ResidualBlock { channels: 64, stride: 1 },
        ],
    };
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense { units: FEATURE_DIM });
    let stack = build_stack(name, &[channels, resolution, resolution], layers)?;
    Ok(EncoderNet { stack, feature_dim: FEATURE_DIM })
}

/// Inverse dynamics head: consumes two concatenated feature vectors and
/// predicts the action that produced the transition through two
/// 3-way softmax heads.
#[derive(Clone, Debug)]
pub struct InverseHead {
    pub trunk: LayerStack,
    pub translation: LayerStack,
    pub rotation: LayerStack,
}

impl InverseHead {
    pub fn init_params<S: Scalar, R: rand::Rng>(&self, params: &mut ParameterSet<S>, rng: &mut R) {
        self.trunk.init_params(params, rng);
        self.translation.init_params(params, rng);
        self.rotation.init_params(params, rng);
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.translation.param_count() + self.rotation.param_count()
    }
}

pub fn build_inverse_head(name: &str) -> Result<InverseHead, NnError> {
    let hidden = 256;
    let trunk = build_stack(
        &format!("{name}.trunk"),
        &[2 * FEATURE_DIM],
        vec![LayerSpec::Dense { units: hidden }, LayerSpec::Elu],
    )?;
    let translation = build_stack(
        &format!("{name}.t"),
        &[hidden],
        vec![LayerSpec::SoftmaxHead { units: 3 }],
    )?;
    let rotation = build_stack(
        &format!("{name}.r"),
        &[hidden],
        vec![LayerSpec::SoftmaxHead { units: 3 }],
    )?;
    Ok(InverseHead { trunk, translation, rotation })
}

/// Forward dynamics head: `[feature ++ one-hot action]` to the predicted
/// next feature vector through a 2-layer MLP with 256 hidden units.
pub fn build_forward_head(name: &str) -> Result<LayerStack, NnError> {
    build_stack(
        name,
        &[FEATURE_DIM + ONE_HOT_DIM],
        vec![
            LayerSpec::Dense { units: 256 },
            LayerSpec::Elu,
            LayerSpec::Dense { units: FEATURE_DIM },
        ],
    )
}

/// The actor-critic network: its own encoder (never shared with the
/// world model), a two-layer 128-unit trunk, two 3-way policy heads,
/// and a scalar value head.
#[derive(Clone, Debug)]
pub struct ActorCriticNet {
    pub encoder: EncoderNet,
    pub trunk: LayerStack,
    pub head_translation: LayerStack,
    pub head_rotation: LayerStack,
    pub head_value: LayerStack,
}

impl ActorCriticNet {
    pub fn init_params<S: Scalar, R: rand::Rng>(&self, params: &mut ParameterSet<S>, rng: &mut R) {
        self.encoder.stack.init_params(params, rng);
        self.trunk.init_params(params, rng);
        self.head_translation.init_params(params, rng);
        self.head_rotation.init_params(params, rng);
        self.head_value.init_params(params, rng);
    }

    pub fn param_count(&self) -> usize {
        self.encoder.stack.param_count()
            + self.trunk.param_count()
            + self.head_translation.param_count()
            + self.head_rotation.param_count()
            + self.head_value.param_count()
    }
}

pub fn build_actor_critic(name: &str, size: EncoderSize, resolution: usize) -> Result<ActorCriticNet, NnError> {
    let encoder = build_encoder(&format!("{name}.enc"), size, resolution, 3)?;
    let hidden = 128;
    let trunk = build_stack(
        &format!("{name}.trunk"),
        &[FEATURE_DIM],
        vec![
            LayerSpec::Dense { units: hidden },
            LayerSpec::Elu,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Elu,
        ],
    )?;
    let head_translation = build_stack(
        &format!("{name}.t"),
        &[hidden],
        vec![LayerSpec::SoftmaxHead { units: 3 }],
    )?;
    let head_rotation = build_stack(
        &format!("{name}.r"),
        &[hidden],
        vec![LayerSpec::SoftmaxHead { units: 3 }],
    )?;
    let head_value = build_stack(&format!("{name}.v"), &[hidden], vec![LayerSpec::Dense { units: 1 }])?;
    Ok(ActorCriticNet { encoder, trunk, head_translation, head_rotation, head_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, infer, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn encoders_output_128_features_at_every_resolution() {
        for size in EncoderSize::ALL {
            for res in SUPPORTED_RESOLUTIONS {
                let enc = build_encoder("e", size, res, 3).unwrap();
                assert_eq!(enc.stack.output_shape, vec![FEATURE_DIM], "{size} at {res}");
                let mut params = ParameterSet::<f32>::new();
                let mut r = rng(3);
                enc.stack.init_params(&mut params, &mut r);
                let input = Tensor::filled(&[3, res, res], 0.5);
                let out = infer(&enc.stack, &params, &input).unwrap();
                assert_eq!(out.shape(), &[FEATURE_DIM]);
                assert!(out.is_finite());
            }
        }
    }

    #[test]
    fn unsupported_resolution_is_rejected() {
        assert!(build_encoder("e", EncoderSize::Small, 80, 3).is_err());
        assert!(build_encoder("e", EncoderSize::Small, 96, 1).is_err());
    }

    #[test]
    fn large_encoder_has_15_conv_layers() {
        let enc = build_encoder("e", EncoderSize::Large, 64, 3).unwrap();
        let mut convs = 0;
        for layer in &enc.stack.layers {
            match layer.spec {
                LayerSpec::Conv2d { .. } => convs += 1,
                LayerSpec::ResidualBlock { .. } => convs += 2,
                _ => {}
            }
        }
        assert_eq!(convs, 15);
    }

    #[test]
    fn parameter_counts_strictly_increase_with_size() {
        for res in SUPPORTED_RESOLUTIONS {
            let counts: Vec<usize> = EncoderSize::ALL
                .iter()
                .map(|&s| build_encoder("e", s, res, 3).unwrap().stack.param_count())
                .collect();
            assert!(counts[0] < counts[1], "res {res}: small {} !< medium {}", counts[0], counts[1]);
            assert!(counts[1] < counts[2], "res {res}: medium {} !< large {}", counts[1], counts[2]);
        }
    }

    #[test]
    fn param_count_matches_initialized_set() {
        let enc = build_encoder("e", EncoderSize::Large, 96, 3).unwrap();
        let mut params = ParameterSet::<f32>::new();
        let mut r = rng(1);
        enc.stack.init_params(&mut params, &mut r);
        assert_eq!(params.total_values(), enc.stack.param_count());
    }

    #[test]
    fn inverse_head_outputs_two_normalized_3_vectors() {
        let head = build_inverse_head("inv").unwrap();
        let mut params = ParameterSet::<f32>::new();
        let mut r = rng(5);
        head.init_params(&mut params, &mut r);
        let input = Tensor::filled(&[256], 0.1);
        let h = infer(&head.trunk, &params, &input).unwrap();
        assert_eq!(h.shape(), &[256]);
        for stack in [&head.translation, &head.rotation] {
            let p = infer(stack, &params, &h).unwrap();
            assert_eq!(p.shape(), &[3]);
            let sum: f64 = p.data().iter().map(|&v| v as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_weight_heads_are_uniform() {
        let head = build_inverse_head("inv").unwrap();
        let mut params = ParameterSet::<f32>::new();
        // zero weights and biases everywhere
        params.insert("inv.trunk.0.w", Tensor::zeros(&[256, 256]));
        params.insert("inv.trunk.0.b", Tensor::zeros(&[256]));
        params.insert("inv.t.0.w", Tensor::zeros(&[3, 256]));
        params.insert("inv.t.0.b", Tensor::zeros(&[3]));
        params.insert("inv.r.0.w", Tensor::zeros(&[3, 256]));
        params.insert("inv.r.0.b", Tensor::zeros(&[3]));
        let input = Tensor::filled(&[256], 0.7);
        let h = infer(&head.trunk, &params, &input).unwrap();
        for stack in [&head.translation, &head.rotation] {
            let p = infer(stack, &params, &h).unwrap();
            for &v in p.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn forward_head_maps_134_to_128() {
        let head = build_forward_head("fwd").unwrap();
        assert_eq!(head.input_shape, vec![134]);
        assert_eq!(head.output_shape, vec![128]);

        // zero input and zero weights give exactly zero output
        let mut params = ParameterSet::<f32>::new();
        params.insert("fwd.0.w", Tensor::zeros(&[256, 134]));
        params.insert("fwd.0.b", Tensor::zeros(&[256]));
        params.insert("fwd.2.w", Tensor::zeros(&[128, 256]));
        params.insert("fwd.2.b", Tensor::zeros(&[128]));
        let out = infer(&head, &params, &Tensor::zeros(&[134])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_head_matches_straight_line_oracle_on_fixed_weights() {
        // Tiny analog of the trunk+head composition with hand arithmetic:
        // trunk dense(2->2)+elu, then a 3-way softmax head.
        let trunk = crate::nn::build_stack("o.trunk", &[2], vec![LayerSpec::Dense { units: 2 }, LayerSpec::Elu]).unwrap();
        let head = crate::nn::build_stack("o.h", &[2], vec![LayerSpec::SoftmaxHead { units: 3 }]).unwrap();
        let mut params = ParameterSet::<f64>::new();
        let wt = [0.4, -0.7, 1.1, 0.2];
        let bt = [0.05, -0.3];
        let wh = [0.3, -0.2, 0.9, 0.5, -1.0, 0.1];
        let bh = [0.0, 0.1, -0.1];
        params.insert("o.trunk.0.w", Tensor::new(vec![2, 2], wt.to_vec()));
        params.insert("o.trunk.0.b", Tensor::new(vec![2], bt.to_vec()));
        params.insert("o.h.0.w", Tensor::new(vec![3, 2], wh.to_vec()));
        params.insert("o.h.0.b", Tensor::new(vec![3], bh.to_vec()));

        let x = [0.6, -1.2];
        let h = infer(&trunk, &params, &Tensor::new(vec![2], x.to_vec())).unwrap();
        let (p, _) = forward(&head, &params, &h).unwrap();

        // oracle
        let z0 = wt[0] * x[0] + wt[1] * x[1] + bt[0];
        let z1 = wt[2] * x[0] + wt[3] * x[1] + bt[1];
        let a0 = if z0 >= 0.0 { z0 } else { z0.exp() - 1.0 };
        let a1 = if z1 >= 0.0 { z1 } else { z1.exp() - 1.0 };
        let logits = [
            wh[0] * a0 + wh[1] * a1 + bh[0],
            wh[2] * a0 + wh[3] * a1 + bh[1],
            wh[4] * a0 + wh[5] * a1 + bh[2],
        ];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for i in 0..3 {
            assert!((p.data()[i] - exps[i] / sum).abs() < 1e-12);
        }
    }

    #[test]
    fn actor_critic_outputs_two_prob_vectors_and_a_scalar() {
        let net = build_actor_critic("actor", EncoderSize::Small, 64).unwrap();
        let mut params = ParameterSet::<f32>::new();
        let mut r = rng(9);
        net.init_params(&mut params, &mut r);
        let obs = Tensor::filled(&[3, 64, 64], 0.25);
        let feat = infer(&net.encoder.stack, &params, &obs).unwrap();
        let h = infer(&net.trunk, &params, &feat).unwrap();
        let pt = infer(&net.head_translation, &params, &h).unwrap();
        let pr = infer(&net.head_rotation, &params, &h).unwrap();
        let v = infer(&net.head_value, &params, &h).unwrap();
        assert_eq!(pt.shape(), &[3]);
        assert_eq!(pr.shape(), &[3]);
        assert_eq!(v.shape(), &[1]);
        for p in [&pt, &pr] {
            let sum: f64 = p.data().iter().map(|&x| x as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn actor_and_world_model_encoders_are_distinct_parameter_sets() {
        let actor_enc = build_encoder("actor.enc", EncoderSize::Small, 64, 3).unwrap();
        let wm_enc = build_encoder("wm.phi", EncoderSize::Small, 64, 3).unwrap();
        let mut params = ParameterSet::<f32>::new();
        let mut r = rng(2);
        actor_enc.stack.init_params(&mut params, &mut r);
        wm_enc.stack.init_params(&mut params, &mut r);
        let actor_names: Vec<&str> = params.names().filter(|n| n.starts_with("actor.")).collect();
        let wm_names: Vec<&str> = params.names().filter(|n| n.starts_with("wm.")).collect();
        assert!(!actor_names.is_empty() && !wm_names.is_empty());
        assert_eq!(params.len(), actor_names.len() + wm_names.len());
    }
}
