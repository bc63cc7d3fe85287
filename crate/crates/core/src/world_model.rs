//! The curiosity module: a feature encoder, an inverse dynamics head
//! that predicts the action between two consecutive observations, and a
//! forward dynamics head that predicts the next feature vector. The
//! forward prediction error doubles as the intrinsic reward.

use rand::Rng;
use rayon::prelude::*;

use crate::env::action::AgentAction;
use crate::env::ObservationImage;
use crate::networks::{build_encoder, build_forward_head, build_inverse_head, EncoderNet, EncoderSize, InverseHead, FEATURE_DIM};
use crate::nn::{self, backward, clip_global_norm, forward, infer, optimizer_step, NnError, ParamGrads, ParameterSet, Tensor};

/// Chunk size for deterministic parallel gradient accumulation: batches
/// are split into fixed-size chunks reduced in index order, so results
/// do not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Guard for probabilities entering a division; keeps gradients finite
/// when a head has collapsed.
const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum WorldModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid world model config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss (inverse {inverse}, forward {forward}); parameters unchanged")]
    NonFiniteLoss { inverse: f64, forward: f64 },
    #[error("empty transition batch")]
    EmptyBatch,
}

/// A learning transition: consecutive observations and the action taken
/// between them.
#[derive(Clone, Copy)]
pub struct Transition<'a> {
    pub obs: &'a ObservationImage,
    pub action: AgentAction,
    pub next_obs: &'a ObservationImage,
}

/// Loss decomposition of one world-model evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcmLoss {
    pub inverse_loss: f64,
    pub forward_loss: f64,
    pub combined: f64,
}

impl IcmLoss {
    /// Weighted combination `(1 - alpha) * L_i + alpha * L_f`.
    pub fn new(alpha: f64, inverse_loss: f64, forward_loss: f64) -> Self {
        Self {
            inverse_loss,
            forward_loss,
            combined: (1.0 - alpha) * inverse_loss + alpha * forward_loss,
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_ETA: f64 = 0.1;

pub struct WorldModel {
    pub phi: EncoderNet,
    pub inverse: InverseHead,
    pub forward_head: nn::LayerStack,
    pub params: ParameterSet,
    /// Weight of the forward loss in the combined objective.
    pub alpha: f64,
    /// Intrinsic reward scale applied to the forward prediction error.
    pub eta: f64,
}

impl WorldModel {
    pub fn new<R: Rng>(
        encoder: EncoderSize,
        resolution: usize,
        alpha: f64,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self, WorldModelError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(WorldModelError::InvalidConfig(format!("alpha must be in [0,1], got {alpha}")));
        }
        if !(eta >= 0.0) {
            return Err(WorldModelError::InvalidConfig(format!("eta must be non-negative, got {eta}")));
        }
        let phi = build_encoder("wm.phi", encoder, resolution, 3)?;
        let inverse = build_inverse_head("wm.inv")?;
        let forward_head = build_forward_head("wm.fwd")?;
        let mut params = ParameterSet::new();
        phi.stack.init_params(&mut params, rng);
        inverse.init_params(&mut params, rng);
        forward_head.init_params(&mut params, rng);
        Ok(Self { phi, inverse, forward_head, params, alpha, eta })
    }

    /// Feature vector of one observation under the current parameters.
    pub fn encode(&self, obs: &ObservationImage) -> Result<Tensor, NnError> {
        infer(&self.phi.stack, &self.params, &obs.to_tensor())
    }

    /// Evaluate both losses for one transition without recording
    /// gradients or touching parameters.
    pub fn icm_loss(&self, t: &Transition) -> Result<IcmLoss, NnError> {
        let x_t = self.encode(t.obs)?;
        let x_t1 = self.encode(t.next_obs)?;
        self.icm_loss_from_features(&x_t, t.action, &x_t1)
    }

    pub fn icm_loss_from_features(
        &self,
        x_t: &Tensor,
        action: AgentAction,
        x_t1: &Tensor,
    ) -> Result<IcmLoss, NnError> {
        let inverse_loss = {
            let h = infer(&self.inverse.trunk, &self.params, &concat(x_t, x_t1))?;
            let p_t = infer(&self.inverse.translation, &self.params, &h)?;
            let p_r = infer(&self.inverse.rotation, &self.params, &h)?;
            let (ti, ri) = action.indices();
            nll(p_t.data()[ti]) + nll(p_r.data()[ri])
        };
        let forward_loss = {
            let predicted = infer(&self.forward_head, &self.params, &forward_input(x_t, action))?;
            forward_error(&predicted, x_t1)
        };
        Ok(IcmLoss::new(self.alpha, inverse_loss, forward_loss))
    }

    /// Curiosity reward: `eta` times the forward prediction error,
    /// evaluated with frozen parameters.
    pub fn intrinsic_reward(&self, t: &Transition) -> Result<f64, NnError> {
        let x_t = self.encode(t.obs)?;
        let x_t1 = self.encode(t.next_obs)?;
        self.intrinsic_reward_from_features(&x_t, t.action, &x_t1)
    }

    pub fn intrinsic_reward_from_features(
        &self,
        x_t: &Tensor,
        action: AgentAction,
        x_t1: &Tensor,
    ) -> Result<f64, NnError> {
        let predicted = infer(&self.forward_head, &self.params, &forward_input(x_t, action))?;
        Ok(self.eta * forward_error(&predicted, x_t1))
    }

    /// Gradients of the batch-mean combined loss with respect to every
    /// world-model parameter, plus the batch-mean losses.
    pub fn compute_gradients(&self, batch: &[Transition]) -> Result<(ParamGrads, IcmLoss), WorldModelError> {
        if batch.is_empty() {
            return Err(WorldModelError::EmptyBatch);
        }
        let inv_batch = 1.0 / batch.len() as f64;
        let chunks: Vec<(ParamGrads, f64, f64)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grads = ParamGrads::new();
                let mut li_sum = 0.0;
                let mut lf_sum = 0.0;
                for t in chunk {
                    let (li, lf) = self.sample_gradients(t, inv_batch, &mut grads).expect("forward pass");
                    li_sum += li;
                    lf_sum += lf;
                }
                (grads, li_sum, lf_sum)
            })
            .collect();

        let mut grads = ParamGrads::new();
        let (mut li_sum, mut lf_sum) = (0.0, 0.0);
        for (chunk_grads, li, lf) in chunks {
            grads.merge_scaled(&chunk_grads, 1.0);
            li_sum += li;
            lf_sum += lf;
        }
        let losses = IcmLoss::new(self.alpha, li_sum * inv_batch, lf_sum * inv_batch);
        Ok((grads, losses))
    }

    /// Accumulate one transition's gradient contribution, scaled by
    /// `weight` (the 1/batch factor). Returns this sample's raw losses.
    fn sample_gradients(
        &self,
        t: &Transition,
        weight: f64,
        grads: &mut ParamGrads,
    ) -> Result<(f64, f64), NnError> {
        let params = &self.params;
        let obs_t = t.obs.to_tensor();
        let obs_t1 = t.next_obs.to_tensor();
        let (x_t, mut tape_t) = forward(&self.phi.stack, params, &obs_t)?;
        let (x_t1, mut tape_t1) = forward(&self.phi.stack, params, &obs_t1)?;

        let mut g_xt = vec![0.0f32; FEATURE_DIM];
        let mut g_xt1 = vec![0.0f32; FEATURE_DIM];

        // forward dynamics branch
        let (predicted, mut tape_f) = forward(&self.forward_head, params, &forward_input(&x_t, t.action))?;
        let forward_loss = forward_error(&predicted, &x_t1);
        {
            // d/dx_hat of alpha * Lf / B, with Lf = mean(diff^2) / 2
            let scale = (self.alpha * weight / FEATURE_DIM as f64) as f32;
            let diff: Vec<f32> = predicted
                .data()
                .iter()
                .zip(x_t1.data())
                .map(|(&p, &x)| (p - x) * scale)
                .collect();
            let g_pred = Tensor::new(vec![FEATURE_DIM], diff.clone());
            let (fwd_grads, g_fwd_in) = backward(&mut tape_f, &self.forward_head, params, &g_pred)?;
            grads.merge_scaled(&fwd_grads, 1.0);
            for (a, &b) in g_xt.iter_mut().zip(&g_fwd_in.data()[..FEATURE_DIM]) {
                *a += b;
            }
            // the prediction target also carries gradient (joint optimization)
            for (a, &d) in g_xt1.iter_mut().zip(&diff) {
                *a -= d;
            }
        }

        // inverse dynamics branch
        let (h, mut tape_trunk) = forward(&self.inverse.trunk, params, &concat(&x_t, &x_t1))?;
        let (p_t, mut tape_pt) = forward(&self.inverse.translation, params, &h)?;
        let (p_r, mut tape_pr) = forward(&self.inverse.rotation, params, &h)?;
        let (ti, ri) = t.action.indices();
        let inverse_loss = nll(p_t.data()[ti]) + nll(p_r.data()[ri]);
        {
            let scale = (1.0 - self.alpha) * weight;
            let g_pt = nll_prob_grad(&p_t, ti, scale);
            let g_pr = nll_prob_grad(&p_r, ri, scale);
            let (t_grads, g_h_t) = backward(&mut tape_pt, &self.inverse.translation, params, &g_pt)?;
            let (r_grads, g_h_r) = backward(&mut tape_pr, &self.inverse.rotation, params, &g_pr)?;
            grads.merge_scaled(&t_grads, 1.0);
            grads.merge_scaled(&r_grads, 1.0);
            let g_h: Vec<f32> = g_h_t.data().iter().zip(g_h_r.data()).map(|(&a, &b)| a + b).collect();
            let (trunk_grads, g_concat) =
                backward(&mut tape_trunk, &self.inverse.trunk, params, &Tensor::new(vec![2 * FEATURE_DIM], g_h))?;
            grads.merge_scaled(&trunk_grads, 1.0);
            for (a, &b) in g_xt.iter_mut().zip(&g_concat.data()[..FEATURE_DIM]) {
                *a += b;
            }
            for (a, &b) in g_xt1.iter_mut().zip(&g_concat.data()[FEATURE_DIM..]) {
                *a += b;
            }
        }

        // both feature gradients flow back through the shared encoder
        let (enc_grads_t, _) = backward(&mut tape_t, &self.phi.stack, params, &Tensor::new(vec![FEATURE_DIM], g_xt))?;
        grads.merge_scaled(&enc_grads_t, 1.0);
        let (enc_grads_t1, _) = backward(&mut tape_t1, &self.phi.stack, params, &Tensor::new(vec![FEATURE_DIM], g_xt1))?;
        grads.merge_scaled(&enc_grads_t1, 1.0);

        Ok((inverse_loss, forward_loss))
    }

    /// One joint optimizer step on the batch-mean combined loss. Returns
    /// the pre-step losses. On any non-finite loss or gradient the
    /// parameters are left untouched.
    pub fn update(&mut self, batch: &[Transition], learning_rate: f64) -> Result<IcmLoss, WorldModelError> {
        let (mut grads, losses) = self.compute_gradients(batch)?;
        if !losses.combined.is_finite() {
            return Err(WorldModelError::NonFiniteLoss {
                inverse: losses.inverse_loss,
                forward: losses.forward_loss,
            });
        }
        clip_global_norm(&mut grads, nn::GRAD_CLIP_NORM);
        optimizer_step(&mut self.params, &grads, learning_rate)?;
        Ok(losses)
    }
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(vec![a.numel() + b.numel()], data)
}

fn forward_input(x_t: &Tensor, action: AgentAction) -> Tensor {
    let one_hot = action.one_hot();
    let mut data = Vec::with_capacity(FEATURE_DIM + one_hot.len());
    data.extend_from_slice(x_t.data());
    data.extend_from_slice(&one_hot);
    Tensor::new(vec![data.len()], data)
}

/// Half mean squared error over the feature dimensions, in f64.
fn forward_error(predicted: &Tensor, target: &Tensor) -> f64 {
    let sum: f64 = predicted
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &x)| {
            let d = (p - x) as f64;
            d * d
        })
        .sum();
    0.5 * sum / predicted.numel() as f64
}

fn nll(p: f32) -> f64 {
    -(p as f64).max(PROB_FLOOR).ln()
}

/// Gradient of `scale * (-ln p[k])` with respect to the probability
/// vector.
fn nll_prob_grad(probs: &Tensor, k: usize, scale: f64) -> Tensor {
    let mut g = vec![0.0f32; probs.numel()];
    let p = (probs.data()[k] as f64).max(PROB_FLOOR);
    g[k] = (-scale / p) as f32;
    Tensor::new(vec![probs.numel()], g)
}
