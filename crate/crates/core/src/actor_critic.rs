//! The policy: observations in, a factored categorical action
//! distribution and a state-value estimate out.

use rand::Rng;
use rayon::prelude::*;

use crate::env::action::AgentAction;
use crate::env::ObservationImage;
use crate::networks::{build_actor_critic, ActorCriticNet, EncoderSize, FEATURE_DIM};
use crate::nn::{backward, forward, infer, NnError, ParamGrads, ParameterSet, Tape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("degenerate probabilities: {0:?}")]
    DegenerateProbabilities(Vec<f32>),
    #[error("action index out of range: ({0}, {1})")]
    ActionOutOfRange(usize, usize),
}

/// One policy evaluation: two normalized 3-way distributions and the
/// value estimate.
#[derive(Clone, Debug)]
pub struct PolicyOutput {
    pub translation_probs: [f32; 3],
    pub rotation_probs: [f32; 3],
    pub value: f64,
}

/// An action drawn from a [`PolicyOutput`] along with its statistics.
/// `log_prob` sums the two heads' log probabilities; `entropy` sums
/// their entropies.
#[derive(Clone, Copy, Debug)]
pub struct SampledAction {
    pub action: AgentAction,
    pub log_prob: f64,
    pub entropy: f64,
}

pub struct ActorCritic {
    pub net: ActorCriticNet,
    pub params: ParameterSet,
}

/// Activation record of one full actor forward pass, consumed by the
/// PPO update when pushing head gradients back to the encoder.
pub struct ActorTapes {
    pub output: PolicyOutput,
    enc: Tape,
    trunk: Tape,
    head_t: Tape,
    head_r: Tape,
    head_v: Tape,
}

impl ActorCritic {
    pub fn new<R: Rng>(encoder: EncoderSize, resolution: usize, rng: &mut R) -> Result<Self, NnError> {
        let net = build_actor_critic("actor", encoder, resolution)?;
        let mut params = ParameterSet::new();
        net.init_params(&mut params, rng);
        Ok(Self { net, params })
    }

    /// Evaluate the policy on one observation (no gradient recording).
    pub fn policy_forward(&self, obs: &ObservationImage) -> Result<PolicyOutput, NnError> {
        let feat = infer(&self.net.encoder.stack, &self.params, &obs.to_tensor())?;
        let h = infer(&self.net.trunk, &self.params, &feat)?;
        let p_t = infer(&self.net.head_translation, &self.params, &h)?;
        let p_r = infer(&self.net.head_rotation, &self.params, &h)?;
        let v = infer(&self.net.head_value, &self.params, &h)?;
        Ok(PolicyOutput {
            translation_probs: [p_t.data()[0], p_t.data()[1], p_t.data()[2]],
            rotation_probs: [p_r.data()[0], p_r.data()[1], p_r.data()[2]],
            value: v.data()[0] as f64,
        })
    }

    /// Forward pass recording tapes for a later [`Self::backprop`].
    pub fn forward_with_tapes(&self, obs: &ObservationImage) -> Result<ActorTapes, NnError> {
        let (feat, enc) = forward(&self.net.encoder.stack, &self.params, &obs.to_tensor())?;
        let (h, trunk) = forward(&self.net.trunk, &self.params, &feat)?;
        let (p_t, head_t) = forward(&self.net.head_translation, &self.params, &h)?;
        let (p_r, head_r) = forward(&self.net.head_rotation, &self.params, &h)?;
        let (v, head_v) = forward(&self.net.head_value, &self.params, &h)?;
        Ok(ActorTapes {
            output: PolicyOutput {
                translation_probs: [p_t.data()[0], p_t.data()[1], p_t.data()[2]],
                rotation_probs: [p_r.data()[0], p_r.data()[1], p_r.data()[2]],
                value: v.data()[0] as f64,
            },
            enc,
            trunk,
            head_t,
            head_r,
            head_v,
        })
    }

    /// Push gradients at the three heads back through the trunk and
    /// encoder, accumulating into `grads`.
    pub fn backprop(
        &self,
        mut tapes: ActorTapes,
        g_translation: &[f32; 3],
        g_rotation: &[f32; 3],
        g_value: f32,
        grads: &mut ParamGrads,
    ) -> Result<(), NnError> {
        let params = &self.params;
        let (t_grads, g_h_t) = backward(
            &mut tapes.head_t,
            &self.net.head_translation,
            params,
            &Tensor::new(vec![3], g_translation.to_vec()),
        )?;
        let (r_grads, g_h_r) = backward(
            &mut tapes.head_r,
            &self.net.head_rotation,
            params,
            &Tensor::new(vec![3], g_rotation.to_vec()),
        )?;
        let (v_grads, g_h_v) =
            backward(&mut tapes.head_v, &self.net.head_value, params, &Tensor::new(vec![1], vec![g_value]))?;
        grads.merge_scaled(&t_grads, 1.0);
        grads.merge_scaled(&r_grads, 1.0);
        grads.merge_scaled(&v_grads, 1.0);

        let hidden = self.net.trunk.output_shape[0];
        let mut g_h = vec![0.0f32; hidden];
        for i in 0..hidden {
            g_h[i] = g_h_t.data()[i] + g_h_r.data()[i] + g_h_v.data()[i];
        }
        let (trunk_grads, g_feat) =
            backward(&mut tapes.trunk, &self.net.trunk, params, &Tensor::new(vec![hidden], g_h))?;
        grads.merge_scaled(&trunk_grads, 1.0);
        debug_assert_eq!(g_feat.numel(), FEATURE_DIM);
        let (enc_grads, _) = backward(&mut tapes.enc, &self.net.encoder.stack, params, &g_feat)?;
        grads.merge_scaled(&enc_grads, 1.0);
        Ok(())
    }

    /// Draw one action from the factored distribution using the caller's
    /// random stream.
    pub fn sample_action<R: Rng>(output: &PolicyOutput, rng: &mut R) -> Result<SampledAction, PolicyError> {
        let t = draw(&output.translation_probs, rng)?;
        let r = draw(&output.rotation_probs, rng)?;
        let action = AgentAction::from_indices(t, r).expect("indices in range");
        Ok(SampledAction {
            action,
            log_prob: action_log_prob(output, action),
            entropy: head_entropy(&output.translation_probs) + head_entropy(&output.rotation_probs),
        })
    }

    /// Log-probabilities, entropies, and values for a batch, exactly as
    /// [`Self::sample_action`] would have reported them for the same
    /// observation/action pairs.
    #[allow(clippy::type_complexity)]
    pub fn evaluate_actions(
        &self,
        observations: &[&ObservationImage],
        actions: &[AgentAction],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), PolicyError> {
        if observations.len() != actions.len() {
            return Err(PolicyError::Nn(NnError::Invalid(format!(
                "batch mismatch: {} observations vs {} actions",
                observations.len(),
                actions.len()
            ))));
        }
        let results: Result<Vec<(f64, f64, f64)>, NnError> = observations
            .par_iter()
            .zip(actions.par_iter())
            .map(|(obs, &action)| {
                let out = self.policy_forward(obs)?;
                let lp = action_log_prob(&out, action);
                let ent = head_entropy(&out.translation_probs) + head_entropy(&out.rotation_probs);
                Ok((lp, ent, out.value))
            })
            .collect();
        let results = results?;
        let mut log_probs = Vec::with_capacity(results.len());
        let mut entropies = Vec::with_capacity(results.len());
        let mut values = Vec::with_capacity(results.len());
        for (lp, ent, v) in results {
            log_probs.push(lp);
            entropies.push(ent);
            values.push(v);
        }
        Ok((log_probs, entropies, values))
    }
}

/// ln p(translation) + ln p(rotation) for a concrete action.
pub fn action_log_prob(output: &PolicyOutput, action: AgentAction) -> f64 {
    let (t, r) = action.indices();
    ln_prob(output.translation_probs[t]) + ln_prob(output.rotation_probs[r])
}

fn ln_prob(p: f32) -> f64 {
    (p as f64).max(1e-45).ln()
}

/// Entropy of one head in nats; lies in [0, ln 3].
pub fn head_entropy(probs: &[f32; 3]) -> f64 {
    probs
        .iter()
        .map(|&p| {
            let p = p as f64;
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

fn draw<R: Rng>(probs: &[f32; 3], rng: &mut R) -> Result<usize, PolicyError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(PolicyError::DegenerateProbabilities(probs.to_vec()));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0f64;
    for (i, &p) in probs.iter().enumerate() {
        acc += p as f64;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::action::{Rotation, Translation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_obs(seed: u64) -> ObservationImage {
        let mut r = rng(seed);
        let pixels: Vec<u8> = (0..3 * 64 * 64).map(|_| r.random()).collect();
        ObservationImage { resolution: 64, pixels }
    }

    fn actor(seed: u64) -> ActorCritic {
        let mut r = rng(seed);
        ActorCritic::new(EncoderSize::Small, 64, &mut r).unwrap()
    }

    fn uniform_output() -> PolicyOutput {
        PolicyOutput {
            translation_probs: [1.0 / 3.0; 3],
            rotation_probs: [1.0 / 3.0; 3],
            value: 0.0,
        }
    }

    #[test]
    fn zeroed_heads_give_uniform_distributions() {
        let mut ac = actor(1);
        for name in ["actor.t.0.w", "actor.r.0.w", "actor.t.0.b", "actor.r.0.b"] {
            let t = ac.params.get_mut(name).unwrap();
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let out = ac.policy_forward(&random_obs(2)).unwrap();
        for p in out.translation_probs.iter().chain(&out.rotation_probs) {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn policy_forward_is_deterministic_and_normalized() {
        let ac = actor(3);
        let obs = random_obs(4);
        let a = ac.policy_forward(&obs).unwrap();
        let b = ac.policy_forward(&obs).unwrap();
        assert_eq!(a.translation_probs, b.translation_probs);
        assert_eq!(a.rotation_probs, b.rotation_probs);
        assert_eq!(a.value, b.value);
        for head in [&a.translation_probs, &a.rotation_probs] {
            let sum: f64 = head.iter().map(|&p| p as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn heads_match_straight_line_oracle_on_fixed_weights() {
        let ac = actor(5);
        let obs = random_obs(6);
        let out = ac.policy_forward(&obs).unwrap();

        // oracle: naive encoder, then naive dense trunk and heads in f64
        let feat = crate::test_oracles::naive_small_encoder(&ac.params, "actor.enc", &obs.to_tensor());
        let get = |name: &str| ac.params.get(name).unwrap();
        let mut h1 = crate::test_oracles::dense(&feat, get("actor.trunk.0.w").data(), get("actor.trunk.0.b").data(), 128);
        for v in h1.iter_mut() {
            if *v < 0.0 {
                *v = v.exp() - 1.0;
            }
        }
        let mut h2 = crate::test_oracles::dense(&h1, get("actor.trunk.2.w").data(), get("actor.trunk.2.b").data(), 128);
        for v in h2.iter_mut() {
            if *v < 0.0 {
                *v = v.exp() - 1.0;
            }
        }
        let logits_t = crate::test_oracles::dense(&h2, get("actor.t.0.w").data(), get("actor.t.0.b").data(), 3);
        let p_t = crate::test_oracles::naive_softmax(&logits_t);
        let value = crate::test_oracles::dense(&h2, get("actor.v.0.w").data(), get("actor.v.0.b").data(), 1)[0];

        for i in 0..3 {
            assert!(
                (out.translation_probs[i] as f64 - p_t[i]).abs() < 1e-4,
                "head {i}: {} vs {}",
                out.translation_probs[i],
                p_t[i]
            );
        }
        assert!((out.value - value).abs() < 1e-3, "{} vs {value}", out.value);
    }

    #[test]
    fn certain_head_always_chooses_that_sub_action() {
        let out = PolicyOutput {
            translation_probs: [1.0, 0.0, 0.0],
            rotation_probs: [0.0, 1.0, 0.0],
            value: 0.0,
        };
        let mut r = rng(7);
        for _ in 0..100 {
            let s = ActorCritic::sample_action(&out, &mut r).unwrap();
            assert_eq!(s.action.translation, Translation::Forward);
            assert_eq!(s.action.rotation, Rotation::Counterclockwise);
            assert_eq!(s.log_prob, 0.0, "certain action has zero log-prob");
        }
    }

    #[test]
    fn uniform_heads_have_analytic_log_prob_and_entropy() {
        let out = uniform_output();
        let mut r = rng(8);
        let s = ActorCritic::sample_action(&out, &mut r).unwrap();
        let two_ln3 = 2.0 * 3.0f64.ln();
        assert!((s.log_prob + two_ln3).abs() < 1e-6, "{}", s.log_prob);
        assert!((s.entropy - two_ln3).abs() < 1e-6, "{}", s.entropy);
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        let out = PolicyOutput {
            translation_probs: [0.5, 0.3, 0.2],
            rotation_probs: [1.0 / 3.0; 3],
            value: 0.0,
        };
        let mut r = rng(9);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = ActorCritic::sample_action(&out, &mut r).unwrap();
            counts[s.action.indices().0] += 1;
        }
        for (i, &p) in [0.5f64, 0.3, 0.2].iter().enumerate() {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let dev = (counts[i] as f64 - n as f64 * p).abs();
            assert!(dev < 3.0 * sigma, "head {i}: {} vs expected {} (3 sigma {})", counts[i], n as f64 * p, 3.0 * sigma);
        }
    }

    #[test]
    fn nan_probabilities_are_rejected() {
        let out = PolicyOutput {
            translation_probs: [f32::NAN, 0.5, 0.5],
            rotation_probs: [1.0 / 3.0; 3],
            value: 0.0,
        };
        let mut r = rng(10);
        assert!(matches!(
            ActorCritic::sample_action(&out, &mut r),
            Err(PolicyError::DegenerateProbabilities(_))
        ));
    }

    #[test]
    fn evaluate_agrees_with_sample_and_with_a_per_item_loop() {
        let ac = actor(11);
        let observations: Vec<ObservationImage> = (0..6).map(|i| random_obs(100 + i)).collect();
        let mut r = rng(12);
        let mut actions = Vec::new();
        let mut sampled_lps = Vec::new();
        for obs in &observations {
            let out = ac.policy_forward(obs).unwrap();
            let s = ActorCritic::sample_action(&out, &mut r).unwrap();
            actions.push(s.action);
            sampled_lps.push(s.log_prob);
        }
        let refs: Vec<&ObservationImage> = observations.iter().collect();
        let (lps, ents, values) = ac.evaluate_actions(&refs, &actions).unwrap();
        for (a, b) in lps.iter().zip(&sampled_lps) {
            assert!((a - b).abs() < 1e-6);
        }
        // per-item loop oracle
        for i in 0..observations.len() {
            let out = ac.policy_forward(&observations[i]).unwrap();
            let lp = action_log_prob(&out, actions[i]);
            let ent = head_entropy(&out.translation_probs) + head_entropy(&out.rotation_probs);
            assert!((lps[i] - lp).abs() < 1e-12);
            assert!((ents[i] - ent).abs() < 1e-12);
            assert!((values[i] - out.value).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_bounds_and_probability_identity_hold() {
        let mut r = rng(13);
        for _ in 0..200 {
            // random distribution on the simplex
            let raw: [f64; 3] = [r.random::<f64>() + 1e-6, r.random::<f64>() + 1e-6, r.random::<f64>() + 1e-6];
            let sum: f64 = raw.iter().sum();
            let probs = [(raw[0] / sum) as f32, (raw[1] / sum) as f32, (raw[2] / sum) as f32];
            let out = PolicyOutput { translation_probs: probs, rotation_probs: probs, value: 0.0 };
            let s = ActorCritic::sample_action(&out, &mut r).unwrap();
            assert!(s.entropy >= 0.0 && s.entropy <= 2.0 * 3.0f64.ln() + 1e-9);
            let (t, rr) = s.action.indices();
            let product = probs[t] as f64 * probs[rr] as f64;
            assert!((s.log_prob.exp() - product).abs() < 1e-6);
            assert!(s.log_prob <= 0.0);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_action_sequence() {
        let out = PolicyOutput {
            translation_probs: [0.4, 0.4, 0.2],
            rotation_probs: [0.2, 0.3, 0.5],
            value: 0.0,
        };
        let seq = |seed| {
            let mut r = rng(seed);
            (0..50)
                .map(|_| ActorCritic::sample_action(&out, &mut r).unwrap().action)
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(21), seq(21));
        assert_ne!(seq(21), seq(22));
    }
}
