//! Per-agent on-policy trainer: rollout buffer, reward composition,
//! generalized advantage estimation, the clipped-surrogate policy
//! update with entropy bonus, and the synchronized multi-agent
//! training loop that also drives world-model updates.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor_critic::{action_log_prob, head_entropy, ActorCritic, PolicyError};
use crate::env::action::AgentAction;
use crate::env::{EnvError, ObservationImage, WorldState};
use crate::networks::EncoderSize;
use crate::nn::{clip_global_norm, linear_lr, optimizer_step, NnError, ParamGrads, GRAD_CLIP_NORM};
use crate::world_model::{IcmLoss, Transition, WorldModel, WorldModelError};

const GRAD_CHUNK: usize = 16;
const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    WorldModel(#[from] WorldModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("rollout buffer is {got}/{capacity} full; updates need a full buffer")]
    BufferNotFull { got: usize, capacity: usize },
    #[error("rollout buffer already holds {capacity} transitions")]
    BufferOverflow { capacity: usize },
    #[error("empty sequence passed to advantage estimation")]
    EmptySequence,
    #[error("non-finite {what} during update; parameters restored")]
    NonFinite { what: &'static str },
    #[error("training needs at least one agent")]
    NoAgents,
    #[error("agent count {agents} does not match environment ({env})")]
    AgentCountMismatch { agents: usize, env: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_beta: f64,
    pub clip_epsilon: f64,
    pub epochs_per_update: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub learning_rate: f64,
    pub value_loss_coef: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            entropy_beta: 0.001,
            clip_epsilon: 0.2,
            epochs_per_update: 3,
            batch_size: 256,
            buffer_size: 2560,
            learning_rate: 0.001,
            value_loss_coef: 0.5,
            normalize_advantages: true,
        }
    }
}

/// Total reward of one transition: metabolic cost plus curiosity.
pub fn compose_reward(metabolic: f64, curiosity: f64) -> f64 {
    debug_assert!(metabolic <= 0.0, "metabolic cost must be non-positive");
    debug_assert!(curiosity >= 0.0, "curiosity reward must be non-negative");
    metabolic + curiosity
}

/// Generalized advantage estimation.
///
/// delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
/// A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
///
/// `bootstrap_value` stands in for V at the step past the end.
/// Returns (advantages, returns) with returns = A + V.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if n == 0 {
        return Err(PpoError::EmptySequence);
    }
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns: Vec<f64> = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// The clipped PPO objective for one sample:
/// `min(ratio * advantage, clamp(ratio, 1 - eps, 1 + eps) * advantage)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// One stored transition. Observations are shared behind `Arc` because
/// consecutive records reference the same frame.
#[derive(Clone)]
pub struct TransitionRecord {
    pub obs: Arc<ObservationImage>,
    pub next_obs: Arc<ObservationImage>,
    pub action: AgentAction,
    pub log_prob: f64,
    pub value: f64,
    pub r_m: f64,
    pub r_c: f64,
    pub done: bool,
}

impl TransitionRecord {
    pub fn as_transition(&self) -> Transition<'_> {
        Transition { obs: &self.obs, action: self.action, next_obs: &self.next_obs }
    }
}

pub struct RolloutBuffer {
    entries: Vec<TransitionRecord>,
    capacity: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { entries: Vec::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, record: TransitionRecord) -> Result<(), PpoError> {
        if self.entries.len() >= self.capacity {
            return Err(PpoError::BufferOverflow { capacity: self.capacity });
        }
        self.entries.push(record);
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[TransitionRecord] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Aggregate losses of one [`ppo_update`] call, averaged over every
/// processed sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct PpoReport {
    /// Negative mean clipped surrogate (the quantity being minimized).
    pub policy_loss: f64,
    /// Mean squared error of the value head against the returns.
    pub value_loss: f64,
    /// Mean total entropy of the two heads.
    pub entropy: f64,
    /// Fraction of samples whose ratio left the clip interval.
    pub clip_fraction: f64,
}

struct MinibatchStats {
    grads: ParamGrads,
    surrogate_sum: f64,
    value_err_sum: f64,
    entropy_sum: f64,
    clipped: usize,
}

/// One PPO update over a full buffer: for each epoch, shuffled
/// minibatches maximize the clipped surrogate plus the entropy bonus
/// minus the value loss. On any non-finite quantity the parameters are
/// rolled back and an error returned.
pub fn ppo_update<R: Rng>(
    buffer: &RolloutBuffer,
    actor: &mut ActorCritic,
    config: &PpoConfig,
    learning_rate: f64,
    rng: &mut R,
) -> Result<PpoReport, PpoError> {
    if !buffer.is_full() {
        return Err(PpoError::BufferNotFull { got: buffer.len(), capacity: buffer.capacity() });
    }
    let entries = buffer.entries();
    let n = entries.len();

    let rewards: Vec<f64> = entries.iter().map(|e| compose_reward(e.r_m, e.r_c)).collect();
    let values: Vec<f64> = entries.iter().map(|e| e.value).collect();
    let dones: Vec<bool> = entries.iter().map(|e| e.done).collect();
    let last = &entries[n - 1];
    let bootstrap = if last.done { 0.0 } else { actor.policy_forward(&last.next_obs)?.value };
    let (advantages, returns) = compute_gae(&rewards, &values, &dones, bootstrap, config.gamma, config.lambda)?;

    let snapshot = actor.params.clone();
    let mut indices: Vec<usize> = (0..n).collect();

    let mut surrogate_sum = 0.0;
    let mut value_err_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut clipped = 0usize;
    let mut samples = 0usize;

    let outcome = (|| -> Result<(), PpoError> {
        for _epoch in 0..config.epochs_per_update {
            indices.shuffle(rng);
            for minibatch in indices.chunks(config.batch_size) {
                let stats = minibatch_step(actor, entries, &advantages, &returns, minibatch, config)?;
                if !(stats.surrogate_sum.is_finite() && stats.value_err_sum.is_finite() && stats.entropy_sum.is_finite()) {
                    return Err(PpoError::NonFinite { what: "loss" });
                }
                let mut grads = stats.grads;
                clip_global_norm(&mut grads, GRAD_CLIP_NORM);
                optimizer_step(&mut actor.params, &grads, learning_rate)
                    .map_err(|_| PpoError::NonFinite { what: "gradient" })?;
                surrogate_sum += stats.surrogate_sum;
                value_err_sum += stats.value_err_sum;
                entropy_sum += stats.entropy_sum;
                clipped += stats.clipped;
                samples += minibatch.len();
            }
        }
        Ok(())
    })();

    if let Err(err) = outcome {
        actor.params = snapshot;
        return Err(err);
    }

    let inv = 1.0 / samples.max(1) as f64;
    Ok(PpoReport {
        policy_loss: -surrogate_sum * inv,
        value_loss: value_err_sum * inv,
        entropy: entropy_sum * inv,
        clip_fraction: clipped as f64 * inv,
    })
}

fn minibatch_step(
    actor: &ActorCritic,
    entries: &[TransitionRecord],
    advantages: &[f64],
    returns: &[f64],
    minibatch: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchStats, PpoError> {
    let m = minibatch.len() as f64;
    let adv: Vec<f64> = if config.normalize_advantages {
        let mean = minibatch.iter().map(|&i| advantages[i]).sum::<f64>() / m;
        let var = minibatch.iter().map(|&i| (advantages[i] - mean).powi(2)).sum::<f64>() / m;
        let sd = var.sqrt() + 1e-8;
        minibatch.iter().map(|&i| (advantages[i] - mean) / sd).collect()
    } else {
        minibatch.iter().map(|&i| advantages[i]).collect()
    };

    let work: Vec<(usize, usize)> = minibatch.iter().enumerate().map(|(k, &i)| (k, i)).collect();
    let chunk_results: Result<Vec<MinibatchStats>, PpoError> = work
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut stats = MinibatchStats {
                grads: ParamGrads::new(),
                surrogate_sum: 0.0,
                value_err_sum: 0.0,
                entropy_sum: 0.0,
                clipped: 0,
            };
            for &(k, i) in chunk {
                sample_gradients(actor, &entries[i], adv[k], returns[i], m, config, &mut stats)?;
            }
            Ok(stats)
        })
        .collect();

    let mut merged = MinibatchStats {
        grads: ParamGrads::new(),
        surrogate_sum: 0.0,
        value_err_sum: 0.0,
        entropy_sum: 0.0,
        clipped: 0,
    };
    for stats in chunk_results? {
        merged.grads.merge_scaled(&stats.grads, 1.0);
        merged.surrogate_sum += stats.surrogate_sum;
        merged.value_err_sum += stats.value_err_sum;
        merged.entropy_sum += stats.entropy_sum;
        merged.clipped += stats.clipped;
    }
    Ok(merged)
}

fn sample_gradients(
    actor: &ActorCritic,
    entry: &TransitionRecord,
    advantage: f64,
    sample_return: f64,
    minibatch_size: f64,
    config: &PpoConfig,
    stats: &mut MinibatchStats,
) -> Result<(), PpoError> {
    let tapes = actor.forward_with_tapes(&entry.obs)?;
    let out = tapes.output.clone();
    let log_prob = action_log_prob(&out, entry.action);
    let ratio = (log_prob - entry.log_prob).exp();
    let entropy = head_entropy(&out.translation_probs) + head_entropy(&out.rotation_probs);

    stats.surrogate_sum += clipped_surrogate(ratio, advantage, config.clip_epsilon);
    let value_err = out.value - sample_return;
    stats.value_err_sum += value_err * value_err;
    stats.entropy_sum += entropy;
    if (ratio - 1.0).abs() > config.clip_epsilon {
        stats.clipped += 1;
    }

    // minimize L = -surrogate - beta * entropy + c_v * (v - ret)^2, averaged
    let inv_m = 1.0 / minibatch_size;
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * advantage;
    let d_surr_d_ratio = if unclipped <= clipped { advantage } else { 0.0 };
    let d_loss_d_logprob = -d_surr_d_ratio * ratio * inv_m;

    let (ti, ri) = entry.action.indices();
    let g_t = head_prob_grad(&out.translation_probs, ti, d_loss_d_logprob, config.entropy_beta * inv_m);
    let g_r = head_prob_grad(&out.rotation_probs, ri, d_loss_d_logprob, config.entropy_beta * inv_m);
    let g_v = (2.0 * config.value_loss_coef * value_err * inv_m) as f32;

    actor.backprop(tapes, &g_t, &g_r, g_v, &mut stats.grads)?;
    Ok(())
}

/// Gradient of the per-sample loss with respect to one head's
/// probability vector: the ratio term touches the selected entry, the
/// entropy bonus touches all of them.
fn head_prob_grad(probs: &[f32; 3], selected: usize, d_loss_d_logprob: f64, beta_scaled: f64) -> [f32; 3] {
    let mut g = [0.0f32; 3];
    for (j, gj) in g.iter_mut().enumerate() {
        let p = (probs[j] as f64).max(PROB_FLOOR);
        let mut v = beta_scaled * (p.ln() + 1.0); // d(-beta H)/dp_j
        if j == selected {
            v += d_loss_d_logprob / p;
        }
        *gj = v as f32;
    }
    g
}

// ── Training loop ───────────────────────────────────────────────────

/// One learner: its own actor, world model, buffer, and random stream.
pub struct Agent {
    pub id: usize,
    pub actor: ActorCritic,
    pub world_model: WorldModel,
    pub buffer: RolloutBuffer,
    pub rng: ChaCha8Rng,
    /// Environment steps taken so far (drives the LR schedule).
    pub steps: u64,
    feature_cache: Option<(u64, crate::nn::Tensor)>,
}

impl Agent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        actor_encoder: EncoderSize,
        wm_encoder: EncoderSize,
        resolution: usize,
        alpha: f64,
        eta: f64,
        buffer_size: usize,
        seed: u64,
    ) -> Result<Self, PpoError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = ActorCritic::new(actor_encoder, resolution, &mut rng)?;
        let world_model = WorldModel::new(wm_encoder, resolution, alpha, eta, &mut rng)
            .map_err(PpoError::WorldModel)?;
        Ok(Self {
            id,
            actor,
            world_model,
            buffer: RolloutBuffer::new(buffer_size),
            rng,
            steps: 0,
            feature_cache: None,
        })
    }

    /// Curiosity reward for one transition, reusing the previous step's
    /// next-feature when the world model has not stepped since.
    pub fn intrinsic_reward_cached(
        &mut self,
        obs: &ObservationImage,
        action: AgentAction,
        next_obs: &ObservationImage,
    ) -> Result<f64, PpoError> {
        let version = self.world_model.params.version();
        let x_t = match self.feature_cache.take() {
            Some((v, feat)) if v == version => feat,
            _ => self.world_model.encode(obs)?,
        };
        let x_t1 = self.world_model.encode(next_obs)?;
        let reward = self.world_model.intrinsic_reward_from_features(&x_t, action, &x_t1)?;
        self.feature_cache = Some((version, x_t1));
        Ok(reward)
    }

    pub fn clear_feature_cache(&mut self) {
        self.feature_cache = None;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepLogRow {
    pub episode: usize,
    pub step: usize,
    pub agent_id: usize,
    pub r_m: f64,
    pub r_c: f64,
    pub action: AgentAction,
}

#[derive(Clone, Copy, Debug)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub mean_r_m: f64,
    pub mean_r_c: f64,
    /// Nearest neighbor index over the episode; absent for single agents.
    pub nni: Option<f64>,
    pub updates_triggered: usize,
}

#[derive(Default)]
pub struct TrainingLog {
    pub steps: Vec<StepLogRow>,
    pub episodes: Vec<EpisodeSummary>,
}

pub struct TrainOptions {
    pub episodes: usize,
    pub episode_length: usize,
    pub config: PpoConfig,
    /// Denominator of the linear LR schedule; defaults to
    /// `episodes * episode_length` when zero.
    pub total_training_steps: u64,
    /// Record one log row per agent per step (disable for huge runs).
    pub record_steps: bool,
    /// Added to episode numbers in the logs (used by chunked training).
    pub episode_offset: usize,
}

/// Train a group of agents sharing one environment.
///
/// Every episode re-spawns all agents at random poses. Within a step all
/// agents act, the world advances once, rewards are composed, and each
/// agent updates its own networks whenever its buffer fills.
pub fn train(
    agents: &mut [Agent],
    env: &mut WorldState,
    env_rng: &mut ChaCha8Rng,
    opts: &TrainOptions,
) -> Result<TrainingLog, PpoError> {
    if agents.is_empty() {
        return Err(PpoError::NoAgents);
    }
    if agents.len() != env.agent_count() {
        return Err(PpoError::AgentCountMismatch { agents: agents.len(), env: env.agent_count() });
    }
    let total_steps = if opts.total_training_steps > 0 {
        opts.total_training_steps
    } else {
        (opts.episodes * opts.episode_length) as u64
    };
    let resolution = env.resolution();
    let mut log = TrainingLog::default();

    for episode_index in 0..opts.episodes {
        let episode = opts.episode_offset + episode_index;
        env.spawn_random(env_rng)?;
        for agent in agents.iter_mut() {
            agent.clear_feature_cache();
        }
        let mut obs: Vec<Arc<ObservationImage>> = (0..agents.len())
            .map(|i| env.render(i, resolution).map(Arc::new))
            .collect::<Result<_, _>>()?;

        let mut positions: Vec<Vec<(f64, f64)>> = Vec::with_capacity(opts.episode_length);
        let mut r_m_sum = 0.0;
        let mut r_c_sum = 0.0;
        let mut updates = 0usize;

        for step in 0..opts.episode_length {
            let choices: Result<Vec<(AgentAction, f64, f64)>, PpoError> = agents
                .par_iter_mut()
                .map(|agent| {
                    let out = agent.actor.policy_forward(&obs[agent.id])?;
                    let sampled = ActorCritic::sample_action(&out, &mut agent.rng)?;
                    Ok((sampled.action, sampled.log_prob, out.value))
                })
                .collect();
            let choices = choices?;
            let actions: Vec<AgentAction> = choices.iter().map(|c| c.0).collect();

            let step_out = env.step(&actions, env_rng)?;
            let next_obs: Vec<Arc<ObservationImage>> =
                step_out.observations.into_iter().map(Arc::new).collect();
            let done = step + 1 == opts.episode_length;

            let per_agent: Result<Vec<(StepLogRow, usize)>, PpoError> = agents
                .par_iter_mut()
                .map(|agent| {
                    let i = agent.id;
                    let r_c = agent.intrinsic_reward_cached(&obs[i], actions[i], &next_obs[i])?;
                    let r_m = step_out.metabolic[i];
                    agent.buffer.push(TransitionRecord {
                        obs: Arc::clone(&obs[i]),
                        next_obs: Arc::clone(&next_obs[i]),
                        action: actions[i],
                        log_prob: choices[i].1,
                        value: choices[i].2,
                        r_m,
                        r_c,
                        done,
                    })?;
                    agent.steps += 1;

                    let mut triggered = 0;
                    if agent.buffer.is_full() {
                        let lr = linear_lr(agent.steps, total_steps, opts.config.learning_rate);
                        ppo_update(&agent.buffer, &mut agent.actor, &opts.config, lr, &mut agent.rng)?;
                        world_model_epochs(
                            &mut agent.world_model,
                            &agent.buffer,
                            &opts.config,
                            lr,
                            &mut agent.rng,
                        )?;
                        agent.buffer.clear();
                        triggered = 1;
                    }
                    let row = StepLogRow { episode, step, agent_id: i, r_m, r_c, action: actions[i] };
                    Ok((row, triggered))
                })
                .collect();

            for (row, triggered) in per_agent? {
                r_m_sum += row.r_m;
                r_c_sum += row.r_c;
                updates += triggered;
                if opts.record_steps {
                    log.steps.push(row);
                }
            }
            positions.push(env.agents.iter().map(|a| (a.position[0], a.position[1])).collect());
            obs = next_obs;
        }

        let nni = if agents.len() >= 2 {
            let episode_log = crate::analysis::EpisodeLog {
                area: env.spec.kind.floor_area(),
                positions,
            };
            crate::analysis::nearest_neighbor_index(&episode_log).ok().map(|r| r.nni)
        } else {
            None
        };
        let denom = (agents.len() * opts.episode_length) as f64;
        log.episodes.push(EpisodeSummary {
            episode,
            mean_r_m: r_m_sum / denom,
            mean_r_c: r_c_sum / denom,
            nni,
            updates_triggered: updates,
        });
    }
    Ok(log)
}

/// World-model training on the same cadence and buffer as PPO: the
/// configured number of epochs of shuffled minibatches, one joint
/// optimizer step each.
pub fn world_model_epochs<R: Rng>(
    world_model: &mut WorldModel,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    learning_rate: f64,
    rng: &mut R,
) -> Result<IcmLoss, PpoError> {
    let entries = buffer.entries();
    let mut indices: Vec<usize> = (0..entries.len()).collect();
    let mut last = IcmLoss::new(world_model.alpha, 0.0, 0.0);
    for _epoch in 0..config.epochs_per_update {
        indices.shuffle(rng);
        for minibatch in indices.chunks(config.batch_size) {
            let batch: Vec<Transition> = minibatch.iter().map(|&i| entries[i].as_transition()).collect();
            last = world_model.update(&batch, learning_rate)?;
        }
    }
    Ok(last)
}
