//! Experiment execution: training runs (group, alone, and imprinting),
//! frozen-parameter test phases including the lighting grid and
//! two-alternative imprint trials, and the random-action baseline.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor_critic::ActorCritic;
use crate::checkpoint::Checkpoint;
use crate::env::{AgentAction, ImprintColor, ImprintObject, ImprintShape, LightingSpec, WorldSpec, WorldState};
use crate::ppo::{train, Agent, EpisodeSummary, StepLogRow, TrainOptions};

use super::config::{hex_digest, lighting_grid, sweep_conditions, ExperimentConfig, ExperimentId, Rearing};
use super::logio::{self, RecordedEpisodes};
use super::HarnessError;

pub const RUN_FORMAT: &str = "CURIOFLOCK-RUN-1";

/// Positions of the two test objects in the imprinting chamber.
pub const IMPRINT_TEST_OFFSET: f64 = 9.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
    pub checkpoints: Vec<String>,
    /// (relative path, sha256) per log file.
    pub logs: Vec<(String, String)>,
}

impl RunRecord {
    /// Digest over everything reproducible (wall clock excluded).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.config_hash.as_bytes());
        hasher.update(self.seed.to_le_bytes());
        for c in &self.checkpoints {
            hasher.update(c.as_bytes());
        }
        for (path, hash) in &self.logs {
            hasher.update(path.as_bytes());
            hasher.update(hash.as_bytes());
        }
        hex_digest(hasher.finalize().as_slice())
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        std::fs::write(run_dir.join("run.json"), json)?;
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(run_dir.join("run.json"))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }
}

/// Stable per-purpose seed streams derived from the run seed.
fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut x = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn build_agents(cfg: &ExperimentConfig) -> Result<Vec<Agent>, HarnessError> {
    (0..cfg.n_agents)
        .map(|i| {
            Agent::new(
                i,
                cfg.actor_encoder,
                cfg.wm_encoder,
                cfg.resolution,
                cfg.alpha,
                cfg.eta,
                cfg.ppo.buffer_size,
                derive_seed(cfg.seed, 100 + i as u64),
            )
            .map_err(HarnessError::from)
        })
        .collect()
}

fn world_spec(cfg: &ExperimentConfig) -> WorldSpec {
    WorldSpec { kind: cfg.world, lighting: cfg.lighting, world_seed: cfg.world_seed }
}

fn build_world(cfg: &ExperimentConfig, n_agents: usize) -> Result<WorldState, HarnessError> {
    let mut world = WorldState::new(world_spec(cfg), n_agents, cfg.resolution)?;
    if let Some(imprint) = &cfg.imprint {
        world
            .objects
            .push(ImprintObject::random_walk(imprint.shape, imprint.color, [0.0, 0.0]));
    }
    Ok(world)
}

fn checkpoint_agent(agent: &Agent, path: &Path) -> Result<(), HarnessError> {
    Checkpoint::from_params(&[&agent.actor.params, &agent.world_model.params])
        .save(path)
        .map_err(HarnessError::from)
}

fn load_agent(cfg: &ExperimentConfig, id: usize, path: &Path) -> Result<Agent, HarnessError> {
    let mut agent = Agent::new(
        id,
        cfg.actor_encoder,
        cfg.wm_encoder,
        cfg.resolution,
        cfg.alpha,
        cfg.eta,
        cfg.ppo.buffer_size,
        derive_seed(cfg.seed, 500 + id as u64),
    )?;
    let ckpt = Checkpoint::load(path)?;
    ckpt.load_into(&mut agent.actor.params)?;
    ckpt.load_into(&mut agent.world_model.params)?;
    Ok(agent)
}

/// Train one cohort of agents in a shared world, writing logs in
/// chunks so intermediate checkpoints land on the configured cadence.
fn train_cohort(
    cfg: &ExperimentConfig,
    agents: &mut [Agent],
    env: &mut WorldState,
    env_rng: &mut ChaCha8Rng,
    run_dir: &Path,
    label: Option<&str>,
    checkpoints: &mut Vec<String>,
) -> Result<(Vec<StepLogRow>, Vec<EpisodeSummary>), HarnessError> {
    let total_steps = (cfg.train_episodes * cfg.train_episode_len) as u64;
    let chunk = if cfg.checkpoint_every == 0 { cfg.train_episodes } else { cfg.checkpoint_every };
    let mut steps = Vec::new();
    let mut episodes = Vec::new();
    let mut done = 0usize;
    while done < cfg.train_episodes {
        let this_chunk = chunk.min(cfg.train_episodes - done);
        let opts = TrainOptions {
            episodes: this_chunk,
            episode_length: cfg.train_episode_len,
            config: cfg.ppo.clone(),
            total_training_steps: total_steps,
            record_steps: cfg.record_steps,
            episode_offset: done,
        };
        let log = train(agents, env, env_rng, &opts)?;
        steps.extend(log.steps);
        episodes.extend(log.episodes);
        done += this_chunk;
        if done < cfg.train_episodes {
            for agent in agents.iter() {
                let name = match label {
                    Some(l) => format!("checkpoints/{l}_agent{}_ep{done}.ckpt", agent.id),
                    None => format!("checkpoints/agent{}_ep{done}.ckpt", agent.id),
                };
                checkpoint_agent(agent, &run_dir.join(&name))?;
                checkpoints.push(name);
            }
        }
    }
    for agent in agents.iter() {
        let name = match label {
            Some(l) => format!("checkpoints/{l}_agent{}.ckpt", agent.id),
            None => format!("checkpoints/agent{}.ckpt", agent.id),
        };
        checkpoint_agent(agent, &run_dir.join(&name))?;
        checkpoints.push(name);
    }
    Ok((steps, episodes))
}

/// Run the training phase of an experiment into `run_dir`.
///
/// Group rearing trains all agents in one shared world; alone rearing
/// gives each agent a private world with identical scenery. Imprinting
/// configurations train a single agent alongside the wandering object.
/// Only metabolic costs and intrinsic curiosity ever reach the reward.
pub fn run_training(config: &ExperimentConfig, run_dir: &Path) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let started = std::time::Instant::now();
    std::fs::create_dir_all(run_dir.join("logs"))?;
    std::fs::create_dir_all(run_dir.join("checkpoints"))?;
    std::fs::write(run_dir.join("config.toml"), config.to_toml()?)?;

    if config.experiment == ExperimentId::Exp4 {
        return run_sweep(config, run_dir, started);
    }

    let cfg = config.clone().scaled();
    let mut checkpoints = Vec::new();
    let mut logs: Vec<(String, String)> = Vec::new();

    match cfg.rearing {
        Rearing::Group => {
            let mut agents = build_agents(&cfg)?;
            let mut env = build_world(&cfg, cfg.n_agents)?;
            let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7));
            let (steps, episodes) =
                train_cohort(&cfg, &mut agents, &mut env, &mut env_rng, run_dir, None, &mut checkpoints)?;
            if cfg.record_steps {
                logio::write_step_log(&run_dir.join("logs/training_steps.csv"), &steps)?;
                logs.push(log_entry(run_dir, "logs/training_steps.csv")?);
            }
            logio::write_episode_log(&run_dir.join("logs/training_episodes.csv"), &episodes)?;
            logs.push(log_entry(run_dir, "logs/training_episodes.csv")?);
        }
        Rearing::Alone => {
            let mut all_steps = Vec::new();
            for i in 0..cfg.n_agents {
                let mut solo_cfg = cfg.clone();
                solo_cfg.n_agents = 1;
                let mut agent = vec![Agent::new(
                    i,
                    cfg.actor_encoder,
                    cfg.wm_encoder,
                    cfg.resolution,
                    cfg.alpha,
                    cfg.eta,
                    cfg.ppo.buffer_size,
                    derive_seed(cfg.seed, 100 + i as u64),
                )?];
                // the solo world still has agent id 0
                agent[0].id = 0;
                let mut env = build_world(&solo_cfg, 1)?;
                let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7000 + i as u64));
                let label = format!("solo{i}");
                let (mut steps, episodes) = train_cohort(
                    &solo_cfg,
                    &mut agent,
                    &mut env,
                    &mut env_rng,
                    run_dir,
                    Some(&label),
                    &mut checkpoints,
                )?;
                for row in &mut steps {
                    row.agent_id = i;
                }
                all_steps.extend(steps);
                // the test phase loads agents by cohort index
                let final_name = format!("checkpoints/agent{i}.ckpt");
                std::fs::copy(
                    run_dir.join(format!("checkpoints/{label}_agent0.ckpt")),
                    run_dir.join(&final_name),
                )?;
                checkpoints.push(final_name);
                let path = format!("logs/training_episodes_agent{i}.csv");
                logio::write_episode_log(&run_dir.join(&path), &episodes)?;
                logs.push(log_entry(run_dir, &path)?);
            }
            if cfg.record_steps {
                logio::write_step_log(&run_dir.join("logs/training_steps.csv"), &all_steps)?;
                logs.push(log_entry(run_dir, "logs/training_steps.csv")?);
            }
        }
    }

    let record = RunRecord {
        format: RUN_FORMAT.into(),
        experiment: cfg.experiment.as_str().into(),
        config_hash: config.content_hash()?,
        seed: cfg.seed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoints,
        logs,
    };
    record.save(run_dir)?;
    Ok(record)
}

/// The hyperparameter sweep trains each condition in its own
/// sub-directory, one axis varied at a time from the base config.
fn run_sweep(config: &ExperimentConfig, run_dir: &Path, started: std::time::Instant) -> Result<RunRecord, HarnessError> {
    let mut logs = Vec::new();
    let mut checkpoints = Vec::new();
    for (name, mut condition_cfg) in sweep_conditions(config) {
        condition_cfg.experiment = ExperimentId::Exp3; // each condition trains like the arena experiment
        let sub = run_dir.join("conditions").join(name.replace('=', "_"));
        let record = run_training(&condition_cfg, &sub)?;
        for (path, hash) in record.logs {
            logs.push((format!("conditions/{}/{}", name.replace('=', "_"), path), hash));
        }
        for path in record.checkpoints {
            checkpoints.push(format!("conditions/{}/{}", name.replace('=', "_"), path));
        }
    }
    let record = RunRecord {
        format: RUN_FORMAT.into(),
        experiment: config.experiment.as_str().into(),
        config_hash: config.content_hash()?,
        seed: config.seed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoints,
        logs,
    };
    record.save(run_dir)?;
    Ok(record)
}

fn log_entry(run_dir: &Path, rel: &str) -> Result<(String, String), HarnessError> {
    Ok((rel.to_string(), logio::sha256_file(&run_dir.join(rel))?))
}

#[derive(Clone, Debug, Default)]
pub struct TestOptions {
    pub episodes: Option<usize>,
    pub episode_len: Option<usize>,
    /// Run a single custom lighting condition instead of the protocol.
    pub lighting: Option<(f64, f64)>,
    /// Dump the first N frames of agent 0 (condition 0, episode 0) as PPM.
    pub dump_frames: usize,
}

#[derive(Clone, Debug)]
pub struct TestRecord {
    pub logs: Vec<String>,
    pub params_hash_before: String,
    pub params_hash_after: String,
}

fn cohort_params_hash(agents: &[Agent]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for agent in agents {
        hasher.update(agent.actor.params.content_hash());
        hasher.update(agent.world_model.params.content_hash());
    }
    hex_digest(hasher.finalize().as_slice())
}

/// Run the frozen-parameter test phase of a finished training run.
///
/// Policies act by sampling; nothing learns and no reward accumulates.
/// The illumination experiment walks the whole lighting grid; the
/// imprinting experiment runs two-alternative trials over every color
/// and shape contrast.
pub fn run_test(run_dir: &Path, opts: &TestOptions) -> Result<TestRecord, HarnessError> {
    let config = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let cfg = config.scaled();
    if cfg.experiment == ExperimentId::Exp5 {
        return run_imprint_test(&cfg, run_dir, opts);
    }

    let agents: Vec<Agent> = (0..cfg.n_agents)
        .map(|i| load_agent(&cfg, i, &run_dir.join(format!("checkpoints/agent{i}.ckpt"))))
        .collect::<Result<_, _>>()?;
    let hash_before = cohort_params_hash(&agents);

    let episodes = opts.episodes.unwrap_or(cfg.test_episodes);
    let episode_len = opts.episode_len.unwrap_or(cfg.test_episode_len);

    let conditions: Vec<(String, LightingSpec)> = if let Some((angle, intensity)) = opts.lighting {
        vec![(
            format!("angle{angle:.0}_intensity{intensity:.2}"),
            LightingSpec { angle_offset_deg: angle, intensity },
        )]
    } else if cfg.experiment == ExperimentId::Exp2 {
        let (angles, intensities) = lighting_grid();
        let mut v: Vec<(String, LightingSpec)> = angles
            .iter()
            .map(|&a| (format!("angle_{a:.0}"), LightingSpec { angle_offset_deg: a, intensity: 1.0 }))
            .collect();
        v.extend(
            intensities
                .iter()
                .map(|&i| (format!("intensity_{i:.2}"), LightingSpec { angle_offset_deg: 0.0, intensity: i })),
        );
        v
    } else {
        vec![("standard".to_string(), cfg.lighting)]
    };

    let mut logs = Vec::new();
    for (idx, (label, lighting)) in conditions.iter().enumerate() {
        let mut env = build_world(&cfg, cfg.n_agents)?;
        env.set_lighting(lighting.angle_offset_deg, lighting.intensity);
        let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 9000 + idx as u64));
        let mut policy_rngs: Vec<ChaCha8Rng> = (0..cfg.n_agents)
            .map(|i| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 9500 + (idx * 100 + i) as u64)))
            .collect();

        let dump_dir = (opts.dump_frames > 0 && idx == 0).then(|| run_dir.join("logs/frames"));
        let recorded = rollout_episodes(
            &mut env,
            &mut env_rng,
            episodes,
            episode_len,
            |agent_id, obs, rng_idx| {
                let out = agents[agent_id].actor.policy_forward(obs).expect("frozen forward");
                ActorCritic::sample_action(&out, &mut policy_rngs[rng_idx]).expect("valid probs").action
            },
            dump_dir.as_deref(),
            opts.dump_frames,
        )?;
        let rel = format!("logs/test_{label}.csv");
        logio::write_positions(&run_dir.join(&rel), &recorded)?;
        logs.push(rel);
    }

    let hash_after = cohort_params_hash(&agents);
    if hash_before != hash_after {
        return Err(HarnessError::Internal("parameters changed during the test phase".into()));
    }
    Ok(TestRecord { logs, params_hash_before: hash_before, params_hash_after: hash_after })
}

/// Roll out episodes with a pluggable action source, recording poses.
fn rollout_episodes<F>(
    env: &mut WorldState,
    env_rng: &mut ChaCha8Rng,
    episodes: usize,
    episode_len: usize,
    mut act: F,
    dump_dir: Option<&Path>,
    dump_frames: usize,
) -> Result<RecordedEpisodes, HarnessError>
where
    F: FnMut(usize, &crate::env::ObservationImage, usize) -> AgentAction,
{
    let n = env.agent_count();
    let resolution = env.resolution();
    let mut recorded = RecordedEpisodes::default();
    for episode in 0..episodes {
        env.spawn_random(env_rng)?;
        let mut obs: Vec<crate::env::ObservationImage> =
            (0..n).map(|i| env.render(i, resolution)).collect::<Result<_, _>>()?;
        let mut ticks = Vec::with_capacity(episode_len);
        for tick in 0..episode_len {
            if episode == 0 && tick < dump_frames {
                if let Some(dir) = dump_dir {
                    std::fs::create_dir_all(dir)?;
                    obs[0].write_ppm(&dir.join(format!("frame_{tick:04}.ppm")))?;
                }
            }
            let actions: Vec<AgentAction> = (0..n).map(|i| act(i, &obs[i], i)).collect();
            let out = env.step(&actions, env_rng)?;
            obs = out.observations;
            ticks.push(
                env.agents
                    .iter()
                    .map(|a| (a.position[0], a.position[1], a.heading))
                    .collect::<Vec<_>>(),
            );
        }
        recorded.episodes.push(ticks);
    }
    Ok(recorded)
}

/// Untrained control: agents pick uniformly random actions, same
/// episode protocol, positions logged the same way.
pub fn run_random_baseline(config: &ExperimentConfig, run_dir: &Path) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let started = std::time::Instant::now();
    std::fs::create_dir_all(run_dir.join("logs"))?;
    std::fs::write(run_dir.join("config.toml"), config.to_toml()?)?;
    let cfg = config.clone().scaled();

    let mut env = build_world(&cfg, cfg.n_agents)?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xBA5E));
    let mut action_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xBA5F));
    let recorded = rollout_episodes(
        &mut env,
        &mut env_rng,
        cfg.test_episodes,
        cfg.test_episode_len,
        |_, _, _| uniform_action(&mut action_rng),
        None,
        0,
    )?;
    logio::write_positions(&run_dir.join("logs/baseline_positions.csv"), &recorded)?;

    let record = RunRecord {
        format: RUN_FORMAT.into(),
        experiment: cfg.experiment.as_str().into(),
        config_hash: config.content_hash()?,
        seed: cfg.seed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoints: Vec::new(),
        logs: vec![log_entry(run_dir, "logs/baseline_positions.csv")?],
    };
    record.save(run_dir)?;
    Ok(record)
}

pub fn uniform_action<R: Rng>(rng: &mut R) -> AgentAction {
    AgentAction::from_indices(rng.random_range(0..3), rng.random_range(0..3)).unwrap()
}

/// Two-alternative forced-choice trials: the imprinted object and one
/// novel object spin on opposite sides while the agent starts in the
/// middle at a random orientation. Writes one preference row per trial.
fn run_imprint_test(cfg: &ExperimentConfig, run_dir: &Path, opts: &TestOptions) -> Result<TestRecord, HarnessError> {
    let imprint = cfg.imprint.as_ref().expect("validated");
    let agent = load_agent(cfg, 0, &run_dir.join("checkpoints/agent0.ckpt"))?;
    let hash_before = cohort_params_hash(std::slice::from_ref(&agent));
    let episode_len = opts.episode_len.unwrap_or(cfg.test_episode_len);
    let trials = opts.episodes.unwrap_or(imprint.trials_per_contrast);

    let mut contrasts: Vec<(String, ImprintShape, ImprintColor)> = Vec::new();
    for color in ImprintColor::ALL {
        if color != imprint.color {
            contrasts.push((format!("color,{}", color.as_str()), imprint.shape, color));
        }
    }
    for shape in ImprintShape::ALL {
        if shape != imprint.shape {
            contrasts.push((format!("shape,{}", shape.as_str()), shape, imprint.color));
        }
    }

    let path = run_dir.join("logs/preferences.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    use std::io::Write;
    writeln!(out, "condition,contrast,trial,imprint_side,preference")?;

    let mut positions_dump = RecordedEpisodes::default();
    for (ci, (label, novel_shape, novel_color)) in contrasts.iter().enumerate() {
        let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 40_000 + ci as u64));
        let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 41_000 + ci as u64));
        for trial in 0..trials {
            let imprint_on_right: bool = env_rng.random();
            let side = if imprint_on_right { 1.0 } else { -1.0 };
            let imprint_pos = [side * IMPRINT_TEST_OFFSET, 0.0];
            let novel_pos = [-side * IMPRINT_TEST_OFFSET, 0.0];

            let mut env = WorldState::new(world_spec(cfg), 1, cfg.resolution)?;
            env.objects.push(ImprintObject::spinning(imprint.shape, imprint.color, imprint_pos));
            env.objects.push(ImprintObject::spinning(*novel_shape, *novel_color, novel_pos));
            let heading = std::f64::consts::TAU * env_rng.random::<f64>();
            env.set_agent_pose(0, [0.0, 0.0], heading)?;

            let mut obs = env.render(0, cfg.resolution)?;
            let mut trajectory = Vec::with_capacity(episode_len);
            let mut ticks = Vec::new();
            for _ in 0..episode_len {
                let out_policy = agent.actor.policy_forward(&obs)?;
                let action = ActorCritic::sample_action(&out_policy, &mut policy_rng)
                    .map_err(crate::ppo::PpoError::from)?
                    .action;
                let step = env.step(&[action], &mut env_rng)?;
                obs = step.observations.into_iter().next().unwrap();
                let a = &env.agents[0];
                trajectory.push((a.position[0], a.position[1]));
                if ci == 0 && trial == 0 {
                    ticks.push(vec![(a.position[0], a.position[1], a.heading)]);
                }
            }
            if ci == 0 && trial == 0 {
                positions_dump.episodes.push(ticks);
            }
            let preference = crate::analysis::preference_score(
                &trajectory,
                (imprint_pos[0], imprint_pos[1]),
                (novel_pos[0], novel_pos[1]),
            );
            let side_name = if imprint_on_right { "right" } else { "left" };
            writeln!(out, "{label},{trial},{side_name},{preference:.6}")?;
        }
    }
    out.flush()?;
    drop(out);

    let mut logs = vec!["logs/preferences.csv".to_string()];
    if !positions_dump.episodes.is_empty() {
        logio::write_positions(&run_dir.join("logs/imprint_trial0_positions.csv"), &positions_dump)?;
        logs.push("logs/imprint_trial0_positions.csv".to_string());
    }

    let hash_after = cohort_params_hash(std::slice::from_ref(&agent));
    if hash_before != hash_after {
        return Err(HarnessError::Internal("parameters changed during the test phase".into()));
    }
    Ok(TestRecord { logs, params_hash_before: hash_before, params_hash_after: hash_after })
}
