//! Regenerate the canned experiment configs in `configs/`.
//!
//! Run from the workspace root:
//!   cargo run -p curioflock --example gen_configs

use curioflock::harness::{ExperimentConfig, ExperimentId};
use curioflock::networks::EncoderSize;

fn main() -> std::io::Result<()> {
    let dir = std::path::Path::new("configs");
    std::fs::create_dir_all(dir)?;

    for id in [ExperimentId::Exp1, ExperimentId::Exp2, ExperimentId::Exp3, ExperimentId::Exp4, ExperimentId::Exp5] {
        let cfg = ExperimentConfig::preset(id);
        let path = dir.join(format!("{}.toml", id.as_str()));
        std::fs::write(&path, cfg.to_toml().expect("serializable preset"))?;
        println!("wrote {}", path.display());
    }

    // desk-scale variant of exp1: small encoders, low resolution, short
    // schedule; finishes on a single workstation
    let mut desk = ExperimentConfig::preset(ExperimentId::Exp1);
    desk.n_agents = 4;
    desk.resolution = 64;
    desk.actor_encoder = EncoderSize::Small;
    desk.wm_encoder = EncoderSize::Small;
    desk.train_episodes = 150;
    desk.train_episode_len = 500;
    desk.test_episodes = 20;
    desk.test_episode_len = 1000;
    desk.checkpoint_every = 50;
    desk.seed = 11;
    let path = dir.join("exp1_desk.toml");
    std::fs::write(&path, desk.to_toml().expect("serializable preset"))?;
    println!("wrote {}", path.display());

    Ok(())
}
