//! The canned configs in `configs/` must stay in sync with the presets.
//! Regenerate them with `cargo run -p curioflock --example gen_configs`.

use curioflock::harness::{ExperimentConfig, ExperimentId};

fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn canned_configs_parse_and_match_presets() {
    for id in [ExperimentId::Exp1, ExperimentId::Exp2, ExperimentId::Exp3, ExperimentId::Exp4, ExperimentId::Exp5] {
        let path = configs_dir().join(format!("{}.toml", id.as_str()));
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        let preset = ExperimentConfig::preset(id);
        assert_eq!(
            cfg.content_hash().unwrap(),
            preset.content_hash().unwrap(),
            "{} is stale; regenerate with the gen_configs example",
            path.display()
        );
    }
}

#[test]
fn desk_config_parses_and_validates() {
    let path = configs_dir().join("exp1_desk.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.n_agents, 4);
    assert_eq!(cfg.resolution, 64);
    assert_eq!(cfg.train_episodes, 150);
    assert_eq!(cfg.train_episode_len, 500);
    assert_eq!(cfg.test_episodes, 20);
}
