use std::path::PathBuf;

use timbre_core::config::ExperimentConfig;

fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn toy_json_matches_the_builtin_toy_config() {
    let cfg = shipped("toy.json");
    assert_eq!(cfg.hash().unwrap(), ExperimentConfig::toy(1).hash().unwrap());
}

#[test]
fn default_json_is_valid() {
    let cfg = shipped("default.json");
    cfg.validate().unwrap();
    assert_eq!(cfg.train.hidden, 256);
    assert_eq!(cfg.train.embed_dim, 64);
    assert_eq!(cfg.train.temperature, 0.1);
    assert_eq!(cfg.train.margin, 0.2);
}
