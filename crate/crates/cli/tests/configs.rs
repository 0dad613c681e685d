use std::path::PathBuf;

use plateopt::cost::CostConfig;
use plateopt::harness::RunConfig;
use plateopt::rules::load_rules;
use plateopt::synth::GeneratorSpec;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_run_config_spells_out_the_defaults() {
    let cfg = RunConfig::load(&configs().join("run.toml")).unwrap();
    let mut expected = RunConfig::default();
    expected.out_dir = cfg.out_dir.clone();
    expected.cost_file = cfg.cost_file.clone();
    expected.data.dir = cfg.data.dir.clone();
    assert_eq!(cfg, expected);
    assert!(cfg.cost_file.as_ref().unwrap().ends_with("costs.json"));
    cfg.cost().unwrap();
}

#[test]
fn shipped_examples_parse() {
    CostConfig::load(&configs().join("costs.json")).unwrap();
    let spec = GeneratorSpec::load(&configs().join("spec.toml")).unwrap();
    assert_eq!(spec, GeneratorSpec::default());
    assert_eq!(load_rules(&configs().join("rules.json")).unwrap().len(), 3);
}
