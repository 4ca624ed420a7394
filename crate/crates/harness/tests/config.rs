use std::path::PathBuf;

use aes_core::regret::{Feedback, ResetPattern};
use aes_harness::config::{parse_config, parse_str, Family, GeneratorKind, Mixing};
use aes_harness::HarnessError;

fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

#[test]
fn shipped_specs_parse() {
    for name in [
        "bench.ini",
        "regret_bandit.ini",
        "regret_dynamic.ini",
        "regret_stationary.ini",
        "rl_comparison.ini",
        "variance_study.ini",
    ] {
        parse_config(&spec_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn dynamic_spec_has_two_reset_patterns() {
    let spec = parse_config(&spec_path("regret_dynamic.ini")).unwrap();
    assert_eq!(spec.family, Family::RegretSynthetic);
    assert_eq!(spec.seeds.len(), 20);
    let names: Vec<&str> = spec.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["base", "naive"]);
    let (aes, naive) = (&spec.variants[0].settings.regret, &spec.variants[1].settings.regret);
    assert_eq!(aes.reset, ResetPattern::Periodic);
    assert_eq!(naive.reset, ResetPattern::OnArrival);
    assert_eq!(aes.generator, GeneratorKind::Drifting);
    assert_eq!(aes.mixing, Mixing::Fixed);
    assert_eq!(aes.feedback, Feedback::Bandit { batch: 32 });
    assert_eq!(aes.reset_c, Some(4.5));
    assert_eq!(aes.horizons, naive.horizons);
}

fn config_key(text: &str) -> String {
    match parse_str(text) {
        Err(HarnessError::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn errors_name_the_offending_key() {
    assert_eq!(config_key("[training]\nbuffer = many\n"), "training.buffer");
    assert_eq!(config_key("[regret]\ngenerator = chaotic\n"), "regret.generator");
    assert_eq!(config_key("[sampler]\nnu = -1\n"), "sampler.nu");
    assert_eq!(config_key("[mystery]\nx = 1\n"), "mystery");
    assert_eq!(config_key("[experiment]\nseeds =\n"), "experiment.seeds");
    assert!(config_key("[sweep.alt]\ntraining.batch = 0\n").starts_with("sweep.alt: "));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = parse_config(&spec_path("does_not_exist.ini")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err}");
}
