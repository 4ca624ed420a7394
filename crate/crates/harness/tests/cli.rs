use std::fs;
use std::process::Command;

fn aes() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aes"))
}

#[test]
fn help_lists_every_subcommand() {
    let out = aes().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["run", "verify", "bench", "metrics"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let run = String::from_utf8(aes().args(["run", "--help"]).output().unwrap().stdout).unwrap();
    for flag in ["--seed-list", "--out", "--workers", "AES_OUTPUT_ROOT"] {
        assert!(run.contains(flag), "{flag} missing from run help");
    }
}

#[test]
fn verify_lists_thirteen_criteria() {
    let out = aes().args(["verify", "--list"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 13);
}

#[test]
fn run_honors_output_root_and_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.ini");
    fs::write(
        &spec,
        "[experiment]\nfamily = regret_synthetic\nseeds = 1\noutput_dir = ignored\n[regret]\nslots = 4\nhorizons = 50\n",
    )
    .unwrap();
    let root = dir.path().join("root");
    let out = aes()
        .args(["run", spec.to_str().unwrap(), "--seed-list", "8,9"])
        .env("AES_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("cells/base/regret/T50_seed8.csv").exists());
    assert!(root.join("cells/base/regret/T50_seed9.csv").exists());
    assert!(!root.join("cells/base/regret/T50_seed1.csv").exists());

    let explicit = dir.path().join("explicit");
    let out = aes()
        .args(["run", spec.to_str().unwrap(), "--out", explicit.to_str().unwrap()])
        .env("AES_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(explicit.join("manifest.json").exists());
}

#[test]
fn bad_spec_exits_nonzero_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.ini");
    fs::write(&spec, "[sampler]\nkappa = 2\n").unwrap();
    let out = aes().args(["run", spec.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("sampler.kappa"));
}

#[test]
fn metrics_and_bench_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("rl.ini");
    fs::write(
        &spec,
        "[experiment]\nseeds = 1,2\n[training]\nenvs = bandit2\nmodes = aes\ntotal_steps = 200\nbuffer = 8\nbatch = 2\neval_interval = 20\nprobe_interval = 0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    assert!(aes()
        .args(["run", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let traces = out_dir.join("cells/base/bandit2");
    let out = aes()
        .arg("metrics")
        .arg(traces.join("aes_seed1.csv"))
        .arg(traces.join("aes_seed2.csv"))
        .args(["--window", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(3).unwrap().starts_with("base,"));

    let bench = aes().args(["bench", "--slots", "1000", "--ops", "500", "--batch", "5"]).output().unwrap();
    assert!(bench.status.success());
    let text = String::from_utf8(bench.stdout).unwrap();
    assert!(text.starts_with("# schema=aes-bench/1\nslots,batch,phase,ops,seconds,ops_per_sec\n"));
    assert_eq!(text.lines().count(), 7);
}
