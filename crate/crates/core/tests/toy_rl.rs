use aes_core::env::Environment;
use aes_core::policy::PolicyModel;
use aes_core::sampler::ResetMode;
use aes_core::training::{run_training, SelectionMode, TrainingConfig, TrainingTrace, TRACE_CSV_HEADER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [2, 20, 200, 2000, 20000];

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn bandit_config(mode: SelectionMode, seed: u64) -> TrainingConfig {
    let mut c = TrainingConfig::new(16, 4, mode, seed);
    c.total_steps = 600;
    c.learning_rate = 0.5;
    c.sampler = c.sampler.with_nu(1e-2);
    c.eval_interval = 50;
    c.probe_interval = 0;
    c
}

#[test]
fn every_mode_nearly_optimal_on_two_state_bandit() {
    let env = Environment::two_state_bandit([1.0, 0.0]).unwrap();
    let best = env.optimal_value().unwrap();
    for mode in SelectionMode::ALL {
        for seed in SEEDS {
            let trace = run_training(&env, &bandit_config(mode, seed)).unwrap();
            let j = env.exact_policy_value(&trace.policy).unwrap();
            assert!(j >= 0.95 * best, "{mode} seed {seed}: J = {j}, optimum {best}");
        }
    }
}

fn chain_config(mode: SelectionMode, seed: u64) -> TrainingConfig {
    let mut c = TrainingConfig::new(32, 4, mode, seed);
    c.total_steps = 6000;
    c.learning_rate = 0.02;
    c.inner_updates = 1;
    c.eval_interval = 200;
    c.probe_interval = 0;
    c
}

#[test]
fn naive_with_full_mixing_matches_uniform() {
    let env = Environment::chain(5, 10).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let value = |mode: SelectionMode, seed: u64| {
        let mut c = chain_config(mode, seed);
        c.sampler = c.sampler.with_kappa(1.0);
        env.exact_policy_value(&run_training(&env, &c).unwrap().policy).unwrap()
    };
    let naive: Vec<f64> = seeds.iter().map(|&s| value(SelectionMode::AesNaive, s)).collect();
    let uniform: Vec<f64> = seeds.iter().map(|&s| value(SelectionMode::Uniform, s)).collect();
    let diffs: Vec<f64> = naive.iter().zip(&uniform).map(|(a, b)| a - b).collect();
    let (md, sd) = mean_std(&diffs);
    let se = sd / (diffs.len() as f64).sqrt();
    assert!(md.abs() <= 3.0 * se + 1e-9, "paired difference {md} with se {se}");
}

#[test]
fn naive_on_chain_keeps_up_with_uniform() {
    let env = Environment::chain(5, 10).unwrap();
    let finals = |mode| -> Vec<f64> {
        SEEDS
            .iter()
            .map(|&s| run_training(&env, &chain_config(mode, s)).unwrap().final_return())
            .collect()
    };
    let (naive, _) = mean_std(&finals(SelectionMode::AesNaive));
    let (uniform, sd) = mean_std(&finals(SelectionMode::Uniform));
    assert!(naive >= uniform - sd, "naive {naive} uniform {uniform} sd {sd}");
}

fn csv(trace: &TrainingTrace) -> String {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, &[]).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn all_modes_share_schema_and_budget() {
    let env = Environment::gridworld(3, 3, 8, vec![], 6).unwrap();
    let mut budgets = Vec::new();
    for mode in SelectionMode::ALL {
        let mut c = TrainingConfig::new(16, 4, mode, 9);
        c.total_steps = 900;
        c.inner_updates = 2;
        c.probe_interval = 300;
        c.probe_repeats = 8;
        let trace = run_training(&env, &c).unwrap();
        let text = csv(&trace);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], TRACE_CSV_HEADER);
        let hash = format!("# config_hash={}", c.config_hash());
        assert!(text.lines().any(|l| l == hash));
        for row in &rows[1..] {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 8);
            assert_eq!(cols[0], "9");
            assert_eq!(cols[1], mode.as_str());
            assert_eq!(cols[2], env.name());
        }
        let steps: Vec<u64> = trace.points.iter().map(|p| p.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        budgets.push(*steps.last().unwrap() >= c.total_steps);
    }
    assert!(budgets.iter().all(|&b| b));
}

#[test]
fn uniform_probe_equals_its_own_reference() {
    let env = Environment::chain(4, 6).unwrap();
    let mut c = TrainingConfig::new(16, 4, SelectionMode::Uniform, 3);
    c.total_steps = 600;
    c.probe_interval = 200;
    c.probe_repeats = 16;
    let trace = run_training(&env, &c).unwrap();
    for p in &trace.points {
        assert_eq!(p.variance_probe, p.variance_uniform);
    }
}

#[test]
fn probes_do_not_touch_training_state() {
    let env = Environment::chain(5, 8).unwrap();
    for mode in SelectionMode::ALL {
        let mut quiet = TrainingConfig::new(16, 4, mode, 11);
        quiet.total_steps = 1500;
        quiet.probe_interval = 0;
        quiet.sampler = quiet.sampler.with_reset(20, ResetMode::Hard);
        let mut probed = quiet.clone();
        probed.probe_interval = 100;
        probed.probe_repeats = 32;
        let a = run_training(&env, &quiet).unwrap();
        let b = run_training(&env, &probed).unwrap();
        assert_eq!(a.policy, b.policy, "{mode}");
        assert_eq!(a.test_returns(), b.test_returns(), "{mode}");
        assert!(b.points.iter().any(|p| p.variance_probe.is_some()));
    }
}

#[test]
fn exact_value_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let envs = [
        Environment::chain(5, 10).unwrap(),
        Environment::gridworld(4, 4, 15, vec![6], 10).unwrap(),
        Environment::two_state_bandit([1.0, 0.0]).unwrap(),
    ];
    for env in envs {
        let params = (0..env.n_states() * env.n_actions()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let policy = PolicyModel::tabular(env.n_states(), env.n_actions()).with_params(params).unwrap();
        let exact = env.exact_policy_value(&policy).unwrap();
        let episodes = 100_000;
        let returns: Vec<f64> = (0..episodes)
            .map(|_| env.rollout(&policy, 0, &mut rng).unwrap().discounted_return(env.gamma()))
            .collect();
        let (m, sd) = mean_std(&returns);
        let se = sd / (episodes as f64).sqrt();
        assert!((m - exact).abs() <= 3.0 * se + 1e-12, "{}: mc {m} exact {exact} se {se}", env.name());
    }
}
