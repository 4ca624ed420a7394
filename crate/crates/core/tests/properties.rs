use aes_core::estimators::{variance_objective, GradientSample};
use aes_core::regret::{LossSequence, RegretLedger};
use aes_core::sampler::{ResetMode, SamplerConfig, SamplerState};
use aes_core::simplex::{lambda_ratio, SimplexDistribution};
use aes_core::store::WeightedStore;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex(raw: &[f64]) -> SimplexDistribution {
    SimplexDistribution::from_weights(raw).unwrap()
}

proptest! {
    #[test]
    fn distribution_is_a_pure_function(
        w in prop::collection::vec(0.0f64..1e3, 1..30),
        nu in 1e-2f64..1e3,
        kappa in 0.0f64..=1.0,
    ) {
        let cfg = SamplerConfig::new(w.len()).with_nu(nu).with_kappa(kappa);
        let s = SamplerState::with_accumulators(cfg, w, 7).unwrap();
        let t = s.clone();
        prop_assert_eq!(s.distribution().unwrap(), t.distribution().unwrap());
        prop_assert_eq!(s.distribution().unwrap(), s.distribution().unwrap());
    }

    #[test]
    fn feedback_keeps_accumulators_valid(
        n in 1usize..20,
        entries in prop::collection::vec((0usize..20, 0.0f64..1e3), 0..30),
        kappa in 0.01f64..=1.0,
    ) {
        let cfg = SamplerConfig::new(n).with_nu(1.0).with_kappa(kappa);
        let mut s = SamplerState::new(cfg).unwrap();
        let p = s.distribution().unwrap();
        let fb: Vec<(usize, f64)> = entries.into_iter().map(|(i, d)| (i % n, d)).collect();
        let before = s.accumulators().to_vec();
        s.record_feedback(&fb, &p).unwrap();
        prop_assert_eq!(s.accumulators().len(), n);
        prop_assert_eq!(s.step(), 1);
        for (i, w) in s.accumulators().iter().enumerate() {
            prop_assert!(w.is_finite() && *w >= 0.0);
            let expected: f64 = before[i] + fb.iter().filter(|(j, _)| *j == i).map(|(_, d)| d / p.get(i)).sum::<f64>();
            prop_assert!((w - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn resets_follow_the_mode(
        w in prop::collection::vec(0.0f64..1e3, 1..20),
        period in 1u64..10,
        rho in 0.0f64..=1.0,
        hard in any::<bool>(),
    ) {
        let mode = if hard { ResetMode::Hard } else { ResetMode::Soft { rho } };
        let n = w.len();
        let cfg = SamplerConfig::new(n).with_nu(1.0).with_reset(period, mode);
        for step in [period - 1, period, 3 * period] {
            let mut s = SamplerState::with_accumulators(cfg, w.clone(), step).unwrap();
            let fired = s.maybe_reset();
            prop_assert_eq!(fired, step > 0 && step % period == 0);
            for (a, b) in s.accumulators().iter().zip(&w) {
                let expected = if !fired { *b } else if hard { 0.0 } else { rho * b };
                prop_assert!((a - expected).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn index_matches_rebuild_after_mixed_operations(
        n in 1usize..40,
        seed in any::<u64>(),
        ops in 1usize..300,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SamplerConfig::new(n).with_nu(0.5).with_kappa(0.2).with_reset(17, ResetMode::Soft { rho: 0.5 });
        let mut sampler = SamplerState::new(cfg).unwrap();
        let mut store: WeightedStore<u64> = WeightedStore::new(&sampler);
        for k in 0..ops as u64 {
            if !store.is_ready() || rng.gen_bool(0.3) {
                let victim = store.insert(k, &mut sampler, &mut rng).unwrap();
                prop_assert_eq!(sampler.accumulators()[victim], 0.0);
                prop_assert_eq!(store.get(victim), Some(&k));
            } else {
                let idx = store.sample_indices(&sampler, 3, &mut rng).unwrap();
                let fb: Vec<(usize, f64)> = idx.iter().map(|&i| (i, rng.gen::<f64>() * 10.0)).collect();
                store.apply_sampled_feedback(&mut sampler, &fb).unwrap();
                store.maybe_reset(&mut sampler);
            }
            prop_assert!(store.occupancy() <= n);
        }
        prop_assert!(store.index_deviation(&sampler) <= 1e-9);
        let via_index = store.distribution(&sampler).unwrap();
        let direct = sampler.distribution().unwrap();
        for (a, b) in via_index.probs().iter().zip(direct.probs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_sample_loss_is_weighted_square_norm(
        omega in 1e-6f64..1e6,
        g in prop::collection::vec(-1e3f64..1e3, 1..12),
    ) {
        let s = GradientSample::new(0, omega, g.clone());
        let expected = omega * omega * g.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((s.d - expected).abs() <= 1e-9 * expected.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn lambda_times_probability_is_inverse_size(raw in prop::collection::vec(1e-3f64..1.0, 1..30)) {
        let p = simplex(&raw);
        let n = p.len() as f64;
        for k in 0..p.len() {
            prop_assert!((lambda_ratio(&p, k).unwrap() * p.get(k) * n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_objective_is_convex(
        d in prop::collection::vec(0.0f64..100.0, 2..10),
        a in prop::collection::vec(1e-3f64..1.0, 10),
        b in prop::collection::vec(1e-3f64..1.0, 10),
        t in 0.0f64..=1.0,
    ) {
        let n = d.len();
        let p1 = simplex(&a[..n]);
        let p2 = simplex(&b[..n]);
        let mix: Vec<f64> = p1.probs().iter().zip(p2.probs()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = variance_objective(&d, &simplex(&mix)).unwrap();
        let rhs = t * variance_objective(&d, &p1).unwrap() + (1.0 - t) * variance_objective(&d, &p2).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn regret_ledger_orderings(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 1..40),
        probs in prop::collection::vec(prop::collection::vec(1e-2f64..1.0, 4), 40),
    ) {
        let mut moving = RegretLedger::new(4, 0);
        let mut fixed = RegretLedger::new(4, 0);
        let p_fixed = simplex(&probs[0]);
        for (row, raw) in rows.iter().zip(&probs) {
            moving.push(row, variance_objective(row, &simplex(raw)).unwrap()).unwrap();
            fixed.push(row, variance_objective(row, &p_fixed).unwrap()).unwrap();
        }
        for ledger in [&moving, &fixed] {
            let scale = ledger.realized().iter().sum::<f64>().max(1.0) / 16.0;
            prop_assert!(ledger.cumulative_dynamic() >= ledger.cumulative_static() - 1e-12 * scale);
        }
        let scale = fixed.realized().iter().sum::<f64>().max(1.0) / 16.0;
        prop_assert!(fixed.cumulative_static() >= -1e-12 * scale);
        let seq = LossSequence::new(rows).unwrap();
        prop_assert_eq!(seq.column_sums().len(), 4);
    }
}
