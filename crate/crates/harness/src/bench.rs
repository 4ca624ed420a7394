//! Store micro-benchmarks.

use std::time::Instant;

use aes_core::sampler::SamplerState;
use aes_core::store::WeightedStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{BenchSettings, SamplerSettings};
use crate::error::Result;

pub const BENCH_CSV_SCHEMA: &str = "aes-bench/1";
pub const BENCH_CSV_HEADER: &str = "slots,batch,phase,ops,seconds,ops_per_sec";
/// Sample-plus-update rate expected at one million slots.
pub const THROUGHPUT_TARGET: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub phase: &'static str,
    pub ops: usize,
    pub seconds: f64,
}

impl BenchRow {
    pub fn ops_per_sec(&self) -> f64 {
        self.ops as f64 / self.seconds.max(f64::MIN_POSITIVE)
    }
}

fn timed<F: FnMut() -> Result<()>>(phase: &'static str, ops: usize, mut f: F) -> Result<BenchRow> {
    let start = Instant::now();
    f()?;
    Ok(BenchRow {
        phase,
        ops,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Phases: `fill` (sequential inserts), `sample` (index draws only),
/// `sample_update` (draws plus per-draw loss feedback, one op per draw),
/// `overwrite` (complement-distribution eviction) and `rebuild`.
pub fn run_bench(bench: &BenchSettings, sampler: &SamplerSettings, seed: u64) -> Result<Vec<BenchRow>> {
    let n = bench.slots;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SamplerState::new(sampler.to_config(n, bench.ops as u64))?;
    let mut store: WeightedStore<u32> = WeightedStore::new(&state);
    let mut rows = Vec::new();

    rows.push(timed("fill", n, || {
        for k in 0..n {
            store.insert(k as u32, &mut state, &mut rng)?;
        }
        Ok(())
    })?);

    let rounds = bench.ops.div_ceil(bench.batch);
    let mut checksum = 0usize;
    rows.push(timed("sample", rounds * bench.batch, || {
        for _ in 0..rounds {
            checksum = checksum.wrapping_add(store.sample_indices(&state, bench.batch, &mut rng)?[0]);
        }
        Ok(())
    })?);

    let mut feedback = Vec::with_capacity(bench.batch);
    rows.push(timed("sample_update", rounds * bench.batch, || {
        for _ in 0..rounds {
            feedback.clear();
            for i in store.sample_indices(&state, bench.batch, &mut rng)? {
                feedback.push((i, rng.gen::<f64>()));
            }
            store.apply_sampled_feedback(&mut state, &feedback)?;
            store.maybe_reset(&mut state);
        }
        Ok(())
    })?);

    let inserts = bench.ops.min(n.max(1));
    rows.push(timed("overwrite", inserts, || {
        for k in 0..inserts {
            store.insert(k as u32, &mut state, &mut rng)?;
        }
        Ok(())
    })?);

    rows.push(timed("rebuild", 1, || {
        store.rebuild_index(&state);
        Ok(())
    })?);
    std::hint::black_box(checksum);
    Ok(rows)
}

pub fn bench_csv(bench: &BenchSettings, rows: &[BenchRow]) -> String {
    let mut out = format!("# schema={BENCH_CSV_SCHEMA}\n{BENCH_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.1}\n",
            bench.slots,
            bench.batch,
            r.phase,
            r.ops,
            r.seconds,
            r.ops_per_sec()
        ));
    }
    out
}
