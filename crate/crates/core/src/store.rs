//! Replay buffer with logarithmic-time sampling from the mixed FTRL distribution.
//!
//! The store keeps a [`SumTree`] of per-slot scores `sqrt(w(i) + nu)`, where
//! `w` lives in the companion [`SamplerState`]. Every mutation that touches
//! accumulators goes through the store so the two stay in sync.

use std::io::{Read, Write};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};
use crate::sampler::SamplerState;
use crate::simplex::SimplexDistribution;
use crate::sum_tree::SumTree;

pub const SNAPSHOT_FORMAT: &str = "aes-store-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct WeightedStore<T> {
    slots: Vec<Option<T>>,
    tree: SumTree,
    occupancy: usize,
}

/// Draws a slot from the complement distribution `q(j) = (1 - p(j)) / (n - 1)`.
///
/// Proposes uniform slots and accepts slot `j` with probability `1 - p(j)`,
/// which needs at most `n / (n - 1)` proposals on average.
pub fn sample_complement<R: Rng + ?Sized>(
    n: usize,
    prob: impl Fn(usize) -> f64,
    rng: &mut R,
) -> usize {
    assert!(n > 0);
    if n == 1 {
        return 0;
    }
    loop {
        let j = rng.gen_range(0..n);
        if rng.gen::<f64>() < 1.0 - prob(j) {
            return j;
        }
    }
}

impl<T> WeightedStore<T> {
    pub fn new(sampler: &SamplerState) -> Self {
        let n = sampler.capacity();
        let mut slots = Vec::with_capacity(n);
        slots.resize_with(n, || None);
        Self {
            slots,
            tree: Self::build_tree(sampler),
            occupancy: 0,
        }
    }

    fn build_tree(sampler: &SamplerState) -> SumTree {
        let scores: Vec<f64> = (0..sampler.capacity()).map(|i| sampler.score(i)).collect();
        SumTree::from_leaves(&scores)
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn is_ready(&self) -> bool {
        self.occupancy == self.slots.len()
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    /// Filled slots with their indices.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|t| (i, t)))
    }

    pub fn index(&self) -> &SumTree {
        &self.tree
    }

    fn check_sampler(&self, sampler: &SamplerState) -> Result<()> {
        if sampler.capacity() != self.capacity() {
            return Err(AesError::Dimension {
                expected: self.capacity(),
                got: sampler.capacity(),
            });
        }
        Ok(())
    }

    /// Mixed probability of one slot, read from the index in O(1).
    pub fn probability(&self, sampler: &SamplerState, slot: usize) -> f64 {
        let kappa = sampler.config().kappa;
        (1.0 - kappa) * self.tree.leaf(slot) / self.tree.total() + kappa / self.capacity() as f64
    }

    /// The full mixed distribution as seen by the index.
    pub fn distribution(&self, sampler: &SamplerState) -> Result<SimplexDistribution> {
        self.check_sampler(sampler)?;
        SimplexDistribution::new(
            (0..self.capacity())
                .map(|i| self.probability(sampler, i))
                .collect(),
        )
    }

    /// Draws `batch` slot indices i.i.d. (with replacement) from the mixed distribution.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        sampler: &SamplerState,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.check_sampler(sampler)?;
        if !self.is_ready() {
            return Err(AesError::NotReady {
                occupancy: self.occupancy,
                capacity: self.capacity(),
            });
        }
        let kappa = sampler.config().kappa;
        let n = self.capacity();
        let total = self.tree.total();
        Ok((0..batch)
            .map(|_| {
                if rng.gen::<f64>() < kappa {
                    rng.gen_range(0..n)
                } else {
                    self.tree.find(rng.gen::<f64>() * total)
                }
            })
            .collect())
    }

    /// Stores `item`, filling free slots in order; once full, evicts a victim
    /// drawn from the complement of the store's current FTRL distribution.
    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        item: T,
        sampler: &mut SamplerState,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_sampler(sampler)?;
        let slot = if self.is_ready() {
            let s: &SamplerState = sampler;
            sample_complement(self.capacity(), |j| self.probability(s, j), rng)
        } else {
            self.occupancy
        };
        self.write_slot(slot, item, sampler);
        Ok(slot)
    }

    /// Like [`insert`](Self::insert), but evicts according to the complement
    /// of an explicit distribution `p`.
    pub fn insert_overwrite<R: Rng + ?Sized>(
        &mut self,
        item: T,
        p: &SimplexDistribution,
        sampler: &mut SamplerState,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_sampler(sampler)?;
        if p.len() != self.capacity() {
            return Err(AesError::Dimension {
                expected: self.capacity(),
                got: p.len(),
            });
        }
        let slot = if self.is_ready() {
            sample_complement(self.capacity(), |j| p.get(j), rng)
        } else {
            self.occupancy
        };
        self.write_slot(slot, item, sampler);
        Ok(slot)
    }

    fn write_slot(&mut self, slot: usize, item: T, sampler: &mut SamplerState) {
        if self.slots[slot].replace(item).is_none() {
            self.occupancy += 1;
        }
        sampler.clear_slot(slot);
        self.sync_slot(sampler, slot);
    }

    /// Records importance-weighted feedback and refreshes the touched scores.
    pub fn apply_feedback(
        &mut self,
        sampler: &mut SamplerState,
        feedback: &[(usize, f64)],
        p_used: &SimplexDistribution,
    ) -> Result<()> {
        self.check_sampler(sampler)?;
        sampler.record_feedback(feedback, p_used)?;
        for &(slot, _) in feedback {
            self.sync_slot(sampler, slot);
        }
        Ok(())
    }

    /// Feedback for slots drawn from this store's own distribution. The
    /// probabilities are read from the index before any update, in O(log n)
    /// per entry.
    pub fn apply_sampled_feedback(
        &mut self,
        sampler: &mut SamplerState,
        feedback: &[(usize, f64)],
    ) -> Result<()> {
        self.check_sampler(sampler)?;
        let mut weighted = Vec::with_capacity(feedback.len());
        for &(slot, d) in feedback {
            if slot >= self.capacity() {
                return Err(AesError::InvalidData {
                    slot,
                    reason: "slot index out of range".into(),
                });
            }
            weighted.push((slot, d, self.probability(sampler, slot)));
        }
        sampler.record_weighted_feedback(&weighted)?;
        for &(slot, _) in feedback {
            self.sync_slot(sampler, slot);
        }
        Ok(())
    }

    /// Applies the sampler's periodic reset; rebuilds the index when it fires.
    pub fn maybe_reset(&mut self, sampler: &mut SamplerState) -> bool {
        let fired = sampler.maybe_reset();
        if fired {
            self.rebuild_index(sampler);
        }
        fired
    }

    pub fn sync_slot(&mut self, sampler: &SamplerState, slot: usize) {
        self.tree.set(slot, sampler.score(slot));
    }

    /// Recomputes the whole index from the sampler accumulators.
    pub fn rebuild_index(&mut self, sampler: &SamplerState) {
        self.tree = Self::build_tree(sampler);
    }

    /// Largest relative difference between the maintained index and a fresh
    /// rebuild, node by node.
    pub fn index_deviation(&self, sampler: &SamplerState) -> f64 {
        let fresh = Self::build_tree(sampler);
        self.tree
            .nodes()
            .iter()
            .zip(fresh.nodes())
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Self-describing dump of a store and its sampler.
///
/// Field order in the JSON object: `format`, `version`, `capacity`,
/// `occupancy`, `sampler` (config, accumulators `w`, step and counters),
/// `slots` (one entry per slot, `null` when empty).
#[derive(Debug, Serialize, Deserialize)]
struct Snapshot<T> {
    format: String,
    version: u32,
    capacity: usize,
    occupancy: usize,
    sampler: SamplerState,
    slots: Vec<Option<T>>,
}

impl<T: Serialize + DeserializeOwned> WeightedStore<T> {
    pub fn write_snapshot<W: Write>(&self, sampler: &SamplerState, writer: W) -> Result<()> {
        self.check_sampler(sampler)?;
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            capacity: self.capacity(),
            occupancy: self.occupancy,
            sampler: sampler.clone(),
            slots: self.slots.iter().map(Option::as_ref).collect::<Vec<_>>(),
        };
        serde_json::to_writer(writer, &snap).map_err(|e| AesError::Snapshot(e.to_string()))
    }

    pub fn read_snapshot<R: Read>(reader: R) -> Result<(Self, SamplerState)> {
        let snap: Snapshot<T> =
            serde_json::from_reader(reader).map_err(|e| AesError::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(AesError::Snapshot(format!("unknown format {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(AesError::Snapshot(format!(
                "unsupported version {}",
                snap.version
            )));
        }
        let sampler = SamplerState::with_accumulators(
            *snap.sampler.config(),
            snap.sampler.accumulators().to_vec(),
            snap.sampler.step(),
        )?;
        let occupancy = snap.slots.iter().filter(|s| s.is_some()).count();
        if snap.slots.len() != snap.capacity
            || sampler.capacity() != snap.capacity
            || occupancy != snap.occupancy
        {
            return Err(AesError::Snapshot("inconsistent slot counts".into()));
        }
        let store = Self {
            slots: snap.slots,
            tree: Self::build_tree(&sampler),
            occupancy,
        };
        Ok((store, sampler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{ResetMode, SamplerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sampler(n: usize, nu: f64, kappa: f64) -> SamplerState {
        SamplerState::new(SamplerConfig::new(n).with_nu(nu).with_kappa(kappa)).unwrap()
    }

    fn full_store(s: &mut SamplerState, rng: &mut ChaCha8Rng) -> WeightedStore<u32> {
        let mut store = WeightedStore::new(s);
        for i in 0..s.capacity() {
            store.insert(i as u32, s, rng).unwrap();
        }
        store
    }

    #[test]
    fn fill_phase_is_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = sampler(4, 1.0, 0.1);
        let mut store = WeightedStore::new(&s);
        for i in 0..4 {
            assert_eq!(store.insert(i, &mut s, &mut rng).unwrap(), i as usize);
        }
        assert!(store.is_ready());
        assert_eq!(store.occupancy(), 4);
    }

    #[test]
    fn sampling_requires_warm_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = sampler(3, 1.0, 0.1);
        let mut store = WeightedStore::new(&s);
        store.insert(0u32, &mut s, &mut rng).unwrap();
        assert_eq!(
            store.sample_indices(&s, 2, &mut rng),
            Err(AesError::NotReady {
                occupancy: 1,
                capacity: 3
            })
        );
        let mut store = full_store(&mut s, &mut rng);
        assert!(store.sample_indices(&s, 0, &mut rng).unwrap().is_empty());
        store.rebuild_index(&s);
        assert_eq!(store.sample_indices(&s, 5, &mut rng).unwrap().len(), 5);
    }

    #[test]
    fn single_slot_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = sampler(1, 3.0, 0.0);
        let mut store = full_store(&mut s, &mut rng);
        assert_eq!(store.index().total(), 3f64.sqrt());
        assert_eq!(store.insert(9, &mut s, &mut rng).unwrap(), 0);
        assert_eq!(store.get(0), Some(&9));
        assert_eq!(store.sample_indices(&s, 4, &mut rng).unwrap(), vec![0; 4]);
    }

    #[test]
    fn sampled_feedback_matches_explicit_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = sampler(5, 0.5, 0.2);
        let mut store_a = full_store(&mut a, &mut rng);
        let mut b = a.clone();
        let mut store_b = store_a.clone();
        let fb = [(0, 2.0), (3, 0.5), (0, 1.0)];
        let p = store_b.distribution(&b).unwrap();
        store_b.apply_feedback(&mut b, &fb, &p).unwrap();
        store_a.apply_sampled_feedback(&mut a, &fb).unwrap();
        for (x, y) in a.accumulators().iter().zip(b.accumulators()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.step(), 1);
        assert!(store_a.apply_sampled_feedback(&mut a, &[(5, 1.0)]).is_err());
    }

    #[test]
    fn eviction_clears_accumulator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = sampler(4, 1.0, 0.0);
        let mut store = full_store(&mut s, &mut rng);
        let p = store.distribution(&s).unwrap();
        store
            .apply_feedback(&mut s, &[(0, 5.0), (1, 3.0), (2, 1.0), (3, 7.0)], &p)
            .unwrap();
        let victim = store.insert(99, &mut s, &mut rng).unwrap();
        assert_eq!(s.accumulators()[victim], 0.0);
        assert_eq!(store.get(victim), Some(&99));
        assert!(store.index_deviation(&s) < 1e-15);
        let p = store.distribution(&s).unwrap();
        let expected = s.distribution().unwrap();
        for (a, b) in p.probs().iter().zip(expected.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complement_victim_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = SimplexDistribution::new(vec![0.9, 0.1]).unwrap();
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| sample_complement(2, |j| p.get(j), &mut rng) == 0)
            .count();
        let freq = hits as f64 / draws as f64;
        let sigma = (0.1 * 0.9 / draws as f64).sqrt();
        assert!((freq - 0.1).abs() < 4.0 * sigma, "freq {freq}");
    }

    #[test]
    fn overwrite_follows_store_distribution() {
        // w = [80, 0], nu = 1, kappa = 0 gives p = [0.9, 0.1]
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SamplerConfig::new(2).with_nu(1.0).with_kappa(0.0);
        let draws = 40_000;
        let mut first = 0;
        for _ in 0..draws {
            let mut s = SamplerState::with_accumulators(cfg, vec![80.0, 0.0], 0).unwrap();
            let mut store = WeightedStore::new(&s);
            store.slots = vec![Some(0u8), Some(1)];
            store.occupancy = 2;
            if store.insert(7, &mut s, &mut rng).unwrap() == 0 {
                first += 1;
            }
        }
        let freq = first as f64 / draws as f64;
        let sigma = (0.1 * 0.9 / draws as f64).sqrt();
        assert!((freq - 0.1).abs() < 4.0 * sigma, "freq {freq}");
    }

    #[test]
    fn uniform_complement_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = SimplexDistribution::uniform(5);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[sample_complement(5, |j| p.get(j), &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 50_000.0 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn reset_rebuilds_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SamplerConfig::new(8)
            .with_nu(1.0)
            .with_kappa(0.1)
            .with_reset(2, ResetMode::Soft { rho: 0.5 });
        let mut s = SamplerState::new(cfg).unwrap();
        let mut store = full_store(&mut s, &mut rng);
        for _ in 0..2 {
            let p = store.distribution(&s).unwrap();
            let idx = store.sample_indices(&s, 3, &mut rng).unwrap();
            let fb: Vec<_> = idx.iter().map(|&i| (i, (i + 1) as f64)).collect();
            store.apply_feedback(&mut s, &fb, &p).unwrap();
        }
        assert!(store.maybe_reset(&mut s));
        assert!(store.index_deviation(&s) < 1e-15);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = sampler(5, 2.0, 0.2);
        let mut store = full_store(&mut s, &mut rng);
        let p = store.distribution(&s).unwrap();
        store.apply_feedback(&mut s, &[(1, 2.0), (3, 0.5)], &p).unwrap();
        let mut buf = Vec::new();
        store.write_snapshot(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"format\":\"aes-store-snapshot\",\"version\":1,"));
        let (restored, s2) = WeightedStore::<u32>::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(s2.accumulators(), s.accumulators());
        assert_eq!(restored.index().nodes(), store.index().nodes());
        assert_eq!(restored.iter().collect::<Vec<_>>(), store.iter().collect::<Vec<_>>());
    }

    #[test]
    fn snapshot_rejects_other_versions() {
        let mut s = sampler(1, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let store = full_store(&mut s, &mut rng);
        let mut buf = Vec::new();
        store.write_snapshot(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":2");
        assert!(WeightedStore::<u32>::read_snapshot(text.as_bytes()).is_err());
    }
}
