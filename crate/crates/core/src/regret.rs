//! Competitor distributions, regret accounting and synthetic loss sequences.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};
use crate::estimators::{importance_ratio_capped, variance_objective, DEFAULT_LOG_RATIO_CAP};
use crate::policy::PolicyModel;
use crate::sampler::{SamplerConfig, SamplerState};
use crate::simplex::SimplexDistribution;
use crate::trajectory::Trajectory;

/// Probability floor applied to degenerate competitors before evaluating `f`.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// Schema tag written as the first comment line of ledger CSVs.
pub const LEDGER_CSV_SCHEMA: &str = "aes-ledger/1";

pub const LEDGER_CSV_HEADER: &str =
    "seed,t,realized_cost,static_opt_cum,dynamic_opt_cum,regret_static,regret_dynamic";

/// A `T x n` matrix of per-step, per-slot losses `d_t(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSequence {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl LossSequence {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        for row in &rows {
            check_row(row, n)?;
        }
        Ok(Self { n, rows })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for row in &self.rows {
            sums.iter_mut().zip(row).for_each(|(s, d)| *s += d);
        }
        sums
    }
}

fn check_row(row: &[f64], n: usize) -> Result<()> {
    if row.len() != n {
        return Err(AesError::Dimension {
            expected: n,
            got: row.len(),
        });
    }
    if let Some(slot) = row.iter().position(|d| !d.is_finite() || *d < 0.0) {
        return Err(AesError::InvalidData {
            slot,
            reason: format!("loss {} is not a non-negative finite number", row[slot]),
        });
    }
    Ok(())
}

/// A competitor distribution. `degenerate` marks competitors with zero-mass
/// slots, or the uniform fallback for an all-zero input.
#[derive(Debug, Clone, PartialEq)]
pub struct Competitor {
    pub p: SimplexDistribution,
    pub degenerate: bool,
}

impl Competitor {
    /// The distribution with every probability raised to at least `eps` and
    /// renormalized.
    pub fn floored(&self, eps: f64) -> SimplexDistribution {
        let raised: Vec<f64> = self.p.probs().iter().map(|q| q.max(eps)).collect();
        SimplexDistribution::from_weights(&raised).expect("floored weights are positive")
    }

    /// `f(p) = sum_i d(i) / p(i)` at the floored competitor.
    pub fn cost(&self, d: &[f64]) -> Result<f64> {
        variance_objective(d, &self.floored(DEGENERATE_FLOOR))
    }
}

fn sqrt_competitor(mass: &[f64]) -> Result<Competitor> {
    check_row(mass, mass.len())?;
    if mass.is_empty() {
        return Err(AesError::EmptyBatch);
    }
    if mass.iter().all(|m| *m == 0.0) {
        return Ok(Competitor {
            p: SimplexDistribution::uniform(mass.len()),
            degenerate: true,
        });
    }
    let roots: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    Ok(Competitor {
        p: SimplexDistribution::from_weights(&roots)?,
        degenerate: mass.contains(&0.0),
    })
}

/// Best fixed distribution for the whole sequence: `p*(i) ∝ sqrt(sum_t d_t(i))`.
pub fn static_competitor(seq: &LossSequence) -> Result<Competitor> {
    sqrt_competitor(&seq.column_sums())
}

/// Best distribution for a single step: `p_t*(i) ∝ sqrt(d_t(i))`.
pub fn dynamic_competitor(row: &[f64]) -> Result<Competitor> {
    sqrt_competitor(row)
}

/// `min_p sum_i c(i) / p(i) = (sum_i sqrt(c(i)))^2`.
pub fn optimal_cost(c: &[f64]) -> f64 {
    let s: f64 = c.iter().map(|x| x.sqrt()).sum();
    s * s
}

/// One ledger line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub seed: u64,
    pub t: usize,
    pub realized_cost: f64,
    pub static_opt_cum: f64,
    pub dynamic_opt_cum: f64,
    pub regret_static: f64,
    pub regret_dynamic: f64,
}

/// Per-step realized cost `f_t(p_t)` and both competitor benchmarks.
///
/// The static optimum is tracked for every prefix so regret can be read at
/// any horizon. Regrets are divided by `n^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    seed: u64,
    n: usize,
    col_sums: Vec<f64>,
    realized: Vec<f64>,
    static_opt_cum: Vec<f64>,
    dynamic_opt: Vec<f64>,
}

impl RegretLedger {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            seed,
            n,
            col_sums: vec![0.0; n],
            realized: Vec::new(),
            static_opt_cum: Vec::new(),
            dynamic_opt: Vec::new(),
        }
    }

    /// Records the loss row of one step and the cost the learner paid on it.
    pub fn push(&mut self, d: &[f64], realized: f64) -> Result<()> {
        check_row(d, self.n)?;
        self.col_sums.iter_mut().zip(d).for_each(|(s, x)| *s += x);
        self.realized.push(realized);
        self.static_opt_cum.push(optimal_cost(&self.col_sums));
        self.dynamic_opt.push(optimal_cost(d));
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.realized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized.is_empty()
    }

    pub fn realized(&self) -> &[f64] {
        &self.realized
    }

    pub fn dynamic_opt(&self) -> &[f64] {
        &self.dynamic_opt
    }

    /// `min_p sum_t f_t(p)` over the full recorded horizon.
    pub fn static_opt(&self) -> f64 {
        self.static_opt_cum.last().copied().unwrap_or(0.0)
    }

    fn norm(&self) -> f64 {
        (self.n * self.n) as f64
    }

    pub fn cumulative_static(&self) -> f64 {
        (self.realized.iter().sum::<f64>() - self.static_opt()) / self.norm()
    }

    pub fn cumulative_dynamic(&self) -> f64 {
        (self.realized.iter().sum::<f64>() - self.dynamic_opt.iter().sum::<f64>()) / self.norm()
    }

    pub fn rows(&self) -> Vec<LedgerRow> {
        let norm = self.norm();
        let mut realized_cum = 0.0;
        let mut dynamic_cum = 0.0;
        (0..self.len())
            .map(|t| {
                realized_cum += self.realized[t];
                dynamic_cum += self.dynamic_opt[t];
                LedgerRow {
                    seed: self.seed,
                    t,
                    realized_cost: self.realized[t],
                    static_opt_cum: self.static_opt_cum[t],
                    dynamic_opt_cum: dynamic_cum,
                    regret_static: (realized_cum - self.static_opt_cum[t]) / norm,
                    regret_dynamic: (realized_cum - dynamic_cum) / norm,
                }
            })
            .collect()
    }

    /// Writes the schema line and header (if requested) and one line per step.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        let io = |e: std::io::Error| AesError::Snapshot(e.to_string());
        if header {
            writeln!(out, "# schema={LEDGER_CSV_SCHEMA}").map_err(io)?;
            writeln!(out, "{LEDGER_CSV_HEADER}").map_err(io)?;
        }
        for r in self.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.seed,
                r.t,
                r.realized_cost,
                r.static_opt_cum,
                r.dynamic_opt_cum,
                r.regret_static,
                r.regret_dynamic
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// One step of a synthetic loss sequence. `replaced` lists slots whose
/// content was overwritten just before this step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub d: Vec<f64>,
    pub replaced: Vec<usize>,
}

pub trait LossGenerator {
    fn width(&self) -> usize;
    fn next_row(&mut self, t: usize, rng: &mut dyn RngCore) -> LossRow;
}

/// The same row at every step.
#[derive(Debug, Clone)]
pub struct StationaryLosses {
    pub row: Vec<f64>,
}

impl LossGenerator for StationaryLosses {
    fn width(&self) -> usize {
        self.row.len()
    }

    fn next_row(&mut self, _t: usize, _rng: &mut dyn RngCore) -> LossRow {
        LossRow {
            d: self.row.clone(),
            replaced: Vec::new(),
        }
    }
}

/// Draws `count` base levels log-uniformly from `[lo, hi]`.
pub fn log_uniform_levels(count: usize, lo: f64, hi: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|_| rng.gen_range(a..=b).exp()).collect()
}

/// Bounded losses in `[0, bound]` chosen without regard to the learner.
///
/// Each slot is active independently with a slot-specific probability; an
/// active slot reports a uniform draw scaled by its level.
#[derive(Debug, Clone)]
pub struct BoundedNoisyLosses {
    pub levels: Vec<f64>,
    pub activity: Vec<f64>,
}

impl LossGenerator for BoundedNoisyLosses {
    fn width(&self) -> usize {
        self.levels.len()
    }

    fn next_row(&mut self, _t: usize, rng: &mut dyn RngCore) -> LossRow {
        let d = self
            .levels
            .iter()
            .zip(&self.activity)
            .map(|(l, a)| {
                if rng.gen::<f64>() < *a {
                    l * rng.gen::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        LossRow {
            d,
            replaced: Vec::new(),
        }
    }
}

/// Noisy losses around per-slot levels, where every `epoch` steps
/// `replace_per_epoch` slots (in round-robin order) receive fresh levels.
/// This mimics a buffer whose oldest entries are overwritten by new data.
#[derive(Debug, Clone)]
pub struct DriftingLosses {
    pub levels: Vec<f64>,
    pub noise: f64,
    pub epoch: usize,
    pub replace_per_epoch: usize,
    pub level_range: (f64, f64),
    cursor: usize,
}

impl DriftingLosses {
    pub fn new(
        levels: Vec<f64>,
        noise: f64,
        epoch: usize,
        replace_per_epoch: usize,
        level_range: (f64, f64),
    ) -> Self {
        Self {
            levels,
            noise,
            epoch: epoch.max(1),
            replace_per_epoch,
            level_range,
            cursor: 0,
        }
    }
}

impl LossGenerator for DriftingLosses {
    fn width(&self) -> usize {
        self.levels.len()
    }

    fn next_row(&mut self, t: usize, rng: &mut dyn RngCore) -> LossRow {
        let n = self.levels.len();
        let mut replaced = Vec::new();
        if t > 0 && t.is_multiple_of(self.epoch) {
            let (lo, hi) = self.level_range;
            for _ in 0..self.replace_per_epoch.min(n) {
                let slot = self.cursor;
                self.levels[slot] = log_uniform_levels(1, lo, hi, rng)[0];
                replaced.push(slot);
                self.cursor = (self.cursor + 1) % n;
            }
        }
        let d = self
            .levels
            .iter()
            .map(|l| l * (1.0 + self.noise * (2.0 * rng.gen::<f64>() - 1.0)))
            .collect();
        LossRow { d, replaced }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feedback {
    /// Every slot's loss is revealed after each step.
    Full,
    /// Only `batch` slots drawn from `p_t` are revealed, importance weighted.
    Bandit { batch: usize },
}

/// When accumulated feedback is discarded during a regret experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetPattern {
    Never,
    /// The sampler's own periodic reset; replaced slots are cleared
    /// individually when they are overwritten.
    Periodic,
    /// Every accumulator is zeroed whenever new data arrives.
    OnArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretExperiment {
    pub sampler: SamplerConfig,
    pub horizon: usize,
    pub feedback: Feedback,
    pub reset: ResetPattern,
}

/// Runs the FTRL sampler against one generated sequence.
pub fn run_regret_trial<G: LossGenerator + ?Sized, R: RngCore>(
    generator: &mut G,
    experiment: &RegretExperiment,
    seed: u64,
    rng: &mut R,
) -> Result<RegretLedger> {
    let n = generator.width();
    if n != experiment.sampler.buffer_capacity {
        return Err(AesError::Dimension {
            expected: experiment.sampler.buffer_capacity,
            got: n,
        });
    }
    let mut sampler = SamplerState::new(experiment.sampler)?;
    let mut ledger = RegretLedger::new(n, seed);
    for t in 0..experiment.horizon {
        let row = generator.next_row(t, rng);
        if !row.replaced.is_empty() {
            match experiment.reset {
                ResetPattern::OnArrival => sampler.clear(),
                _ => row.replaced.iter().for_each(|&j| sampler.clear_slot(j)),
            }
        }
        let p = sampler.distribution()?;
        ledger.push(&row.d, variance_objective(&row.d, &p)?)?;
        match experiment.feedback {
            Feedback::Full => sampler.record_full_feedback(&row.d)?,
            Feedback::Bandit { batch } => {
                let pick = WeightedIndex::new(p.probs())
                    .map_err(|e| AesError::Numeric(e.to_string()))?;
                let fb: Vec<(usize, f64)> = (0..batch)
                    .map(|_| {
                        let i = pick.sample(rng);
                        (i, row.d[i] / batch as f64)
                    })
                    .collect();
                sampler.record_feedback(&fb, &p)?;
            }
        }
        if experiment.reset == ResetPattern::Periodic {
            sampler.maybe_reset();
        }
    }
    Ok(ledger)
}

/// Runs one trial per seed; `make` builds the generator and RNG for a seed.
pub fn run_regret_experiment<G, R, F>(
    make: F,
    experiment: &RegretExperiment,
    seeds: &[u64],
) -> Result<Vec<RegretLedger>>
where
    G: LossGenerator,
    R: RngCore,
    F: Fn(u64) -> (G, R),
{
    seeds
        .iter()
        .map(|&seed| {
            let (mut generator, mut rng) = make(seed);
            run_regret_trial(&mut generator, experiment, seed, &mut rng)
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(AesError::EmptyBatch);
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(AesError::Numeric("log-log fit needs positive values".into()));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(AesError::Numeric("log-log fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Constants of the per-sample loss bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Lower bound on behavior-policy action probabilities.
    pub beta: f64,
    /// Bound on `||grad log pi||` per step.
    pub lipschitz: f64,
    /// Bound on `|r|`.
    pub zeta: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl BoundConstants {
    pub fn omega_bound(&self) -> f64 {
        self.beta.powi(-(self.horizon as i32))
    }

    pub fn score_bound(&self) -> f64 {
        self.horizon as f64 * self.lipschitz
    }

    pub fn return_bound(&self) -> f64 {
        if self.gamma == 1.0 {
            self.zeta * self.horizon as f64
        } else {
            self.zeta * (1.0 - self.gamma.powi(self.horizon as i32)) / (1.0 - self.gamma)
        }
    }

    /// `[zeta (1 - gamma^H) / (beta^H (1 - gamma)) H L]^2`.
    pub fn d_bound(&self) -> f64 {
        let b = self.return_bound() * self.omega_bound() * self.score_bound();
        b * b
    }
}

/// The three factors of `d = omega^2 ||grad log p||^2 R^2` for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundObservation {
    pub omega: f64,
    pub score_norm: f64,
    pub ret: f64,
}

impl BoundObservation {
    pub fn d(&self) -> f64 {
        (self.omega * self.score_norm * self.ret).powi(2)
    }

    pub fn from_trajectory(traj: &Trajectory, target: &PolicyModel, gamma: f64) -> Result<Self> {
        let omega = importance_ratio_capped(traj, target, DEFAULT_LOG_RATIO_CAP)?.omega;
        let mut score = vec![0.0; target.n_params()];
        for s in traj.steps() {
            target.accumulate_grad_log_prob(s.state, s.action, 1.0, &mut score);
        }
        Ok(Self {
            omega,
            score_norm: score.iter().map(|x| x * x).sum::<f64>().sqrt(),
            ret: traj.discounted_return(gamma),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub holds: bool,
    pub bound: f64,
    pub max_d: f64,
    pub omega_ok: bool,
    pub score_ok: bool,
    pub return_ok: bool,
    pub violations: usize,
}

/// Checks every observed `d` against the bound, and each factor against its
/// own bound. A relative slack of `1e-12` absorbs rounding.
pub fn check_loss_bound(obs: &[BoundObservation], c: &BoundConstants) -> BoundReport {
    let slack = 1.0 + 1e-12;
    let bound = c.d_bound();
    let mut report = BoundReport {
        holds: true,
        bound,
        max_d: 0.0,
        omega_ok: true,
        score_ok: true,
        return_ok: true,
        violations: 0,
    };
    for o in obs {
        let d = o.d();
        report.max_d = report.max_d.max(d);
        if d > bound * slack {
            report.holds = false;
            report.violations += 1;
        }
        report.omega_ok &= o.omega <= c.omega_bound() * slack;
        report.score_ok &= o.score_norm <= c.score_bound() * slack;
        report.return_ok &= o.ret.abs() <= c.return_bound() * slack;
    }
    report
}

/// Bandit-feedback mixing coefficient `(n / T)^(1/3)`, clipped to `[0, 1]`.
pub fn bandit_kappa(n: usize, horizon: usize) -> f64 {
    (n as f64 / horizon as f64).cbrt().min(1.0)
}

/// Reset period `floor(sqrt(T) / c)`, at least 1.
pub fn reset_period_for(horizon: usize, c: f64) -> u64 {
    ((horizon as f64).sqrt() / c).floor().max(1.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_simplex_min, InverseWeighted};
    use crate::sampler::ResetMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn static_two_slot() {
        let seq = LossSequence::new(vec![vec![4.0, 1.0]]).unwrap();
        let c = static_competitor(&seq).unwrap();
        assert!(close(c.p.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        assert!(!c.degenerate);
    }

    #[test]
    fn equal_columns_give_uniform() {
        let seq = LossSequence::new(vec![vec![1.0, 3.0, 2.0], vec![3.0, 1.0, 2.0]]).unwrap();
        let c = static_competitor(&seq).unwrap();
        assert!(close(c.p.probs(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn all_zero_is_degenerate_uniform() {
        let seq = LossSequence::new(vec![vec![0.0; 4]; 3]).unwrap();
        let c = static_competitor(&seq).unwrap();
        assert!(c.degenerate);
        assert!(close(c.p.probs(), &[0.25; 4], 0.0));
    }

    #[test]
    fn dynamic_two_slot_and_single_mass() {
        let c = dynamic_competitor(&[4.0, 1.0]).unwrap();
        assert!(close(c.p.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let c = dynamic_competitor(&[0.0, 5.0, 0.0]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.p.probs(), &[0.0, 1.0, 0.0]);
        let f = c.cost(&[0.0, 5.0, 0.0]).unwrap();
        assert!((f - 5.0).abs() < 1e-9);
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(LossSequence::new(vec![vec![1.0, -1.0]]).is_err());
        assert!(LossSequence::new(vec![vec![1.0, f64::NAN]]).is_err());
        assert!(LossSequence::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn static_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..10).map(|_| rng.gen_range(0.0..5.0)).collect())
                .collect();
            let seq = LossSequence::new(rows).unwrap();
            let closed = static_competitor(&seq).unwrap();
            let obj = InverseWeighted::new(seq.column_sums());
            let brute = brute_force_simplex_min(&obj, 10, 1e-6).unwrap();
            assert!(close(closed.p.probs(), &brute, 1e-6));
        }
    }

    #[test]
    fn dynamic_matches_oracle_per_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let row: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..5.0)).collect();
            let closed = dynamic_competitor(&row).unwrap();
            let brute = brute_force_simplex_min(&InverseWeighted::new(row.clone()), 10, 1e-6).unwrap();
            assert!(close(closed.p.probs(), &brute, 1e-6));
        }
    }

    #[test]
    fn optimal_cost_matches_competitor_cost() {
        let row = [3.0, 0.5, 2.0, 7.0];
        let c = dynamic_competitor(&row).unwrap();
        let f = variance_objective(&row, &c.p).unwrap();
        assert!((f - optimal_cost(&row)).abs() < 1e-9 * f);
    }

    #[test]
    fn ledger_rows_and_normalization() {
        let mut ledger = RegretLedger::new(2, 7);
        ledger.push(&[4.0, 1.0], 10.0).unwrap();
        ledger.push(&[4.0, 1.0], 9.5).unwrap();
        assert!((ledger.static_opt() - 18.0).abs() < 1e-12);
        assert_eq!(ledger.dynamic_opt(), &[9.0, 9.0]);
        assert!((ledger.cumulative_static() - 1.5 / 4.0).abs() < 1e-12);
        assert!((ledger.cumulative_dynamic() - 1.5 / 4.0).abs() < 1e-12);
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema=aes-ledger/1");
        assert_eq!(lines[1], LEDGER_CSV_HEADER);
        assert!(lines[2].starts_with("7,0,10,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn stationary_full_information_is_sublinear() {
        let row = vec![9.0, 1.0, 4.0, 0.25];
        let cfg = SamplerConfig::new(4)
            .with_nu(1.0)
            .with_kappa(0.0)
            .with_reset(u64::MAX, ResetMode::Hard);
        let per_t = |horizon: usize| {
            let exp = RegretExperiment {
                sampler: cfg,
                horizon,
                feedback: Feedback::Full,
                reset: ResetPattern::Never,
            };
            let mut g = StationaryLosses { row: row.clone() };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let l = run_regret_trial(&mut g, &exp, 0, &mut rng).unwrap();
            assert!(l.cumulative_static() >= 0.0);
            assert!(l.cumulative_dynamic() >= l.cumulative_static() - 1e-9);
            l.cumulative_static() / horizon as f64
        };
        assert!(per_t(4000) < per_t(1000));
    }

    #[test]
    fn drifting_generator_replaces_round_robin() {
        let mut g = DriftingLosses::new(vec![1.0; 4], 0.0, 2, 3, (1.0, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(g.next_row(0, &mut rng).replaced.is_empty());
        assert!(g.next_row(1, &mut rng).replaced.is_empty());
        assert_eq!(g.next_row(2, &mut rng).replaced, vec![0, 1, 2]);
        assert_eq!(g.next_row(4, &mut rng).replaced, vec![3, 0, 1]);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(0.7))).collect();
        assert!((log_log_slope(&pts).unwrap() - 0.7).abs() < 1e-12);
        assert!(log_log_slope(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn bound_expression_example() {
        let c = BoundConstants {
            beta: 0.5,
            lipschitz: 2.0,
            zeta: 1.0,
            gamma: 0.9,
            horizon: 1,
        };
        assert!((c.d_bound() - 16.0).abs() < 1e-12);
        let obs = [BoundObservation {
            omega: 2.0,
            score_norm: 2.0,
            ret: 1.0,
        }];
        let r = check_loss_bound(&obs, &c);
        assert!(r.holds && r.omega_ok && r.score_ok && r.return_ok);
        assert_eq!(r.max_d, 16.0);
        let over = [BoundObservation {
            omega: 2.5,
            score_norm: 2.0,
            ret: 1.0,
        }];
        let r = check_loss_bound(&over, &c);
        assert!(!r.holds && !r.omega_ok && r.violations == 1);
    }

    #[test]
    fn schedule_helpers() {
        assert!((bandit_kappa(64, 512) - 0.5).abs() < 1e-12);
        assert_eq!(bandit_kappa(10, 5), 1.0);
        assert_eq!(reset_period_for(4000, 4.5), 14);
        assert_eq!(reset_period_for(1, 100.0), 1);
    }
}
