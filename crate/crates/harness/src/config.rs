//! Experiment specification files.
//!
//! Flat INI sections with `key = value` lines; lists are comma-separated.
//! Every key is optional and an empty file yields the defaults below.
//!
//! ```ini
//! [experiment]
//! family = rl_comparison      ; regret_synthetic | rl_comparison | variance_study | bench
//! seeds = 2,20,200,2000,20000
//! output_dir = results
//! workers = 4                 ; default: available parallelism
//!
//! [sampler]
//! kappa = 0.1
//! nu = 1000
//! reset_period = 100
//! reset = soft                ; hard | soft | annealed
//! rho = 0.9                   ; soft
//! rho_start = 0.7             ; annealed
//! rho_end = 0.2               ; annealed
//! anneal_steps = 10000        ; annealed; default: training.total_steps or the regret horizon
//! feedback_bound = 1.0        ; optional G^2 for the contribution clamp
//!
//! [training]
//! envs = grid4x4,chain5       ; grid4x4 | chain5 | bandit2
//! modes = uniform,td_priority,aes_naive,aes
//! total_steps = 10000
//! batch = 8
//! buffer = 64
//! learning_rate = 0.05
//! warmup_episodes = 64        ; default: buffer
//! updates_per_episode = 1
//! inner_updates = 1
//! eval_interval = 100
//! eval_episodes = 20
//! probe_interval = 500        ; 0 disables probes
//! probe_repeats = 256
//!
//! [regret]
//! slots = 32
//! horizons = 500,1000,2000,4000
//! feedback = bandit           ; full | bandit
//! batch = 1
//! generator = noisy           ; stationary | noisy | drifting
//! level_lo = 0.001
//! level_hi = 1
//! activity = 0.05             ; noisy
//! epoch = 2                   ; drifting
//! replace_per_epoch = 1       ; drifting
//! noise = 0.5                 ; drifting
//! mixing = horizon            ; horizon: kappa = (slots / T)^(1/3); fixed: sampler.kappa
//! reset = never               ; never | periodic | on_arrival
//! reset_c = 4.5               ; periodic: M = floor(sqrt(T) / C); default: sampler.reset_period
//!
//! [variance]
//! slots = 32
//! constructions = 50
//! states = 4
//! horizon = 4
//! reward_span = 2             ; orders of magnitude between the largest and smallest reward scale
//! batch = 4
//! feedback_rounds = 400
//! repeats = 2000
//!
//! [bench]
//! slots = 1000000
//! ops = 200000
//! batch = 32
//!
//! [metrics]
//! window = 10
//!
//! [sweep.small_lr]            ; one extra variant per sweep section
//! training.learning_rate = 0.01
//! ```
//!
//! Without sweep sections the spec has a single variant named `base`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aes_core::env::Environment;
use aes_core::regret::{Feedback, ResetPattern};
use aes_core::sampler::{
    ResetMode, SamplerConfig, DEFAULT_KAPPA, DEFAULT_NU, DEFAULT_RESET_PERIOD, DEFAULT_RHO,
};
use aes_core::training::{SelectionMode, TrainingConfig, DEFAULT_EVAL_EPISODES, DEFAULT_LEARNING_RATE};
use ini::Ini;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const DEFAULT_SEEDS: [u64; 5] = [2, 20, 200, 2000, 20000];
pub const DEFAULT_OUTPUT_DIR: &str = "results";
pub const DEFAULT_WINDOW: usize = 10;
pub const BASE_VARIANT: &str = "base";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RegretSynthetic,
    RlComparison,
    VarianceStudy,
    Bench,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::RegretSynthetic => "regret_synthetic",
            Family::RlComparison => "rl_comparison",
            Family::VarianceStudy => "variance_study",
            Family::Bench => "bench",
        }
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            Family::RegretSynthetic,
            Family::RlComparison,
            Family::VarianceStudy,
            Family::Bench,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| format!("unknown family {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Grid4x4,
    Chain5,
    Bandit2,
}

impl EnvName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::Grid4x4 => "grid4x4",
            EnvName::Chain5 => "chain5",
            EnvName::Bandit2 => "bandit2",
        }
    }

    /// The 4x4 grid starts top-left, has its goal bottom-right and one trap
    /// at cell 6; both chain and grid use horizon 10.
    pub fn build(&self) -> Environment {
        match self {
            EnvName::Grid4x4 => Environment::gridworld(4, 4, 15, vec![6], 10),
            EnvName::Chain5 => Environment::chain(5, 10),
            EnvName::Bandit2 => Environment::two_state_bandit([1.0, 0.0]),
        }
        .expect("built-in environments are valid")
    }
}

impl FromStr for EnvName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [EnvName::Grid4x4, EnvName::Chain5, EnvName::Bandit2]
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown environment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetKind {
    Hard,
    Soft,
    Annealed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerSettings {
    pub kappa: f64,
    pub nu: f64,
    pub reset_period: u64,
    pub reset: ResetKind,
    pub rho: f64,
    pub rho_start: f64,
    pub rho_end: f64,
    pub anneal_steps: Option<u64>,
    pub feedback_bound: Option<f64>,
}

impl SamplerSettings {
    /// `default_anneal` is used when `anneal_steps` is not set.
    pub fn to_config(&self, capacity: usize, default_anneal: u64) -> SamplerConfig {
        let mode = match self.reset {
            ResetKind::Hard => ResetMode::Hard,
            ResetKind::Soft => ResetMode::Soft { rho: self.rho },
            ResetKind::Annealed => ResetMode::AnnealedSoft {
                rho_start: self.rho_start,
                rho_end: self.rho_end,
                total_steps: self.anneal_steps.unwrap_or(default_anneal),
            },
        };
        let cfg = SamplerConfig::new(capacity)
            .with_nu(self.nu)
            .with_kappa(self.kappa)
            .with_reset(self.reset_period, mode);
        match self.feedback_bound {
            Some(g2) => cfg.with_feedback_bound(g2),
            None => cfg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSettings {
    pub envs: Vec<EnvName>,
    pub modes: Vec<SelectionMode>,
    pub total_steps: u64,
    pub batch: usize,
    pub buffer: usize,
    pub learning_rate: f64,
    pub warmup_episodes: Option<usize>,
    pub updates_per_episode: usize,
    pub inner_updates: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub probe_interval: u64,
    pub probe_repeats: usize,
}

impl TrainingSettings {
    pub fn to_config(&self, sampler: &SamplerSettings, mode: SelectionMode, seed: u64) -> TrainingConfig {
        let mut c = TrainingConfig::new(self.buffer, self.batch, mode, seed);
        c.total_steps = self.total_steps;
        c.learning_rate = self.learning_rate;
        c.sampler = sampler.to_config(self.buffer, self.total_steps);
        c.warmup_episodes = self.warmup_episodes.unwrap_or(self.buffer);
        c.updates_per_episode = self.updates_per_episode;
        c.inner_updates = self.inner_updates;
        c.eval_interval = self.eval_interval;
        c.eval_episodes = self.eval_episodes;
        c.probe_interval = self.probe_interval;
        c.probe_repeats = self.probe_repeats;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Stationary,
    Noisy,
    Drifting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// `kappa = (slots / T)^(1/3)`.
    Horizon,
    /// `sampler.kappa`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSettings {
    pub slots: usize,
    pub horizons: Vec<usize>,
    pub feedback: Feedback,
    pub generator: GeneratorKind,
    pub level_lo: f64,
    pub level_hi: f64,
    pub activity: f64,
    pub epoch: usize,
    pub replace_per_epoch: usize,
    pub noise: f64,
    pub mixing: Mixing,
    pub reset: ResetPattern,
    pub reset_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSettings {
    pub slots: usize,
    pub constructions: usize,
    pub states: usize,
    pub horizon: usize,
    pub reward_span: f64,
    pub batch: usize,
    pub feedback_rounds: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSettings {
    pub slots: usize,
    pub ops: usize,
    pub batch: usize,
}

/// Everything a single variant needs to run its cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub sampler: SamplerSettings,
    pub training: TrainingSettings,
    pub regret: RegretSettings,
    pub variance: VarianceSettings,
    pub bench: BenchSettings,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    pub variants: Vec<Variant>,
}

impl ExperimentSpec {
    pub fn defaults() -> Self {
        parse_str("").expect("defaults are valid")
    }

    pub fn base(&self) -> &Settings {
        &self.variants[0].settings
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_str(&text)
}

/// Flattened `section.key -> value` entries that are consumed as they are read.
#[derive(Debug, Clone, Default)]
struct Entries(BTreeMap<String, String>);

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .trim()
                .parse::<T>()
                .map(Some)
                .map_err(|e| HarnessError::config(key, format!("cannot parse {raw:?}: {e}"))),
        }
    }

    fn get<T>(&mut self, key: &str, default: T, ok: impl Fn(&T) -> bool, expect: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
        T: FromStr + std::fmt::Debug,
    {
        let v = self.take(key)?.unwrap_or(default);
        if ok(&v) {
            Ok(v)
        } else {
            Err(HarnessError::config(key, format!("{v:?} out of range, expected {expect}")))
        }
    }

    fn opt<T: FromStr + std::fmt::Debug>(&mut self, key: &str, ok: impl Fn(&T) -> bool, expect: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take::<T>(key)? {
            Some(v) if !ok(&v) => Err(HarnessError::config(key, format!("{v:?} out of range, expected {expect}"))),
            other => Ok(other),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.0.remove(key) else {
            return Ok(default);
        };
        let items: Vec<T> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| HarnessError::config(key, format!("item {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if items.is_empty() {
            return Err(HarnessError::config(key, "list is empty"));
        }
        Ok(items)
    }

    fn finish(self) -> Result<()> {
        match self.0.into_keys().next() {
            Some(key) => Err(HarnessError::config(key, "unknown key")),
            None => Ok(()),
        }
    }
}

fn unit(x: &f64) -> bool {
    (0.0..=1.0).contains(x)
}

fn positive(x: &f64) -> bool {
    x.is_finite() && *x > 0.0
}

fn at_least_one<T: PartialOrd + From<u8>>(x: &T) -> bool {
    *x >= T::from(1)
}

fn parse_feedback(kind: &str, batch: usize) -> std::result::Result<Feedback, String> {
    match kind {
        "full" => Ok(Feedback::Full),
        "bandit" => Ok(Feedback::Bandit { batch }),
        other => Err(format!("unknown feedback {other:?}")),
    }
}

fn build_settings(mut e: Entries) -> Result<Settings> {
    let reset = match e.take::<String>("sampler.reset")?.as_deref() {
        None | Some("soft") => ResetKind::Soft,
        Some("hard") => ResetKind::Hard,
        Some("annealed") => ResetKind::Annealed,
        Some(other) => return Err(HarnessError::config("sampler.reset", format!("unknown reset mode {other:?}"))),
    };
    let sampler = SamplerSettings {
        kappa: e.get("sampler.kappa", DEFAULT_KAPPA, unit, "[0, 1]")?,
        nu: e.get("sampler.nu", DEFAULT_NU, positive, "a positive number")?,
        reset_period: e.get("sampler.reset_period", DEFAULT_RESET_PERIOD, at_least_one, ">= 1")?,
        reset,
        rho: e.get("sampler.rho", DEFAULT_RHO, unit, "[0, 1]")?,
        rho_start: e.get("sampler.rho_start", 0.7, unit, "[0, 1]")?,
        rho_end: e.get("sampler.rho_end", 0.2, unit, "[0, 1]")?,
        anneal_steps: e.opt("sampler.anneal_steps", at_least_one, ">= 1")?,
        feedback_bound: e.opt("sampler.feedback_bound", positive, "a positive number")?,
    };

    let envs = e.list("training.envs", vec![EnvName::Grid4x4, EnvName::Chain5])?;
    let modes = e.list("training.modes", SelectionMode::ALL.to_vec())?;
    let buffer: usize = e.get("training.buffer", 64, at_least_one, ">= 1")?;
    let batch: usize = e.get("training.batch", 8, |b| *b >= 1 && *b <= buffer, "between 1 and training.buffer")?;
    let training = TrainingSettings {
        envs,
        modes,
        total_steps: e.get("training.total_steps", 10_000, at_least_one, ">= 1")?,
        batch,
        buffer,
        learning_rate: e.get("training.learning_rate", DEFAULT_LEARNING_RATE, positive, "a positive number")?,
        warmup_episodes: e.opt("training.warmup_episodes", |w: &usize| *w >= buffer, ">= training.buffer")?,
        updates_per_episode: e.get("training.updates_per_episode", 1, |_| true, "")?,
        inner_updates: e.get("training.inner_updates", 1, |_| true, "")?,
        eval_interval: e.get("training.eval_interval", 100, at_least_one, ">= 1")?,
        eval_episodes: e.get("training.eval_episodes", DEFAULT_EVAL_EPISODES, at_least_one, ">= 1")?,
        probe_interval: e.get("training.probe_interval", 500, |_| true, "")?,
        probe_repeats: e.get("training.probe_repeats", 256, |r| *r >= 2, ">= 2")?,
    };
    if training.modes.contains(&SelectionMode::AesNaive) && training.inner_updates * batch >= buffer {
        return Err(HarnessError::config(
            "training.inner_updates",
            "inner_updates * batch must stay below buffer for aes_naive",
        ));
    }

    let slots: usize = e.get("regret.slots", 32, at_least_one, ">= 1")?;
    let regret_batch: usize = e.get("regret.batch", 1, at_least_one, ">= 1")?;
    let feedback = match e.take::<String>("regret.feedback")? {
        None => Feedback::Bandit { batch: regret_batch },
        Some(kind) => parse_feedback(&kind, regret_batch).map_err(|r| HarnessError::config("regret.feedback", r))?,
    };
    let generator = match e.take::<String>("regret.generator")?.as_deref() {
        None | Some("noisy") => GeneratorKind::Noisy,
        Some("stationary") => GeneratorKind::Stationary,
        Some("drifting") => GeneratorKind::Drifting,
        Some(other) => return Err(HarnessError::config("regret.generator", format!("unknown generator {other:?}"))),
    };
    let mixing = match e.take::<String>("regret.mixing")?.as_deref() {
        None | Some("horizon") => Mixing::Horizon,
        Some("fixed") => Mixing::Fixed,
        Some(other) => return Err(HarnessError::config("regret.mixing", format!("unknown mixing {other:?}"))),
    };
    let regret_reset = match e.take::<String>("regret.reset")?.as_deref() {
        None | Some("never") => ResetPattern::Never,
        Some("periodic") => ResetPattern::Periodic,
        Some("on_arrival") => ResetPattern::OnArrival,
        Some(other) => return Err(HarnessError::config("regret.reset", format!("unknown reset pattern {other:?}"))),
    };
    let level_lo: f64 = e.get("regret.level_lo", 1e-3, positive, "a positive number")?;
    let regret = RegretSettings {
        slots,
        horizons: e.list("regret.horizons", vec![500, 1000, 2000, 4000])?,
        feedback,
        generator,
        level_lo,
        level_hi: e.get("regret.level_hi", 1.0, |h: &f64| h.is_finite() && *h >= level_lo, ">= regret.level_lo")?,
        activity: e.get("regret.activity", 0.05, unit, "[0, 1]")?,
        epoch: e.get("regret.epoch", 2, at_least_one, ">= 1")?,
        replace_per_epoch: e.get("regret.replace_per_epoch", 1, |r| *r <= slots, "<= regret.slots")?,
        noise: e.get("regret.noise", 0.5, unit, "[0, 1]")?,
        mixing,
        reset: regret_reset,
        reset_c: e.opt("regret.reset_c", positive, "a positive number")?,
    };
    if regret.horizons.contains(&0) {
        return Err(HarnessError::config("regret.horizons", "horizons must be positive"));
    }

    let variance_slots: usize = e.get("variance.slots", 32, |s| *s >= 2, ">= 2")?;
    let variance = VarianceSettings {
        slots: variance_slots,
        constructions: e.get("variance.constructions", 50, at_least_one, ">= 1")?,
        states: e.get("variance.states", 4, at_least_one, ">= 1")?,
        horizon: e.get("variance.horizon", 4, at_least_one, ">= 1")?,
        reward_span: e.get("variance.reward_span", 2.0, |s: &f64| s.is_finite() && *s >= 0.0, ">= 0")?,
        batch: e.get("variance.batch", 4, at_least_one, ">= 1")?,
        feedback_rounds: e.get("variance.feedback_rounds", 400, |_| true, "")?,
        repeats: e.get("variance.repeats", 2000, |r| *r >= 2, ">= 2")?,
    };

    let bench = BenchSettings {
        slots: e.get("bench.slots", 1_000_000, at_least_one, ">= 1")?,
        ops: e.get("bench.ops", 200_000, at_least_one, ">= 1")?,
        batch: e.get("bench.batch", 32, at_least_one, ">= 1")?,
    };
    let window = e.get("metrics.window", DEFAULT_WINDOW, at_least_one, ">= 1")?;
    e.finish()?;
    Ok(Settings {
        sampler,
        training,
        regret,
        variance,
        bench,
        window,
    })
}

const SETTING_SECTIONS: [&str; 6] = ["sampler", "training", "regret", "variance", "bench", "metrics"];

pub fn parse_str(text: &str) -> Result<ExperimentSpec> {
    let ini = Ini::load_from_str(text).map_err(|e| HarnessError::config("<file>", e.to_string()))?;
    let mut experiment = Entries::default();
    let mut settings = Entries::default();
    let mut sweeps: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((key, _)) = props.iter().next() {
                return Err(HarnessError::config(key, "key outside a section"));
            }
            continue;
        };
        if let Some(name) = section.strip_prefix("sweep.") {
            if name.is_empty() || name == BASE_VARIANT || sweeps.iter().any(|(n, _)| n == name) {
                return Err(HarnessError::config(section, "sweep names must be unique, non-empty and not `base`"));
            }
            sweeps.push((name.to_string(), props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()));
            continue;
        }
        let target = match section {
            "experiment" => &mut experiment,
            s if SETTING_SECTIONS.contains(&s) => &mut settings,
            other => return Err(HarnessError::config(other, "unknown section")),
        };
        for (k, v) in props.iter() {
            let key = format!("{section}.{k}");
            if target.0.insert(key.clone(), v.to_string()).is_some() {
                return Err(HarnessError::config(key, "duplicate key"));
            }
        }
    }

    let family = experiment.take::<Family>("experiment.family")?.unwrap_or(Family::RlComparison);
    let seeds = experiment.list("experiment.seeds", DEFAULT_SEEDS.to_vec())?;
    let output_dir = experiment
        .take::<String>("experiment.output_dir")?
        .unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string());
    let workers = experiment.opt("experiment.workers", at_least_one, ">= 1")?;
    experiment.finish()?;

    let mut variants = vec![Variant {
        name: BASE_VARIANT.to_string(),
        settings: build_settings(settings.clone())?,
    }];
    for (name, overrides) in sweeps {
        let mut entries = settings.clone();
        for (key, value) in overrides {
            let section = key.split('.').next().unwrap_or_default();
            if !SETTING_SECTIONS.contains(&section) || !key.contains('.') {
                return Err(HarnessError::config(format!("sweep.{name}.{key}"), "overrides must name section.key"));
            }
            entries.0.insert(key, value);
        }
        let settings = build_settings(entries).map_err(|e| match e {
            HarnessError::Config { key, reason } => HarnessError::config(format!("sweep.{name}: {key}"), reason),
            other => other,
        })?;
        variants.push(Variant { name, settings });
    }
    Ok(ExperimentSpec {
        family,
        seeds,
        output_dir: PathBuf::from(output_dir),
        workers,
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_key(text: &str) -> String {
        match parse_str(text) {
            Err(HarnessError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let spec = parse_str("").unwrap();
        assert_eq!(spec.family, Family::RlComparison);
        assert_eq!(spec.seeds, DEFAULT_SEEDS.to_vec());
        let s = spec.base();
        assert_eq!(s.sampler.kappa, 0.1);
        assert_eq!(s.sampler.nu, 1000.0);
        assert_eq!(s.sampler.reset, ResetKind::Soft);
        assert_eq!(s.sampler.rho, 0.9);
        assert_eq!(s.window, 10);
        assert_eq!(spec.variants.len(), 1);
    }

    #[test]
    fn annealed_settings_are_accepted() {
        let spec = parse_str("[sampler]\nkappa=0.2\nnu=10000\nreset=annealed\nrho_start=0.7\nrho_end=0.2\n").unwrap();
        let cfg = spec.base().sampler.to_config(8, 1000);
        assert_eq!(cfg.kappa, 0.2);
        assert_eq!(cfg.nu, 10000.0);
        assert_eq!(
            cfg.reset_mode,
            ResetMode::AnnealedSoft {
                rho_start: 0.7,
                rho_end: 0.2,
                total_steps: 1000
            }
        );
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(err_key("[sampler]\nkappa=1.5\n"), "sampler.kappa");
        assert_eq!(err_key("[sampler]\nkapa=0.5\n"), "sampler.kapa");
        assert_eq!(err_key("[sampler]\nnu=-1\n"), "sampler.nu");
        assert_eq!(err_key("[training]\nbatch=100\n"), "training.batch");
        assert_eq!(err_key("[training]\nenvs=maze\n"), "training.envs");
        assert_eq!(err_key("[experiment]\nseeds=\n"), "experiment.seeds");
        assert_eq!(err_key("[nope]\nx=1\n"), "nope");
        assert_eq!(err_key("[experiment]\nfamily=poker\n"), "experiment.family");
        assert_eq!(err_key("[sweep.a]\ntraining.batch=0\n"), "sweep.a: training.batch");
    }

    #[test]
    fn sweeps_add_variants() {
        let spec = parse_str("[training]\nlearning_rate=0.1\n[sweep.slow]\ntraining.learning_rate=0.01\n").unwrap();
        assert_eq!(spec.variants.len(), 2);
        assert_eq!(spec.variants[0].settings.training.learning_rate, 0.1);
        assert_eq!(spec.variants[1].name, "slow");
        assert_eq!(spec.variants[1].settings.training.learning_rate, 0.01);
    }
}
