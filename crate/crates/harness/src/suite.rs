//! Runs every cell of an experiment spec and writes its artifacts.
//!
//! Layout under the output directory:
//!
//! - `cells/<variant>/...` one CSV per cell (trace, ledger, variance or bench)
//! - `<cell>.failed` next to the cell path when a cell fails
//! - `metrics.csv` (rl_comparison), `regret_summary.csv`, `variance_summary.csv`
//! - `manifest.json`
//!
//! Cell files are rendered in memory and are byte-identical across reruns of
//! the same spec and seeds; bench timings are the exception.

use std::fs;
use std::path::{Path, PathBuf};

use aes_core::regret::{log_log_slope, LEDGER_CSV_HEADER, LEDGER_CSV_SCHEMA};
use aes_core::training::SelectionMode;
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{bench_csv, run_bench};
use crate::config::{EnvName, ExperimentSpec, Family, Settings};
use crate::error::{HarnessError, Result};
use crate::metrics::{metrics_csv, parse_trace};
use crate::seeding::{cell_seed, GENERATOR_ID};
use crate::studies::{regret_ledger, regret_plan, rl_config, rl_stream, rl_trace, variance_construction};

pub const MANIFEST_SCHEMA: &str = "aes-manifest/1";
pub const VARIANCE_CSV_SCHEMA: &str = "aes-variance/1";
pub const VARIANCE_CSV_HEADER: &str = "seed,construction,d_min,d_max,variance_learned,variance_uniform";
pub const REGRET_SUMMARY_SCHEMA: &str = "aes-regret-summary/1";
pub const REGRET_SUMMARY_HEADER: &str =
    "variant,horizon,seed,kappa,reset_period,regret_static,regret_dynamic,regret_static_per_t,regret_dynamic_per_t";
pub const REGRET_SLOPES_SCHEMA: &str = "aes-regret-slopes/1";
pub const REGRET_SLOPES_HEADER: &str = "variant,horizons,slope_static,slope_dynamic";
pub const ENV_OUTPUT_ROOT: &str = "AES_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKind {
    Rl { env: EnvName, mode: SelectionMode },
    Regret { horizon: usize },
    Variance,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub variant: usize,
    pub seed: u64,
    pub kind: CellKind,
}

impl Cell {
    pub fn path(&self, spec: &ExperimentSpec) -> PathBuf {
        let variant = &spec.variants[self.variant].name;
        let file = match &self.kind {
            CellKind::Rl { env, mode } => format!("{}/{}_seed{}.csv", env.as_str(), mode.as_str(), self.seed),
            CellKind::Regret { horizon } => format!("regret/T{horizon}_seed{}.csv", self.seed),
            CellKind::Variance => format!("variance/seed{}.csv", self.seed),
            CellKind::Bench => format!("bench/seed{}.csv", self.seed),
        };
        Path::new("cells").join(variant).join(file)
    }

    /// Stream name hashed with the seed; shared across variants and modes.
    pub fn stream(&self) -> String {
        match &self.kind {
            CellKind::Rl { env, .. } => rl_stream(*env),
            CellKind::Regret { .. } => "regret/trial".into(),
            CellKind::Variance => "variance".into(),
            CellKind::Bench => "bench".into(),
        }
    }
}

pub fn plan_cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (vi, variant) in spec.variants.iter().enumerate() {
        let s = &variant.settings;
        let kinds: Vec<CellKind> = match spec.family {
            Family::RlComparison => s
                .training
                .envs
                .iter()
                .flat_map(|&env| s.training.modes.iter().map(move |&mode| CellKind::Rl { env, mode }))
                .collect(),
            Family::RegretSynthetic => s.regret.horizons.iter().map(|&horizon| CellKind::Regret { horizon }).collect(),
            Family::VarianceStudy => vec![CellKind::Variance],
            Family::Bench => vec![CellKind::Bench],
        };
        for kind in kinds {
            for &seed in &spec.seeds {
                cells.push(Cell {
                    variant: vi,
                    seed,
                    kind: kind.clone(),
                });
            }
        }
    }
    cells
}

fn echo_lines(spec: &ExperimentSpec, cell: &Cell, extra: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![
        format!("family={}", spec.family.as_str()),
        format!("variant={}", spec.variants[cell.variant].name),
        format!("seed={}", cell.seed),
        format!("cell_seed={}", cell_seed(cell.seed, &cell.stream())),
        format!("generator={GENERATOR_ID}"),
    ];
    lines.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
    lines
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("settings serialize")
}

/// Per-cell values kept for the aggregate files.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSummary {
    Rl,
    Regret {
        kappa: f64,
        reset_period: u64,
        regret_static: f64,
        regret_dynamic: f64,
    },
    Variance(Vec<String>),
    Bench,
}

/// Renders one cell to bytes without touching the filesystem.
pub fn render_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<(Vec<u8>, CellSummary)> {
    let settings: &Settings = &spec.variants[cell.variant].settings;
    let mut out = Vec::new();
    match &cell.kind {
        CellKind::Rl { env, mode } => {
            let cfg = rl_config(settings, *env, *mode, cell.seed);
            let trace = rl_trace(settings, *env, *mode, cell.seed)?;
            let echo = echo_lines(spec, cell, &[("training", json(&cfg))]);
            trace.write_csv(&mut out, &echo)?;
            Ok((out, CellSummary::Rl))
        }
        CellKind::Regret { horizon } => {
            let plan = regret_plan(settings, *horizon, cell.seed);
            let ledger = regret_ledger(settings, *horizon, cell.seed)?;
            let mut text = format!("# schema={LEDGER_CSV_SCHEMA}\n");
            for line in echo_lines(spec, cell, &[("regret", json(&settings.regret)), ("plan", json(&plan))]) {
                text.push_str(&format!("# {line}\n"));
            }
            text.push_str(LEDGER_CSV_HEADER);
            text.push('\n');
            out.extend_from_slice(text.as_bytes());
            ledger.write_csv(&mut out, false)?;
            Ok((
                out,
                CellSummary::Regret {
                    kappa: plan.experiment.sampler.kappa,
                    reset_period: plan.experiment.sampler.reset_period,
                    regret_static: ledger.cumulative_static(),
                    regret_dynamic: ledger.cumulative_dynamic(),
                },
            ))
        }
        CellKind::Variance => {
            let mut text = format!("# schema={VARIANCE_CSV_SCHEMA}\n");
            for line in echo_lines(spec, cell, &[("variance", json(&settings.variance)), ("sampler", json(&settings.sampler))]) {
                text.push_str(&format!("# {line}\n"));
            }
            text.push_str(VARIANCE_CSV_HEADER);
            text.push('\n');
            let mut rows = Vec::new();
            for k in 0..settings.variance.constructions {
                let o = variance_construction(settings, cell.seed, k)?;
                let row = format!("{},{},{},{},{},{}", cell.seed, k, o.d_min, o.d_max, o.learned, o.uniform);
                text.push_str(&row);
                text.push('\n');
                rows.push(row);
            }
            out.extend_from_slice(text.as_bytes());
            Ok((out, CellSummary::Variance(rows)))
        }
        CellKind::Bench => {
            let rows = run_bench(&settings.bench, &settings.sampler, cell_seed(cell.seed, &cell.stream()))?;
            out.extend_from_slice(bench_csv(&settings.bench, &rows).as_bytes());
            Ok((out, CellSummary::Bench))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub file: String,
    pub variant: String,
    pub seed: u64,
    pub cell_seed: u64,
    pub cell: CellKind,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub family: Family,
    pub seeds: Vec<u64>,
    pub generator: &'static str,
    pub code_version: String,
    pub spec: ExperimentSpec,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub failed: usize,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn failure_marker(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".failed");
    PathBuf::from(name)
}

fn aggregate(spec: &ExperimentSpec, cells: &[Cell], results: &[Option<(Vec<u8>, CellSummary)>]) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    let ok = || cells.iter().zip(results).filter_map(|(c, r)| r.as_ref().map(|r| (c, r)));
    match spec.family {
        Family::RlComparison => {
            let traces = ok()
                .map(|(c, (bytes, _))| parse_trace(&String::from_utf8_lossy(bytes), &c.path(spec).display().to_string()))
                .collect::<Result<Vec<_>>>()?;
            if !traces.is_empty() {
                files.push(("metrics.csv".to_string(), metrics_csv(&traces, spec.base().window)?));
            }
        }
        Family::RegretSynthetic => {
            let mut text = format!("# schema={REGRET_SUMMARY_SCHEMA}\n{REGRET_SUMMARY_HEADER}\n");
            let mut slopes = format!("# schema={REGRET_SLOPES_SCHEMA}\n{REGRET_SLOPES_HEADER}\n");
            for (vi, variant) in spec.variants.iter().enumerate() {
                let mut per_h: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
                for (c, (_, summary)) in ok().filter(|(c, _)| c.variant == vi) {
                    let (CellKind::Regret { horizon }, CellSummary::Regret { kappa, reset_period, regret_static, regret_dynamic }) = (&c.kind, summary) else {
                        continue;
                    };
                    let t = *horizon as f64;
                    text.push_str(&format!(
                        "{},{horizon},{},{kappa},{reset_period},{regret_static},{regret_dynamic},{},{}\n",
                        variant.name,
                        c.seed,
                        regret_static / t,
                        regret_dynamic / t
                    ));
                    match per_h.iter_mut().find(|(h, _)| h == horizon) {
                        Some((_, v)) => v.push((*regret_static, *regret_dynamic)),
                        None => per_h.push((*horizon, vec![(*regret_static, *regret_dynamic)])),
                    }
                }
                if per_h.len() >= 2 {
                    let mean = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
                    let fit = |f: fn(&(f64, f64)) -> f64| {
                        let pts: Vec<(f64, f64)> = per_h.iter().map(|(h, v)| (*h as f64, mean(v, f))).collect();
                        log_log_slope(&pts).map(|s| s.to_string()).unwrap_or_else(|_| "nan".into())
                    };
                    let hs: Vec<String> = per_h.iter().map(|(h, _)| h.to_string()).collect();
                    slopes.push_str(&format!("{},{},{},{}\n", variant.name, hs.join(" "), fit(|x| x.0), fit(|x| x.1)));
                }
            }
            files.push(("regret_summary.csv".to_string(), text));
            files.push(("regret_slopes.csv".to_string(), slopes));
        }
        Family::VarianceStudy => {
            let mut text = format!("# schema={VARIANCE_CSV_SCHEMA}\nvariant,{VARIANCE_CSV_HEADER}\n");
            for (c, (_, summary)) in ok() {
                if let CellSummary::Variance(rows) = summary {
                    for row in rows {
                        text.push_str(&format!("{},{row}\n", spec.variants[c.variant].name));
                    }
                }
            }
            files.push(("variance_summary.csv".to_string(), text));
        }
        Family::Bench => {}
    }
    Ok(files)
}

/// Resolves the output directory: explicit override, then the
/// `AES_OUTPUT_ROOT` environment variable, then the spec.
pub fn resolve_output(spec: &ExperimentSpec, explicit: Option<&Path>) -> PathBuf {
    match (explicit, std::env::var_os(ENV_OUTPUT_ROOT)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(root)) => PathBuf::from(root),
        (None, None) => spec.output_dir.clone(),
    }
}

/// Runs every cell on a bounded pool, then writes aggregates and the manifest.
/// Failed cells leave a `.failed` marker with the error and make the call
/// return [`HarnessError::CellsFailed`] after all artifacts are written.
pub fn run_suite(spec: &ExperimentSpec, out_dir: &Path, workers: Option<usize>) -> Result<SuiteReport> {
    let cells = plan_cells(spec);
    let threads = workers
        .or(spec.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::config("experiment.workers", e.to_string()))?;
    let outcomes: Vec<Result<(Vec<u8>, CellSummary)>> =
        pool.install(|| cells.par_iter().map(|c| render_cell(spec, c)).collect());

    let mut records = Vec::with_capacity(cells.len());
    let mut results = Vec::with_capacity(cells.len());
    let mut failed = 0;
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let rel = cell.path(spec);
        let path = out_dir.join(&rel);
        let marker = failure_marker(&path);
        let status = match outcome {
            Ok((bytes, summary)) => {
                write(&path, &bytes)?;
                if marker.exists() {
                    fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))?;
                }
                results.push(Some((bytes, summary)));
                "ok".to_string()
            }
            Err(e) => {
                failed += 1;
                write(&marker, format!("{e}\n").as_bytes())?;
                results.push(None);
                format!("failed: {e}")
            }
        };
        records.push(CellRecord {
            file: rel.to_string_lossy().replace('\\', "/"),
            variant: spec.variants[cell.variant].name.clone(),
            seed: cell.seed,
            cell_seed: cell_seed(cell.seed, &cell.stream()),
            cell: cell.kind.clone(),
            status,
        });
    }

    let mut aggregates = Vec::new();
    for (name, text) in aggregate(spec, &cells, &results)? {
        write(&out_dir.join(&name), text.as_bytes())?;
        aggregates.push(name);
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        family: spec.family,
        seeds: spec.seeds.clone(),
        generator: GENERATOR_ID,
        code_version: format!("aes-harness {}", env!("CARGO_PKG_VERSION")),
        spec: spec.clone(),
        cells: records,
        aggregates,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&out_dir.join("manifest.json"), text.as_bytes())?;
    if failed > 0 {
        return Err(HarnessError::CellsFailed {
            failed,
            total: cells.len(),
        });
    }
    Ok(SuiteReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_str;

    #[test]
    fn rl_plan_counts_modes_times_seeds() {
        let spec = parse_str("[training]\nenvs=chain5\n").unwrap();
        let cells = plan_cells(&spec);
        assert_eq!(cells.len(), 20);
        let paths: std::collections::BTreeSet<PathBuf> = cells.iter().map(|c| c.path(&spec)).collect();
        assert_eq!(paths.len(), 20);
    }

    #[test]
    fn modes_share_a_stream() {
        let spec = parse_str("[training]\nenvs=chain5\n").unwrap();
        let cells = plan_cells(&spec);
        let same_seed: Vec<&Cell> = cells.iter().filter(|c| c.seed == 2).collect();
        assert_eq!(same_seed.len(), 4);
        assert!(same_seed.iter().all(|c| c.stream() == "rl/chain5"));
    }

    #[test]
    fn failure_marker_sits_next_to_the_cell() {
        assert_eq!(failure_marker(Path::new("a/b.csv")), PathBuf::from("a/b.csv.failed"));
    }
}
