//! Learning-curve summaries over a group of seeded traces.
//!
//! All windows are measured in evaluation points. With `N` points, the
//! "last 60%" window holds the final `ceil(0.6 N)` points and the "last 20%"
//! window the final `ceil(0.2 N)`.

use std::path::Path;

use aes_core::training::{TRACE_CSV_HEADER, TRACE_CSV_SCHEMA};
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const METRICS_CSV_SCHEMA: &str = "aes-metrics/1";
pub const METRICS_CSV_HEADER: &str =
    "variant,env,mode,seeds,learning_speed,max_score,learning_stability,robustness,final_performance";

/// One seed's evaluation scores, `(step, score)` in step order.
pub type Curve = Vec<(u64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    /// `max_score` divided by the step where it is first reached.
    pub learning_speed: f64,
    /// Largest smoothed mean score within the last 60% of points.
    pub max_score: f64,
    /// Mean smoothed score over the last 20% of points, over `max_score`.
    pub learning_stability: f64,
    /// Mean across-seed standard deviation over the last 20% of points.
    pub robustness: f64,
    /// Mean across seeds of the final evaluation.
    pub final_performance: f64,
}

/// Trailing moving average; the first `window - 1` points average what is available.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, x) in xs.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn tail_start(n: usize, frac: f64) -> usize {
    n - ((frac * n as f64).ceil() as usize).clamp(1, n)
}

pub fn compute_metrics(curves: &[Curve], window: usize) -> Result<MetricsRow> {
    let first = curves.first().ok_or_else(|| HarnessError::Metrics("no traces".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(HarnessError::Metrics("empty trace".into()));
    }
    if window == 0 || n < window {
        return Err(HarnessError::Metrics(format!(
            "trace has {n} points, shorter than the window {window}"
        )));
    }
    for c in curves {
        if c.len() != n || c.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(HarnessError::Metrics("traces disagree on evaluation steps".into()));
        }
    }
    let k = curves.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| curves.iter().map(|c| c[i].1).sum::<f64>() / k).collect();
    let smooth = moving_average(&mean, window);

    let s60 = tail_start(n, 0.6);
    let (arg, max_score) = smooth[s60..]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let step = first[s60 + arg].0;
    if step == 0 {
        return Err(HarnessError::Metrics("maximum reached at step 0".into()));
    }

    let s20 = tail_start(n, 0.2);
    let end_mean = smooth[s20..].iter().sum::<f64>() / (n - s20) as f64;
    let learning_stability = if max_score == 0.0 { 1.0 } else { end_mean / max_score };
    let robustness = (s20..n)
        .map(|i| {
            if curves.len() < 2 {
                return 0.0;
            }
            let var = curves.iter().map(|c| (c[i].1 - mean[i]).powi(2)).sum::<f64>() / (k - 1.0);
            var.sqrt()
        })
        .sum::<f64>()
        / (n - s20) as f64;
    Ok(MetricsRow {
        learning_speed: max_score / step as f64,
        max_score,
        learning_stability,
        robustness,
        final_performance: mean[n - 1],
    })
}

/// A trace CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub seed: u64,
    pub mode: String,
    pub env: String,
    /// Value of the `# variant=` comment, `base` when absent.
    pub variant: String,
    pub curve: Curve,
}

pub fn parse_trace(text: &str, origin: &str) -> Result<TraceFile> {
    let bad = |reason: String| HarnessError::Trace {
        path: origin.to_string(),
        reason,
    };
    let mut variant = crate::config::BASE_VARIANT.to_string();
    let mut schema_ok = false;
    let mut header_seen = false;
    let mut ident: Option<(u64, String, String)> = None;
    let mut curve = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix("# ") {
            if let Some(s) = comment.strip_prefix("schema=") {
                if s != TRACE_CSV_SCHEMA {
                    return Err(bad(format!("unsupported schema {s:?}")));
                }
                schema_ok = true;
            } else if let Some(v) = comment.strip_prefix("variant=") {
                variant = v.to_string();
            }
            continue;
        }
        if !header_seen {
            if line != TRACE_CSV_HEADER {
                return Err(bad(format!("unexpected header {line:?}")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(format!("line {}: expected 8 columns", lineno + 1)));
        }
        let parse_err = |what: &str| bad(format!("line {}: bad {what}", lineno + 1));
        let seed: u64 = cols[0].parse().map_err(|_| parse_err("seed"))?;
        let step: u64 = cols[3].parse().map_err(|_| parse_err("step"))?;
        let score: f64 = cols[4].parse().map_err(|_| parse_err("episodic_test_return"))?;
        let id = (seed, cols[1].to_string(), cols[2].to_string());
        match &ident {
            None => ident = Some(id),
            Some(prev) if *prev != id => return Err(bad(format!("line {}: mixed seed/mode/env", lineno + 1))),
            _ => {}
        }
        if curve.last().is_some_and(|&(s, _)| s >= step) {
            return Err(bad(format!("line {}: steps must increase", lineno + 1)));
        }
        curve.push((step, score));
    }
    if !schema_ok {
        return Err(bad("missing schema line".into()));
    }
    let (seed, mode, env) = ident.ok_or_else(|| bad("no data rows".into()))?;
    Ok(TraceFile {
        seed,
        mode,
        env,
        variant,
        curve,
    })
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Groups traces by `(variant, env, mode)` and renders one metrics row per
/// group, in sorted key order.
pub fn metrics_csv(traces: &[TraceFile], window: usize) -> Result<String> {
    let mut groups: std::collections::BTreeMap<(String, String, String), Vec<&TraceFile>> = Default::default();
    for t in traces {
        groups
            .entry((t.variant.clone(), t.env.clone(), t.mode.clone()))
            .or_default()
            .push(t);
    }
    let mut out = format!("# schema={METRICS_CSV_SCHEMA}\n# window={window}\n{METRICS_CSV_HEADER}\n");
    for ((variant, env, mode), members) in groups {
        let curves: Vec<Curve> = members.iter().map(|t| t.curve.clone()).collect();
        let m = compute_metrics(&curves, window)
            .map_err(|e| HarnessError::Metrics(format!("{variant}/{env}/{mode}: {e}")))?;
        out.push_str(&format!(
            "{variant},{env},{mode},{},{},{},{},{},{}\n",
            members.len(),
            m.learning_speed,
            m.max_score,
            m.learning_stability,
            m.robustness,
            m.final_performance
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(scores: &[f64]) -> Curve {
        scores.iter().enumerate().map(|(i, &s)| ((i as u64 + 1) * 10, s)).collect()
    }

    #[test]
    fn moving_average_is_trailing() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[5.0], 3), vec![5.0]);
    }

    #[test]
    fn window_boundaries() {
        assert_eq!(tail_start(10, 0.6), 4);
        assert_eq!(tail_start(10, 0.2), 8);
        assert_eq!(tail_start(3, 0.2), 2);
        assert_eq!(tail_start(1, 0.6), 0);
    }

    #[test]
    fn rejects_short_and_empty() {
        assert!(compute_metrics(&[], 1).is_err());
        assert!(compute_metrics(&[vec![]], 1).is_err());
        assert!(compute_metrics(&[curve(&[1.0, 2.0])], 3).is_err());
        assert!(compute_metrics(&[curve(&[1.0, 2.0]), curve(&[1.0])], 1).is_err());
    }
}
