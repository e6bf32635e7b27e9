//! Comparison statistics over trajectory sets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::HarnessError;
use crate::channel::ChannelParams;
use crate::models::{GraphInput, MflModel};
use crate::optimize::Trajectory;

pub const HISTOGRAM_BINS: usize = 20;
/// Fraction dropped from each tail for the truncated averages.
pub const TRUNCATE_FRACTION: f64 = 0.1;
/// Fraction dropped from each tail for the truncated model-error average.
pub const FIDELITY_TRUNCATE_FRACTION: f64 = 0.01;

/// Six significant digits.
pub fn fmt6(v: f64) -> String {
    format!("{v:.5e}")
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean after dropping `⌊fraction·N⌋` values from each end of the sorted data.
pub fn truncated_mean(v: &[f64], fraction: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = (fraction * s.len() as f64).floor() as usize;
    if 2 * k >= s.len() {
        return mean(&s);
    }
    mean(&s[k..s.len() - k])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Fixed-width bins over the observed range. A zero-width range is widened
/// to `±0.5` around its value.
pub fn histogram(v: &[f64], bins: usize) -> Histogram {
    let (mut lo, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if v.is_empty() {
        (lo, hi) = (0.0, 0.0);
    }
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &x in v {
        let b = (((x - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

/// One method measured against the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub method: String,
    pub n: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub avg_diff: f64,
    pub avg_rel_diff: f64,
    pub trunc_avg_diff: f64,
    pub trunc_avg_rel_diff: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub count: usize,
    pub avg_rel_err: f64,
    pub trunc_avg_rel_err: f64,
    pub median_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub baseline: String,
    /// Deployment ids, ascending.
    pub deployments: Vec<usize>,
    /// Final max-flow per method, aligned with `deployments`.
    pub finals: BTreeMap<String, Vec<f64>>,
    pub initials: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub fidelity: Option<Fidelity>,
}

fn finals_by_id(label: &str, trajs: &[Trajectory]) -> Result<BTreeMap<usize, (f64, f64)>, HarnessError> {
    let mut m = BTreeMap::new();
    for t in trajs {
        if m.insert(t.deployment_id, (t.initial_flow(), t.final_flow())).is_some() {
            return Err(HarnessError::Data(format!("{label}: deployment {} appears twice", t.deployment_id)));
        }
    }
    Ok(m)
}

/// Compares each labelled trajectory set against `baseline` (which must be
/// one of the labels). All sets must cover the same deployment ids.
pub fn evaluate(runs: &[(String, Vec<Trajectory>)], baseline: &str) -> Result<EvalReport, HarnessError> {
    let base_runs = runs
        .iter()
        .find(|(l, _)| l == baseline)
        .ok_or_else(|| HarnessError::Data(format!("baseline {baseline:?} not among the trajectory sets")))?;
    let base = finals_by_id(baseline, &base_runs.1)?;
    let deployments: Vec<usize> = base.keys().copied().collect();
    let base_finals: Vec<f64> = base.values().map(|v| v.1).collect();
    let initials: Vec<f64> = base.values().map(|v| v.0).collect();

    let mut finals = BTreeMap::new();
    let mut comparisons = Vec::new();
    for (label, trajs) in runs {
        let m = finals_by_id(label, trajs)?;
        if m.keys().ne(base.keys()) {
            return Err(HarnessError::Data(format!(
                "{label} covers a different deployment set than {baseline}"
            )));
        }
        let f: Vec<f64> = m.values().map(|v| v.1).collect();
        let diffs: Vec<f64> = f.iter().zip(&base_finals).map(|(a, b)| a - b).collect();
        let rel: Vec<f64> = diffs
            .iter()
            .zip(&base_finals)
            .map(|(d, b)| if *b != 0.0 { d / b } else { 0.0 })
            .collect();
        comparisons.push(Comparison {
            method: label.clone(),
            n: f.len(),
            wins: diffs.iter().filter(|&&d| d > 0.0).count(),
            losses: diffs.iter().filter(|&&d| d < 0.0).count(),
            ties: diffs.iter().filter(|&&d| d == 0.0).count(),
            avg_diff: mean(&diffs),
            avg_rel_diff: mean(&rel),
            trunc_avg_diff: truncated_mean(&diffs, TRUNCATE_FRACTION),
            trunc_avg_rel_diff: truncated_mean(&rel, TRUNCATE_FRACTION),
            histogram: histogram(&diffs, HISTOGRAM_BINS),
        });
        finals.insert(label.clone(), f);
    }
    Ok(EvalReport { baseline: baseline.into(), deployments, finals, initials, comparisons, fidelity: None })
}

/// Relative error of MFL predictions against the recorded max-flow of every
/// state in the given trajectories.
pub fn mfl_fidelity(model: &MflModel, params: &ChannelParams, trajs: &[Trajectory]) -> Result<Fidelity, HarnessError> {
    let mut errs = Vec::new();
    for t in trajs {
        for s in &t.steps {
            if s.max_flow == 0.0 {
                continue;
            }
            let pred = model.predict(&GraphInput::from_deployment(params, &s.deployment)?)?;
            errs.push((pred - s.max_flow).abs() / s.max_flow.abs());
        }
    }
    Ok(fidelity_from(&errs))
}

pub fn fidelity_from(errs: &[f64]) -> Fidelity {
    let mut s = errs.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if s.is_empty() {
        0.0
    } else if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    };
    Fidelity {
        count: s.len(),
        avg_rel_err: mean(&s),
        trunc_avg_rel_err: truncated_mean(&s, FIDELITY_TRUNCATE_FRACTION),
        median_rel_err: median,
    }
}

impl EvalReport {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "method,baseline,n,wins,losses,ties,avg_diff,avg_rel_diff,trunc_avg_diff,trunc_avg_rel_diff\n",
        );
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.method,
                self.baseline,
                c.n,
                c.wins,
                c.losses,
                c.ties,
                fmt6(c.avg_diff),
                fmt6(c.avg_rel_diff),
                fmt6(c.trunc_avg_diff),
                fmt6(c.trunc_avg_rel_diff)
            );
        }
        out
    }

    pub fn finals_csv(&self) -> String {
        let labels: Vec<&String> = self.finals.keys().collect();
        let mut out = String::from("deployment,initial");
        for l in &labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (row, id) in self.deployments.iter().enumerate() {
            let _ = write!(out, "{id},{}", fmt6(self.initials[row]));
            for l in &labels {
                let _ = write!(out, ",{}", fmt6(self.finals[*l][row]));
            }
            out.push('\n');
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("method,bin,lower,upper,count\n");
        for c in &self.comparisons {
            for (b, count) in c.histogram.counts.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{b},{},{},{count}",
                    c.method,
                    fmt6(c.histogram.edges[b]),
                    fmt6(c.histogram.edges[b + 1])
                );
            }
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline: {}", self.baseline);
        let _ = writeln!(out, "deployments: {}", self.deployments.len());
        let _ = writeln!(out, "relative difference denominator: baseline final max-flow");
        let _ = writeln!(out, "truncated averages drop floor(0.1 N) values from each tail");
        let _ = writeln!(out, "histograms: {HISTOGRAM_BINS} fixed-width bins over the observed range");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{}: wins {} losses {} ties {} | avg diff {} | avg rel diff {} | trunc avg diff {} | trunc avg rel diff {}",
                c.method,
                c.wins,
                c.losses,
                c.ties,
                fmt6(c.avg_diff),
                fmt6(c.avg_rel_diff),
                fmt6(c.trunc_avg_diff),
                fmt6(c.trunc_avg_rel_diff)
            );
        }
        if let Some(f) = &self.fidelity {
            let _ = writeln!(
                out,
                "mfl output vs max-flow over {} states: avg rel err {} | trunc (1%) avg rel err {} | median rel err {}",
                f.count,
                fmt6(f.avg_rel_err),
                fmt6(f.trunc_avg_rel_err),
                fmt6(f.median_rel_err)
            );
        }
        out
    }

    /// Writes `summary.csv`, `finals.csv`, `histograms.csv` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        for (name, body) in [
            ("summary.csv", self.summary_csv()),
            ("finals.csv", self.finals_csv()),
            ("histograms.csv", self.histogram_csv()),
            ("summary.txt", self.summary_text()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
        }
        Ok(())
    }
}
