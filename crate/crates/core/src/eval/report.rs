//! Running trial batches and aggregating them into success-rate tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::outcome::{classify_outcome, Outcome, TrialOutcome};
use super::rollout::{run_rollout, Controller};
use super::wilson::{format_rate, wilson_ci};
use crate::error::Result;
use crate::observe::SensorConfig;
use crate::sim::{ObjectPreset, SimConfig};

/// Seed of the `i`-th evaluation trial.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(7_919).wrapping_add(1_000_000 + i as u64)
}

/// Runs `n` seeded trials in parallel; results are in trial order.
pub fn run_trials<C, F>(
    make_controller: F,
    config: &SimConfig,
    sensors: &SensorConfig,
    n: usize,
    seed: u64,
    budget: usize,
) -> Result<Vec<TrialOutcome>>
where
    C: Controller,
    F: Fn(u64) -> C + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i);
            let mut ctrl = make_controller(s);
            let r = run_rollout(&mut ctrl, config, sensors, s, budget, false)?;
            classify_outcome(&r.trajectory, config, s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample mean and standard deviation; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Preset name, or `pooled`.
    pub label: String,
    pub trials: usize,
    pub counts: BTreeMap<Outcome, usize>,
    /// Wilson 95% interval in percent.
    pub ci: Option<(f64, f64)>,
    pub success_time: Option<MeanSd>,
    pub completion_ratio: Option<MeanSd>,
}

impl ReportRow {
    pub fn count(&self, o: Outcome) -> usize {
        self.counts.get(&o).copied().unwrap_or(0)
    }

    pub fn successes(&self) -> usize {
        self.count(Outcome::Success)
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes() as f64 / self.trials as f64
        }
    }

    fn from_trials(label: &str, trials: &[&TrialOutcome]) -> Result<Self> {
        let mut counts: BTreeMap<Outcome, usize> = Outcome::ALL.iter().map(|o| (*o, 0)).collect();
        for t in trials {
            *counts.entry(t.outcome).or_default() += 1;
        }
        let n = trials.len();
        let ci = if n > 0 {
            Some(wilson_ci(counts[&Outcome::Success] as u64, n as u64, 0.95)?)
        } else {
            None
        };
        let times: Vec<f64> = trials.iter().filter_map(|t| t.success_time).collect();
        let ratios: Vec<f64> = trials.iter().map(|t| t.completion_ratio).collect();
        Ok(Self {
            label: label.to_string(),
            trials: n,
            counts,
            ci,
            success_time: MeanSd::of(&times),
            completion_ratio: MeanSd::of(&ratios),
        })
    }
}

/// Per-preset rows (in preset order) plus a pooled row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn from_trials(trials: &[TrialOutcome]) -> Result<Self> {
        if trials.is_empty() {
            return Ok(Self::default());
        }
        let mut by_preset: BTreeMap<ObjectPreset, Vec<&TrialOutcome>> = BTreeMap::new();
        for t in trials {
            by_preset.entry(t.preset).or_default().push(t);
        }
        let mut rows = by_preset
            .iter()
            .map(|(p, ts)| ReportRow::from_trials(p.name(), ts))
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<&TrialOutcome> = trials.iter().collect();
        rows.push(ReportRow::from_trials("pooled", &all)?);
        Ok(Self { rows })
    }

    pub fn pooled(&self) -> Option<&ReportRow> {
        self.rows.last()
    }

    /// Fixed-width table with one row per preset and the pooled row.
    pub fn table(&self, model: &str) -> String {
        let mut out = String::new();
        let header = [
            "model",
            "object",
            "success rate (Wilson 95% CI)",
            "collision",
            "early stop",
            "over-trace",
            "dropping",
            "success time (s)",
            "completion ratio",
        ];
        let widths = [12, 10, 28, 9, 10, 10, 8, 16, 16];
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(&header.map(String::from)));
        for row in &self.rows {
            let rate = format_rate(row.successes() as u64, row.trials as u64).unwrap_or_else(|_| "-".into());
            let ms = |m: Option<MeanSd>, prec: usize| {
                m.map_or("-".to_string(), |m| format!("{:.p$} ± {:.p$}", m.mean, m.sd, p = prec))
            };
            let cells = [
                model.to_string(),
                row.label.clone(),
                rate,
                row.count(Outcome::RobotCollision).to_string(),
                row.count(Outcome::EarlyStopping).to_string(),
                row.count(Outcome::OverTracing).to_string(),
                row.count(Outcome::ObjectDropping).to_string(),
                ms(row.success_time, 2),
                ms(row.completion_ratio, 3),
            ];
            let _ = writeln!(out, "{}", line(&cells));
        }
        out
    }
}

/// One JSON object per line.
pub fn to_jsonl(trials: &[TrialOutcome]) -> Result<String> {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> Result<Vec<TrialOutcome>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(outcome: Outcome, preset: ObjectPreset, seed: u64) -> TrialOutcome {
        TrialOutcome {
            outcome,
            success_time: (outcome == Outcome::Success).then_some(3.0 + seed as f64 * 0.1),
            completion_ratio: if outcome == Outcome::Success { 0.97 } else { 0.5 },
            contact_seen: true,
            final_arc_length: 0.45,
            steps: 100,
            seed,
            preset,
        }
    }

    #[test]
    fn empty_report_has_no_rows() {
        let r = Report::from_trials(&[]).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.table("full").lines().count(), 1);
    }

    #[test]
    fn table_one_row_shape() {
        let mut trials = Vec::new();
        for i in 0..40 {
            let o = if i < 32 { Outcome::Success } else { Outcome::ObjectDropping };
            trials.push(trial(o, ObjectPreset::ALL[i % 4], i as u64));
        }
        let r = Report::from_trials(&trials).unwrap();
        assert_eq!(r.rows.len(), 5);
        let pooled = r.pooled().unwrap();
        assert_eq!(pooled.successes(), 32);
        assert_eq!(pooled.ci, Some((65.2, 89.5)));
        assert!(r.table("full").contains("80.0% [65.2, 89.5]"));
    }

    #[test]
    fn jsonl_round_trip() {
        let trials = vec![trial(Outcome::Success, ObjectPreset::Rope, 1), trial(Outcome::OverTracing, ObjectPreset::Cable, 2)];
        assert_eq!(from_jsonl(&to_jsonl(&trials).unwrap()).unwrap(), trials);
    }

    #[test]
    fn mean_sd_sample_formula() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.sd - 1.0).abs() < 1e-12);
        assert!(MeanSd::of(&[]).is_none());
    }
}
