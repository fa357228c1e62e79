//! Cross-mode comparison report: overhead relative to Baseline and
//! flushed-line savings relative to Naive.

use crate::error::Error;
use crate::sim::{Mode, SimReport};

#[derive(Clone, Debug)]
pub struct ModeSummary {
    pub mode: Mode,
    pub total_cycles: u64,
    /// (mode_cycles - baseline_cycles) / baseline_cycles.
    pub overhead_pct: f64,
    pub lines_flushed: u64,
    /// 1 - lines_flushed / naive_lines_flushed, clamped to [0, 1].
    /// None when the comparison does not include Naive.
    pub flush_savings_vs_naive: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub rows: Vec<ModeSummary>,
}

impl ComparisonReport {
    /// Build from per-mode runs of identical traces. Requires at least two
    /// modes, one of which is Baseline.
    pub fn from_runs(runs: &[(Mode, SimReport)]) -> Result<Self, Error> {
        if runs.len() < 2 {
            return Err(Error::Config(
                "comparison needs at least two modes including baseline".into(),
            ));
        }
        let baseline_cycles = runs
            .iter()
            .find(|(m, _)| *m == Mode::Baseline)
            .map(|(_, r)| r.total_cycles)
            .ok_or_else(|| Error::Config("comparison must include baseline".into()))?;
        let naive_flushed = runs
            .iter()
            .find(|(m, _)| *m == Mode::Naive)
            .map(|(_, r)| r.total_lines_flushed());

        let rows = runs
            .iter()
            .map(|(mode, report)| {
                let flushed = report.total_lines_flushed();
                let overhead_pct = if baseline_cycles == 0 {
                    0.0
                } else {
                    (report.total_cycles as f64 - baseline_cycles as f64)
                        / baseline_cycles as f64
                };
                let flush_savings_vs_naive = naive_flushed.map(|n| {
                    if n == 0 {
                        0.0
                    } else {
                        (1.0 - flushed as f64 / n as f64).clamp(0.0, 1.0)
                    }
                });
                ModeSummary {
                    mode: *mode,
                    total_cycles: report.total_cycles,
                    overhead_pct,
                    lines_flushed: flushed,
                    flush_savings_vs_naive,
                }
            })
            .collect();
        Ok(ComparisonReport { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("mode,total_cycles,overhead_pct,lines_flushed,flush_savings_vs_naive\n");
        for row in &self.rows {
            let savings = row
                .flush_savings_vs_naive
                .map(|s| format!("{s:.4}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.4},{},{}\n",
                row.mode, row.total_cycles, row.overhead_pct, row.lines_flushed, savings
            ));
        }
        out
    }
}
