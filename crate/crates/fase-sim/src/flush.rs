//! The three flush mechanisms with cycle-cost accounting.
//!
//! - Naive: invalidate and clean every valid line.
//! - LLSF: per-line decision on (coherence, FaSe); lines installed or
//!   updated in the current slice (FaSe=1) are retained.
//! - CLSF: when no critical access happened since the last flush event
//!   (CLSF flag clear), the whole event is nullified; otherwise LLSF.

use crate::cache::{Cache, CoherenceState, LineMeta};
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlushMode {
    Naive,
    Llsf,
    Clsf,
}

impl FlushMode {
    pub fn name(self) -> &'static str {
        match self {
            FlushMode::Naive => "naive",
            FlushMode::Llsf => "llsf",
            FlushMode::Clsf => "clsf",
        }
    }
}

/// Per-line outcome of the selective flush decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlushAction {
    FlushLine,
    NullifyLine,
    NoAction,
}

/// Line-level flush decision table: a valid line with FaSe=1 has its
/// flush nullified, a valid line with FaSe=0 is flushed, and invalid
/// lines need no action regardless of FaSe.
pub fn decide_line_flush(coherence: CoherenceState, fase: bool) -> FlushAction {
    if !coherence.is_valid() {
        FlushAction::NoAction
    } else if fase {
        FlushAction::NullifyLine
    } else {
        FlushAction::FlushLine
    }
}

/// Cost coefficients: alpha cycles per dirty line cleaned (write-back),
/// beta cycles per line traversed. alpha must be at least 10x beta.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostParams {
    pub alpha: u64,
    pub beta: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { alpha: 30, beta: 1 }
    }
}

impl CostParams {
    pub fn new(alpha: u64, beta: u64) -> Result<Self, Error> {
        if alpha < 10 * beta {
            return Err(Error::Config(format!(
                "alpha must be an order of magnitude larger than beta (alpha >= 10*beta), \
                 got alpha={alpha} beta={beta}"
            )));
        }
        Ok(CostParams { alpha, beta })
    }
}

/// Outcome of one flush event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlushReport {
    pub lines_traversed: u64,
    pub lines_flushed: u64,
    pub writebacks: u64,
    pub nullified_event: bool,
    pub cycles: u64,
}

impl FlushReport {
    /// CSV row: event_id,mode,lines_traversed,lines_flushed,writebacks,nullified,cycles
    pub fn to_csv_row(&self, event_id: u64, mode: FlushMode) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            event_id,
            mode.name(),
            self.lines_traversed,
            self.lines_flushed,
            self.writebacks,
            self.nullified_event as u8,
            self.cycles
        )
    }
}

/// Recompute the cycle cost of a flush event from its counts:
/// alpha * writebacks + beta * lines_traversed.
pub fn flush_cost(report: &FlushReport, params: &CostParams) -> u64 {
    params.alpha * report.writebacks + params.beta * report.lines_traversed
}

/// Execute one flush event. All FaSe bits and the CLSF flag are reset in
/// every mode; only a nullified CLSF event skips the line-state traversal.
pub fn flush(cache: &mut Cache, mode: FlushMode, params: &CostParams) -> FlushReport {
    let geom = cache.geometry();

    if mode == FlushMode::Clsf && !cache.clsf_flag() {
        // No critical access since the last flush event: nullify.
        for set in 0..geom.num_sets {
            for way in 0..geom.num_ways {
                cache.line_mut(set, way).fase = false;
            }
        }
        cache.set_clsf_flag(false);
        return FlushReport {
            lines_traversed: 0,
            lines_flushed: 0,
            writebacks: 0,
            nullified_event: true,
            cycles: 0,
        };
    }

    let selective = mode != FlushMode::Naive;
    let mut lines_flushed = 0u64;
    let mut writebacks = 0u64;
    for set in 0..geom.num_sets {
        for way in 0..geom.num_ways {
            let line = cache.line_mut(set, way);
            let action = if selective {
                decide_line_flush(line.coherence, line.fase)
            } else if line.coherence.is_valid() {
                FlushAction::FlushLine
            } else {
                FlushAction::NoAction
            };
            match action {
                FlushAction::FlushLine => {
                    if line.coherence.is_dirty() {
                        writebacks += 1;
                    }
                    lines_flushed += 1;
                    *line = LineMeta::invalid();
                }
                FlushAction::NullifyLine | FlushAction::NoAction => {
                    line.fase = false;
                }
            }
        }
    }
    cache.set_clsf_flag(false);

    let lines_traversed = geom.total_lines() as u64;
    let report = FlushReport {
        lines_traversed,
        lines_flushed,
        writebacks,
        nullified_event: false,
        cycles: params.alpha * writebacks + params.beta * lines_traversed,
    };
    debug_assert_eq!(report.cycles, flush_cost(&report, params));
    report
}
