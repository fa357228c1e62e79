//! Multi-process execution simulator: runs per-process access traces in
//! time slices, flushes at process-to-process context switches, manages
//! csr.scf save/restore, and accounts cycles including cold-cache penalty.

use crate::cache::{
    AccessResult, Cache, CacheGeometry, CoherenceState, LatencyParams, MemOp, Pid,
};
use crate::error::Error;
use crate::flush::{flush, CostParams, FlushMode, FlushReport};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

/// Mitigation mode for a run. Baseline is the unprotected reference
/// system: no flush happens at context switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Baseline,
    Naive,
    Llsf,
    Clsf,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Naive, Mode::Llsf, Mode::Clsf];

    pub fn flush_mode(self) -> Option<FlushMode> {
        match self {
            Mode::Baseline => None,
            Mode::Naive => Some(FlushMode::Naive),
            Mode::Llsf => Some(FlushMode::Llsf),
            Mode::Clsf => Some(FlushMode::Clsf),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Naive => "naive",
            Mode::Llsf => "llsf",
            Mode::Clsf => "clsf",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "naive" => Ok(Mode::Naive),
            "llsf" => Ok(Mode::Llsf),
            "clsf" => Ok(Mode::Clsf),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected baseline, naive, llsf, or clsf)"
            ))),
        }
    }
}

/// One simulated instruction-level action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Load(u64),
    Store(u64),
    /// csr.scf write (models the `csrwi scf, 0|1` instruction).
    ScfWrite(bool),
    /// Test-only: pin the coherence state of one (set, way).
    ForceState {
        set: usize,
        way: usize,
        state: CoherenceState,
    },
}

/// A simulated process: its trace, cursor, and csr.scf context.
#[derive(Clone, Debug)]
pub struct Process {
    pub pid: Pid,
    pub name: String,
    pub trace: Vec<TraceEvent>,
    pub cursor: usize,
    pub csr_scf: bool,
    pub saved_scf: bool,
}

impl Process {
    pub fn remaining(&self) -> usize {
        self.trace.len() - self.cursor
    }
}

/// Round-robin time-slice schedule, counted in trace events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceConfig {
    pub slice_length: usize,
    pub schedule: Vec<Pid>,
    pub total_slices: usize,
}

impl SliceConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.slice_length < 1 {
            return Err(Error::Config("slice_length must be >= 1".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("schedule must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SliceStats {
    pub events_run: u64,
    pub hits: u64,
    pub misses: u64,
    pub cycles: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchStats {
    pub flush_report: Option<FlushReport>,
    pub switch_cycles: u64,
}

/// Aggregate per-run statistics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimReport {
    pub mode: Mode,
    pub total_cycles: u64,
    pub per_flush: Vec<FlushReport>,
    pub hits: u64,
    pub misses: u64,
    pub cold_miss_penalty: u64,
    pub per_process_cycles: BTreeMap<String, u64>,
}

impl SimReport {
    pub fn total_lines_flushed(&self) -> u64 {
        self.per_flush.iter().map(|r| r.lines_flushed).sum()
    }

    pub fn total_flush_cycles(&self) -> u64 {
        self.per_flush.iter().map(|r| r.cycles).sum()
    }

    /// CSV with three sections: summary, per-flush, per-process.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("section,summary\n");
        out.push_str(&format!("mode,{}\n", self.mode));
        out.push_str(&format!("total_cycles,{}\n", self.total_cycles));
        out.push_str(&format!("hits,{}\n", self.hits));
        out.push_str(&format!("misses,{}\n", self.misses));
        out.push_str(&format!("cold_miss_penalty,{}\n", self.cold_miss_penalty));
        out.push_str(&format!("flush_events,{}\n", self.per_flush.len()));
        out.push('\n');
        out.push_str("section,per_flush\n");
        out.push_str("event_id,mode,lines_traversed,lines_flushed,writebacks,nullified,cycles\n");
        let flush_mode = self.mode.flush_mode();
        for (i, r) in self.per_flush.iter().enumerate() {
            // per_flush is only populated for non-baseline modes
            if let Some(fm) = flush_mode {
                out.push_str(&r.to_csv_row(i as u64, fm));
                out.push('\n');
            }
        }
        out.push('\n');
        out.push_str("section,per_process\n");
        out.push_str("pid,cycles\n");
        for (name, cycles) in &self.per_process_cycles {
            out.push_str(&format!("{name},{cycles}\n"));
        }
        out
    }
}

/// One simulation: a cache, a set of processes, and accumulated stats.
/// Single-threaded by construction; independent simulations share nothing.
#[derive(Clone, Debug)]
pub struct Simulation {
    cache: Cache,
    mode: Mode,
    cost: CostParams,
    switch_overhead: u64,
    processes: Vec<Process>,
    hits: u64,
    misses: u64,
    access_cycles: u64,
    switch_cycles_total: u64,
    per_process_cycles: Vec<u64>,
    flush_events: Vec<FlushReport>,
    cold_penalty: u64,
    /// Blocks flushed by the most recent flush event, keyed by
    /// (owner, tag, set). An entry is consumed by the owner's next access
    /// to the block and the whole map is replaced at the next flush event.
    flushed_resident: HashSet<(Pid, u64, usize)>,
}

impl Simulation {
    pub fn new(
        geometry: CacheGeometry,
        latency: LatencyParams,
        mode: Mode,
        cost: CostParams,
        switch_overhead: u64,
    ) -> Self {
        Simulation {
            cache: Cache::new(geometry, latency),
            mode,
            cost,
            switch_overhead,
            processes: Vec::new(),
            hits: 0,
            misses: 0,
            access_cycles: 0,
            switch_cycles_total: 0,
            per_process_cycles: Vec::new(),
            flush_events: Vec::new(),
            cold_penalty: 0,
            flushed_resident: HashSet::new(),
        }
    }

    pub fn add_process(&mut self, name: &str, trace: Vec<TraceEvent>) -> Pid {
        let pid = Pid(self.processes.len() as u32);
        self.processes.push(Process {
            pid,
            name: name.to_string(),
            trace,
            cursor: 0,
            csr_scf: false,
            saved_scf: false,
        });
        self.per_process_cycles.push(0);
        pid
    }

    pub fn pid_of(&self, name: &str) -> Option<Pid> {
        self.processes.iter().find(|p| p.name == name).map(|p| p.pid)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn process(&self, pid: Pid) -> Result<&Process, Error> {
        self.processes
            .get(pid.0 as usize)
            .ok_or_else(|| Error::Config(format!("unknown pid {pid}")))
    }

    fn check_pid(&self, pid: Pid) -> Result<usize, Error> {
        let i = pid.0 as usize;
        if i >= self.processes.len() {
            return Err(Error::Config(format!("unknown pid {pid}")));
        }
        Ok(i)
    }

    /// One load/store issued by `pid` with its live csr.scf value.
    pub fn access(&mut self, pid: Pid, op: MemOp, address: u64) -> Result<AccessResult, Error> {
        let i = self.check_pid(pid)?;
        let scf = self.processes[i].csr_scf;
        let parts = self.cache.geometry().decompose(address);
        let result = self.cache.access(pid, op, address, scf);
        if result.hit {
            self.hits += 1;
        } else {
            self.misses += 1;
            let key = (pid, parts.tag, parts.set_index);
            if self.flushed_resident.remove(&key) {
                let lat = self.cache.latency();
                self.cold_penalty += lat.miss - lat.hit;
            }
        }
        self.access_cycles += result.latency;
        self.per_process_cycles[i] += result.latency;
        Ok(result)
    }

    /// Write `pid`'s live csr.scf bit.
    pub fn write_scf(&mut self, pid: Pid, value: bool) -> Result<(), Error> {
        let i = self.check_pid(pid)?;
        self.processes[i].csr_scf = value;
        Ok(())
    }

    /// Execute up to `budget` events from `pid`'s trace.
    pub fn run_slice(&mut self, pid: Pid, budget: usize) -> Result<SliceStats, Error> {
        let i = self.check_pid(pid)?;
        let mut stats = SliceStats::default();
        for _ in 0..budget {
            let proc = &self.processes[i];
            let Some(&event) = proc.trace.get(proc.cursor) else {
                break;
            };
            self.processes[i].cursor += 1;
            match event {
                TraceEvent::Load(a) | TraceEvent::Store(a) => {
                    let op = match event {
                        TraceEvent::Load(_) => MemOp::Load,
                        _ => MemOp::Store,
                    };
                    let r = self.access(pid, op, a)?;
                    if r.hit {
                        stats.hits += 1;
                    } else {
                        stats.misses += 1;
                    }
                    stats.cycles += r.latency;
                }
                TraceEvent::ScfWrite(v) => {
                    self.processes[i].csr_scf = v;
                }
                TraceEvent::ForceState { set, way, state } => {
                    self.cache.force_state(pid, set, way, state)?;
                }
            }
            stats.events_run += 1;
        }
        Ok(stats)
    }

    /// Switch from one process to another: save/reset the outgoing
    /// csr.scf, flush (unless Baseline), restore the incoming csr.scf.
    pub fn context_switch(&mut self, from: Pid, to: Pid) -> Result<SwitchStats, Error> {
        let fi = self.check_pid(from)?;
        let ti = self.check_pid(to)?;

        self.processes[fi].saved_scf = self.processes[fi].csr_scf;
        self.processes[fi].csr_scf = false;

        let mut switch_cycles = self.switch_overhead;
        let flush_report = if let Some(fm) = self.mode.flush_mode() {
            let before: Vec<(Pid, u64, usize)> = self
                .cache
                .valid_lines()
                .map(|(set, _, l)| (l.owner, l.tag, set))
                .collect();
            let report = flush(&mut self.cache, fm, &self.cost);
            let after: HashSet<(Pid, u64, usize)> = self
                .cache
                .valid_lines()
                .map(|(set, _, l)| (l.owner, l.tag, set))
                .collect();
            self.flushed_resident = before.into_iter().filter(|k| !after.contains(k)).collect();
            switch_cycles += report.cycles;
            self.flush_events.push(report);
            Some(report)
        } else {
            None
        };

        self.processes[ti].csr_scf = self.processes[ti].saved_scf;
        self.switch_cycles_total += switch_cycles;
        log::debug!(
            "context switch {} -> {}: {} cycles",
            self.processes[fi].name,
            self.processes[ti].name,
            switch_cycles
        );
        Ok(SwitchStats {
            flush_report,
            switch_cycles,
        })
    }

    /// Interleave run_slice and context_switch per the schedule until all
    /// traces are exhausted or total_slices is reached. A flush happens only
    /// at process-to-process switches (consecutive slices of the same pid
    /// do not flush).
    pub fn run(&mut self, slice: &SliceConfig) -> Result<SimReport, Error> {
        slice.validate()?;
        for &pid in &slice.schedule {
            self.check_pid(pid)?;
        }
        let mut current: Option<Pid> = None;
        for i in 0..slice.total_slices {
            if self.processes.iter().all(|p| p.remaining() == 0) {
                break;
            }
            let pid = slice.schedule[i % slice.schedule.len()];
            if let Some(prev) = current {
                if prev != pid {
                    self.context_switch(prev, pid)?;
                }
            }
            self.run_slice(pid, slice.slice_length)?;
            current = Some(pid);
        }
        Ok(self.report())
    }

    /// Lump-sum cold-cache penalty accumulated so far: for every post-flush
    /// miss on a block the flush evicted, miss latency minus hit latency.
    pub fn cold_cache_penalty(&self) -> u64 {
        self.cold_penalty
    }

    pub fn report(&self) -> SimReport {
        let mut per_process_cycles = BTreeMap::new();
        for (p, &cycles) in self.processes.iter().zip(&self.per_process_cycles) {
            per_process_cycles.insert(p.name.clone(), cycles);
        }
        SimReport {
            mode: self.mode,
            total_cycles: self.access_cycles + self.switch_cycles_total,
            per_flush: self.flush_events.clone(),
            hits: self.hits,
            misses: self.misses,
            cold_miss_penalty: self.cold_penalty,
            per_process_cycles,
        }
    }
}
