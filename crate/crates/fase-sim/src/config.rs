//! Plain-text configuration (key=value) and trace (line-oriented) parsing.
//!
//! Config keys: sets, ways, block_bytes, mode, alpha, beta, hit_latency,
//! miss_latency, slice_length, schedule, total_slices, seed.
//!
//! Trace lines: `pid load 0xADDR`, `pid store 0xADDR`, `pid scf 0|1`,
//! `pid force SET WAY STATE` (test-only).

use crate::cache::{CacheGeometry, CoherenceState, LatencyParams};
use crate::error::Error;
use crate::flush::CostParams;
use crate::sim::{Mode, TraceEvent};
use std::path::Path;

/// A fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: CacheGeometry,
    pub mode: Mode,
    pub cost: CostParams,
    pub latency: LatencyParams,
    pub slice_length: usize,
    pub schedule: Vec<String>,
    pub total_slices: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: CacheGeometry::default(),
            mode: Mode::Baseline,
            cost: CostParams::default(),
            latency: LatencyParams::default(),
            slice_length: 64,
            schedule: Vec::new(),
            total_slices: 1024,
            seed: 0,
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

impl RunConfig {
    /// Parse key=value text. Blank lines and `#` comments are skipped;
    /// errors carry 1-based line numbers.
    pub fn parse(text: &str, path: &Path) -> Result<Self, Error> {
        let mut sets = 64usize;
        let mut ways = 8usize;
        let mut block_bytes = 64usize;
        let mut mode = Mode::Baseline;
        let mut alpha = 30u64;
        let mut beta = 1u64;
        let mut hit_latency = 30u64;
        let mut miss_latency = 120u64;
        let mut cfg = RunConfig::default();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, lineno, format!("expected key=value, got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            let int = |what: &str| -> Result<u64, Error> {
                value
                    .parse::<u64>()
                    .map_err(|_| parse_err(path, lineno, format!("invalid {what} '{value}'")))
            };
            match key {
                "sets" => sets = int("sets")? as usize,
                "ways" => ways = int("ways")? as usize,
                "block_bytes" => block_bytes = int("block_bytes")? as usize,
                "mode" => {
                    mode = value
                        .parse()
                        .map_err(|e: Error| parse_err(path, lineno, e.to_string()))?
                }
                "alpha" => alpha = int("alpha")?,
                "beta" => beta = int("beta")?,
                "hit_latency" => hit_latency = int("hit_latency")?,
                "miss_latency" => miss_latency = int("miss_latency")?,
                "slice_length" => cfg.slice_length = int("slice_length")? as usize,
                "schedule" => {
                    cfg.schedule = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                "total_slices" => cfg.total_slices = int("total_slices")? as usize,
                "seed" => cfg.seed = int("seed")?,
                other => {
                    return Err(parse_err(path, lineno, format!("unknown key '{other}'")));
                }
            }
        }

        cfg.geometry = CacheGeometry::new(sets, ways, block_bytes)?;
        cfg.mode = mode;
        cfg.cost = CostParams::new(alpha, beta)?;
        cfg.latency = LatencyParams::new(hit_latency, miss_latency)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Emit the config back as key=value text; re-parsing yields an
    /// identical RunConfig.
    pub fn to_config_string(&self) -> String {
        format!(
            "sets={}\nways={}\nblock_bytes={}\nmode={}\nalpha={}\nbeta={}\n\
             hit_latency={}\nmiss_latency={}\nslice_length={}\nschedule={}\n\
             total_slices={}\nseed={}\n",
            self.geometry.num_sets,
            self.geometry.num_ways,
            self.geometry.block_bytes,
            self.mode,
            self.cost.alpha,
            self.cost.beta,
            self.latency.hit,
            self.latency.miss,
            self.slice_length,
            self.schedule.join(","),
            self.total_slices,
            self.seed
        )
    }
}

fn parse_address(token: &str) -> Option<u64> {
    if let Some(hex) = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        token.parse().ok()
    }
}

/// Parse a trace file into (pid name, event) pairs, in file order.
pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<(String, TraceEvent)>, Error> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(parse_err(path, lineno, format!("malformed trace line '{line}'")));
        }
        let pid = tokens[0].to_string();
        let event = match (tokens[1], &tokens[2..]) {
            ("load", [a]) => TraceEvent::Load(
                parse_address(a)
                    .ok_or_else(|| parse_err(path, lineno, format!("invalid address '{a}'")))?,
            ),
            ("store", [a]) => TraceEvent::Store(
                parse_address(a)
                    .ok_or_else(|| parse_err(path, lineno, format!("invalid address '{a}'")))?,
            ),
            ("scf", [v]) => match *v {
                "0" => TraceEvent::ScfWrite(false),
                "1" => TraceEvent::ScfWrite(true),
                _ => return Err(parse_err(path, lineno, format!("scf value must be 0 or 1, got '{v}'"))),
            },
            ("force", [set, way, state]) => {
                let set = set
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid set '{set}'")))?;
                let way = way
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid way '{way}'")))?;
                let state = state
                    .chars()
                    .next()
                    .and_then(CoherenceState::from_letter)
                    .filter(|_| state.len() == 1)
                    .ok_or_else(|| {
                        parse_err(path, lineno, format!("invalid state '{state}' (expected M/E/S/I)"))
                    })?;
                TraceEvent::ForceState { set, way, state }
            }
            (verb, _) => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("unknown or malformed trace verb '{verb}'"),
                ));
            }
        };
        events.push((pid, event));
    }
    Ok(events)
}

/// Group flat (pid, event) pairs into per-process traces, preserving
/// event order within each pid and first-appearance order across pids.
pub fn group_by_pid(events: Vec<(String, TraceEvent)>) -> Vec<(String, Vec<TraceEvent>)> {
    let mut grouped: Vec<(String, Vec<TraceEvent>)> = Vec::new();
    for (pid, event) in events {
        match grouped.iter_mut().find(|(name, _)| *name == pid) {
            Some((_, trace)) => trace.push(event),
            None => grouped.push((pid, vec![event])),
        }
    }
    grouped
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.cfg")
    }

    #[test]
    fn parse_full_config() {
        let text = "\
# geometry
sets=4
ways=4
block_bytes=64
mode=llsf
alpha=30
beta=1
hit_latency=30
miss_latency=120
slice_length=8
schedule=spy,victim
total_slices=100
seed=7
";
        let cfg = RunConfig::parse(text, &p()).unwrap();
        assert_eq!(cfg.geometry, CacheGeometry::new(4, 4, 64).unwrap());
        assert_eq!(cfg.mode, Mode::Llsf);
        assert_eq!(cfg.schedule, vec!["spy", "victim"]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let err = RunConfig::parse("sets=4\nbogus=1\n", &p()).unwrap_err();
        match err {
            Error::Parse { line, ref msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn alpha_beta_rule_enforced() {
        let err = RunConfig::parse("alpha=2\nbeta=1\n", &p()).unwrap_err();
        assert!(err.to_string().contains("order of magnitude"));
    }

    #[test]
    fn latency_rule_enforced() {
        assert!(RunConfig::parse("miss_latency=90\n", &p()).is_err());
    }

    #[test]
    fn config_roundtrip() {
        let text = "sets=16\nways=2\nmode=clsf\nschedule=a,b,c\nslice_length=5\nseed=3\n";
        let cfg = RunConfig::parse(text, &p()).unwrap();
        let echoed = RunConfig::parse(&cfg.to_config_string(), &p()).unwrap();
        assert_eq!(cfg, echoed);
    }

    #[test]
    fn parse_trace_lines() {
        let text = "\
spy load 0x1040
victim store 4096
victim scf 1
victim force 3 1 S
";
        let events = parse_trace(text, &p()).unwrap();
        assert_eq!(events.len(), 4);
        assert_eq!(events[0], ("spy".into(), TraceEvent::Load(0x1040)));
        assert_eq!(events[1], ("victim".into(), TraceEvent::Store(4096)));
        assert_eq!(events[2], ("victim".into(), TraceEvent::ScfWrite(true)));
        assert_eq!(
            events[3],
            (
                "victim".into(),
                TraceEvent::ForceState {
                    set: 3,
                    way: 1,
                    state: CoherenceState::Shared
                }
            )
        );
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let err = parse_trace("spy load 0x10\nspy jump 0x20\n", &p()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn group_preserves_order() {
        let events = vec![
            ("a".to_string(), TraceEvent::Load(0)),
            ("b".to_string(), TraceEvent::Load(64)),
            ("a".to_string(), TraceEvent::Load(128)),
        ];
        let grouped = group_by_pid(events);
        assert_eq!(grouped[0].0, "a");
        assert_eq!(grouped[0].1.len(), 2);
        assert_eq!(grouped[1].0, "b");
    }
}
