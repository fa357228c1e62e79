//! Set-associative L1 data cache model with MESI coherence metadata,
//! per-line FaSe state bits, and the cache-wide CLSF flag.
//!
//! Only metadata is simulated (tags, coherence, FaSe bits); there are no
//! data payloads. Lines are owner-tagged with the accessing process id,
//! so a process can never hit another process's line.

use crate::error::Error;
use std::fmt;

/// Process identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(pub u32);

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cache geometry: number of sets, ways per set, and block size in bytes.
/// All three must be powers of two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheGeometry {
    pub num_sets: usize,
    pub num_ways: usize,
    pub block_bytes: usize,
}

impl Default for CacheGeometry {
    /// 32-KB 8-way cache with 64-byte blocks (64 sets).
    fn default() -> Self {
        CacheGeometry {
            num_sets: 64,
            num_ways: 8,
            block_bytes: 64,
        }
    }
}

impl CacheGeometry {
    pub fn new(num_sets: usize, num_ways: usize, block_bytes: usize) -> Result<Self, Error> {
        for (name, v) in [
            ("sets", num_sets),
            ("ways", num_ways),
            ("block_bytes", block_bytes),
        ] {
            if v == 0 || !v.is_power_of_two() {
                return Err(Error::Config(format!(
                    "{name} must be a power of two and >= 1, got {v}"
                )));
            }
        }
        Ok(CacheGeometry {
            num_sets,
            num_ways,
            block_bytes,
        })
    }

    pub fn total_lines(&self) -> usize {
        self.num_sets * self.num_ways
    }

    pub fn capacity_bytes(&self) -> usize {
        self.num_sets * self.num_ways * self.block_bytes
    }

    fn offset_bits(&self) -> u32 {
        self.block_bytes.trailing_zeros()
    }

    fn set_bits(&self) -> u32 {
        self.num_sets.trailing_zeros()
    }

    /// Split a 64-bit byte address into tag / set index / block offset.
    pub fn decompose(&self, address: u64) -> AddrParts {
        let offset = address & (self.block_bytes as u64 - 1);
        let set_index = ((address >> self.offset_bits()) & (self.num_sets as u64 - 1)) as usize;
        let tag = address >> (self.offset_bits() + self.set_bits());
        AddrParts {
            tag,
            set_index,
            offset,
        }
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn compose(&self, tag: u64, set_index: usize, offset: u64) -> u64 {
        (tag << (self.offset_bits() + self.set_bits()))
            | ((set_index as u64) << self.offset_bits())
            | offset
    }
}

/// Address split per the configured geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddrParts {
    pub tag: u64,
    pub set_index: usize,
    pub offset: u64,
}

/// MESI coherence state with the canonical 2-bit encodings
/// M=11, E=10, S=01, I=00. The cache is write-back, so dirty <=> M.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoherenceState {
    Modified,
    Exclusive,
    Shared,
    Invalid,
}

impl CoherenceState {
    pub const ALL: [CoherenceState; 4] = [
        CoherenceState::Modified,
        CoherenceState::Exclusive,
        CoherenceState::Shared,
        CoherenceState::Invalid,
    ];

    pub fn encoding(self) -> u8 {
        match self {
            CoherenceState::Modified => 0b11,
            CoherenceState::Exclusive => 0b10,
            CoherenceState::Shared => 0b01,
            CoherenceState::Invalid => 0b00,
        }
    }

    pub fn from_encoding(bits: u8) -> Option<Self> {
        match bits {
            0b11 => Some(CoherenceState::Modified),
            0b10 => Some(CoherenceState::Exclusive),
            0b01 => Some(CoherenceState::Shared),
            0b00 => Some(CoherenceState::Invalid),
            _ => None,
        }
    }

    pub fn is_valid(self) -> bool {
        self != CoherenceState::Invalid
    }

    pub fn is_dirty(self) -> bool {
        self == CoherenceState::Modified
    }

    pub fn letter(self) -> char {
        match self {
            CoherenceState::Modified => 'M',
            CoherenceState::Exclusive => 'E',
            CoherenceState::Shared => 'S',
            CoherenceState::Invalid => 'I',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'M' => Some(CoherenceState::Modified),
            'E' => Some(CoherenceState::Exclusive),
            'S' => Some(CoherenceState::Shared),
            'I' => Some(CoherenceState::Invalid),
            _ => None,
        }
    }
}

/// Hit/miss latencies in cycles. Validation pins miss > 100 > hit so
/// that a miss is always distinguishable at the 100-cycle threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencyParams {
    pub hit: u64,
    pub miss: u64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        LatencyParams { hit: 30, miss: 120 }
    }
}

impl LatencyParams {
    pub fn new(hit: u64, miss: u64) -> Result<Self, Error> {
        if !(miss > 100 && (1..100).contains(&hit)) {
            return Err(Error::Config(format!(
                "latencies must satisfy miss > 100 > hit >= 1, got hit={hit} miss={miss}"
            )));
        }
        Ok(LatencyParams { hit, miss })
    }
}

/// Load or store.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemOp {
    Load,
    Store,
}

/// Per-line metadata: owner pid, address tag, coherence state, FaSe bit,
/// and a recency counter for LRU replacement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineMeta {
    pub owner: Pid,
    pub tag: u64,
    pub coherence: CoherenceState,
    pub fase: bool,
    pub recency: u64,
}

impl LineMeta {
    pub fn invalid() -> Self {
        LineMeta {
            owner: Pid(0),
            tag: 0,
            coherence: CoherenceState::Invalid,
            fase: false,
            recency: 0,
        }
    }
}

/// Outcome of one load/store access.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessResult {
    pub hit: bool,
    pub latency: u64,
    pub writeback_occurred: bool,
    pub evicted: Option<LineMeta>,
}

/// The cache: a set-major array of line metadata plus the CLSF flag.
#[derive(Clone, Debug)]
pub struct Cache {
    geometry: CacheGeometry,
    latency: LatencyParams,
    lines: Vec<LineMeta>,
    clsf_flag: bool,
    tick: u64,
}

impl Cache {
    pub fn new(geometry: CacheGeometry, latency: LatencyParams) -> Self {
        Cache {
            geometry,
            latency,
            lines: vec![LineMeta::invalid(); geometry.total_lines()],
            clsf_flag: false,
            tick: 0,
        }
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.geometry
    }

    pub fn latency(&self) -> LatencyParams {
        self.latency
    }

    pub fn clsf_flag(&self) -> bool {
        self.clsf_flag
    }

    pub(crate) fn set_clsf_flag(&mut self, value: bool) {
        self.clsf_flag = value;
    }

    fn idx(&self, set_index: usize, way: usize) -> usize {
        set_index * self.geometry.num_ways + way
    }

    pub fn line(&self, set_index: usize, way: usize) -> &LineMeta {
        &self.lines[self.idx(set_index, way)]
    }

    pub(crate) fn line_mut(&mut self, set_index: usize, way: usize) -> &mut LineMeta {
        let i = self.idx(set_index, way);
        &mut self.lines[i]
    }

    /// Iterate over all valid lines as (set, way, line).
    pub fn valid_lines(&self) -> impl Iterator<Item = (usize, usize, &LineMeta)> {
        let ways = self.geometry.num_ways;
        self.lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.coherence.is_valid())
            .map(move |(i, l)| (i / ways, i % ways, l))
    }

    pub fn valid_count(&self) -> u64 {
        self.lines.iter().filter(|l| l.coherence.is_valid()).count() as u64
    }

    pub fn dirty_count(&self) -> u64 {
        self.lines.iter().filter(|l| l.coherence.is_dirty()).count() as u64
    }

    /// Victim selection: lowest-numbered invalid way if one exists,
    /// otherwise the least-recently-used way (lowest way on ties).
    pub fn select_victim_way(&self, set_index: usize) -> usize {
        let base = set_index * self.geometry.num_ways;
        for way in 0..self.geometry.num_ways {
            if !self.lines[base + way].coherence.is_valid() {
                return way;
            }
        }
        let mut victim = 0;
        let mut oldest = u64::MAX;
        for way in 0..self.geometry.num_ways {
            let r = self.lines[base + way].recency;
            if r < oldest {
                oldest = r;
                victim = way;
            }
        }
        victim
    }

    /// Service one load/store from `pid`. `scf` is the live csr.scf bit of
    /// the issuing process: when set, any coherence-bit update caused by
    /// this access asserts the CLSF flag.
    ///
    /// The FaSe bit of the touched line is set exactly when this access
    /// updates coherence bits: a fill, or a store hit upgrading E/S to M.
    pub fn access(&mut self, pid: Pid, op: MemOp, address: u64, scf: bool) -> AccessResult {
        let parts = self.geometry.decompose(address);
        self.tick += 1;
        let tick = self.tick;
        let base = parts.set_index * self.geometry.num_ways;

        for way in 0..self.geometry.num_ways {
            let line = &self.lines[base + way];
            if line.coherence.is_valid() && line.owner == pid && line.tag == parts.tag {
                let upgrade = op == MemOp::Store && line.coherence != CoherenceState::Modified;
                let line = &mut self.lines[base + way];
                line.recency = tick;
                if upgrade {
                    line.coherence = CoherenceState::Modified;
                    line.fase = true;
                    if scf {
                        self.clsf_flag = true;
                    }
                }
                return AccessResult {
                    hit: true,
                    latency: self.latency.hit,
                    writeback_occurred: false,
                    evicted: None,
                };
            }
        }

        let way = self.select_victim_way(parts.set_index);
        let victim = self.lines[base + way];
        let evicted = victim.coherence.is_valid().then_some(victim);
        let writeback_occurred = victim.coherence.is_dirty();
        self.lines[base + way] = LineMeta {
            owner: pid,
            tag: parts.tag,
            coherence: match op {
                MemOp::Load => CoherenceState::Exclusive,
                MemOp::Store => CoherenceState::Modified,
            },
            fase: true,
            recency: tick,
        };
        if scf {
            self.clsf_flag = true;
        }
        AccessResult {
            hit: false,
            latency: self.latency.miss,
            writeback_occurred,
            evicted,
        }
    }

    /// Test-only directive: pin the coherence state of one (set, way).
    /// Forcing a valid state claims the line for `pid`; forcing I clears it.
    /// Needed because S never arises from single-core traffic.
    pub fn force_state(
        &mut self,
        pid: Pid,
        set_index: usize,
        way: usize,
        state: CoherenceState,
    ) -> Result<(), Error> {
        if set_index >= self.geometry.num_sets || way >= self.geometry.num_ways {
            return Err(Error::Config(format!(
                "force target set {set_index} way {way} out of range for {}x{} cache",
                self.geometry.num_sets, self.geometry.num_ways
            )));
        }
        let line = self.line_mut(set_index, way);
        if state.is_valid() {
            line.owner = pid;
            line.coherence = state;
        } else {
            *line = LineMeta::invalid();
        }
        Ok(())
    }

    /// Lossless dump of all line metadata plus the CLSF flag, set-major.
    pub fn snapshot(&self) -> Snapshot {
        let mut rows = Vec::with_capacity(self.geometry.total_lines());
        for set in 0..self.geometry.num_sets {
            for way in 0..self.geometry.num_ways {
                let line = self.line(set, way);
                rows.push(SnapshotRow {
                    set,
                    way,
                    owner: line.owner,
                    tag: line.tag,
                    coherence: line.coherence,
                    fase: line.fase,
                });
            }
        }
        Snapshot {
            geometry: self.geometry,
            clsf_flag: self.clsf_flag,
            rows,
        }
    }

    /// Rebuild a cache from a snapshot. Recency ranks are not captured by
    /// snapshots, so replacement order restarts from a clean slate.
    pub fn restore(snapshot: &Snapshot, latency: LatencyParams) -> Result<Cache, Error> {
        if snapshot.rows.len() != snapshot.geometry.total_lines() {
            return Err(Error::Config(format!(
                "snapshot has {} rows, geometry expects {}",
                snapshot.rows.len(),
                snapshot.geometry.total_lines()
            )));
        }
        let mut cache = Cache::new(snapshot.geometry, latency);
        for row in &snapshot.rows {
            let line = cache.line_mut(row.set, row.way);
            line.owner = row.owner;
            line.tag = row.tag;
            line.coherence = row.coherence;
            line.fase = row.fase;
        }
        cache.clsf_flag = snapshot.clsf_flag;
        Ok(cache)
    }
}

/// One snapshot row; recency is deliberately excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotRow {
    pub set: usize,
    pub way: usize,
    pub owner: Pid,
    pub tag: u64,
    pub coherence: CoherenceState,
    pub fase: bool,
}

/// Deterministic set-major dump of the cache metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub geometry: CacheGeometry,
    pub clsf_flag: bool,
    pub rows: Vec<SnapshotRow>,
}

impl Snapshot {
    /// CSV dump with columns set,way,owner,tag,coherence,fase.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set,way,owner,tag,coherence,fase\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:#x},{},{}\n",
                row.set,
                row.way,
                row.owner,
                row.tag,
                row.coherence.letter(),
                row.fase as u8
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Cache {
        Cache::new(
            CacheGeometry::new(4, 4, 64).unwrap(),
            LatencyParams::default(),
        )
    }

    fn addr(geom: &CacheGeometry, tag: u64, set: usize) -> u64 {
        geom.compose(tag, set, 0)
    }

    #[test]
    fn decompose_examples() {
        let g = CacheGeometry::new(64, 8, 64).unwrap();
        let p = g.decompose(0x1040);
        assert_eq!((p.offset, p.set_index, p.tag), (0, 1, 1));

        let p = g.decompose(0x0);
        assert_eq!((p.offset, p.set_index, p.tag), (0, 0, 0));

        let g = CacheGeometry::new(4, 4, 64).unwrap();
        let p = g.decompose(0xFFC0);
        assert_eq!((p.offset, p.set_index, p.tag), (0, 3, 0xFF));
    }

    #[test]
    fn decompose_compose_roundtrip() {
        let g = CacheGeometry::new(16, 2, 32).unwrap();
        for a in [0u64, 1, 0x1234, 0xFFFF_FFFF, 0xDEAD_BEEF_CAFE] {
            let p = g.decompose(a);
            assert_eq!(g.compose(p.tag, p.set_index, p.offset), a);
        }
    }

    #[test]
    fn geometry_rejects_non_power_of_two() {
        assert!(CacheGeometry::new(3, 4, 64).is_err());
        assert!(CacheGeometry::new(4, 0, 64).is_err());
        assert!(CacheGeometry::new(4, 4, 48).is_err());
    }

    #[test]
    fn latency_validation() {
        assert!(LatencyParams::new(30, 120).is_ok());
        assert!(LatencyParams::new(30, 90).is_err());
        assert!(LatencyParams::new(100, 120).is_err());
        assert!(LatencyParams::new(0, 120).is_err());
    }

    #[test]
    fn prime_fills_all_lines() {
        let mut c = small();
        let g = c.geometry();
        let spy = Pid(0);
        let mut misses = 0;
        for way in 0..4u64 {
            for set in 0..4 {
                let r = c.access(spy, MemOp::Load, addr(&g, 0x10 + way, set), false);
                assert!(!r.hit);
                misses += 1;
            }
        }
        assert_eq!(misses, 16);
        assert_eq!(c.valid_count(), 16);
        assert!(c.valid_lines().all(|(_, _, l)| l.owner == spy));
    }

    #[test]
    fn victim_fill_evicts_one_spy_line() {
        let mut c = small();
        let g = c.geometry();
        let spy = Pid(0);
        let victim = Pid(1);
        for way in 0..4u64 {
            for set in 0..4 {
                c.access(spy, MemOp::Load, addr(&g, 0x10 + way, set), false);
            }
        }
        let r = c.access(victim, MemOp::Load, addr(&g, 0x99, 0), false);
        assert!(!r.hit);
        let evicted = r.evicted.unwrap();
        assert_eq!(evicted.owner, spy);
        let installed = (0..4)
            .map(|w| c.line(0, w))
            .find(|l| l.owner == victim)
            .unwrap();
        assert!(installed.fase);
        assert_eq!(installed.coherence, CoherenceState::Exclusive);
    }

    #[test]
    fn store_hit_upgrades_exclusive_to_modified() {
        let mut c = small();
        let g = c.geometry();
        let p = Pid(2);
        let a = addr(&g, 7, 1);
        c.access(p, MemOp::Load, a, false);
        assert_eq!(c.line(1, 0).coherence, CoherenceState::Exclusive);
        let r = c.access(p, MemOp::Store, a, false);
        assert!(r.hit);
        assert!(!r.writeback_occurred);
        assert_eq!(c.line(1, 0).coherence, CoherenceState::Modified);
        assert!(c.line(1, 0).fase);
    }

    #[test]
    fn scf_fill_asserts_clsf_flag() {
        let mut c = small();
        let g = c.geometry();
        assert!(!c.clsf_flag());
        c.access(Pid(1), MemOp::Load, addr(&g, 3, 2), true);
        assert!(c.clsf_flag());
    }

    #[test]
    fn scf_read_hit_does_not_assert_clsf_flag() {
        let mut c = small();
        let g = c.geometry();
        let a = addr(&g, 3, 2);
        c.access(Pid(1), MemOp::Load, a, false);
        c.access(Pid(1), MemOp::Load, a, true);
        assert!(!c.clsf_flag());
    }

    #[test]
    fn victim_way_invalid_first() {
        let mut c = small();
        let g = c.geometry();
        for t in 0..4u64 {
            c.access(Pid(0), MemOp::Load, addr(&g, t, 0), false);
        }
        // ways {valid, invalid, valid, valid}
        c.force_state(Pid(0), 0, 1, CoherenceState::Invalid).unwrap();
        assert_eq!(c.select_victim_way(0), 1);
    }

    #[test]
    fn victim_way_lru() {
        let mut c = small();
        let g = c.geometry();
        for t in 0..4u64 {
            c.access(Pid(0), MemOp::Load, addr(&g, t, 0), false);
        }
        assert_eq!(c.select_victim_way(0), 0);
        c.access(Pid(0), MemOp::Load, addr(&g, 0, 0), false); // re-touch w0
        assert_eq!(c.select_victim_way(0), 1);
    }

    #[test]
    fn snapshot_empty_cache() {
        let c = small();
        let snap = c.snapshot();
        assert!(!snap.clsf_flag);
        assert!(snap
            .rows
            .iter()
            .all(|r| r.coherence == CoherenceState::Invalid && !r.fase));
    }

    #[test]
    fn snapshot_stage2_three_victim_lines() {
        let mut c = small();
        let g = c.geometry();
        let spy = Pid(0);
        let victim = Pid(1);
        for way in 0..4u64 {
            for set in 0..4 {
                c.access(spy, MemOp::Load, addr(&g, 0x10 + way, set), false);
            }
        }
        for set in [0usize, 2, 3] {
            c.access(victim, MemOp::Load, addr(&g, 0x99, set), false);
        }
        let snap = c.snapshot();
        let victim_sets: Vec<usize> = snap
            .rows
            .iter()
            .filter(|r| r.coherence.is_valid() && r.owner == victim)
            .map(|r| r.set)
            .collect();
        assert_eq!(victim_sets, vec![0, 2, 3]);
    }

    #[test]
    fn snapshot_restore_roundtrip() {
        let mut c = small();
        let g = c.geometry();
        c.access(Pid(0), MemOp::Store, addr(&g, 5, 1), true);
        c.access(Pid(1), MemOp::Load, addr(&g, 6, 3), false);
        let snap = c.snapshot();
        let restored = Cache::restore(&snap, c.latency()).unwrap();
        assert_eq!(restored.snapshot(), snap);
    }

    #[test]
    fn coherence_encodings() {
        assert_eq!(CoherenceState::Modified.encoding(), 0b11);
        assert_eq!(CoherenceState::Exclusive.encoding(), 0b10);
        assert_eq!(CoherenceState::Shared.encoding(), 0b01);
        assert_eq!(CoherenceState::Invalid.encoding(), 0b00);
        for s in CoherenceState::ALL {
            assert_eq!(CoherenceState::from_encoding(s.encoding()), Some(s));
        }
    }

    #[test]
    fn at_most_one_line_per_owner_tag_set() {
        let mut c = small();
        let g = c.geometry();
        let a = addr(&g, 9, 2);
        for _ in 0..8 {
            c.access(Pid(0), MemOp::Load, a, false);
            c.access(Pid(0), MemOp::Store, a, false);
        }
        let copies = c
            .valid_lines()
            .filter(|(s, _, l)| *s == 2 && l.owner == Pid(0) && l.tag == 9)
            .count();
        assert_eq!(copies, 1);
    }

    #[test]
    fn unaligned_access_normalizes_to_block() {
        let mut c = small();
        let g = c.geometry();
        c.access(Pid(0), MemOp::Load, addr(&g, 4, 1) + 17, false);
        let r = c.access(Pid(0), MemOp::Load, addr(&g, 4, 1) + 63, false);
        assert!(r.hit);
    }
}
