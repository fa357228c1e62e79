//! Prime+Probe attack harness: mounts the three-stage attack against a
//! configurable secret-dependent victim across mitigation modes and
//! quantifies leakage from per-set probe latencies.

use crate::cache::{CacheGeometry, LatencyParams, MemOp};
use crate::error::Error;
use crate::flush::CostParams;
use crate::sim::{Mode, Simulation, TraceEvent};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag base for attacker prime addresses; way index is added to it.
const ATTACKER_TAG_BASE: u64 = 0x1000;
/// Tag base for victim addresses; per-set access index is added to it.
const VICTIM_TAG_BASE: u64 = 0x8000;

/// The victim's ground-truth access pattern: which cache sets it touches.
#[derive(Clone, Debug)]
pub struct VictimModel {
    pub secret: Vec<usize>,
    pub accesses_per_set: usize,
    /// Whether the victim brackets its accesses in ScfWrite 1/0
    /// (i.e. marks them as a CLSF critical segment).
    pub critical: bool,
}

impl VictimModel {
    pub fn new(secret: Vec<usize>, accesses_per_set: usize, critical: bool) -> Self {
        VictimModel {
            secret,
            accesses_per_set,
            critical,
        }
    }

    fn validate(&self, geometry: &CacheGeometry) -> Result<(), Error> {
        if self.accesses_per_set < 1 {
            return Err(Error::Config("accesses_per_set must be >= 1".into()));
        }
        for &s in &self.secret {
            if s >= geometry.num_sets {
                return Err(Error::Config(format!(
                    "secret set index {s} out of range (cache has {} sets)",
                    geometry.num_sets
                )));
            }
        }
        Ok(())
    }
}

/// samples x num_sets matrix of per-set probe latencies (summed over ways).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeMatrix {
    pub num_sets: usize,
    pub rows: Vec<Vec<u64>>,
}

impl ProbeMatrix {
    pub fn samples(&self) -> usize {
        self.rows.len()
    }

    /// Mean probe latency per set across all samples.
    pub fn set_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.num_sets];
        if self.rows.is_empty() {
            return means;
        }
        for row in &self.rows {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        for m in &mut means {
            *m /= self.rows.len() as f64;
        }
        means
    }

    /// CSV: one row per sample, num_sets integer columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Which sets the attacker infers the victim touched, and how well that
/// matches the configured secret.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageScore {
    pub recovered_sets: Vec<usize>,
    pub accuracy: f64,
}

impl LeakageScore {
    /// Single-line CSV summary (plus header).
    pub fn to_csv(&self) -> String {
        let recovered: Vec<String> = self.recovered_sets.iter().map(|s| s.to_string()).collect();
        format!(
            "recovered_sets,accuracy\n\"{}\",{:.4}\n",
            recovered.join(","),
            self.accuracy
        )
    }
}

/// Everything a Prime+Probe run needs besides the victim model.
#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub geometry: CacheGeometry,
    pub latency: LatencyParams,
    pub cost: CostParams,
    pub mode: Mode,
    /// Additive probe-measurement jitter, uniform in [-eps, +eps] cycles.
    /// Zero (the default) keeps the simulation noiseless and exact.
    pub noise_epsilon: u64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(geometry: CacheGeometry, latency: LatencyParams, cost: CostParams, mode: Mode) -> Self {
        AttackConfig {
            geometry,
            latency,
            cost,
            mode,
            noise_epsilon: 0,
            seed: 0,
        }
    }
}

fn prime_address(geometry: &CacheGeometry, set: usize, way: usize) -> u64 {
    geometry.compose(ATTACKER_TAG_BASE + way as u64, set, 0)
}

fn victim_address(geometry: &CacheGeometry, set: usize, k: usize) -> u64 {
    geometry.compose(VICTIM_TAG_BASE + k as u64, set, 0)
}

/// Stage-1 trace: num_sets x num_ways distinct loads that exactly fill
/// every set and way for the attacker. Way-major so that within each set
/// the lowest way holds the least-recently-touched prime line.
pub fn prime_trace(geometry: &CacheGeometry) -> Vec<TraceEvent> {
    let mut events = Vec::with_capacity(geometry.total_lines());
    for way in 0..geometry.num_ways {
        for set in 0..geometry.num_sets {
            events.push(TraceEvent::Load(prime_address(geometry, set, way)));
        }
    }
    events
}

/// Victim-slice trace: accesses_per_set distinct loads per secret set,
/// bracketed by ScfWrite 1/0 when the victim is marked critical.
pub fn victim_trace(geometry: &CacheGeometry, victim: &VictimModel) -> Vec<TraceEvent> {
    let mut events = Vec::new();
    if victim.critical {
        events.push(TraceEvent::ScfWrite(true));
    }
    for &set in &victim.secret {
        for k in 0..victim.accesses_per_set {
            events.push(TraceEvent::Load(victim_address(geometry, set, k)));
        }
    }
    if victim.critical {
        events.push(TraceEvent::ScfWrite(false));
    }
    events
}

/// Run the full attack: (prime -> switch to victim -> victim slice ->
/// switch back -> probe) x samples, one matrix row per sample. The flush
/// mode applies at both switches.
pub fn run_prime_probe(
    config: &AttackConfig,
    victim: &VictimModel,
    samples: usize,
) -> Result<ProbeMatrix, Error> {
    if samples == 0 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    victim.validate(&config.geometry)?;

    let mut sim = Simulation::new(config.geometry, config.latency, config.mode, config.cost, 0);
    let spy = sim.add_process("spy", vec![]);
    let victim_pid = sim.add_process("victim", vec![]);
    let geometry = config.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let floor = config.latency.hit * geometry.num_ways as u64;

    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        // Stage 1: prime
        for way in 0..geometry.num_ways {
            for set in 0..geometry.num_sets {
                sim.access(spy, MemOp::Load, prime_address(&geometry, set, way))?;
            }
        }
        // Stage 2: victim runs
        sim.context_switch(spy, victim_pid)?;
        if victim.critical {
            sim.write_scf(victim_pid, true)?;
        }
        for &set in &victim.secret {
            for k in 0..victim.accesses_per_set {
                sim.access(victim_pid, MemOp::Load, victim_address(&geometry, set, k))?;
            }
        }
        if victim.critical {
            sim.write_scf(victim_pid, false)?;
        }
        sim.context_switch(victim_pid, spy)?;
        // Stage 3: probe. Ways are probed in reverse prime order so that a
        // single victim eviction costs one miss instead of cascading
        // self-evictions through the whole set.
        let mut row = vec![0u64; geometry.num_sets];
        for (set, cell) in row.iter_mut().enumerate() {
            for way in (0..geometry.num_ways).rev() {
                let r = sim.access(spy, MemOp::Load, prime_address(&geometry, set, way))?;
                *cell += r.latency;
            }
        }
        if config.noise_epsilon > 0 {
            let eps = config.noise_epsilon as i64;
            for cell in &mut row {
                let jitter = rng.gen_range(-eps..=eps);
                *cell = (*cell as i64 + jitter).max(floor as i64) as u64;
            }
        }
        rows.push(row);
    }
    Ok(ProbeMatrix {
        num_sets: geometry.num_sets,
        rows,
    })
}

/// Classifier parameters for [`infer_secret`].
#[derive(Clone, Copy, Debug)]
pub struct ClassifyParams {
    pub num_ways: usize,
    pub latency: LatencyParams,
    /// Absolute per-set latency threshold; defaults to the midpoint
    /// between an all-hit probe and a probe with one miss.
    pub threshold: Option<f64>,
}

impl ClassifyParams {
    pub fn new(geometry: &CacheGeometry, latency: LatencyParams, threshold: Option<f64>) -> Self {
        ClassifyParams {
            num_ways: geometry.num_ways,
            latency,
            threshold,
        }
    }

    pub fn effective_threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| {
            let all_hit = (self.num_ways as u64 * self.latency.hit) as f64;
            let gap = (self.latency.miss - self.latency.hit) as f64;
            all_hit + gap / 2.0
        })
    }
}

/// Classify each set from its mean probe latency and score the result
/// against the ground-truth secret.
///
/// A set counts as victim-accessed when its mean strictly exceeds both the
/// all-set mean and the absolute threshold. The relative condition makes a
/// uniformly slow matrix (every probe missing after a flush) carry no
/// signal: no set stands out, so nothing is recovered.
///
/// accuracy = |recovered ∩ secret| / |secret|; an empty secret scores 1.0
/// when nothing is recovered (vacuous truth) and 0.0 otherwise.
pub fn infer_secret(
    matrix: &ProbeMatrix,
    secret: &[usize],
    params: &ClassifyParams,
) -> Result<LeakageScore, Error> {
    if matrix.rows.is_empty() {
        return Err(Error::Config("probe matrix has no samples".into()));
    }
    let means = matrix.set_means();
    let overall = means.iter().sum::<f64>() / means.len() as f64;
    let threshold = params.effective_threshold();

    let recovered_sets: Vec<usize> = means
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > overall && m >= threshold)
        .map(|(s, _)| s)
        .collect();

    let accuracy = if secret.is_empty() {
        if recovered_sets.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        let hits = recovered_sets.iter().filter(|s| secret.contains(s)).count();
        hits as f64 / secret.len() as f64
    };
    Ok(LeakageScore {
        recovered_sets,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom4() -> CacheGeometry {
        CacheGeometry::new(4, 4, 64).unwrap()
    }

    fn attack(mode: Mode) -> AttackConfig {
        AttackConfig::new(
            geom4(),
            LatencyParams::default(),
            CostParams::default(),
            mode,
        )
    }

    #[test]
    fn prime_trace_counts() {
        assert_eq!(prime_trace(&geom4()).len(), 16);
        assert_eq!(
            prime_trace(&CacheGeometry::new(64, 8, 64).unwrap()).len(),
            512
        );
    }

    #[test]
    fn priming_twice_second_pass_all_hits() {
        let mut sim = Simulation::new(
            geom4(),
            LatencyParams::default(),
            Mode::Baseline,
            CostParams::default(),
            0,
        );
        let spy = sim.add_process("spy", vec![]);
        let g = geom4();
        for pass in 0..2 {
            for way in 0..g.num_ways {
                for set in 0..g.num_sets {
                    let r = sim
                        .access(spy, MemOp::Load, prime_address(&g, set, way))
                        .unwrap();
                    assert_eq!(r.hit, pass == 1);
                }
            }
        }
    }

    #[test]
    fn undisturbed_probe_reads_all_hit() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![], 1, false);
        let m = run_prime_probe(&cfg, &victim, 1).unwrap();
        let lat = LatencyParams::default();
        // first sample: prime is cold but probe re-reads the primed lines
        for &v in &m.rows[0] {
            assert_eq!(v, 4 * lat.hit);
        }
    }

    #[test]
    fn victim_access_shows_in_one_set() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![2], 1, false);
        let m = run_prime_probe(&cfg, &victim, 1).unwrap();
        let lat = LatencyParams::default();
        for (set, &v) in m.rows[0].iter().enumerate() {
            if set == 2 {
                assert_eq!(v, 3 * lat.hit + lat.miss);
            } else {
                assert_eq!(v, 4 * lat.hit);
            }
        }
    }

    #[test]
    fn probe_after_naive_flush_misses_everywhere() {
        let cfg = attack(Mode::Naive);
        let victim = VictimModel::new(vec![0, 2, 3], 1, false);
        let m = run_prime_probe(&cfg, &victim, 3).unwrap();
        let lat = LatencyParams::default();
        for row in &m.rows {
            for &v in row {
                assert_eq!(v, 4 * lat.miss);
            }
        }
    }

    #[test]
    fn baseline_recovers_secret_exactly() {
        let cfg = attack(Mode::Baseline);
        let secret = vec![0, 2, 3];
        let victim = VictimModel::new(secret.clone(), 1, false);
        let m = run_prime_probe(&cfg, &victim, 20).unwrap();
        let score = infer_secret(
            &m,
            &secret,
            &ClassifyParams::new(&geom4(), LatencyParams::default(), None),
        )
        .unwrap();
        assert_eq!(score.recovered_sets, secret);
        assert_eq!(score.accuracy, 1.0);
    }

    #[test]
    fn protected_modes_recover_nothing() {
        for mode in [Mode::Naive, Mode::Llsf] {
            let cfg = attack(mode);
            let secret = vec![0, 2, 3];
            let victim = VictimModel::new(secret.clone(), 1, false);
            let m = run_prime_probe(&cfg, &victim, 10).unwrap();
            let score = infer_secret(
                &m,
                &secret,
                &ClassifyParams::new(&geom4(), LatencyParams::default(), None),
            )
            .unwrap();
            assert!(score.recovered_sets.is_empty());
            assert_eq!(score.accuracy, 0.0);
        }
    }

    #[test]
    fn clsf_critical_protects_noncritical_leaks() {
        let secret = vec![1, 3];
        let params = ClassifyParams::new(&geom4(), LatencyParams::default(), None);

        let cfg = attack(Mode::Clsf);
        let m = run_prime_probe(&cfg, &VictimModel::new(secret.clone(), 1, true), 10).unwrap();
        let score = infer_secret(&m, &secret, &params).unwrap();
        assert_eq!(score.accuracy, 0.0);

        let m = run_prime_probe(&cfg, &VictimModel::new(secret.clone(), 1, false), 10).unwrap();
        let baseline =
            run_prime_probe(&attack(Mode::Baseline), &VictimModel::new(secret.clone(), 1, false), 10)
                .unwrap();
        assert_eq!(m, baseline);
        let score = infer_secret(&m, &secret, &params).unwrap();
        assert_eq!(score.accuracy, 1.0);
    }

    #[test]
    fn vacuous_empty_secret() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![], 1, false);
        let m = run_prime_probe(&cfg, &victim, 5).unwrap();
        let score = infer_secret(
            &m,
            &[],
            &ClassifyParams::new(&geom4(), LatencyParams::default(), None),
        )
        .unwrap();
        assert!(score.recovered_sets.is_empty());
        assert_eq!(score.accuracy, 1.0);
    }

    #[test]
    fn secret_relabeling_permutes_matrix_columns() {
        let cfg = attack(Mode::Baseline);
        let a = run_prime_probe(&cfg, &VictimModel::new(vec![0, 2], 1, false), 5).unwrap();
        let b = run_prime_probe(&cfg, &VictimModel::new(vec![1, 3], 1, false), 5).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra[0], rb[1]);
            assert_eq!(ra[2], rb[3]);
            assert_eq!(ra[1], rb[0]);
            assert_eq!(ra[3], rb[2]);
        }
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let mut cfg = attack(Mode::Baseline);
        cfg.noise_epsilon = 5;
        cfg.seed = 42;
        let victim = VictimModel::new(vec![0], 1, false);
        let m1 = run_prime_probe(&cfg, &victim, 10).unwrap();
        let m2 = run_prime_probe(&cfg, &victim, 10).unwrap();
        assert_eq!(m1, m2);
        let floor = 4 * LatencyParams::default().hit;
        assert!(m1.rows.iter().flatten().all(|&v| v >= floor));
    }

    #[test]
    fn secret_out_of_range_rejected() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![4], 1, false);
        assert!(run_prime_probe(&cfg, &victim, 1).is_err());
    }

    #[test]
    fn zero_samples_rejected() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![0], 1, false);
        assert!(run_prime_probe(&cfg, &victim, 0).is_err());
    }

    #[test]
    fn matrix_entries_at_least_all_hit_floor() {
        let cfg = attack(Mode::Baseline);
        let victim = VictimModel::new(vec![0, 1], 2, false);
        let m = run_prime_probe(&cfg, &victim, 8).unwrap();
        let floor = 4 * LatencyParams::default().hit;
        assert!(m.rows.iter().flatten().all(|&v| v >= floor));
    }
}
