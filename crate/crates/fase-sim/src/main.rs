use clap::{Parser, Subcommand};
use fase_sim::attack::{infer_secret, run_prime_probe, AttackConfig, ClassifyParams, VictimModel};
use fase_sim::config::{group_by_pid, parse_trace, RunConfig};
use fase_sim::error::Error;
use fase_sim::report::ComparisonReport;
use fase_sim::sim::{Mode, SimReport, SliceConfig, Simulation, TraceEvent};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "fase-sim",
    about = "L1 cache simulator with selective-flush mitigations and a Prime+Probe harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation over trace files and write a SimReport CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trace file; repeatable.
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// Override the config's mitigation mode.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Mount Prime+Probe and write the probe matrix and leakage score.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's mitigation mode.
        #[arg(long)]
        mode: Option<Mode>,
        /// Victim secret: comma-separated cache set indices, e.g. 0,2,3.
        #[arg(long)]
        secret: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Victim accesses per secret set.
        #[arg(long, default_value_t = 1)]
        accesses_per_set: usize,
        /// Victim wraps its accesses in a csr.scf critical segment.
        #[arg(long)]
        critical: bool,
        /// Classification threshold in cycles (default: midpoint between
        /// an all-hit probe and a one-miss probe).
        #[arg(long)]
        threshold: Option<f64>,
        /// Probe measurement jitter, uniform in [-noise, +noise] cycles.
        #[arg(long, default_value_t = 0)]
        noise: u64,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the same traces under several modes and compare.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// Comma-separated mode list; must include baseline.
        #[arg(long, default_value = "baseline,naive,llsf,clsf")]
        modes: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<(String, TraceEvent)>, Error> {
    let mut events = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path)?;
        events.extend(parse_trace(&text, path)?);
    }
    Ok(events)
}

/// Build a simulation from config + traces: processes are registered for
/// every schedule entry and every pid seen in the traces.
fn build_simulation(
    cfg: &RunConfig,
    mode: Mode,
    events: Vec<(String, TraceEvent)>,
) -> Result<(Simulation, SliceConfig), Error> {
    let grouped = group_by_pid(events);
    let mut sim = Simulation::new(cfg.geometry, cfg.latency, mode, cfg.cost, 0);
    for name in &cfg.schedule {
        if sim.pid_of(name).is_none() {
            let trace = grouped
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .unwrap_or_default();
            sim.add_process(name, trace);
        }
    }
    for (name, trace) in grouped {
        if sim.pid_of(&name).is_none() {
            sim.add_process(&name, trace);
        }
    }
    let schedule = cfg
        .schedule
        .iter()
        .map(|name| {
            sim.pid_of(name)
                .ok_or_else(|| Error::Config(format!("unknown pid '{name}' in schedule")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        sim,
        SliceConfig {
            slice_length: cfg.slice_length,
            schedule,
            total_slices: cfg.total_slices,
        },
    ))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn run_one_mode(
    cfg: &RunConfig,
    mode: Mode,
    events: Vec<(String, TraceEvent)>,
) -> Result<SimReport, Error> {
    let (mut sim, slice) = build_simulation(cfg, mode, events)?;
    sim.run(&slice)
}

fn parse_secret(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid secret set index '{t}'")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            traces,
            mode,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let mode = mode.unwrap_or(cfg.mode);
            let events = load_traces(&traces)?;
            let report = run_one_mode(&cfg, mode, events)?;
            let path = write_file(&out, "sim_report.csv", &report.to_csv())?;
            write_file(&out, "config_echo.cfg", &cfg.to_config_string())?;
            println!(
                "mode={} total_cycles={} hits={} misses={} flush_events={} -> {}",
                mode,
                report.total_cycles,
                report.hits,
                report.misses,
                report.per_flush.len(),
                path.display()
            );
        }
        Command::Attack {
            config,
            mode,
            secret,
            samples,
            accesses_per_set,
            critical,
            threshold,
            noise,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let mode = mode.unwrap_or(cfg.mode);
            let secret = parse_secret(&secret)?;
            let victim = VictimModel::new(secret.clone(), accesses_per_set, critical);
            let mut attack_cfg = AttackConfig::new(cfg.geometry, cfg.latency, cfg.cost, mode);
            attack_cfg.noise_epsilon = noise;
            attack_cfg.seed = seed.unwrap_or(cfg.seed);
            let matrix = run_prime_probe(&attack_cfg, &victim, samples)?;
            let score = infer_secret(
                &matrix,
                &secret,
                &ClassifyParams::new(&cfg.geometry, cfg.latency, threshold),
            )?;
            write_file(&out, "probe_matrix.csv", &matrix.to_csv())?;
            let path = write_file(&out, "leakage.csv", &score.to_csv())?;
            println!(
                "mode={} samples={} recovered={:?} accuracy={:.4} -> {}",
                mode,
                samples,
                score.recovered_sets,
                score.accuracy,
                path.display()
            );
        }
        Command::Compare {
            config,
            traces,
            modes,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let modes: Vec<Mode> = modes
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<Result<_, _>>()?;
            let events = load_traces(&traces)?;
            let mut runs = Vec::new();
            for &mode in &modes {
                let report = run_one_mode(&cfg, mode, events.clone())?;
                write_file(
                    &out,
                    &format!("sim_report_{mode}.csv"),
                    &report.to_csv(),
                )?;
                runs.push((mode, report));
            }
            let comparison = ComparisonReport::from_runs(&runs)?;
            let path = write_file(&out, "comparison.csv", &comparison.to_csv())?;
            print!("{}", comparison.to_csv());
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FASE_SIM_LOG")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
