use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mmwave_pomdp::mobility::estimate_from_config;
use mmwave_pomdp::perseus::{self, BeliefSetFile, PolicyFile};
use mmwave_pomdp::policies::{FsmPolicy, FsmVariant};
use mmwave_pomdp::sim::{self, PolicySpec, SimOptions, SweepPolicy};
use mmwave_pomdp::{Error, Model, ScenarioConfig, SectorTable};

#[derive(Parser, Debug)]
#[command(name = "mmwave-pomdp", version, args_override_self = true, about = "Beam training, data transmission and handover POMDP for mm-wave vehicular links")]
struct Cli {
    /// TOML scenario file; unspecified fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One flag per scenario field. Values use TOML syntax; lists may be written
/// as bare comma-separated values.
#[derive(Args, Debug, Default)]
#[command(next_help_heading = "Scenario overrides")]
struct Overrides {
    /// Antenna elements per BS [default: 128]
    #[arg(long, global = true, value_name = "N")]
    num_antennas: Option<String>,
    /// BS angular coverage, degrees [default: 90]
    #[arg(long, global = true, value_name = "DEG")]
    coverage_angle: Option<String>,
    /// Slot duration, s [default: 1e-4]
    #[arg(long, global = true, value_name = "S")]
    slot_duration: Option<String>,
    /// Road to BS distance, m [default: 20]
    #[arg(long, global = true, value_name = "M")]
    road_distance: Option<String>,
    /// Bandwidth, Hz [default: 1e8]
    #[arg(long, global = true, value_name = "HZ")]
    bandwidth: Option<String>,
    /// Carrier frequency, Hz [default: 3e10]
    #[arg(long, global = true, value_name = "HZ")]
    carrier_freq: Option<String>,
    /// Noise PSD, dBm/Hz [default: -163]
    #[arg(long, global = true, value_name = "DBM_HZ", allow_hyphen_values = true)]
    noise_psd: Option<String>,
    /// Pilot fraction of each DT slot [default: 0.01]
    #[arg(long, global = true, value_name = "KAPPA")]
    pilot_fraction: Option<String>,
    /// Handover duration, slots [default: 1]
    #[arg(long, global = true, value_name = "SLOTS")]
    handover_slots: Option<String>,
    /// LOS to blocked probability per slot [default: 1.25e-4]
    #[arg(long, global = true, value_name = "P")]
    blockage_p10: Option<String>,
    /// Blocked to LOS probability per slot [default: 5e-4]
    #[arg(long, global = true, value_name = "P")]
    blockage_p01: Option<String>,
    /// LOS to blocked probability for BS 2 [default: same as BS 1]
    #[arg(long, global = true, value_name = "P")]
    blockage_p10_bs2: Option<String>,
    /// Blocked to LOS probability for BS 2 [default: same as BS 1]
    #[arg(long, global = true, value_name = "P")]
    blockage_p01_bs2: Option<String>,
    /// Mean speed, m/s [default: 30]
    #[arg(long, global = true, value_name = "MPS")]
    speed_mean: Option<String>,
    /// Speed standard deviation, m/s [default: 10]
    #[arg(long, global = true, value_name = "MPS")]
    speed_std: Option<String>,
    /// Gauss-Markov memory [default: 0.2]
    #[arg(long, global = true, value_name = "GAMMA")]
    memory: Option<String>,
    /// Sectors per BS [default: 8]
    #[arg(long, global = true, value_name = "S")]
    num_sectors: Option<String>,
    /// Side-lobe gain ratio [default: 0.01]
    #[arg(long, global = true, value_name = "RHO")]
    sidelobe_ratio: Option<String>,
    /// Symbols per slot [default: 1000]
    #[arg(long, global = true, value_name = "L")]
    symbols_per_slot: Option<String>,
    /// BT detection threshold, a number or "auto" [default: auto]
    #[arg(long, global = true, value_name = "ETA")]
    bt_threshold: Option<String>,
    /// DT ACK threshold, a number or "auto" [default: auto]
    #[arg(long, global = true, value_name = "ETA")]
    dt_threshold: Option<String>,
    /// DT durations offered to the solver, slots [default: 10,20,40]
    #[arg(long, global = true, value_name = "LIST")]
    dt_durations: Option<String>,
    /// Transmit power levels, dBm [default: 0,10,20,30,40]
    #[arg(long, global = true, value_name = "LIST", allow_hyphen_values = true)]
    power_levels: Option<String>,
    /// Lagrange multiplier, Mbit/J [default: 100]
    #[arg(long, global = true, value_name = "MBIT_J")]
    lambda: Option<String>,
    /// Multipliers visited by sweep, Mbit/J [default: 0,1,10,100,1000]
    #[arg(long, global = true, value_name = "LIST")]
    lambda_grid: Option<String>,
    /// Belief points for PERSEUS [default: 300]
    #[arg(long, global = true, value_name = "N")]
    belief_set_size: Option<String>,
    /// Monte-Carlo episodes [default: 1000]
    #[arg(long, global = true, value_name = "N")]
    episodes: Option<String>,
    /// Run seed [default: 1]
    #[arg(long, global = true, value_name = "N")]
    seed: Option<String>,
    /// Trajectories for the sector chain [default: 500]
    #[arg(long, global = true, value_name = "N")]
    mobility_trajectories: Option<String>,
    /// Seed of the sector-chain trajectories [default: 1]
    #[arg(long, global = true, value_name = "N")]
    mobility_seed: Option<String>,
    /// Solver tolerance relative to the largest slot reward [default: 1e-4]
    #[arg(long, global = true, value_name = "TOL")]
    solver_tol: Option<String>,
    /// Maximum PERSEUS sweeps [default: 500]
    #[arg(long, global = true, value_name = "N")]
    max_iters: Option<String>,
    /// DT duration of the FSM policies, slots [default: 10]
    #[arg(long, global = true, value_name = "SLOTS")]
    fsm_dt_duration: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 33] = [
            ("num_antennas", &self.num_antennas),
            ("coverage_angle", &self.coverage_angle),
            ("slot_duration", &self.slot_duration),
            ("road_distance", &self.road_distance),
            ("bandwidth", &self.bandwidth),
            ("carrier_freq", &self.carrier_freq),
            ("noise_psd", &self.noise_psd),
            ("pilot_fraction", &self.pilot_fraction),
            ("handover_slots", &self.handover_slots),
            ("blockage_p10", &self.blockage_p10),
            ("blockage_p01", &self.blockage_p01),
            ("blockage_p10_bs2", &self.blockage_p10_bs2),
            ("blockage_p01_bs2", &self.blockage_p01_bs2),
            ("speed_mean", &self.speed_mean),
            ("speed_std", &self.speed_std),
            ("memory", &self.memory),
            ("num_sectors", &self.num_sectors),
            ("sidelobe_ratio", &self.sidelobe_ratio),
            ("symbols_per_slot", &self.symbols_per_slot),
            ("bt_threshold", &self.bt_threshold),
            ("dt_threshold", &self.dt_threshold),
            ("dt_durations", &self.dt_durations),
            ("power_levels", &self.power_levels),
            ("lambda", &self.lambda),
            ("lambda_grid", &self.lambda_grid),
            ("belief_set_size", &self.belief_set_size),
            ("episodes", &self.episodes),
            ("seed", &self.seed),
            ("mobility_trajectories", &self.mobility_trajectories),
            ("mobility_seed", &self.mobility_seed),
            ("solver_tol", &self.solver_tol),
            ("max_iters", &self.max_iters),
            ("fsm_dt_duration", &self.fsm_dt_duration),
        ];
        fields
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the sector-level mobility chain and write it as CSV.
    EstimateMobility {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Assemble the POMDP and write a JSON summary (states, actions, rewards, energy).
    BuildModel {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Write the nonzero kernel entries P(u', y | u, a) as CSV.
    DumpKernel {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Catalog index of a single action (default: all actions).
        #[arg(long, value_name = "INDEX")]
        action: Option<usize>,
    },
    /// Solve the POMDP with PERSEUS at the configured lambda and write the policy.
    Solve {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Belief set written by expand-beliefs (default: expand one now).
        #[arg(long, value_name = "PATH")]
        beliefs: Option<PathBuf>,
        /// Write the per-sweep value trace as JSON lines.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Exit 0 even if the solver stopped at max_iters.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Grow the belief set by stochastic simulation with exploratory actions.
    ExpandBeliefs {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Simulate episodes under one policy and write a single trade-off row.
    Simulate {
        /// perseus, fsm-heu, baseline or genie.
        #[arg(long, default_value = "perseus")]
        policy: String,
        /// Solved policy for --policy perseus (default: solve now).
        #[arg(long, value_name = "PATH")]
        policy_file: Option<PathBuf>,
        /// Transmit power for fsm-heu, baseline and genie, dBm [default: 30].
        #[arg(long, value_name = "DBM", allow_hyphen_values = true)]
        power: Option<f64>,
        /// CSV output (default: stdout).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Per-epoch episode logs as JSON lines.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Exit 0 even if an on-the-fly solve stopped at max_iters.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Trade-off curves: FSM policies and genie over power_levels, PERSEUS over lambda_grid.
    Sweep {
        /// Comma-separated subset of perseus,fsm-heu,baseline,genie.
        #[arg(long, default_value = "perseus,fsm-heu,baseline,genie")]
        policy: String,
        /// CSV output (default: stdout).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Exit 0 even if some solve stopped at max_iters.
        #[arg(long)]
        allow_unconverged: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Validation(_)
            | Error::ConfigHashMismatch { .. }
            | Error::PolicyFile(_)
            | Error::Json(_)
            | Error::EmptyScan => Failure::validation(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::runtime(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let overrides = cli.overrides.pairs();
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    Ok(ScenarioConfig::from_str_with_overrides(&text, &overrides)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

/// Opens `path` for writing, or stdout when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => Ok(Box::new(create(p)?)),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// Sidecar with the effective configuration, hash and seed of a CSV artifact.
fn write_meta(path: Option<&Path>, cfg: &ScenarioConfig, extra: &str) -> Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let meta = path.with_extension("meta.toml");
    let text = format!("# config_hash = \"{}\"\n# seed = {}\n{extra}{}", cfg.config_hash(), cfg.seed, cfg.to_text());
    std::fs::write(&meta, text).map_err(|e| io_failure(&meta, e))
}

/// First line of every JSON-lines artifact.
fn header(cfg: &ScenarioConfig) -> serde_json::Value {
    serde_json::json!({ "config_hash": cfg.config_hash(), "seed": cfg.seed })
}

fn summary(cfg: &ScenarioConfig, what: &str, start: Instant) {
    eprintln!(
        "{what}: config_hash={} seed={} elapsed={:.2}s",
        cfg.config_hash(),
        cfg.seed,
        start.elapsed().as_secs_f64()
    );
}

fn unconverged(lambdas: &[f64], allow: bool) -> Result<(), Failure> {
    if lambdas.is_empty() {
        return Ok(());
    }
    let msg = format!("solver stopped at max_iters without converging for lambda {lambdas:?}");
    if allow {
        eprintln!("warning: {msg}");
        Ok(())
    } else {
        Err(Failure::runtime(format!("{msg} (artifacts were written; pass --allow-unconverged to accept)")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    eprintln!("# effective configuration (config_hash = {})\n{}", cfg.config_hash(), cfg.to_text());
    let start = Instant::now();
    match &cli.command {
        Command::EstimateMobility { out } => {
            let table = SectorTable::new(&cfg);
            let chain = estimate_from_config::<f64>(&cfg, &table);
            std::fs::write(out, chain.to_csv()).map_err(|e| io_failure(out, e))?;
            write_meta(Some(out), &cfg, "")?;
            if !chain.unvisited.is_empty() {
                eprintln!("warning: sectors {:?} never visited; rows set to self-loops", chain.unvisited);
            }
            summary(&cfg, "estimate-mobility", start);
        }
        Command::BuildModel { out } => {
            let model = Model::build(&cfg)?;
            let doc = model_summary(&model);
            std::fs::write(out, doc).map_err(|e| io_failure(out, e))?;
            summary(&cfg, "build-model", start);
        }
        Command::DumpKernel { out, action } => {
            let model = Model::build(&cfg)?;
            let actions: Vec<usize> = match action {
                Some(a) if *a < model.num_actions() => vec![*a],
                Some(a) => return Err(Failure::validation(format!("action {a} outside 0..{}", model.num_actions()))),
                None => (0..model.num_actions()).collect(),
            };
            let mut w = create(out)?;
            let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
                writeln!(w, "action,label,state,next_state,observation,probability")?;
                let sp = model.space;
                let k = &model.kernel;
                for &a in &actions {
                    let label = model.catalog.actions[a].label();
                    for u in 0..sp.num_states() {
                        for next in 0..sp.num_states() {
                            for y in 0..sp.num_observations() {
                                let p = k.prob(a, u, next, y);
                                if p > 0.0 {
                                    writeln!(w, "{a},{label},{},{},{},{p:e}", sp.state(u), sp.state(next), sp.observation(y))?;
                                }
                            }
                        }
                    }
                }
                w.flush()
            };
            write(&mut w).map_err(|e| io_failure(out, e))?;
            write_meta(Some(out), &cfg, "")?;
            summary(&cfg, "dump-kernel", start);
        }
        Command::ExpandBeliefs { out } => {
            let model = Model::build(&cfg)?;
            let set = perseus::model_belief_set(&model);
            BeliefSetFile::from_set(&model, &set).save(out)?;
            eprintln!("beliefs: {}", set.len());
            summary(&cfg, "expand-beliefs", start);
        }
        Command::Solve { out, beliefs, trace, allow_unconverged } => {
            let model = Model::build(&cfg)?;
            let set = match beliefs {
                Some(path) => BeliefSetFile::load(path)?.to_set(&model)?,
                None => perseus::model_belief_set(&model),
            };
            let solution = perseus::solve_model(&model, cfg.lambda, &set);
            PolicyFile::from_solution(&model, cfg.lambda, &solution).save(out)?;
            if let Some(path) = trace {
                let mut w = create(path)?;
                let mut lines = || -> std::io::Result<()> {
                    writeln!(w, "{}", header(&cfg))?;
                    for (n, values) in solution.trace.iter().enumerate() {
                        let stats = n.checked_sub(1).and_then(|i| solution.sweeps.get(i));
                        let line = serde_json::json!({
                            "iteration": n,
                            "backups": stats.map_or(0, |s| s.backups),
                            "vectors": stats.map_or(1, |s| s.vectors),
                            "values": values,
                        });
                        writeln!(w, "{line}")?;
                    }
                    w.flush()
                };
                lines().map_err(|e| io_failure(path, e))?;
            }
            eprintln!(
                "solve: lambda={} sweeps={} vectors={} converged={}",
                cfg.lambda,
                solution.sweeps.len(),
                solution.alphas.len(),
                solution.converged
            );
            summary(&cfg, "solve", start);
            let failed = if solution.converged { vec![] } else { vec![cfg.lambda] };
            unconverged(&failed, *allow_unconverged)?;
        }
        Command::Simulate { policy, policy_file, power, out, trace, allow_unconverged } => {
            let model = Model::build(&cfg)?;
            let power = power.unwrap_or(30.0);
            let kind = SweepPolicy::parse(policy)
                .ok_or_else(|| Failure::validation(format!("unknown policy `{policy}`")))?;
            let mut failed = Vec::new();
            let (spec, grid) = match kind {
                SweepPolicy::Perseus => {
                    let alphas = match policy_file {
                        Some(path) => PolicyFile::load(path)?.to_alphas(&model)?,
                        None => {
                            let set = perseus::model_belief_set(&model);
                            let sol = perseus::solve_model(&model, cfg.lambda, &set);
                            if !sol.converged {
                                failed.push(cfg.lambda);
                            }
                            sol.alphas
                        }
                    };
                    (PolicySpec::Perseus(alphas), cfg.lambda)
                }
                SweepPolicy::FsmHeu => (PolicySpec::Fsm(FsmPolicy::new(&model, FsmVariant::Heuristic, power)), power),
                SweepPolicy::Baseline => (PolicySpec::Fsm(FsmPolicy::new(&model, FsmVariant::Baseline, power)), power),
                SweepPolicy::Genie => (PolicySpec::Genie { power_dbm: power }, power),
            };
            let options = SimOptions { episodes: cfg.episodes, seed: cfg.seed, track_belief: trace.is_some(), keep_log: trace.is_some() };
            let records = sim::simulate(&model, spec, options)?;
            let point = sim::aggregate(&records, cfg.lambda, cfg.bandwidth, cfg.slot_duration, kind.name(), grid, cfg.seed)?;
            let mut w = output(out.as_deref())?;
            sim::write_csv(&[point], &mut w).map_err(|e| Failure::runtime(e.to_string()))?;
            w.flush().map_err(|e| Failure::runtime(e.to_string()))?;
            write_meta(out.as_deref(), &cfg, "")?;
            if let Some(path) = trace {
                let mut tw = create(path)?;
                writeln!(tw, "{}", header(&cfg)).map_err(|e| io_failure(path, e))?;
                for r in &records {
                    for e in &r.epochs {
                        let line = serde_json::json!({ "episode": r.episode, "epoch": e });
                        writeln!(tw, "{line}").map_err(|e| io_failure(path, e))?;
                    }
                }
                tw.flush().map_err(|e| io_failure(path, e))?;
            }
            summary(&cfg, "simulate", start);
            unconverged(&failed, *allow_unconverged)?;
        }
        Command::Sweep { policy, out, allow_unconverged } => {
            let policies = policy
                .split(',')
                .map(|p| SweepPolicy::parse(p.trim()).ok_or_else(|| Failure::validation(format!("unknown policy `{p}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let model = Model::build(&cfg)?;
            let result = sim::sweep(&model, &policies)?;
            let mut w = output(out.as_deref())?;
            sim::write_csv(&result.points, &mut w).map_err(|e| Failure::runtime(e.to_string()))?;
            w.flush().map_err(|e| Failure::runtime(e.to_string()))?;
            write_meta(out.as_deref(), &cfg, "")?;
            summary(&cfg, "sweep", start);
            unconverged(&result.unconverged, *allow_unconverged)?;
        }
    }
    Ok(())
}

/// JSON description of an assembled model.
fn model_summary(model: &Model) -> String {
    let sp = model.space;
    let observations: Vec<String> = (0..sp.num_observations()).map(|y| sp.observation(y).to_string()).collect();
    let actions: Vec<_> = model
        .catalog
        .actions
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            serde_json::json!({
                "index": a,
                "label": spec.label(),
                "spec": spec,
                "energy_j": model.energy[a],
                "reward_bits": model.rewards[a],
            })
        })
        .collect();
    let doc = serde_json::json!({
        "config_hash": model.cfg.config_hash(),
        "seed": model.cfg.seed,
        "gamma": model.budget.gamma,
        "states": sp.labels(),
        "observations": observations,
        "unvisited_sectors": model.mobility.unvisited,
        "actions": actions,
    });
    serde_json::to_string_pretty(&doc).expect("model summary serializes")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
