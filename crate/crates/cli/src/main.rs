use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dfpsim::comm::GateKind;
use dfpsim::config::{load_game, ConfigFile, ProbabilitySpec};
use dfpsim::engine::{run_experiment_with_jobs, ExperimentResult, SimConfig};
use dfpsim::game::{generate_scenario, GameSpec};
use dfpsim::netsim::{Purpose, RngStream};
use dfpsim::oracle::{assumption_1_violations, check_weak_acyclicity, enumerate_pure_ne};
use dfpsim::output::{aggregate_csv, replications_csv, Summary};
use dfpsim::{ActionIndex, Error, PayloadKind, ReconstructionRule};

mod sweep;

const EXIT_CONFIG: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(name = "dfpsim", version, about = "Fictitious play over lossy networks with voluntary communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its aggregated trace and summary.
    Run(RunArgs),
    /// Run one experiment per grid point.
    Sweep(sweep::SweepArgs),
    /// Enumerate pure equilibria and check weak acyclicity of a small game.
    CheckNe(CheckNeArgs),
}

/// Flags mirroring the configuration keys. Flags override the config file.
#[derive(Args, Debug, Default, Clone)]
struct SimArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "agents")]
    n_agents: Option<usize>,
    #[arg(long = "targets")]
    n_targets: Option<usize>,
    /// dfp, vl1, vl2, vl3 or custom.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    eta3: Option<f64>,
    /// always, novelty_band_and_similarity or novelty_upper_only.
    #[arg(long, value_parser = parse_gate)]
    gate: Option<GateKind>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Link success probability or a matrix file.
    #[arg(long, value_parser = parse_probability)]
    p_comm: Option<ProbabilitySpec>,
    /// Acknowledgement success probability or a matrix file.
    #[arg(long, value_parser = parse_probability)]
    beta_ack: Option<ProbabilitySpec>,
    #[arg(long = "steps")]
    t_final: Option<u64>,
    #[arg(long = "reps")]
    replications: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_every: Option<u64>,
    /// full or limited.
    #[arg(long)]
    payload: Option<PayloadKind>,
    /// full_support or uniform_remainder.
    #[arg(long)]
    reconstruction: Option<ReconstructionRule>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    second_order_stores_reconstruction: Option<bool>,
    /// Stop a replication once an equilibrium has held this many steps (100 if no value).
    #[arg(long, num_args = 0..=1, default_missing_value = "100")]
    early_stop_window: Option<u64>,
    #[arg(long)]
    game_file: Option<PathBuf>,
    /// Output directory; defaults to $DFPSIM_OUT_DIR, then the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for replications.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Base name of the output files; defaults to the protocol name.
    #[arg(long)]
    name: Option<String>,
    /// Also write every replication's trace.
    #[arg(long)]
    per_replication: bool,
    /// Also write every agent's final beliefs, one JSON record per line.
    #[arg(long)]
    dump_state: bool,
}

#[derive(Args)]
struct CheckNeArgs {
    #[arg(long)]
    game_file: Option<PathBuf>,
    /// Random target scenario size when no game file is given.
    #[arg(long = "agents", default_value_t = 3)]
    n_agents: usize,
    #[arg(long = "targets")]
    n_targets: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_gate(s: &str) -> Result<GateKind, String> {
    match s {
        "always" => Ok(GateKind::Always),
        "novelty_band_and_similarity" => Ok(GateKind::NoveltyBandAndSimilarity),
        "novelty_upper_only" => Ok(GateKind::NoveltyUpperOnly),
        other => Err(format!("unknown gate {other:?}")),
    }
}

fn parse_probability(s: &str) -> Result<ProbabilitySpec, String> {
    Ok(match s.parse::<f64>() {
        Ok(v) => ProbabilitySpec::Scalar(v),
        Err(_) => ProbabilitySpec::File(PathBuf::from(s)),
    })
}

impl SimArgs {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            n_agents: self.n_agents,
            n_targets: self.n_targets,
            protocol: self.protocol.clone(),
            eta1: self.eta1,
            eta2: self.eta2,
            eta3: self.eta3,
            gate: self.gate,
            rho: self.rho,
            epsilon: self.epsilon,
            p_comm: self.p_comm.clone(),
            beta_ack: self.beta_ack.clone(),
            t_final: self.t_final,
            replications: self.replications,
            seed: self.seed,
            record_every: self.record_every,
            payload: self.payload,
            reconstruction: self.reconstruction,
            second_order_stores_reconstruction: self.second_order_stores_reconstruction,
            early_stop_window: self.early_stop_window,
            game_file: self.game_file.clone(),
            out_dir: self.out_dir.clone(),
        }
    }

    /// Config file overlaid with flags.
    fn merged(&self) -> anyhow::Result<ConfigFile> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        Ok(base.overlay(self.flags()))
    }
}

fn out_dir(cfg: &ConfigFile) -> PathBuf {
    cfg.out_dir
        .clone()
        .or_else(|| std::env::var_os("DFPSIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Output files of one experiment.
#[derive(Debug, Serialize)]
struct Written {
    csv: PathBuf,
    summary: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    replications: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<PathBuf>,
}

#[derive(Serialize)]
struct StateRecord<'a> {
    replication: u64,
    #[serde(flatten)]
    agent: &'a dfpsim::AgentSnapshot,
}

struct Extras {
    per_replication: bool,
    dump_state: bool,
}

fn execute(
    mut sim: SimConfig,
    effective: &ConfigFile,
    jobs: Option<usize>,
    dir: &Path,
    name: &str,
    extras: &Extras,
) -> anyhow::Result<Written> {
    sim.keep_final_states = extras.dump_state;
    let result: ExperimentResult = run_experiment_with_jobs(&sim, jobs)?;
    let csv = dir.join(format!("{name}.csv"));
    let summary_path = dir.join(format!("{name}.summary.json"));
    let summary = Summary::new(&result, sim.seed, sim.t_final, effective);

    let mut written = Written {
        csv: csv.clone(),
        summary: summary_path.clone(),
        replications: None,
        states: None,
    };
    if extras.per_replication {
        let path = dir.join(format!("{name}.replications.csv"));
        write_atomic(&path, replications_csv(&result.replications).as_bytes())?;
        written.replications = Some(path);
    }
    if extras.dump_state {
        let mut out = Vec::new();
        for rep in &result.replications {
            for agent in rep.final_states.iter().flatten() {
                serde_json::to_writer(&mut out, &StateRecord { replication: rep.rep_index, agent })?;
                out.push(b'\n');
            }
        }
        let path = dir.join(format!("{name}.states.jsonl"));
        write_atomic(&path, &out)?;
        written.states = Some(path);
    }
    write_atomic(&csv, aggregate_csv(&result.aggregate).as_bytes())?;
    write_atomic(&summary_path, &to_json(&summary)?)?;
    Ok(written)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let merged = args.sim.merged()?;
    let (sim, effective) = merged.resolve()?;
    let dir = out_dir(&effective);
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| effective.protocol.clone().unwrap_or_else(|| "run".into()));
    let extras = Extras {
        per_replication: args.per_replication,
        dump_state: args.dump_state,
    };
    let written = execute(sim, &effective, args.sim.jobs, &dir, &name, &extras)?;
    println!("{}", written.csv.display());
    println!("{}", written.summary.display());
    Ok(())
}

fn format_profile(p: &[ActionIndex]) -> String {
    p.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_check_ne(args: CheckNeArgs) -> anyhow::Result<()> {
    let game: GameSpec = match &args.game_file {
        Some(path) => load_game(path)?,
        None => {
            let k = args.n_targets.unwrap_or(args.n_agents);
            let mut rng = RngStream::new(args.seed, 0, Purpose::Scenario);
            generate_scenario(args.n_agents, k, &mut rng)?.into()
        }
    };
    let ne = enumerate_pure_ne(&game)?;
    let violations = assumption_1_violations(&game)?;
    let acyclic = check_weak_acyclicity(&game)?;
    println!("agents = {}", game.n_agents());
    println!("actions = {}", game.n_actions());
    println!("pure_ne = {}", ne.len());
    for p in &ne {
        println!("ne: {}", format_profile(p));
    }
    println!("weakly_acyclic = {}", acyclic.weakly_acyclic);
    println!("assumption_1 = {}", violations.is_empty());
    for (p, i) in &violations {
        println!("indifferent: agent {i} at {}", format_profile(p));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Capacity { .. }) => EXIT_CAPACITY,
        Some(Error::InvalidConfig(_) | Error::Parse(_) | Error::InvalidInput(_) | Error::MalformedPayload(_)) => {
            EXIT_CONFIG
        }
        Some(Error::UnsupportedMetric(_)) => EXIT_CONFIG,
        None if err.is::<sweep::GridError>() => EXIT_CONFIG,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => sweep::cmd_sweep(args),
        Command::CheckNe(args) => cmd_check_ne(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn ensure_unique(names: &[String]) -> anyhow::Result<()> {
    let mut sorted = names.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        bail!(sweep::GridError(format!("grid point {} appears twice", w[0])));
    }
    Ok(())
}

fn missing(what: &str) -> anyhow::Error {
    anyhow!(sweep::GridError(what.to_string()))
}
