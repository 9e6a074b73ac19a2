//! `prosched`: experiment sweeps and estimator demos for proactive scheduling.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use proactive_sched::mobility::{Location, LocationModel};
use proactive_sched::online::{build_value_tables, ValueTables};
use proactive_sched::sim::{Experiment, ExperimentConfig};
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use config::ConfigFile;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<proactive_sched::Error> for CliError {
    fn from(e: proactive_sched::Error) -> Self {
        use proactive_sched::Error as E;
        match e {
            E::Divergent(_) | E::NotConverged(_) => CliError::Numerical(e.to_string()),
            E::Cache(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// Every global flag can also be set through a `PROSCHED_*` environment
/// variable; flags win over the environment, and both win over the config file.
#[derive(Debug, Parser)]
#[command(name = "prosched", version, about)]
struct Cli {
    /// TOML experiment config; missing keys keep the subcommand defaults.
    #[arg(long, global = true, env = "PROSCHED_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true, env = "PROSCHED_SEED")]
    seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true, env = "PROSCHED_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "PROSCHED_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Offline water-filling vs reactive over packet size and window size.
    SweepOffline(SweepArgs),
    /// Online schedulers (dp, ces, subii) vs reactive.
    SweepOnline(SweepArgs),
    /// Saved energy in dB for fixed request probabilities.
    SavedEnergy(SweepArgs),
    /// Prints the request probability estimate p_t for a location model.
    EstimateP(EstimateArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Directory for cached value tables [default: <out>/cache].
    #[arg(long, env = "PROSCHED_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Always rebuild value tables and do not write the cache.
    #[arg(long)]
    no_cache: bool,
    /// Also write every trial record as JSON lines.
    #[arg(long)]
    dump_trials: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// TOML file with `transition` (rows) and `request` (per-location probabilities).
    #[arg(long, required_unless_present = "random")]
    model: Option<PathBuf>,
    /// Draw a random model with this many locations from the seed instead.
    #[arg(long, conflicts_with = "model")]
    random: Option<usize>,
    /// Current location, 1-based.
    #[arg(long)]
    location: usize,
    /// Slot index t >= 1; the deadline is slot 1.
    #[arg(long)]
    slot: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prosched: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::SweepOffline(args) => sweep(&cli, args, "sweep-offline", config::offline_defaults(), "offline"),
        Command::SweepOnline(args) => sweep(&cli, args, "sweep-online", config::online_defaults(), "online"),
        Command::SavedEnergy(args) => sweep(&cli, args, "saved-energy", config::saved_energy_defaults(), "saved_energy"),
        Command::EstimateP(args) => estimate_p(&cli, args),
    }
}

fn resolve_config(cli: &Cli, defaults: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut cfg = file.apply(defaults);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs(cli: &Cli) -> Result<usize, CliError> {
    match cli.jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

// Loads the value tables from the cache, or builds and caches them.
fn tables_for(cfg: &ExperimentConfig, dir: &Path, use_cache: bool) -> Result<(Option<Arc<ValueTables>>, Option<PathBuf>), CliError> {
    let Some((max_bits, horizon)) = cfg.required_tables() else {
        return Ok((None, None));
    };
    let key = ValueTables::cache_key(&cfg.channel, max_bits, horizon, &cfg.grid);
    let digest = hex::encode(Sha256::digest(key.as_bytes()));
    let path = dir.join(format!("tables-{}.bin", &digest[..16]));
    if use_cache {
        if let Ok(bytes) = std::fs::read(&path) {
            match ValueTables::from_bytes(&bytes, &key) {
                Ok(t) => return Ok((Some(Arc::new(t)), Some(path))),
                Err(e) => eprintln!("prosched: ignoring table cache {}: {e}", path.display()),
            }
        }
    }
    let started = Instant::now();
    let tables = build_value_tables(&cfg.channel, max_bits, horizon, cfg.grid)?;
    eprintln!("prosched: built value tables in {:.1} s", started.elapsed().as_secs_f64());
    if !use_cache {
        return Ok((Some(Arc::new(tables)), None));
    }
    create_dir(dir)?;
    std::fs::write(&path, tables.to_bytes(&key)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((Some(Arc::new(tables)), Some(path)))
}

fn sweep(cli: &Cli, args: &SweepArgs, command: &str, defaults: ExperimentConfig, stem: &str) -> Result<(), CliError> {
    let started = Instant::now();
    let started_unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let cfg = resolve_config(cli, defaults)?;
    let jobs = jobs(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;

    create_dir(&cli.out)?;
    let cache_dir = args.cache_dir.clone().unwrap_or_else(|| cli.out.join("cache"));
    let (tables, table_cache) = pool.install(|| tables_for(&cfg, &cache_dir, !args.no_cache))?;
    let experiment = Experiment::with_tables(cfg.clone(), tables)?;
    let records = pool.install(|| experiment.run_trials())?;
    let rows = proactive_sched::sim::summarize(&records);

    let csv_path = cli.out.join(format!("{stem}.csv"));
    if command == "saved-energy" {
        output::write_saved(&csv_path, &rows)?;
    } else {
        output::write_sweep(&csv_path, &rows)?;
    }
    let mut outputs = vec![csv_path];
    if args.dump_trials {
        let path = cli.out.join(format!("{stem}.trials.jsonl"));
        output::write_trials(&path, &records)?;
        outputs.push(path);
    }
    let manifest = output::RunManifest {
        tool: "prosched",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        jobs,
        config: &cfg,
        started_unix_seconds,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.clone(),
        table_cache,
    };
    manifest.write(&cli.out.join(format!("{stem}.manifest.json")))?;
    for path in &outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn estimate_p(cli: &Cli, args: &EstimateArgs) -> Result<(), CliError> {
    let model: LocationModel = match (&args.model, args.random) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(k)) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(1));
            LocationModel::random(k, &mut rng)?
        }
        (None, None) => return Err(CliError::Config("either --model or --random is required".into())),
    };
    let k = model.locations();
    if args.location == 0 || args.location > k {
        return Err(CliError::Config(format!("--location must be in 1..={k}")));
    }
    if args.slot == 0 {
        return Err(CliError::Config("--slot must be at least 1".into()));
    }
    let from = Location(args.location - 1);
    let row = model.deadline_distribution(from, args.slot)?;
    let p = model.estimate_request_probability(from, args.slot)?;
    if args.random.is_some() {
        for i in 0..k {
            let cells: Vec<String> = model.row(i).iter().map(|&x| output::sig9(x)).collect();
            println!("L[{}] = {}", i + 1, cells.join(" "));
        }
        let g: Vec<String> = model.request_stats().iter().map(|&x| output::sig9(x)).collect();
        println!("g = {}", g.join(" "));
    }
    let cells: Vec<String> = row.iter().map(|&x| output::sig9(x)).collect();
    println!("L^{}[{}] = {}", args.slot - 1, args.location, cells.join(" "));
    println!("p_{} = {}", args.slot, output::sig9(p));
    Ok(())
}
