use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pdmp_mfc::scenario::{run_scenario, RunOptions, ScenarioName};
use pdmp_mfc::{Error, ScenarioConfig};

/// Mean-field control of water-heater populations.
#[derive(Debug, Parser)]
#[command(name = "pdmp-mfc", version)]
struct Cli {
    /// nominal, tracking, pricing or pricing3class
    scenario: String,

    /// Scenario configuration (TOML, or the JSON manifest of an earlier run).
    #[arg(long, default_value = "configs/default.toml")]
    config: PathBuf,

    /// Output directory; defaults to out/<scenario>.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Number of simulated trajectories M.
    #[arg(long)]
    trajectories: Option<usize>,

    /// Number of Uzawa iterations K.
    #[arg(long)]
    iterations: Option<usize>,

    /// Also write value function, control and density fields.
    #[arg(long)]
    emit_fields: bool,

    /// Trajectories written by the nominal scenario.
    #[arg(long, default_value_t = 20)]
    sample_trajectories: usize,

    /// Record elapsed time in diagnostics.csv (breaks byte-identical reruns).
    #[arg(long)]
    wallclock: bool,

    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let name: ScenarioName = cli.scenario.parse()?;
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::Usage(e.to_string()))?;
    }
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.algo.seed = seed;
    }
    if let Some(m) = cli.trajectories {
        cfg.algo.trajectories = m;
    }
    if let Some(k) = cli.iterations {
        cfg.algo.iterations = k;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out").join(name.as_str()));
    let opts = RunOptions {
        out_dir: out,
        emit_fields: cli.emit_fields,
        sample_trajectories: cli.sample_trajectories,
        wallclock: cli.wallclock,
    };
    let report = run_scenario(name, &cfg, &opts)?;
    for (k, v) in &report.metrics {
        println!("{k} = {v:.6}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
