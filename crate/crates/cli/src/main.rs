use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use fogsim_agent::{serve, synthetic_registry, AgentConfig};
use fogsim_core::config::{ConfigError, ExperimentConfig, RegistrySource};
use fogsim_core::model::build_topology;
use fogsim_core::represent::{probe, serialize_xml, Registry};
use fogsim_core::sim::{self, Arm, SimError};

#[derive(Parser)]
#[command(name = "fogsim", version, about = "Time-slotted fog computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured policy once per seed; writes metrics CSVs and summary.txt.
    Run {
        config: PathBuf,
        /// Output directory (overrides run.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this seed instead of run.seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Baseline vs Lyapunov over policy.v_list and run.seeds; writes every
    /// arm's CSV and comparison.txt.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve resource documents over HTTP until interrupted.
    Serve {
        config: PathBuf,
        /// Listen address (overrides agent.bind_address).
        #[arg(long)]
        bind: Option<String>,
    },
    /// Print this machine's resource document as XML.
    Probe,
    /// Check a config; exit 0 when valid, violations on stderr otherwise.
    Validate { config: PathBuf },
}

enum Failure {
    /// Bad config or usage: exit 2.
    Invalid(String),
    /// Anything that went wrong while doing the work: exit 1.
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(context: &str) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig::load_valid(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(runtime(&path.display().to_string()))
}

fn write_csv(path: &Path, records: &[sim::MetricsRecord]) -> Result<(), Failure> {
    let mut buf = Vec::new();
    sim::write_metrics_csv(records, &mut buf).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(path, &buf)
}

fn output_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| config.run.output_dir.clone());
    fs::create_dir_all(&dir).map_err(runtime(&dir.display().to_string()))?;
    Ok(dir)
}

fn cmd_run(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let config = load(path)?;
    let dir = output_dir(&config, out)?;
    let seeds = seed.map_or_else(|| config.run.seeds.clone(), |s| vec![s]);
    let policy = config.policy();
    let mut summaries = Vec::new();
    for seed in seeds {
        let output = sim::run(&config.topology, &policy, config.run.slots, seed)?;
        let arm = Arm {
            kind: policy.kind,
            v: policy.v,
            seed,
        };
        write_csv(&dir.join(arm.file_name()), &output.records)?;
        let s = &output.summary;
        println!(
            "{} V={} seed={}: mean delay {:.4} slots, admitted {:.4}, mean total queue {:.2}",
            s.policy, s.v, s.seed, s.mean_delay_slots, s.admitted_fraction, s.mean_total_queue
        );
        summaries.push(output.summary);
    }
    write_file(&dir.join("summary.txt"), sim::summaries_to_text(&summaries).as_bytes())
}

fn cmd_compare(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let config = load(path)?;
    let dir = output_dir(&config, out)?;
    let cmp = sim::compare_experiment(&config)?;
    for (arm, output) in &cmp.runs {
        write_csv(&dir.join(arm.file_name()), &output.records)?;
    }
    write_file(
        &dir.join("comparison.txt"),
        sim::report_to_text(&cmp.report).as_bytes(),
    )?;
    for v in &cmp.report.per_v {
        println!(
            "V={}: baseline {:.4} slots, lyapunov {:.4} slots, mean reduction {:.1}%, lyapunov lower in {}/{} seeds",
            v.v,
            v.baseline_mean_delay,
            v.lyapunov_mean_delay,
            100.0 * v.mean_reduction,
            v.lyapunov_wins,
            v.paired.len()
        );
    }
    Ok(())
}

fn cmd_serve(path: &Path, bind: Option<String>) -> Result<(), Failure> {
    let config = load(path)?;
    let registry = match config.agent.registry {
        RegistrySource::Synthetic => {
            let seed = config.run.seeds[0];
            let topology = build_topology(&config.topology, seed).map_err(|e| Failure::Invalid(e.to_string()))?;
            synthetic_registry(&topology, 0)
        }
        RegistrySource::Probe => Registry::from_documents([probe::probe_host().document]),
    };
    let agent = AgentConfig {
        bind_address: bind.unwrap_or(config.agent.bind_address.clone()),
        registry: Arc::new(registry),
        read_timeout_ms: config.agent.read_timeout_ms,
    };
    let rt = tokio::runtime::Runtime::new().map_err(runtime("tokio runtime"))?;
    rt.block_on(async {
        let handle = serve(agent).await.map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("listening on {}", handle.base_url());
        let _ = std::io::stdout().flush();
        tokio::signal::ctrl_c().await.map_err(runtime("signal"))?;
        handle.shutdown().await.map_err(runtime("shutdown"))
    })
}

fn cmd_probe() -> Result<(), Failure> {
    let probed = probe::probe_host();
    let fallbacks = probed.probed.fallbacks();
    if !fallbacks.is_empty() {
        eprintln!("fogsim: using defaults for {}", fallbacks.join(", "));
    }
    println!("{}", serialize_xml(&probed.document));
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let config = ExperimentConfig::load(path)?;
    let violations = config.violations();
    if violations.is_empty() {
        return Ok(());
    }
    for v in &violations {
        eprintln!("{}: {v}", path.display());
    }
    Err(Failure::Invalid(format!(
        "{} is invalid ({} violations)",
        path.display(),
        violations.len()
    )))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, out, seed),
        Command::Compare { config, out } => cmd_compare(&config, out),
        Command::Serve { config, bind } => cmd_serve(&config, bind),
        Command::Probe => cmd_probe(),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("fogsim: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("fogsim: {msg}");
            ExitCode::from(1)
        }
    }
}
