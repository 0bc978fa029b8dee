use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faultscope::campaign::{evaluate, run_campaign, CampaignReport, Verdict};
use faultscope::config::{CampaignFile, ConfigError, ModelSelection, OracleSpec};
use faultscope::emu::{ArchLevel, NoHooks};
use faultscope::report::{stats_text, HeatmapGrid, ScatterGrid, DEFAULT_BINS};
use faultscope::tracer;

const EXIT_EXPLOITABLE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(name = "faultscope", version, about = "Fault-injection simulation for ARM-M firmware")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Overrides for the campaign file. Every option also works without one.
#[derive(Args)]
struct Opts {
    /// Campaign file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    binary: Option<PathBuf>,
    /// Symbol map (`nm` output or `name addr` lines).
    #[arg(long, global = true)]
    symbols: Option<PathBuf>,
    #[arg(long, global = true, env = "FAULTSCOPE_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    max_order: Option<usize>,
    /// Instruction budget per run.
    #[arg(long, global = true)]
    timeout: Option<u64>,
    /// Preset name, comma-separated model ids, or a JSON model file.
    #[arg(long, global = true)]
    models: Option<String>,
    /// Exploitability model: address-reached, output-mismatch or dfa-aes.
    #[arg(long, global = true)]
    oracle: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    arch: Option<ArchLevel>,
    /// Built-in profile name or JSON profile file.
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the program once without faults.
    Run,
    /// Run the fault campaign and write report.json.
    Simulate {
        /// Replay every exploitable combination after the campaign.
        #[arg(long)]
        audit: bool,
    },
    /// Replay one reported combination instruction by instruction.
    Trace {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        json: bool,
    },
    /// Export views of a report.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// heatmap.csv and heatmap.pgm of first-order results.
        #[arg(long)]
        heatmap: bool,
        /// scatter.csv of second-order results.
        #[arg(long)]
        scatter: bool,
        /// Print the counters.
        #[arg(long)]
        stats: bool,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Audit(usize),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

impl Opts {
    fn campaign_file(&self) -> Result<CampaignFile, Failure> {
        let mut f = match &self.config {
            Some(p) => CampaignFile::load(p)?,
            None => CampaignFile::default(),
        };
        if self.binary.is_some() {
            f.binary = self.binary.clone();
        }
        if self.symbols.is_some() {
            f.symbols = self.symbols.clone();
        }
        f.workers = self.workers.or(f.workers);
        f.max_order = self.max_order.or(f.max_order);
        f.timeout = self.timeout.or(f.timeout);
        f.arch = self.arch.or(f.arch);
        if let Some(p) = &self.profile {
            f.profile = Some(p.clone());
        }
        if let Some(m) = &self.models {
            f.models = Some(ModelSelection::Named(m.clone()));
        }
        if let Some(name) = &self.oracle {
            let spec = f.oracle.as_ref().ok_or_else(|| {
                Failure::Config(format!(
                    "--oracle {name} needs its parameters from a campaign file (one of {})",
                    OracleSpec::NAMES.join(", ")
                ))
            })?;
            f.oracle = Some(spec.rename(name)?);
        }
        Ok(f)
    }
}

fn load_report(path: &Path) -> Result<CampaignReport, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    CampaignReport::from_json(&text).map_err(|e| io_err(path, e))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, data).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn out_dir(dir: &Path) -> Result<&Path, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir)
}

fn cmd_run(opts: &Opts) -> Result<u8, Failure> {
    let file = opts.campaign_file()?;
    let config = file.build()?;
    let mut emu = config.emulator.clone();
    let start = emu.instr_count();
    let outcome = emu.run_until(&mut NoHooks, &config.halting_points, config.timeout);
    let verdict = evaluate(config.oracle.as_ref(), &emu.state, &outcome);
    println!("outcome: {outcome:?}");
    println!("instructions: {}", emu.instr_count() - start);
    println!("verdict: {verdict}");
    Ok(if verdict == Verdict::Exploitable { EXIT_EXPLOITABLE } else { 0 })
}

fn cmd_simulate(opts: &Opts, audit: bool) -> Result<u8, Failure> {
    let config = opts.campaign_file()?.build()?;
    let report = run_campaign(&config).map_err(|e| Failure::Config(e.to_string()))?;
    let dir = out_dir(&opts.out)?;
    write(&dir.join("report.json"), report.to_json())?;
    print!("{}", stats_text(&report));
    if audit {
        let failures = tracer::audit(&config, &report);
        for f in &failures {
            eprintln!("audit: {f}");
        }
        println!("audit: {} of {} replayed", report.exploitable.len() - failures.len(), report.exploitable.len());
        if !failures.is_empty() {
            return Err(Failure::Audit(failures.len()));
        }
    }
    Ok(if report.exploitable.is_empty() { 0 } else { EXIT_EXPLOITABLE })
}

fn cmd_trace(opts: &Opts, report: &Path, index: usize, json: bool) -> Result<u8, Failure> {
    let report = load_report(report)?;
    let finding = report.exploitable.get(index).ok_or_else(|| {
        Failure::Config(format!("index {index} out of range ({} findings)", report.exploitable.len()))
    })?;
    let config = opts.campaign_file()?.build()?;
    let replay = tracer::replay(
        &config.emulator,
        &finding.faults,
        &config.halting_points,
        config.timeout,
        config.oracle.as_ref(),
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&replay).expect("trace serializes"));
    } else {
        print!("{}", replay.to_text());
    }
    Ok(0)
}

fn cmd_report(opts: &Opts, path: &Path, heatmap: bool, scatter: bool, stats: bool, bins: usize) -> Result<u8, Failure> {
    let report = load_report(path)?;
    let csv_err = |p: &Path, e: csv::Error| io_err(p, e);
    if heatmap {
        let dir = out_dir(&opts.out)?;
        let grid = HeatmapGrid::from_report(&report, bins);
        let csv_path = dir.join("heatmap.csv");
        let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
        grid.write_csv(file).map_err(|e| csv_err(&csv_path, e))?;
        write(&dir.join("heatmap.pgm"), grid.to_pgm())?;
    }
    if scatter {
        let dir = out_dir(&opts.out)?;
        let csv_path = dir.join("scatter.csv");
        let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
        ScatterGrid::from_report(&report)
            .write_csv(file)
            .map_err(|e| csv_err(&csv_path, e))?;
    }
    if stats || !(heatmap || scatter) {
        print!("{}", stats_text(&report));
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run => cmd_run(&cli.opts),
        Cmd::Simulate { audit } => cmd_simulate(&cli.opts, *audit),
        Cmd::Trace { report, index, json } => cmd_trace(&cli.opts, report, *index, *json),
        Cmd::Report { report, heatmap, scatter, stats, bins } => {
            cmd_report(&cli.opts, report, *heatmap, *scatter, *stats, *bins)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Audit(n)) => {
            eprintln!("error: {n} combinations failed to replay");
            ExitCode::from(EXIT_AUDIT)
        }
    }
}
