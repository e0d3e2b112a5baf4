use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use hvnsim::config::{read_entries, Entry};
use hvnsim::experiment::{compare, preset, run_sweep, ExperimentSpec, SweepTable, PRESETS};
use hvnsim::{run_replicates, run_traced, ConfigError, RunConfig, SimError};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_TREND: u8 = 4;

#[derive(Parser)]
#[command(name = "hvnsim", version, about = "Hybrid 802.11p/LTE vehicular network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print the aggregate over replicates.
    Run(Common),
    /// Run a parameter sweep from a preset or `sweep.<key>=...` config lines.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Built-in sweep (fig4a, fig4b, fig4c, fig5a, fig5b, fig5c, fig6).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Compare all schemes on the same seeds and check the expected trends.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file with `key=value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// qos, periodic, nobfa or nolte.
    #[arg(long)]
    scheme: Option<String>,
    /// Period of the periodic scheme in seconds.
    #[arg(long, value_name = "S")]
    period: Option<f64>,
    #[arg(long, env = "HVNSIM_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u32>,
    /// 150 vehicles, 100 s, 10 replicates instead of the desk-scale defaults
    /// (`sim.scale=paper`).
    #[arg(long)]
    paper_scale: bool,
    /// Write the event trace of the first replicate to PATH (`output.trace`).
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write the CSV to PATH instead of stdout (`output.csv`).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Extra `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Trend,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl Common {
    /// Defaults, then the file, then flags. Returns the config file entries
    /// that are not plain settings (sweeps and experiment metadata).
    fn resolve(&mut self) -> Result<(RunConfig, Vec<Entry>), ConfigError> {
        let mut cfg = RunConfig::desk_scale();
        let mut extra = Vec::new();
        if let Some(path) = &self.config {
            for e in read_entries(path)? {
                match e.key.as_str() {
                    "output.trace" => {
                        self.trace.get_or_insert_with(|| PathBuf::from(&e.value));
                    }
                    "output.csv" => {
                        self.out.get_or_insert_with(|| PathBuf::from(&e.value));
                    }
                    k if k.starts_with("sweep.") || k.starts_with("experiment.") => extra.push(e),
                    _ => cfg.set(&e.key, &e.value)?,
                }
            }
        }
        if self.paper_scale {
            cfg.make_paper_scale();
        }
        if let Some(s) = &self.scheme {
            cfg.set("scheme", s)?;
        }
        if let Some(p) = self.period {
            cfg.set("scheme.period", &p.to_string())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.replicates {
            cfg.replicates = n;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ConfigError::value("--set", kv, "expected KEY=VALUE"))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok((cfg, extra))
    }

    fn output(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn write_trace(&self, cfg: &RunConfig) -> Result<(), Failure> {
        if let Some(path) = &self.trace {
            let mut w = create(path)?;
            run_traced(cfg, Some(&mut w))?;
            w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_table(common: &Common, table: &SweepTable) -> Result<(), Failure> {
    let mut out = common.output()?;
    table.write_csv(&mut out).context("writing CSV")?;
    out.flush().context("writing CSV")?;
    Ok(())
}

fn cmd_run(common: &mut Common) -> Result<(), Failure> {
    let (cfg, extra) = common.resolve()?;
    if let Some(e) = extra.iter().find(|e| e.key.starts_with("sweep.")) {
        return Err(ConfigError::invalid(format!("`{}` needs the sweep command", e.key)).into());
    }
    common.write_trace(&cfg)?;
    let metrics = run_replicates(&cfg)?;
    let table = SweepTable {
        name: "run".into(),
        columns: Vec::new(),
        rows: vec![hvnsim::experiment::SweepRow {
            params: Vec::new(),
            metrics,
        }],
    };
    write_table(common, &table)
}

fn cmd_sweep(common: &mut Common, preset_name: Option<&str>) -> Result<(), Failure> {
    let (cfg, extra) = common.resolve()?;
    let mut spec = match preset_name {
        Some(name) => preset(name, cfg.clone()).ok_or_else(|| {
            ConfigError::value("--preset", name, format!("expected one of {}", PRESETS.join(", ")))
        })?,
        None => ExperimentSpec::new("sweep", cfg.clone()),
    };
    let file_spec = ExperimentSpec::from_entries(cfg, &extra)?;
    if preset_name.is_none() || !file_spec.sweeps.is_empty() {
        spec.sweeps.extend(file_spec.sweeps);
        if extra.iter().any(|e| e.key == "experiment.name") {
            spec.name = file_spec.name;
        }
    }
    if spec.sweeps.is_empty() {
        return Err(ConfigError::invalid("nothing to sweep: pass --preset or add sweep.<key>=v1,v2 lines").into());
    }
    common.write_trace(&spec.base)?;
    let table = run_sweep(&spec)?;
    write_table(common, &table)
}

fn cmd_compare(common: &mut Common) -> Result<(), Failure> {
    let (cfg, _) = common.resolve()?;
    common.write_trace(&cfg)?;
    let cmp = compare(&cfg)?;
    let mut out = common.output()?;
    cmp.write_csv(&mut out).context("writing CSV")?;
    out.flush().context("writing CSV")?;
    let mut err = io::stderr().lock();
    for c in &cmp.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(err, "{verdict} {}: {}", c.name, c.detail);
    }
    if cmp.all_passed() {
        Ok(())
    } else {
        Err(Failure::Trend)
    }
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    let result = match &mut cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, preset } => cmd_sweep(common, preset.as_deref()),
        Command::Compare(c) => cmd_compare(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Trend) => {
            eprintln!("trend check failed");
            ExitCode::from(EXIT_TREND)
        }
    }
}
