//! Command-line front end: oracle queries, single runs, seed sweeps and
//! SVG plots, all driven by a JSON config.

pub mod config;
pub mod error;
pub mod plot;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mumab_core::{gap_oracle, run_episode, run_sweep, ProtocolParams};
use serde::Deserialize;

use crate::config::{load_path, ConfigFile, MatrixFile};
use crate::error::{CliError, Result};
use crate::plot::{read_curve, render, PlotOptions};
use crate::report::{write_curve, write_json, write_trace, OracleReport, RunSummary, SweepSummary};

#[derive(Debug, Parser)]
#[command(
    name = "mumab",
    version,
    about = "Decentralized multi-user bandit simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print J1, J2, the gap and every optimal matching of a mean matrix.
    Oracle(OracleArgs),
    /// Simulate one seed; write the per-step trace and a summary.
    Run(RunArgs),
    /// Simulate many seeds; write the averaged curve and a summary.
    Sweep(SweepArgs),
    /// Render a trace or curve CSV as SVG.
    Plot(PlotArgs),
    /// Check a config and print its fully resolved form.
    ValidateConfig(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Matrix file `{"k", "m", "values"}`.
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    pub matrix: Option<PathBuf>,
    /// Take the matrix from a run config instead.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for relative output paths.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Accept reward distributions that can pay zero without a collision.
    #[arg(long)]
    pub allow_zero_atom: bool,
    /// Also plot the closed-form bound (needs output.plot in the config).
    #[arg(long)]
    pub overlay_bound: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Use seeds 0..N.
    #[arg(long, conflicts_with = "seed_list")]
    pub seeds: Option<u32>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trace CSV from `run` or curve CSV from `sweep`.
    pub input: PathBuf,
    /// Output SVG (default: input with an .svg extension).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON whose parameters define the bound.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, requires = "summary")]
    pub overlay_bound: bool,
    /// Add the log-x panel even without the bound.
    #[arg(long)]
    pub log_x: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub allow_zero_atom: bool,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Oracle(a) => oracle(a, out),
        Command::Run(a) => run(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Plot(a) => plot(a, out),
        Command::ValidateConfig(a) => validate(a, out),
    }
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    writeln!(out, "{text}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn oracle(a: OracleArgs, out: &mut dyn Write) -> Result<()> {
    let matrix = match (a.matrix, a.config) {
        (Some(p), _) => MatrixFile::load(&p)?,
        (None, Some(c)) => {
            let file = ConfigFile::read(&c)?;
            file.matrix(c.parent().unwrap_or(Path::new(".")))?
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let gap = gap_oracle(&matrix)?;
    print_json(out, &OracleReport::from(&gap))
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = load_path(&a.config, a.allow_zero_atom)?;
    for w in &loaded.resolved.warnings {
        eprintln!("warning: {w}");
    }
    print_json(out, &loaded.effective)
}

fn plot_after(
    svg_path: Option<&PathBuf>,
    out_dir: &Path,
    csv: &Path,
    params: &ProtocolParams,
    overlay: bool,
    title: String,
    out: &mut dyn Write,
) -> Result<()> {
    let Some(p) = svg_path else {
        if overlay {
            return Err(CliError::Validation(
                "--overlay-bound needs output.plot in the config".into(),
            ));
        }
        return Ok(());
    };
    let path = out_dir.join(p);
    let curve = read_curve(csv)?;
    let (svg, _) = render(
        &curve,
        &PlotOptions {
            log_panel: true,
            bound: overlay.then_some(params),
            title,
        },
    );
    fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
    say(out, format!("wrote {}", path.display()))
}

fn run(a: RunArgs, out: &mut dyn Write) -> Result<()> {
    let c = &a.common;
    let loaded = load_path(&c.config, c.allow_zero_atom)?;
    let ep = run_episode(&loaded.run, a.seed)?;
    let o = &loaded.effective.output;
    let trace = c.out_dir.join(&o.trace);
    let summary = c.out_dir.join(&o.summary);
    write_trace(&trace, &ep.trace)?;
    write_json(&summary, &RunSummary::new(&loaded.effective, &ep))?;
    for w in &ep.resolved.warnings {
        eprintln!("warning: {w}");
    }
    say(out, format!("wrote {}", trace.display()))?;
    say(out, format!("wrote {}", summary.display()))?;
    plot_after(
        o.plot.as_ref(),
        &c.out_dir,
        &trace,
        &ep.resolved.params,
        c.overlay_bound,
        format!("run, seed {}", a.seed),
        out,
    )
}

fn sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let c = &a.common;
    let mut loaded = load_path(&c.config, c.allow_zero_atom)?;
    let seeds: Vec<u64> = match (a.seeds, a.seed_list) {
        (_, Some(list)) if list.is_empty() => {
            return Err(CliError::Validation("--seed-list is empty".into()))
        }
        (_, Some(list)) => list,
        (Some(0), None) => return Err(CliError::Validation("--seeds must be positive".into())),
        (Some(n), None) => (0..n as u64).collect(),
        (None, None) => loaded.effective.sweep.seeds()?,
    };
    loaded.effective.sweep.seeds = None;
    loaded.effective.sweep.seed_list = Some(seeds.clone());

    let result = run_sweep(&loaded.run, &seeds)?;
    let o = &loaded.effective.output;
    let curve = c.out_dir.join(&o.curve);
    let summary = c.out_dir.join(&o.summary);
    write_curve(&curve, &result.mean, &result.stderr)?;
    write_json(&summary, &SweepSummary::new(&loaded.effective, &result))?;
    for w in &result.resolved.warnings {
        eprintln!("warning: {w}");
    }
    say(out, format!("wrote {}", curve.display()))?;
    say(out, format!("wrote {}", summary.display()))?;
    plot_after(
        o.plot.as_ref(),
        &c.out_dir,
        &curve,
        &result.resolved.params,
        c.overlay_bound,
        format!("mean over {} seeds", seeds.len()),
        out,
    )
}

/// The part of a run or sweep summary the plot needs.
#[derive(Deserialize)]
struct SummaryParams {
    params: ProtocolParams,
}

fn plot(a: PlotArgs, out: &mut dyn Write) -> Result<()> {
    let curve = read_curve(&a.input)?;
    let params = match &a.summary {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let s: SummaryParams = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            Some(s.params)
        }
        None => None,
    };
    let title = a
        .input
        .file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let (svg, report) = render(
        &curve,
        &PlotOptions {
            log_panel: a.log_x,
            bound: params.as_ref().filter(|_| a.overlay_bound),
            title,
        },
    );
    let path = a.out.unwrap_or_else(|| a.input.with_extension("svg"));
    fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
    print_json(out, &report)
}
