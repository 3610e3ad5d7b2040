use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mdclock::catalog::MergePolicy;
use serde::Serialize;

mod commands;
mod config;
mod output;

use config::{Format, RunConfig};

/// Light shifts, magic wavelengths, spin relaxation and shift budgets of the
/// thulium 1.14 µm clock transition.
#[derive(Debug, Parser)]
#[command(name = "mdclock", version, about)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the main artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the JSON record here.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Line catalog checks and merging.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Dynamic polarizabilities of one level.
    #[command(subcommand)]
    Polarizability(PolarizabilityCommand),
    /// Magic-wavelength search.
    #[command(subcommand)]
    Magic(MagicCommand),
    /// Hyperpolarizability light shifts.
    #[command(subcommand)]
    Hyper(HyperCommand),
    /// Dipolar relaxation of the central atom in a small lattice patch.
    SpinSim(SpinArgs),
    /// Systematic-shift budget.
    Budget(BudgetArgs),
    /// Fits to experimental data.
    #[command(subcommand)]
    Fit(FitCommand),
}

#[derive(Debug, Subcommand)]
enum CatalogCommand {
    /// Parse and merge the line lists, then report counts and warnings.
    Validate(CatalogArgs),
    /// Emit the merged line list as CSV.
    Merge(CatalogArgs),
}

#[derive(Debug, Subcommand)]
enum PolarizabilityCommand {
    Scan(ScanArgs),
}

#[derive(Debug, Subcommand)]
enum MagicCommand {
    Find(MagicArgs),
}

#[derive(Debug, Subcommand)]
enum HyperCommand {
    Scan(HyperArgs),
}

#[derive(Debug, Subcommand)]
enum FitCommand {
    /// Saturating-exponential fit of a trace `t_ms,n[,sigma]`.
    Lifetime(LifetimeArgs),
    /// Polarizability from parametric trap frequencies.
    Alpha(AlphaArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct CatalogArgs {
    #[arg(long)]
    pub levels: Option<PathBuf>,
    #[arg(long = "lines-calc")]
    pub lines_calculated: Option<PathBuf>,
    #[arg(long = "lines-exp")]
    pub lines_experimental: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<MergePolicy>,
    /// Ignore photoionization cross sections.
    #[arg(long)]
    pub no_continuum: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[arg(long, default_value_t = 250.0)]
    pub from: f64,
    #[arg(long, default_value_t = 1200.0)]
    pub to: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Level id; defaults to the lower clock level.
    #[arg(long)]
    pub level: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MagicArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    /// Search bracket `lo:hi` in nm.
    #[arg(long, default_value = "806.0:807.05")]
    pub bracket: String,
    /// Continuum offsets in a.u., comma separated.
    #[arg(long = "offset-au", value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
    pub offsets: Vec<f64>,
    #[arg(long, default_value_t = mdclock::magic::DEFAULT_MAGIC_TOLERANCE_NM)]
    pub tolerance_nm: f64,
    #[arg(long)]
    pub intensity_kw_cm2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HyperArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[arg(long, default_value_t = 800.0)]
    pub from: f64,
    #[arg(long, default_value_t = 807.0)]
    pub to: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long)]
    pub intensity_kw_cm2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpinArgs {
    #[arg(long)]
    pub atoms: usize,
    #[arg(long, default_value = "full")]
    pub subspace: String,
    #[arg(long, default_value_t = 60.0)]
    pub tmax_ms: f64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub spacing_nm: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BudgetArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub temp: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dtemp: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub bias_mg: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dbias_mg: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rin: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_alpha_au: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LifetimeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AlphaArgs {
    /// Axial parametric resonance, Hz.
    #[arg(long)]
    pub fa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dfa: f64,
    /// Radial parametric resonance, Hz.
    #[arg(long)]
    pub fr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dfr: f64,
    /// Lattice power, W.
    #[arg(long)]
    pub power: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dpower: f64,
    #[arg(long, default_value_t = 532.0)]
    pub lambda_nm: f64,
    /// Atomic mass in u.
    #[arg(long, default_value_t = mdclock::units::TM169_MASS / mdclock::units::ATOMIC_MASS_UNIT)]
    pub mass_amu: f64,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(f) = cli.format {
        cfg.format = Some(f);
    }
    let artifact = match cli.command {
        Command::Catalog(CatalogCommand::Validate(a)) => commands::catalog_validate(&mut cfg, &a)?,
        Command::Catalog(CatalogCommand::Merge(a)) => commands::catalog_merge(&mut cfg, &a)?,
        Command::Polarizability(PolarizabilityCommand::Scan(a)) => commands::polarizability_scan(&mut cfg, &a)?,
        Command::Magic(MagicCommand::Find(a)) => commands::magic_find(&mut cfg, &a)?,
        Command::Hyper(HyperCommand::Scan(a)) => commands::hyper_scan(&mut cfg, &a)?,
        Command::SpinSim(a) => commands::spin_sim(&mut cfg, &a)?,
        Command::Budget(a) => commands::budget(&mut cfg, &a)?,
        Command::Fit(FitCommand::Lifetime(a)) => commands::fit_lifetime(&mut cfg, &a)?,
        Command::Fit(FitCommand::Alpha(a)) => commands::fit_alpha(&mut cfg, &a)?,
    };
    if let Some(path) = &cli.record {
        output::write_atomic(path, &artifact.record())?;
    }
    output::emit(cli.out.as_deref(), &artifact.render(cfg.format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
