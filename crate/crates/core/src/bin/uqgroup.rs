use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uqgroup::grouping::{BaseCurve, Strategy};
use uqgroup::harness::{
    adaptive_run_with, emit_reports, render_table, MeshConfig, RunConfig, StopReason,
};

#[derive(Parser)]
#[command(
    name = "uqgroup",
    version,
    about = "Adaptive collocation runs with ensemble grouping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and write CSV/JSON reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated subset of nat,par,sur,its.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        /// Ensemble size(s); the first is executed.
        #[arg(long = "S", value_delimiter = ',')]
        ensemble_sizes: Option<Vec<usize>>,
        /// Two-column CSV `S,speedup` of measured ensemble speed-ups.
        #[arg(long)]
        base_curve: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        initial_level: Option<u32>,
        #[arg(long)]
        mesh_cells: Option<usize>,
        /// Dump per-ensemble residual histories as CSV.
        #[arg(long)]
        residual_history: bool,
    },
    /// Print the CSV reports of a finished run as an aligned table.
    Table {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

struct Overrides {
    strategies: Option<Vec<Strategy>>,
    ensemble_sizes: Option<Vec<usize>>,
    tau: Option<f64>,
    n_max: Option<usize>,
    initial_level: Option<u32>,
    mesh_cells: Option<usize>,
    residual_history: bool,
}

fn run(
    config: &Path,
    out_dir: &Path,
    base_curve: Option<&Path>,
    o: Overrides,
) -> uqgroup::Result<StopReason> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = o.strategies {
        cfg.strategies = s;
    }
    if let Some(s) = o.ensemble_sizes {
        cfg.ensemble_sizes = s;
    }
    if o.tau.is_some() {
        cfg.tau = o.tau;
    }
    if let Some(n) = o.n_max {
        cfg.n_max = n;
    }
    if o.initial_level.is_some() {
        cfg.initial_level = o.initial_level;
    }
    if let Some(m) = o.mesh_cells {
        cfg.mesh.get_or_insert_with(MeshConfig::default).mesh_cells = m;
    }
    cfg.residual_history |= o.residual_history;
    let curve = base_curve.map(BaseCurve::load_csv).transpose()?;

    std::fs::create_dir_all(out_dir).map_err(|e| uqgroup::Error::Io {
        path: out_dir.to_owned(),
        source: e,
    })?;
    let mut report = adaptive_run_with(cfg, Some(out_dir))?;
    if let Some(curve) = &curve {
        report.apply_base_curve(curve)?;
    }
    emit_reports(&report, out_dir)?;
    print!("{}", render_table(out_dir)?);
    println!(
        "stop: {} after {} samples in {} levels",
        report.stop_reason.as_str(),
        report.samples.len(),
        report.levels.len()
    );
    if let Some(f) = &report.failure {
        eprintln!("error: {f}");
    }
    Ok(report.stop_reason)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out_dir,
            strategies,
            ensemble_sizes,
            base_curve,
            tau,
            n_max,
            initial_level,
            mesh_cells,
            residual_history,
        } => run(
            &config,
            &out_dir,
            base_curve.as_deref(),
            Overrides {
                strategies,
                ensemble_sizes,
                tau,
                n_max,
                initial_level,
                mesh_cells,
                residual_history,
            },
        ),
        Command::Table { out_dir } => render_table(&out_dir).map(|t| {
            print!("{t}");
            StopReason::ToleranceMet
        }),
    };
    match outcome {
        Ok(StopReason::ToleranceMet) => ExitCode::SUCCESS,
        Ok(StopReason::BudgetExhausted) => ExitCode::from(2),
        Ok(StopReason::Aborted) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
