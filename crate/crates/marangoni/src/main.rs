//! `marangoni` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marangoni::commands::{self, StateSource};
use marangoni::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "marangoni", version, about = "Bifurcation toolkit for stationary thermocapillary thin films")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set lattice.N=48`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (relative paths resolve against MARANGONI_OUT).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Continue independent branches concurrently.
    #[arg(long, global = true)]
    parallel_branches: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Growth rates of the flat film for the configured Marangoni numbers.
    Dispersion,
    /// Branch expansion coefficients against their closed forms.
    Local,
    /// Flat-branch scan, bifurcation detection and branch continuation.
    Continue,
    /// Spectra of a stored state for the configured perturbation classes.
    Stability {
        /// Snapshot file of the state.
        #[arg(long, conflicts_with_all = ["branch", "point"])]
        snapshot: Option<PathBuf>,
        /// Branch table whose point snapshot should be analysed.
        #[arg(long, requires = "point")]
        branch: Option<PathBuf>,
        #[arg(long, requires = "branch")]
        point: Option<usize>,
    },
    /// Time integration from a snapshot or from noisy flat data.
    Evolve {
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// PPM heatmap of a snapshot.
    Heatmap {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 4)]
        scale: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.global.overrides.clone();
    if let Some(out) = &cli.global.out {
        overrides.push(format!("output.directory={:?}", out.to_string_lossy()));
    }
    let cfg = RunConfig::load(cli.global.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Dispersion => {
            let out = commands::cmd_dispersion(&cfg)?;
            println!("wrote {}", out.csv.display());
        }
        Command::Local => {
            let r = commands::cmd_local(&cfg)?;
            println!("Mdot0 = {:.12} (closed form {:.12}, error {:.2e})", r.mdot0, r.mdot0_closed, r.mdot0_error);
            if let (Some(a), Some(b), Some(e)) = (r.mddot0, r.mddot0_closed, r.mddot0_error) {
                println!("Mddot0 = {a:.12} (closed form {b:.12}, error {e:.2e})");
            }
        }
        Command::Continue => {
            let out = commands::cmd_continue(&cfg, cli.global.parallel_branches)?;
            if let Some(m) = out.summary.detected_m {
                println!("bifurcation on the flat branch at M = {m:.6}");
            }
            for b in &out.summary.branches {
                println!(
                    "{}: {} points, termination {:?}, folds {}, candidates {}, min v {:?}",
                    b.label, b.n_points, b.termination, b.folds, b.bifurcation_candidates, b.min_v
                );
            }
        }
        Command::Stability { snapshot, branch, point } => {
            let source = match (snapshot, branch, point) {
                (Some(s), _, _) => StateSource::Snapshot(s),
                (None, Some(table), Some(index)) => StateSource::BranchPoint { table, index },
                _ => anyhow::bail!("give --snapshot or --branch with --point"),
            };
            let out = commands::cmd_stability(&cfg, &source)?;
            for r in &out.reports {
                println!("{}: {} unstable, leading {:?}", r.perturbation_class, r.n_unstable, r.leading());
            }
        }
        Command::Evolve { initial } => {
            let out = commands::cmd_evolve(&cfg, initial.as_deref())?;
            println!("wrote {}", out.trajectory.display());
            if let Some(g) = &out.report.growth {
                println!("growth rate {:.6} (dispersion {:.6}, error {:.2e})", g.measured, g.predicted, g.relative_error);
            }
        }
        Command::Heatmap { snapshot, scale } => {
            let out = snapshot.with_extension("ppm");
            commands::snapshot_heatmap(&snapshot, &out, scale)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
