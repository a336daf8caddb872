//! `meshfree` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure (divergence, NaN).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshfree_interface::experiments::{
    emit_plot, evaluate_error_with, read_sweep_csv, run_checks, run_experiment, run_sweep, write_field_snapshot, write_residual_grid,
    write_run_outputs, write_sweep_csv, ExperimentConfig, ExperimentError, SweepSpec,
};
use meshfree_interface::network::{read_checkpoint, Network};
use meshfree_interface::training::{NetworkPair, TrainStatus};

#[derive(Parser)]
#[command(name = "meshfree", version, about = "Meshfree network solver for dynamic interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (TOML); defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config and the MESHFREE_SEED variable.
    #[arg(short, long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Use `training.reduced_epochs` instead of `training.epochs`.
    #[arg(long)]
    reduced: bool,
    /// Override the epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Deterministic mode (always on for single-threaded training; kept
    /// for interface compatibility).
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if self.reduced {
            cfg.training.reduced = true;
        }
        if let Some(e) = self.epochs {
            cfg.training.epochs = e;
            cfg.training.reduced_epochs = e;
        }
        if self.deterministic {
            cfg.training.deterministic = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Run(Common),
    /// Reproduce a table: every row for every seed, written as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Table preset 1-7.
        #[arg(long)]
        table: u8,
        /// Comma-separated seeds (default: the resolved run seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Only the first N rows.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Exact-solution, differentiation and quadrature self-checks.
    Check {
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
    },
    /// Convergence plot (SVG) from a sweep CSV.
    Plot {
        csv: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        slope: f64,
    },
    /// Grid errors of a checkpoint against the exact solution.
    Eval {
        #[command(flatten)]
        common: Common,
        checkpoint: PathBuf,
    },
    /// Field snapshot and residual grid of a checkpoint, as CSV.
    Snapshot {
        #[command(flatten)]
        common: Common,
        checkpoint: PathBuf,
        /// Time of the field snapshot.
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_pair(path: &std::path::Path) -> Result<[Network; 2], ExperimentError> {
    let file = fs::File::open(path)?;
    let nets = read_checkpoint(std::io::BufReader::new(file)).map_err(|e| ExperimentError::Config(e.to_string()))?;
    nets.try_into()
        .map_err(|_| ExperimentError::Config("checkpoint must hold exactly two networks".into()))
}

fn dispatch(cmd: Command) -> Result<ExitCode, ExperimentError> {
    match cmd {
        Command::Run(common) => {
            let cfg = common.load()?;
            let seed = cfg.resolve_seed(common.seed)?;
            let run = run_experiment(&cfg, seed)?;
            write_run_outputs(&cfg.output.dir, &run)?;
            let r = &run.report;
            println!(
                "{} seed {}: approx_error {:.3e} loss_error {:.3e} ({:.1} s) -> {}",
                r.problem,
                r.seed,
                r.approx_error,
                r.loss_error,
                r.wall_seconds,
                cfg.output.dir.display()
            );
            println!("  combined without pressure gauge {:.3e}", r.errors.combined_raw);
            for f in &r.errors.fields {
                println!("  {:>5}  {:.3e}", f.field, f.relative_l2);
            }
            if let TrainStatus::Diverged { epoch } = run.outcome.status {
                return Err(ExperimentError::Diverged { epoch });
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            common,
            table,
            seeds,
            rows,
        } => {
            let cfg = common.load()?;
            let seeds = if seeds.is_empty() { vec![cfg.resolve_seed(common.seed)?] } else { seeds };
            let mut spec = SweepSpec::table(table, seeds)?;
            if let Some(n) = rows {
                spec.rows.truncate(n);
            }
            fs::create_dir_all(&cfg.output.dir)?;
            let rows = run_sweep(&cfg, &spec, |r, _| {
                println!(
                    "M_L {:>6} M_B {:>4} M_Gamma {:>4} M_I {:>5} seed {:>3}: {:.3e} {:.3e} {}",
                    r.m_l, r.m_b, r.m_gamma, r.m_i, r.seed, r.approx_error, r.loss_error, r.status
                );
            })?;
            let path = cfg.output.dir.join(format!("table{table}.csv"));
            write_sweep_csv(fs::File::create(&path)?, &rows)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { seed } => {
            let mut ok = true;
            for c in run_checks(seed)? {
                let pass = c.passed();
                ok &= pass;
                println!(
                    "{} {:<48} {:.3e} (< {:e})",
                    if pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Plot { csv, out, slope } => {
            let rows = read_sweep_csv(fs::File::open(&csv)?)?;
            fs::write(&out, emit_plot(&rows, slope)?)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let spec = cfg.problem.spec();
            let nets = load_pair(&checkpoint)?;
            let e = evaluate_error_with(&NetworkPair(&nets), &spec, cfg.evaluation.grid, cfg.evaluation.pressure_gauge)?;
            println!("combined {:.3e} (without pressure gauge {:.3e})", e.combined, e.combined_raw);
            for f in &e.fields {
                println!("  {:>5}  {:.3e}", f.field, f.relative_l2);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Snapshot {
            common,
            checkpoint,
            time,
        } => {
            let cfg = common.load()?;
            let spec = cfg.problem.spec();
            let nets = load_pair(&checkpoint)?;
            fs::create_dir_all(&cfg.output.dir)?;
            let src = NetworkPair(&nets);
            let g = cfg.evaluation.grid;
            let snap = cfg.output.dir.join("snapshot.csv");
            write_field_snapshot(fs::File::create(&snap)?, &src, &spec, [g[0], g[1]], time)?;
            let res = cfg.output.dir.join("residuals.csv");
            write_residual_grid(fs::File::create(&res)?, &src, &spec, g)?;
            println!("wrote {} and {}", snap.display(), res.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
