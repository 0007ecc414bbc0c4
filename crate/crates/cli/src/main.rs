use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trihybrid_cli::audit::audit_results;
use trihybrid_cli::config::Config;
use trihybrid_cli::experiment::{run_sweep, workers_from_env, write_outputs};
use trihybrid_cli::plot::{aggregate, write_plot, Figure};
use trihybrid_cli::CliError;

#[derive(Parser)]
#[command(name = "trihybrid", version, about = "Tri-hybrid precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory for results.csv, traces.csv and timings.csv.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Aggregate results into mean ± standard error per sweep point.
    Plotdata {
        results: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        #[arg(long, default_value = "hybrid_rate")]
        metric: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every constraint margin in a results file.
    Audit {
        results: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn open(path: &PathBuf) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = Config::load(&config)?;
            let workers = workers_from_env()?;
            let output = run_sweep(&cfg, workers)?;
            write_outputs(&out, &output)?;
            let warnings: usize = output.results.iter().map(|r| r.sphere_warnings).sum();
            let flagged = output.results.iter().filter(|r| r.status != "ok").count();
            eprintln!(
                "{} rows written to {} ({} flagged, {} sphere-solver warnings)",
                output.results.len(),
                out.display(),
                flagged,
                warnings
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata { results, figure, metric, out } => {
            let rows = aggregate(open(&results)?, figure, &metric)?;
            match out {
                Some(p) => write_plot(File::create(&p).map_err(|e| CliError::io(&p, e))?, &rows)?,
                None => write_plot(std::io::stdout().lock(), &rows)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { results, tol } => {
            let s = audit_results(open(&results)?, tol)?;
            for v in &s.violations {
                println!("row {} ({}): {} = {:e}", v.row, v.method, v.column, v.margin);
            }
            println!(
                "{} rows, {} violations, {} flagged, worst margin {}",
                s.rows,
                s.violations.len(),
                s.flagged,
                s.worst_margin.map_or("n/a".into(), |m| format!("{m:e}"))
            );
            Ok(if s.violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
