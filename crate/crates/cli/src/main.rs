use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvns_core::runner::{self, exit, Overrides, RunManifest};
use mvns_core::Error;

#[derive(Parser)]
#[command(name = "mvns", version, about = "Mean-field stochastic Navier-Stokes experiments on the 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config, run the assumption checks and print the constant ledger.
    Check {
        #[command(flatten)]
        manifest: ManifestArgs,
    },
    /// Run the configured experiments and write reports and CSVs.
    Run {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Output directory; defaults to $MVNS_OUTPUT_ROOT/<hash prefix>.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rebuild the plot CSVs from the reports of a finished run.
    Plots {
        run_dir: PathBuf,
        /// Directory for the CSVs; defaults to the run directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ManifestArgs {
    /// TOML config, or the manifest.json of an earlier run.
    config: PathBuf,
    /// Replace the base seed of every experiment.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Run non-dissipative parameters, skipping their assertions.
    #[arg(long)]
    force: bool,
    /// Times at which the representative run keeps full ensemble snapshots.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

impl ManifestArgs {
    fn load(&self) -> Result<RunManifest, Error> {
        let overrides =
            Overrides { seed: self.seed_override, force: self.force, snapshot_times: self.snapshot_times.clone() };
        runner::parse_config(&self.config, &overrides)
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(runner::exit_code(err) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { manifest } => match manifest.load() {
            Ok(m) => {
                println!("manifest {}", m.hash);
                println!("dissipative {}", m.ledger.dissipative && m.ledger.gamma_ok);
                for (name, value, definition) in m.ledger.rows() {
                    println!("{name:>16} = {value:<24e} {definition}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { manifest, out, workers } => {
            if let Some(n) = workers {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit::CONFIG as u8);
                }
            }
            let m = match manifest.load() {
                Ok(m) => m,
                Err(e) => return fail(&e),
            };
            let dir = runner::output_dir(out.as_deref(), &m);
            match runner::run(&m, &dir) {
                Ok(summary) => {
                    for r in &summary.reports {
                        let status = if r.skipped {
                            "skipped"
                        } else if r.pass {
                            "pass"
                        } else {
                            "FAIL"
                        };
                        println!("{:<12} {status} {}", r.kind.name(), r.failures.join(" "));
                    }
                    println!("outputs in {}", dir.display());
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("partial outputs in {}", dir.display());
                    fail(&e)
                }
            }
        }
        Command::Plots { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.clone());
            match runner::load_plot_inputs(&run_dir).and_then(|inputs| runner::emit_plots(&inputs, &out)) {
                Ok(files) => {
                    for f in files {
                        println!("{}", out.join(f).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
