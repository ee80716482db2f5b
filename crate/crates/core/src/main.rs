use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedq::grid::parse_map;
use fedq::harness::qstar::render_policy;
use fedq::harness::{export_qstar, run_experiment, RunManifest, OUTPUT_ROOT_ENV};
use fedq::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fedq",
    version,
    about = "Compressed federated Q-learning experiments"
)]
struct Cli {
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the base configuration of a manifest for every seed.
    Run { manifest: PathBuf },
    /// Run the full sweep product of a manifest for every seed.
    Sweep { manifest: PathBuf },
    /// Solve a map for Q* and write the Q-table and greedy policy as CSV.
    Qstar {
        map: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output directory; defaults to $FEDQ_OUTPUT_ROOT or the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::InvalidConfig(_)
        | Error::InvalidTolerance(_)
        | Error::InvalidGamma(_)
        | Error::InvalidNoise { .. }
        | Error::BudgetOutOfRange { .. }
        | Error::EmptyMap
        | Error::RaggedRows { .. }
        | Error::UnknownChar { .. }
        | Error::GoalCount(_)
        | Error::NoOpenCells => 2,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { manifest } => report(&manifest, false),
        Command::Sweep { manifest } => report(&manifest, true),
        Command::Qstar {
            map,
            gamma,
            tol,
            out,
        } => {
            let out = out
                .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let (files, qs) = export_qstar(&map, gamma, tol, &out)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            if qs.from_cache {
                println!("reused cached table {}", qs.cache_file.display());
            }
            let text = std::fs::read_to_string(&map).map_err(|e| Error::Io {
                path: map.clone(),
                source: e,
            })?;
            print!("{}", render_policy(&parse_map(&text)?, &qs.policy));
            Ok(())
        }
    }
}

fn report(path: &std::path::Path, sweep: bool) -> Result<(), Error> {
    let manifest = RunManifest::from_path(path)?;
    let report = run_experiment(&manifest, sweep)?;
    println!(
        "{} runs, {} files in {}{}",
        report.runs,
        report.files.len(),
        report.output_dir.display(),
        if report.qstar_from_cache {
            " (Q* from cache)"
        } else {
            ""
        }
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.threads > 0 {
        pool = pool.num_threads(cli.threads);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
