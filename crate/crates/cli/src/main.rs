use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nanowire_cli::{load_config, run_command, CliError, Context, Verb};

/// Confined-nanowire transport: Bloch bands, Poisson, drift-diffusion and
/// kinetic solvers.
#[derive(Parser, Debug)]
#[command(name = "nanowire", version)]
struct Args {
    verb: Verb,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created when missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the eigensolver start vectors.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn fail(err: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
    eprintln!("{body}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({ "error": { "kind": "threads", "message": e.to_string() } }));
            return ExitCode::from(2);
        }
    }
    let loaded = match load_config(&args.config) {
        Ok(l) => l,
        Err(e) => return fail(&e.into()),
    };
    let ctx = Context {
        loaded: &loaded,
        out: &args.out,
        seed: args.seed,
        verbose: args.verbose,
    };
    match run_command(args.verb, &ctx) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
