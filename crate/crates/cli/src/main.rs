use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracpath::harness::{self, CheckStatus, Experiment, VERIFY_HEADER};
use fracpath::Error;

#[derive(Parser)]
#[command(name = "fracpath", version, about = "Occupation measures, fractional seminorms and Berman-type inequalities on sampled paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed list of the config with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; never changes the output bytes.
    #[arg(long, env = "FRACPATH_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ball-mass scaling slope and histogram local times.
    Occupation(RunArgs),
    /// Riesz energy and negative Sobolev norm of the occupation measure.
    Potential(RunArgs),
    /// (s,p)-variability of a BV function along the path.
    Variability(RunArgs),
    /// Composition with a BV function: singular fraction and pointwise bound.
    Compose(RunArgs),
    /// Gagliardo seminorm of the path.
    Seminorm(RunArgs),
    /// Seminorm of the composition against path seminorm times variability.
    #[command(alias = "key_estimate")]
    KeyEstimate(RunArgs),
    /// Zähle integral of the path, or of φ∘X when `[bv]` is set, against the path.
    Integrate(RunArgs),
    /// Empirical Berman constants over random windows.
    Berman(RunArgs),
    /// Run the named checks and print `check_id,status,value,bound,runtime`.
    Verify {
        /// Wildcard pattern over check ids, e.g. `oracle_*`.
        #[arg(long, default_value = "*")]
        filter: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Recompute the oracle corpus and write it to a file.
    OracleBuild {
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(kind: &str, err: &Error, code: u8) -> ExitCode {
    let msg = err.to_string().replace('"', "'");
    eprintln!("fracpath-error kind={kind} message=\"{msg}\"");
    ExitCode::from(code)
}

fn run(expected: Experiment, args: &RunArgs) -> ExitCode {
    let cfg = match harness::load_config(&args.config, args.seed, args.out.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail("config", &e, 2),
    };
    if cfg.experiment != expected {
        let e = Error::Config(format!("config is for `{}`, not `{}`", cfg.experiment.name(), expected.name()));
        return fail("config", &e, 2);
    }
    match harness::run_experiment(&cfg, args.threads) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", out.output_dir.join(f).display());
            }
            if out.failures > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config(_)) => fail("config", &e, 2),
        Err(e) => fail("runtime", &e, 1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Occupation(a) => run(Experiment::Occupation, a),
        Command::Potential(a) => run(Experiment::Potential, a),
        Command::Variability(a) => run(Experiment::Variability, a),
        Command::Compose(a) => run(Experiment::Compose, a),
        Command::Seminorm(a) => run(Experiment::Seminorm, a),
        Command::KeyEstimate(a) => run(Experiment::KeyEstimate, a),
        Command::Integrate(a) => run(Experiment::Integrate, a),
        Command::Berman(a) => run(Experiment::Berman, a),
        Command::Verify { filter, seed } => {
            let rows = harness::verify_suite(filter, *seed);
            println!("{VERIFY_HEADER}");
            for r in &rows {
                println!("{}", r.csv_row(true));
            }
            if rows.iter().any(|r| r.status == CheckStatus::Fail) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::OracleBuild { out } => match std::fs::write(out, harness::build_oracles()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail("io", &Error::Io(e.to_string()), 1),
        },
    }
}
