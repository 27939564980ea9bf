//! Command-line entry point: train / eval / moments / diagnose around the
//! mixed-moment loss library. Exit codes: 0 success, 1 usage error, 2
//! runtime failure. Failures additionally print a one-line JSON error record
//! to stderr.

mod checkpoint;
mod commands;
mod config;
mod csvio;
mod metrics;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use config::{Overrides, RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "home",
    version,
    about = "High-order mixed-moment embedding experiments",
    after_help = format!(
        "Outputs land in --output-dir, the {OUTPUT_DIR_ENV} environment variable, \
         or the current directory, in that order of precedence."
    )
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; omitted sections fall back to built-in defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every derived random stream (data, views, init, sampling).
    #[arg(long)]
    seed: Option<u64>,
    /// Loss variant, e.g. T2-O3-Self-All or BarlowTwinsCross.
    #[arg(long)]
    variant: Option<String>,
    /// Directory for metrics, checkpoints, and audits.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads; 1 keeps every reduction sequential and bitwise
    /// reproducible.
    #[arg(long)]
    threads: Option<usize>,
    /// Add a wall_ms field to each record. Off by default so identical runs
    /// produce byte-identical files.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics.jsonl, init.ckpt, final.ckpt, and the
    /// resolved config.
    Train(TrainArgs),
    /// Probe a checkpoint's representations with a linear classifier.
    Eval(EvalArgs),
    /// Audit mixed moments of a CSV matrix or a checkpoint's embeddings.
    Moments(MomentsArgs),
    /// Check the xor parity claim: pairwise independence, joint dependence.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate; the schedule's floor is clamped to stay at or
    /// below it.
    #[arg(long)]
    lr: Option<f64>,
    /// Redundancy term weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Also write the generated dataset to dataset.csv in the output
    /// directory.
    #[arg(long)]
    export_data: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint whose representations the probe scores.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input_csv", "checkpoint"])))]
struct MomentsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Audit the feature columns of this dataset CSV directly.
    #[arg(long, value_name = "FILE")]
    input_csv: Option<PathBuf>,
    /// Audit the embeddings this checkpoint produces on the configured
    /// dataset.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Moment orders to audit, e.g. --orders 2,3.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Audit a seeded sample of this many tuples per order instead of
    /// enumerating.
    #[arg(long)]
    sample_count: Option<u64>,
    /// Per-tuple CSV path (default: moments.csv in the output directory).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parity triples to draw.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
}

fn overrides_for(command: &Command) -> (&CommonArgs, Overrides) {
    let common = match command {
        Command::Train(args) => &args.common,
        Command::Eval(args) => &args.common,
        Command::Moments(args) => &args.common,
        Command::Diagnose(args) => &args.common,
    };
    let mut overrides = Overrides {
        seed: common.seed,
        variant: common.variant.clone(),
        output_dir: common.output_dir.clone(),
        threads: common.threads,
        ..Overrides::default()
    };
    match command {
        Command::Train(args) => {
            overrides.epochs = args.epochs;
            overrides.batch_size = args.batch_size;
            overrides.base_lr = args.lr;
            overrides.lambda = args.lambda;
        }
        Command::Moments(args) => {
            overrides.moment_orders = args.orders.clone();
            overrides.moment_samples = args.sample_count;
        }
        _ => {}
    }
    (common, overrides)
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            eprintln!("{}", metrics::error_line("usage", None, e.to_string()));
            return 1;
        }
    };

    let (common, overrides) = overrides_for(&cli.command);
    let config = match RunConfig::load(common.config.as_deref(), &overrides) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{}", metrics::error_line("usage", None, e.to_string()));
            return 1;
        }
    };
    let timing = common.timing;

    if config.run.threads > 1 {
        // Ignore a pool that some earlier code already built; sizing is
        // best-effort beyond the first call.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.threads)
            .build_global();
    }

    let result = match &cli.command {
        Command::Train(args) => commands::cmd_train(&config, args.export_data, timing),
        Command::Eval(args) => commands::cmd_eval(&config, &args.checkpoint, timing),
        Command::Moments(args) => {
            let input = commands::MomentsInput {
                input_csv: args.input_csv.as_deref(),
                checkpoint: args.checkpoint.as_deref(),
                out: args.out.as_deref(),
            };
            commands::cmd_moments(&config, &input, timing)
        }
        Command::Diagnose(args) => commands::cmd_diagnose(&config, args.samples as usize, timing),
    };

    match result {
        Ok(()) => 0,
        Err(message) => {
            eprintln!(
                "{}",
                metrics::error_line("runtime", Some(&config.hash()), message)
            );
            2
        }
    }
}

fn main() {
    // Die quietly when a downstream pipe closes (e.g. `home ... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run());
}
