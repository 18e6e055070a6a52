use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pointhop::Split;
use pointhop_cli::commands::{self, AblateArgs, ConvertArgs, EvalArgs, FitArgs, InspectArgs};
use pointhop_cli::config::DEFAULT_CONFIG;
use pointhop_cli::{CliError, Precision};

#[derive(Parser)]
#[command(name = "pointhop", version, about = "PointHop point-cloud classification")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample meshes into normalized point sets with train/test manifests.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Skip unreadable or degenerate meshes instead of failing.
        #[arg(long)]
        skip_invalid: bool,
    },
    /// Fit the pipeline and classifier, evaluate, and write a bundle.
    Fit(FitCmd),
    /// Fit a multi-branch ensemble described by the config's [ensemble] section.
    EnsembleFit {
        #[command(flatten)]
        fit: FitCmd,
        /// Also report each branch with its own classifier.
        #[arg(long)]
        baselines: bool,
    },
    /// Evaluate a bundle, optionally at several test-time point counts.
    Eval {
        bundle: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated input point counts.
        #[arg(long, value_delimiter = ',')]
        points: Vec<usize>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep design choices, refitting the classifier for each row.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// components or poolings; otherwise the axes below form a grid.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        fps: Vec<String>,
        /// Pooling sets such as max,mean,max+l2,all.
        #[arg(long, value_delimiter = ',')]
        poolings: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        classifier: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        reduction: Vec<String>,
        /// Input point counts, the same at training and test time.
        #[arg(long, value_delimiter = ',')]
        input_points: Vec<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write per-point responses of one Saab channel.
    Inspect {
        bundle: PathBuf,
        cloud: PathBuf,
        /// 1-based unit.
        #[arg(long)]
        unit: usize,
        /// 0-based channel; 0 is the DC response.
        #[arg(long)]
        channel: usize,
        #[arg(long, default_value_t = 0)]
        branch: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the default experiment config.
    DefaultConfig,
}

#[derive(Args)]
struct FitCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    precision: Option<Precision>,
    /// Write the evaluation report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    skip_eval: bool,
}

impl FitCmd {
    fn into_args(self) -> FitArgs {
        FitArgs {
            config: self.config,
            data: self.data,
            bundle: self.bundle,
            seed: self.seed,
            precision: self.precision,
            report: self.report,
            skip_eval: self.skip_eval,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure thread pool: {e}")))?;
    }
    let stdout = io::stdout();
    let out = &mut stdout.lock();
    match cli.command {
        Command::Convert {
            input,
            output,
            seed,
            points,
            skip_invalid,
        } => {
            let args = ConvertArgs {
                input,
                output,
                seed,
                points,
                skip_invalid,
            };
            commands::convert(&args, out).map(drop)
        }
        Command::Fit(f) => commands::fit(&f.into_args(), out).map(drop),
        Command::EnsembleFit { fit, baselines } => commands::ensemble_fit(&fit.into_args(), baselines, out).map(drop),
        Command::Eval {
            bundle,
            data,
            points,
            split,
            report,
        } => {
            let args = EvalArgs {
                bundle,
                data,
                points,
                split,
                report,
            };
            commands::eval(&args, out).map(drop)
        }
        Command::Ablate {
            config,
            data,
            seed,
            preset,
            features,
            fps,
            poolings,
            classifier,
            reduction,
            input_points,
            output,
        } => {
            let args = AblateArgs {
                config,
                data,
                seed,
                preset,
                features,
                fps,
                poolings,
                classifier,
                reduction,
                input_points,
                output,
            };
            commands::ablate(&args, out).map(drop)
        }
        Command::Inspect {
            bundle,
            cloud,
            unit,
            channel,
            branch,
            output,
        } => {
            let args = InspectArgs {
                bundle,
                cloud,
                unit,
                channel,
                branch,
                output,
            };
            commands::inspect(&args, out).map(drop)
        }
        Command::DefaultConfig => write!(out, "{DEFAULT_CONFIG}").map_err(|e| CliError::data(e.to_string())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
