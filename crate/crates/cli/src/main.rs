use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvgebd::pipeline::{self, PipelineConfig};
use cvgebd::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "cvgebd", version, about = "Event boundary detection on a toy compressed-video format")]
struct Cli {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and encode the train and test corpora.
    Synth {
        /// Data directory (overrides data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-encode a container with the configured codec parameters.
    Encode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print container header and per-GOP motion statistics.
    Inspect { input: PathBuf },
    /// Train on the train split and write a checkpoint.
    Train {
        /// Checkpoint path (overrides checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict boundaries for containers (default: the evaluation split).
    Infer {
        inputs: Vec<PathBuf>,
        /// Predictions path (overrides predictions).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against the evaluation split's annotations.
    Eval {
        /// Report path (overrides report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the model gradients.
    Gradcheck,
    /// Encoder and window-size ablations at reduced scale.
    Ablate {
        /// Report path (overrides ablation_report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Some(Command::Synth { out: Some(p) }) => cfg.data_dir = p.clone(),
        Some(Command::Train { out: Some(p) }) => cfg.checkpoint = p.clone(),
        Some(Command::Infer { out: Some(p), .. }) => cfg.predictions = p.clone(),
        Some(Command::Eval { out: Some(p) }) => cfg.report = p.clone(),
        Some(Command::Ablate { out: Some(p) }) => cfg.ablation_report = p.clone(),
        _ => {}
    }
    cfg.validate()?;
    if cli.dump_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Synth { .. } => {
            let s = pipeline::run_synth(&cfg)?;
            println!("wrote {} train and {} test videos under {}", s.train, s.test, s.dir.display());
        }
        Command::Encode { input, out } => {
            let cv = pipeline::run_encode(&cfg, &input, &out)?;
            println!("wrote {} ({} frames, {} GOPs)", out.display(), cv.frame_count(), cv.gops.len());
        }
        Command::Inspect { input } => print!("{}", pipeline::run_inspect(&input)?),
        Command::Train { .. } => {
            let logs = pipeline::run_train(&cfg)?;
            for l in &logs {
                println!("epoch {:>3}  loss {:.5}  lr {:.1e}", l.epoch, l.mean_loss, l.lr);
            }
            println!("checkpoint: {}", cfg.checkpoint.display());
            println!("log: {}", cfg.train_log.display());
        }
        Command::Infer { inputs, .. } => {
            let preds = pipeline::run_infer(&cfg, &inputs)?;
            let n: usize = preds.iter().map(|p| p.boundaries_sec.len()).sum();
            println!("{} boundaries in {} videos -> {}", n, preds.len(), cfg.predictions.display());
        }
        Command::Eval { .. } => {
            let report = pipeline::run_eval(&cfg)?;
            print!("{}", report.to_table());
            println!("report: {}", cfg.report.display());
        }
        Command::Gradcheck => {
            let summary = pipeline::run_gradcheck(&cfg)?;
            print!("{}", summary.to_text());
            if !summary.passed() {
                return Err(Error::Numeric(format!(
                    "gradient check failed: max rel err {:.3e} above {:.0e}",
                    summary.max_rel_err(),
                    summary.tolerance
                )));
            }
        }
        Command::Ablate { .. } => {
            let report = pipeline::run_ablate(&cfg)?;
            pipeline::write_ablation(&cfg.ablation_report, &report)?;
            print!("{}", report.to_table());
            println!("report: {}", cfg.ablation_report.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
