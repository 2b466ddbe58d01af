use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockbayes_cli::commands::{self, EvalInput};
use blockbayes_cli::config::{parse_list, PipelineConfig};
use blockbayes_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blockbayes", version, about = "Block-feature image classification with NB, TAN and FAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe every PGM under DATA/<class>/ and write a descriptor CSV.
    Extract {
        /// Directory with one subdirectory per class.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Fit codebook, structure and CPTs on a descriptor CSV; write model JSON.
    Train {
        #[arg(long)]
        descriptors: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Score a model on a descriptor CSV (train/test from the model's split)
    /// or on an image directory (all test). Writes OUT.txt and OUT.csv.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the pipeline for each cluster count with NB, TAN and FAN.
    Sweep {
        #[arg(long)]
        descriptors: PathBuf,
        /// FAN threshold multipliers, comma separated.
        #[arg(long = "threshold-mults", value_name = "LIST")]
        threshold_mults: Option<String>,
        #[command(flatten)]
        opts: Options,
    },
}

#[derive(Args)]
struct Options {
    /// Flat key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Block grid, e.g. 4x4.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long = "k-sup")]
    k_sup: Option<String>,
    /// Cluster count (a comma separated list for sweep).
    #[arg(long)]
    k: Option<String>,
    /// nb, tan or fan.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long = "threshold-mult")]
    threshold_mult: Option<String>,
    #[arg(long)]
    root: Option<String>,
    #[arg(long = "train-frac")]
    train_frac: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Options {
    /// Default, then config file, then flags. `skip_k` leaves `--k` for the
    /// caller (sweep reads it as a list).
    fn resolve(&self, skip_k: bool) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("grid", &self.grid),
            ("levels", &self.levels),
            ("k_sup", &self.k_sup),
            ("k", if skip_k { &None } else { &self.k }),
            ("classifier", &self.classifier),
            ("threshold_mult", &self.threshold_mult),
            ("root", &self.root),
            ("train_frac", &self.train_frac),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what} (flag or config key)")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract { data, opts } => {
            let mut cfg = opts.resolve(false)?;
            if data.is_some() {
                cfg.data_dir = data;
            }
            let table = commands::extract(&cfg, required(&cfg.data_dir, "--data")?, required(&cfg.out, "--out")?)?;
            eprintln!(
                "described {} images in {} classes",
                table.entries.len(),
                table.class_names.len()
            );
        }
        Command::Train { descriptors, opts } => {
            let cfg = opts.resolve(false)?;
            let model = commands::train(&cfg, &descriptors, required(&cfg.out, "--out")?)?;
            eprintln!(
                "trained {} on {} images ({} held out)",
                model.settings.structure.kind,
                model.split.train.len(),
                model.split.test.len()
            );
        }
        Command::Evaluate {
            model,
            descriptors,
            data,
            out,
        } => {
            let input = match (&descriptors, &data) {
                (Some(d), _) => EvalInput::Descriptors(d),
                (None, Some(d)) => EvalInput::Images(d),
                (None, None) => return Err(CliError::Usage("evaluate needs --descriptors or --data".into())),
            };
            let report = commands::evaluate(&model, input, &out)?;
            print!("{}", report.table);
        }
        Command::Sweep {
            descriptors,
            threshold_mults,
            opts,
        } => {
            let cfg = opts.resolve(true)?;
            let ks = match &opts.k {
                Some(list) => parse_list("k", list)?,
                None => vec![5, 8, 10, 15],
            };
            let mults = match &threshold_mults {
                Some(list) => parse_list("threshold-mults", list)?,
                None => vec![cfg.threshold_multiplier],
            };
            let result = commands::sweep(&cfg, &descriptors, &ks, &mults, required(&cfg.out, "--out")?)?;
            print!("{}", result.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
