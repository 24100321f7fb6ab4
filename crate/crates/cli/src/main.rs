use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embryo_core::autoencoder::AutoencoderModel;
use embryo_core::config::ExperimentConfig;
use embryo_core::io::{
    emit_report, load_checkpoint, load_dataset, read_report, report_json, save_checkpoint, save_dataset, Checkpoint,
    Model, TrainingMetadata, REPORT_FILE,
};
use embryo_core::pipeline::{cross_validate, finetune, pretrain, train_grader};
use embryo_core::record::EmbryoRecord;
use embryo_core::seed::derive_seed;
use embryo_core::sequence::{SequenceModel, TransferPolicy};
use embryo_core::synth::generate_dataset;
use embryo_core::{Error, Result};

const AUTOENCODER_FILE: &str = "autoencoder.ckpt";
const GRADER_FILE: &str = "grader.ckpt";
const BINARY_FILE: &str = "binary.ckpt";

/// Embryo implantation prediction from time-lapse videos.
#[derive(Parser)]
#[command(name = "embryo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the frame autoencoder on the unlabeled subset.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the grade model on every graded embryo.
    TrainGrader {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        autoencoder: PathBuf,
    },
    /// Transfer the grade model to implantation labels on every KID embryo.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        grader: PathBuf,
    },
    /// Cross-validated evaluation against the panel; writes report.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        autoencoder: PathBuf,
    },
    /// Render a report's ROC tables and figure.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: PathBuf,
    },
    /// Every stage in order, under one output directory.
    RunAll {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_autoencoder(path: &Path) -> Result<(AutoencoderModel, TrainingMetadata)> {
    let ck = load_checkpoint(path)?;
    match ck.model {
        Model::Autoencoder(m) => Ok((m, ck.metadata)),
        other => Err(Error::CheckpointHeader(format!(
            "{} holds a {} model, expected autoencoder",
            path.display(),
            other.kind()
        ))),
    }
}

fn load_grader(path: &Path) -> Result<SequenceModel> {
    match load_checkpoint(path)?.model {
        Model::Grade(m) => Ok(m),
        other => Err(Error::CheckpointHeader(format!(
            "{} holds a {} model, expected grade",
            path.display(),
            other.kind()
        ))),
    }
}

fn synth(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let dataset = generate_dataset(&config.synthetic(seed))?;
    save_dataset(&dataset, out)?;
    eprintln!("synth: {} embryos written to {}", dataset.len(), out.display());
    Ok(())
}

fn pretrain_stage(config: &ExperimentConfig, seed: u64, data: &Path, out: &Path) -> Result<PathBuf> {
    let dataset = load_dataset(data)?;
    let (model, history) = pretrain(&dataset, config, seed)?;
    create_dir(out)?;
    let path = out.join(AUTOENCODER_FILE);
    save_checkpoint(
        &Checkpoint {
            model: Model::Autoencoder(model),
            metadata: TrainingMetadata::new(seed, config.ae_epochs, &history),
        },
        &path,
    )?;
    eprintln!("pretrain: final loss {:?}, saved {}", history.last(), path.display());
    Ok(path)
}

fn grader_stage(config: &ExperimentConfig, seed: u64, data: &Path, autoencoder: &Path, out: &Path) -> Result<PathBuf> {
    let dataset = load_dataset(data)?;
    let (ae, _) = load_autoencoder(autoencoder)?;
    let graded: Vec<&EmbryoRecord> = dataset.graded.iter().collect();
    let model_seed = derive_seed(seed, "final-grade", 0);
    let (model, history) = train_grader(&ae, &graded, config, model_seed)?;
    create_dir(out)?;
    let path = out.join(GRADER_FILE);
    save_checkpoint(
        &Checkpoint {
            model: Model::Grade(model),
            metadata: TrainingMetadata::new(model_seed, config.grade_epochs, &history),
        },
        &path,
    )?;
    eprintln!(
        "train-grader: final loss {:?}, saved {}",
        history.last(),
        path.display()
    );
    Ok(path)
}

fn finetune_stage(
    config: &ExperimentConfig,
    seed: u64,
    data: &Path,
    autoencoder: &Path,
    grader: &Path,
    out: &Path,
) -> Result<PathBuf> {
    let dataset = load_dataset(data)?;
    let (ae, _) = load_autoencoder(autoencoder)?;
    let grade_model = load_grader(grader)?;
    let kid: Vec<&EmbryoRecord> = dataset.kid.iter().collect();
    let model_seed = derive_seed(seed, "final-transfer", 0);
    let policy: TransferPolicy = config.policy()?;
    let (model, history) = finetune(&ae, &grade_model, &kid, policy, config, model_seed)?;
    create_dir(out)?;
    let path = out.join(BINARY_FILE);
    save_checkpoint(
        &Checkpoint {
            model: Model::Binary(model),
            metadata: TrainingMetadata::new(model_seed, config.finetune_epochs, &history),
        },
        &path,
    )?;
    eprintln!("finetune: final loss {:?}, saved {}", history.last(), path.display());
    Ok(path)
}

fn evaluate_stage(
    config: &ExperimentConfig,
    seed: u64,
    data: &Path,
    autoencoder: &Path,
    out: &Path,
) -> Result<PathBuf> {
    let dataset = load_dataset(data)?;
    let (ae, metadata) = load_autoencoder(autoencoder)?;
    let report = cross_validate(&dataset, &ae, metadata.loss_history, config, seed)?;
    create_dir(out)?;
    let path = out.join(REPORT_FILE);
    std::fs::write(&path, report_json(&report)?).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    eprintln!(
        "evaluate: pooled AUC {:.3} (bootstrap std {:.3}), panel AUC {:.3}; wrote {}",
        report.model.auc,
        report.model.bootstrap.std,
        report.panel.pooled.auc,
        path.display()
    );
    Ok(path)
}

fn report_stage(report: &Path, out: &Path) -> Result<()> {
    let report = read_report(report)?;
    for path in emit_report(&report, out)? {
        eprintln!("report: wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            synth(&config, common.seed, &common.out).map_err(|e| e.in_stage("synth"))
        }
        Command::Pretrain { common, data } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            pretrain_stage(&config, common.seed, &data, &common.out)
                .map(drop)
                .map_err(|e| e.in_stage("pretrain"))
        }
        Command::TrainGrader {
            common,
            data,
            autoencoder,
        } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            grader_stage(&config, common.seed, &data, &autoencoder, &common.out)
                .map(drop)
                .map_err(|e| e.in_stage("train-grader"))
        }
        Command::Finetune {
            common,
            data,
            autoencoder,
            grader,
        } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            finetune_stage(&config, common.seed, &data, &autoencoder, &grader, &common.out)
                .map(drop)
                .map_err(|e| e.in_stage("finetune"))
        }
        Command::Evaluate {
            common,
            data,
            autoencoder,
        } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            evaluate_stage(&config, common.seed, &data, &autoencoder, &common.out)
                .map(drop)
                .map_err(|e| e.in_stage("evaluate"))
        }
        Command::Report { common, report } => report_stage(&report, &common.out).map_err(|e| e.in_stage("report")),
        Command::RunAll { common } => {
            let config = load_config(&common).map_err(|e| e.in_stage("config"))?;
            let seed = common.seed;
            let data = common.out.join("dataset");
            let models = common.out.join("models");
            let reports = common.out.join("report");
            synth(&config, seed, &data).map_err(|e| e.in_stage("synth"))?;
            let ae = pretrain_stage(&config, seed, &data, &models).map_err(|e| e.in_stage("pretrain"))?;
            let grader = grader_stage(&config, seed, &data, &ae, &models).map_err(|e| e.in_stage("train-grader"))?;
            finetune_stage(&config, seed, &data, &ae, &grader, &models).map_err(|e| e.in_stage("finetune"))?;
            let report = evaluate_stage(&config, seed, &data, &ae, &reports).map_err(|e| e.in_stage("evaluate"))?;
            report_stage(&report, &reports).map_err(|e| e.in_stage("report"))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("embryo: {e}");
            ExitCode::FAILURE
        }
    }
}
