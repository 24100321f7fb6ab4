//! End-to-end experiment: pretrain the autoencoder on unlabeled frames, then
//! per patient-grouped fold train the grade model, transfer a binary head,
//! and score held-out KID embryos; finally evaluate the pooled out-of-fold
//! predictions against the panel.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autoencoder::{
    build_autoencoder, embed_video, train_autoencoder, AutoencoderModel, EncoderSpec, FrameEmbedding,
};
use crate::config::ExperimentConfig;
use crate::cv::{assert_disjoint, fold_split, grouped_kfold, FoldAssignment};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    auc, bootstrap_auc, panel_mean, predictive_values, random_baseline, roc_curve, youden_threshold, ScoredExample,
};
use crate::record::{Dataset, EmbryoRecord, Frame, PANEL_SIZE};
use crate::report::{
    EvaluationReport, FoldSummary, LabeledPredictiveValues, PanelComparison, Prediction, PretrainSummary,
    ReferenceValues, ScoreSummary, REPORT_FORMAT,
};
use crate::seed::derive_seed;
use crate::sequence::{
    grades_histogram, predict_implantation, train_grade_model, transfer_binary_head, GradeDistribution, SequenceModel,
    TransferPolicy,
};

/// Frames used for pretraining: up to `ae_max_frames`, sampled without
/// replacement from all unlabeled videos.
pub fn pretraining_frames(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<Vec<Frame>> {
    let index: Vec<(usize, usize)> = dataset
        .unlabeled
        .iter()
        .enumerate()
        .flat_map(|(v, r)| (0..r.video.frame_count()).map(move |t| (v, t)))
        .collect();
    if index.is_empty() {
        return Err(Error::EmptyInput("unlabeled frames"));
    }
    let n = match config.ae_max_frames {
        0 => index.len(),
        m => m.min(index.len()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pretrain-frames", 0));
    let mut chosen = sample(&mut rng, index.len(), n).into_vec();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|i| {
            let (v, t) = index[i];
            dataset.unlabeled[v].video.frame(t)
        })
        .collect())
}

/// Train the frame autoencoder and fit its embedding normalizer.
pub fn pretrain(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<(AutoencoderModel, Vec<f64>)> {
    let frames = pretraining_frames(dataset, config, seed)?;
    let spec = EncoderSpec::desk_sized(frames[0].size().0);
    let model = build_autoencoder(&spec, derive_seed(seed, "autoencoder-init", 0))?;
    let (mut model, history) = train_autoencoder(
        model,
        &frames,
        &config.autoencoder_training(),
        derive_seed(seed, "autoencoder-fit", 0),
    )?;
    model.fit_normalizer(&frames)?;
    Ok((model, history))
}

pub fn embed_records(model: &AutoencoderModel, records: &[&EmbryoRecord]) -> Result<Vec<Vec<FrameEmbedding>>> {
    records
        .par_iter()
        .map(|r| embed_video(model, &r.video.frames()))
        .collect()
}

fn grade_targets(records: &[&EmbryoRecord]) -> Result<Vec<GradeDistribution>> {
    records
        .iter()
        .map(|r| {
            r.grades
                .as_ref()
                .map(grades_histogram)
                .ok_or_else(|| Error::Config(format!("graded record `{}` has no grades", r.embryo_id)))
        })
        .collect()
}

fn kid_labels(records: &[&EmbryoRecord]) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| {
            r.kid_label
                .ok_or_else(|| Error::Config(format!("KID record `{}` has no label", r.embryo_id)))
        })
        .collect()
}

/// Train the grade model on the given graded records.
pub fn train_grader(
    model: &AutoencoderModel,
    graded: &[&EmbryoRecord],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SequenceModel, Vec<f64>)> {
    let videos = embed_records(model, graded)?;
    let targets = grade_targets(graded)?;
    train_grade_model(&videos, &targets, &config.grade_training(), seed)
}

/// Attach and train the binary head on the given KID records.
pub fn finetune(
    model: &AutoencoderModel,
    grader: &SequenceModel,
    kid: &[&EmbryoRecord],
    policy: TransferPolicy,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SequenceModel, Vec<f64>)> {
    let videos = embed_records(model, kid)?;
    let labels = kid_labels(kid)?;
    transfer_binary_head(grader, &videos, &labels, policy, &config.finetune_training(), seed)
}

struct FoldOutcome {
    summary: FoldSummary,
    predictions: Vec<Prediction>,
}

fn patients<'a>(records: impl IntoIterator<Item = &'a &'a EmbryoRecord>) -> BTreeSet<&'a str> {
    records.into_iter().map(|r| r.patient_id.as_str()).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    fold: usize,
    assignment: &FoldAssignment,
    graded: &[&EmbryoRecord],
    graded_videos: &[Vec<FrameEmbedding>],
    kid: &[&EmbryoRecord],
    kid_videos: &[Vec<FrameEmbedding>],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<FoldOutcome> {
    let policy = config.policy()?;
    let (graded_train, _) = fold_split(graded, assignment, fold)?;
    let (kid_train, kid_val) = fold_split(kid, assignment, fold)?;

    // Every patient used for fitting must be absent from scoring.
    let fitted: Vec<&&EmbryoRecord> = graded_train.iter().chain(&kid_train).copied().collect();
    assert_disjoint(&fitted, &kid_val, fold)?;
    debug_assert!(patients(fitted.iter().copied()).is_disjoint(&patients(kid_val.iter().copied())));

    let pick = |subset: &[&&EmbryoRecord], all: &[&EmbryoRecord], videos: &[Vec<FrameEmbedding>]| {
        subset
            .iter()
            .map(|r| {
                let i = all
                    .iter()
                    .position(|a| std::ptr::eq(*a, **r))
                    .expect("record from this subset");
                videos[i].clone()
            })
            .collect::<Vec<_>>()
    };
    let gv = pick(&graded_train, graded, graded_videos);
    let gt = grade_targets(&graded_train.iter().map(|r| **r).collect::<Vec<_>>())?;
    let (grader, grade_history) = train_grade_model(
        &gv,
        &gt,
        &config.grade_training(),
        derive_seed(seed, "grade", fold as u64),
    )
    .stage("train-grader")?;

    let kv = pick(&kid_train, kid, kid_videos);
    let kl = kid_labels(&kid_train.iter().map(|r| **r).collect::<Vec<_>>())?;
    let (binary, finetune_history) = transfer_binary_head(
        &grader,
        &kv,
        &kl,
        policy,
        &config.finetune_training(),
        derive_seed(seed, "transfer", fold as u64),
    )
    .stage("finetune")?;

    let val_videos = pick(&kid_val, kid, kid_videos);
    let mut predictions = Vec::with_capacity(kid_val.len());
    for (r, v) in kid_val.iter().zip(&val_videos) {
        let p = predict_implantation(&binary, v)?;
        predictions.push(Prediction {
            embryo_id: r.embryo_id.clone(),
            patient_id: r.patient_id.clone(),
            fold,
            implanted: r.kid_label.expect("checked by kid_labels"),
            score: p.probability,
            panel_score: r.grades.as_ref().map(panel_mean),
        });
    }
    let examples: Vec<ScoredExample> = predictions
        .iter()
        .map(|p| ScoredExample::new(p.score, p.implanted))
        .collect();
    let fold_auc = roc_curve(&examples).ok().map(|c| auc(&c));
    Ok(FoldOutcome {
        summary: FoldSummary {
            fold,
            graded_train: graded_train.len(),
            kid_train: kid_train.len(),
            validation: kid_val.len(),
            validation_positives: examples.iter().filter(|e| e.label).count(),
            auc: fold_auc,
            grade_loss: grade_history,
            finetune_loss: finetune_history,
        },
        predictions,
    })
}

fn score_summary(
    examples: &[ScoredExample],
    declared_threshold: f64,
    declared_label: &str,
    repetitions: usize,
    seed: u64,
) -> Result<ScoreSummary> {
    let curve = roc_curve(examples)?;
    let youden = youden_threshold(&curve);
    Ok(ScoreSummary {
        auc: auc(&curve),
        bootstrap: bootstrap_auc(examples, repetitions, seed)?,
        predictive_values: vec![
            LabeledPredictiveValues {
                label: declared_label.to_string(),
                values: predictive_values(examples, declared_threshold),
            },
            LabeledPredictiveValues {
                label: "youden-optimal threshold".into(),
                values: predictive_values(examples, youden),
            },
        ],
        roc: curve.points.iter().map(Into::into).collect(),
    })
}

/// Cross-validated evaluation given a pretrained autoencoder.
pub fn cross_validate(
    dataset: &Dataset,
    autoencoder: &AutoencoderModel,
    pretrain_history: Vec<f64>,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    config.validate()?;
    if dataset.graded.is_empty() || dataset.kid.is_empty() {
        return Err(Error::EmptyInput("graded and KID subsets"));
    }
    let graded: Vec<&EmbryoRecord> = dataset.graded.iter().collect();
    let kid: Vec<&EmbryoRecord> = dataset.kid.iter().collect();
    let graded_videos = embed_records(autoencoder, &graded).stage("embed")?;
    let kid_videos = embed_records(autoencoder, &kid).stage("embed")?;

    let labeled: Vec<&EmbryoRecord> = graded.iter().chain(&kid).copied().collect();
    let assignment = grouped_kfold(&labeled, config.folds, derive_seed(seed, "folds", 0)).stage("cv")?;

    let outcomes = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            run_fold(
                fold,
                &assignment,
                &graded,
                &graded_videos,
                &kid,
                &kid_videos,
                config,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut predictions: Vec<Prediction> = Vec::with_capacity(kid.len());
    let mut folds = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        folds.push(o.summary);
        predictions.extend(o.predictions);
    }
    predictions.sort_by(|a, b| a.embryo_id.cmp(&b.embryo_id));

    let model_examples: Vec<ScoredExample> = predictions
        .iter()
        .map(|p| ScoredExample::new(p.score, p.implanted))
        .collect();
    let model = score_summary(
        &model_examples,
        config.model_threshold,
        &format!("declared threshold {}", config.model_threshold),
        config.bootstrap_repetitions,
        derive_seed(seed, "bootstrap-model", 0),
    )
    .stage("evaluate")?;
    let fold_aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
    let fold_averaged_auc = (!fold_aucs.is_empty()).then(|| fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64);

    let panel = panel_comparison(&kid, config, seed).stage("evaluate")?;

    Ok(EvaluationReport {
        format: REPORT_FORMAT.into(),
        seed,
        config_fingerprint: config.fingerprint(seed),
        dataset_fingerprint: crate::io::dataset_fingerprint(dataset),
        config: config.clone(),
        pretraining: PretrainSummary { loss: pretrain_history },
        folds,
        fold_averaged_auc,
        model,
        panel,
        baseline: random_baseline(&model_examples)?,
        reference: ReferenceValues::published(),
        predictions,
    })
}

fn panel_comparison(kid: &[&EmbryoRecord], config: &ExperimentConfig, seed: u64) -> Result<PanelComparison> {
    let graded_kid: Vec<&&EmbryoRecord> = kid.iter().filter(|r| r.grades.is_some()).collect();
    let grades: Vec<[u8; PANEL_SIZE]> = graded_kid
        .iter()
        .map(|r| r.grades.expect("filtered").grades())
        .collect();
    let labels: Vec<bool> = graded_kid.iter().map(|r| r.kid_label.unwrap_or(false)).collect();
    if graded_kid.is_empty() {
        return Err(Error::EmptyInput("panel grades on KID embryos"));
    }
    let mean_examples: Vec<ScoredExample> = grades
        .iter()
        .zip(&labels)
        .map(|(g, &l)| ScoredExample::new(g.iter().map(|&x| x as f64).sum::<f64>() / PANEL_SIZE as f64, l))
        .collect();
    let pooled = score_summary(
        &mean_examples,
        config.panel_threshold,
        &format!("declared threshold {}", config.panel_threshold),
        config.bootstrap_repetitions,
        derive_seed(seed, "bootstrap-panel", 0),
    )?;
    let per_grader_auc = (0..PANEL_SIZE)
        .map(|j| {
            let ex: Vec<ScoredExample> = grades
                .iter()
                .zip(&labels)
                .map(|(g, &l)| ScoredExample::new(g[j] as f64, l))
                .collect();
            Ok(auc(&roc_curve(&ex)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = per_grader_auc.iter().sum::<f64>() / PANEL_SIZE as f64;
    let s = (per_grader_auc.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / PANEL_SIZE as f64).sqrt();
    Ok(PanelComparison {
        aggregation: "mean of the five panel grades".into(),
        pooled,
        per_grader_auc,
        per_grader_auc_mean: m,
        per_grader_auc_std: s,
    })
}

/// Pretrain then cross-validate, all in memory.
pub fn run_experiment_on(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<EvaluationReport> {
    config.validate()?;
    let (autoencoder, history) = pretrain(dataset, config, seed).stage("pretrain")?;
    cross_validate(dataset, &autoencoder, history, config, seed)
}

/// Load the dataset at `dir` and run the full experiment.
pub fn run_experiment(dir: &std::path::Path, config: &ExperimentConfig, seed: u64) -> Result<EvaluationReport> {
    let dataset = crate::io::load_dataset(dir).stage("load")?;
    run_experiment_on(&dataset, config, seed)
}
