//! Evaluation report: everything needed to redraw the ROC comparison and the
//! predictive-value bars, plus per-fold detail and the out-of-fold scores.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::eval::{BootstrapSummary, PredictiveValues, RocPoint};

pub const REPORT_FORMAT: &str = "embryo-evaluation/1";

/// ROC point as written to disk; the origin's infinite threshold becomes `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRocPoint {
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

impl From<&RocPoint> for ReportRocPoint {
    fn from(p: &RocPoint) -> Self {
        Self {
            threshold: p.threshold.is_finite().then_some(p.threshold),
            fpr: p.fpr,
            tpr: p.tpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPredictiveValues {
    pub label: String,
    pub values: PredictiveValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub auc: f64,
    pub bootstrap: BootstrapSummary,
    pub predictive_values: Vec<LabeledPredictiveValues>,
    pub roc: Vec<ReportRocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelComparison {
    pub aggregation: String,
    /// ROC of the aggregated panel score over all KID embryos.
    pub pooled: ScoreSummary,
    /// One AUC per grader, in panel order.
    pub per_grader_auc: Vec<f64>,
    pub per_grader_auc_mean: f64,
    /// Population std across graders.
    pub per_grader_auc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub graded_train: usize,
    pub kid_train: usize,
    pub validation: usize,
    pub validation_positives: usize,
    /// `None` when the validation fold holds a single class.
    pub auc: Option<f64>,
    pub grade_loss: Vec<f64>,
    pub finetune_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub embryo_id: String,
    pub patient_id: String,
    pub fold: usize,
    pub implanted: bool,
    pub score: f64,
    pub panel_score: Option<f64>,
}

/// A published value with its spread, if one was given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub value: f64,
    pub spread: Option<f64>,
}

impl ReferenceValue {
    fn new(value: f64, spread: Option<f64>) -> Self {
        Self { value, spread }
    }
}

/// Clinical results published for the original system on 272 KID embryos.
/// These are carried for side-by-side reading only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub status: String,
    pub source: String,
    pub model_auc: ReferenceValue,
    pub panel_auc: ReferenceValue,
    pub model_ppv: ReferenceValue,
    pub model_npv: ReferenceValue,
    pub panel_ppv: ReferenceValue,
    pub panel_npv: ReferenceValue,
}

impl ReferenceValues {
    pub fn published() -> Self {
        Self {
            status: "reference, not reproduced".into(),
            source: "published clinical evaluation on 272 KID embryos; requires private data".into(),
            model_auc: ReferenceValue::new(0.82, Some(0.07)),
            panel_auc: ReferenceValue::new(0.58, Some(0.04)),
            model_ppv: ReferenceValue::new(0.93, None),
            model_npv: ReferenceValue::new(0.58, None),
            panel_ppv: ReferenceValue::new(0.81, Some(0.01)),
            panel_npv: ReferenceValue::new(0.23, Some(0.08)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
    pub config: ExperimentConfig,
    pub pretraining: PretrainSummary,
    pub folds: Vec<FoldSummary>,
    /// Mean of the per-fold AUCs that are defined.
    pub fold_averaged_auc: Option<f64>,
    /// Computed on the pooled out-of-fold predictions.
    pub model: ScoreSummary,
    pub panel: PanelComparison,
    pub baseline: PredictiveValues,
    pub reference: ReferenceValues,
    pub predictions: Vec<Prediction>,
}
