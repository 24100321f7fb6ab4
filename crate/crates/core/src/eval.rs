//! ROC/AUC with bootstrap uncertainty, predictive values, panel scoring and
//! the prevalence baseline.
//!
//! Everywhere in this module an example is called positive at threshold `t`
//! iff `score >= t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::PanelGrades;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub score: f64,
    /// `true` = implanted.
    pub label: bool,
}

impl ScoredExample {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `+inf` for the `(0, 0)` origin.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

fn class_counts(examples: &[ScoredExample]) -> Result<(usize, usize)> {
    if let Some(e) = examples.iter().find(|e| !e.score.is_finite()) {
        return Err(Error::Config(format!("non-finite score {}", e.score)));
    }
    let pos = examples.iter().filter(|e| e.label).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::RocUndefined);
    }
    Ok((pos, neg))
}

/// One point per distinct score (tied scores collapse), swept from the
/// highest threshold down, preceded by the origin.
pub fn roc_curve(examples: &[ScoredExample]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(examples)?;
    let mut sorted = examples.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve {
        points,
        positives: pos,
        negatives: neg,
    })
}

/// Trapezoidal area under the curve, accumulated in integer counts so a
/// perfect ranking gives exactly 1.
pub fn auc(curve: &RocCurve) -> f64 {
    let (pos, neg) = (curve.positives as f64, curve.negatives as f64);
    let counts = |p: &RocPoint| ((p.fpr * neg).round() as u128, (p.tpr * pos).round() as u128);
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| {
            let ((f0, t0), (f1, t1)) = (counts(&w[0]), counts(&w[1]));
            (f1 - f0) * (t0 + t1)
        })
        .sum();
    twice_area as f64 / (2.0 * pos * neg)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. Quadratic; used as an independent check on [`auc`].
pub fn auc_pair_oracle(examples: &[ScoredExample]) -> Result<f64> {
    let (pos, neg) = class_counts(examples)?;
    let mut wins = 0.0;
    for p in examples.iter().filter(|e| e.label) {
        for n in examples.iter().filter(|e| !e.label) {
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos * neg) as f64)
}

pub fn roc_auc(examples: &[ScoredExample]) -> Result<f64> {
    Ok(auc(&roc_curve(examples)?))
}

/// Threshold maximizing `TPR − FPR`; the highest such threshold on ties.
pub fn youden_threshold(curve: &RocCurve) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .fold((f64::NEG_INFINITY, f64::NAN), |(best, t), p| {
            let j = p.tpr - p.fpr;
            if j > best {
                (j, p.threshold)
            } else {
                (best, t)
            }
        })
        .1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    /// Population standard deviation over repetitions.
    pub std: f64,
    pub repetitions: usize,
    pub seed: u64,
}

/// Bootstrap the AUC: each repetition resamples the examples with
/// replacement at the original size; single-class resamples are redrawn.
pub fn bootstrap_auc(examples: &[ScoredExample], repetitions: usize, seed: u64) -> Result<BootstrapSummary> {
    bootstrap_auc_with(examples, repetitions, seed, |rng, n| {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    })
}

/// Bootstrap with a caller-supplied resampler. Repetition `r` owns the
/// generator seeded from `(seed, r)`, so results do not depend on how
/// repetitions are scheduled across threads.
pub fn bootstrap_auc_with(
    examples: &[ScoredExample],
    repetitions: usize,
    seed: u64,
    resample: impl Fn(&mut ChaCha8Rng, usize) -> Vec<usize> + Sync,
) -> Result<BootstrapSummary> {
    class_counts(examples)?;
    if repetitions == 0 {
        return Err(Error::Config("bootstrap needs at least one repetition".into()));
    }
    let aucs: Vec<f64> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", rep as u64));
            loop {
                let sample: Vec<ScoredExample> = resample(&mut rng, examples.len())
                    .into_iter()
                    .map(|i| examples[i])
                    .collect();
                if let Ok(a) = roc_auc(&sample) {
                    return a;
                }
            }
        })
        .collect();
    let r = repetitions as f64;
    let mean = aucs.iter().sum::<f64>() / r;
    let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / r;
    Ok(BootstrapSummary {
        mean,
        std: var.sqrt(),
        repetitions,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveValues {
    /// `None` for the label-blind baseline, which has no threshold.
    pub threshold: Option<f64>,
    /// `None` for the baseline, which is an expectation rather than a tally.
    pub confusion: Option<Confusion>,
    /// Undefined (`None`) when nothing is predicted positive.
    pub ppv: Option<f64>,
    /// Undefined (`None`) when nothing is predicted negative.
    pub npv: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn predictive_values(examples: &[ScoredExample], threshold: f64) -> PredictiveValues {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for e in examples {
        match (e.score >= threshold, e.label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    PredictiveValues {
        threshold: Some(threshold),
        confusion: Some(c),
        ppv: ratio(c.tp, c.tp + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
    }
}

/// Expected predictive values of a classifier that ignores its input: PPV is
/// the positive prevalence, NPV the negative prevalence.
pub fn random_baseline(examples: &[ScoredExample]) -> Result<PredictiveValues> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("baseline examples"));
    }
    let pos = examples.iter().filter(|e| e.label).count();
    let n = examples.len();
    Ok(PredictiveValues {
        threshold: None,
        confusion: None,
        ppv: Some(pos as f64 / n as f64),
        npv: Some((n - pos) as f64 / n as f64),
    })
}

/// Mean of the five panel grades.
pub fn panel_score(grades: &[i64]) -> Result<f64> {
    Ok(panel_mean(&PanelGrades::new(grades)?))
}

pub fn panel_mean(panel: &PanelGrades) -> f64 {
    let g = panel.grades();
    g.iter().map(|&x| x as f64).sum::<f64>() / g.len() as f64
}
