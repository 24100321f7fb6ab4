//! Synthetic embryo time-lapse data with a controllable latent viability.
//!
//! Each embryo draws a latent viability `v ~ U(0, 1)`. Its video shows a disk
//! that grows at a rate proportional to `v` and carries dark fragmentation
//! speckle proportional to `1 − v`; five simulated raters grade it from `v`;
//! its implantation outcome is Bernoulli with a logistic link in `v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::softplus;
use crate::nn::sigmoid;
use crate::record::{Dataset, EmbryoRecord, Frame, PanelGrades, Subset, Video, PANEL_SIZE};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// Outcome logit slope at `signal_strength = 1`.
pub const OUTCOME_SLOPE: f64 = 10.0;

const BACKGROUND: f64 = 0.15;
const DISK: f64 = 0.75;
const BASE_RADIUS: f64 = 0.12;
const GROWTH: f64 = 0.22;
const SPECKLE_DENSITY: f64 = 0.3;
const SPECKLE_DEPTH: f64 = 0.6;
const PIXEL_NOISE: f64 = 0.03;
const MAX_EMBRYOS_PER_PATIENT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_unlabeled: usize,
    pub n_graded: usize,
    pub n_kid: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    /// 0 makes frames and outcomes independent of viability. Values up to 1
    /// scale the imaging signal; the outcome slope is `OUTCOME_SLOPE · s`.
    pub signal_strength: f64,
    pub rater_noise_std: f64,
    pub target_prevalence: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_unlabeled: 800,
            n_graded: 300,
            n_kid: 272,
            frames_per_video: 16,
            frame_size: 32,
            signal_strength: 1.0,
            rater_noise_std: 0.75,
            target_prevalence: 0.79,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return Err(Error::Config(format!(
                "target_prevalence {} outside (0, 1)",
                self.target_prevalence
            )));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return Err(Error::Config(format!(
                "signal_strength {} must be >= 0",
                self.signal_strength
            )));
        }
        if !(self.rater_noise_std >= 0.0 && self.rater_noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "rater_noise_std {} must be >= 0",
                self.rater_noise_std
            )));
        }
        if self.frames_per_video == 0 || self.frame_size < 4 {
            return Err(Error::Config("need frames_per_video >= 1 and frame_size >= 4".into()));
        }
        Ok(())
    }
}

/// Latent viability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LatentViability(f64);

impl LatentViability {
    pub fn new(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("viability {v} outside [0, 1]")));
        }
        Ok(Self(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Render frame `t` of an embryo with viability `v`.
pub fn render_frame(v: LatentViability, t: usize, config: &SyntheticConfig, rng: &mut impl Rng) -> Result<Frame> {
    if t >= config.frames_per_video {
        return Err(Error::Config(format!(
            "frame index {t} >= frames_per_video {}",
            config.frames_per_video
        )));
    }
    let gain = config.signal_strength.min(1.0);
    let seen = 0.5 + gain * (v.0 - 0.5);
    let size = config.frame_size;
    let progress = if config.frames_per_video > 1 {
        t as f64 / (config.frames_per_video - 1) as f64
    } else {
        1.0
    };
    let radius = size as f64 * (BASE_RADIUS + GROWTH * seen * progress);
    let center = (size as f64 - 1.0) / 2.0;
    let speckle = SPECKLE_DEPTH * (1.0 - seen);
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid std");
    let pixels = Tensor::from_fn(&[1, size, size], |idx| {
        let (i, j) = ((idx / size) as f64, (idx % size) as f64);
        let d = ((i - center).powi(2) + (j - center).powi(2)).sqrt();
        let coverage = (radius - d + 0.5).clamp(0.0, 1.0);
        let mut p = BACKGROUND + coverage * (DISK - BACKGROUND);
        if coverage > 0.0 && rng.random_bool(SPECKLE_DENSITY) {
            p -= coverage * speckle * rng.random::<f64>();
        }
        (p + noise.sample(rng)).clamp(0.0, 1.0)
    });
    Frame::new(pixels)
}

/// Five independent rater grades: `clamp(round(1 + 4v + N(0, σ)), 1, 5)`.
pub fn sample_grades(v: LatentViability, rater_noise_std: f64, rng: &mut impl Rng) -> PanelGrades {
    let grades: Vec<i64> = (0..PANEL_SIZE)
        .map(|_| {
            let jitter = if rater_noise_std > 0.0 {
                Normal::new(0.0, rater_noise_std).expect("finite std").sample(rng)
            } else {
                0.0
            };
            ((1.0 + 4.0 * v.0 + jitter).round() as i64).clamp(1, 5)
        })
        .collect();
    PanelGrades::new(&grades).expect("grades clamped to range")
}

/// Logistic outcome model `P(implant | v) = σ(slope·(v − ½) + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCalibration {
    pub slope: f64,
    pub intercept: f64,
}

impl OutcomeCalibration {
    /// Slope from the signal strength; intercept solved so the mean positive
    /// rate over `v ~ U(0, 1)` equals `prevalence`.
    pub fn solve(signal_strength: f64, prevalence: f64) -> Result<Self> {
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::Config(format!("prevalence {prevalence} outside (0, 1)")));
        }
        let slope = OUTCOME_SLOPE * signal_strength;
        let (mut lo, mut hi) = (-100.0 - slope, 100.0 + slope);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_rate(slope, mid) < prevalence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            slope,
            intercept: 0.5 * (lo + hi),
        })
    }

    pub fn probability(&self, v: LatentViability) -> f64 {
        sigmoid(self.slope * (v.0 - 0.5) + self.intercept)
    }
}

/// `∫₀¹ σ(a(v − ½) + b) dv`.
pub fn mean_rate(slope: f64, intercept: f64) -> f64 {
    if slope.abs() < 1e-9 {
        return sigmoid(intercept);
    }
    (softplus(slope / 2.0 + intercept) - softplus(-slope / 2.0 + intercept)) / slope
}

pub fn sample_outcome(v: LatentViability, calibration: &OutcomeCalibration, rng: &mut impl Rng) -> bool {
    rng.random::<f64>() < calibration.probability(v)
}

/// A generated record together with the latent viability it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEmbryo {
    pub viability: LatentViability,
    pub record: EmbryoRecord,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticDataset {
    pub unlabeled: Vec<SyntheticEmbryo>,
    pub graded: Vec<SyntheticEmbryo>,
    pub kid: Vec<SyntheticEmbryo>,
}

impl SyntheticDataset {
    pub fn into_dataset(self) -> Dataset {
        let strip = |v: Vec<SyntheticEmbryo>| v.into_iter().map(|e| e.record).collect();
        Dataset {
            unlabeled: strip(self.unlabeled),
            graded: strip(self.graded),
            kid: strip(self.kid),
        }
    }
}

pub fn generate_dataset(config: &SyntheticConfig) -> Result<Dataset> {
    Ok(generate_with_latents(config)?.into_dataset())
}

/// Like [`generate_dataset`], keeping each embryo's latent viability.
pub fn generate_with_latents(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let calibration = OutcomeCalibration::solve(config.signal_strength, config.target_prevalence)?;
    let mut next_patient = 0usize;
    let mut subset = |kind: Subset, n: usize| -> Vec<SyntheticEmbryo> {
        let patients = patient_ids(n, &mut next_patient, derive_seed(config.seed, kind.as_str(), u64::MAX));
        patients
            .into_iter()
            .enumerate()
            .map(|(i, patient_id)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, kind.as_str(), i as u64));
                synth_embryo(kind, i, patient_id, config, &calibration, &mut rng)
            })
            .collect()
    };
    Ok(SyntheticDataset {
        unlabeled: subset(Subset::Unlabeled, config.n_unlabeled),
        graded: subset(Subset::Graded, config.n_graded),
        kid: subset(Subset::Kid, config.n_kid),
    })
}

/// Patient ids for `n` consecutive embryos; each patient owns 1..=3 of them.
fn patient_ids(n: usize, next_patient: &mut usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        *next_patient += 1;
        let owned = rng.random_range(1..=MAX_EMBRYOS_PER_PATIENT).min(n - ids.len());
        let id = format!("P{:05}", *next_patient);
        ids.extend(std::iter::repeat_n(id, owned));
    }
    ids
}

fn synth_embryo(
    kind: Subset,
    index: usize,
    patient_id: String,
    config: &SyntheticConfig,
    calibration: &OutcomeCalibration,
    rng: &mut ChaCha8Rng,
) -> SyntheticEmbryo {
    let viability = LatentViability(rng.random::<f64>());
    let frames: Vec<Frame> = (0..config.frames_per_video)
        .map(|t| render_frame(viability, t, config, rng).expect("t in range"))
        .collect();
    let video = Video::from_frames(&frames).expect("frames share one shape");
    // The panel grades KID embryos too; that is what the model is compared against.
    let grades = (kind != Subset::Unlabeled).then(|| sample_grades(viability, config.rater_noise_std, rng));
    let kid_label = (kind == Subset::Kid).then(|| sample_outcome(viability, calibration, rng));
    let prefix = match kind {
        Subset::Unlabeled => 'U',
        Subset::Graded => 'G',
        Subset::Kid => 'K',
    };
    SyntheticEmbryo {
        viability,
        record: EmbryoRecord {
            embryo_id: format!("{prefix}{index:05}"),
            patient_id,
            subset: kind,
            video,
            grades,
            kid_label,
        },
    }
}
