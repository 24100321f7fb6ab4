//! Flat `key = value` experiment configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::AutoencoderTraining;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::sequence::{SequenceTraining, TransferPolicy};
use crate::synth::SyntheticConfig;

/// Every knob of the pipeline. Unknown keys are rejected; missing keys take
/// the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // synthetic data
    pub n_unlabeled: usize,
    pub n_graded: usize,
    pub n_kid: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    pub signal_strength: f64,
    pub rater_noise_std: f64,
    pub target_prevalence: f64,

    // autoencoder pretraining
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_lr: f64,
    /// Frames sampled from the unlabeled pool for pretraining; 0 = all.
    pub ae_max_frames: usize,

    // sequence models
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub grade_epochs: usize,
    pub grade_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub transfer_policy: String,
    pub trunk_lr_scale: f64,

    // evaluation
    pub folds: usize,
    pub bootstrap_repetitions: usize,
    pub model_threshold: f64,
    pub panel_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SyntheticConfig::default();
        Self {
            n_unlabeled: synth.n_unlabeled,
            n_graded: synth.n_graded,
            n_kid: synth.n_kid,
            frames_per_video: synth.frames_per_video,
            frame_size: synth.frame_size,
            signal_strength: synth.signal_strength,
            rater_noise_std: synth.rater_noise_std,
            target_prevalence: synth.target_prevalence,
            ae_epochs: 8,
            ae_batch_size: 16,
            ae_lr: 2e-3,
            ae_max_frames: 3200,
            hidden_dim: 64,
            batch_size: 16,
            grade_epochs: 20,
            grade_lr: 2e-3,
            finetune_epochs: 6,
            finetune_lr: 2e-3,
            transfer_policy: "full-finetune".into(),
            trunk_lr_scale: 0.1,
            folds: 10,
            bootstrap_repetitions: 1000,
            model_threshold: 0.5,
            panel_threshold: 3.0,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic(0).validate()?;
        self.policy()?;
        if self.folds < 2 {
            return Err(Error::InvalidFoldCount(self.folds));
        }
        if self.bootstrap_repetitions == 0 || self.hidden_dim == 0 || self.batch_size == 0 || self.ae_batch_size == 0 {
            return Err(Error::Config(
                "bootstrap_repetitions, hidden_dim and batch sizes must be positive".into(),
            ));
        }
        for (name, lr) in [
            ("ae_lr", self.ae_lr),
            ("grade_lr", self.grade_lr),
            ("finetune_lr", self.finetune_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization together with the seed.
    pub fn fingerprint(&self, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.update(seed.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_unlabeled: self.n_unlabeled,
            n_graded: self.n_graded,
            n_kid: self.n_kid,
            frames_per_video: self.frames_per_video,
            frame_size: self.frame_size,
            signal_strength: self.signal_strength,
            rater_noise_std: self.rater_noise_std,
            target_prevalence: self.target_prevalence,
            seed,
        }
    }

    pub fn policy(&self) -> Result<TransferPolicy> {
        self.transfer_policy.parse()
    }

    pub fn autoencoder_training(&self) -> AutoencoderTraining {
        AutoencoderTraining {
            epochs: self.ae_epochs,
            batch_size: self.ae_batch_size,
            adam: AdamConfig::with_lr(self.ae_lr),
        }
    }

    pub fn grade_training(&self) -> SequenceTraining {
        SequenceTraining {
            hidden_dim: self.hidden_dim,
            epochs: self.grade_epochs,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.grade_lr),
            trunk_lr_scale: self.trunk_lr_scale,
        }
    }

    pub fn finetune_training(&self) -> SequenceTraining {
        SequenceTraining {
            epochs: self.finetune_epochs,
            adam: AdamConfig::with_lr(self.finetune_lr),
            ..self.grade_training()
        }
    }
}
