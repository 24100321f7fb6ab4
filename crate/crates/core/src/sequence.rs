//! LSTM over per-frame embeddings with a swappable head: a 5-way grade
//! distribution head, or a binary implantation head attached by transfer.
//!
//! The head reads the last hidden state `h_T`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::FrameEmbedding;
use crate::error::{Error, Result};
use crate::nn::{
    dense, dense_backward, glorot_uniform, init_lstm, lstm_step_backward, lstm_step_cached, sigmoid, softmax,
    softmax_cross_entropy, weighted_binary_cross_entropy, Adam, AdamConfig, LstmCache, LstmParams, ParamSet,
};
use crate::record::{PanelGrades, PANEL_SIZE};
use crate::tensor::Tensor;

pub const TRUNK: &str = "trunk";
const HEAD_WEIGHT: &str = "head.weight";
const HEAD_BIAS: &str = "head.bias";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Grade,
    Binary,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Grade => PANEL_SIZE,
            HeadKind::Binary => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Grade => "grade",
            HeadKind::Binary => "binary",
        }
    }
}

/// Probabilities over grades 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeDistribution {
    pub probs: [f64; PANEL_SIZE],
}

impl GradeDistribution {
    pub fn new(probs: [f64; PANEL_SIZE]) -> Result<Self> {
        crate::nn::loss::check_distribution(&probs)?;
        Ok(Self { probs })
    }

    fn as_tensor(&self) -> Tensor {
        Tensor::from_vec(self.probs.to_vec())
    }

    /// Expected grade on the 1..=5 scale.
    pub fn mean_grade(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
    }
}

/// Empirical histogram of the panel's grades.
pub fn panel_to_distribution(grades: &[i64]) -> Result<GradeDistribution> {
    let panel = PanelGrades::new(grades)?;
    Ok(grades_histogram(&panel))
}

pub fn grades_histogram(panel: &PanelGrades) -> GradeDistribution {
    let mut probs = [0.0; PANEL_SIZE];
    for g in panel.grades() {
        probs[g as usize - 1] += 1.0 / PANEL_SIZE as f64;
    }
    GradeDistribution { probs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplantationPrediction {
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferPolicy {
    /// Train the new head only; the trunk is frozen.
    HeadOnly,
    /// Train head and trunk, the trunk at a reduced learning rate.
    FullFinetune,
}

impl std::str::FromStr for TransferPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head-only" => Ok(Self::HeadOnly),
            "full-finetune" => Ok(Self::FullFinetune),
            other => Err(Error::Config(format!("unknown transfer policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTraining {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Trunk learning rate as a fraction of the head's under full fine-tuning.
    pub trunk_lr_scale: f64,
}

impl Default for SequenceTraining {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            trunk_lr_scale: 0.1,
        }
    }
}

/// LSTM trunk plus exactly one head.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub head: HeadKind,
    pub params: ParamSet,
}

struct ForwardCache {
    steps: Vec<LstmCache>,
    last_hidden: Tensor,
}

impl SequenceModel {
    /// Fresh trunk and head.
    pub fn new(embedding_dim: usize, hidden_dim: usize, head: HeadKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = init_lstm(TRUNK, embedding_dim, hidden_dim, &mut rng);
        let k = head.outputs();
        params.insert(HEAD_WEIGHT, glorot_uniform(&[k, hidden_dim], hidden_dim, k, &mut rng));
        params.insert(HEAD_BIAS, Tensor::zeros(&[k]));
        Self {
            embedding_dim,
            hidden_dim,
            head,
            params,
        }
    }

    pub fn trunk_params(&self) -> ParamSet {
        self.params.subset(&format!("{TRUNK}."))
    }

    pub fn head_params(&self) -> ParamSet {
        self.params.subset("head.")
    }

    fn require_head(&self, expected: HeadKind) -> Result<()> {
        if self.head != expected {
            return Err(Error::WrongHead {
                expected: expected.as_str(),
                actual: self.head.as_str(),
            });
        }
        Ok(())
    }

    fn forward(&self, video: &[FrameEmbedding]) -> Result<(Tensor, ForwardCache)> {
        if video.is_empty() {
            return Err(Error::EmptyInput("embedded video"));
        }
        let lstm = LstmParams::from_set(&self.params, TRUNK)?;
        let mut h = Tensor::zeros(&[self.hidden_dim]);
        let mut c = Tensor::zeros(&[self.hidden_dim]);
        let mut steps = Vec::with_capacity(video.len());
        for e in video {
            let (h2, c2, cache) = lstm_step_cached(&e.vector, &h, &c, &lstm)?;
            steps.push(cache);
            h = h2;
            c = c2;
        }
        let logits = dense(&h, self.params.get(HEAD_WEIGHT)?, self.params.get(HEAD_BIAS)?)?;
        Ok((logits, ForwardCache { steps, last_hidden: h }))
    }

    pub fn logits(&self, video: &[FrameEmbedding]) -> Result<Tensor> {
        Ok(self.forward(video)?.0)
    }

    /// Parameter gradients given `d loss / d logits`. With `trunk = false`
    /// only the head gradients are computed.
    fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor, trunk: bool) -> Result<ParamSet> {
        let (gh, gw, gb) = dense_backward(grad_logits, &cache.last_hidden, self.params.get(HEAD_WEIGHT)?)?;
        let mut grads = ParamSet::new();
        grads.insert(HEAD_WEIGHT, gw);
        grads.insert(HEAD_BIAS, gb);
        if trunk {
            let lstm = LstmParams::from_set(&self.params, TRUNK)?;
            let mut dh = gh;
            let mut dc = Tensor::zeros(&[self.hidden_dim]);
            for step in cache.steps.iter().rev() {
                let g = lstm_step_backward(&dh, &dc, step, &lstm, TRUNK, &mut grads)?;
                dh = g.h_prev;
                dc = g.c_prev;
            }
        }
        Ok(grads)
    }

    /// Loss and full parameter gradients of one example.
    pub fn loss_and_grads(&self, video: &[FrameEmbedding], target: &Target) -> Result<(f64, ParamSet)> {
        self.example_grads(video, target, true)
    }

    fn example_grads(&self, video: &[FrameEmbedding], target: &Target, trunk: bool) -> Result<(f64, ParamSet)> {
        let (logits, cache) = self.forward(video)?;
        let loss = match target {
            Target::Grades(d) => {
                self.require_head(HeadKind::Grade)?;
                softmax_cross_entropy(&logits, &d.as_tensor())?
            }
            Target::Label { implanted, pos_weight } => {
                self.require_head(HeadKind::Binary)?;
                weighted_binary_cross_entropy(logits.data()[0], *implanted, *pos_weight)
            }
        };
        let grads = self.backward(&cache, &loss.gradient, trunk)?;
        Ok((loss.value, grads))
    }
}

/// Supervision for one video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Grades(GradeDistribution),
    Label { implanted: bool, pos_weight: f64 },
}

fn check_videos(videos: &[Vec<FrameEmbedding>], embedding_dim: usize) -> Result<()> {
    for v in videos {
        if v.is_empty() {
            return Err(Error::EmptyInput("embedded video"));
        }
        if let Some(e) = v.iter().find(|e| e.vector.shape() != [embedding_dim]) {
            return Err(Error::ShapeMismatch {
                op: "sequence input",
                left: e.vector.shape().to_vec(),
                right: vec![embedding_dim],
            });
        }
    }
    Ok(())
}

/// One optimizer over a group of parameters (identified by name prefix).
struct Group {
    prefix: String,
    adam: Adam,
}

/// Minibatch training shared by both heads. Only parameters covered by
/// `groups` are updated; returns the mean training loss of every epoch.
fn fit(
    model: &mut SequenceModel,
    videos: &[Vec<FrameEmbedding>],
    targets: &[Target],
    groups: &mut [Group],
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let train_trunk = groups
        .iter()
        .any(|g| TRUNK.starts_with(g.prefix.as_str()) || g.prefix.starts_with(TRUNK));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size.max(1)) {
            let results = batch
                .par_iter()
                .map(|&i| model.example_grads(&videos[i], &targets[i], train_trunk))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = ParamSet::new();
            for (loss, g) in &results {
                total += loss;
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            for group in groups.iter_mut() {
                let mut p = model.params.subset(&group.prefix);
                group.adam.step(&mut p, &grads.subset(&group.prefix))?;
                model.params.merge(p);
            }
        }
        history.push(total / videos.len() as f64);
    }
    Ok(history)
}

/// Train trunk and grade head on panel grade distributions.
pub fn train_grade_model(
    videos: &[Vec<FrameEmbedding>],
    targets: &[GradeDistribution],
    training: &SequenceTraining,
    seed: u64,
) -> Result<(SequenceModel, Vec<f64>)> {
    let first = videos
        .first()
        .and_then(|v| v.first())
        .ok_or(Error::EmptyInput("grade training set"))?;
    if videos.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "train_grade_model",
            left: vec![videos.len()],
            right: vec![targets.len()],
        });
    }
    let embedding_dim = first.vector.len();
    check_videos(videos, embedding_dim)?;
    let mut model = SequenceModel::new(embedding_dim, training.hidden_dim, HeadKind::Grade, seed);
    let targets: Vec<Target> = targets.iter().map(|d| Target::Grades(*d)).collect();
    let mut groups = [Group {
        prefix: String::new(),
        adam: Adam::new(training.adam, &model.params),
    }];
    let history = fit(
        &mut model,
        videos,
        &targets,
        &mut groups,
        training.epochs,
        training.batch_size,
        crate::seed::derive_seed(seed, "grade-fit", 0),
    )?;
    Ok((model, history))
}

pub fn predict_grades(model: &SequenceModel, video: &[FrameEmbedding]) -> Result<GradeDistribution> {
    model.require_head(HeadKind::Grade)?;
    let p = softmax(model.logits(video)?.data());
    Ok(GradeDistribution {
        probs: p.try_into().expect("grade head has five outputs"),
    })
}

/// Replace the grade head with a fresh binary head and train it on
/// implantation labels. Positives are weighted by `n_neg / n_pos`.
pub fn transfer_binary_head(
    grade_model: &SequenceModel,
    videos: &[Vec<FrameEmbedding>],
    labels: &[bool],
    policy: TransferPolicy,
    training: &SequenceTraining,
    seed: u64,
) -> Result<(SequenceModel, Vec<f64>)> {
    grade_model.require_head(HeadKind::Grade)?;
    if videos.is_empty() {
        return Err(Error::EmptyInput("transfer training set"));
    }
    if videos.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "transfer_binary_head",
            left: vec![videos.len()],
            right: vec![labels.len()],
        });
    }
    check_videos(videos, grade_model.embedding_dim)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let pos_weight = n_neg as f64 / n_pos as f64;

    let fresh = SequenceModel::new(
        grade_model.embedding_dim,
        grade_model.hidden_dim,
        HeadKind::Binary,
        seed,
    );
    let mut model = SequenceModel {
        head: HeadKind::Binary,
        params: grade_model.trunk_params(),
        ..fresh.clone()
    };
    model.params.merge(fresh.head_params());

    let head_group = Group {
        prefix: "head.".into(),
        adam: Adam::new(training.adam, &model.head_params()),
    };
    let mut groups = match policy {
        TransferPolicy::HeadOnly => vec![head_group],
        TransferPolicy::FullFinetune => {
            let trunk_cfg = AdamConfig {
                lr: training.adam.lr * training.trunk_lr_scale,
                ..training.adam
            };
            vec![
                Group {
                    prefix: format!("{TRUNK}."),
                    adam: Adam::new(trunk_cfg, &model.trunk_params()),
                },
                head_group,
            ]
        }
    };
    let targets: Vec<Target> = labels
        .iter()
        .map(|&implanted| Target::Label { implanted, pos_weight })
        .collect();
    let history = fit(
        &mut model,
        videos,
        &targets,
        &mut groups,
        training.epochs,
        training.batch_size,
        crate::seed::derive_seed(seed, "transfer-fit", 0),
    )?;
    Ok((model, history))
}

pub fn predict_implantation(model: &SequenceModel, video: &[FrameEmbedding]) -> Result<ImplantationPrediction> {
    model.require_head(HeadKind::Binary)?;
    Ok(ImplantationPrediction {
        probability: sigmoid(model.logits(video)?.data()[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn video(len: usize, dim: usize, seed: u64) -> Vec<FrameEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| FrameEmbedding {
                vector: Tensor::from_fn(&[dim], |_| rng.random_range(-1.0..1.0)),
            })
            .collect()
    }

    #[test]
    fn panel_histograms() {
        let d = panel_to_distribution(&[3, 3, 3, 3, 3]).unwrap();
        assert_eq!(d.probs, [0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = panel_to_distribution(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(d.probs, [0.2; 5]);
        let d = panel_to_distribution(&[4, 4, 5, 3, 4]).unwrap();
        for (p, e) in d.probs.iter().zip([0.0, 0.0, 0.2, 0.6, 0.2]) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!(matches!(
            panel_to_distribution(&[0, 1, 2, 3, 4]),
            Err(Error::GradeOutOfRange(0))
        ));
    }

    #[test]
    fn zero_head_gives_uniform_or_half() {
        let mut m = SequenceModel::new(4, 6, HeadKind::Grade, 1);
        m.params.insert(HEAD_WEIGHT, Tensor::zeros(&[5, 6]));
        let d = predict_grades(&m, &video(3, 4, 0)).unwrap();
        assert_eq!(d.probs, [0.2; 5]);

        let mut b = SequenceModel::new(4, 6, HeadKind::Binary, 1);
        b.params.insert(HEAD_WEIGHT, Tensor::zeros(&[1, 6]));
        assert_eq!(predict_implantation(&b, &video(3, 4, 0)).unwrap().probability, 0.5);
    }

    #[test]
    fn wrong_head_is_rejected() {
        let g = SequenceModel::new(4, 6, HeadKind::Grade, 1);
        let b = SequenceModel::new(4, 6, HeadKind::Binary, 1);
        assert!(matches!(
            predict_implantation(&g, &video(2, 4, 0)),
            Err(Error::WrongHead { .. })
        ));
        assert!(matches!(
            predict_grades(&b, &video(2, 4, 0)),
            Err(Error::WrongHead { .. })
        ));
    }

    #[test]
    fn binary_probability_increases_with_bias() {
        let mut m = SequenceModel::new(4, 6, HeadKind::Binary, 2);
        let v = video(5, 4, 1);
        let mut last = -1.0;
        for b in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            m.params.insert(HEAD_BIAS, Tensor::from_vec(vec![b]));
            let p = predict_implantation(&m, &v).unwrap().probability;
            assert!(p > last && (0.0..=1.0).contains(&p));
            last = p;
        }
    }

    #[test]
    fn frame_order_matters() {
        let m = SequenceModel::new(4, 6, HeadKind::Grade, 3);
        let v = video(4, 4, 2);
        let mut swapped = v.clone();
        swapped.swap(0, 3);
        assert_ne!(predict_grades(&m, &v).unwrap(), predict_grades(&m, &swapped).unwrap());
    }

    #[test]
    fn sequence_gradients_match_finite_differences() {
        for (head, target) in [
            (
                HeadKind::Grade,
                Target::Grades(panel_to_distribution(&[2, 3, 3, 4, 5]).unwrap()),
            ),
            (
                HeadKind::Binary,
                Target::Label {
                    implanted: true,
                    pos_weight: 0.3,
                },
            ),
        ] {
            let m = SequenceModel::new(3, 4, head, 9);
            let v = video(4, 3, 5);
            let (_, grads) = m.loss_and_grads(&v, &target).unwrap();
            for (name, p) in m.params.iter() {
                let numeric = crate::nn::finite_diff_grad(
                    |t| {
                        let mut mm = m.clone();
                        mm.params.insert(name, t.clone());
                        mm.loss_and_grads(&v, &target).unwrap().0
                    },
                    p,
                    1e-3,
                );
                let err = crate::nn::max_relative_error(grads.get(name).unwrap(), &numeric, 1e-3);
                assert!(err < 1e-4, "{head:?} {name}: {err:e}");
            }
        }
    }

    #[test]
    fn single_class_transfer_is_rejected() {
        let videos: Vec<_> = (0..4).map(|s| video(3, 4, s)).collect();
        let targets = vec![panel_to_distribution(&[3; 5]).unwrap(); 4];
        let training = SequenceTraining {
            hidden_dim: 5,
            epochs: 1,
            ..Default::default()
        };
        let (g, _) = train_grade_model(&videos, &targets, &training, 0).unwrap();
        let r = transfer_binary_head(&g, &videos, &[true; 4], TransferPolicy::HeadOnly, &training, 0);
        assert!(matches!(r, Err(Error::SingleClass)));
        assert!(matches!(
            train_grade_model(&[], &[], &training, 0),
            Err(Error::EmptyInput(_))
        ));
    }
}
