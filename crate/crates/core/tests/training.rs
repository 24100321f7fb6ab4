use embryo_core::autoencoder::{
    build_autoencoder, embed_video, train_autoencoder, AutoencoderModel, AutoencoderTraining, EncoderSpec,
    FrameEmbedding,
};
use embryo_core::nn::AdamConfig;
use embryo_core::record::{EmbryoRecord, Frame};
use embryo_core::sequence::{
    grades_histogram, train_grade_model, transfer_binary_head, GradeDistribution, SequenceModel, SequenceTraining,
    Target, TransferPolicy,
};
use embryo_core::synth::{generate_dataset, SyntheticConfig};

fn mean_reconstruction(model: &AutoencoderModel, frames: &[Frame]) -> f64 {
    frames
        .iter()
        .map(|f| model.reconstruction_loss(f).unwrap())
        .sum::<f64>()
        / frames.len() as f64
}

#[test]
fn autoencoder_halves_reconstruction_loss() {
    let cfg = SyntheticConfig {
        n_unlabeled: 25,
        n_graded: 0,
        n_kid: 0,
        frames_per_video: 8,
        seed: 1,
        ..SyntheticConfig::default()
    };
    let frames: Vec<Frame> = generate_dataset(&cfg)
        .unwrap()
        .unlabeled
        .iter()
        .flat_map(|r| r.video.frames())
        .collect();
    assert_eq!(frames.len(), 200);
    let model = build_autoencoder(&EncoderSpec::desk(), 2).unwrap();
    let before = mean_reconstruction(&model, &frames);
    let training = AutoencoderTraining {
        epochs: 20,
        ..AutoencoderTraining::default()
    };
    let (trained, history) = train_autoencoder(model, &frames, &training, 3).unwrap();
    let after = mean_reconstruction(&trained, &frames);
    assert_eq!(history.len(), 20);
    assert!(after <= 0.5 * before, "before {before}, after {after}");
}

struct Embedded {
    graded: Vec<Vec<FrameEmbedding>>,
    grades: Vec<GradeDistribution>,
    kid: Vec<Vec<FrameEmbedding>>,
    labels: Vec<bool>,
}

/// Small dataset embedded with an untrained, normalized encoder.
fn embedded() -> Embedded {
    let cfg = SyntheticConfig {
        n_unlabeled: 10,
        n_graded: 60,
        n_kid: 60,
        frames_per_video: 6,
        frame_size: 16,
        seed: 9,
        ..SyntheticConfig::default()
    };
    let ds = generate_dataset(&cfg).unwrap();
    let mut ae = build_autoencoder(&EncoderSpec::desk_sized(16), 4).unwrap();
    let pool: Vec<Frame> = ds.unlabeled.iter().flat_map(|r| r.video.frames()).collect();
    ae.fit_normalizer(&pool).unwrap();
    let embed = |rs: &[EmbryoRecord]| -> Vec<Vec<FrameEmbedding>> {
        rs.iter()
            .map(|r| embed_video(&ae, &r.video.frames()).unwrap())
            .collect()
    };
    Embedded {
        graded: embed(&ds.graded),
        grades: ds
            .graded
            .iter()
            .map(|r| grades_histogram(r.grades.as_ref().unwrap()))
            .collect(),
        kid: embed(&ds.kid),
        labels: ds.kid.iter().map(|r| r.kid_label.unwrap()).collect(),
    }
}

fn training(epochs: usize) -> SequenceTraining {
    SequenceTraining {
        hidden_dim: 16,
        epochs,
        batch_size: 8,
        adam: AdamConfig::with_lr(5e-3),
        trunk_lr_scale: 0.1,
    }
}

fn mean_loss(model: &SequenceModel, videos: &[Vec<FrameEmbedding>], targets: &[Target]) -> f64 {
    videos
        .iter()
        .zip(targets)
        .map(|(v, t)| model.loss_and_grads(v, t).unwrap().0)
        .sum::<f64>()
        / videos.len() as f64
}

#[test]
fn grade_model_lowers_cross_entropy() {
    let data = embedded();
    let targets: Vec<Target> = data.grades.iter().map(|d| Target::Grades(*d)).collect();
    let (untrained, _) = train_grade_model(&data.graded, &data.grades, &training(0), 1).unwrap();
    let (trained, history) = train_grade_model(&data.graded, &data.grades, &training(15), 1).unwrap();
    assert_eq!(history.len(), 15);
    let (before, after) = (
        mean_loss(&untrained, &data.graded, &targets),
        mean_loss(&trained, &data.graded, &targets),
    );
    assert!(after < before, "before {before}, after {after}");
}

#[test]
fn constant_one_hot_target_is_learned() {
    let data = embedded();
    let one_hot = GradeDistribution::new([0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    let grades = vec![one_hot; data.graded.len()];
    let (model, _) = train_grade_model(&data.graded, &grades, &training(20), 2).unwrap();
    let targets = vec![Target::Grades(one_hot); data.graded.len()];
    let ce = mean_loss(&model, &data.graded, &targets);
    assert!(ce < 0.1, "final cross-entropy {ce}");
}

#[test]
fn transfer_policies_respect_the_trunk() {
    let data = embedded();
    let (grader, _) = train_grade_model(&data.graded, &data.grades, &training(3), 3).unwrap();

    let (head_only, _) = transfer_binary_head(
        &grader,
        &data.kid,
        &data.labels,
        TransferPolicy::HeadOnly,
        &training(3),
        4,
    )
    .unwrap();
    for (name, t) in grader.trunk_params().iter() {
        let after = head_only.params.get(name).unwrap();
        assert!(
            t.data()
                .iter()
                .zip(after.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()),
            "{name} moved"
        );
    }
    assert_ne!(head_only.head_params(), grader.head_params());

    let (full, _) = transfer_binary_head(
        &grader,
        &data.kid,
        &data.labels,
        TransferPolicy::FullFinetune,
        &training(3),
        4,
    )
    .unwrap();
    assert_ne!(full.trunk_params(), grader.trunk_params());
}

#[test]
fn transfer_lowers_weighted_bce_and_is_deterministic() {
    let data = embedded();
    let (grader, _) = train_grade_model(&data.graded, &data.grades, &training(3), 5).unwrap();
    let n_pos = data.labels.iter().filter(|&&l| l).count();
    let pos_weight = (data.labels.len() - n_pos) as f64 / n_pos as f64;
    let targets: Vec<Target> = data
        .labels
        .iter()
        .map(|&implanted| Target::Label { implanted, pos_weight })
        .collect();
    let run = |epochs| {
        transfer_binary_head(
            &grader,
            &data.kid,
            &data.labels,
            TransferPolicy::FullFinetune,
            &training(epochs),
            6,
        )
        .unwrap()
        .0
    };
    let before = mean_loss(&run(0), &data.kid, &targets);
    let trained = run(15);
    let after = mean_loss(&trained, &data.kid, &targets);
    assert!(after < before, "before {before}, after {after}");
    assert_eq!(run(15), trained);
}
