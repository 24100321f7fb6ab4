//! On-disk formats: dataset manifest and frames, checkpoints, reports.

mod checkpoint;
mod dataset;
mod report;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, Model, TrainingMetadata,
    FORMAT_VERSION, MAGIC,
};
pub use dataset::{
    dataset_fingerprint, load_dataset, read_manifest, save_dataset, ManifestEntry, FRAMES_DIR, MANIFEST_FILE,
};
pub use report::{
    emit_report, figure_svg, parse_report, read_report, report_json, roc_csv, FIGURE_FILE, MODEL_ROC_FILE,
    PANEL_ROC_FILE, REPORT_FILE,
};
