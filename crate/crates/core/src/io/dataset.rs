//! Dataset on disk: `manifest.jsonl` (one embryo per line) next to a
//! `frames/` directory holding one raw 8-bit grayscale file per video.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::record::{Dataset, EmbryoRecord, PanelGrades, Subset, Video};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub embryo_id: String,
    pub patient_id: String,
    pub subset: Subset,
    /// Relative to the dataset directory.
    pub frames_path: String,
    pub frame_count: usize,
    pub frame_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grades: Option<PanelGrades>,
    /// 1 = implanted, 0 = failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kid_label: Option<u8>,
}

impl ManifestEntry {
    pub fn of(record: &EmbryoRecord) -> Self {
        Self {
            embryo_id: record.embryo_id.clone(),
            patient_id: record.patient_id.clone(),
            subset: record.subset,
            frames_path: format!("{FRAMES_DIR}/{}.u8", record.embryo_id),
            frame_count: record.video.frame_count(),
            frame_size: record.video.frame_size(),
            grades: record.grades,
            kid_label: record.kid_label.map(u8::from),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.embryo_id.is_empty() || self.patient_id.is_empty() {
            return Err("empty embryo_id or patient_id".into());
        }
        if self.embryo_id.contains(['/', '\\']) || self.embryo_id.starts_with('.') {
            return Err(format!("embryo_id `{}` is not a safe file name", self.embryo_id));
        }
        match (self.subset, self.grades.is_some(), self.kid_label) {
            (Subset::Unlabeled, false, None) => {}
            (Subset::Unlabeled, _, _) => return Err("unlabeled embryo carries grades or a label".into()),
            (Subset::Graded, true, None) => {}
            (Subset::Graded, _, _) => return Err("graded embryo needs grades and no kid_label".into()),
            (Subset::Kid, _, Some(0 | 1)) => {}
            (Subset::Kid, _, Some(v)) => return Err(format!("kid_label must be 0 or 1, got {v}")),
            (Subset::Kid, _, None) => return Err("KID embryo without kid_label".into()),
        }
        if self.frame_count == 0 || self.frame_size == 0 {
            return Err("frame_count and frame_size must be positive".into());
        }
        Ok(())
    }
}

fn subset_records(dataset: &Dataset) -> [(Subset, &[EmbryoRecord]); 3] {
    [
        (Subset::Unlabeled, &dataset.unlabeled),
        (Subset::Graded, &dataset.graded),
        (Subset::Kid, &dataset.kid),
    ]
}

/// Write the manifest and frame files under `dir`, creating it if needed.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut out = BufWriter::new(file);
    let mut seen = BTreeSet::new();
    for (subset, records) in subset_records(dataset) {
        for r in records {
            let entry = ManifestEntry::of(r);
            let reason = if r.subset != subset {
                Some(format!(
                    "record filed under {} has subset {}",
                    subset.as_str(),
                    r.subset.as_str()
                ))
            } else if !seen.insert(r.embryo_id.clone()) {
                Some(format!("duplicate embryo_id `{}`", r.embryo_id))
            } else {
                entry.check().err()
            };
            if let Some(reason) = reason {
                return Err(Error::Manifest {
                    path: manifest_path,
                    line: seen.len(),
                    reason,
                });
            }
            let frames_path = dir.join(&entry.frames_path);
            fs::write(&frames_path, r.video.pixels()).map_err(|e| Error::io(&frames_path, e))?;
            let line = serde_json::to_string(&entry).map_err(|e| Error::Serde(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(&manifest_path, e))
}

/// Read the manifest, then every frame file it references.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let entries = read_manifest(dir)?;
    let mut dataset = Dataset::default();
    for entry in entries {
        let record = load_record(dir, entry)?;
        match record.subset {
            Subset::Unlabeled => dataset.unlabeled.push(record),
            Subset::Graded => dataset.graded.push(record),
            Subset::Kid => dataset.kid.push(record),
        }
    }
    Ok(dataset)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| Error::Manifest {
            path: path.clone(),
            line: i + 1,
            reason,
        };
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        entry.check().map_err(fail)?;
        if !seen.insert(entry.embryo_id.clone()) {
            return Err(fail(format!("duplicate embryo_id `{}`", entry.embryo_id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn load_record(dir: &Path, entry: ManifestEntry) -> Result<EmbryoRecord> {
    let path: PathBuf = dir.join(&entry.frames_path);
    let fail = |reason: String| Error::FrameFile {
        embryo_id: entry.embryo_id.clone(),
        path: path.clone(),
        reason,
    };
    let pixels = fs::read(&path).map_err(|e| fail(e.to_string()))?;
    let expected = entry.frame_count * entry.frame_size * entry.frame_size;
    if pixels.len() != expected {
        return Err(fail(format!(
            "{} bytes, expected {} frames of {}x{} = {expected}",
            pixels.len(),
            entry.frame_count,
            entry.frame_size,
            entry.frame_size
        )));
    }
    let video = Video::new(entry.frame_size, entry.frame_count, pixels).map_err(|e| fail(e.to_string()))?;
    Ok(EmbryoRecord {
        embryo_id: entry.embryo_id,
        patient_id: entry.patient_id,
        subset: entry.subset,
        video,
        grades: entry.grades,
        kid_label: entry.kid_label.map(|l| l == 1),
    })
}

/// SHA-256 over the manifest lines and frame bytes, in subset order.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut h = Sha256::new();
    for (_, records) in subset_records(dataset) {
        for r in records {
            let line = serde_json::to_string(&ManifestEntry::of(r)).expect("manifest entries serialize");
            h.update((line.len() as u64).to_le_bytes());
            h.update(line.as_bytes());
            h.update(r.video.pixels());
        }
    }
    hex::encode(h.finalize())
}
