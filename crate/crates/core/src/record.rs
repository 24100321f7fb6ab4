//! Embryo records and their time-lapse videos.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of embryologists on a grading panel.
pub const PANEL_SIZE: usize = 5;

/// A grayscale frame, `[1, H, W]`, pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame(Tensor);

impl Frame {
    pub fn new(pixels: Tensor) -> Result<Self> {
        match pixels.shape() {
            [1, _, _] => {}
            s => {
                return Err(Error::ShapeMismatch {
                    op: "frame",
                    left: s.to_vec(),
                    right: vec![1],
                })
            }
        }
        if let Some(p) = pixels.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self(pixels))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn size(&self) -> (usize, usize) {
        (self.0.shape()[1], self.0.shape()[2])
    }

    pub fn mean(&self) -> f64 {
        self.0.sum() / self.0.len() as f64
    }

    pub fn quantize(&self) -> Vec<u8> {
        self.0.data().iter().map(|&p| quantize_pixel(p)).collect()
    }
}

#[inline]
pub fn quantize_pixel(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A square grayscale video stored as 8-bit pixels, frame-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Video {
    frame_size: usize,
    frame_count: usize,
    pixels: Vec<u8>,
}

impl Video {
    pub fn new(frame_size: usize, frame_count: usize, pixels: Vec<u8>) -> Result<Self> {
        if frame_size == 0 || frame_count == 0 || pixels.len() != frame_size * frame_size * frame_count {
            return Err(Error::InvalidTensor {
                shape: vec![frame_count, frame_size, frame_size],
                expected: frame_count * frame_size * frame_size,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            frame_size,
            frame_count,
            pixels,
        })
    }

    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyInput("video frames"))?;
        let (h, w) = first.size();
        if h != w {
            return Err(Error::ShapeMismatch {
                op: "video",
                left: vec![h, w],
                right: vec![h, h],
            });
        }
        let mut pixels = Vec::with_capacity(frames.len() * h * w);
        for f in frames {
            f.tensor().same_shape(first.tensor(), "video")?;
            pixels.extend(f.quantize());
        }
        Self::new(h, frames.len(), pixels)
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn frame(&self, t: usize) -> Frame {
        let n = self.frame_size * self.frame_size;
        let data = self.pixels[t * n..(t + 1) * n]
            .iter()
            .map(|&p| p as f64 / 255.0)
            .collect();
        Frame(Tensor::new(vec![1, self.frame_size, self.frame_size], data).expect("size checked at construction"))
    }

    pub fn frames(&self) -> Vec<Frame> {
        (0..self.frame_count).map(|t| self.frame(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Unlabeled,
    Graded,
    Kid,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Unlabeled => "unlabeled",
            Subset::Graded => "graded",
            Subset::Kid => "kid",
        }
    }
}

/// Five panel grades, each in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct PanelGrades([u8; PANEL_SIZE]);

impl PanelGrades {
    pub fn new(grades: &[i64]) -> Result<Self> {
        if grades.len() != PANEL_SIZE {
            return Err(Error::GradeCount {
                expected: PANEL_SIZE,
                actual: grades.len(),
            });
        }
        let mut out = [0u8; PANEL_SIZE];
        for (o, &g) in out.iter_mut().zip(grades) {
            if !(1..=5).contains(&g) {
                return Err(Error::GradeOutOfRange(g));
            }
            *o = g as u8;
        }
        Ok(Self(out))
    }

    pub fn grades(&self) -> [u8; PANEL_SIZE] {
        self.0
    }
}

impl TryFrom<Vec<i64>> for PanelGrades {
    type Error = Error;

    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<PanelGrades> for Vec<i64> {
    fn from(g: PanelGrades) -> Self {
        g.0.iter().map(|&x| x as i64).collect()
    }
}

/// One embryo.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbryoRecord {
    pub embryo_id: String,
    pub patient_id: String,
    pub subset: Subset,
    pub video: Video,
    /// Present for graded and KID embryos.
    pub grades: Option<PanelGrades>,
    /// Present for known-implantation-data embryos; `true` = implanted.
    pub kid_label: Option<bool>,
}

/// The three subsets: an unlabeled pool for autoencoder pretraining, a
/// panel-graded set, and the known-implantation-data (KID) set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub unlabeled: Vec<EmbryoRecord>,
    pub graded: Vec<EmbryoRecord>,
    pub kid: Vec<EmbryoRecord>,
}

impl Dataset {
    pub fn records(&self) -> impl Iterator<Item = &EmbryoRecord> {
        self.unlabeled.iter().chain(&self.graded).chain(&self.kid)
    }

    pub fn len(&self) -> usize {
        self.unlabeled.len() + self.graded.len() + self.kid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grades_validated() {
        assert!(PanelGrades::new(&[1, 2, 3, 4, 5]).is_ok());
        assert!(matches!(
            PanelGrades::new(&[1, 2, 3, 4, 6]),
            Err(Error::GradeOutOfRange(6))
        ));
        assert!(matches!(PanelGrades::new(&[1, 2]), Err(Error::GradeCount { .. })));
    }

    #[test]
    fn video_frame_access() {
        let v = Video::new(2, 2, vec![0, 255, 51, 102, 1, 2, 3, 4]).unwrap();
        let f = v.frame(0);
        assert_eq!(f.tensor().data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(Video::from_frames(&v.frames()).unwrap(), v);
        assert!(Video::new(2, 2, vec![0; 7]).is_err());
    }

    #[test]
    fn frame_rejects_out_of_range_pixels() {
        assert!(Frame::new(Tensor::full(&[1, 2, 2], 1.5)).is_err());
        assert!(Frame::new(Tensor::full(&[2, 2, 2], 0.5)).is_err());
    }
}
