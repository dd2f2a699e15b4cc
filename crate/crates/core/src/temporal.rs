//! Pixel-wise temporal fusion of a frame sequence.

use crate::error::{Error, Result};
use crate::image::ScalarImage;

/// Non-empty ordered list of same-shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    frames: Vec<ScalarImage>,
}

impl Sequence {
    pub fn new(frames: Vec<ScalarImage>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        for (i, f) in frames.iter().enumerate().skip(1) {
            f.ensure_same_shape(first).map_err(|e| e.in_frame(i))?;
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[ScalarImage] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<ScalarImage> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }
}

/// Which temporal filter produces a reference image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemporalFilter {
    Mean,
    #[default]
    Median,
}

impl TemporalFilter {
    pub fn apply(self, seq: &Sequence) -> ScalarImage {
        match self {
            TemporalFilter::Mean => temporal_mean(seq),
            TemporalFilter::Median => temporal_median(seq),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalFilter::Mean => "mean",
            TemporalFilter::Median => "median",
        }
    }
}

impl std::str::FromStr for TemporalFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(TemporalFilter::Mean),
            "median" => Ok(TemporalFilter::Median),
            other => Err(Error::InvalidConfig(format!("unknown temporal filter {other:?}"))),
        }
    }
}

pub fn temporal_mean(seq: &Sequence) -> ScalarImage {
    let (w, h) = seq.shape();
    let mut acc = ScalarImage::zeros(w, h);
    for f in seq.frames() {
        acc.axpy(1.0, f);
    }
    acc.scale(1.0 / seq.len() as f64);
    acc
}

/// Per-pixel median. Even counts average the two central order statistics.
pub fn temporal_median(seq: &Sequence) -> ScalarImage {
    let (w, h) = seq.shape();
    let n = seq.len();
    let mut column = vec![0.0; n];
    let mut out = ScalarImage::zeros(w, h);
    for (i, dst) in out.data_mut().iter_mut().enumerate() {
        for (c, f) in column.iter_mut().zip(seq.frames()) {
            *c = f.data()[i];
        }
        *dst = median_in_place(&mut column);
    }
    out
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}
