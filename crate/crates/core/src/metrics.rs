//! Quality scores against ground truth.

use std::fmt::Write as _;

use crate::deconv::BlurKernel;
use crate::error::{Error, Result};
use crate::image::{ScalarImage, VectorField};

/// Largest integer shift searched when aligning kernels.
pub const KERNEL_SHIFT_RADIUS: usize = 2;

/// `10 log10(1 / MSE)` for intensities in `[0, 1]`; `+inf` when identical.
pub fn psnr(estimate: &ScalarImage, truth: &ScalarImage) -> Result<f64> {
    estimate.ensure_same_shape(truth)?;
    let mse = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean Euclidean distance between displacement vectors.
pub fn mean_endpoint_error(estimate: &VectorField, truth: &VectorField) -> Result<f64> {
    truth.ensure_shape(estimate.width(), estimate.height())?;
    let mut e = estimate.clone();
    e.axpy(-1.0, truth);
    Ok(e.mean_magnitude())
}

/// Uncentered cosine similarity of the two kernels, maximized over integer
/// shifts of up to [`KERNEL_SHIFT_RADIUS`] pixels after centered zero-padding
/// to a common support.
pub fn kernel_correlation(estimate: &BlurKernel, truth: &BlurKernel) -> f64 {
    let r = KERNEL_SHIFT_RADIUS as isize;
    let (aw, ah) = estimate.size();
    let (bw, bh) = truth.size();
    let (w, h) = (aw.max(bw), ah.max(bh));
    let a = estimate.padded_to(w, h);
    let b = truth.padded_to(w, h);
    let na = a.norm_sq().sqrt();
    let nb = b.norm_sq().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for sy in -r..=r {
        for sx in -r..=r {
            let mut acc = 0.0;
            for y in 0..h as isize {
                let by = y + sy;
                if by < 0 || by >= h as isize {
                    continue;
                }
                for x in 0..w as isize {
                    let bx = x + sx;
                    if bx < 0 || bx >= w as isize {
                        continue;
                    }
                    acc += a.get(x as usize, y as usize) * b.get(bx as usize, by as usize);
                }
            }
            best = best.max(acc);
        }
    }
    best / (na * nb)
}

/// Scores computed for one restoration; absent entries were not requested
/// or had no ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub psnr_db: Option<f64>,
    pub mean_endpoint_error_px: Option<f64>,
    pub kernel_correlation: Option<f64>,
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl MetricReport {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("psnr_db", self.psnr_db),
            ("mean_endpoint_error_px", self.mean_endpoint_error_px),
            ("kernel_correlation", self.kernel_correlation),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// One `key=value` line per present metric.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={}", fmt_value(v));
        }
        out
    }

    pub fn csv_header(&self) -> String {
        let keys: Vec<&str> = self.entries().iter().map(|e| e.0).collect();
        format!("label,{}\n", keys.join(","))
    }

    pub fn csv_row(&self, label: &str) -> String {
        let vals: Vec<String> = self.entries().iter().map(|e| fmt_value(e.1)).collect();
        format!("{label},{}\n", vals.join(","))
    }

    pub fn parse_value(s: &str) -> Result<f64> {
        match s.trim() {
            "inf" => Ok(f64::INFINITY),
            t => t.parse().map_err(|_| Error::CorruptHeader(format!("bad metric value '{t}'"))),
        }
    }
}
