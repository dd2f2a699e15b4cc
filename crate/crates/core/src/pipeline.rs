//! FRD and DFR restoration pipelines.
//!
//! Both start from a temporal-filter reference and refine it `K` times by
//! registering every input frame onto the current reference and filtering
//! the registered frames. FRD deconvolves the final reference once; DFR
//! deconvolves every frame before the loop and returns the final reference.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::deconv::{blind_deconvolve, DeconvConfig, DeconvResult};
use crate::error::{Error, Result};
use crate::image::ScalarImage;
use crate::registration::{register, RegistrationConfig};
use crate::temporal::{Sequence, TemporalFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineKind {
    /// Filter and register, deconvolve last.
    Frd,
    /// Deconvolve every frame, then filter and register.
    Dfr,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Frd => "frd",
            PipelineKind::Dfr => "dfr",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frd" => Ok(PipelineKind::Frd),
            "dfr" => Ok(PipelineKind::Dfr),
            _ => Err(Error::InvalidConfig(format!("unknown pipeline '{s}' (expected frd or dfr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Number of reference refinement rounds `K`.
    pub iterations: usize,
    pub reference_filter: TemporalFilter,
    pub deconv: DeconvConfig,
    pub registration: RegistrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            reference_filter: TemporalFilter::Median,
            deconv: DeconvConfig {
                alpha1: 2e-2,
                alpha2: 1.0,
                ..DeconvConfig::default()
            },
            registration: RegistrationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        self.deconv.validate()?;
        self.registration.validate()
    }
}

/// A frame left out of a temporal filter because its stage failed.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedFrame {
    /// 0 for the DFR deconvolution stage, `k` for refinement round `k`.
    pub round: usize,
    pub frame: usize,
    pub reason: String,
}

/// Result of one refinement round.
#[derive(Debug, Clone)]
pub struct Refinement {
    /// Frames that registered successfully, in input order.
    pub warped: Sequence,
    pub reference: ScalarImage,
    /// Final registration energy per input frame; `None` for dropped frames.
    pub energies: Vec<Option<f64>>,
    pub dropped: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub kind: PipelineKind,
    pub restored: ScalarImage,
    /// `Î^0 ... Î^K`.
    pub references: Vec<ScalarImage>,
    /// Row `k - 1` holds the energies of round `k`.
    pub per_frame_registration_energies: Vec<Vec<Option<f64>>>,
    /// One entry for FRD, one per surviving frame for DFR.
    pub deconv_results: Vec<DeconvResult>,
    /// Number of blind deconvolutions started.
    pub deconvolutions: usize,
    pub dropped: Vec<DroppedFrame>,
}

/// Keeps the successes in order; fails only when nothing succeeded.
fn partition<T>(results: Vec<Result<T>>) -> Result<(Vec<Option<T>>, Vec<(usize, Error)>)> {
    let mut kept = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => kept.push(Some(v)),
            Err(e) => {
                kept.push(None);
                failed.push((i, e));
            }
        }
    }
    if kept.iter().all(Option::is_none) {
        let (i, e) = failed.remove(0);
        return Err(e.in_frame(i));
    }
    Ok((kept, failed))
}

/// Registers every frame onto `reference` and filters the registered frames.
pub fn refine_reference(seq: &Sequence, reference: &ScalarImage, cfg: &PipelineConfig) -> Result<Refinement> {
    let (w, h) = seq.shape();
    reference.ensure_same_shape(&ScalarImage::zeros(w, h))?;
    let results: Vec<Result<_>> = seq
        .frames()
        .par_iter()
        .map(|frame| register(frame, reference, &cfg.registration))
        .collect();
    let (kept, failed) = partition(results)?;
    let mut dropped = Vec::new();
    for (i, e) in failed {
        log::warn!("frame {i}: registration failed, dropped from the reference: {e}");
        dropped.push((i, e.to_string()));
    }
    let energies = kept.iter().map(|r| r.as_ref().map(|r| r.final_energy())).collect();
    let warped = Sequence::new(kept.into_iter().flatten().map(|r| r.warped).collect())?;
    let reference = cfg.reference_filter.apply(&warped);
    Ok(Refinement {
        warped,
        reference,
        energies,
        dropped,
    })
}

struct Loop {
    references: Vec<ScalarImage>,
    energies: Vec<Vec<Option<f64>>>,
    dropped: Vec<DroppedFrame>,
}

fn refinement_loop(seq: &Sequence, cfg: &PipelineConfig) -> Result<Loop> {
    let mut references = vec![cfg.reference_filter.apply(seq)];
    let mut energies = Vec::with_capacity(cfg.iterations);
    let mut dropped = Vec::new();
    for k in 1..=cfg.iterations {
        let current = references.last().expect("nonempty");
        let r = refine_reference(seq, current, cfg)?;
        dropped.extend(r.dropped.into_iter().map(|(frame, reason)| DroppedFrame { round: k, frame, reason }));
        energies.push(r.energies);
        references.push(r.reference);
    }
    Ok(Loop {
        references,
        energies,
        dropped,
    })
}

/// Filter/register `K` times, then deconvolve the last reference.
pub fn frd_restore(seq: &Sequence, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let lp = refinement_loop(seq, cfg)?;
    let last = lp.references.last().expect("nonempty");
    let deconv = blind_deconvolve(last, &cfg.deconv)?;
    Ok(PipelineReport {
        kind: PipelineKind::Frd,
        restored: deconv.image.clone(),
        references: lp.references,
        per_frame_registration_energies: lp.energies,
        deconv_results: vec![deconv],
        deconvolutions: 1,
        dropped: lp.dropped,
    })
}

/// Deconvolve every frame, then filter/register `K` times; the result is
/// the last reference.
pub fn dfr_restore(seq: &Sequence, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let results: Vec<Result<DeconvResult>> = seq
        .frames()
        .par_iter()
        .map(|frame| blind_deconvolve(frame, &cfg.deconv))
        .collect();
    let deconvolutions = results.len();
    let (kept, failed) = partition(results)?;
    let mut dropped: Vec<DroppedFrame> = failed
        .into_iter()
        .map(|(frame, e)| {
            log::warn!("frame {frame}: deconvolution failed, dropped: {e}");
            DroppedFrame { round: 0, frame, reason: e.to_string() }
        })
        .collect();
    let deconv_results: Vec<DeconvResult> = kept.into_iter().flatten().collect();
    let deblurred = Sequence::new(deconv_results.iter().map(|r| r.image.clone()).collect())?;
    let lp = refinement_loop(&deblurred, cfg)?;
    dropped.extend(lp.dropped);
    Ok(PipelineReport {
        kind: PipelineKind::Dfr,
        restored: lp.references.last().expect("nonempty").clone(),
        references: lp.references,
        per_frame_registration_energies: lp.energies,
        deconv_results,
        deconvolutions,
        dropped,
    })
}

pub fn restore(kind: PipelineKind, seq: &Sequence, cfg: &PipelineConfig) -> Result<PipelineReport> {
    match kind {
        PipelineKind::Frd => frd_restore(seq, cfg),
        PipelineKind::Dfr => dfr_restore(seq, cfg),
    }
}
