//! Preconditioned conjugate gradients and the DCT-diagonal solve used as
//! its preconditioner.

use crate::error::{Error, Result};
use crate::image::ScalarImage;
use crate::transform::Dct2Plan;

/// Outcome of one linear solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: ScalarImage,
    pub iterations: usize,
    /// `||b - A x0|| / ||b||`
    pub initial_residual: f64,
    /// `||b - A x|| / ||b||`
    pub final_residual: f64,
}

/// Solves `D x = rhs` where `D` is diagonal in the orthonormal DCT-II
/// basis with eigenvalues `coeff_spectrum`: `idct2(dct2(rhs) / spectrum)`.
pub fn solve_quadratic_dct(coeff_spectrum: &ScalarImage, rhs: &ScalarImage) -> Result<ScalarImage> {
    coeff_spectrum.ensure_same_shape(rhs)?;
    if let Some(i) = coeff_spectrum.data().iter().position(|&c| c <= 0.0) {
        return Err(Error::NonpositiveSpectrum(i));
    }
    let plan = Dct2Plan::new(rhs.width(), rhs.height());
    Ok(DctPreconditioner::from_parts(plan, coeff_spectrum.clone()).apply(rhs))
}

/// Cached plan plus spectrum for repeated DCT-diagonal solves.
pub struct DctPreconditioner {
    plan: Dct2Plan,
    spectrum: ScalarImage,
}

impl DctPreconditioner {
    pub fn from_parts(plan: Dct2Plan, spectrum: ScalarImage) -> Self {
        Self { plan, spectrum }
    }

    pub fn apply(&self, rhs: &ScalarImage) -> ScalarImage {
        let mut c = self.plan.forward(rhs);
        for (v, s) in c.data_mut().iter_mut().zip(self.spectrum.data()) {
            *v /= s;
        }
        self.plan.inverse(&c)
    }
}

/// Preconditioned CG for a symmetric positive definite operator, started
/// at `x0`. Every iterate lowers `x^T A x / 2 - b^T x`, so warm starts never
/// increase the quadratic objective.
pub fn pcg(
    apply: impl Fn(&ScalarImage) -> ScalarImage,
    precondition: impl Fn(&ScalarImage) -> ScalarImage,
    rhs: &ScalarImage,
    x0: &ScalarImage,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolveReport> {
    let b_norm = rhs.norm_sq().sqrt();
    let mut x = x0.clone();
    let mut r = rhs.clone();
    r.axpy(-1.0, &apply(&x));
    if b_norm == 0.0 {
        // A x = 0 has the unique solution 0 for SPD A.
        let (w, h) = rhs.shape();
        return Ok(SolveReport {
            solution: ScalarImage::zeros(w, h),
            iterations: 0,
            initial_residual: 0.0,
            final_residual: 0.0,
        });
    }
    let initial = r.norm_sq().sqrt() / b_norm;
    let mut rel = initial;
    let mut iterations = 0;
    if rel > tolerance {
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        while iterations < max_iterations {
            let ap = apply(&p);
            let pap = p.dot(&ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let step = rz / pap;
            x.axpy(step, &p);
            r.axpy(-step, &ap);
            iterations += 1;
            rel = r.norm_sq().sqrt() / b_norm;
            if rel <= tolerance {
                break;
            }
            z = precondition(&r);
            let rz_next = r.dot(&z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pv, zv) in p.data_mut().iter_mut().zip(z.data()) {
                *pv = zv + beta * *pv;
            }
        }
    }
    if !x.is_finite() || !rel.is_finite() {
        return Err(Error::SolverDiverged(format!(
            "non-finite iterate after {iterations} iterations"
        )));
    }
    if rel > initial * (1.0 + 1e-12) {
        return Err(Error::SolverDiverged(format!(
            "residual grew from {initial:.3e} to {rel:.3e}"
        )));
    }
    Ok(SolveReport {
        solution: x,
        iterations,
        initial_residual: initial,
        final_residual: rel,
    })
}
