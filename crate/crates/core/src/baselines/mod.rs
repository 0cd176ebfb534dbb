//! Comparison reconstructions: thresholded k-space division and TV / TGV
//! regularized inversions, plus the lowest-RMSE parameter search used to
//! tune every method against a known ground truth.

pub mod diff;
mod search;
mod tgv;
mod tkd;
mod tv;

pub use search::{param_search, SearchOutcome};
pub use tgv::{recon_tgv, tgv_functional, TgvConfig, TgvOutcome};
pub use tkd::{recon_tkd, TkdConfig};
pub use tv::{recon_tv, tv_functional, IterativeOutcome, TvConfig};

use num_complex::Complex64;

use crate::spectral::DipoleOperator;
use crate::volume::Volume;

/// Exact proximal map of `τ·½‖Aχ − Φ‖²`, diagonal in k-space:
/// `prox(v)^ = (v̂ + τ·d·Φ̂) / (1 + τ·d²)`.
pub(crate) struct DataProx<'a> {
    op: &'a DipoleOperator,
    shifted: Vec<Complex64>,
    scale: Vec<f64>,
}

impl<'a> DataProx<'a> {
    pub(crate) fn new(op: &'a DipoleOperator, phi: &Volume, tau: f64) -> Self {
        let phi_hat = op.fft().forward_real(phi.data());
        let d = op.kernel().data();
        let shifted = phi_hat.iter().zip(d).map(|(p, &d)| p * (tau * d)).collect();
        let scale = d.iter().map(|&d| 1.0 / (1.0 + tau * d * d)).collect();
        Self { op, shifted, scale }
    }

    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        let mut buf = self.op.fft().forward_real(v);
        for ((c, s), &k) in buf.iter_mut().zip(&self.shifted).zip(&self.scale) {
            *c = (*c + s) * k;
        }
        self.op.fft().inverse(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }
}

/// `½‖Aχ − Φ‖²`.
pub(crate) fn half_residual_sq(op: &DipoleOperator, chi: &Volume, phi: &Volume) -> crate::Result<f64> {
    let a = op.apply(chi)?;
    Ok(0.5 * a.distance(phi)?.powi(2))
}
