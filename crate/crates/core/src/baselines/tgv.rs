//! Second-order TGV regularized dipole inversion,
//! `min_{χ,w} ½‖Aχ − Φ‖² + α₁‖∇χ − w‖₂,₁ + α₀‖E w‖₂,₁`,
//! by the same primal-dual scheme as TV on the stacked operator
//! `K(χ, w) = (∇χ − w, E w)`, whose squared norm is below 24.

use crate::error::{check_dims, Error, Result};
use crate::spectral::DipoleOperator;
use crate::volume::Volume;

use super::diff::{
    gradient, gradient_adjoint, project_tensor, project_vector, sym_gradient, sym_gradient_adjoint,
    tensor_l21, vector_l21, zeros_tensor, zeros_vector, VectorField,
};
use super::tv::{check_steps, IterativeOutcome, HISTORY_STRIDE};
use super::{half_residual_sq, DataProx};

pub const TGV_OPERATOR_NORM_SQ: f64 = 24.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TgvConfig {
    /// First-order weight.
    pub alpha1: f64,
    /// Second-order weight.
    pub alpha0: f64,
    pub iterations: usize,
    pub tau: f64,
    pub sigma: f64,
}

impl TgvConfig {
    /// `α₀ = 2α₁`, default iterations and steps.
    pub fn from_alpha1(alpha1: f64) -> Self {
        Self {
            alpha1,
            alpha0: 2.0 * alpha1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha0 > 0.0) {
            return Err(Error::Config(format!(
                "TGV weights must be positive, got alpha1 = {}, alpha0 = {}",
                self.alpha1, self.alpha0
            )));
        }
        check_steps(self.tau, self.sigma, TGV_OPERATOR_NORM_SQ)
    }
}

impl Default for TgvConfig {
    fn default() -> Self {
        let step = 1.0 / TGV_OPERATOR_NORM_SQ.sqrt();
        Self {
            alpha1: 1e-3,
            alpha0: 2e-3,
            iterations: 500,
            tau: step,
            sigma: step,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TgvOutcome {
    pub result: IterativeOutcome,
    /// Auxiliary vector field w at the final iterate.
    pub w: VectorField,
}

/// `α₁‖∇χ − w‖₂,₁ + α₀‖E w‖₂,₁` for a given w (the TGV seminorm is the
/// minimum of this over w).
pub fn tgv_functional(chi: &Volume, w: &VectorField, alpha1: f64, alpha0: f64) -> f64 {
    let n = chi.len();
    let dims = chi.dims();
    let mut g = zeros_vector(n);
    gradient(chi.data(), dims, &mut g);
    for (ga, wa) in g.iter_mut().zip(w) {
        for (x, y) in ga.iter_mut().zip(wa) {
            *x -= y;
        }
    }
    let mut e = zeros_tensor(n);
    let mut tmp = vec![0.0; n];
    sym_gradient(w, dims, &mut e, &mut tmp);
    alpha1 * vector_l21(&g) + alpha0 * tensor_l21(&e)
}

pub fn recon_tgv(phi: &Volume, op: &DipoleOperator, cfg: &TgvConfig) -> Result<TgvOutcome> {
    cfg.validate()?;
    check_dims(phi.dims(), op.dims())?;
    let dims = phi.dims();
    let n = phi.len();
    let (tau, sigma) = (cfg.tau, cfg.sigma);
    let prox = DataProx::new(op, phi, tau);

    let mut chi = vec![0.0; n];
    let mut chi_bar = vec![0.0; n];
    let mut w = zeros_vector(n);
    let mut w_bar = zeros_vector(n);
    let mut p = zeros_vector(n);
    let mut q = zeros_tensor(n);

    let mut g = zeros_vector(n);
    let mut e = zeros_tensor(n);
    let mut etq = zeros_vector(n);
    let mut tmp = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut history = Vec::new();

    let objective = |chi: &[f64], w: &VectorField| -> Result<f64> {
        let vol = phi.like(chi.to_vec())?;
        Ok(half_residual_sq(op, &vol, phi)? + tgv_functional(&vol, w, cfg.alpha1, cfg.alpha0))
    };

    for it in 1..=cfg.iterations {
        // dual ascent
        gradient(&chi_bar, dims, &mut g);
        for a in 0..3 {
            for i in 0..n {
                p[a][i] += sigma * (g[a][i] - w_bar[a][i]);
            }
        }
        project_vector(&mut p, cfg.alpha1);
        sym_gradient(&w_bar, dims, &mut e, &mut tmp);
        for (qc, ec) in q.iter_mut().zip(&e) {
            for (qv, ev) in qc.iter_mut().zip(ec) {
                *qv += sigma * ev;
            }
        }
        project_tensor(&mut q, cfg.alpha0);

        // primal descent
        gradient_adjoint(&p, dims, &mut v);
        for (vi, ci) in v.iter_mut().zip(&chi) {
            *vi = ci - tau * *vi;
        }
        prox.apply(&v, &mut next);
        for i in 0..n {
            chi_bar[i] = 2.0 * next[i] - chi[i];
        }
        std::mem::swap(&mut chi, &mut next);

        sym_gradient_adjoint(&q, dims, &mut etq);
        for a in 0..3 {
            for i in 0..n {
                let updated = w[a][i] - tau * (etq[a][i] - p[a][i]);
                w_bar[a][i] = 2.0 * updated - w[a][i];
                w[a][i] = updated;
            }
        }

        if it % HISTORY_STRIDE == 0 || it == cfg.iterations {
            history.push((it, objective(&chi, &w)?));
        }
    }
    Ok(TgvOutcome {
        result: IterativeOutcome {
            chi: phi.like(chi)?,
            history,
        },
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DipoleKernel;

    #[test]
    fn zero_field_stays_zero() {
        let op = DipoleOperator::new(DipoleKernel::new([8; 3], [1.0; 3]).unwrap());
        let out = recon_tgv(&Volume::zeros([8; 3]), &op, &TgvConfig::default()).unwrap();
        assert!(out.result.chi.norm() <= 1e-8);
        assert!(out.w.iter().flatten().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn bad_config_rejected() {
        let op = DipoleOperator::new(DipoleKernel::new([4; 3], [1.0; 3]).unwrap());
        let phi = Volume::zeros([4; 3]);
        let cfg = TgvConfig {
            tau: 0.3,
            sigma: 0.3,
            ..TgvConfig::default()
        };
        assert!(recon_tgv(&phi, &op, &cfg).is_err());
        assert!(recon_tgv(&phi, &op, &TgvConfig::from_alpha1(-1.0)).is_err());
    }

    #[test]
    fn ramp_costs_less_under_tgv() {
        // affine ramp on a 12³ block inside 20³, zero elsewhere
        let dims = [20; 3];
        let inside = |x: usize, y: usize, z: usize| {
            (4..16).contains(&x) && (4..16).contains(&y) && (4..16).contains(&z)
        };
        let slope = 0.05;
        let chi = Volume::from_fn(dims, |x, y, z| {
            if inside(x, y, z) {
                slope * (x as f64 - 4.0)
            } else {
                0.0
            }
        });
        let n = chi.len();
        // w = the ramp slope wherever the forward difference stays inside
        let mut w = zeros_vector(n);
        for z in 0..20 {
            for y in 0..20 {
                for x in 0..20 {
                    if inside(x, y, z) && inside(x + 1, y, z) {
                        w[0][x + 20 * (y + 20 * z)] = slope;
                    }
                }
            }
        }
        let alpha1 = 1.0;
        let tgv = tgv_functional(&chi, &w, alpha1, 2.0 * alpha1);
        let mut g = zeros_vector(n);
        gradient(chi.data(), dims, &mut g);
        let tv = alpha1 * vector_l21(&g);
        assert!(tgv < tv, "tgv {tgv} vs tv {tv}");
    }
}
