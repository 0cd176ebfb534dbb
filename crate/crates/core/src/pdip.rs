//! Patch-based deep image prior reconstruction.
//!
//! Solves
//!
//! ```text
//! min_{Θ, χ} ‖Φ − Aχ‖² + μ Σ_i ‖W_i (R_i χ − f_Θ(z_i))‖²
//! ```
//!
//! by alternating two partial minimizations. The denoising step runs ADAM
//! on Θ with χ fixed, warm-started from the previous Θ. The inversion step
//! minimizes over χ with Θ fixed; because `Σ R_iᵀ W_i² R_i = I` the patch
//! term reduces to `μ‖χ − x̄‖² + const` with `x̄` the coverage-weighted
//! average of the network's patch outputs, and the minimizer is diagonal in
//! k-space: `χ̂ = (d·Φ̂ + μ·x̄̂) / (d² + μ)`.

use std::fmt::Write as _;

use crate::baselines::{recon_tkd, TkdConfig};
use crate::error::{check_dims, Error, Result};
use crate::neural::{
    init_weights, make_noise_inputs, unet_backward, unet_forward, AdamConfig, AdamState,
    FeatureMap, NetworkSpec, NoiseInput, Parameters,
};
use crate::patchwork::{aggregate, coverage, extract, patch_penalty, PatchGrid, PatchSet, WeightField};
use crate::seed;
use crate::spectral::DipoleOperator;
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitMethod {
    Zero,
    Tkd { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdipConfig {
    pub mu: f64,
    pub patch: [usize; 3],
    pub stride: [usize; 3],
    pub outer_iters: usize,
    pub inner_epochs: usize,
    pub learning_rate: f64,
    /// Stop once ‖χ_k − χ_{k−1}‖ / ‖χ_{k−1}‖ falls below this.
    pub tol: f64,
    pub seed: u64,
    pub init: InitMethod,
    pub network: NetworkSpec,
}

impl Default for PdipConfig {
    fn default() -> Self {
        Self {
            mu: 0.05,
            patch: [16; 3],
            stride: [8; 3],
            outer_iters: 20,
            inner_epochs: 25,
            learning_rate: 1e-3,
            tol: 1e-4,
            seed: 0,
            init: InitMethod::Tkd { threshold: 0.2 },
            network: NetworkSpec::default(),
        }
    }
}

impl PdipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        self.network.validate()?;
        self.network
            .check_input(self.patch)
            .map_err(|e| Error::Config(format!("patch size {:?}: {e}", self.patch)))?;
        if let InitMethod::Tkd { threshold } = self.init {
            TkdConfig { threshold }.validate()?;
        }
        Ok(())
    }
}

/// One row of the objective history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    /// Objective after the inversion step.
    pub objective: f64,
    /// Objective with the updated Θ but before the inversion step.
    pub pre_inversion: f64,
    pub rel_change: f64,
}

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("iter,objective,rel_change\n");
    for h in history {
        let _ = writeln!(out, "{},{:e},{:e}", h.iter, h.objective, h.rel_change);
    }
    out
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub chi: Volume,
    pub params: Parameters,
    pub adam: AdamState,
    noise: NoiseInput,
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
}

impl SolverState {
    /// The fixed network inputs; they never change during a solve.
    pub fn noise(&self) -> &NoiseInput {
        &self.noise
    }
}

#[derive(Clone, Debug)]
pub struct PdipOutcome {
    pub chi: Volume,
    pub params: Parameters,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
}

/// Exact minimizer of `‖Φ − Aχ‖² + μ‖χ − x̄‖²`.
pub fn inversion_step(phi: &Volume, op: &DipoleOperator, mu: f64, xbar: &Volume) -> Result<Volume> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    check_dims(phi.dims(), op.dims())?;
    check_dims(xbar.dims(), op.dims())?;
    let fft = op.fft();
    let phi_hat = fft.forward_real(phi.data());
    let mut buf = fft.forward_real(xbar.data());
    for ((c, p), &d) in buf.iter_mut().zip(&phi_hat).zip(op.kernel().data()) {
        *c = (p * d + *c * mu) / (d * d + mu);
    }
    fft.inverse(&mut buf);
    phi.like(buf.into_iter().map(|c| c.re).collect())
}

/// Everything fixed for one solve: data, operator, patch plan and weights.
pub struct PdipSolver {
    phi: Volume,
    op: DipoleOperator,
    cfg: PdipConfig,
    grid: PatchGrid,
    weights: WeightField,
    /// `w²` laid out per patch, so the denoising loss needs no gathers.
    weight_patches: PatchSet,
}

impl PdipSolver {
    pub fn new(phi: Volume, op: DipoleOperator, cfg: PdipConfig) -> Result<Self> {
        cfg.validate()?;
        check_dims(phi.dims(), op.dims())?;
        let grid = PatchGrid::new(phi.dims(), cfg.patch, cfg.stride)?;
        let weights = coverage(&grid);
        let wsq = Volume::new(
            phi.dims(),
            [1.0; 3],
            weights.coverage().iter().map(|&c| 1.0 / c as f64).collect(),
        )?;
        let weight_patches = extract(&wsq, &grid)?;
        Ok(Self {
            phi,
            op,
            cfg,
            grid,
            weights,
            weight_patches,
        })
    }

    pub fn config(&self) -> &PdipConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn weights(&self) -> &WeightField {
        &self.weights
    }

    pub fn initial_chi(&self) -> Result<Volume> {
        match self.cfg.init {
            InitMethod::Zero => self.phi.like(vec![0.0; self.phi.len()]),
            InitMethod::Tkd { threshold } => {
                recon_tkd(&self.phi, &self.op, &TkdConfig { threshold })
            }
        }
    }

    /// Seeded Θ, noise inputs and initial χ.
    pub fn initial_state(&self) -> Result<SolverState> {
        let params = init_weights(self.cfg.network, seed::derive_seed(self.cfg.seed, "pdip.weights"))?;
        self.state_with(self.initial_chi()?, params)
    }

    /// A fresh state from a given χ and Θ; noise inputs come from the seed.
    pub fn state_with(&self, chi: Volume, params: Parameters) -> Result<SolverState> {
        check_dims(chi.dims(), self.grid.dims())?;
        if params.spec != self.cfg.network {
            return Err(Error::Shape("parameters do not match the configured network".into()));
        }
        params.validate()?;
        let noise = make_noise_inputs(&self.grid, seed::derive_seed(self.cfg.seed, "pdip.inputs"));
        let adam = AdamState::new(AdamConfig::with_learning_rate(self.cfg.learning_rate), &params);
        Ok(SolverState {
            chi,
            params,
            adam,
            noise,
            iteration: 0,
            history: Vec::new(),
        })
    }

    /// `f_Θ(z_i)` for every patch.
    pub fn network_patches(&self, params: &Parameters, noise: &NoiseInput) -> Result<PatchSet> {
        let blocks = noise
            .inputs
            .iter()
            .map(|z| unet_forward(params, z).map(|(out, _)| out.data))
            .collect::<Result<_>>()?;
        Ok(PatchSet {
            patch: self.grid.patch(),
            blocks,
        })
    }

    /// `(‖Φ − Aχ‖², Σ_i ‖W(R_iχ − b_i)‖²)`.
    pub fn objective_terms(&self, chi: &Volume, outputs: &PatchSet) -> Result<(f64, f64)> {
        let data = self.op.apply(chi)?.distance(&self.phi)?.powi(2);
        let reg = patch_penalty(chi, outputs, &self.grid, &self.weights)?;
        Ok((data, reg))
    }

    pub fn objective(&self, state: &SolverState) -> Result<f64> {
        let outputs = self.network_patches(&state.params, &state.noise)?;
        let (data, reg) = self.objective_terms(&state.chi, &outputs)?;
        Ok(data + self.cfg.mu * reg)
    }

    /// Denoising loss `Σ_i ‖W_i(R_iχ − f_Θ(z_i))‖²` and its Θ-gradient.
    pub fn denoise_loss_and_gradient(
        &self,
        params: &Parameters,
        noise: &NoiseInput,
        chi: &Volume,
    ) -> Result<(f64, Parameters)> {
        let targets = extract(chi, &self.grid)?;
        let mut total = Parameters::zeros(params.spec);
        let mut loss = 0.0;
        for i in 0..self.grid.len() {
            let (l, g) = self.patch_loss(params, &noise.inputs[i], &targets.blocks[i], i)?;
            loss += l;
            for (t, gt) in total.tensors.iter_mut().zip(&g.tensors) {
                for (a, b) in t.iter_mut().zip(gt) {
                    *a += b;
                }
            }
        }
        Ok((loss, total))
    }

    fn patch_loss(
        &self,
        params: &Parameters,
        z: &FeatureMap,
        target: &[f64],
        index: usize,
    ) -> Result<(f64, Parameters)> {
        let (out, cache) = unet_forward(params, z)?;
        let wsq = &self.weight_patches.blocks[index];
        let mut loss = 0.0;
        let mut grad = FeatureMap::zeros(1, out.dims);
        for q in 0..target.len() {
            let r = out.data[q] - target[q];
            loss += wsq[q] * r * r;
            grad.data[q] = 2.0 * wsq[q] * r;
        }
        Ok((loss, unet_backward(params, &cache, &grad)?))
    }

    /// `epochs` passes over all patches in grid order, one ADAM step per
    /// patch, with χ held fixed.
    pub fn denoise_step(&self, state: &mut SolverState, epochs: usize) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        let targets = extract(&state.chi, &self.grid)?;
        for _ in 0..epochs {
            for i in 0..self.grid.len() {
                let (_, g) =
                    self.patch_loss(&state.params, &state.noise.inputs[i], &targets.blocks[i], i)?;
                state.adam.step(&mut state.params, &g)?;
            }
        }
        Ok(())
    }

    /// Denoise, aggregate the network's patches into x̄, then invert.
    pub fn outer_iteration(&self, state: &mut SolverState) -> Result<HistoryEntry> {
        let iter = state.iteration + 1;
        self.denoise_step(state, self.cfg.inner_epochs)?;
        if !state.params.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                value: f64::NAN,
            });
        }
        let outputs = self.network_patches(&state.params, &state.noise)?;
        let (d0, r0) = self.objective_terms(&state.chi, &outputs)?;
        let xbar = aggregate(&outputs, &self.grid, &self.weights)?;
        let chi = inversion_step(&self.phi, &self.op, self.cfg.mu, &xbar)?;
        let (d1, r1) = self.objective_terms(&chi, &outputs)?;
        let objective = d1 + self.cfg.mu * r1;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                value: objective,
            });
        }
        let prev = state.chi.norm();
        let rel_change = if prev > 0.0 {
            chi.distance(&state.chi)? / prev
        } else {
            f64::INFINITY
        };
        let entry = HistoryEntry {
            iter,
            objective,
            pre_inversion: d0 + self.cfg.mu * r0,
            rel_change,
        };
        state.chi = chi;
        state.iteration = iter;
        state.history.push(entry);
        Ok(entry)
    }

    pub fn run(&self) -> Result<PdipOutcome> {
        self.run_from(self.initial_state()?)
    }

    pub fn run_from(&self, mut state: SolverState) -> Result<PdipOutcome> {
        let mut converged = false;
        while state.iteration < self.cfg.outer_iters {
            let entry = self.outer_iteration(&mut state)?;
            if entry.rel_change < self.cfg.tol {
                converged = true;
                break;
            }
        }
        Ok(PdipOutcome {
            chi: state.chi,
            params: state.params,
            history: state.history,
            converged,
        })
    }
}

/// Convenience wrapper: build a solver and run it from the seeded start.
pub fn run(phi: &Volume, op: &DipoleOperator, cfg: &PdipConfig) -> Result<PdipOutcome> {
    PdipSolver::new(phi.clone(), op.clone(), cfg.clone())?.run()
}
