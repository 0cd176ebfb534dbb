//! 3D discrete Fourier transforms, the dipole kernel and the
//! susceptibility-to-field operator `A = F⁻¹ diag(d) F`.
//!
//! Transforms follow the unnormalized-forward convention: the forward DFT
//! carries no scale, the inverse carries `1/N`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_dims, Error, Result};
use crate::volume::Volume;

/// Complex field on the k-grid, same layout as [`Volume`].
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub dims: [usize; 3],
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Reusable plans for transforms of a fixed grid size. Immutable once built,
/// so one instance can be shared between threads.
#[derive(Clone)]
pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward);
    }

    /// Inverse transform in place, including the 1/N factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        assert_eq!(buf.len(), self.len(), "buffer does not match plan dims");
        let [nx, ny, nz] = self.dims;

        // x lines are contiguous
        plans[0].process(buf);

        let mut line = vec![Complex64::default(); ny.max(nz)];
        let mut scratch = vec![
            Complex64::default();
            plans[1]
                .get_inplace_scratch_len()
                .max(plans[2].get_inplace_scratch_len())
        ];
        if ny > 1 {
            let line = &mut line[..ny];
            for z in 0..nz {
                let base = nx * ny * z;
                for x in 0..nx {
                    for (y, l) in line.iter_mut().enumerate() {
                        *l = buf[base + x + nx * y];
                    }
                    plans[1].process_with_scratch(line, &mut scratch);
                    for (y, l) in line.iter().enumerate() {
                        buf[base + x + nx * y] = *l;
                    }
                }
            }
        }
        if nz > 1 {
            let line = &mut line[..nz];
            let plane = nx * ny;
            for xy in 0..plane {
                for (z, l) in line.iter_mut().enumerate() {
                    *l = buf[xy + plane * z];
                }
                plans[2].process_with_scratch(line, &mut scratch);
                for (z, l) in line.iter().enumerate() {
                    buf[xy + plane * z] = *l;
                }
            }
        }
    }

    pub fn forward_real(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

pub fn dft3(v: &Volume) -> Spectrum {
    let fft = Fft3::new(v.dims());
    Spectrum {
        dims: v.dims(),
        data: fft.forward_real(v.data()),
    }
}

pub fn dft3_complex(dims: [usize; 3], data: &[Complex64]) -> Result<Spectrum> {
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "{} values for grid {dims:?}",
            data.len()
        )));
    }
    let mut buf = data.to_vec();
    Fft3::new(dims).forward(&mut buf);
    Ok(Spectrum { dims, data: buf })
}

pub fn idft3(s: &Spectrum) -> Vec<Complex64> {
    let mut buf = s.data.clone();
    Fft3::new(s.dims).inverse(&mut buf);
    buf
}

/// Signed integer frequency for DFT bin `i` of an `n`-point axis.
#[inline]
pub fn signed_frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Dipole spectrum `d[k] = 1/3 − k_z²/|k|²` on the DFT grid, `d[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleKernel {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl DipoleKernel {
    /// Physical frequencies `k_i = n_i / (N_i Δ_i)` with signed bin indices;
    /// B0 along z.
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument(format!(
                "dipole kernel needs at least 2 samples per axis, got {dims:?}"
            )));
        }
        let [nx, ny, nz] = dims;
        let freq = |i: usize, n: usize, d: f64| signed_frequency(i, n) as f64 / (n as f64 * d);
        let mut data = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            let kz = freq(z, nz, spacing[2]);
            for y in 0..ny {
                let ky = freq(y, ny, spacing[1]);
                for x in 0..nx {
                    let kx = freq(x, nx, spacing[0]);
                    data.push(dipole_value(kx, ky, kz));
                }
            }
        }
        Ok(Self { dims, data })
    }

    pub fn for_volume(v: &Volume) -> Result<Self> {
        Self::new(v.dims(), v.spacing())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Kernel as a volume, for inspection via `save_volume`.
    pub fn to_volume(&self) -> Volume {
        Volume::new(self.dims, [1.0; 3], self.data.clone()).expect("kernel entries are finite")
    }
}

fn dipole_value(kx: f64, ky: f64, kz: f64) -> f64 {
    let (px, pz) = (kx * kx + ky * ky, kz * kz);
    if px == 0.0 && pz == 0.0 {
        0.0
    } else if px == 0.0 {
        -2.0 / 3.0
    } else if pz == 0.0 {
        1.0 / 3.0
    } else {
        // (k² − 3k_z²) / 3k² keeps the cone k_z² = k²/3 at exactly zero
        ((kx * kx + ky * ky - 2.0 * pz) / (3.0 * (px + pz))).clamp(-2.0 / 3.0, 1.0 / 3.0)
    }
}

/// The forward model `χ ↦ Re F⁻¹ diag(d) F χ` with cached transform plans.
#[derive(Clone, Debug)]
pub struct DipoleOperator {
    fft: Fft3,
    kernel: DipoleKernel,
}

impl DipoleOperator {
    pub fn new(kernel: DipoleKernel) -> Self {
        Self {
            fft: Fft3::new(kernel.dims),
            kernel,
        }
    }

    pub fn kernel(&self) -> &DipoleKernel {
        &self.kernel
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    pub fn dims(&self) -> [usize; 3] {
        self.kernel.dims
    }

    pub fn apply(&self, chi: &Volume) -> Result<Volume> {
        check_dims(chi.dims(), self.kernel.dims)?;
        let mut buf = self.fft.forward_real(chi.data());
        for (c, &d) in buf.iter_mut().zip(&self.kernel.data) {
            *c *= d;
        }
        self.fft.inverse(&mut buf);
        chi.like(buf.into_iter().map(|c| c.re).collect())
    }

    /// `d` is real and even, so the operator is self-adjoint.
    pub fn adjoint(&self, y: &Volume) -> Result<Volume> {
        self.apply(y)
    }

    /// Applies a real diagonal k-space filter `h(d)`: `Re F⁻¹ h(d) F v`.
    pub fn filter(&self, v: &Volume, h: impl Fn(f64) -> f64) -> Result<Volume> {
        check_dims(v.dims(), self.kernel.dims)?;
        let mut buf = self.fft.forward_real(v.data());
        for (c, &d) in buf.iter_mut().zip(&self.kernel.data) {
            *c *= h(d);
        }
        self.fft.inverse(&mut buf);
        v.like(buf.into_iter().map(|c| c.re).collect())
    }
}

pub fn forward_field(chi: &Volume, kernel: &DipoleKernel) -> Result<Volume> {
    check_dims(chi.dims(), kernel.dims)?;
    DipoleOperator::new(kernel.clone()).apply(chi)
}

pub fn adjoint_field(y: &Volume, kernel: &DipoleKernel) -> Result<Volume> {
    forward_field(y, kernel)
}
