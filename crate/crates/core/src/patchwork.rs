//! Patch extraction, coverage weights and weighted overlap-add.
//!
//! With per-voxel weight `w(v) = 1/√c(v)`, where `c(v)` counts the patches
//! covering `v`, the extraction operators satisfy `Σ Rᵀ W² R = I`. The patch
//! penalty `Σ ‖W(Rχ − b)‖²` then equals `‖χ − x̄‖² + C` with
//! `x̄ = Σ Rᵀ W² b`, which is what makes the χ-subproblem closed-form.

use crate::error::{check_dims, Error, Result};
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    dims: [usize; 3],
    patch: [usize; 3],
    stride: [usize; 3],
    origins: Vec<[usize; 3]>,
}

/// Origins along one axis: 0, s, 2s, … plus a final origin clamped to n − p
/// when the regular sequence does not reach it.
pub fn axis_origins(n: usize, p: usize, s: usize) -> Vec<usize> {
    let last = n - p;
    let mut out: Vec<usize> = (0..=last).step_by(s).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

impl PatchGrid {
    pub fn new(dims: [usize; 3], patch: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        for i in 0..3 {
            if patch[i] == 0 || patch[i] > dims[i] {
                return Err(Error::InvalidArgument(format!(
                    "patch {patch:?} does not fit in volume {dims:?}"
                )));
            }
            if stride[i] == 0 || stride[i] > patch[i] {
                return Err(Error::InvalidArgument(format!(
                    "stride {stride:?} must lie in 1..=patch {patch:?} to cover every voxel"
                )));
            }
        }
        let ox = axis_origins(dims[0], patch[0], stride[0]);
        let oy = axis_origins(dims[1], patch[1], stride[1]);
        let oz = axis_origins(dims[2], patch[2], stride[2]);
        // lexicographic in (z, y, x)
        let mut origins = Vec::with_capacity(ox.len() * oy.len() * oz.len());
        for &z in &oz {
            for &y in &oy {
                for &x in &ox {
                    origins.push([x, y, z]);
                }
            }
        }
        Ok(Self {
            dims,
            patch,
            stride,
            origins,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn patch(&self) -> [usize; 3] {
        self.patch
    }

    pub fn stride(&self) -> [usize; 3] {
        self.stride
    }

    pub fn origins(&self) -> &[[usize; 3]] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.patch.iter().product()
    }

    /// Calls `f(patch_offset, volume_index)` for every voxel of patch `i`,
    /// patch offsets in x-fastest order.
    #[inline]
    pub fn for_each_voxel(&self, i: usize, mut f: impl FnMut(usize, usize)) {
        let [ox, oy, oz] = self.origins[i];
        let [px, py, pz] = self.patch;
        let [nx, ny, _] = self.dims;
        let mut q = 0;
        for z in 0..pz {
            for y in 0..py {
                let row = ox + nx * (oy + y + ny * (oz + z));
                for x in 0..px {
                    f(q, row + x);
                    q += 1;
                }
            }
        }
    }
}

pub fn plan_patches(dims: [usize; 3], patch: [usize; 3], stride: [usize; 3]) -> Result<PatchGrid> {
    PatchGrid::new(dims, patch, stride)
}

/// Patch contents, one flat x-fastest block per grid origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub patch: [usize; 3],
    pub blocks: Vec<Vec<f64>>,
}

pub fn extract(chi: &Volume, grid: &PatchGrid) -> Result<PatchSet> {
    check_dims(chi.dims(), grid.dims)?;
    let data = chi.data();
    let blocks = (0..grid.len())
        .map(|i| {
            let mut block = vec![0.0; grid.patch_len()];
            grid.for_each_voxel(i, |q, v| block[q] = data[v]);
            block
        })
        .collect();
    Ok(PatchSet {
        patch: grid.patch,
        blocks,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    dims: [usize; 3],
    coverage: Vec<u32>,
    weight: Vec<f64>,
}

impl WeightField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn coverage(&self) -> &[u32] {
        &self.coverage
    }

    /// `w(v) = 1/√c(v)`.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// `w(v)² = 1/c(v)`.
    #[inline]
    pub fn weight_sq(&self, v: usize) -> f64 {
        1.0 / self.coverage[v] as f64
    }
}

pub fn coverage(grid: &PatchGrid) -> WeightField {
    let n = grid.dims.iter().product();
    let mut count = vec![0u32; n];
    for i in 0..grid.len() {
        grid.for_each_voxel(i, |_, v| count[v] += 1);
    }
    debug_assert!(count.iter().all(|&c| c >= 1));
    let weight = count.iter().map(|&c| 1.0 / (c as f64).sqrt()).collect();
    WeightField {
        dims: grid.dims,
        coverage: count,
        weight,
    }
}

/// `x̄ = Σ_i Rᵢᵀ W² bᵢ`: the coverage-weighted average of overlapping
/// patch values. Patches are accumulated in origin order.
pub fn aggregate(patches: &PatchSet, grid: &PatchGrid, weights: &WeightField) -> Result<Volume> {
    if patches.patch != grid.patch || patches.blocks.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} patches of {:?} for a grid of {} patches of {:?}",
            patches.blocks.len(),
            patches.patch,
            grid.len(),
            grid.patch
        )));
    }
    check_dims(weights.dims, grid.dims)?;
    let plen = grid.patch_len();
    let mut out = vec![0.0; weights.coverage.len()];
    for (i, block) in patches.blocks.iter().enumerate() {
        if block.len() != plen {
            return Err(Error::Shape(format!(
                "patch {i} has {} values, expected {plen}",
                block.len()
            )));
        }
        grid.for_each_voxel(i, |q, v| out[v] += weights.weight_sq(v) * block[q]);
    }
    Volume::new(grid.dims, [1.0; 3], out)
}

/// `Σ_i ‖W(Rᵢχ − bᵢ)‖²`.
pub fn patch_penalty(
    chi: &Volume,
    patches: &PatchSet,
    grid: &PatchGrid,
    weights: &WeightField,
) -> Result<f64> {
    check_dims(chi.dims(), grid.dims)?;
    let data = chi.data();
    let mut total = 0.0;
    for (i, block) in patches.blocks.iter().enumerate() {
        grid.for_each_voxel(i, |q, v| {
            let r = data[v] - block[q];
            total += weights.weight_sq(v) * r * r;
        });
    }
    Ok(total)
}
