use rand::Rng;

use crate::error::Result;
use crate::patchwork::PatchGrid;
use crate::seed;

use super::{FeatureMap, NetworkSpec, Parameters};

/// Half-width of the zero-mean uniform noise input: `√0.3`, so the variance
/// `(2a)²/12` is 0.1.
pub const NOISE_HALF_WIDTH: f64 = 0.547_722_557_505_166_1;

/// Fan-in scaled uniform weights in `±√(6/fan_in)`, zero biases.
pub fn init_weights(spec: NetworkSpec, seed: u64) -> Result<Parameters> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut params = Parameters::zeros(spec);
    for (j, layer) in spec.layers().iter().enumerate() {
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        for w in &mut params.tensors[2 * j] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(params)
}

/// The fixed per-patch inputs `z_i`, one single-channel map per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseInput {
    pub seed: u64,
    pub inputs: Vec<FeatureMap>,
}

/// Patch `i` draws from its own stream keyed by `(seed, i)`.
pub fn make_noise_inputs(grid: &PatchGrid, seed: u64) -> NoiseInput {
    let dims = grid.patch();
    let n = grid.patch_len();
    let inputs = (0..grid.len())
        .map(|i| {
            let mut rng = seed::rng(seed::derive_indexed(seed, i as u64));
            FeatureMap {
                channels: 1,
                dims,
                data: (0..n)
                    .map(|_| rng.random_range(-NOISE_HALF_WIDTH..=NOISE_HALF_WIDTH))
                    .collect(),
            }
        })
        .collect();
    NoiseInput { seed, inputs }
}
