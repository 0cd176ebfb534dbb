//! A small 3D UNet with hand-written forward and backward passes, an ADAM
//! optimizer, and the random initializations the deep-prior fit starts from.
//!
//! Feature maps are channel-major, x-fastest within a channel. Everything is
//! 64-bit.

mod adam;
mod checkpoint;
mod conv;
mod init;
mod unet;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_parameters, save_parameters};
pub use conv::{
    avg_pool2, avg_pool2_backward, conv1_backward, conv1_forward, conv3_backward, conv3_forward,
    leaky_relu, leaky_relu_backward, upsample2, upsample2_backward, ConvGrads, LEAKY_SLOPE,
};
pub use init::{init_weights, make_noise_inputs, NoiseInput, NOISE_HALF_WIDTH};
pub use unet::{unet_backward, unet_forward, ForwardCache, LayerShape, NetworkSpec, Parameters};

/// `C` channels over a 3D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self {
            channels,
            dims,
            data: vec![0.0; channels * dims.iter().product::<usize>()],
        }
    }

    pub fn from_data(channels: usize, dims: [usize; 3], data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != channels * dims.iter().product::<usize>() {
            return Err(crate::Error::Shape(format!(
                "{} values for {channels} channels of {dims:?}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    #[inline]
    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.spatial_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat(&self, other: &FeatureMap) -> FeatureMap {
        assert_eq!(self.dims, other.dims, "concat across different grids");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        FeatureMap {
            channels: self.channels + other.channels,
            dims: self.dims,
            data,
        }
    }

    /// Inverse of [`concat`](Self::concat): first `channels` channels, rest.
    pub fn split(self, channels: usize) -> (FeatureMap, FeatureMap) {
        let n = self.spatial_len();
        let mut head = self.data;
        let tail = head.split_off(channels * n);
        (
            FeatureMap {
                channels,
                dims: self.dims,
                data: head,
            },
            FeatureMap {
                channels: self.channels - channels,
                dims: self.dims,
                data: tail,
            },
        )
    }
}
