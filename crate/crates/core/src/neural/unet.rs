use crate::error::{Error, Result};

use super::conv::{
    avg_pool2, avg_pool2_backward, conv1_backward, conv1_forward, conv3_backward, conv3_forward,
    leaky_relu, leaky_relu_backward, upsample2, upsample2_backward,
};
use super::FeatureMap;

/// UNet topology. Level ℓ carries `base_channels · 2^ℓ` channels; there are
/// `levels` poolings, so inputs must be divisible by `2^levels` per axis.
///
/// Encoder level ℓ: conv3 → leaky ReLU (kept as skip) → 2³ average pool.
/// Bottleneck: conv3 → leaky ReLU.
/// Decoder level ℓ: nearest ×2 upsample → conv3 → leaky ReLU → concat with
/// skip ℓ → conv3 → leaky ReLU. A final 1×1×1 conv projects to one channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub levels: usize,
    pub base_channels: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            levels: 2,
            base_channels: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub cin: usize,
    pub cout: usize,
    /// 27 for 3×3×3, 1 for the pointwise projection.
    pub taps: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.cin * self.cout * self.taps
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.taps
    }
}

impl NetworkSpec {
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least one level and one channel: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn check_input(&self, dims: [usize; 3]) -> Result<()> {
        let f = 1usize << self.levels;
        if dims.iter().any(|&d| d == 0 || d % f != 0) {
            return Err(Error::Shape(format!(
                "input {dims:?} not divisible by 2^{} = {f}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Layers in parameter order: encoders, bottleneck, then (up, decoder)
    /// pairs from the deepest level to level 0, then the projection.
    pub fn layers(&self) -> Vec<LayerShape> {
        let l = self.levels;
        let c = |lvl| self.channels(lvl);
        let mut out = Vec::with_capacity(2 * l + 2);
        for lvl in 0..l {
            let cin = if lvl == 0 { 1 } else { c(lvl - 1) };
            out.push(LayerShape {
                cin,
                cout: c(lvl),
                taps: 27,
            });
        }
        out.push(LayerShape {
            cin: c(l - 1),
            cout: c(l),
            taps: 27,
        });
        for lvl in (0..l).rev() {
            out.push(LayerShape {
                cin: c(lvl + 1),
                cout: c(lvl),
                taps: 27,
            });
            out.push(LayerShape {
                cin: 2 * c(lvl),
                cout: c(lvl),
                taps: 27,
            });
        }
        out.push(LayerShape {
            cin: c(0),
            cout: 1,
            taps: 1,
        });
        out
    }

    fn encoder(&self, lvl: usize) -> usize {
        lvl
    }

    fn bottleneck(&self) -> usize {
        self.levels
    }

    fn up(&self, lvl: usize) -> usize {
        self.levels + 1 + 2 * (self.levels - 1 - lvl)
    }

    fn decoder(&self, lvl: usize) -> usize {
        self.up(lvl) + 1
    }

    fn projection(&self) -> usize {
        3 * self.levels + 1
    }

    pub fn parameter_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|s| s.weight_len() + s.cout)
            .sum()
    }
}

/// Weights Θ: per layer a weight tensor then a bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub spec: NetworkSpec,
    /// `tensors[2j]` = weights of layer j, `tensors[2j + 1]` = its bias.
    pub tensors: Vec<Vec<f64>>,
}

impl Parameters {
    pub fn zeros(spec: NetworkSpec) -> Self {
        let tensors = spec
            .layers()
            .iter()
            .flat_map(|s| [vec![0.0; s.weight_len()], vec![0.0; s.cout]])
            .collect();
        Self { spec, tensors }
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        &self.tensors[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.tensors[2 * layer + 1]
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.same_shape(&Parameters::zeros(self.spec)) {
            return Err(Error::Shape(
                "parameter tensors do not match the network spec".into(),
            ));
        }
        Ok(())
    }
}

/// Activations retained by [`unet_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    spec: NetworkSpec,
    input_dims: [usize; 3],
    /// Input to each layer, in layer order.
    inputs: Vec<FeatureMap>,
    /// Post-activation output of each 3×3×3 layer, in layer order.
    activations: Vec<FeatureMap>,
}

fn conv_act(params: &Parameters, layer: usize, x: &FeatureMap) -> Result<FeatureMap> {
    Ok(leaky_relu(conv3_forward(x, params.weight(layer), params.bias(layer))?))
}

/// `f_Θ(z)` for a single-channel input. Returns the single-channel output and
/// the cache needed by [`unet_backward`].
pub fn unet_forward(params: &Parameters, input: &FeatureMap) -> Result<(FeatureMap, ForwardCache)> {
    let spec = params.spec;
    spec.check_input(input.dims)?;
    if input.channels != 1 {
        return Err(Error::Shape(format!(
            "network input has {} channels, expected 1",
            input.channels
        )));
    }
    let nlayers = spec.projection() + 1;
    let mut inputs: Vec<Option<FeatureMap>> = vec![None; nlayers];
    let mut acts: Vec<Option<FeatureMap>> = vec![None; nlayers];

    let mut x = input.clone();
    for lvl in 0..spec.levels {
        let j = spec.encoder(lvl);
        let a = conv_act(params, j, &x)?;
        let pooled = avg_pool2(&a);
        inputs[j] = Some(x);
        acts[j] = Some(a);
        x = pooled;
    }
    let j = spec.bottleneck();
    let a = conv_act(params, j, &x)?;
    inputs[j] = Some(x);
    x = a.clone();
    acts[j] = Some(a);

    for lvl in (0..spec.levels).rev() {
        let ju = spec.up(lvl);
        let u = upsample2(&x);
        let a = conv_act(params, ju, &u)?;
        inputs[ju] = Some(u);
        let skip = acts[spec.encoder(lvl)].as_ref().expect("encoder ran");
        let cat = skip.concat(&a);
        acts[ju] = Some(a);
        let jd = spec.decoder(lvl);
        let h = conv_act(params, jd, &cat)?;
        inputs[jd] = Some(cat);
        x = h.clone();
        acts[jd] = Some(h);
    }

    let jp = spec.projection();
    let out = conv1_forward(&x, params.weight(jp), params.bias(jp))?;
    inputs[jp] = Some(x);

    let cache = ForwardCache {
        spec,
        input_dims: input.dims,
        inputs: inputs.into_iter().map(|m| m.expect("every layer ran")).collect(),
        activations: acts
            .into_iter()
            .map(|m| m.unwrap_or_else(|| FeatureMap::zeros(0, [0; 3])))
            .collect(),
    };
    Ok((out, cache))
}

/// `∂loss/∂Θ` given `∂loss/∂output` and the cache of the matching forward pass.
pub fn unet_backward(
    params: &Parameters,
    cache: &ForwardCache,
    grad_output: &FeatureMap,
) -> Result<Parameters> {
    let spec = params.spec;
    if cache.spec != spec || grad_output.dims != cache.input_dims || grad_output.channels != 1 {
        return Err(Error::Shape(
            "gradient does not match the cached forward pass".into(),
        ));
    }
    let mut grads = Parameters::zeros(spec);
    let mut store = |layer: usize, w: Vec<f64>, b: Vec<f64>| {
        grads.tensors[2 * layer] = w;
        grads.tensors[2 * layer + 1] = b;
    };

    let jp = spec.projection();
    let g = conv1_backward(grad_output, &cache.inputs[jp], params.weight(jp))?;
    store(jp, g.weight, g.bias);
    let mut gx = g.input.expect("pointwise conv returns input gradient");

    let mut skip_grads: Vec<Option<FeatureMap>> = vec![None; spec.levels];
    for lvl in 0..spec.levels {
        let jd = spec.decoder(lvl);
        let gpre = leaky_relu_backward(gx, &cache.activations[jd]);
        let g = conv3_backward(&gpre, &cache.inputs[jd], params.weight(jd), true)?;
        store(jd, g.weight, g.bias);
        let (g_skip, g_up) = g.input.expect("requested").split(spec.channels(lvl));
        skip_grads[lvl] = Some(g_skip);

        let ju = spec.up(lvl);
        let gpre = leaky_relu_backward(g_up, &cache.activations[ju]);
        let g = conv3_backward(&gpre, &cache.inputs[ju], params.weight(ju), true)?;
        store(ju, g.weight, g.bias);
        gx = upsample2_backward(&g.input.expect("requested"));
    }

    let jb = spec.bottleneck();
    let gpre = leaky_relu_backward(gx, &cache.activations[jb]);
    let g = conv3_backward(&gpre, &cache.inputs[jb], params.weight(jb), true)?;
    store(jb, g.weight, g.bias);
    gx = g.input.expect("requested");

    for lvl in (0..spec.levels).rev() {
        let je = spec.encoder(lvl);
        let act = &cache.activations[je];
        let mut ga = avg_pool2_backward(&gx, act.dims);
        let skip = skip_grads[lvl].take().expect("decoder ran");
        for (a, s) in ga.data.iter_mut().zip(&skip.data) {
            *a += s;
        }
        let gpre = leaky_relu_backward(ga, act);
        let g = conv3_backward(&gpre, &cache.inputs[je], params.weight(je), lvl > 0)?;
        store(je, g.weight, g.bias);
        if let Some(gin) = g.input {
            gx = gin;
        }
    }
    Ok(grads)
}
