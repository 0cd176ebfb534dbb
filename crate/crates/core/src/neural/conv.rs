//! Convolution, pooling, upsampling and activation layers.
//!
//! 3×3×3 convolutions are lowered to a matrix product over an im2col buffer:
//! row `c·27 + k` of the buffer holds input channel `c` shifted by kernel tap
//! `k = (kz·3 + ky)·3 + kx`, zero outside the grid. Weights are stored
//! `[cout][cin][kz][ky][kx]`, i.e. cross-correlation.

use crate::error::{Error, Result};

use super::FeatureMap;

pub const LEAKY_SLOPE: f64 = 0.1;

pub struct ConvGrads {
    pub input: Option<FeatureMap>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `c = a·b (+ c if accumulate)`, all row-major, `a: m×k`, `b: k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_transposed { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_transposed { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths match the stated strides (checked above in debug
    // builds and by construction at every call site).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Valid destination range along one axis for a tap offset in {-1, 0, 1}.
#[inline]
fn valid(n: usize, off: isize) -> (usize, usize) {
    match off {
        -1 => (1, n),
        1 => (0, n.saturating_sub(1)),
        _ => (0, n),
    }
}

fn im2col(input: &FeatureMap) -> Vec<f64> {
    let [nx, ny, nz] = input.dims;
    let n = nx * ny * nz;
    let mut cols = vec![0.0; input.channels * 27 * n];
    for c in 0..input.channels {
        let src = input.channel(c);
        for k in 0..27 {
            let (dx, dy, dz) = (k as isize % 3 - 1, (k as isize / 3) % 3 - 1, k as isize / 9 - 1);
            let row = &mut cols[(c * 27 + k) * n..(c * 27 + k + 1) * n];
            let (x0, x1) = valid(nx, dx);
            let (y0, y1) = valid(ny, dy);
            let (z0, z1) = valid(nz, dz);
            for z in z0..z1 {
                let sz = (z as isize + dz) as usize;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let dst = nx * (y + ny * z);
                    let s = nx * (sy + ny * sz);
                    let sx0 = (x0 as isize + dx) as usize;
                    row[dst + x0..dst + x1].copy_from_slice(&src[s + sx0..s + sx0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, dims: [usize; 3]) -> FeatureMap {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let mut out = FeatureMap::zeros(channels, dims);
    for c in 0..channels {
        let dst = &mut out.data[c * n..(c + 1) * n];
        for k in 0..27 {
            let (dx, dy, dz) = (k as isize % 3 - 1, (k as isize / 3) % 3 - 1, k as isize / 9 - 1);
            let row = &cols[(c * 27 + k) * n..(c * 27 + k + 1) * n];
            let (x0, x1) = valid(nx, dx);
            let (y0, y1) = valid(ny, dy);
            let (z0, z1) = valid(nz, dz);
            for z in z0..z1 {
                let sz = (z as isize + dz) as usize;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let r = nx * (y + ny * z);
                    let s = nx * (sy + ny * sz);
                    let sx0 = (x0 as isize + dx) as usize;
                    for (d, &g) in dst[s + sx0..s + sx0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[r + x0..r + x1])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    out
}

fn check_conv(input: &FeatureMap, weight: &[f64], bias: &[f64], taps: usize) -> Result<usize> {
    let cout = bias.len();
    if cout == 0 || weight.len() != cout * input.channels * taps {
        return Err(Error::Shape(format!(
            "weight of {} values does not fit {} -> {} channels with {taps} taps",
            weight.len(),
            input.channels,
            cout
        )));
    }
    Ok(cout)
}

/// 3×3×3 convolution, stride 1, zero padding 1.
pub fn conv3_forward(input: &FeatureMap, weight: &[f64], bias: &[f64]) -> Result<FeatureMap> {
    let cout = check_conv(input, weight, bias, 27)?;
    let n = input.spatial_len();
    let cols = im2col(input);
    let mut out = FeatureMap::zeros(cout, input.dims);
    for (c, &b) in bias.iter().enumerate() {
        out.data[c * n..(c + 1) * n].fill(b);
    }
    gemm(cout, input.channels * 27, n, weight, false, &cols, false, &mut out.data, true);
    Ok(out)
}

/// Gradients of [`conv3_forward`]. The input gradient is skipped when
/// `need_input` is false (first layer).
pub fn conv3_backward(
    upstream: &FeatureMap,
    input: &FeatureMap,
    weight: &[f64],
    need_input: bool,
) -> Result<ConvGrads> {
    let cout = upstream.channels;
    let k = input.channels * 27;
    if upstream.dims != input.dims || weight.len() != cout * k {
        return Err(Error::Shape(format!(
            "conv backward: upstream {}×{:?}, input {}×{:?}, weight {}",
            upstream.channels,
            upstream.dims,
            input.channels,
            input.dims,
            weight.len()
        )));
    }
    let n = input.spatial_len();
    let cols = im2col(input);
    let mut gw = vec![0.0; cout * k];
    gemm(cout, n, k, &upstream.data, false, &cols, true, &mut gw, false);
    let gb = (0..cout)
        .map(|c| upstream.data[c * n..(c + 1) * n].iter().sum())
        .collect();
    let gin = need_input.then(|| {
        let mut gcols = cols;
        gemm(k, cout, n, weight, true, &upstream.data, false, &mut gcols, false);
        col2im(&gcols, input.channels, input.dims)
    });
    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}

/// Pointwise (1×1×1) convolution.
pub fn conv1_forward(input: &FeatureMap, weight: &[f64], bias: &[f64]) -> Result<FeatureMap> {
    let cout = check_conv(input, weight, bias, 1)?;
    let n = input.spatial_len();
    let mut out = FeatureMap::zeros(cout, input.dims);
    for (c, &b) in bias.iter().enumerate() {
        out.data[c * n..(c + 1) * n].fill(b);
    }
    gemm(cout, input.channels, n, weight, false, &input.data, false, &mut out.data, true);
    Ok(out)
}

pub fn conv1_backward(
    upstream: &FeatureMap,
    input: &FeatureMap,
    weight: &[f64],
) -> Result<ConvGrads> {
    let cout = upstream.channels;
    let cin = input.channels;
    if upstream.dims != input.dims || weight.len() != cout * cin {
        return Err(Error::Shape("conv1 backward shape mismatch".into()));
    }
    let n = input.spatial_len();
    let mut gw = vec![0.0; cout * cin];
    gemm(cout, n, cin, &upstream.data, false, &input.data, true, &mut gw, false);
    let gb = (0..cout)
        .map(|c| upstream.data[c * n..(c + 1) * n].iter().sum())
        .collect();
    let mut gin = FeatureMap::zeros(cin, input.dims);
    gemm(cin, cout, n, weight, true, &upstream.data, false, &mut gin.data, false);
    Ok(ConvGrads {
        input: Some(gin),
        weight: gw,
        bias: gb,
    })
}

pub fn leaky_relu(mut x: FeatureMap) -> FeatureMap {
    for v in &mut x.data {
        if *v <= 0.0 {
            *v *= LEAKY_SLOPE;
        }
    }
    x
}

/// Gradient through the activation, given its output (same sign as input).
pub fn leaky_relu_backward(mut upstream: FeatureMap, output: &FeatureMap) -> FeatureMap {
    for (g, &y) in upstream.data.iter_mut().zip(&output.data) {
        if y <= 0.0 {
            *g *= LEAKY_SLOPE;
        }
    }
    upstream
}

/// 2×2×2 average pooling; spatial dims must be even.
pub fn avg_pool2(x: &FeatureMap) -> FeatureMap {
    let [nx, ny, nz] = x.dims;
    let dims = [nx / 2, ny / 2, nz / 2];
    let mut out = FeatureMap::zeros(x.channels, dims);
    let m = out.spatial_len();
    for c in 0..x.channels {
        let src = x.channel(c);
        let dst = &mut out.data[c * m..(c + 1) * m];
        for z in 0..nz {
            for y in 0..ny {
                let row = nx * (y + ny * z);
                let orow = dims[0] * (y / 2 + dims[1] * (z / 2));
                for xx in 0..nx {
                    dst[orow + xx / 2] += 0.125 * src[row + xx];
                }
            }
        }
    }
    out
}

pub fn avg_pool2_backward(upstream: &FeatureMap, input_dims: [usize; 3]) -> FeatureMap {
    let mut g = upsample2(upstream);
    debug_assert_eq!(g.dims, input_dims);
    for v in &mut g.data {
        *v *= 0.125;
    }
    g
}

/// Nearest-neighbor ×2 upsampling.
pub fn upsample2(x: &FeatureMap) -> FeatureMap {
    let [mx, my, _] = x.dims;
    let dims = x.dims.map(|d| 2 * d);
    let [nx, ny, nz] = dims;
    let mut out = FeatureMap::zeros(x.channels, dims);
    let n = out.spatial_len();
    for c in 0..x.channels {
        let src = x.channel(c);
        let dst = &mut out.data[c * n..(c + 1) * n];
        for z in 0..nz {
            for y in 0..ny {
                let row = nx * (y + ny * z);
                let srow = mx * (y / 2 + my * (z / 2));
                for xx in 0..nx {
                    dst[row + xx] = src[srow + xx / 2];
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2×2×2 block.
pub fn upsample2_backward(upstream: &FeatureMap) -> FeatureMap {
    let mut g = avg_pool2(upstream);
    for v in &mut g.data {
        *v *= 8.0;
    }
    g
}
