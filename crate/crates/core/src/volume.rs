//! Scalar 3D volumes, binary masks and their on-disk representation.
//!
//! A volume is stored as a pair of files: a UTF-8 header `<name>.hdr` with
//! one `key=value` per line and a raw payload `<name>.f32` of little-endian
//! 32-bit floats in x-fastest order. Arithmetic is always 64-bit in memory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{check_dims, Error, Result};

/// Real scalar field on a regular grid, index = x + Nx·(y + Ny·z).
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        validate_dims(dims)?;
        validate_spacing(spacing)?;
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "volume {:?} needs {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            spacing: [1.0; 3],
            data: vec![value; n],
        }
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self {
            dims,
            spacing: [1.0; 3],
            data,
        }
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    /// Same grid, new values. Used to return solver outputs on the input grid.
    pub fn like(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Volume) -> Result<f64> {
        check_dims(self.dims, other.dims)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Euclidean distance ‖self − other‖.
    pub fn distance(&self, other: &Volume) -> Result<f64> {
        check_dims(self.dims, other.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Binary voxel mask, same layout as [`Volume`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        validate_dims(dims)?;
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "mask {:?} needs {} values, got {}",
                dims,
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![true; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, data }
    }

    /// Voxels with value > 0.5 are inside.
    pub fn from_volume(v: &Volume) -> Self {
        Self {
            dims: v.dims,
            data: v.data.iter().map(|&x| x > 0.5).collect(),
        }
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            dims: self.dims,
            spacing: [1.0; 3],
            data: self
                .data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

fn validate_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

fn validate_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "voxel spacing must be positive, got {spacing:?}"
        )));
    }
    Ok(())
}

/// Header and payload paths for a volume stored under `path`.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("hdr"), path.with_extension("f32"))
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    if let Some(index) = v.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let (hdr, raw) = volume_paths(path.as_ref());
    let [nx, ny, nz] = v.dims;
    let [sx, sy, sz] = v.spacing;
    let mut header = String::new();
    let _ = writeln!(header, "dims={nx},{ny},{nz}");
    let _ = writeln!(header, "spacing={sx},{sy},{sz}");
    let _ = writeln!(header, "dtype=f32le");
    let _ = writeln!(header, "order=x-fastest");
    fs::write(&hdr, header).map_err(|e| Error::io(&hdr, e))?;

    let mut bytes = Vec::with_capacity(v.data.len() * 4);
    for &x in &v.data {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (hdr, raw) = volume_paths(path.as_ref());
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header_err = |message: String| Error::Header {
        path: hdr.clone(),
        message,
    };

    let mut dims = None;
    let mut spacing = [1.0; 3];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| header_err(format!("expected key=value, got `{line}`")))?;
        match key.trim() {
            "dims" => {
                dims = Some(parse_triple::<usize>(value).map_err(|m| header_err(m))?);
            }
            "spacing" => spacing = parse_triple::<f64>(value).map_err(|m| header_err(m))?,
            "dtype" if value.trim() == "f32le" => {}
            "order" if value.trim() == "x-fastest" => {}
            other => return Err(header_err(format!("unsupported entry `{other}={value}`"))),
        }
    }
    let dims = dims.ok_or_else(|| header_err("missing dims".into()))?;
    let n: usize = dims.iter().product();

    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() as u64 != 4 * n as u64 {
        return Err(Error::SizeMismatch {
            path: raw,
            expected: 4 * n as u64,
            found: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(dims, spacing, data)
}

pub(crate) fn parse_triple<T: FromStr>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::InvalidArgument(format!("unknown axis `{s}`"))),
        }
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Linear display mapping of [lo, hi] onto [0, 255] with clipping.
pub fn window_to_u8(value: f64, lo: f64, hi: f64) -> u8 {
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    (255.0 * t).round() as u8
}

/// Extracts the plane `axis = index`. Image columns run along the faster of
/// the two remaining axes, rows along the slower one.
pub fn slice_image(v: &Volume, axis: Axis, index: usize, window: (f64, f64)) -> Result<GrayImage> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "display window requires lo < hi, got ({lo}, {hi})"
        )));
    }
    let [nx, ny, nz] = v.dims;
    let (limit, width, height) = match axis {
        Axis::X => (nx, ny, nz),
        Axis::Y => (ny, nx, nz),
        Axis::Z => (nz, nx, ny),
    };
    if index >= limit {
        return Err(Error::InvalidArgument(format!(
            "slice index {index} out of range 0..{limit} along {axis:?}"
        )));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y, z) = match axis {
                Axis::X => (index, col, row),
                Axis::Y => (col, index, row),
                Axis::Z => (col, row, index),
            };
            pixels.push(window_to_u8(v.get(x, y, z), lo, hi));
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn export_slice(
    v: &Volume,
    axis: Axis,
    index: usize,
    window: (f64, f64),
    path: impl AsRef<Path>,
) -> Result<()> {
    let img = slice_image(v, axis, index, window)?;
    let path = path.as_ref();
    fs::write(path, img.to_pgm()).map_err(|e| Error::io(path, e))
}
