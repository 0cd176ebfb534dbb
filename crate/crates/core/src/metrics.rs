//! Reconstruction quality against a ground truth over a mask: normalized
//! RMSE (percent), PSNR and a 3D SSIM.

use std::fmt::Write as _;

use crate::error::{check_dims, Error, Result};
use crate::volume::{Mask, Volume};

/// Value reported for PSNR when the reconstruction is exact.
pub const PSNR_CAP: f64 = 999.0;

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_RADIUS: usize = 5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

impl MetricReport {
    pub fn evaluate(method: impl Into<String>, rec: &Volume, gt: &Volume, mask: &Mask) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            rmse: rmse_pct(rec, gt, mask)?,
            ssim: ssim3d(rec, gt, mask)?,
            psnr: psnr(rec, gt, mask)?,
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{:.2},{:.4},{:.2}", self.method, self.rmse, self.ssim, self.psnr)
    }
}

pub const CSV_HEADER: &str = "method,rmse,ssim,psnr";

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

fn check(rec: &Volume, gt: &Volume, mask: &Mask) -> Result<()> {
    check_dims(rec.dims(), gt.dims())?;
    check_dims(mask.dims(), gt.dims())?;
    if mask.count() == 0 {
        return Err(Error::InvalidArgument("metric mask is empty".into()));
    }
    Ok(())
}

fn masked<'a>(v: &'a Volume, mask: &'a Mask) -> impl Iterator<Item = f64> + 'a {
    v.data()
        .iter()
        .zip(mask.data())
        .filter_map(|(&x, &m)| m.then_some(x))
}

/// Sum of squared differences and count over the mask.
fn masked_sse(rec: &Volume, gt: &Volume, mask: &Mask) -> (f64, usize) {
    let sse = masked(rec, mask)
        .zip(masked(gt, mask))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sse, mask.count())
}

/// Mean squared error over the mask.
pub fn mse(rec: &Volume, gt: &Volume, mask: &Mask) -> Result<f64> {
    check(rec, gt, mask)?;
    let (sse, n) = masked_sse(rec, gt, mask);
    Ok(sse / n as f64)
}

/// `100·‖rec − gt‖ / ‖gt‖` over the mask.
pub fn rmse_pct(rec: &Volume, gt: &Volume, mask: &Mask) -> Result<f64> {
    check(rec, gt, mask)?;
    let gt_sq: f64 = masked(gt, mask).map(|x| x * x).sum();
    if gt_sq == 0.0 {
        return Err(Error::InvalidArgument(
            "ground truth is identically zero on the mask".into(),
        ));
    }
    let (sse, _) = masked_sse(rec, gt, mask);
    Ok(100.0 * (sse / gt_sq).sqrt())
}

/// `max − min` of the ground truth over the mask.
pub fn data_range(gt: &Volume, mask: &Mask) -> f64 {
    let (lo, hi) = masked(gt, mask).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

/// PSNR from an externally known MSE and peak.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak * peak / mse).log10()).clamp(-PSNR_CAP, PSNR_CAP)
    }
}

/// `10·log₁₀(peak²/MSE)` with the ground-truth range as peak.
pub fn psnr(rec: &Volume, gt: &Volume, mask: &Mask) -> Result<f64> {
    let m = mse(rec, gt, mask)?;
    Ok(psnr_from_mse(m, data_range(gt, mask)))
}

fn gaussian_taps() -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect()
}

/// Separable Gaussian filter with the window truncated at the volume border
/// (no renormalization here; see [`local_mean`]).
fn blur(data: &[f64], dims: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut cur = data.to_vec();
    let mut next = vec![0.0; data.len()];
    for axis in 0..3 {
        let (stride, n) = match axis {
            0 => (1, dims[0]),
            1 => (dims[0], dims[1]),
            _ => (dims[0] * dims[1], dims[2]),
        };
        for (v, out) in next.iter_mut().enumerate() {
            let c = ((v / stride) % n) as isize;
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let o = t as isize - r;
                let s = c + o;
                if s >= 0 && s < n as isize {
                    acc += w * cur[(v as isize + o * stride as isize) as usize];
                }
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Window-weighted local mean with weights renormalized inside the volume.
fn local_mean(data: &[f64], dims: [usize; 3], taps: &[f64], norm: &[f64]) -> Vec<f64> {
    blur(data, dims, taps)
        .into_iter()
        .zip(norm)
        .map(|(s, w)| s / w)
        .collect()
}

/// Mean SSIM over the mask with an explicit data range.
pub fn ssim3d_with_range(rec: &Volume, gt: &Volume, mask: &Mask, range: f64) -> Result<f64> {
    check(rec, gt, mask)?;
    let dims = gt.dims();
    let taps = gaussian_taps();
    let norm = blur(&vec![1.0; gt.len()], dims, &taps);
    let (x, y) = (rec.data(), gt.data());
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = local_mean(x, dims, &taps, &norm);
    let my = local_mean(y, dims, &taps, &norm);
    let mxx = local_mean(&xx, dims, &taps, &norm);
    let myy = local_mean(&yy, dims, &taps, &norm);
    let mxy = local_mean(&xy, dims, &taps, &norm);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let mut total = 0.0;
    for v in (0..gt.len()).filter(|&v| mask.data()[v]) {
        total += ssim_value(mx[v], my[v], mxx[v], myy[v], mxy[v], c1, c2);
    }
    Ok(total / mask.count() as f64)
}

#[inline]
fn ssim_value(mx: f64, my: f64, mxx: f64, myy: f64, mxy: f64, c1: f64, c2: f64) -> f64 {
    let vx = mxx - mx * mx;
    let vy = myy - my * my;
    let cov = mxy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over the mask; Gaussian window σ = 1.5 truncated to 11³,
/// K₁ = 0.01, K₂ = 0.03, data range from the ground truth over the mask.
pub fn ssim3d(rec: &Volume, gt: &Volume, mask: &Mask) -> Result<f64> {
    check(rec, gt, mask)?;
    ssim3d_with_range(rec, gt, mask, data_range(gt, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(dims: [usize; 3], seed: u64) -> Volume {
        let mut rng = crate::seed::rng(seed);
        Volume::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rmse_definition() {
        let gt = random([6; 3], 1);
        let mask = Mask::full([6; 3]);
        assert_eq!(rmse_pct(&gt, &gt, &mask).unwrap(), 0.0);
        assert!((rmse_pct(&Volume::zeros([6; 3]), &gt, &mask).unwrap() - 100.0).abs() < 1e-12);
        let scaled = gt.like(gt.data().iter().map(|v| 1.5 * v).collect()).unwrap();
        assert!((rmse_pct(&scaled, &gt, &mask).unwrap() - 50.0).abs() < 1e-12);
        assert!(rmse_pct(&gt, &Volume::zeros([6; 3]), &mask).is_err());
    }

    #[test]
    fn psnr_definition() {
        let gt = random([6; 3], 2);
        let mask = Mask::full([6; 3]);
        assert_eq!(psnr(&gt, &gt, &mask).unwrap(), PSNR_CAP);
        assert!((psnr_from_mse(1e-4, 1.0) - 40.0).abs() < 1e-12);
        // naive recomputation on a masked random pair
        let rec = random([6; 3], 3);
        let half = Mask::from_fn([6; 3], |x, _, _| x < 3);
        let mut sse = 0.0;
        let mut n = 0.0;
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..3 {
                    let (a, b) = (rec.get(x, y, z), gt.get(x, y, z));
                    sse += (a - b) * (a - b);
                    n += 1.0;
                    lo = lo.min(b);
                    hi = hi.max(b);
                }
            }
        }
        let expected = 10.0 * ((hi - lo).powi(2) / (sse / n)).log10();
        assert!((psnr(&rec, &gt, &half).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rmse_and_psnr_share_mse() {
        let gt = random([5; 3], 4);
        let rec = random([5; 3], 5);
        let mask = Mask::full([5; 3]);
        let m = mse(&rec, &gt, &mask).unwrap();
        let gt_ms = gt.data().iter().map(|v| v * v).sum::<f64>() / gt.len() as f64;
        let rmse = rmse_pct(&rec, &gt, &mask).unwrap();
        assert!((rmse - 100.0 * (m / gt_ms).sqrt()).abs() < 1e-12);
        let p = psnr(&rec, &gt, &mask).unwrap();
        assert!((p - 10.0 * (data_range(&gt, &mask).powi(2) / m).log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_identity_is_one() {
        let gt = random([8; 3], 6);
        let mask = Mask::full([8; 3]);
        assert!((ssim3d(&gt, &gt, &mask).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_collapses_under_large_shift() {
        let gt = Volume::from_fn([10; 3], |x, y, z| ((x + y + z) % 4) as f64 / 3.0);
        let mask = Mask::full([10; 3]);
        let range = data_range(&gt, &mask);
        let shifted = gt.like(gt.data().iter().map(|v| v + 10.0 * range).collect()).unwrap();
        assert!(ssim3d(&shifted, &gt, &mask).unwrap() < 0.5);
    }

    #[test]
    fn ssim_symmetric_for_fixed_range() {
        let a = random([7; 3], 7);
        let b = random([7; 3], 8);
        let mask = Mask::from_fn([7; 3], |x, y, _| x > y);
        let ab = ssim3d_with_range(&a, &b, &mask, 2.0).unwrap();
        let ba = ssim3d_with_range(&b, &a, &mask, 2.0).unwrap();
        assert!((ab - ba).abs() < 1e-14);
    }

    /// Direct 11³ window sum per voxel, weights renormalized inside the grid.
    fn naive_ssim(rec: &Volume, gt: &Volume, range: f64) -> f64 {
        let [nx, ny, nz] = gt.dims();
        let r = 5isize;
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let mut total = 0.0;
        for z in 0..nz as isize {
            for y in 0..ny as isize {
                for x in 0..nx as isize {
                    let (mut sw, mut sx, mut sy, mut sxx, mut syy, mut sxy) =
                        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (px, py, pz) = (x + dx, y + dy, z + dz);
                                if px < 0
                                    || py < 0
                                    || pz < 0
                                    || px >= nx as isize
                                    || py >= ny as isize
                                    || pz >= nz as isize
                                {
                                    continue;
                                }
                                let w = (-((dx * dx + dy * dy + dz * dz) as f64) / 4.5).exp();
                                let a = rec.get(px as usize, py as usize, pz as usize);
                                let b = gt.get(px as usize, py as usize, pz as usize);
                                sw += w;
                                sx += w * a;
                                sy += w * b;
                                sxx += w * a * a;
                                syy += w * b * b;
                                sxy += w * a * b;
                            }
                        }
                    }
                    let (mx, my) = (sx / sw, sy / sw);
                    let vx = sxx / sw - mx * mx;
                    let vy = syy / sw - my * my;
                    let cov = sxy / sw - mx * my;
                    total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                }
            }
        }
        total / (nx * ny * nz) as f64
    }

    #[test]
    fn ssim_matches_scalar_loop() {
        let gt = random([8; 3], 9);
        let rec = random([8; 3], 10);
        let mask = Mask::full([8; 3]);
        let range = data_range(&gt, &mask);
        let fast = ssim3d(&rec, &gt, &mask).unwrap();
        assert!((fast - naive_ssim(&rec, &gt, range)).abs() <= 1e-10);
    }

    #[test]
    fn csv_formatting() {
        let r = MetricReport {
            method: "self".into(),
            rmse: 0.0,
            ssim: 1.0,
            psnr: PSNR_CAP,
        };
        assert_eq!(r.csv_row(), "self,0.00,1.0000,999.00");
        assert_eq!(reports_to_csv(&[r]), "method,rmse,ssim,psnr\nself,0.00,1.0000,999.00\n");
    }

    #[test]
    fn dims_mismatch() {
        let a = Volume::zeros([4; 3]);
        let b = Volume::zeros([4, 4, 5]);
        assert!(rmse_pct(&a, &b, &Mask::full([4; 3])).is_err());
    }
}
