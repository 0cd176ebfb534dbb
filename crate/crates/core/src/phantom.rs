//! Synthetic susceptibility phantoms, the closed-form field of a magnetized
//! sphere, and additive measurement noise.
//!
//! Positions are in millimeters; voxel (x, y, z) has its center at
//! (x·Δx, y·Δy, z·Δz).

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;
use crate::volume::{Mask, Volume};

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
        delta_chi: f64,
    },
    Cuboid {
        corner: [f64; 3],
        size: [f64; 3],
        delta_chi: f64,
    },
}

impl Shape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Sphere { center, radius, .. } => {
                let d2: f64 = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum();
                d2 <= radius * radius
            }
            Shape::Cuboid { corner, size, .. } => {
                (0..3).all(|i| p[i] >= corner[i] && p[i] < corner[i] + size[i])
            }
        }
    }

    pub fn delta_chi(&self) -> f64 {
        match *self {
            Shape::Sphere { delta_chi, .. } | Shape::Cuboid { delta_chi, .. } => delta_chi,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Cuboid { size, .. } => size.iter().all(|&s| s > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "shape extents must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Later shapes overwrite earlier ones where they overlap.
    pub shapes: Vec<Shape>,
    pub background: f64,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3]) -> Self {
        Self {
            dims,
            spacing: [1.0; 3],
            shapes: Vec::new(),
            background: 0.0,
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shapes.push(shape);
        self
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            x as f64 * self.spacing[0],
            y as f64 * self.spacing[1],
            z as f64 * self.spacing[2],
        ]
    }

    /// Geometric center of the field of view, in millimeters.
    pub fn fov_center(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| (self.dims[i] as f64 - 1.0) * self.spacing[i] / 2.0)
    }
}

pub fn rasterize(spec: &PhantomSpec) -> Result<Volume> {
    for s in &spec.shapes {
        s.validate()?;
    }
    let data = Volume::from_fn(spec.dims, |x, y, z| {
        let p = spec.voxel_center(x, y, z);
        spec.shapes
            .iter()
            .rev()
            .find(|s| s.contains(p))
            .map_or(spec.background, Shape::delta_chi)
    })
    .into_data();
    Volume::new(spec.dims, spec.spacing, data)
}

/// Ball of `radius` mm around the field-of-view center.
pub fn ball_mask(spec: &PhantomSpec, radius: f64) -> Mask {
    let c = spec.fov_center();
    Mask::from_fn(spec.dims, |x, y, z| {
        let p = spec.voxel_center(x, y, z);
        (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>() <= radius * radius
    })
}

/// Field of a uniformly magnetized sphere (B0 along z), Lorentz-corrected so
/// the interior is zero:
/// `(Δχ/3)·(R/r)³·(3cos²θ − 1)` outside, `0` inside.
pub fn analytic_sphere_field(
    center: [f64; 3],
    radius: f64,
    delta_chi: f64,
    point: [f64; 3],
) -> Result<f64> {
    let d = [0, 1, 2].map(|i| point[i] - center[i]);
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if r2 == 0.0 {
        return Err(Error::InvalidArgument(
            "field query at the sphere center".into(),
        ));
    }
    let r = r2.sqrt();
    if r < radius {
        return Ok(0.0);
    }
    let cos2 = d[2] * d[2] / r2;
    Ok(delta_chi / 3.0 * (radius / r).powi(3) * (3.0 * cos2 - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds i.i.d. N(0, σ²) noise; the stream is fully determined by `seed`.
pub fn add_noise(phi: &Volume, noise: &NoiseSpec) -> Result<Volume> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be non-negative, got {}",
            noise.sigma
        )));
    }
    if noise.sigma == 0.0 {
        return Ok(phi.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
    let mut rng = seed::rng(noise.seed);
    let data = phi.data().iter().map(|&v| v + normal.sample(&mut rng)).collect();
    phi.like(data)
}

/// Two-sphere desk phantom: 48³ at 1 mm, Δχ = +0.5 and −0.3 ppm.
pub fn desk_phantom() -> PhantomSpec {
    PhantomSpec::new([48, 48, 48])
        .with_shape(Shape::Sphere {
            center: [18.0, 20.0, 24.0],
            radius: 6.0,
            delta_chi: 0.5,
        })
        .with_shape(Shape::Sphere {
            center: [30.0, 28.0, 22.0],
            radius: 5.0,
            delta_chi: -0.3,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_background() {
        let v = rasterize(&PhantomSpec::new([4, 5, 6])).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
        let mut spec = PhantomSpec::new([2, 2, 2]);
        spec.background = 0.1;
        assert!(rasterize(&spec).unwrap().data().iter().all(|&x| x == 0.1));
    }

    #[test]
    fn sphere_voxel_count_matches_lattice_points() {
        let ball = 4.0 / 3.0 * std::f64::consts::PI * 64.0;
        for c in [16.0, 15.5] {
            let spec = PhantomSpec::new([32; 3]).with_shape(Shape::Sphere {
                center: [c; 3],
                radius: 4.0,
                delta_chi: 1.0,
            });
            let count = rasterize(&spec).unwrap().data().iter().filter(|&&v| v == 1.0).count();
            let mut lattice = 0;
            for x in 0..32 {
                for y in 0..32 {
                    for z in 0..32 {
                        let d2 = [x, y, z].iter().map(|&i| (i as f64 - c).powi(2)).sum::<f64>();
                        if d2 <= 16.0 {
                            lattice += 1;
                        }
                    }
                }
            }
            assert_eq!(count, lattice);
            // 257 on a voxel center, 280 on a voxel corner
            assert!((count as f64 - ball).abs() <= 0.05 * ball, "{count} vs {ball}");
        }
    }

    #[test]
    fn later_shape_overwrites() {
        let spec = PhantomSpec::new([16; 3])
            .with_shape(Shape::Sphere {
                center: [6.0; 3],
                radius: 3.0,
                delta_chi: 1.0,
            })
            .with_shape(Shape::Sphere {
                center: [8.0; 3],
                radius: 3.0,
                delta_chi: 2.0,
            });
        let v = rasterize(&spec).unwrap();
        assert_eq!(v.get(7, 7, 7), 2.0);
        assert_eq!(v.get(4, 6, 6), 1.0);
        assert_eq!(v.get(0, 0, 0), 0.0);
    }

    #[test]
    fn cuboid_is_half_open() {
        let spec = PhantomSpec::new([6; 3]).with_shape(Shape::Cuboid {
            corner: [1.0, 1.0, 1.0],
            size: [2.0, 3.0, 1.0],
            delta_chi: 0.2,
        });
        let v = rasterize(&spec).unwrap();
        assert_eq!(v.data().iter().filter(|&&x| x == 0.2).count(), 6);
        assert_eq!(v.get(3, 1, 1), 0.0);
    }

    #[test]
    fn non_positive_radius_rejected() {
        let spec = PhantomSpec::new([4; 3]).with_shape(Shape::Sphere {
            center: [1.0; 3],
            radius: 0.0,
            delta_chi: 1.0,
        });
        assert!(rasterize(&spec).is_err());
    }

    #[test]
    fn analytic_field_closed_forms() {
        let c = [0.0; 3];
        let on_axis = analytic_sphere_field(c, 1.0, 1.0, [0.0, 0.0, 2.0]).unwrap();
        assert!((on_axis - 1.0 / 12.0).abs() < 1e-15);
        let equator = analytic_sphere_field(c, 1.0, 1.0, [2.0, 0.0, 0.0]).unwrap();
        assert!((equator + 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(analytic_sphere_field(c, 1.0, 1.0, [0.3, 0.2, -0.1]).unwrap(), 0.0);
        assert!(analytic_sphere_field(c, 1.0, 1.0, c).is_err());
    }

    #[test]
    fn noise_contract() {
        let v = Volume::zeros([32; 3]);
        let same = add_noise(&v, &NoiseSpec { sigma: 0.0, seed: 1 }).unwrap();
        assert_eq!(same, v);
        let spec = NoiseSpec {
            sigma: 0.01,
            seed: 42,
        };
        let a = add_noise(&v, &spec).unwrap();
        assert_eq!(a, add_noise(&v, &spec).unwrap());
        let n = a.len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        let std = (a.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.009..=0.011).contains(&std), "{std}");
        assert!(add_noise(&v, &NoiseSpec { sigma: -1.0, seed: 0 }).is_err());
    }
}
