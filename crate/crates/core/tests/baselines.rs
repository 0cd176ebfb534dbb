use qsm_pdip::baselines::{
    param_search, recon_tgv, recon_tkd, recon_tv, TgvConfig, TkdConfig, TvConfig,
};
use qsm_pdip::phantom::{add_noise, ball_mask, rasterize, NoiseSpec, PhantomSpec, Shape};
use qsm_pdip::spectral::{DipoleKernel, DipoleOperator};
use qsm_pdip::Volume;

fn operator(v: &Volume) -> DipoleOperator {
    DipoleOperator::new(DipoleKernel::for_volume(v).unwrap())
}

fn sphere_phantom(n: usize) -> PhantomSpec {
    let c = n as f64 / 2.0;
    PhantomSpec::new([n; 3])
        .with_shape(Shape::Sphere {
            center: [c - 3.0, c, c],
            radius: n as f64 / 8.0,
            delta_chi: 0.5,
        })
        .with_shape(Shape::Cuboid {
            corner: [c + 1.0, c - 2.0, c - 3.0],
            size: [4.0, 5.0, 6.0],
            delta_chi: -0.3,
        })
}

fn sub(a: &Volume, b: &Volume) -> Volume {
    a.like(a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect()).unwrap()
}

#[test]
fn tv_history_non_increasing_after_ten() {
    let gt = rasterize(&sphere_phantom(24)).unwrap();
    let op = operator(&gt);
    let phi = add_noise(&op.apply(&gt).unwrap(), &NoiseSpec { sigma: 0.01, seed: 1 }).unwrap();
    let tv = recon_tv(&phi, &op, &TvConfig { lambda: 1e-3, iterations: 200, ..TvConfig::default() }).unwrap();
    let tgv = recon_tgv(&phi, &op, &TgvConfig { iterations: 200, ..TgvConfig::from_alpha1(1e-3) }).unwrap();
    for history in [&tv.history, &tgv.result.history] {
        assert_eq!(history.len(), 20);
        assert_eq!(history[0].0, 10);
        for w in history.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-12), "{:?}", w);
        }
    }
}

#[test]
fn tv_with_vanishing_lambda_is_least_squares_stationary() {
    let gt = rasterize(&sphere_phantom(16)).unwrap();
    let op = operator(&gt);
    let phi = add_noise(&op.apply(&gt).unwrap(), &NoiseSpec { sigma: 0.01, seed: 2 }).unwrap();
    let cfg = TvConfig {
        lambda: 1e-12,
        iterations: 500,
        tau: 1e3,
        sigma: 1.0 / 12e3,
    };
    let chi = recon_tv(&phi, &op, &cfg).unwrap().chi;
    let grad = op.adjoint(&sub(&op.apply(&chi).unwrap(), &phi)).unwrap();
    let rel = grad.norm() / op.adjoint(&phi).unwrap().norm();
    assert!(rel <= 1e-3, "stationarity {rel}");
}

#[test]
fn tgv_with_huge_alpha0_matches_tv() {
    let gt = rasterize(&sphere_phantom(16)).unwrap();
    let op = operator(&gt);
    let phi = add_noise(&op.apply(&gt).unwrap(), &NoiseSpec { sigma: 0.01, seed: 3 }).unwrap();
    let iterations = 1500;
    let tv = recon_tv(&phi, &op, &TvConfig { lambda: 2e-3, iterations, ..TvConfig::default() }).unwrap().chi;
    let tgv = recon_tgv(
        &phi,
        &op,
        &TgvConfig { alpha1: 2e-3, alpha0: 1e6, iterations, ..TgvConfig::default() },
    )
    .unwrap()
    .result
    .chi;
    let rel = tv.distance(&tgv).unwrap() / tv.norm();
    assert!(rel <= 0.01, "relative gap {rel}");
}

#[test]
fn reconstructions_ignore_constant_field_offset() {
    let gt = rasterize(&sphere_phantom(12)).unwrap();
    let op = operator(&gt);
    let phi = op.apply(&gt).unwrap();
    let shifted = phi.like(phi.data().iter().map(|v| v + 0.7).collect()).unwrap();
    let pairs = [
        (
            recon_tkd(&phi, &op, &TkdConfig::default()).unwrap(),
            recon_tkd(&shifted, &op, &TkdConfig::default()).unwrap(),
        ),
        (
            recon_tv(&phi, &op, &TvConfig { iterations: 50, ..TvConfig::default() }).unwrap().chi,
            recon_tv(&shifted, &op, &TvConfig { iterations: 50, ..TvConfig::default() }).unwrap().chi,
        ),
        (
            recon_tgv(&phi, &op, &TgvConfig { iterations: 50, ..TgvConfig::default() }).unwrap().result.chi,
            recon_tgv(&shifted, &op, &TgvConfig { iterations: 50, ..TgvConfig::default() })
                .unwrap()
                .result
                .chi,
        ),
    ];
    for (a, b) in pairs {
        assert!(a.distance(&b).unwrap() <= 1e-10 * (1.0 + a.norm()));
    }
}

#[test]
fn tkd_is_idempotent_on_its_outputs() {
    let gt = rasterize(&sphere_phantom(16)).unwrap();
    let op = operator(&gt);
    let cfg = TkdConfig { threshold: 0.25 };
    let once = recon_tkd(&op.apply(&gt).unwrap(), &op, &cfg).unwrap();
    // band-limit the first output so a second pass reproduces it
    let banded = op.filter(&once, |d| if d.abs() >= cfg.threshold { 1.0 } else { 0.0 }).unwrap();
    let twice = recon_tkd(&op.apply(&banded).unwrap(), &op, &cfg).unwrap();
    assert!(twice.distance(&banded).unwrap() <= 1e-10 * banded.norm());
}

#[test]
fn tv_beats_tkd_on_noisy_spheres() {
    let spec = sphere_phantom(32);
    let gt = rasterize(&spec).unwrap();
    let mask = ball_mask(&spec, 12.0);
    let op = operator(&gt);
    let phi = add_noise(&op.apply(&gt).unwrap(), &NoiseSpec { sigma: 0.01, seed: 42 }).unwrap();
    let tkd = param_search(&[0.1, 0.2, 0.3], &gt, &mask, |t| {
        recon_tkd(&phi, &op, &TkdConfig { threshold: t })
    })
    .unwrap();
    let tv = param_search(&[3e-4, 1e-3, 3e-3], &gt, &mask, |l| {
        Ok(recon_tv(&phi, &op, &TvConfig { lambda: l, iterations: 300, ..TvConfig::default() })?.chi)
    })
    .unwrap();
    assert!(tv.rmse < tkd.rmse, "tv {} vs tkd {}", tv.rmse, tkd.rmse);

    // rerun at the selected point reproduces the selection
    let again = param_search(&[tv.best], &gt, &mask, |l| {
        Ok(recon_tv(&phi, &op, &TvConfig { lambda: l, iterations: 300, ..TvConfig::default() })?.chi)
    })
    .unwrap();
    assert_eq!(again.rmse, tv.rmse);
}
