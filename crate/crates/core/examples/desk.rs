//! Desk-phantom comparison of TKD, TV, TGV and the patch prior.
//!
//! ```text
//! cargo run --release --example desk -- [base_channels] [epochs] [outer] [mu,mu,...] [init] [lr] [baselines]
//! ```

use std::time::Instant;

use qsm_pdip::baselines::{param_search, recon_tgv, recon_tkd, recon_tv, TgvConfig, TkdConfig, TvConfig};
use qsm_pdip::neural::NetworkSpec;
use qsm_pdip::pdip::{InitMethod, PdipConfig, PdipSolver};
use qsm_pdip::phantom::{add_noise, ball_mask, desk_phantom, rasterize, NoiseSpec};
use qsm_pdip::spectral::{DipoleKernel, DipoleOperator};

fn main() -> qsm_pdip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let base: usize = arg(0, "8").parse().unwrap();
    let epochs: usize = arg(1, "25").parse().unwrap();
    let outer: usize = arg(2, "20").parse().unwrap();
    let mus: Vec<f64> = arg(3, "0.01,0.03,0.1").split(',').map(|s| s.parse().unwrap()).collect();
    let init = match arg(4, "tkd").as_str() {
        "zero" => InitMethod::Zero,
        _ => InitMethod::Tkd { threshold: 0.2 },
    };
    let lr: f64 = arg(5, "1e-3").parse().unwrap();
    let baselines = arg(6, "1") == "1";

    let spec = desk_phantom();
    let gt = rasterize(&spec)?;
    let mask = ball_mask(&spec, 20.0);
    let op = DipoleOperator::new(DipoleKernel::for_volume(&gt)?);
    let phi = add_noise(&op.apply(&gt)?, &NoiseSpec { sigma: 0.01, seed: 42 })?;

    if baselines {
        let t = Instant::now();
        let tkd = param_search(&[0.1, 0.15, 0.2, 0.25, 0.3], &gt, &mask, |t| {
            recon_tkd(&phi, &op, &TkdConfig { threshold: t })
        })?;
        println!("tkd  best={} rmse={:.3} {:?} ({:.1?})", tkd.best, tkd.rmse, tkd.table, t.elapsed());
        let t = Instant::now();
        let tv = param_search(&[3e-4, 1e-3, 3e-3, 1e-2], &gt, &mask, |l| {
            Ok(recon_tv(&phi, &op, &TvConfig { lambda: l, ..TvConfig::default() })?.chi)
        })?;
        println!("tv   best={} rmse={:.3} {:?} ({:.1?})", tv.best, tv.rmse, tv.table, t.elapsed());
        let t = Instant::now();
        let tgv = param_search(&[3e-4, 1e-3, 3e-3, 1e-2], &gt, &mask, |a| {
            Ok(recon_tgv(&phi, &op, &TgvConfig::from_alpha1(a))?.result.chi)
        })?;
        println!("tgv  best={} rmse={:.3} {:?} ({:.1?})", tgv.best, tgv.rmse, tgv.table, t.elapsed());
    }

    for &mu in &mus {
        let t = Instant::now();
        let cfg = PdipConfig {
            mu,
            inner_epochs: epochs,
            outer_iters: outer,
            seed: 42,
            init,
            learning_rate: lr,
            network: NetworkSpec { levels: 2, base_channels: base },
            ..PdipConfig::default()
        };
        let solver = PdipSolver::new(phi.clone(), op.clone(), cfg)?;
        let mut state = solver.initial_state()?;
        for _ in 0..outer {
            let h = solver.outer_iteration(&mut state)?;
            let e = qsm_pdip::metrics::rmse_pct(&state.chi, &gt, &mask)?;
            println!("  mu={mu} it={} obj={:.4e} rel={:.2e} rmse={e:.3} ({:.1?})", h.iter, h.objective, h.rel_change, t.elapsed());
        }
    }
    Ok(())
}
