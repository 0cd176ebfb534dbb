//! Command-line front end: phantom generation, forward simulation,
//! reconstruction, metrics and slice export.
//!
//! Exit codes: 0 on success, 1 for data and runtime errors, 2 for usage and
//! configuration errors.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{param_search, recon_tgv, recon_tkd, recon_tv, TgvConfig, TkdConfig, TvConfig};
use crate::error::{Error, Result};
use crate::metrics::{reports_to_csv, MetricReport};
use crate::pdip::{history_csv, PdipConfig, PdipSolver};
use crate::phantom::{add_noise, ball_mask, rasterize, NoiseSpec};
use crate::seed::GENERATOR;
use crate::spectral::{DipoleKernel, DipoleOperator};
use crate::volume::{export_slice, load_volume, save_volume, Axis, Mask, Volume};

pub use config::{Ini, RunConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qsm-pdip", version, about = "Susceptibility mapping with a patch-based deep image prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// INI run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut ini = match &self.config {
            Some(path) => Ini::load(path)?,
            None => Ini::default(),
        };
        for s in &self.overrides {
            ini.set(s)?;
        }
        RunConfig::from_ini(&ini, self.seed)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize the [phantom] section into a χ volume and a mask.
    Phantom {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output χ volume (writes `<out>.hdr` and `<out>.f32`).
        #[arg(long)]
        out: PathBuf,
        /// Output mask volume; defaults to `<out>_mask`.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Simulate a field map: dipole forward model plus Gaussian noise.
    Forward {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input χ volume.
        #[arg(long)]
        input: PathBuf,
        /// Noise standard deviation; overrides `noise.sigma`.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct χ from a field map.
    Recon {
        method: Method,
        #[command(flatten)]
        config: ConfigArgs,
        /// Input field map.
        #[arg(long)]
        input: PathBuf,
        /// Ground truth for parameter search; overrides `metrics.gt`.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Mask for parameter search; overrides `metrics.mask`.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions against a ground truth inside a mask.
    Metrics {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Reconstructions as `label=path` or `path` (label = file name).
        #[arg(required = true)]
        recs: Vec<String>,
    },
    /// Export one slice as an 8-bit PGM image.
    Slice {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "z")]
        axis: Axis,
        #[arg(long)]
        index: usize,
        /// Display window `lo,hi`.
        #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
        window: (f64, f64),
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tkd,
    Tv,
    Tgv,
    Pdip,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tkd => "tkd",
            Method::Tv => "tv",
            Method::Tgv => "tgv",
            Method::Pdip => "pdip",
        }
    }
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad window bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad window bound `{hi}`"))?;
    if !(lo < hi) {
        return Err(format!("window needs lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// `<path><suffix>` without touching the extension logic of volume paths.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save(v: &Volume, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_volume(v, path)
}

/// Run metadata: generator name plus `key=value` lines.
fn write_run_meta(out: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = format!("generator={GENERATOR}\n");
    for (k, v) in entries {
        let _ = writeln!(text, "{k}={v}");
    }
    write_text(&sidecar(out, ".run"), &text)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom {
            config,
            out,
            mask_out,
        } => cmd_phantom(&config.load()?, &out, mask_out.as_deref()),
        Command::Forward {
            config,
            input,
            sigma,
            out,
        } => {
            let mut cfg = config.load()?;
            if let Some(s) = sigma {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::Config(format!("sigma must be non-negative, got {s}")));
                }
                cfg.noise_sigma = s;
            }
            cmd_forward(&cfg, &input, &out)
        }
        Command::Recon {
            method,
            config,
            input,
            gt,
            mask,
            out,
        } => {
            let mut cfg = config.load()?;
            if gt.is_some() {
                cfg.gt = gt;
            }
            if mask.is_some() {
                cfg.mask = mask;
            }
            cmd_recon(method, &cfg, &input, &out)
        }
        Command::Metrics {
            gt,
            mask,
            out,
            recs,
        } => cmd_metrics(&recs, &gt, &mask, &out),
        Command::Slice {
            input,
            axis,
            index,
            window,
            out,
        } => export_slice(&load_volume(&input)?, axis, index, window, &out),
    }
}

pub fn cmd_phantom(cfg: &RunConfig, out: &Path, mask_out: Option<&Path>) -> Result<()> {
    let p = cfg.phantom()?;
    let chi = rasterize(&p.spec)?;
    let mask = ball_mask(&p.spec, p.mask_radius).to_volume().with_spacing(p.spec.spacing);
    let mask_path = mask_out.map_or_else(|| sidecar(out, "_mask"), Path::to_path_buf);
    save(&chi, out)?;
    save(&mask, &mask_path)
}

pub fn cmd_forward(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let chi = load_volume(input)?;
    let kernel = DipoleKernel::for_volume(&chi)?;
    let op = DipoleOperator::new(kernel);
    let noise = NoiseSpec {
        sigma: cfg.noise_sigma,
        seed: cfg.noise_seed,
    };
    let phi = add_noise(&op.apply(&chi)?, &noise)?;
    save(&phi, out)?;
    write_run_meta(
        out,
        &[
            ("noise_sigma", format!("{:e}", noise.sigma)),
            ("noise_seed", noise.seed.to_string()),
        ],
    )
}

/// Reference data for a parameter search, when configured.
fn reference(cfg: &RunConfig) -> Result<Option<(Volume, Mask)>> {
    match (&cfg.gt, &cfg.mask) {
        (Some(gt), Some(mask)) => {
            let gt = load_volume(gt)?;
            let mask = Mask::from_volume(&load_volume(mask)?);
            crate::error::check_dims(gt.dims(), mask.dims())?;
            Ok(Some((gt, mask)))
        }
        (None, None) => Ok(None),
        _ => Err(Error::Config("parameter search needs both a ground truth and a mask".into())),
    }
}

type History = String;

/// Either a single run at `fixed` or, with a grid and reference data, the
/// best run over the grid. Returns the map, its history CSV and the
/// search table CSV if a search ran.
fn searched(
    grid: Option<&[f64]>,
    fixed: f64,
    name: &str,
    reference: Option<&(Volume, Mask)>,
    mut recon: impl FnMut(f64) -> Result<(Volume, Option<History>)>,
) -> Result<(Volume, Option<History>, Option<String>)> {
    let (Some(grid), Some((gt, mask))) = (grid, reference) else {
        let (chi, hist) = recon(fixed)?;
        return Ok((chi, hist, None));
    };
    let mut histories: Vec<(f64, Option<History>)> = Vec::new();
    let outcome = param_search(grid, gt, mask, |p| {
        let (chi, hist) = recon(p)?;
        histories.push((p, hist));
        Ok(chi)
    })?;
    let mut table = format!("{name},rmse\n");
    for (p, e) in &outcome.table {
        let _ = writeln!(table, "{p:e},{e:.6}");
    }
    let hist = histories
        .into_iter()
        .find(|(p, _)| *p == outcome.best)
        .and_then(|(_, h)| h);
    Ok((outcome.map, hist, Some(table)))
}

fn baseline_history(samples: &[(usize, f64)]) -> String {
    let mut out = String::from("iter,objective\n");
    for (i, v) in samples {
        let _ = writeln!(out, "{i},{v:e}");
    }
    out
}

pub fn cmd_recon(method: Method, cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let phi = load_volume(input)?;
    let op = DipoleOperator::new(DipoleKernel::for_volume(&phi)?);
    let reference = reference(cfg)?;
    let reference = reference.as_ref();

    let (chi, history, table) = match method {
        Method::Tkd => searched(cfg.tkd_grid.as_deref(), cfg.tkd.threshold, "threshold", reference, |t| {
            Ok((recon_tkd(&phi, &op, &TkdConfig { threshold: t })?, None))
        })?,
        Method::Tv => searched(cfg.tv_grid.as_deref(), cfg.tv.lambda, "lambda", reference, |l| {
            let o = recon_tv(&phi, &op, &TvConfig { lambda: l, ..cfg.tv })?;
            Ok((o.chi, Some(baseline_history(&o.history))))
        })?,
        Method::Tgv => searched(cfg.tgv_grid.as_deref(), cfg.tgv.alpha1, "alpha1", reference, |a| {
            let c = TgvConfig {
                alpha1: a,
                alpha0: cfg.tgv_alpha0_ratio * a,
                ..cfg.tgv
            };
            let o = recon_tgv(&phi, &op, &c)?;
            Ok((o.result.chi, Some(baseline_history(&o.result.history))))
        })?,
        Method::Pdip => searched(cfg.pdip_grid.as_deref(), cfg.pdip.mu, "mu", reference, |mu| {
            let c = PdipConfig { mu, ..cfg.pdip.clone() };
            let o = PdipSolver::new(phi.clone(), op.clone(), c)?.run()?;
            Ok((o.chi, Some(history_csv(&o.history))))
        })?,
    };

    save(&chi, out)?;
    if let Some(h) = history {
        write_text(&sidecar(out, ".history.csv"), &h)?;
    }
    if let Some(t) = table {
        write_text(&sidecar(out, ".search.csv"), &t)?;
    }
    if method == Method::Pdip {
        write_run_meta(out, &[("seed", cfg.pdip.seed.to_string())])?;
    }
    Ok(())
}

/// Splits `label=path`; a bare path is labeled with its file name.
fn labeled(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let label = path
                .file_name()
                .map_or_else(|| arg.to_string(), |n| n.to_string_lossy().into_owned());
            (label, path)
        }
    }
}

pub fn cmd_metrics(recs: &[String], gt: &Path, mask: &Path, out: &Path) -> Result<()> {
    let gt = load_volume(gt)?;
    let mask = Mask::from_volume(&load_volume(mask)?);
    let reports = recs
        .iter()
        .map(|arg| {
            let (label, path) = labeled(arg);
            MetricReport::evaluate(label, &load_volume(&path)?, &gt, &mask)
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(out, &reports_to_csv(&reports))
}
