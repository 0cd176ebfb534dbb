//! INI-style run configuration.
//!
//! ```text
//! seed = 42
//!
//! [phantom]
//! dims = 48,48,48
//! sphere = 18,20,24,6,0.5
//! mask_radius = 20
//!
//! [tv]
//! lambda = 1e-3
//! lambda_grid = 1e-4,1e-3,1e-2
//! ```
//!
//! `#` and `;` start comments. Keys before the first section header are
//! global. `sphere` and `cuboid` may repeat; every other key may appear once.
//! Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{TgvConfig, TkdConfig, TvConfig};
use crate::error::{Error, Result};
use crate::pdip::{InitMethod, PdipConfig};
use crate::phantom::{desk_phantom, PhantomSpec, Shape};
use crate::seed::derive_seed;

const GLOBAL: &str = "";

const KNOWN: &[(&str, &[&str])] = &[
    (GLOBAL, &["seed"]),
    (
        "phantom",
        &["dims", "spacing", "background", "sphere", "cuboid", "mask_radius", "preset"],
    ),
    ("noise", &["sigma", "seed"]),
    ("tkd", &["threshold", "threshold_grid"]),
    ("tv", &["lambda", "lambda_grid", "iterations", "tau", "sigma"]),
    (
        "tgv",
        &["alpha1", "alpha1_grid", "alpha0_ratio", "iterations", "tau", "sigma"],
    ),
    (
        "pdip",
        &[
            "mu",
            "mu_grid",
            "patch",
            "stride",
            "outer_iters",
            "inner_epochs",
            "lr",
            "tol",
            "seed",
            "init",
        ],
    ),
    ("net", &["levels", "base_channels"]),
    ("metrics", &["gt", "mask"]),
];

const REPEATABLE: &[&str] = &["sphere", "cuboid"];

/// Raw `section → [(key, value)]` entries, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, Vec<(String, String)>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = GLOBAL.to_string();
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", n + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header `{line}`")))?
                    .trim();
                if !KNOWN.iter().any(|(s, _)| *s == name) || name.is_empty() {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got `{line}`")))?;
            ini.insert(&section, key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(m) => at(m),
                other => other,
            })?;
        }
        Ok(ini)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn insert(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        check_key(section, key)?;
        let entries = self.sections.entry(section.to_string()).or_default();
        if !REPEATABLE.contains(&key) && entries.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("duplicate key `{}`", qualified(section, key))));
        }
        entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    /// Applies `section.key=value`; replaces every existing entry of that key.
    /// A key without a dot addresses the global section.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let (section, key) = path.trim().split_once('.').unwrap_or((GLOBAL, path.trim()));
        check_key(section, key)?;
        if let Some(entries) = self.sections.get_mut(section) {
            entries.retain(|(k, _)| k != key);
        }
        self.insert(section, key, value.trim())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// All entries of a section in file order.
    pub fn entries(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(section)
            .into_iter()
            .flatten()
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.get(section, key)
            .map(|v| parse_value(section, key, v))
            .transpose()
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(section, key)
            .map(|v| parse_list(section, key, v))
            .transpose()
    }

    fn triple<T: FromStr + Copy>(&self, section: &str, key: &str) -> Result<Option<[T; 3]>> {
        self.get(section, key)
            .map(|v| parse_triple_or_scalar(section, key, v))
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn check_key(section: &str, key: &str) -> Result<()> {
    let keys = KNOWN
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, k)| *k)
        .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
    if !keys.contains(&key) {
        return Err(Error::Config(format!(
            "unknown key `{}` (expected one of: {})",
            qualified(section, key),
            keys.join(", ")
        )));
    }
    Ok(())
}

fn parse_value<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse `{}` = `{v}`", qualified(section, key))))
}

fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_value(section, key, p.trim())).collect()
}

/// `n` means `n,n,n`.
fn parse_triple_or_scalar<T: FromStr + Copy>(section: &str, key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = v
        .split(',')
        .map(|p| parse_value(section, key, p.trim()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [a] => Ok([a; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(Error::Config(format!(
            "`{}` needs one or three values, got `{v}`",
            qualified(section, key)
        ))),
    }
}

fn parse_shape(key: &str, v: &str) -> Result<Shape> {
    let xs = parse_list("phantom", key, v)?;
    let shape = match (key, xs.len()) {
        ("sphere", 5) => Shape::Sphere {
            center: [xs[0], xs[1], xs[2]],
            radius: xs[3],
            delta_chi: xs[4],
        },
        ("cuboid", 7) => Shape::Cuboid {
            corner: [xs[0], xs[1], xs[2]],
            size: [xs[3], xs[4], xs[5]],
            delta_chi: xs[6],
        },
        ("sphere", _) => {
            return Err(Error::Config(format!(
                "phantom.sphere needs cx,cy,cz,radius,dchi; got `{v}`"
            )))
        }
        _ => {
            return Err(Error::Config(format!(
                "phantom.cuboid needs x,y,z,sx,sy,sz,dchi; got `{v}`"
            )))
        }
    };
    let extent_ok = match &shape {
        Shape::Sphere { radius, .. } => *radius > 0.0,
        Shape::Cuboid { size, .. } => size.iter().all(|&s| s > 0.0),
    };
    if !extent_ok {
        return Err(Error::Config(format!("phantom.{key} extents must be positive: `{v}`")));
    }
    Ok(shape)
}

/// Default mask radius: 5/12 of the smallest field-of-view extent.
pub fn default_mask_radius(spec: &PhantomSpec) -> f64 {
    (0..3)
        .map(|i| spec.dims[i] as f64 * spec.spacing[i])
        .fold(f64::INFINITY, f64::min)
        * 5.0
        / 12.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub spec: PhantomSpec,
    pub mask_radius: f64,
}

/// Method settings plus optional search grids.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub phantom: Option<PhantomConfig>,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub tkd: TkdConfig,
    pub tkd_grid: Option<Vec<f64>>,
    pub tv: TvConfig,
    pub tv_grid: Option<Vec<f64>>,
    pub tgv: TgvConfig,
    pub tgv_alpha0_ratio: f64,
    pub tgv_grid: Option<Vec<f64>>,
    pub pdip: PdipConfig,
    pub pdip_grid: Option<Vec<f64>>,
    pub gt: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

impl RunConfig {
    /// Builds and validates. `seed_override` replaces the global seed.
    pub fn from_ini(ini: &Ini, seed_override: Option<u64>) -> Result<Self> {
        let seed = match seed_override {
            Some(s) => s,
            None => ini.parsed(GLOBAL, "seed")?.unwrap_or(0),
        };

        let phantom = if ini.has_section("phantom") {
            Some(phantom_config(ini)?)
        } else {
            None
        };

        let noise_sigma = ini.parsed("noise", "sigma")?.unwrap_or(0.0);
        if !(noise_sigma >= 0.0 && f64::is_finite(noise_sigma)) {
            return Err(Error::Config(format!("noise.sigma must be non-negative, got {noise_sigma}")));
        }
        let noise_seed = ini
            .parsed("noise", "seed")?
            .unwrap_or_else(|| derive_seed(seed, "noise"));

        let mut tkd = TkdConfig::default();
        if let Some(t) = ini.parsed("tkd", "threshold")? {
            tkd.threshold = t;
        }
        tkd.validate()?;
        let tkd_grid = ini.list("tkd", "threshold_grid")?;
        if let Some(g) = &tkd_grid {
            for &t in g {
                TkdConfig { threshold: t }.validate()?;
            }
        }

        let mut tv = TvConfig::default();
        if let Some(v) = ini.parsed("tv", "lambda")? {
            tv.lambda = v;
        }
        if let Some(v) = ini.parsed("tv", "iterations")? {
            tv.iterations = v;
        }
        if let Some(v) = ini.parsed("tv", "tau")? {
            tv.tau = v;
        }
        if let Some(v) = ini.parsed("tv", "sigma")? {
            tv.sigma = v;
        }
        tv.validate()?;
        let tv_grid = positive_grid(ini.list("tv", "lambda_grid")?, "tv.lambda_grid")?;

        let tgv_alpha0_ratio: f64 = ini.parsed("tgv", "alpha0_ratio")?.unwrap_or(2.0);
        if !(tgv_alpha0_ratio > 0.0) {
            return Err(Error::Config(format!(
                "tgv.alpha0_ratio must be positive, got {tgv_alpha0_ratio}"
            )));
        }
        let mut tgv = TgvConfig::default();
        if let Some(v) = ini.parsed::<f64>("tgv", "alpha1")? {
            tgv.alpha1 = v;
        }
        tgv.alpha0 = tgv_alpha0_ratio * tgv.alpha1;
        if let Some(v) = ini.parsed("tgv", "iterations")? {
            tgv.iterations = v;
        }
        if let Some(v) = ini.parsed("tgv", "tau")? {
            tgv.tau = v;
        }
        if let Some(v) = ini.parsed("tgv", "sigma")? {
            tgv.sigma = v;
        }
        tgv.validate()?;
        let tgv_grid = positive_grid(ini.list("tgv", "alpha1_grid")?, "tgv.alpha1_grid")?;

        let mut pdip = PdipConfig {
            seed,
            ..PdipConfig::default()
        };
        if let Some(v) = ini.parsed("pdip", "mu")? {
            pdip.mu = v;
        }
        if let Some(v) = ini.triple("pdip", "patch")? {
            pdip.patch = v;
        }
        if let Some(v) = ini.triple("pdip", "stride")? {
            pdip.stride = v;
        }
        if let Some(v) = ini.parsed("pdip", "outer_iters")? {
            pdip.outer_iters = v;
        }
        if let Some(v) = ini.parsed("pdip", "inner_epochs")? {
            pdip.inner_epochs = v;
        }
        if let Some(v) = ini.parsed("pdip", "lr")? {
            pdip.learning_rate = v;
        }
        if let Some(v) = ini.parsed("pdip", "tol")? {
            pdip.tol = v;
        }
        if let Some(v) = ini.parsed("pdip", "seed")? {
            pdip.seed = v;
        }
        if let Some(v) = ini.get("pdip", "init") {
            pdip.init = parse_init(v, tkd.threshold)?;
        }
        if let Some(v) = ini.parsed("net", "levels")? {
            pdip.network.levels = v;
        }
        if let Some(v) = ini.parsed("net", "base_channels")? {
            pdip.network.base_channels = v;
        }
        pdip.validate()?;
        if pdip.stride.contains(&0) {
            return Err(Error::Config("pdip.stride must be positive".into()));
        }
        let pdip_grid = positive_grid(ini.list("pdip", "mu_grid")?, "pdip.mu_grid")?;

        let gt = ini.get("metrics", "gt").map(PathBuf::from);
        let mask = ini.get("metrics", "mask").map(PathBuf::from);

        Ok(Self {
            seed,
            phantom,
            noise_sigma,
            noise_seed,
            tkd,
            tkd_grid,
            tv,
            tv_grid,
            tgv,
            tgv_alpha0_ratio,
            tgv_grid,
            pdip,
            pdip_grid,
            gt,
            mask,
        })
    }

    pub fn phantom(&self) -> Result<&PhantomConfig> {
        self.phantom
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [phantom] section".into()))
    }
}

fn positive_grid(grid: Option<Vec<f64>>, name: &str) -> Result<Option<Vec<f64>>> {
    if let Some(g) = &grid {
        if g.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} values must be positive")));
        }
    }
    Ok(grid)
}

/// `zero`, `tkd` (uses the [tkd] threshold) or `tkd:<t>`.
fn parse_init(v: &str, tkd_threshold: f64) -> Result<InitMethod> {
    match v {
        "zero" => Ok(InitMethod::Zero),
        "tkd" => Ok(InitMethod::Tkd {
            threshold: tkd_threshold,
        }),
        other => match other.strip_prefix("tkd:") {
            Some(t) => Ok(InitMethod::Tkd {
                threshold: parse_value("pdip", "init", t)?,
            }),
            None => Err(Error::Config(format!(
                "pdip.init must be `zero`, `tkd` or `tkd:<threshold>`, got `{v}`"
            ))),
        },
    }
}

fn phantom_config(ini: &Ini) -> Result<PhantomConfig> {
    let mut spec = match ini.get("phantom", "preset") {
        None => PhantomSpec::new([0; 3]),
        Some("desk") => desk_phantom(),
        Some(p) => return Err(Error::Config(format!("unknown phantom preset `{p}`"))),
    };
    if let Some(d) = ini.triple::<usize>("phantom", "dims")? {
        spec.dims = d;
    }
    if spec.dims.contains(&0) {
        return Err(Error::Config("phantom.dims is required and must be positive".into()));
    }
    if let Some(s) = ini.triple::<f64>("phantom", "spacing")? {
        if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("phantom.spacing must be positive, got {s:?}")));
        }
        spec.spacing = s;
    }
    if let Some(b) = ini.parsed("phantom", "background")? {
        spec.background = b;
    }
    for (key, v) in ini.entries("phantom") {
        if REPEATABLE.contains(&key) {
            spec.shapes.push(parse_shape(key, v)?);
        }
    }
    let mask_radius = match ini.parsed::<f64>("phantom", "mask_radius")? {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(Error::Config(format!("phantom.mask_radius must be positive, got {r}"))),
        None => default_mask_radius(&spec),
    };
    Ok(PhantomConfig { spec, mask_radius })
}
