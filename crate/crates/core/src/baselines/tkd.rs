use crate::error::{check_dims, Error, Result};
use crate::spectral::DipoleOperator;
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TkdConfig {
    pub threshold: f64,
}

impl Default for TkdConfig {
    fn default() -> Self {
        Self { threshold: 0.2 }
    }
}

impl TkdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 2.0 / 3.0) {
            return Err(Error::Config(format!(
                "TKD threshold must lie in (0, 2/3], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// `χ̂ = Φ̂ / d_t` with `d_t = d` where `|d| ≥ t`, `t·sign(d)` elsewhere
/// (`sign(0) = +1`); the DC bin is zeroed.
pub fn recon_tkd(phi: &Volume, op: &DipoleOperator, cfg: &TkdConfig) -> Result<Volume> {
    cfg.validate()?;
    check_dims(phi.dims(), op.dims())?;
    let t = cfg.threshold;
    let mut buf = op.fft().forward_real(phi.data());
    for (c, &d) in buf.iter_mut().zip(op.kernel().data()) {
        let dt = if d.abs() >= t {
            d
        } else if d < 0.0 {
            -t
        } else {
            t
        };
        *c /= dt;
    }
    buf[0] = Default::default();
    op.fft().inverse(&mut buf);
    phi.like(buf.into_iter().map(|c| c.re).collect())
}
