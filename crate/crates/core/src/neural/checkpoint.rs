//! Parameter checkpoints: a text header terminated by `end`, then every
//! tensor as little-endian f64 in layer order (weights, then bias).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{NetworkSpec, Parameters};

const MAGIC: &str = "qsm-pdip-parameters v1";

pub fn save_parameters(params: &Parameters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!(
        "{MAGIC}\nlevels={}\nbase_channels={}\ntensors={}\nvalues={}\nend\n",
        params.spec.levels,
        params.spec.base_channels,
        params.tensors.len(),
        params.len()
    )
    .into_bytes();
    for v in params.tensors.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_parameters(path: impl AsRef<Path>) -> Result<Parameters> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Header {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let marker = b"\nend\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end marker"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
    let payload = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a parameter checkpoint"));
    }
    let mut levels = None;
    let mut base = None;
    for line in lines {
        let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let v: usize = v.parse().map_err(|_| bad("non-integer header value"))?;
        match k {
            "levels" => levels = Some(v),
            "base_channels" => base = Some(v),
            "tensors" | "values" => {}
            _ => return Err(bad("unknown header key")),
        }
    }
    let spec = NetworkSpec {
        levels: levels.ok_or_else(|| bad("missing levels"))?,
        base_channels: base.ok_or_else(|| bad("missing base_channels"))?,
    };
    spec.validate()?;
    let mut params = Parameters::zeros(spec);
    if payload.len() != 8 * params.len() {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: 8 * params.len() as u64,
            found: payload.len() as u64,
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for v in params.tensors.iter_mut().flatten() {
        *v = values.next().expect("length checked");
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_weights;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_weights(NetworkSpec::default(), 3).unwrap();
        let path = dir.path().join("theta.bin");
        save_parameters(&p, &path).unwrap();
        assert_eq!(load_parameters(&path).unwrap(), p);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_weights(NetworkSpec::default(), 3).unwrap();
        let path = dir.path().join("theta.bin");
        save_parameters(&p, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_parameters(&path), Err(Error::SizeMismatch { .. })));
    }
}
