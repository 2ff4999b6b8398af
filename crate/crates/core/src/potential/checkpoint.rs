//! Checkpoint layout: a text header terminated by an empty line, then the
//! parameter vector as raw little-endian `f64`.
//!
//! ```text
//! EBM-CHECKPOINT
//! version=1
//! spec=input=2;seed=7;layers=dense(64),lrelu(0.05),...
//! seed=7
//! params=4417
//!
//! <4417 x 8 bytes>
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Potential, PotentialSpec};
use crate::error::{Error, Result};
use crate::numerics::ParametricEnergy;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "EBM-CHECKPOINT";

pub fn write_checkpoint<W: Write>(pot: &Potential, mut w: W) -> Result<()> {
    let io = |e| Error::io("<checkpoint stream>", e);
    let spec = pot.spec();
    write!(
        w,
        "{MAGIC}\nversion={CHECKPOINT_VERSION}\nspec={spec}\nseed={}\nparams={}\n\n",
        spec.seed,
        pot.num_params()
    )
    .map_err(io)?;
    let mut bytes = Vec::with_capacity(pot.num_params() * 8);
    for v in pot.params() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R, origin: &Path) -> Result<Potential> {
    let bad = |reason: String| Error::Format {
        path: origin.to_path_buf(),
        reason,
    };
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(origin, e))?;
    let split = buf
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("missing header terminator".into()))?;
    let header =
        std::str::from_utf8(&buf[..split]).map_err(|_| bad("header is not utf-8".into()))?;
    let body = &buf[split + 2..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a checkpoint file".into()));
    }
    let (mut version, mut spec, mut seed, mut params) = (None, None, None, None);
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        match k {
            "version" => version = v.parse::<u32>().ok(),
            "spec" => spec = Some(v.parse::<PotentialSpec>()?),
            "seed" => seed = v.parse::<u64>().ok(),
            "params" => params = v.parse::<usize>().ok(),
            _ => return Err(bad(format!("unknown header key `{k}`"))),
        }
    }
    if version != Some(CHECKPOINT_VERSION) {
        return Err(bad(format!("unsupported version {version:?}")));
    }
    let spec = spec.ok_or_else(|| bad("missing spec".into()))?;
    let params = params.ok_or_else(|| bad("missing params".into()))?;
    if seed != Some(spec.seed) {
        return Err(bad("seed disagrees with spec".into()));
    }
    if body.len() != params * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            params * 8,
            body.len()
        )));
    }
    let theta = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Potential::with_params(spec, theta)
}

pub fn save_checkpoint(pot: &Potential, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(pot, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<Potential> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let pot = Potential::build(PotentialSpec::toy_mlp(2, 11)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&pot, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.spec(), pot.spec());
        assert!(back
            .params()
            .iter()
            .zip(pot.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_body_is_rejected() {
        let pot = Potential::build(PotentialSpec::toy_mlp(2, 11)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&pot, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        let err = read_checkpoint(&buf[..], Path::new("mem")).unwrap_err();
        assert_eq!(err.class(), "format");
    }
}
