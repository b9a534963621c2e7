//! Binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "DPPO"                      magic
//! u32                         version (1)
//! u32 input_dim
//! u32 trunk_len, u32 x trunk_len widths
//! u32 action_count
//! u32 activation (0 = tanh, 1 = relu)
//! u64 n, f64 x n              parameters in declared order
//! -- optional Adam block, present iff bytes remain --
//! u64 step_count, f64 beta1, f64 beta2, f64 epsilon
//! u64 n, f64 x n              first moment
//! u64 n, f64 x n              second moment
//! ```

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::network::{Activation, NetworkArchitecture, ParameterVector};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DPPO";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterVector,
    pub adam: Option<AdamState>,
}

pub fn encode(params: &ParameterVector, adam: Option<&AdamState>) -> Vec<u8> {
    let arch = params.architecture();
    let mut out = Vec::with_capacity(64 + 8 * params.len() * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arch.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(arch.trunk().len() as u32).to_le_bytes());
    for &w in arch.trunk() {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(arch.action_count() as u32).to_le_bytes());
    out.extend_from_slice(&arch.activation().code().to_le_bytes());
    put_floats(&mut out, params.values());
    if let Some(a) = adam {
        out.extend_from_slice(&a.step_count.to_le_bytes());
        for x in [a.beta1, a.beta2, a.epsilon] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        put_floats(&mut out, &a.first_moment);
        put_floats(&mut out, &a.second_moment);
    }
    out
}

fn put_floats(out: &mut Vec<u8>, xs: &[f64]) {
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn floats(&mut self, what: &str, expected: usize) -> Result<Vec<f64>> {
        let at = self.pos;
        let n = self.u64(what)?;
        if n != expected as u64 {
            return Err(Error::Format {
                offset: at,
                detail: format!("{what}: count {n} does not match expected {expected}"),
            });
        }
        (0..expected).map(|_| self.f64(what)).collect()
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: "bad magic bytes (expected \"DPPO\")".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let input_dim = r.u32("input_dim")? as usize;
    let trunk_len = r.u32("trunk length")? as usize;
    let trunk = (0..trunk_len)
        .map(|_| r.u32("trunk width").map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let action_count = r.u32("action_count")? as usize;
    let act_at = r.pos;
    let code = r.u32("activation")?;
    let activation = Activation::from_code(code).ok_or_else(|| Error::Format {
        offset: act_at,
        detail: format!("unknown activation code {code}"),
    })?;
    let arch = NetworkArchitecture::new(input_dim, trunk, action_count, activation).map_err(|e| {
        Error::Format {
            offset: 8,
            detail: e.to_string(),
        }
    })?;
    let values_at = r.pos;
    let values = r.floats("parameters", arch.parameter_count())?;
    let params = ParameterVector::from_values(arch, values).map_err(|e| Error::Format {
        offset: values_at,
        detail: e.to_string(),
    })?;

    let adam = if r.remaining() == 0 {
        None
    } else {
        let step_count = r.u64("adam step count")?;
        let beta1 = r.f64("adam beta1")?;
        let beta2 = r.f64("adam beta2")?;
        let epsilon = r.f64("adam epsilon")?;
        let first_moment = r.floats("adam first moment", params.len())?;
        let second_moment = r.floats("adam second moment", params.len())?;
        Some(AdamState {
            first_moment,
            second_moment,
            step_count,
            beta1,
            beta2,
            epsilon,
        })
    };
    if r.remaining() != 0 {
        return Err(Error::Format {
            offset: r.pos,
            detail: format!("{} trailing bytes", r.remaining()),
        });
    }
    Ok(Checkpoint { params, adam })
}

/// Writes atomically: the file at `path` is either the old or the new checkpoint.
pub fn save_checkpoint(path: &Path, params: &ParameterVector, adam: Option<&AdamState>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(params, adam))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint and rejects it unless its architecture equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &NetworkArchitecture) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.params.architecture() != expected {
        return Err(Error::Format {
            offset: 8,
            detail: format!(
                "architecture mismatch: file has {}, expected {}",
                ckpt.params.architecture(),
                expected
            ),
        });
    }
    Ok(ckpt)
}
