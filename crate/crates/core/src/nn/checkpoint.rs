//! Binary checkpoint: parameters plus optimizer and loop state.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SCEP0001" | u32 version | [u8; 32] architecture hash (SHA-256 of the
//! canonical architecture text) | u32 text length | text bytes | u64 epoch |
//! u64 rng seed | f64 norm scale | f64 best validation loss | u64 adam step |
//! f32 lr, beta1, beta2, eps | u64 parameter count | f32 params[n] | f32 m[n] |
//! f32 v[n]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::adam::Adam;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SCEP0001";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Canonical architecture description the parameters belong to.
    pub arch: String,
    /// Number of completed epochs.
    pub epoch: u64,
    /// Seed the per-epoch shuffles are derived from.
    pub rng_seed: u64,
    pub norm_scale: f64,
    pub best_val_loss: f64,
    pub params: Vec<f32>,
    pub adam: Adam,
}

fn arch_digest(arch: &str) -> [u8; 32] {
    let d = Sha256::digest(arch.as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&d);
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn arch_hash(&self) -> String {
        hex(&arch_digest(&self.arch))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.params.len();
        if self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(Error::shape("optimizer state does not match parameters"));
        }
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&arch_digest(&self.arch))?;
        w.write_all(&(self.arch.len() as u32).to_le_bytes())?;
        w.write_all(self.arch.as_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&self.rng_seed.to_le_bytes())?;
        w.write_all(&self.norm_scale.to_le_bytes())?;
        w.write_all(&self.best_val_loss.to_le_bytes())?;
        w.write_all(&self.adam.step.to_le_bytes())?;
        for v in [self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(n as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(n * 4);
        for arr in [&self.params, &self.adam.m, &self.adam.v] {
            buf.clear();
            for v in arr.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a checkpoint; when `expected_arch` is given the stored
    /// architecture must match it exactly.
    pub fn read_from<R: Read>(mut r: R, expected_arch: Option<&str>) -> Result<Self> {
        let mut magic = [0u8; 8];
        take(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(take_n::<4, _>(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("checkpoint version {version}")));
        }
        let digest: [u8; 32] = take_n(&mut r)?;
        let len = u32::from_le_bytes(take_n::<4, _>(&mut r)?) as usize;
        if len > 1 << 16 {
            return Err(Error::Format("architecture text too long".into()));
        }
        let mut text = vec![0u8; len];
        take(&mut r, &mut text)?;
        let arch = String::from_utf8(text)
            .map_err(|_| Error::Format("architecture text is not UTF-8".into()))?;
        if arch_digest(&arch) != digest {
            return Err(Error::Format("architecture hash does not match its text".into()));
        }
        if let Some(expected) = expected_arch {
            if expected != arch {
                return Err(Error::ArchMismatch {
                    expected: hex(&arch_digest(expected)),
                    found: hex(&digest),
                });
            }
        }
        let epoch = u64::from_le_bytes(take_n(&mut r)?);
        let rng_seed = u64::from_le_bytes(take_n(&mut r)?);
        let norm_scale = f64::from_le_bytes(take_n(&mut r)?);
        let best_val_loss = f64::from_le_bytes(take_n(&mut r)?);
        let step = u64::from_le_bytes(take_n(&mut r)?);
        let mut hyper = [0f32; 4];
        for h in &mut hyper {
            *h = f32::from_le_bytes(take_n(&mut r)?);
        }
        let n = u64::from_le_bytes(take_n(&mut r)?) as usize;
        if n > 1 << 28 {
            return Err(Error::Format(format!("implausible parameter count {n}")));
        }
        let read_vec = |r: &mut R| -> Result<Vec<f32>> {
            let mut bytes = vec![0u8; n * 4];
            take(r, &mut bytes)?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let params = read_vec(&mut r)?;
        let m = read_vec(&mut r)?;
        let v = read_vec(&mut r)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            arch,
            epoch,
            rng_seed,
            norm_scale,
            best_val_loss,
            params,
            adam: Adam {
                lr: hyper[0],
                beta1: hyper[1],
                beta2: hyper[2],
                eps: hyper[3],
                m,
                v,
                step,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>, expected_arch: Option<&str>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), expected_arch)
    }
}

fn take<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn take_n<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    take(r, &mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut adam = Adam::new(5, 1e-3);
        let mut params = vec![0.1, -0.2, 0.3, 0.4, -0.5];
        adam.step(&mut params, &[0.5, -1.0, 0.0, 2.0, 1e-3]).unwrap();
        Checkpoint {
            arch: "S=4\nK=2\n".into(),
            epoch: 3,
            rng_seed: 42,
            norm_scale: 1.75,
            best_val_loss: 0.125,
            params,
            adam,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = sample();
        let mut a = Vec::new();
        ck.write_to(&mut a).unwrap();
        let back = Checkpoint::read_from(a.as_slice(), Some("S=4\nK=2\n")).unwrap();
        assert_eq!(back, ck);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_architecture_is_refused() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        let err = Checkpoint::read_from(bytes.as_slice(), Some("S=4\nK=4\n")).unwrap_err();
        assert!(matches!(err, Error::ArchMismatch { .. }));
    }

    #[test]
    fn restored_optimizer_takes_the_same_next_step() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let mut back = Checkpoint::read_from(bytes.as_slice(), None).unwrap();
        let mut orig = ck.clone();
        let g = [0.3, 0.3, -0.1, 0.0, 1.0];
        orig.adam.step(&mut orig.params, &g).unwrap();
        back.adam.step(&mut back.params, &g).unwrap();
        assert_eq!(orig.params, back.params);
    }

    #[test]
    fn corrupt_or_truncated_files_fail() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3], None).is_err());
        let mut bad = bytes.clone();
        bad[20] ^= 0xff;
        assert!(Checkpoint::read_from(bad.as_slice(), None).is_err());
    }
}
