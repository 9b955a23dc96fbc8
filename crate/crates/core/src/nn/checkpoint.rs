//! Versioned binary container for parameters, optimiser moments and RNG
//! state.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   "ECGCKPT\0"
//! version u32
//! n_arr   u32, then per array: name (u32 len + utf8), rank u32, dims u64…,
//!                              len u64, f64 bit patterns…
//! n_scal  u32, then per scalar: name (u32 len + utf8), u64
//! ```

use std::io::{self, Read};

use thiserror::Error;

const MAGIC: &[u8; 8] = b"ECGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint entry {0:?} missing")]
    Missing(String),
    #[error("checkpoint entry {name:?} has {got} values, expected {expected}")]
    Length { name: String, expected: usize, got: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub arrays: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub scalars: Vec<(String, u64)>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

impl Checkpoint {
    pub fn push_array(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[f64]) {
        self.arrays.push((name.into(), shape, data.to_vec()));
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: u64) {
        self.scalars.push((name.into(), value));
    }

    pub fn array(&self, name: &str) -> Result<&[f64], CheckpointError> {
        self.arrays
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, d)| d.as_slice())
            .ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    /// Copies a stored array into `dst`, checking the length.
    pub fn restore_into(&self, name: &str, dst: &mut [f64]) -> Result<(), CheckpointError> {
        let src = self.array(name)?;
        if src.len() != dst.len() {
            return Err(CheckpointError::Length {
                name: name.into(),
                expected: dst.len(),
                got: src.len(),
            });
        }
        dst.copy_from_slice(src);
        Ok(())
    }

    pub fn scalar(&self, name: &str) -> Result<u64, CheckpointError> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, shape, data) in &self.arrays {
            put_str(&mut out, name);
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.scalars.len() as u32).to_le_bytes());
        for (name, v) in &self.scalars {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut ck = Checkpoint::default();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len = r.u64()? as usize;
            if shape.iter().product::<usize>() != len {
                return Err(CheckpointError::Corrupt(format!("{name}: shape/length disagree")));
            }
            let data = (0..len).map(|_| r.u64().map(f64::from_bits)).collect::<Result<Vec<_>, _>>()?;
            ck.arrays.push((name, shape, data));
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            ck.scalars.push((name, r.u64()?));
        }
        if !r.buf.is_empty() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(ck)
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(
            data in prop::collection::vec(any::<f64>(), 0..64),
            scalar in any::<u64>(),
        ) {
            let mut ck = Checkpoint::default();
            ck.push_array("layer0", vec![data.len()], &data);
            ck.push_scalar("step", scalar);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back.array("layer0").unwrap()), bits(&data));
            prop_assert_eq!(back.scalar("step").unwrap(), scalar);
            prop_assert_eq!(back.to_bytes(), ck.to_bytes());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(
            Checkpoint::from_bytes(b"XXXXXXXX\x01\0\0\0"),
            Err(CheckpointError::BadMagic)
        ));
        let mut bytes = Checkpoint::default().to_bytes();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Version(9))));
    }
}
