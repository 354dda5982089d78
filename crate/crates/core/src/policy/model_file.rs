//! Binary model file: little-endian header (magic `DXPM`, version, architecture,
//! normalization stats, extra head parameters) followed by row-major `f32`
//! weight and bias blocks, layer by layer.

use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::nn::Mlp;

pub const MAGIC: &[u8; 4] = b"DXPM";
pub const MODEL_VERSION: (u16, u16) = (1, 0);
pub const ACTIVATION_TANH: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum HeadKind {
    /// Tanh-scaled regression outputs plus a sigmoid terminate output.
    BehaviorCloning = 1,
    /// Gaussian mean with a learned per-dimension log-std in `extra`.
    Gaussian = 2,
    /// Plain linear outputs.
    Linear = 3,
}

impl HeadKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::BehaviorCloning),
            2 => Ok(Self::Gaussian),
            3 => Ok(Self::Linear),
            _ => Err(Error::ModelFile(format!("unknown head kind {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub head: HeadKind,
    pub net: Mlp,
    /// Input standardization; empty when the model takes raw inputs.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub extra: Vec<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: impl IntoIterator<Item = f64>) {
    for v in vs {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::ModelFile(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::ModelFile("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_VERSION.0.to_le_bytes());
        out.extend_from_slice(&MODEL_VERSION.1.to_le_bytes());
        out.push(self.head as u8);
        out.push(ACTIVATION_TANH);
        out.extend_from_slice(&[0, 0]);
        let sizes = self.net.sizes();
        put_u32(&mut out, sizes.len());
        for &s in sizes {
            put_u32(&mut out, s);
        }
        put_u32(&mut out, self.mean.len());
        put_f32s(&mut out, self.mean.iter().copied());
        put_f32s(&mut out, self.std.iter().copied());
        put_u32(&mut out, self.extra.len());
        put_f32s(&mut out, self.extra.iter().copied());
        let p = self.net.params();
        for l in 0..self.net.layers() {
            let (w, b) = self.net.offsets(l);
            let (i, o) = (sizes[l], sizes[l + 1]);
            // stored column-major in memory, row-major on disk
            put_f32s(&mut out, (0..o).flat_map(|r| (0..i).map(move |c| p[w + r + c * o])));
            put_f32s(&mut out, p[b..b + o].iter().copied());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::ModelFile("bad magic (not a DXPM model)".into()));
        }
        let (major, _minor) = (r.u16()?, r.u16()?);
        if major != MODEL_VERSION.0 {
            return Err(Error::FormatVersion {
                found: format!("{major}"),
                expected: MODEL_VERSION.0 as u32,
            });
        }
        let head = HeadKind::from_u8(r.u8()?)?;
        let act = r.u8()?;
        if act != ACTIVATION_TANH {
            return Err(Error::ModelFile(format!("unknown activation {act}")));
        }
        r.take(2)?;
        let n = r.u32()?;
        if !(2..=64).contains(&n) {
            return Err(Error::ModelFile(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 1 << 20) {
            return Err(Error::ModelFile(format!("bad layer widths {sizes:?}")));
        }
        let d = r.u32()?;
        if d != 0 && d != sizes[0] {
            return Err(Error::ModelFile(format!("stats width {d} does not match input width {}", sizes[0])));
        }
        let mean = r.f32s(d)?;
        let std = r.f32s(d)?;
        let e = r.u32()?;
        let extra = r.f32s(e)?;
        let mut net = Mlp::zeros(&sizes);
        for l in 0..sizes.len() - 1 {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let w = r.f32s(i * o)?;
            let b = r.f32s(o)?;
            let (w_off, b_off) = net.offsets(l);
            let p = net.params_mut();
            for row in 0..o {
                for c in 0..i {
                    p[w_off + row + c * o] = w[row * i + c];
                }
            }
            p[b_off..b_off + o].copy_from_slice(&b);
        }
        if r.pos != buf.len() {
            return Err(Error::ModelFile(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let all = net.params().iter().chain(&mean).chain(&std).chain(&extra);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::ModelFile("non-finite value".into()));
        }
        Ok(Self { head, net, mean, std, extra })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        Self::from_bytes(&bytes)
    }

    /// Rounds every stored value to `f32`, so the model equals its reloaded file.
    pub fn quantize(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.net.params_mut().iter_mut().for_each(q);
        self.mean.iter_mut().for_each(q);
        self.std.iter_mut().for_each(q);
        self.extra.iter_mut().for_each(q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ModelFile {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = ModelFile {
            head: HeadKind::Gaussian,
            net: Mlp::init(&[4, 3, 2], 1.0, &mut rng),
            mean: vec![0.1, 0.2, 0.3, 0.4],
            std: vec![1.0, 2.0, 3.0, 4.0],
            extra: vec![-0.5, -0.7],
        };
        m.quantize();
        m
    }

    #[test]
    fn round_trip_is_exact_after_quantization() {
        let m = sample();
        assert_eq!(ModelFile::from_bytes(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelFile::from_bytes(&bad).is_err());
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(ModelFile::from_bytes(&longer).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(ModelFile::from_bytes(&version), Err(Error::FormatVersion { .. })));
    }
}
