//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "MRGM" | u32 version | u64 graph digest
//! config: u32 n | u8 decoder | f64 tau | u32 sinkhorn_iters | f64 lambda
//!         | u32 sw_projections | u32 batch_size | u32 epochs
//!         | f64 learning_rate | u64 seed
//!         | u32 len, u32 widths… (encoder) | u32 len, u32 widths… (decoder)
//! u32 parameter count
//! per parameter: u32 name length | name (UTF-8) | u32 rank | u32 dims… | f64 values…
//! optimizer: f64 lr | f64 beta1 | f64 beta2 | f64 eps | u64 t
//!            | per parameter: f64 m… | f64 u…
//! ```

use std::path::Path;

use reorder_autodiff::Tensor;

use crate::config::{Architecture, DecoderKind, ModelConfig};
use crate::net::{Model, Param};
use crate::optim::Adamax;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRGM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub graph_digest: u64,
    pub model: Model,
    pub optimizer: Adamax,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
    fn widths(&mut self, w: &[usize]) -> Result<()> {
        self.u32(w.len())?;
        w.iter().try_for_each(|&x| self.u32(x))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {k} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let raw = self.take(k.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn widths(&mut self) -> Result<Vec<usize>> {
        let k = self.u32()?;
        (0..k).map(|_| self.u32()).collect()
    }
}

impl Checkpoint {
    pub fn new(graph_digest: u64, model: Model, optimizer: Adamax) -> Self {
        Self {
            graph_digest,
            model,
            optimizer,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::with_capacity(16 * self.model.param_count() + 1024));
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize)?;
        w.u64(self.graph_digest);

        let c = self.model.config();
        w.u32(c.n)?;
        w.u8(c.decoder.code());
        w.f64(c.tau);
        w.u32(c.sinkhorn_iters)?;
        w.f64(c.lambda);
        w.u32(c.sw_projections)?;
        w.u32(c.batch_size)?;
        w.u32(c.epochs)?;
        w.f64(c.learning_rate);
        w.u64(c.seed);
        let arch = self.model.architecture();
        w.widths(&arch.encoder)?;
        w.widths(&arch.decoder)?;

        let params = self.model.params();
        w.u32(params.len())?;
        for p in params {
            w.u32(p.name.len())?;
            w.0.extend_from_slice(p.name.as_bytes());
            w.u32(p.value.rank())?;
            for &d in p.value.shape() {
                w.u32(d)?;
            }
            w.f64s(p.value.data());
        }

        let o = &self.optimizer;
        if o.m.len() != params.len() || o.u.len() != params.len() {
            return Err(Error::Checkpoint("optimizer state does not match the parameters".into()));
        }
        w.f64(o.lr);
        w.f64(o.beta1);
        w.f64(o.beta2);
        w.f64(o.eps);
        w.u64(o.t);
        for ((m, u), p) in o.m.iter().zip(&o.u).zip(params) {
            if m.len() != p.value.len() || u.len() != p.value.len() {
                return Err(Error::Checkpoint(format!("optimizer state for `{}` has the wrong size", p.name)));
            }
            w.f64s(m);
            w.f64s(u);
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("missing MRGM magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let graph_digest = r.u64()?;

        let n = r.u32()?;
        let code = r.u8()?;
        let decoder = DecoderKind::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown decoder code {code}")))?;
        let config = ModelConfig {
            n,
            decoder,
            tau: r.f64()?,
            sinkhorn_iters: r.u32()?,
            lambda: r.f64()?,
            sw_projections: r.u32()?,
            batch_size: r.u32()?,
            epochs: r.u32()?,
            learning_rate: r.f64()?,
            seed: r.u64()?,
        };
        let arch = Architecture {
            encoder: r.widths()?,
            decoder: r.widths()?,
        };

        let count = r.u32()?;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()?;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("shape {shape:?} overflows")))?;
            let value = Tensor::new(&shape, r.f64s(len)?)?;
            params.push(Param { name, value });
        }

        let mut optimizer = Adamax::new(r.f64()?, &params);
        optimizer.beta1 = r.f64()?;
        optimizer.beta2 = r.f64()?;
        optimizer.eps = r.f64()?;
        optimizer.t = r.u64()?;
        for (k, p) in params.iter().enumerate() {
            optimizer.m[k] = r.f64s(p.value.len())?;
            optimizer.u[k] = r.f64s(p.value.len())?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let model = Model::from_params(config, arch, params)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            graph_digest,
            model,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kind: DecoderKind) -> Checkpoint {
        let mut c = ModelConfig::new(9, kind);
        c.seed = 42;
        c.tau = 0.5;
        let model = Model::new(c).unwrap();
        let mut opt = Adamax::new(0.001, model.params());
        opt.t = 7;
        opt.m[0][3] = -0.25;
        opt.u[2][0] = 1e-300;
        Checkpoint::new(0xdead_beef_0123_4567, model, opt)
    }

    #[test]
    fn round_trip_is_byte_exact() {
        for kind in [DecoderKind::Sinkhorn, DecoderKind::SoftSort] {
            let ck = sample(kind);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn header() {
        let bytes = sample(DecoderKind::Sinkhorn).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"MRGM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0xdead_beef_0123_4567);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample(DecoderKind::SoftSort).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&magic).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(Checkpoint::from_bytes(&version).is_err());
    }
}
