//! Binary checkpoints for models and optimizer state.
//!
//! All integers and floats are little-endian; every float is stored as `f64`
//! regardless of the in-memory scalar type.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LRDCKPT1"
//! 8       4     u32 payload kind: 1 = MLP, 2 = optimizer state
//!
//! MLP payload
//! 12      4     u32 L, number of layer sizes
//! 16      8L    u64 layer sizes d_0 .. d_{L-1}
//! ..      8     f64 dropout keep probability
//! ..            for each layer i: d_i * d_{i+1} f64 weights (row-major),
//!               then d_{i+1} f64 biases
//!
//! optimizer payload
//! 12      4     u32 rule kind (0 SGDM, 1 RMSprop, 2 Adam, 3 AMSGrad, 4 RAdam)
//! 16      8     u64 steps taken t
//! 24      4     u32 K, number of parameter tensors
//! ..            for each tensor: u32 rank r, r x u64 dims, u8 flags
//!               (bit 0: V present, bit 1: V_max present), then the M
//!               elements, then V and V_max when present
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::optim::{Moments, OptimizerState, RuleKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LRDCKPT1";
const KIND_MLP: u32 = 1;
const KIND_OPTIMIZER: u32 = 2;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) {
        for &v in t.data() {
            self.f64(v.as_f64());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(what, "end of file")),
        }
    }

    fn error(&self, expected: &str, found: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            expected: expected.to_string(),
            found: found.into(),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn tensor<T: Scalar>(&mut self, shape: &[usize], what: &str) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        let raw = self.take(
            n.checked_mul(8).ok_or_else(|| self.error(what, "overflowing size"))?,
            what,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Tensor::new(shape, data)
    }

    fn header(&mut self, kind: u32) -> Result<()> {
        let magic = self.take(8, "magic")?;
        if magic != MAGIC {
            self.pos = 0;
            return Err(self.error("magic \"LRDCKPT1\"", String::from_utf8_lossy(magic)));
        }
        let found = self.u32("payload kind")?;
        if found != kind {
            self.pos -= 4;
            return Err(self.error(&format!("payload kind {kind}"), found.to_string()));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error("end of file", format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_mlp<T: Scalar>(model: &Mlp<T>) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(KIND_MLP);
    w.u32(model.sizes().len() as u32);
    for &s in model.sizes() {
        w.u64(s as u64);
    }
    w.f64(model.keep_prob());
    for p in model.params() {
        w.tensor(p);
    }
    w.0
}

pub fn decode_mlp<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Mlp<T>> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(KIND_MLP)?;
    let count = r.u32("layer-size count")? as usize;
    if count < 2 {
        return Err(r.error("at least 2 layer sizes", count.to_string()));
    }
    let sizes = (0..count)
        .map(|_| r.u64("layer size").map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let keep = r.f64("keep probability")?;
    let mut params = Vec::with_capacity(2 * (count - 1));
    for w in sizes.windows(2) {
        params.push(r.tensor(&[w[0], w[1]], "weights")?);
        params.push(r.tensor(&[w[1]], "biases")?);
    }
    r.finish()?;
    Mlp::from_params(&sizes, params, keep)
}

pub fn encode_optimizer_state<T: Scalar>(state: &OptimizerState<T>) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(KIND_OPTIMIZER);
    w.u32(state.kind().code());
    w.u64(state.step_count());
    w.u32(state.moments().len() as u32);
    for m in state.moments() {
        w.u32(m.m.shape().len() as u32);
        for &d in m.m.shape() {
            w.u64(d as u64);
        }
        w.u8(u8::from(m.v.is_some()) | (u8::from(m.v_max.is_some()) << 1));
        w.tensor(&m.m);
        for t in m.v.iter().chain(&m.v_max) {
            w.tensor(t);
        }
    }
    w.0
}

pub fn decode_optimizer_state<T: Scalar>(bytes: &[u8], path: &Path) -> Result<OptimizerState<T>> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(KIND_OPTIMIZER)?;
    let code = r.u32("rule kind")?;
    let kind = RuleKind::from_code(code).ok_or_else(|| r.error("rule kind 0..=4", code.to_string()))?;
    let t = r.u64("step count")?;
    let count = r.u32("tensor count")? as usize;
    let mut moments = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32("tensor rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let flags = r.u8("accumulator flags")?;
        let m = r.tensor(&shape, "first moment")?;
        let v = if flags & 1 != 0 {
            Some(r.tensor(&shape, "second moment")?)
        } else {
            None
        };
        let v_max = if flags & 2 != 0 {
            Some(r.tensor(&shape, "max second moment")?)
        } else {
            None
        };
        if v.is_some() != kind.is_adaptive() || v_max.is_some() != (kind == RuleKind::AmsGrad) {
            return Err(r.error(
                &format!("accumulators for {}", kind.name()),
                format!("flags {flags:#04b}"),
            ));
        }
        moments.push(Moments { m, v, v_max });
    }
    r.finish()?;
    Ok(OptimizerState::from_parts(kind, t, moments))
}

pub fn save_mlp<T: Scalar>(model: &Mlp<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mlp(model)).map_err(|e| Error::io(path, e))
}

pub fn load_mlp<T: Scalar>(path: impl AsRef<Path>) -> Result<Mlp<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mlp(&bytes, path)
}

pub fn save_optimizer_state<T: Scalar>(state: &OptimizerState<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_optimizer_state(state)).map_err(|e| Error::io(path, e))
}

pub fn load_optimizer_state<T: Scalar>(path: impl AsRef<Path>) -> Result<OptimizerState<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_optimizer_state(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{step, LrdConfig, OptimizerRule};
    use crate::rng::Rng;

    #[test]
    fn mlp_round_trip() {
        let model = Mlp::<f64>::he_uniform(&[3, 4, 2], 0.9, &mut Rng::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_mlp(&model, &path).unwrap();
        let back: Mlp<f64> = load_mlp(&path).unwrap();
        assert_eq!(back, model);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 12 + 4 + 3 * 8 + 8 + (12 + 4 + 8 + 2) * 8);
    }

    #[test]
    fn optimizer_state_round_trip() {
        for kind in RuleKind::ALL {
            let rule = OptimizerRule::default_for(kind);
            let mut w = vec![Tensor::<f64>::vector(vec![0.5, -1.0, 2.0]), Tensor::vector(vec![0.1])];
            let g = vec![Tensor::vector(vec![1.0, 0.5, -0.25]), Tensor::vector(vec![3.0])];
            let mut state = OptimizerState::new(kind, &w);
            for _ in 0..3 {
                step(&rule, &mut state, &mut w, &g, &LrdConfig::plain(0.01), &mut Rng::new(0)).unwrap();
            }
            let bytes = encode_optimizer_state(&state);
            let back: OptimizerState<f64> = decode_optimizer_state(&bytes, Path::new("s")).unwrap();
            assert_eq!(back, state);
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let model = Mlp::<f64>::zeros(&[2, 2], 1.0).unwrap();
        let mut bytes = encode_mlp(&model);
        assert!(decode_mlp::<f64>(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        bytes.push(0);
        assert!(matches!(
            decode_mlp::<f64>(&bytes, Path::new("m")),
            Err(Error::Format { .. })
        ));
        bytes[0] = b'X';
        match decode_mlp::<f64>(&bytes, Path::new("m")) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        let state = encode_optimizer_state(&OptimizerState::<f64>::new(RuleKind::Adam, model.params()));
        assert!(decode_mlp::<f64>(&state, Path::new("m")).is_err());
    }
}
