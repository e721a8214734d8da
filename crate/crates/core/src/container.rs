//! Binary container shared by model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   4 bytes  "TMRP"
//! version u16      currently 1
//! kind    u8       1 = dense network, 2 = DEP ensemble, 3 = monotone network
//! payload          kind-specific, built from the primitives below
//! ```
//!
//! Primitives: `u8`, `u32`, `f64`, strings as `u32` length + UTF-8 bytes,
//! and matrices as `u32 rows, u32 cols` followed by `rows·cols` `f64`s in
//! row-major order. Decoders reject trailing bytes.

use byteorder::{ByteOrder, LittleEndian};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TMRP";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    DenseNetwork = 1,
    DepEnsemble = 2,
    MonotoneNetwork = 3,
}

impl Kind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Kind::DenseNetwork),
            2 => Some(Kind::DepEnsemble),
            3 => Some(Kind::MonotoneNetwork),
            _ => None,
        }
    }
}

/// Reads the header and reports which model a checkpoint holds.
pub fn peek_kind(bytes: &[u8]) -> Result<Kind> {
    if bytes.len() < 7 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = LittleEndian::read_u16(&bytes[4..6]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    Kind::from_u8(bytes[6]).ok_or_else(|| bad(format!("unknown kind {}", bytes[6])))
}

#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(kind: Kind) -> Self {
        let mut e = Self::default();
        e.buf.extend_from_slice(MAGIC);
        e.buf.extend_from_slice(&VERSION.to_le_bytes());
        e.u8(kind as u8);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    #[cfg(test)]
    pub fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.rows());
        self.u32(t.cols());
        t.data().iter().for_each(|&x| self.f64(x));
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], kind: Kind) -> Result<Self> {
        let mut d = Self { buf, pos: 0 };
        if d.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = LittleEndian::read_u16(d.take(2)?);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let k = d.u8()?;
        if k != kind as u8 {
            return Err(bad(format!("expected kind {}, found {k}", kind as u8)));
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4)?) as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    #[cfg(test)]
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }

    /// Length prefix checked against the bytes left, so corrupt counts
    /// cannot trigger huge allocations.
    fn count(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u32()?;
        if n.saturating_mul(elem_size) > self.remaining() {
            return Err(bad(format!("count {n} exceeds remaining payload")));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.remaining())
            .ok_or_else(|| bad(format!("matrix {rows}x{cols} exceeds remaining payload")))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::from_vec(rows, cols, data)
    }

    /// A length prefix for a list whose elements occupy at least
    /// `min_elem_size` bytes each.
    pub fn list_len(&mut self, min_elem_size: usize) -> Result<usize> {
        self.count(min_elem_size.max(1))
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(bad(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
