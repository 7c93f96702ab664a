// SPDX-License-Identifier: Apache-2.0

//! Canonical binary encoding.
//!
//! Everything that is signed, sealed or sent between actors is encoded with
//! this module: big-endian fixed-width integers, fixed-width digests / keys /
//! signatures, and `u32`-length-prefixed variable byte strings. Optional
//! fields carry a one-byte presence tag (`0` absent, `1` present).
//!
//! Messages travel in an [`Envelope`]:
//!
//! ```text
//! +------------+-------------+-----------------+
//! | kind: u16  | length: u32 | payload (length) |
//! +------------+-------------+-----------------+
//! ```

use thiserror::Error;

use crate::crypto::{Digest, PublicKey, Signature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input: needed {needed} bytes at offset {offset}")]
    Truncated { needed: usize, offset: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("invalid presence tag {0:#04x}")]
    BadTag(u8),
    #[error("invalid utf-8 in string field")]
    BadUtf8,
    #[error("unexpected message kind {got:#06x}, wanted {want:#06x}")]
    UnexpectedKind { got: u16, want: u16 },
    #[error("invalid value for field {0}")]
    InvalidField(&'static str),
}

/// Types with a single canonical byte form.
pub trait Canonical {
    fn encode(&self, w: &mut Writer);

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than 4 GiB");
        self.u32(len).raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.raw(&d.0)
    }

    pub fn public_key(&mut self, k: &PublicKey) -> &mut Self {
        self.raw(&k.0)
    }

    pub fn signature(&mut self, s: &Signature) -> &mut Self {
        self.raw(&s.0)
    }

    pub fn opt_digest(&mut self, d: Option<&Digest>) -> &mut Self {
        match d {
            None => self.u8(0),
            Some(d) => self.u8(1).digest(d),
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated { needed: n, offset: self.pos });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("take returned N bytes"))
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn string(&mut self) -> Result<String, WireError> {
        let raw = self.bytes()?;
        std::str::from_utf8(raw).map(str::to_owned).map_err(|_| WireError::BadUtf8)
    }

    pub fn digest(&mut self) -> Result<Digest, WireError> {
        Ok(Digest(self.array()?))
    }

    pub fn public_key(&mut self) -> Result<PublicKey, WireError> {
        Ok(PublicKey(self.array()?))
    }

    pub fn signature(&mut self) -> Result<Signature, WireError> {
        Ok(Signature(self.array()?))
    }

    pub fn opt_digest(&mut self) -> Result<Option<Digest>, WireError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.digest()?)),
            t => Err(WireError::BadTag(t)),
        }
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        self.array()
    }

    pub fn expect_end(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

/// Length-prefixed message with a kind tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: u16,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub const HEADER_LEN: usize = 6;

    pub fn new(kind: u16, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.kind).bytes(&self.payload);
        w.finish()
    }

    /// Decodes exactly one envelope occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let env = Self::read(&mut r)?;
        r.expect_end()?;
        Ok(env)
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let kind = r.u16()?;
        let payload = r.bytes()?.to_vec();
        Ok(Self { kind, payload })
    }

    pub fn expect_kind(&self, want: u16) -> Result<&[u8], WireError> {
        if self.kind != want {
            return Err(WireError::UnexpectedKind { got: self.kind, want });
        }
        Ok(&self.payload)
    }
}
