// SPDX-License-Identifier: Apache-2.0

//! Node-to-node messages, carried in canonical envelopes.

use crate::crypto::KeyShare;
use crate::wire::{Envelope, Reader, WireError, Writer};

pub const SHARE_REQUEST: u16 = 0x0101;
pub const SHARE_RESPONSE: u16 = 0x0102;
pub const RESHARE_MASK: u16 = 0x0103;
pub const RESHARE_CONTRIBUTION: u16 = 0x0104;
pub const REFRESH_DELTA: u16 = 0x0105;
pub const ROOT_COPY: u16 = 0x0106;
pub const SHARE_DEAL: u16 = 0x0107;

/// A pair of 32-byte values, one for the CA secret and one for the signing
/// secret, tagged with the epoch and protocol session they belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMsg {
    pub epoch: u64,
    pub session: u64,
    pub index: u8,
    pub ca: [u8; 32],
    pub sign: [u8; 32],
}

impl PairMsg {
    pub fn shares(epoch: u64, session: u64, ca: &KeyShare, sign: &KeyShare) -> Self {
        debug_assert_eq!(ca.index, sign.index);
        Self { epoch, session, index: ca.index, ca: ca.payload, sign: sign.payload }
    }

    pub fn into_shares(self) -> (KeyShare, KeyShare) {
        (KeyShare { index: self.index, payload: self.ca }, KeyShare { index: self.index, payload: self.sign })
    }

    pub fn envelope(&self, kind: u16) -> Envelope {
        let mut w = Writer::new();
        w.u64(self.epoch).u64(self.session).u8(self.index).raw(&self.ca).raw(&self.sign);
        Envelope::new(kind, w.finish())
    }

    pub fn decode(env: &Envelope, kind: u16) -> Result<Self, WireError> {
        let mut r = Reader::new(env.expect_kind(kind)?);
        let msg = Self { epoch: r.u64()?, session: r.u64()?, index: r.u8()?, ca: r.fixed()?, sign: r.fixed()? };
        r.expect_end()?;
        Ok(msg)
    }
}

pub fn share_request(epoch: u64, session: u64) -> Envelope {
    let mut w = Writer::new();
    w.u64(epoch).u64(session);
    Envelope::new(SHARE_REQUEST, w.finish())
}

pub fn decode_share_request(env: &Envelope) -> Result<(u64, u64), WireError> {
    let mut r = Reader::new(env.expect_kind(SHARE_REQUEST)?);
    let out = (r.u64()?, r.u64()?);
    r.expect_end()?;
    Ok(out)
}
