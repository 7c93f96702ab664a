// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest};
use crate::governance::{parse_jsonl, verify_chain, ChainState, LogParseError};

/// Where two byte strings first differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteDiff {
    pub offset: usize,
    pub live_len: usize,
    pub replayed_len: usize,
}

pub fn first_difference(live: &[u8], replayed: &[u8]) -> Option<ByteDiff> {
    let offset = live.iter().zip(replayed).position(|(a, b)| a != b).or_else(|| {
        (live.len() != replayed.len()).then(|| live.len().min(replayed.len()))
    })?;
    Some(ByteDiff { offset, live_len: live.len(), replayed_len: replayed.len() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: usize,
    /// First entry whose hash link or contents do not check out.
    pub divergence: Option<(usize, String)>,
    /// First entry the state machine refused while replaying.
    pub replay_error: Option<(usize, String)>,
    pub replayed_digest: Option<Digest>,
    /// Difference between the live state and the replayed one, if a live
    /// state was given.
    pub diff: Option<ByteDiff>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.divergence.is_none() && self.replay_error.is_none() && self.diff.is_none()
    }
}

/// Parses an exported log, checks its hash chain, replays it and compares
/// the result with `live` byte for byte.
pub fn audit(jsonl: &str, live: Option<&ChainState>) -> Result<AuditReport, LogParseError> {
    let entries = parse_jsonl(jsonl)?;
    let divergence = verify_chain(&entries).err().map(|d| (d.index, d.reason.clone()));
    let (replayed, replay_error) = match ChainState::replay(&entries) {
        Ok(state) => (Some(state), None),
        Err((i, e)) => (None, Some((i, e.to_string()))),
    };
    let replayed_bytes = replayed.as_ref().map(ChainState::canonical_bytes);
    let diff = live.and_then(|l| first_difference(&l.canonical_bytes(), replayed_bytes.as_deref().unwrap_or_default()));
    Ok(AuditReport { entries: entries.len(), divergence, replay_error, replayed_digest: replayed_bytes.map(|b| hash(&b)), diff })
}
