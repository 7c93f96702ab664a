// SPDX-License-Identifier: Apache-2.0

//! Append-only, hash-chained event log with JSONL export.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Event;
use crate::crypto::{hash, Digest};
use crate::wire::Writer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    pub time: u64,
    pub kind: String,
    pub payload_digest: Digest,
    pub chain_hash: Digest,
    pub event: Event,
}

fn payload_digest(event: &Event) -> Digest {
    hash(&serde_json::to_vec(event).expect("events serialize"))
}

fn link(prev: &Digest, index: u64, time: u64, payload: &Digest) -> Digest {
    let mut w = Writer::new();
    w.digest(prev).u64(index).u64(time).digest(payload);
    hash(&w.finish())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Digest {
        self.entries.last().map_or(Digest::ZERO, |e| e.chain_hash)
    }

    pub(super) fn append(&mut self, time: u64, event: Event) {
        let index = self.entries.len() as u64;
        let payload_digest = payload_digest(&event);
        let chain_hash = link(&self.head(), index, time, &payload_digest);
        self.entries.push(LogEntry { index, time, kind: event.kind().to_owned(), payload_digest, chain_hash, event });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

/// Parses a JSONL export. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<LogEntry>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LogParseError { line: i + 1, message: e.to_string() }))
        .collect()
}

/// First point at which a log stops being internally consistent.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entry {index}: {reason}")]
pub struct Divergence {
    pub index: usize,
    pub reason: String,
}

/// Checks indices, timestamps, payload digests and hash links.
pub fn verify_chain(entries: &[LogEntry]) -> Result<(), Divergence> {
    let mut prev = Digest::ZERO;
    let mut last_time = 0;
    for (i, e) in entries.iter().enumerate() {
        let fail = |reason: &str| Err(Divergence { index: i, reason: reason.to_owned() });
        if e.index != i as u64 {
            return fail("index out of sequence");
        }
        if i > 0 && e.time <= last_time {
            return fail("timestamp not strictly increasing");
        }
        if e.kind != e.event.kind() {
            return fail("kind does not match event");
        }
        let pd = payload_digest(&e.event);
        if pd != e.payload_digest {
            return fail("payload digest mismatch");
        }
        if link(&prev, e.index, e.time, &pd) != e.chain_hash {
            return fail("chain hash mismatch");
        }
        prev = e.chain_hash;
        last_time = e.time;
    }
    Ok(())
}
