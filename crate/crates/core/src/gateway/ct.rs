// SPDX-License-Identifier: Apache-2.0

//! Certificate transparency log and monitor.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cert::Certificate;
use crate::crypto::Digest;

use super::Zone;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtEntry {
    pub index: usize,
    pub time: u64,
    pub cert: Certificate,
}

/// Append-only. Anyone may submit, which is how rogue issuance becomes visible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtLog {
    entries: Vec<CtEntry>,
}

impl CtLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, time: u64, cert: Certificate) -> usize {
        let index = self.entries.len();
        self.entries.push(CtEntry { index, time, cert });
        index
    }

    pub fn entries(&self) -> &[CtEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, cert: &Certificate) -> bool {
        self.entries.iter().any(|e| &e.cert == cert)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CtAlert {
    pub index: usize,
    pub domain: String,
    pub issuer: String,
    pub cert_digest: Digest,
}

/// One alert per entry for a domain in `zone` issued by anyone other than
/// `expected_issuer`.
pub fn ct_monitor_scan(log: &CtLog, zone: &Zone, expected_issuer: &str) -> Vec<CtAlert> {
    log.entries()
        .iter()
        .filter(|e| zone.in_zone(&e.cert.subject) && e.cert.issuer != expected_issuer)
        .map(|e| CtAlert {
            index: e.index,
            domain: e.cert.subject.clone(),
            issuer: e.cert.issuer.clone(),
            cert_digest: e.cert.digest(),
        })
        .collect()
}

/// Alerts seen so far, deduplicated across scans.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AlertStore {
    alerts: BTreeSet<CtAlert>,
}

impl AlertStore {
    /// Returns how many of `alerts` were new.
    pub fn ingest(&mut self, alerts: impl IntoIterator<Item = CtAlert>) -> usize {
        alerts.into_iter().filter(|a| self.alerts.insert(a.clone())).count()
    }

    pub fn all(&self) -> impl Iterator<Item = &CtAlert> {
        self.alerts.iter()
    }

    pub fn for_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a CtAlert> {
        self.alerts.iter().filter(move |a| a.domain == domain)
    }

    pub fn len(&self) -> usize {
        self.alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }
}
