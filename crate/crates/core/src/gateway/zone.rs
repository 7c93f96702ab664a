// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;

use super::GatewayError;

/// The only issuer allowed to certify `domain`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaaRecord {
    pub domain: String,
    pub allowed_issuer: String,
}

/// A wildcard zone plus any custom domains routed through it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    apex: String,
    caa: BTreeMap<String, CaaRecord>,
}

impl Zone {
    pub fn new(apex: impl Into<String>) -> Self {
        Self { apex: apex.into().to_ascii_lowercase(), caa: BTreeMap::new() }
    }

    pub fn apex(&self) -> &str {
        &self.apex
    }

    /// Replaces the record for `record.domain`; there is at most one per domain.
    pub fn set_caa(&mut self, record: CaaRecord) {
        let domain = record.domain.to_ascii_lowercase();
        self.caa.insert(domain.clone(), CaaRecord { domain, ..record });
    }

    pub fn caa_records(&self) -> impl Iterator<Item = &CaaRecord> {
        self.caa.values()
    }

    pub fn in_zone(&self, domain: &str) -> bool {
        let domain = domain.to_ascii_lowercase();
        domain == self.apex
            || domain.strip_suffix(&self.apex).is_some_and(|head| head.ends_with('.') && head.len() > 1)
            || self.caa.contains_key(&domain)
    }

    /// Allow iff the record governing `domain` names `issuer`. A domain with
    /// its own record uses it; other names fall back to the apex record. No
    /// record at all denies.
    pub fn caa_check(&self, domain: &str, issuer: &str) -> Result<bool, GatewayError> {
        if !self.in_zone(domain) {
            return Err(GatewayError::OutOfZone(domain.to_owned()));
        }
        let domain = domain.to_ascii_lowercase();
        let record = self.caa.get(&domain).or_else(|| self.caa.get(&self.apex));
        Ok(record.is_some_and(|r| r.allowed_issuer == issuer))
    }

    pub fn subdomain_for(&self, app_id: &Digest) -> String {
        format!("{}.{}", app_id.short_hex(16), self.apex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use std::collections::BTreeSet;

    fn zone() -> Zone {
        let mut z = Zone::new("apps.example");
        z.set_caa(CaaRecord { domain: "apps.example".into(), allowed_issuer: "gw".into() });
        z
    }

    #[test]
    fn caa_allows_only_the_named_issuer() {
        let z = zone();
        assert_eq!(z.caa_check("abc.apps.example", "gw"), Ok(true));
        assert_eq!(z.caa_check("abc.apps.example", "rogue"), Ok(false));
        assert_eq!(z.caa_check("apps.example", "gw"), Ok(true));
    }

    #[test]
    fn outside_the_zone_is_an_error() {
        let z = zone();
        assert!(matches!(z.caa_check("evil.example", "gw"), Err(GatewayError::OutOfZone(_))));
        assert!(!z.in_zone("xapps.example"));
        assert!(!z.in_zone(".apps.example"));
    }

    #[test]
    fn custom_domains_carry_their_own_record() {
        let mut z = zone();
        z.set_caa(CaaRecord { domain: "Shop.Example".into(), allowed_issuer: "gw".into() });
        assert!(z.in_zone("shop.example"));
        assert_eq!(z.caa_check("shop.example", "gw"), Ok(true));
        assert_eq!(z.caa_check("shop.example", "other"), Ok(false));
    }

    #[test]
    fn no_record_denies() {
        assert_eq!(Zone::new("z.example").caa_check("a.z.example", "gw"), Ok(false));
    }

    #[test]
    fn subdomains_do_not_collide() {
        let z = zone();
        let names: BTreeSet<_> = (0u32..1000).map(|i| z.subdomain_for(&hash(&i.to_be_bytes()))).collect();
        assert_eq!(names.len(), 1000);
        assert!(names.iter().all(|n| z.in_zone(n)));
    }
}
