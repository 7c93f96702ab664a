// SPDX-License-Identifier: Apache-2.0

//! Gateway: admits attested apps, gives each a name in the managed zone,
//! issues and logs its certificate, and forwards traffic to it.
//!
//! An app is admitted either with a KMS-issued chain or with a raw quote.
//! A chain must end in the same root key as the gateway's own identity chain;
//! that is what lets the gateway trust the app without re-attesting it.
//! Every certificate the gateway issues goes into the [`CtLog`] before it is
//! installed, and [`Gateway::route`] refuses to serve a leaf the log has not
//! seen.
//!
//! Clients check what they are served with [`verify_presented_chain`],
//! pinning the KMS root they expect and consulting a governance snapshot.

mod ct;
mod zone;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cert::{CertBody, CertError, CertKind, Certificate, CertificateChain, Validity};
use crate::crypto::{Digest, PublicKey};
use crate::governance::{AppManifest, ChainState};
use crate::kms::AppKeyBundle;
use crate::tee::{expected_rtmr3, pad_report_data, verify_quote, AttestationRoot, Quote, Register, TeeError};
use crate::wire::{Canonical, Envelope, Reader, WireError, Writer};

pub use ct::{ct_monitor_scan, AlertStore, CtAlert, CtEntry, CtLog};
pub use zone::{CaaRecord, Zone};

pub const GATEWAY_REQUEST: u16 = 0x0201;
pub const GATEWAY_RESPONSE: u16 = 0x0202;

/// Default lifetime of an issued TLS leaf, in logical ticks.
pub const LEAF_LIFETIME: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("chain does not end in the gateway's KMS root")]
    ForeignRoot,
    #[error("invalid certificate chain: {0}")]
    BadChain(CertError),
    #[error("presented leaf is not an application certificate")]
    NotAnAppLeaf,
    #[error("app {0} is not authorized to run this code")]
    AppNotAuthorized(Digest),
    #[error("attestation failed: {0}")]
    Attestation(#[from] TeeError),
    #[error("quote comes from an OS image governance does not list")]
    UntrustedOs,
    #[error("quote measurements do not match the claimed app")]
    MeasurementMismatch,
    #[error("quote does not carry the certified key")]
    ReportDataMismatch,
    #[error("CAA policy for {domain} does not allow issuer {issuer}")]
    CaaDenied { domain: String, issuer: String },
    #[error("{0} is outside the managed zone")]
    OutOfZone(String),
    #[error("{0} is already routed to another app")]
    DomainTaken(String),
    #[error("no route for {0}")]
    NoRoute(String),
    #[error("certificate for {0} was never logged")]
    Unlogged(String),
    #[error("malformed message: {0}")]
    Wire(#[from] WireError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::ForeignRoot => "foreign-root",
            GatewayError::BadChain(_) => "bad-chain",
            GatewayError::NotAnAppLeaf => "not-an-app-leaf",
            GatewayError::AppNotAuthorized(_) => "app-not-authorized",
            GatewayError::Attestation(TeeError::SpoofedQuote(_)) => "spoofed-quote",
            GatewayError::Attestation(TeeError::OutdatedFirmware { .. }) => "outdated-firmware",
            GatewayError::Attestation(_) => "attestation-failed",
            GatewayError::UntrustedOs => "untrusted-os",
            GatewayError::MeasurementMismatch => "measurement-mismatch",
            GatewayError::ReportDataMismatch => "report-data-mismatch",
            GatewayError::CaaDenied { .. } => "caa-denied",
            GatewayError::OutOfZone(_) => "out-of-zone",
            GatewayError::DomainTaken(_) => "domain-taken",
            GatewayError::NoRoute(_) => "no-route",
            GatewayError::Unlogged(_) => "unlogged-certificate",
            GatewayError::Wire(_) => "malformed-message",
        }
    }
}

/// How an app proves itself to the gateway.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AppCredential {
    /// A chain issued by the KMS to the app.
    Chain(CertificateChain),
    /// A quote whose report data is the key to certify.
    Quote { app_id: Digest, manifest: AppManifest, quote: Quote, subject_public: PublicKey },
}

/// The simulated service behind a route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub name: String,
    pub app_id: Digest,
}

impl Endpoint {
    pub fn respond(&self, body: &[u8]) -> Vec<u8> {
        let mut out = format!("{}: ", self.name).into_bytes();
        out.extend_from_slice(body);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub endpoint: Endpoint,
    pub served_chain: CertificateChain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub host: String,
    pub body: Vec<u8>,
}

impl Request {
    pub fn envelope(&self) -> Envelope {
        let mut w = Writer::new();
        w.str(&self.host).bytes(&self.body);
        Envelope::new(GATEWAY_REQUEST, w.finish())
    }

    pub fn decode(env: &Envelope) -> Result<Self, WireError> {
        let mut r = Reader::new(env.expect_kind(GATEWAY_REQUEST)?);
        let req = Self { host: r.string()?, body: r.bytes()?.to_vec() };
        r.expect_end()?;
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub body: Vec<u8>,
    pub chain: CertificateChain,
}

impl Response {
    pub fn envelope(&self) -> Envelope {
        let mut w = Writer::new();
        w.bytes(&self.body);
        self.chain.encode(&mut w);
        Envelope::new(GATEWAY_RESPONSE, w.finish())
    }

    pub fn decode(env: &Envelope) -> Result<Self, WireError> {
        let mut r = Reader::new(env.expect_kind(GATEWAY_RESPONSE)?);
        let resp = Self { body: r.bytes()?.to_vec(), chain: CertificateChain::read(&mut r)? };
        r.expect_end()?;
        Ok(resp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Valid,
    BadChain,
    ForeignRoot,
    NameMismatch,
    Expired,
    UnverifiedApp,
}

impl Verdict {
    pub fn code(self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::BadChain => "bad-chain",
            Verdict::ForeignRoot => "foreign-root",
            Verdict::NameMismatch => "name-mismatch",
            Verdict::Expired => "expired-cert",
            Verdict::UnverifiedApp => "unverified-app",
        }
    }
}

/// Client-side check of a served chain.
///
/// Checks run in order and the first failure decides the verdict: chain
/// structure, root (pinned key, which must also be a live on-chain root for
/// the chain's epoch), leaf name against `host`, validity at `now`, and
/// finally whether governance still authorizes the leaf's app and code.
pub fn verify_presented_chain(
    chain: &CertificateChain,
    host: &str,
    expected_root: &PublicKey,
    registry: &ChainState,
    now: u64,
) -> Verdict {
    if chain.verify_structure().is_err() {
        return Verdict::BadChain;
    }
    let (Some(leaf), Some(root)) = (chain.leaf(), chain.root()) else {
        return Verdict::BadChain;
    };
    let ka = &registry.kms_auth;
    let on_chain = ka.root_publics.get(&root.epoch) == Some(&root.subject_public) && ka.epoch_live(root.epoch);
    if root.subject_public != *expected_root || !on_chain {
        return Verdict::ForeignRoot;
    }
    if !leaf.subject.eq_ignore_ascii_case(host) {
        return Verdict::NameMismatch;
    }
    if !chain.valid_at(now) {
        return Verdict::Expired;
    }
    let authorized = match (leaf.app_id_ext, leaf.code_digest_ext) {
        (Some(app), Some(code)) => ka.is_code_authorized(&app, &code) == Ok(true),
        (Some(app), None) => ka.apps.contains(&app),
        (None, _) => false,
    };
    if !authorized {
        return Verdict::UnverifiedApp;
    }
    Verdict::Valid
}

/// Subject key and extensions of an admitted app.
struct Admitted {
    app_id: Digest,
    subject_public: PublicKey,
    code_digest: Digest,
    quote_digest: Option<Digest>,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    zone: Zone,
    identity: AppKeyBundle,
    attestation_root: AttestationRoot,
    routes: BTreeMap<String, Route>,
    ct_log: CtLog,
    leaf_lifetime: u64,
}

impl Gateway {
    /// `identity` is the gateway's own KMS-issued bundle; its root is the
    /// only root the gateway accepts from apps.
    pub fn new(zone: Zone, identity: AppKeyBundle, attestation_root: AttestationRoot) -> Self {
        Self { zone, identity, attestation_root, routes: BTreeMap::new(), ct_log: CtLog::new(), leaf_lifetime: LEAF_LIFETIME }
    }

    pub fn zone(&self) -> &Zone {
        &self.zone
    }

    pub fn caa_set(&mut self, record: CaaRecord) {
        self.zone.set_caa(record);
    }

    pub fn ct_log(&self) -> &CtLog {
        &self.ct_log
    }

    /// The log is public; outside issuers submit here too.
    pub fn ct_log_mut(&mut self) -> &mut CtLog {
        &mut self.ct_log
    }

    pub fn routes(&self) -> &BTreeMap<String, Route> {
        &self.routes
    }

    pub fn identity(&self) -> &AppKeyBundle {
        &self.identity
    }

    pub fn set_leaf_lifetime(&mut self, ticks: u64) {
        self.leaf_lifetime = ticks.max(1);
    }

    /// Name the gateway signs TLS leaves under: its own leaf's subject.
    pub fn issuer_name(&self) -> String {
        self.identity.cert_chain.leaf().map(|c| c.subject.clone()).unwrap_or_default()
    }

    pub fn kms_root(&self) -> Option<PublicKey> {
        self.identity.root_public()
    }

    /// Attack hook: swap in an identity issued by some other KMS.
    pub fn replace_identity(&mut self, identity: AppKeyBundle) {
        self.identity = identity;
    }

    /// Attack hook: point `host` at an arbitrary route, bypassing admission.
    pub fn hijack_route(&mut self, host: &str, route: Route) {
        self.routes.insert(host.to_ascii_lowercase(), route);
    }

    /// Admits an app under its derived subdomain. Returns the subdomain.
    pub fn register_app(
        &mut self,
        credential: &AppCredential,
        registry: &ChainState,
        endpoint_name: &str,
        now: u64,
    ) -> Result<String, GatewayError> {
        let admitted = self.admit(credential, registry)?;
        let domain = self.zone.subdomain_for(&admitted.app_id);
        self.install(domain, admitted, endpoint_name, now)
    }

    /// Ingress variant: admits an app under a caller-supplied domain with
    /// its own CAA record.
    pub fn register_custom_domain(
        &mut self,
        domain: &str,
        caa: CaaRecord,
        credential: &AppCredential,
        registry: &ChainState,
        endpoint_name: &str,
        now: u64,
    ) -> Result<String, GatewayError> {
        let admitted = self.admit(credential, registry)?;
        let domain = domain.to_ascii_lowercase();
        self.zone.set_caa(CaaRecord { domain: domain.clone(), ..caa });
        self.install(domain, admitted, endpoint_name, now)
    }

    fn admit(&self, credential: &AppCredential, registry: &ChainState) -> Result<Admitted, GatewayError> {
        let ka = &registry.kms_auth;
        let admitted = match credential {
            AppCredential::Chain(chain) => {
                let root = self.kms_root().ok_or(GatewayError::ForeignRoot)?;
                chain.verify(&root).map_err(|e| match e {
                    CertError::ForeignRoot => GatewayError::ForeignRoot,
                    other => GatewayError::BadChain(other),
                })?;
                let leaf = chain.leaf().ok_or(GatewayError::BadChain(CertError::Empty))?;
                let (Some(app_id), Some(code_digest), CertKind::AppLeaf) = (leaf.app_id_ext, leaf.code_digest_ext, leaf.kind) else {
                    return Err(GatewayError::NotAnAppLeaf);
                };
                Admitted { app_id, subject_public: leaf.subject_public, code_digest, quote_digest: leaf.quote_digest_ext }
            }
            AppCredential::Quote { app_id, manifest, quote, subject_public } => {
                let verified = verify_quote(quote, &self.attestation_root)?;
                if !ka.os_digests.contains(&verified.measurements.os_digest()) {
                    return Err(GatewayError::UntrustedOs);
                }
                let code_digest = manifest.app_digest();
                let rtmr3 = expected_rtmr3(&code_digest, ka.kms_identity().as_ref());
                if verified.measurements.get(Register::Rtmr3) != rtmr3 {
                    return Err(GatewayError::MeasurementMismatch);
                }
                if verified.report_data != pad_report_data(subject_public.as_bytes())? {
                    return Err(GatewayError::ReportDataMismatch);
                }
                Admitted { app_id: *app_id, subject_public: *subject_public, code_digest, quote_digest: Some(verified.quote_digest) }
            }
        };
        if ka.is_code_authorized(&admitted.app_id, &admitted.code_digest) != Ok(true) {
            return Err(GatewayError::AppNotAuthorized(admitted.app_id));
        }
        Ok(admitted)
    }

    fn install(&mut self, domain: String, admitted: Admitted, endpoint_name: &str, now: u64) -> Result<String, GatewayError> {
        if let Some(existing) = self.routes.get(&domain) {
            if existing.endpoint.app_id != admitted.app_id {
                return Err(GatewayError::DomainTaken(domain));
            }
        }
        let issuer = self.issuer_name();
        if !self.zone.caa_check(&domain, &issuer)? {
            return Err(GatewayError::CaaDenied { domain, issuer });
        }
        let body = CertBody {
            subject: domain.clone(),
            subject_public: admitted.subject_public,
            issuer,
            kind: CertKind::TlsLeaf,
            app_id_ext: Some(admitted.app_id),
            quote_digest_ext: admitted.quote_digest,
            code_digest_ext: Some(admitted.code_digest),
            epoch: self.identity.epoch,
            validity: Validity { start: now, end: now.saturating_add(self.leaf_lifetime) },
        };
        let served_chain = self.identity.cert_chain.extend_with(body, &self.identity.app_sign_key);
        self.ct_log.append(now, served_chain.certs[0].clone());
        let endpoint = Endpoint { name: endpoint_name.to_owned(), app_id: admitted.app_id };
        self.routes.insert(domain.clone(), Route { endpoint, served_chain });
        Ok(domain)
    }

    /// Reissues the leaf for `host` with a fresh validity window.
    pub fn renew(&mut self, host: &str, now: u64) -> Result<Certificate, GatewayError> {
        let host = host.to_ascii_lowercase();
        let route = self.routes.get(&host).ok_or_else(|| GatewayError::NoRoute(host.clone()))?;
        let old = route.served_chain.leaf().ok_or(GatewayError::BadChain(CertError::Empty))?;
        let body = CertBody { validity: Validity { start: now, end: now.saturating_add(self.leaf_lifetime) }, ..old.body.clone() };
        let chain = self.identity.cert_chain.extend_with(body, &self.identity.app_sign_key);
        let leaf = chain.certs[0].clone();
        self.ct_log.append(now, leaf.clone());
        self.routes.get_mut(&host).expect("route checked above").served_chain = chain;
        Ok(leaf)
    }

    /// Forwards `req` to its endpoint. The served chain is re-checked
    /// against the gateway's root and the CT log on every request.
    pub fn route(&self, req: &Request) -> Result<Response, GatewayError> {
        let host = req.host.to_ascii_lowercase();
        let route = self.routes.get(&host).ok_or_else(|| GatewayError::NoRoute(host.clone()))?;
        let root = self.kms_root().ok_or(GatewayError::ForeignRoot)?;
        route.served_chain.verify(&root).map_err(|e| match e {
            CertError::ForeignRoot => GatewayError::ForeignRoot,
            other => GatewayError::BadChain(other),
        })?;
        let leaf = route.served_chain.leaf().ok_or(GatewayError::BadChain(CertError::Empty))?;
        if !self.ct_log.contains(leaf) {
            return Err(GatewayError::Unlogged(host));
        }
        Ok(Response { body: route.endpoint.respond(&req.body), chain: route.served_chain.clone() })
    }

    /// Wire-level entry point: request envelope in, response envelope out.
    pub fn handle(&self, request: &Envelope) -> Result<Envelope, GatewayError> {
        Ok(self.route(&Request::decode(request)?)?.envelope())
    }

    pub fn scan(&self) -> Vec<CtAlert> {
        ct_monitor_scan(&self.ct_log, &self.zone, &self.issuer_name())
    }

    pub fn export_routes_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.routes).expect("routes serialize")
    }

    pub fn export_ct_log_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.ct_log).expect("ct log serializes")
    }
}
