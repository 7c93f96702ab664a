// SPDX-License-Identifier: Apache-2.0

//! Key management service.
//!
//! A [`KmsCluster`] is a set of [`KmsNode`]s, each running inside a simulated
//! TEE, that together hold the root key material for one or more epochs.
//! Two modes exist:
//!
//! * **duplication**: every node keeps an identical copy of the root secrets;
//!   any single live node can serve requests.
//! * **threshold(t, n)**: every node keeps one Shamir share of each root
//!   secret. To serve a request, a leader collects `t` shares over the
//!   network, reconstructs the root in ephemeral memory, derives the
//!   requested keys and erases the root again. No node ever stores more than
//!   its own share at rest.
//!
//! The leader-reconstructs approach is not a multi-party computation of the
//! derivation function: while a request is being served the leader briefly
//! holds the root. What it guarantees is that `t - 1` node states at rest
//! reveal nothing, and that property is what the tests check.
//!
//! Key release to applications is gated, in this order, with the first
//! failing gate deciding the error:
//!
//! 1. the quote verifies against the vendor root and was produced by the
//!    requesting instance ([`KmsError::Attestation`]);
//! 2. the OS registers match an authorized OS build ([`KmsError::UntrustedOs`]);
//! 3. RTMR3 reflects the presented manifest bound to this KMS, and that
//!    manifest's digest is authorized for the app ([`KmsError::KeyReleaseDenied`]);
//! 4. the instance is authorized, if the app restricts instances
//!    ([`KmsError::InstanceNotAuthorized`]).
//!
//! Every released [`AppKeyBundle`] is a deterministic function of the root
//! epoch, the application id and the instance id:
//!
//! | key      | parent       | label    | context                   |
//! |----------|--------------|----------|---------------------------|
//! | app CA   | root CA      | `app-ca` | `app_id`                  |
//! | disk     | root CA      | `disk`   | `app_id \|\| instance_id` |
//! | env      | root CA      | `env`    | `app_id`                  |
//! | signing  | root signing | `ecdsa`  | `app_id`                  |

mod cluster;
mod node;
mod protocol;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cert::{CertBody, CertKind, Certificate, CertificateChain, Validity};
use crate::crypto::{derive, hash, CryptoError, Digest, KeyPair, Purpose, PublicKey, SecretScalar};
use crate::governance::{AppManifest, GovernanceError};
use crate::tee::{Quote, TeeError};
use crate::wire::Writer;

pub use cluster::{EpochStatus, HandoverStatus, KmsCluster};
pub use node::{KmsNode, NodeMaterial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KmsMode {
    Duplication,
    Threshold { t: usize, n: usize },
}

/// Which key-release gate an error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gate {
    Quote,
    Os,
    Code,
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    UnknownApp,
    MeasurementMismatch,
    CodeNotAuthorized,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::UnknownApp => "app is not registered",
            DenyReason::MeasurementMismatch => "RTMR3 does not match the presented manifest",
            DenyReason::CodeNotAuthorized => "code digest is not authorized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KmsError {
    #[error("attestation failed: {0}")]
    Attestation(TeeError),
    #[error("quote was produced by a different instance")]
    InstanceMismatch,
    #[error("untrusted OS build {0}")]
    UntrustedOs(Digest),
    #[error("node code digest mismatch")]
    CodeMismatch,
    #[error("kms node is not registered in governance")]
    UnregisteredNode,
    #[error("node is already a member")]
    AlreadyMember,
    #[error("root key already bootstrapped")]
    AlreadyBootstrapped,
    #[error("root key not bootstrapped")]
    NotBootstrapped,
    #[error("key release denied: {0}")]
    KeyReleaseDenied(DenyReason),
    #[error("instance is not authorized for this app")]
    InstanceNotAuthorized,
    #[error("epoch {0} has expired")]
    EpochExpired(u64),
    #[error("epoch {0} does not exist")]
    UnknownEpoch(u64),
    #[error("quorum unavailable: needed {needed}, got {got}")]
    QuorumUnavailable { needed: usize, got: usize },
    #[error("operation requires a different kms mode")]
    WrongMode,
    #[error("initial share distribution is not complete")]
    BootstrapIncomplete,
    #[error("rotation not authorized by governance: {0}")]
    RotationNotAuthorized(GovernanceError),
    #[error("handover of epoch {old_epoch} still open until {deadline}")]
    HandoverInProgress { old_epoch: u64, deadline: u64 },
    #[error("no free share index")]
    ShareSpaceExhausted,
    #[error("protocol aborted: {0}")]
    Protocol(&'static str),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl KmsError {
    /// Stable kebab-case identifier used by reports and scenario files.
    pub fn code(&self) -> &'static str {
        match self {
            KmsError::Attestation(TeeError::SpoofedQuote(_)) => "spoofed-quote",
            KmsError::Attestation(TeeError::OutdatedFirmware { .. }) => "outdated-firmware",
            KmsError::Attestation(_) | KmsError::InstanceMismatch => "attestation-failed",
            KmsError::UntrustedOs(_) => "untrusted-os",
            KmsError::CodeMismatch => "code-mismatch",
            KmsError::UnregisteredNode => "unregistered-node",
            KmsError::AlreadyMember => "already-member",
            KmsError::AlreadyBootstrapped => "already-bootstrapped",
            KmsError::NotBootstrapped => "not-bootstrapped",
            KmsError::KeyReleaseDenied(_) => "key-release-denied",
            KmsError::InstanceNotAuthorized => "instance-not-authorized",
            KmsError::EpochExpired(_) => "epoch-expired",
            KmsError::UnknownEpoch(_) => "unknown-epoch",
            KmsError::QuorumUnavailable { .. } => "quorum-unavailable",
            KmsError::WrongMode => "wrong-mode",
            KmsError::BootstrapIncomplete => "bootstrap-incomplete",
            KmsError::RotationNotAuthorized(_) => "rotation-not-authorized",
            KmsError::HandoverInProgress { .. } => "handover-in-progress",
            KmsError::ShareSpaceExhausted => "share-space-exhausted",
            KmsError::Protocol(_) => "protocol-aborted",
            KmsError::Governance(_) => "governance-error",
            KmsError::Crypto(_) => "crypto-error",
        }
    }

    /// The key-release gate this error reports, if any.
    pub fn gate(&self) -> Option<Gate> {
        match self {
            KmsError::Attestation(_) | KmsError::InstanceMismatch => Some(Gate::Quote),
            KmsError::UntrustedOs(_) => Some(Gate::Os),
            KmsError::KeyReleaseDenied(_) => Some(Gate::Code),
            KmsError::InstanceNotAuthorized => Some(Gate::Instance),
            _ => None,
        }
    }
}

/// The two independent root secrets of one epoch.
#[derive(Clone, PartialEq, Eq)]
pub struct RootSecrets {
    pub ca: SecretScalar,
    pub sign: SecretScalar,
}

impl RootSecrets {
    pub fn generate<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        Self { ca: SecretScalar::random(rng), sign: SecretScalar::random(rng) }
    }

    pub fn root_public(&self) -> PublicKey {
        KeyPair::from_secret(&self.ca).public()
    }
}

impl fmt::Debug for RootSecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RootSecrets(<redacted>)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predecessor {
    pub epoch: u64,
    pub root_public: PublicKey,
    pub handover_deadline: u64,
}

/// Root material for one epoch, as assembled for serving a request.
#[derive(Debug, Clone)]
pub struct RootKeyState {
    pub epoch: u64,
    pub secrets: RootSecrets,
    pub root_public: PublicKey,
    pub predecessor: Option<Predecessor>,
}

impl RootKeyState {
    pub fn new(epoch: u64, secrets: RootSecrets, predecessor: Option<Predecessor>) -> Self {
        let root_public = secrets.root_public();
        Self { epoch, secrets, root_public, predecessor }
    }

    fn root_ca_key(&self) -> KeyPair {
        KeyPair::from_secret(&self.secrets.ca)
    }

    pub fn root_subject(&self) -> String {
        format!("teestack-kms-root/epoch-{}", self.epoch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafRole {
    #[default]
    App,
    Gateway,
}

/// Subject name of the KMS-issued leaf for an application.
pub fn app_subject(app_id: &Digest) -> String {
    format!("app-{}", app_id.short_hex(16))
}

/// Extensions stamped onto the leaf of an issued chain.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeafExtensions {
    pub code_digest: Option<Digest>,
    pub quote_digest: Option<Digest>,
}

/// Root CA, then app CA bound to `app_id`, then a leaf for `subject_public`.
///
/// Chains of the same epoch share the root key. Issued chains carry no
/// expiry of their own; their lifetime is that of the epoch.
pub fn issue_cert_chain(
    root: &RootKeyState,
    app_id: &Digest,
    subject_public: PublicKey,
    role: LeafRole,
    ext: LeafExtensions,
) -> CertificateChain {
    let root_key = root.root_ca_key();
    let app_ca_key = KeyPair::from_secret(&derive(&root.secrets.ca, Purpose::AppCa, &app_id.0));
    let root_subject = root.root_subject();
    let ca_subject = format!("app-ca-{}", app_id.short_hex(16));
    let base = |subject: String, key: PublicKey, issuer: &str, kind| CertBody {
        subject,
        subject_public: key,
        issuer: issuer.to_owned(),
        kind,
        app_id_ext: Some(*app_id),
        quote_digest_ext: None,
        code_digest_ext: None,
        epoch: root.epoch,
        validity: Validity::FOREVER,
    };
    let root_cert = Certificate::sign(base(root_subject.clone(), root_key.public(), &root_subject, CertKind::RootCa), &root_key);
    let ca_cert = Certificate::sign(base(ca_subject.clone(), app_ca_key.public(), &root_subject, CertKind::AppCa), &root_key);
    let kind = match role {
        LeafRole::App => CertKind::AppLeaf,
        LeafRole::Gateway => CertKind::GatewayLeaf,
    };
    let leaf_body = CertBody {
        quote_digest_ext: ext.quote_digest,
        code_digest_ext: ext.code_digest,
        ..base(app_subject(app_id), subject_public, &ca_subject, kind)
    };
    let leaf = Certificate::sign(leaf_body, &app_ca_key);
    CertificateChain::new(vec![leaf, ca_cert, root_cert])
}

/// Keys released to one application instance.
#[derive(Clone)]
pub struct AppKeyBundle {
    pub app_id: Digest,
    pub instance_id: Digest,
    pub epoch: u64,
    pub app_ca_secret: SecretScalar,
    pub disk_key: SecretScalar,
    pub env_key: SecretScalar,
    pub app_sign_key: KeyPair,
    pub cert_chain: CertificateChain,
}

impl AppKeyBundle {
    pub fn derive(root: &RootKeyState, app_id: &Digest, instance_id: &Digest, role: LeafRole, ext: LeafExtensions) -> Self {
        let ca = &root.secrets.ca;
        let mut disk_ctx = app_id.0.to_vec();
        disk_ctx.extend_from_slice(&instance_id.0);
        let app_sign_key = KeyPair::from_secret(&derive(&root.secrets.sign, Purpose::Ecdsa, &app_id.0));
        let cert_chain = issue_cert_chain(root, app_id, app_sign_key.public(), role, ext);
        Self {
            app_id: *app_id,
            instance_id: *instance_id,
            epoch: root.epoch,
            app_ca_secret: derive(ca, Purpose::AppCa, &app_id.0),
            disk_key: derive(ca, Purpose::Disk, &disk_ctx),
            env_key: derive(ca, Purpose::Env, &app_id.0),
            app_sign_key,
            cert_chain,
        }
    }

    pub fn root_public(&self) -> Option<PublicKey> {
        self.cert_chain.root().map(|c| c.subject_public)
    }

    /// Binding commitment to the whole bundle, secrets included.
    pub fn commitment(&self) -> Digest {
        let mut w = Writer::new();
        w.raw(b"teestack/bundle/v1")
            .digest(&self.app_id)
            .digest(&self.instance_id)
            .u64(self.epoch)
            .raw(self.app_ca_secret.expose())
            .raw(self.disk_key.expose())
            .raw(self.env_key.expose())
            .public_key(&self.app_sign_key.public());
        for c in &self.cert_chain.certs {
            w.digest(&c.digest());
        }
        hash(&w.finish())
    }
}

impl PartialEq for AppKeyBundle {
    fn eq(&self, other: &Self) -> bool {
        self.commitment() == other.commitment()
    }
}

impl Eq for AppKeyBundle {}

impl fmt::Debug for AppKeyBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AppKeyBundle")
            .field("app_id", &self.app_id.short_hex(8))
            .field("instance_id", &self.instance_id.short_hex(8))
            .field("epoch", &self.epoch)
            .field("sign_public", &self.app_sign_key.public())
            .finish_non_exhaustive()
    }
}

/// An application instance asking for its keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub app_id: Digest,
    pub manifest: AppManifest,
    pub instance_id: Digest,
    pub quote: Quote,
    /// Epoch to derive under; `None` means the current one.
    pub epoch: Option<u64>,
    pub role: LeafRole,
}

#[cfg(test)]
mod tests;
