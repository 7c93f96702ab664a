// SPDX-License-Identifier: Apache-2.0

//! Minimal certificates and chains.
//!
//! A [`Certificate`] is a small bespoke structure rather than X.509. The
//! fields map onto X.509 as follows:
//!
//! | field              | X.509 analogue                              |
//! |--------------------|---------------------------------------------|
//! | `subject`          | subject CN / SAN dNSName                    |
//! | `subject_public`   | SubjectPublicKeyInfo                        |
//! | `issuer`           | issuer CN                                   |
//! | `kind`             | basicConstraints + extendedKeyUsage         |
//! | `app_id_ext`       | private extension: application id           |
//! | `quote_digest_ext` | private extension: attestation quote digest |
//! | `code_digest_ext`  | private extension: authorized code digest   |
//! | `epoch`            | private extension: KMS root epoch           |
//! | `validity`         | notBefore / notAfter, in logical ticks      |
//!
//! The signature covers the canonical encoding of every other field.
//! Chains are ordered leaf first; each certificate's `issuer` names the next
//! certificate's `subject`, and the last certificate is self-signed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, verify, Digest, KeyPair, PublicKey, Signature};
use crate::wire::{Canonical, Reader, WireError, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("empty certificate chain")]
    Empty,
    #[error("certificate {0} has an empty validity window")]
    InvalidValidity(usize),
    #[error("certificate {0} names an issuer that is not the next subject")]
    IssuerMismatch(usize),
    #[error("signature on certificate {0} does not verify")]
    BadSignature(usize),
    #[error("chain root is not self-issued")]
    NotSelfSigned,
    #[error("epoch differs along the chain at certificate {0}")]
    EpochMismatch(usize),
    #[error("chain is rooted in a foreign key")]
    ForeignRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertKind {
    RootCa,
    AppCa,
    AppLeaf,
    GatewayLeaf,
    TlsLeaf,
}

impl CertKind {
    fn tag(self) -> u8 {
        match self {
            CertKind::RootCa => 1,
            CertKind::AppCa => 2,
            CertKind::AppLeaf => 3,
            CertKind::GatewayLeaf => 4,
            CertKind::TlsLeaf => 5,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, WireError> {
        Ok(match tag {
            1 => CertKind::RootCa,
            2 => CertKind::AppCa,
            3 => CertKind::AppLeaf,
            4 => CertKind::GatewayLeaf,
            5 => CertKind::TlsLeaf,
            _ => return Err(WireError::InvalidField("cert kind")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub start: u64,
    pub end: u64,
}

impl Validity {
    pub const FOREVER: Validity = Validity { start: 0, end: u64::MAX };

    pub fn contains(&self, now: u64) -> bool {
        self.start <= now && now < self.end
    }
}

/// Everything in a certificate except its signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertBody {
    pub subject: String,
    pub subject_public: PublicKey,
    pub issuer: String,
    pub kind: CertKind,
    pub app_id_ext: Option<Digest>,
    pub quote_digest_ext: Option<Digest>,
    pub code_digest_ext: Option<Digest>,
    pub epoch: u64,
    pub validity: Validity,
}

impl Canonical for CertBody {
    fn encode(&self, w: &mut Writer) {
        w.raw(CERT_PREFIX)
            .str(&self.subject)
            .public_key(&self.subject_public)
            .str(&self.issuer)
            .u8(self.kind.tag())
            .opt_digest(self.app_id_ext.as_ref())
            .opt_digest(self.quote_digest_ext.as_ref())
            .opt_digest(self.code_digest_ext.as_ref())
            .u64(self.epoch)
            .u64(self.validity.start)
            .u64(self.validity.end);
    }
}

const CERT_PREFIX: &[u8] = b"teestack/cert/v1";

impl CertBody {
    pub fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        if r.take(CERT_PREFIX.len())? != CERT_PREFIX {
            return Err(WireError::InvalidField("cert prefix"));
        }
        Ok(Self {
            subject: r.string()?,
            subject_public: r.public_key()?,
            issuer: r.string()?,
            kind: CertKind::from_tag(r.u8()?)?,
            app_id_ext: r.opt_digest()?,
            quote_digest_ext: r.opt_digest()?,
            code_digest_ext: r.opt_digest()?,
            epoch: r.u64()?,
            validity: Validity { start: r.u64()?, end: r.u64()? },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(flatten)]
    pub body: CertBody,
    pub signature: Signature,
}

impl Certificate {
    pub fn sign(body: CertBody, issuer_key: &KeyPair) -> Self {
        let signature = issuer_key.sign(&body.to_canonical_bytes());
        Self { body, signature }
    }

    pub fn verify_signature(&self, issuer_public: &PublicKey) -> bool {
        verify(issuer_public, &self.body.to_canonical_bytes(), &self.signature)
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_canonical_bytes())
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self { body: CertBody::read(r)?, signature: r.signature()? })
    }
}

impl Canonical for Certificate {
    fn encode(&self, w: &mut Writer) {
        self.body.encode(w);
        w.signature(&self.signature);
    }
}

impl std::ops::Deref for Certificate {
    type Target = CertBody;

    fn deref(&self) -> &CertBody {
        &self.body
    }
}

impl Canonical for CertificateChain {
    fn encode(&self, w: &mut Writer) {
        w.u32(self.certs.len() as u32);
        for c in &self.certs {
            c.encode(w);
        }
    }
}

/// Leaf first, root last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateChain {
    pub certs: Vec<Certificate>,
}

impl CertificateChain {
    pub fn new(certs: Vec<Certificate>) -> Self {
        Self { certs }
    }

    pub fn leaf(&self) -> Option<&Certificate> {
        self.certs.first()
    }

    pub fn root(&self) -> Option<&Certificate> {
        self.certs.last()
    }

    /// Prepends a new leaf issued by the current leaf's key.
    pub fn extend_with(&self, body: CertBody, leaf_key: &KeyPair) -> Self {
        let mut certs = Vec::with_capacity(self.certs.len() + 1);
        certs.push(Certificate::sign(body, leaf_key));
        certs.extend(self.certs.iter().cloned());
        Self { certs }
    }

    /// Structural checks: validity windows, issuer links, signatures, a
    /// self-signed root and one epoch throughout. Does not look at time.
    pub fn verify_structure(&self) -> Result<(), CertError> {
        let root = self.root().ok_or(CertError::Empty)?;
        for (i, cert) in self.certs.iter().enumerate() {
            if cert.validity.start >= cert.validity.end {
                return Err(CertError::InvalidValidity(i));
            }
            if cert.epoch != root.epoch {
                return Err(CertError::EpochMismatch(i));
            }
            let issuer = self.certs.get(i + 1).unwrap_or(cert);
            if cert.issuer != issuer.subject {
                return Err(if i + 1 == self.certs.len() { CertError::NotSelfSigned } else { CertError::IssuerMismatch(i) });
            }
            if !cert.verify_signature(&issuer.subject_public) {
                return Err(CertError::BadSignature(i));
            }
        }
        Ok(())
    }

    /// Structural checks plus the requirement that the root key is `expected_root`.
    pub fn verify(&self, expected_root: &PublicKey) -> Result<(), CertError> {
        self.verify_structure()?;
        if self.root().map(|r| r.subject_public) != Some(*expected_root) {
            return Err(CertError::ForeignRoot);
        }
        Ok(())
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let count = r.u32()?;
        let certs = (0..count).map(|_| Certificate::read(r)).collect::<Result<_, _>>()?;
        Ok(Self { certs })
    }

    /// True if every certificate's validity window contains `now`.
    pub fn valid_at(&self, now: u64) -> bool {
        self.certs.iter().all(|c| c.validity.contains(now))
    }
}
