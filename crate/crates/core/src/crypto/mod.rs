// SPDX-License-Identifier: Apache-2.0

//! Cryptographic primitives shared by every other module.
//!
//! The suite is fixed per build:
//!
//! | primitive        | algorithm                         |
//! |------------------|-----------------------------------|
//! | hash             | SHA-256                           |
//! | key derivation   | HKDF-SHA256 (extract, then expand) |
//! | signatures       | Ed25519 (deterministic, strict verify) |
//! | sealing          | ChaCha20-Poly1305                 |
//! | secret sharing   | Shamir over GF(2^8), per byte     |
//!
//! All byte encodings are fixed width: a [`Digest`] is 32 bytes, a
//! [`PublicKey`] 32 bytes, a [`Signature`] 64 bytes, a [`KeyShare`] is its
//! one-byte index followed by its 32-byte payload.

pub mod gf256;
pub mod shamir;

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub use shamir::{reconstruct as shamir_reconstruct, split as shamir_split, zero_share_refresh};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid sharing parameters: threshold {threshold}, count {count}")]
    InvalidSharingParameters { threshold: usize, count: usize },
    #[error("insufficient shares: need {needed}, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u8),
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("share set is not a consistent sharing")]
    InconsistentShares,
    #[error("unknown key purpose label {0:?}")]
    UnknownPurpose(String),
    #[error("decryption failed: authentication tag mismatch")]
    Decrypt,
    #[error("invalid hex encoding")]
    Hex,
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let raw = hex::decode(s).map_err(|_| CryptoError::Hex)?;
                Self::from_slice(&raw)
            }

            pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = raw.try_into().map_err(|_| CryptoError::Length {
                    expected: $len,
                    got: raw.len(),
                })?;
                Ok(Self(arr))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(
    /// A SHA-256 output.
    Digest,
    32
);
fixed_bytes!(
    /// An Ed25519 verification key.
    PublicKey,
    32
);
fixed_bytes!(
    /// An Ed25519 signature.
    Signature,
    64
);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    /// First `n` hex characters.
    pub fn short_hex(&self, n: usize) -> String {
        let mut h = self.to_hex();
        h.truncate(n);
        h
    }
}

impl Default for Digest {
    fn default() -> Self {
        Digest::ZERO
    }
}

impl PublicKey {
    pub fn digest(&self) -> Digest {
        hash(&self.0)
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the plain concatenation of `parts`.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// 32 bytes of secret key material. Zeroized on drop, never printed.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SecretScalar([u8; 32]);

impl SecretScalar {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self(b)
    }

    pub fn expose(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SecretScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretScalar(<redacted>)")
    }
}

/// One participant's share: the x-coordinate and one GF(2^8) y-value per
/// secret byte.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize, Zeroize)]
pub struct KeyShare {
    pub index: u8,
    #[serde(with = "hex_array")]
    pub payload: [u8; 32],
}

impl KeyShare {
    pub const ENCODED_LEN: usize = 33;

    pub fn to_bytes(&self) -> [u8; 33] {
        let mut out = [0u8; 33];
        out[0] = self.index;
        out[1..].copy_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self, CryptoError> {
        if raw.len() != Self::ENCODED_LEN {
            return Err(CryptoError::Length { expected: Self::ENCODED_LEN, got: raw.len() });
        }
        if raw[0] == 0 {
            return Err(CryptoError::ZeroIndex);
        }
        let mut payload = [0u8; 32];
        payload.copy_from_slice(&raw[1..]);
        Ok(Self { index: raw[0], payload })
    }
}

impl fmt::Debug for KeyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyShare(index={}, <redacted>)", self.index)
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(s).map_err(serde::de::Error::custom)?;
        raw.try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

/// A signing key together with its verification key.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_secret(secret: &SecretScalar) -> Self {
        Self { signing: SigningKey::from_bytes(secret.expose()) }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(&SecretScalar::random(rng))
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public()).finish_non_exhaustive()
    }
}

pub fn sign(key: &KeyPair, message: &[u8]) -> Signature {
    key.sign(message)
}

/// Malformed keys or signatures yield `false`.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify_strict(message, &sig).is_ok()
}

/// Purpose labels accepted by [`derive_key`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    AppCa,
    Disk,
    Env,
    Ecdsa,
}

impl Purpose {
    pub const ALL: [Purpose; 4] = [Purpose::AppCa, Purpose::Disk, Purpose::Env, Purpose::Ecdsa];

    pub fn label(self) -> &'static str {
        match self {
            Purpose::AppCa => "app-ca",
            Purpose::Disk => "disk",
            Purpose::Env => "env",
            Purpose::Ecdsa => "ecdsa",
        }
    }

    pub fn from_label(label: &str) -> Result<Self, CryptoError> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == label)
            .ok_or_else(|| CryptoError::UnknownPurpose(label.to_owned()))
    }
}

const KDF_SALT: &[u8] = b"teestack/kdf/v1";

/// HKDF-SHA256 keyed by `parent`, with `label || 0x00 || context` as the
/// expansion info.
pub fn derive_key(parent: &SecretScalar, purpose: &str, context: &[u8]) -> Result<SecretScalar, CryptoError> {
    let purpose = Purpose::from_label(purpose)?;
    Ok(derive(parent, purpose, context))
}

pub(crate) fn derive(parent: &SecretScalar, purpose: Purpose, context: &[u8]) -> SecretScalar {
    let hk = Hkdf::<Sha256>::new(Some(KDF_SALT), parent.expose());
    let mut info = Vec::with_capacity(purpose.label().len() + 1 + context.len());
    info.extend_from_slice(purpose.label().as_bytes());
    info.push(0x00);
    info.extend_from_slice(context);
    let mut okm = [0u8; 32];
    hk.expand(&info, &mut okm).expect("32 bytes is a valid HKDF-SHA256 output length");
    let out = SecretScalar(okm);
    okm.zeroize();
    out
}

pub type Nonce = [u8; 12];

pub fn aead_seal(key: &SecretScalar, nonce: &Nonce, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(key.expose().into());
    cipher
        .encrypt(nonce.into(), Payload { msg: plaintext, aad })
        .expect("ChaCha20-Poly1305 encryption cannot fail for in-memory buffers")
}

pub fn aead_open(key: &SecretScalar, nonce: &Nonce, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let cipher = ChaCha20Poly1305::new(key.expose().into());
    cipher
        .decrypt(nonce.into(), Payload { msg: ciphertext, aad })
        .map_err(|_| CryptoError::Decrypt)
}
