// SPDX-License-Identifier: Apache-2.0

//! Sealed volumes with rollback protection.
//!
//! A volume is encrypted under a KMS-derived key and carries an
//! authenticated header naming the app, the root epoch, the key scope and a
//! monotonic counter value. Sealing bumps the counter; unsealing refuses any
//! volume whose counter value is below the counter's current value, so an
//! old snapshot cannot be replayed once something newer was sealed. A value
//! equal to the current one is accepted.
//!
//! Disk keys are bound to one instance. Moving data to another instance, or
//! to a new root epoch, goes through [`migrate`] (or [`backup`] and
//! [`restore`], which use the app-wide env key).
//!
//! # File format
//!
//! ```text
//! "TSVOL" | version: u8 = 1 | header | ciphertext (u32 length + bytes)
//!
//! header = app_id[32] | epoch: u64 | scope: u8 (1 instance, 2 app)
//!        | counter_name (u32 length + utf-8) | counter_value: u64 | nonce[12]
//! ```
//!
//! The encoded header is the AEAD associated data.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{aead_open, aead_seal, Digest, Nonce, SecretScalar};
use crate::governance::Chain;
use crate::kms::AppKeyBundle;
use crate::wire::{Canonical, Reader, WireError, Writer};

pub const MAGIC: &[u8; 5] = b"TSVOL";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error("counter service unavailable")]
    CounterUnavailable,
    #[error("epoch {0} has expired")]
    EpochExpired(u64),
    #[error("volume is from epoch {volume}, keys are from epoch {keys}")]
    EpochMismatch { volume: u64, keys: u64 },
    #[error("volume belongs to a different app")]
    AppMismatch,
    #[error("authentication failed")]
    Authentication,
    #[error("rollback detected: volume counter {found} is below {current}")]
    RollbackDetected { found: u64, current: u64 },
    #[error("epoch {0} was destroyed; the volume cannot be recovered")]
    Unrecoverable(u64),
    #[error("not a sealed volume")]
    BadMagic,
    #[error("unsupported volume format version {0}")]
    UnsupportedVersion(u8),
    #[error("malformed volume: {0}")]
    Format(#[from] WireError),
}

impl StorageError {
    pub fn code(&self) -> &'static str {
        match self {
            StorageError::CounterUnavailable => "counter-unavailable",
            StorageError::EpochExpired(_) => "epoch-expired",
            StorageError::EpochMismatch { .. } => "epoch-mismatch",
            StorageError::AppMismatch => "app-mismatch",
            StorageError::Authentication => "authentication-failed",
            StorageError::RollbackDetected { .. } => "rollback-detected",
            StorageError::Unrecoverable(_) => "unrecoverable",
            StorageError::BadMagic | StorageError::UnsupportedVersion(_) | StorageError::Format(_) => "malformed-volume",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyScope {
    /// Sealed under the instance-bound disk key.
    Instance,
    /// Sealed under the app-wide env key (backups).
    App,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub app_id: Digest,
    pub epoch: u64,
    pub key_scope: KeyScope,
    pub counter_name: String,
    pub counter_value: u64,
    #[serde(with = "hex_nonce")]
    pub nonce: Nonce,
}

mod hex_nonce {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 12], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 12], D::Error> {
        let raw = hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)?;
        raw.try_into().map_err(|_| serde::de::Error::custom("expected 12 bytes"))
    }
}

impl Canonical for VolumeHeader {
    fn encode(&self, w: &mut Writer) {
        let scope = match self.key_scope {
            KeyScope::Instance => 1,
            KeyScope::App => 2,
        };
        w.digest(&self.app_id)
            .u64(self.epoch)
            .u8(scope)
            .str(&self.counter_name)
            .u64(self.counter_value)
            .raw(&self.nonce);
    }
}

impl VolumeHeader {
    fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            app_id: r.digest()?,
            epoch: r.u64()?,
            key_scope: match r.u8()? {
                1 => KeyScope::Instance,
                2 => KeyScope::App,
                _ => return Err(WireError::InvalidField("key_scope")),
            },
            counter_name: r.string()?,
            counter_value: r.u64()?,
            nonce: r.fixed()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedVolume {
    pub header: VolumeHeader,
    #[serde(with = "hex")]
    pub ciphertext: Vec<u8>,
}

impl SealedVolume {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(MAGIC).u8(FORMAT_VERSION);
        self.header.encode(&mut w);
        w.bytes(&self.ciphertext);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StorageError> {
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len()).map_err(|_| StorageError::BadMagic)? != MAGIC {
            return Err(StorageError::BadMagic);
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(StorageError::UnsupportedVersion(version));
        }
        let header = VolumeHeader::read(&mut r)?;
        let ciphertext = r.bytes()?.to_vec();
        r.expect_end()?;
        Ok(Self { header, ciphertext })
    }
}

/// A volume re-sealed under the app-wide key, plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupBlob {
    pub volume: SealedVolume,
    pub source_instance: Digest,
}

/// Authority for monotonic counters and epoch liveness.
pub trait CounterService {
    fn read(&self, app_id: &Digest, name: &str) -> Result<u64, StorageError>;
    fn bump(&mut self, app_id: &Digest, name: &str) -> Result<u64, StorageError>;
    fn epoch_live(&self, epoch: u64) -> Result<bool, StorageError>;

    /// Whether rollback protection backed by this service can be relied on.
    fn is_trusted(&self) -> bool {
        true
    }
}

/// The governance chain is the trusted counter authority.
impl CounterService for Chain {
    fn read(&self, app_id: &Digest, name: &str) -> Result<u64, StorageError> {
        self.counter_read(app_id, name).map_err(|_| StorageError::CounterUnavailable)
    }

    fn bump(&mut self, app_id: &Digest, name: &str) -> Result<u64, StorageError> {
        self.counter_bump(app_id, name).map_err(|_| StorageError::CounterUnavailable)
    }

    fn epoch_live(&self, epoch: u64) -> Result<bool, StorageError> {
        Ok(self.kms_auth().epoch_live(epoch))
    }
}

/// Counters kept inside one instance. Useful offline; an attacker who can
/// snapshot the instance can roll these back too, so they are untrusted.
#[derive(Debug, Clone, Default)]
pub struct LocalCounters {
    counters: BTreeMap<(Digest, String), u64>,
    expired: BTreeSet<u64>,
}

impl LocalCounters {
    pub fn expire_epoch(&mut self, epoch: u64) {
        self.expired.insert(epoch);
    }
}

impl CounterService for LocalCounters {
    fn read(&self, app_id: &Digest, name: &str) -> Result<u64, StorageError> {
        Ok(self.counters.get(&(*app_id, name.to_owned())).copied().unwrap_or(0))
    }

    fn bump(&mut self, app_id: &Digest, name: &str) -> Result<u64, StorageError> {
        let v = self.counters.entry((*app_id, name.to_owned())).or_insert(0);
        *v += 1;
        Ok(*v)
    }

    fn epoch_live(&self, epoch: u64) -> Result<bool, StorageError> {
        Ok(!self.expired.contains(&epoch))
    }

    fn is_trusted(&self) -> bool {
        false
    }
}

/// A counter service that cannot be reached. Everything fails closed.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnavailableCounters;

impl CounterService for UnavailableCounters {
    fn read(&self, _: &Digest, _: &str) -> Result<u64, StorageError> {
        Err(StorageError::CounterUnavailable)
    }

    fn bump(&mut self, _: &Digest, _: &str) -> Result<u64, StorageError> {
        Err(StorageError::CounterUnavailable)
    }

    fn epoch_live(&self, _: u64) -> Result<bool, StorageError> {
        Err(StorageError::CounterUnavailable)
    }
}

fn key_for(bundle: &AppKeyBundle, scope: KeyScope) -> &SecretScalar {
    match scope {
        KeyScope::Instance => &bundle.disk_key,
        KeyScope::App => &bundle.env_key,
    }
}

fn seal_raw<R: RngCore + CryptoRng>(
    bundle: &AppKeyBundle,
    key_scope: KeyScope,
    plaintext: &[u8],
    counter_name: &str,
    counter_value: u64,
    rng: &mut R,
) -> SealedVolume {
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let header = VolumeHeader {
        app_id: bundle.app_id,
        epoch: bundle.epoch,
        key_scope,
        counter_name: counter_name.to_owned(),
        counter_value,
        nonce,
    };
    let ciphertext = aead_seal(key_for(bundle, key_scope), &nonce, &header.to_canonical_bytes(), plaintext);
    SealedVolume { header, ciphertext }
}

/// Bumps the counter and seals `plaintext` under the instance disk key.
pub fn seal<R: RngCore + CryptoRng>(
    bundle: &AppKeyBundle,
    plaintext: &[u8],
    counter_name: &str,
    counters: &mut dyn CounterService,
    rng: &mut R,
) -> Result<SealedVolume, StorageError> {
    let value = counters.bump(&bundle.app_id, counter_name)?;
    Ok(seal_raw(bundle, KeyScope::Instance, plaintext, counter_name, value, rng))
}

/// Checks, in order: epoch liveness, key epoch and app, authentication, and
/// the counter.
pub fn unseal(bundle: &AppKeyBundle, volume: &SealedVolume, counters: &dyn CounterService) -> Result<Vec<u8>, StorageError> {
    let h = &volume.header;
    if !counters.epoch_live(h.epoch)? {
        return Err(StorageError::EpochExpired(h.epoch));
    }
    if bundle.epoch != h.epoch {
        return Err(StorageError::EpochMismatch { volume: h.epoch, keys: bundle.epoch });
    }
    if bundle.app_id != h.app_id {
        return Err(StorageError::AppMismatch);
    }
    let plaintext = aead_open(key_for(bundle, h.key_scope), &h.nonce, &h.to_canonical_bytes(), &volume.ciphertext)
        .map_err(|_| StorageError::Authentication)?;
    let current = counters.read(&h.app_id, &h.counter_name)?;
    if h.counter_value < current {
        return Err(StorageError::RollbackDetected { found: h.counter_value, current });
    }
    Ok(plaintext)
}

/// Re-seals a volume under the app-wide key so any authorized instance of
/// the app can restore it. Keeps the counter value, so a backup goes stale
/// exactly when the volume it was taken from does.
pub fn backup<R: RngCore + CryptoRng>(
    bundle: &AppKeyBundle,
    volume: &SealedVolume,
    counters: &dyn CounterService,
    rng: &mut R,
) -> Result<BackupBlob, StorageError> {
    let plaintext = unseal(bundle, volume, counters)?;
    let h = &volume.header;
    let sealed = seal_raw(bundle, KeyScope::App, &plaintext, &h.counter_name, h.counter_value, rng);
    Ok(BackupBlob { volume: sealed, source_instance: bundle.instance_id })
}

pub fn restore(bundle: &AppKeyBundle, blob: &BackupBlob, counters: &dyn CounterService) -> Result<Vec<u8>, StorageError> {
    unseal(bundle, &blob.volume, counters)
}

/// Opens `volume` with `old` keys and re-seals it under `new` keys, bumping
/// the counter. Covers both cross-instance moves and epoch migration.
pub fn migrate<R: RngCore + CryptoRng>(
    volume: &SealedVolume,
    old: &AppKeyBundle,
    new: &AppKeyBundle,
    counters: &mut dyn CounterService,
    rng: &mut R,
) -> Result<SealedVolume, StorageError> {
    let plaintext = unseal(old, volume, counters).map_err(|e| match e {
        StorageError::EpochExpired(epoch) => StorageError::Unrecoverable(epoch),
        other => other,
    })?;
    seal(new, &plaintext, &volume.header.counter_name, counters, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use crate::kms::{LeafExtensions, LeafRole, RootKeyState, RootSecrets};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn bundle(root: &RootKeyState, instance: &[u8]) -> AppKeyBundle {
        AppKeyBundle::derive(root, &hash(b"app"), &hash(instance), LeafRole::App, LeafExtensions::default())
    }

    fn root(epoch: u64, seed: u64) -> RootKeyState {
        RootKeyState::new(epoch, RootSecrets::generate(&mut ChaCha20Rng::seed_from_u64(seed)), None)
    }

    #[test]
    fn seal_round_trips_and_counts() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = bundle(&root(1, 1), b"i1");
        let mut c = LocalCounters::default();
        let v1 = seal(&b, b"hello", "db", &mut c, &mut rng).unwrap();
        let v2 = seal(&b, b"world", "db", &mut c, &mut rng).unwrap();
        assert_eq!((v1.header.counter_value, v2.header.counter_value), (1, 2));
        assert_eq!(unseal(&b, &v2, &c).unwrap(), b"world");
        assert_eq!(unseal(&b, &v1, &c), Err(StorageError::RollbackDetected { found: 1, current: 2 }));
        assert!(!c.is_trusted());
    }

    #[test]
    fn header_fields_are_authenticated() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let b = bundle(&root(1, 1), b"i1");
        let mut c = LocalCounters::default();
        let v = seal(&b, b"data", "db", &mut c, &mut rng).unwrap();
        let mut bumped = v.clone();
        bumped.header.counter_value += 5;
        assert_eq!(unseal(&b, &bumped, &c), Err(StorageError::Authentication));
        let mut renamed = v.clone();
        renamed.header.counter_name = "other".into();
        assert_eq!(unseal(&b, &renamed, &c), Err(StorageError::Authentication));
        let mut moved = v;
        moved.header.epoch = 2;
        let b2 = AppKeyBundle { epoch: 2, ..b.clone() };
        assert_eq!(unseal(&b2, &moved, &c), Err(StorageError::Authentication));
    }

    #[test]
    fn unavailable_counters_fail_closed() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let b = bundle(&root(1, 1), b"i1");
        let mut c = LocalCounters::default();
        let v = seal(&b, b"x", "db", &mut c, &mut rng).unwrap();
        assert_eq!(seal(&b, b"x", "db", &mut UnavailableCounters, &mut rng), Err(StorageError::CounterUnavailable));
        assert_eq!(unseal(&b, &v, &UnavailableCounters), Err(StorageError::CounterUnavailable));
    }

    #[test]
    fn other_instance_needs_migration() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let r = root(1, 1);
        let (a, b) = (bundle(&r, b"a"), bundle(&r, b"b"));
        let mut c = LocalCounters::default();
        let v = seal(&a, b"payload", "db", &mut c, &mut rng).unwrap();
        assert_eq!(unseal(&b, &v, &c), Err(StorageError::Authentication));
        let moved = migrate(&v, &a, &b, &mut c, &mut rng).unwrap();
        assert_eq!(unseal(&b, &moved, &c).unwrap(), b"payload");
        let blob = backup(&b, &moved, &c, &mut rng).unwrap();
        assert_eq!(restore(&a, &blob, &c).unwrap(), b"payload");
    }

    #[test]
    fn epoch_migration_and_expiry() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (old, new) = (bundle(&root(1, 1), b"i"), bundle(&root(2, 2), b"i"));
        let mut c = LocalCounters::default();
        let v = seal(&old, b"secret", "db", &mut c, &mut rng).unwrap();
        let stale = v.clone();
        let moved = migrate(&v, &old, &new, &mut c, &mut rng).unwrap();
        assert_eq!(moved.header.epoch, 2);
        assert_eq!(unseal(&new, &moved, &c).unwrap(), b"secret");
        c.expire_epoch(1);
        assert_eq!(unseal(&old, &stale, &c), Err(StorageError::EpochExpired(1)));
        assert_eq!(migrate(&stale, &old, &new, &mut c, &mut rng), Err(StorageError::Unrecoverable(1)));
    }

    #[test]
    fn file_format_round_trips_and_rejects_garbage() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let b = bundle(&root(1, 1), b"i");
        let v = seal(&b, b"bytes", "db", &mut LocalCounters::default(), &mut rng).unwrap();
        let raw = v.to_bytes();
        assert_eq!(&raw[..5], MAGIC);
        assert_eq!(raw[5], FORMAT_VERSION);
        assert_eq!(SealedVolume::from_bytes(&raw).unwrap(), v);
        assert_eq!(SealedVolume::from_bytes(b"NOPE!"), Err(StorageError::BadMagic));
        let mut bad = raw.clone();
        bad[5] = 9;
        assert_eq!(SealedVolume::from_bytes(&bad), Err(StorageError::UnsupportedVersion(9)));
        assert!(SealedVolume::from_bytes(&raw[..raw.len() - 1]).is_err());
    }

    #[test]
    fn no_plaintext_four_gram_survives_sealing() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let b = bundle(&root(1, 1), b"i");
        let mut c = LocalCounters::default();
        for _ in 0..1000 {
            let len = rng.gen_range(4..64);
            let pt: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let v = seal(&b, &pt, "db", &mut c, &mut rng).unwrap();
            for gram in pt.windows(4) {
                assert!(!v.ciphertext.windows(4).any(|w| w == gram));
            }
        }
    }

    proptest! {
        #[test]
        fn migration_preserves_content(data in proptest::collection::vec(any::<u8>(), 0..200), seed: u64) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (a, b) = (bundle(&root(1, 1), b"a"), bundle(&root(2, 2), b"b"));
            let mut c = LocalCounters::default();
            let v = seal(&a, &data, "db", &mut c, &mut rng).unwrap();
            let before = unseal(&a, &v, &c).unwrap();
            let moved = migrate(&v, &a, &b, &mut c, &mut rng).unwrap();
            prop_assert_eq!(unseal(&b, &moved, &c).unwrap(), before);
        }
    }
}
