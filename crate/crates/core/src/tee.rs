// SPDX-License-Identifier: Apache-2.0

//! Software stand-in for a VM-level TEE.
//!
//! A [`TeeInstance`] owns a measurement register bank (MRTD plus RTMR0-3), a
//! hardware key certified by a simulated vendor, and a firmware version. The
//! boot sequence extends each register with the digest of the next stage:
//!
//! | register | measured stage                          |
//! |----------|-----------------------------------------|
//! | MRTD     | virtual firmware (OVMF)                 |
//! | RTMR0    | VM configuration                        |
//! | RTMR1    | kernel image                            |
//! | RTMR2    | initrd / root filesystem                |
//! | RTMR3    | application, then the KMS identity      |
//!
//! Extending is `new = SHA-256(old || event)`.

use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, hash_concat, verify, Digest, KeyPair, PublicKey, Signature};
use crate::wire::{Canonical, Reader, WireError, Writer};

pub const REPORT_DATA_LEN: usize = 64;
const QUOTE_VERSION: u16 = 1;
const VENDOR_CERT_CONTEXT: &[u8] = b"teestack/vendor-cert/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TeeError {
    #[error("invalid register id {0}")]
    InvalidRegister(String),
    #[error("instance has not booted")]
    NotBooted,
    #[error("instance already booted")]
    AlreadyBooted,
    #[error("report data is {0} bytes, at most 64 allowed")]
    ReportDataTooLong(usize),
    #[error("spoofed quote: {0}")]
    SpoofedQuote(&'static str),
    #[error("outdated firmware: version {found} below minimum {minimum}")]
    OutdatedFirmware { found: u32, minimum: u32 },
    #[error("malformed quote: {0}")]
    Malformed(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Register {
    Mrtd,
    Rtmr0,
    Rtmr1,
    Rtmr2,
    Rtmr3,
}

impl Register {
    pub const ALL: [Register; 5] = [Register::Mrtd, Register::Rtmr0, Register::Rtmr1, Register::Rtmr2, Register::Rtmr3];

    pub fn name(self) -> &'static str {
        match self {
            Register::Mrtd => "mrtd",
            Register::Rtmr0 => "rtmr0",
            Register::Rtmr1 => "rtmr1",
            Register::Rtmr2 => "rtmr2",
            Register::Rtmr3 => "rtmr3",
        }
    }
}

impl std::str::FromStr for Register {
    type Err = TeeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Register::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TeeError::InvalidRegister(s.to_owned()))
    }
}

/// The register bank. All-zero at creation; changed only by [`extend`](Self::extend).
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MeasurementState {
    mrtd: Digest,
    rtmr: [Digest; 4],
}

impl MeasurementState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, register: Register) -> Digest {
        match register {
            Register::Mrtd => self.mrtd,
            Register::Rtmr0 => self.rtmr[0],
            Register::Rtmr1 => self.rtmr[1],
            Register::Rtmr2 => self.rtmr[2],
            Register::Rtmr3 => self.rtmr[3],
        }
    }

    fn slot(&mut self, register: Register) -> &mut Digest {
        match register {
            Register::Mrtd => &mut self.mrtd,
            Register::Rtmr0 => &mut self.rtmr[0],
            Register::Rtmr1 => &mut self.rtmr[1],
            Register::Rtmr2 => &mut self.rtmr[2],
            Register::Rtmr3 => &mut self.rtmr[3],
        }
    }

    pub fn extend(&mut self, register: Register, event: &Digest) {
        let slot = self.slot(register);
        *slot = hash_concat(&[&slot.0, &event.0]);
    }

    /// Final state after applying `events` in order to a fresh bank.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a MeasurementEvent>) -> Self {
        let mut s = Self::new();
        for e in events {
            s.extend(e.register, &e.digest);
        }
        s
    }

    /// Digest of the OS part of the boot chain (MRTD, RTMR0-2).
    pub fn os_digest(&self) -> Digest {
        hash_concat(&[&self.mrtd.0, &self.rtmr[0].0, &self.rtmr[1].0, &self.rtmr[2].0])
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let mrtd = r.digest()?;
        let rtmr = [r.digest()?, r.digest()?, r.digest()?, r.digest()?];
        Ok(Self { mrtd, rtmr })
    }
}

impl Canonical for MeasurementState {
    fn encode(&self, w: &mut Writer) {
        w.digest(&self.mrtd);
        for r in &self.rtmr {
            w.digest(r);
        }
    }
}

impl fmt::Debug for MeasurementState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementState")
            .field("mrtd", &self.mrtd.short_hex(16))
            .field("rtmr0", &self.rtmr[0].short_hex(16))
            .field("rtmr1", &self.rtmr[1].short_hex(16))
            .field("rtmr2", &self.rtmr[2].short_hex(16))
            .field("rtmr3", &self.rtmr[3].short_hex(16))
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub register: Register,
    pub digest: Digest,
    pub description: String,
}

/// An OS build: the four digests measured before the application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsImage {
    pub ovmf_digest: Digest,
    pub vm_config_digest: Digest,
    pub kernel_digest: Digest,
    pub initrd_rootfs_digest: Digest,
}

impl OsImage {
    /// Deterministic image whose component digests are hashes of labelled names.
    pub fn named(name: &str) -> Self {
        let part = |p: &str| hash(format!("{name}/{p}").as_bytes());
        Self {
            ovmf_digest: part("ovmf"),
            vm_config_digest: part("vm-config"),
            kernel_digest: part("kernel"),
            initrd_rootfs_digest: part("initrd-rootfs"),
        }
    }

    /// The value registered on chain for this build.
    pub fn os_digest(&self) -> Digest {
        let mut s = MeasurementState::new();
        s.extend(Register::Mrtd, &self.ovmf_digest);
        s.extend(Register::Rtmr0, &self.vm_config_digest);
        s.extend(Register::Rtmr1, &self.kernel_digest);
        s.extend(Register::Rtmr2, &self.initrd_rootfs_digest);
        s.os_digest()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootManifest {
    pub ovmf_digest: Digest,
    pub vm_config_digest: Digest,
    pub kernel_digest: Digest,
    pub initrd_rootfs_digest: Digest,
    pub app_digest: Digest,
    /// Digest of the KMS identity the application is bound to; measured into
    /// RTMR3 right after the application. KMS nodes themselves boot without one.
    pub kms_identity: Option<Digest>,
}

impl BootManifest {
    pub fn new(os: &OsImage, app_digest: Digest, kms_identity: Option<Digest>) -> Self {
        Self {
            ovmf_digest: os.ovmf_digest,
            vm_config_digest: os.vm_config_digest,
            kernel_digest: os.kernel_digest,
            initrd_rootfs_digest: os.initrd_rootfs_digest,
            app_digest,
            kms_identity,
        }
    }

    pub fn events(&self) -> Vec<MeasurementEvent> {
        let ev = |register, digest, d: &str| MeasurementEvent { register, digest, description: d.to_owned() };
        let mut out = vec![
            ev(Register::Mrtd, self.ovmf_digest, "ovmf"),
            ev(Register::Rtmr0, self.vm_config_digest, "vm-config"),
            ev(Register::Rtmr1, self.kernel_digest, "kernel"),
            ev(Register::Rtmr2, self.initrd_rootfs_digest, "initrd-rootfs"),
            ev(Register::Rtmr3, self.app_digest, "app"),
        ];
        if let Some(k) = self.kms_identity {
            out.push(ev(Register::Rtmr3, k, "kms-identity"));
        }
        out
    }
}

/// Measurements produced by booting `manifest` on a fresh instance.
pub fn boot(manifest: &BootManifest) -> MeasurementState {
    MeasurementState::replay(&manifest.events())
}

/// The RTMR3 value an instance running `app_digest` bound to `kms_identity`
/// must report.
pub fn expected_rtmr3(app_digest: &Digest, kms_identity: Option<&Digest>) -> Digest {
    let mut s = MeasurementState::new();
    s.extend(Register::Rtmr3, app_digest);
    if let Some(k) = kms_identity {
        s.extend(Register::Rtmr3, k);
    }
    s.get(Register::Rtmr3)
}

fn vendor_cert_message(instance_key: &PublicKey, firmware_version: u32) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(VENDOR_CERT_CONTEXT).public_key(instance_key).u32(firmware_version);
    w.finish()
}

/// Simulated hardware vendor: certifies per-instance keys.
#[derive(Debug, Clone)]
pub struct Vendor {
    key: KeyPair,
}

impl Vendor {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self { key: KeyPair::generate(rng) }
    }

    pub fn public(&self) -> PublicKey {
        self.key.public()
    }

    pub fn root(&self, min_firmware_version: u32) -> AttestationRoot {
        AttestationRoot { vendor_public: self.public(), min_firmware_version }
    }

    pub fn certify(&self, instance_key: &PublicKey, firmware_version: u32) -> Signature {
        self.key.sign(&vendor_cert_message(instance_key, firmware_version))
    }

    /// Provisions a new certified instance.
    pub fn provision<R: RngCore + CryptoRng>(&self, firmware_version: u32, rng: &mut R) -> TeeInstance {
        let hw_key = KeyPair::generate(rng);
        let key_certificate = self.certify(&hw_key.public(), firmware_version);
        TeeInstance::with_key(hw_key, key_certificate, firmware_version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationRoot {
    pub vendor_public: PublicKey,
    pub min_firmware_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub measurements: MeasurementState,
    #[serde(with = "report_data_hex")]
    pub report_data: [u8; REPORT_DATA_LEN],
    pub tee_key_public: PublicKey,
    pub firmware_version: u32,
    /// Vendor signature over the instance key and firmware version.
    pub key_certificate: Signature,
    pub signature: Signature,
}

mod report_data_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let raw = hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)?;
        raw.try_into().map_err(|_| serde::de::Error::custom("report data must be 64 bytes"))
    }
}

/// Zero-pads `data` to 64 bytes.
pub fn pad_report_data(data: &[u8]) -> Result<[u8; REPORT_DATA_LEN], TeeError> {
    if data.len() > REPORT_DATA_LEN {
        return Err(TeeError::ReportDataTooLong(data.len()));
    }
    let mut out = [0u8; REPORT_DATA_LEN];
    out[..data.len()].copy_from_slice(data);
    Ok(out)
}

impl Quote {
    /// The signed part: everything except `signature`.
    ///
    /// ```text
    /// version u16 | mrtd | rtmr0..3 | report_data[64] | tee_key[32] | firmware u32 | key_cert[64]
    /// ```
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(QUOTE_VERSION);
        self.measurements.encode(&mut w);
        w.raw(&self.report_data)
            .public_key(&self.tee_key_public)
            .u32(self.firmware_version)
            .signature(&self.key_certificate);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u16()? != QUOTE_VERSION {
            return Err(WireError::InvalidField("quote version"));
        }
        let measurements = MeasurementState::read(&mut r)?;
        let report_data = r.fixed::<REPORT_DATA_LEN>()?;
        let tee_key_public = r.public_key()?;
        let firmware_version = r.u32()?;
        let key_certificate = r.signature()?;
        let signature = r.signature()?;
        r.expect_end()?;
        Ok(Self { measurements, report_data, tee_key_public, firmware_version, key_certificate, signature })
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_canonical_bytes())
    }

    pub fn instance_id(&self) -> Digest {
        self.tee_key_public.digest()
    }
}

impl Canonical for Quote {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.body_bytes()).signature(&self.signature);
    }
}

/// Fields of a quote that passed [`verify_quote`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedQuote {
    pub measurements: MeasurementState,
    pub report_data: [u8; REPORT_DATA_LEN],
    pub tee_key_public: PublicKey,
    pub firmware_version: u32,
    pub quote_digest: Digest,
}

impl VerifiedQuote {
    pub fn instance_id(&self) -> Digest {
        self.tee_key_public.digest()
    }
}

pub fn verify_quote(quote: &Quote, root: &AttestationRoot) -> Result<VerifiedQuote, TeeError> {
    let cert_msg = vendor_cert_message(&quote.tee_key_public, quote.firmware_version);
    if !verify(&root.vendor_public, &cert_msg, &quote.key_certificate) {
        return Err(TeeError::SpoofedQuote("instance key not certified by the vendor root"));
    }
    if !verify(&quote.tee_key_public, &quote.body_bytes(), &quote.signature) {
        return Err(TeeError::SpoofedQuote("quote signature invalid"));
    }
    if quote.firmware_version < root.min_firmware_version {
        return Err(TeeError::OutdatedFirmware { found: quote.firmware_version, minimum: root.min_firmware_version });
    }
    Ok(VerifiedQuote {
        measurements: quote.measurements.clone(),
        report_data: quote.report_data,
        tee_key_public: quote.tee_key_public,
        firmware_version: quote.firmware_version,
        quote_digest: quote.digest(),
    })
}

/// One simulated confidential VM.
#[derive(Debug, Clone)]
pub struct TeeInstance {
    hw_key: KeyPair,
    key_certificate: Signature,
    firmware_version: u32,
    measurement: MeasurementState,
    event_log: Vec<MeasurementEvent>,
    booted: bool,
}

impl TeeInstance {
    fn with_key(hw_key: KeyPair, key_certificate: Signature, firmware_version: u32) -> Self {
        Self {
            hw_key,
            key_certificate,
            firmware_version,
            measurement: MeasurementState::new(),
            event_log: Vec::new(),
            booted: false,
        }
    }

    /// A machine without vendor backing: its "certificate" is self-signed.
    pub fn uncertified<R: RngCore + CryptoRng>(firmware_version: u32, rng: &mut R) -> Self {
        let hw_key = KeyPair::generate(rng);
        let forged = hw_key.sign(&vendor_cert_message(&hw_key.public(), firmware_version));
        Self::with_key(hw_key, forged, firmware_version)
    }

    pub fn instance_id(&self) -> Digest {
        self.hw_key.public().digest()
    }

    pub fn public_key(&self) -> PublicKey {
        self.hw_key.public()
    }

    pub fn firmware_version(&self) -> u32 {
        self.firmware_version
    }

    pub fn measurement(&self) -> &MeasurementState {
        &self.measurement
    }

    pub fn event_log(&self) -> &[MeasurementEvent] {
        &self.event_log
    }

    pub fn is_booted(&self) -> bool {
        self.booted
    }

    pub fn boot(&mut self, manifest: &BootManifest) -> Result<&MeasurementState, TeeError> {
        if self.booted {
            return Err(TeeError::AlreadyBooted);
        }
        for ev in manifest.events() {
            self.measurement.extend(ev.register, &ev.digest);
            self.event_log.push(ev);
        }
        self.booted = true;
        Ok(&self.measurement)
    }

    /// Runtime extension of a register after boot (e.g. an application event).
    pub fn extend(&mut self, register: Register, digest: Digest, description: &str) {
        self.measurement.extend(register, &digest);
        self.event_log.push(MeasurementEvent { register, digest, description: description.to_owned() });
    }

    pub fn generate_quote(&self, report_data: &[u8]) -> Result<Quote, TeeError> {
        if !self.booted {
            return Err(TeeError::NotBooted);
        }
        let mut q = Quote {
            measurements: self.measurement.clone(),
            report_data: pad_report_data(report_data)?,
            tee_key_public: self.hw_key.public(),
            firmware_version: self.firmware_version,
            key_certificate: self.key_certificate,
            signature: Signature([0u8; 64]),
        };
        q.signature = self.hw_key.sign(&q.body_bytes());
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    fn digest(rng: &mut impl RngCore) -> Digest {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Digest(b)
    }

    fn manifest(rng: &mut impl RngCore) -> BootManifest {
        BootManifest {
            ovmf_digest: digest(rng),
            vm_config_digest: digest(rng),
            kernel_digest: digest(rng),
            initrd_rootfs_digest: digest(rng),
            app_digest: digest(rng),
            kms_identity: None,
        }
    }

    #[test]
    fn extend_follows_the_hash_rule() {
        let d = hash(b"event");
        let mut s = MeasurementState::new();
        s.extend(Register::Rtmr0, &d);
        assert_eq!(s.get(Register::Rtmr0), hash_concat(&[&[0u8; 32], &d.0]));
        for r in [Register::Mrtd, Register::Rtmr1, Register::Rtmr2, Register::Rtmr3] {
            assert_eq!(s.get(r), Digest::ZERO);
        }
    }

    #[test]
    fn extend_is_order_sensitive() {
        let (d1, d2) = (hash(b"1"), hash(b"2"));
        let mut a = MeasurementState::new();
        a.extend(Register::Rtmr2, &d1);
        a.extend(Register::Rtmr2, &d2);
        let mut b = MeasurementState::new();
        b.extend(Register::Rtmr2, &d2);
        b.extend(Register::Rtmr2, &d1);
        assert_ne!(a, b);
    }

    #[test]
    fn register_ids_parse_and_reject_unknown() {
        assert_eq!("RTMR3".parse::<Register>().unwrap(), Register::Rtmr3);
        assert_eq!("rtmr4".parse::<Register>(), Err(TeeError::InvalidRegister("rtmr4".into())));
    }

    #[test]
    fn boot_maps_stages_to_registers() {
        let mut r = rng();
        let m = manifest(&mut r);
        let s = boot(&m);
        assert_eq!(s, boot(&m));

        let mut only_ovmf = m.clone();
        only_ovmf.ovmf_digest = digest(&mut r);
        let s2 = boot(&only_ovmf);
        assert_ne!(s.get(Register::Mrtd), s2.get(Register::Mrtd));
        for reg in [Register::Rtmr0, Register::Rtmr1, Register::Rtmr2, Register::Rtmr3] {
            assert_eq!(s.get(reg), s2.get(reg));
        }

        let mut swapped = m.clone();
        std::mem::swap(&mut swapped.kernel_digest, &mut swapped.app_digest);
        let s3 = boot(&swapped);
        let one = |d: &Digest| hash_concat(&[&[0u8; 32], &d.0]);
        assert_eq!(s.get(Register::Rtmr1), one(&m.kernel_digest));
        assert_eq!(s3.get(Register::Rtmr1), s.get(Register::Rtmr3));
        assert_eq!(s3.get(Register::Rtmr3), s.get(Register::Rtmr1));
    }

    #[test]
    fn replaying_the_event_log_reproduces_the_registers() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let mut inst = vendor.provision(3, &mut r);
        inst.boot(&manifest(&mut r)).unwrap();
        inst.extend(Register::Rtmr3, hash(b"runtime"), "runtime event");
        assert_eq!(&MeasurementState::replay(inst.event_log()), inst.measurement());
    }

    #[test]
    fn os_image_digest_matches_booted_state() {
        let os = OsImage::named("guest-os-0.5");
        let m = BootManifest::new(&os, hash(b"app"), Some(hash(b"kms")));
        let s = boot(&m);
        assert_eq!(s.os_digest(), os.os_digest());
        assert_eq!(s.get(Register::Rtmr3), expected_rtmr3(&hash(b"app"), Some(&hash(b"kms"))));
    }

    #[test]
    fn quote_round_trips_for_random_manifests() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let root = vendor.root(2);
        for _ in 0..100 {
            let mut inst = vendor.provision(2 + r.gen_range(0..3), &mut r);
            let m = manifest(&mut r);
            inst.boot(&m).unwrap();
            let mut rd = vec![0u8; r.gen_range(0..=64)];
            r.fill_bytes(&mut rd);
            let q = inst.generate_quote(&rd).unwrap();
            let v = verify_quote(&q, &root).unwrap();
            assert_eq!(v.measurements, boot(&m));
            assert_eq!(&v.report_data[..rd.len()], &rd[..]);
            assert!(v.report_data[rd.len()..].iter().all(|&b| b == 0));
            assert_eq!(Quote::decode(&q.to_canonical_bytes()).unwrap(), q);
        }
    }

    #[test]
    fn full_report_data_is_preserved_and_oversize_rejected() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let mut inst = vendor.provision(1, &mut r);
        assert_eq!(inst.generate_quote(b"x"), Err(TeeError::NotBooted));
        inst.boot(&manifest(&mut r)).unwrap();
        let q = inst.generate_quote(&[0xff; 64]).unwrap();
        assert_eq!(q.report_data, [0xff; 64]);
        assert_eq!(inst.generate_quote(&[0; 65]), Err(TeeError::ReportDataTooLong(65)));
    }

    #[test]
    fn uncertified_hardware_is_spoofed() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let mut fake = TeeInstance::uncertified(9, &mut r);
        fake.boot(&manifest(&mut r)).unwrap();
        let q = fake.generate_quote(b"").unwrap();
        assert!(matches!(verify_quote(&q, &vendor.root(1)), Err(TeeError::SpoofedQuote(_))));
    }

    #[test]
    fn stale_firmware_is_rejected() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let mut inst = vendor.provision(1, &mut r);
        inst.boot(&manifest(&mut r)).unwrap();
        let q = inst.generate_quote(b"").unwrap();
        assert_eq!(
            verify_quote(&q, &vendor.root(2)),
            Err(TeeError::OutdatedFirmware { found: 1, minimum: 2 })
        );
    }

    #[test]
    fn single_byte_tamper_anywhere_fails() {
        let mut r = rng();
        let vendor = Vendor::new(&mut r);
        let root = vendor.root(0);
        let mut inst = vendor.provision(4, &mut r);
        inst.boot(&manifest(&mut r)).unwrap();
        let bytes = inst.generate_quote(b"nonce").unwrap().to_canonical_bytes();
        for i in 2..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            let q = Quote::decode(&b).unwrap();
            assert!(verify_quote(&q, &root).is_err(), "byte {i}");
        }
    }
}
