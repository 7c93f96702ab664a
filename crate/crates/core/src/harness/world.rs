// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cert::{CertBody, CertKind, Certificate, Validity};
use crate::crypto::{hash, hash_concat, shamir, verify, Digest, KeyPair, KeyShare, PublicKey, SecretScalar};
use crate::gateway::{
    verify_presented_chain, AlertStore, AppCredential, CaaRecord, Gateway, GatewayError, Request, Response, Verdict, Zone,
};
use crate::governance::{
    admin_message, approval_message, in_cc_build, AdminAction, AppManifest, Approval, ApprovalStatus, Chain, GenesisConfig,
    GovernanceError, GovernanceParams, RotationKind,
};
use crate::kms::{
    AppKeyBundle, KeyRequest, KmsCluster, KmsError, KmsMode, LeafExtensions, LeafRole, NodeMaterial, RootKeyState, RootSecrets,
};
use crate::sim::{ActorId, SimNetwork};
use crate::storage::{self, BackupBlob, SealedVolume, StorageError};
use crate::tee::{expected_rtmr3, pad_report_data, verify_quote, BootManifest, OsImage, Register, TeeError, TeeInstance, Vendor};

/// Size of the pool app signers are drawn from.
const SIGNER_POOL: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub label: String,
    pub admins: usize,
    pub admin_threshold: usize,
    pub os_image: String,
    pub kms_code: String,
    pub kms: KmsMode,
    pub kms_nodes: usize,
    pub min_firmware: u32,
    pub firmware: u32,
    pub zone: String,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            label: "teestack-demo".into(),
            admins: 3,
            admin_threshold: 2,
            os_image: "teestack-os/1.0".into(),
            kms_code: "teestack-kms-node/1.0".into(),
            kms: KmsMode::Threshold { t: 2, n: 3 },
            kms_nodes: 3,
            min_firmware: 5,
            firmware: 5,
            zone: "apps.teestack.test".into(),
        }
    }
}

impl WorldConfig {
    pub fn os(&self) -> OsImage {
        OsImage::named(&self.os_image)
    }

    pub fn kms_code_digest(&self) -> Digest {
        hash(self.kms_code.as_bytes())
    }

    pub fn genesis(&self, admins: &[KeyPair]) -> GenesisConfig {
        GenesisConfig {
            label: self.label.clone(),
            admins: admins.iter().map(KeyPair::public).collect(),
            admin_threshold: self.admin_threshold,
            os_digests: BTreeSet::from([self.os().os_digest()]),
            kms_node_digest: self.kms_code_digest(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Kms(#[from] KmsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Tee(#[from] TeeError),
    #[error("{0} is not set up yet")]
    NotReady(&'static str),
    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },
    #[error("{detail}")]
    Check { code: &'static str, detail: String },
    #[error("bad scenario: {0}")]
    BadScenario(String),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::Governance(e) => e.code(),
            HarnessError::Kms(e) => e.code(),
            HarnessError::Gateway(e) => e.code(),
            HarnessError::Storage(e) => e.code(),
            HarnessError::Tee(TeeError::SpoofedQuote(_)) => "spoofed-quote",
            HarnessError::Tee(TeeError::OutdatedFirmware { .. }) => "outdated-firmware",
            HarnessError::Tee(_) => "attestation-failed",
            HarnessError::NotReady(_) => "not-ready",
            HarnessError::Unknown { .. } => "unknown-name",
            HarnessError::Check { code, .. } => code,
            HarnessError::BadScenario(_) => "bad-scenario",
        }
    }

    fn check(code: &'static str, detail: impl Into<String>) -> Self {
        HarnessError::Check { code, detail: detail.into() }
    }
}

fn unknown(kind: &'static str, name: &str) -> HarnessError {
    HarnessError::Unknown { kind, name: name.to_owned() }
}

#[derive(Debug, Clone)]
pub struct AppRecord {
    pub app_id: Digest,
    pub manifest: AppManifest,
    pub signers: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub app: String,
    pub manifest: AppManifest,
    pub tee: TeeInstance,
    pub bundles: BTreeMap<u64, AppKeyBundle>,
}

impl Instance {
    pub fn latest(&self) -> Option<&AppKeyBundle> {
        self.bundles.values().next_back()
    }
}

/// Options for starting an app instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployOptions {
    /// Build the image from this source instead of the registered one.
    pub source: Option<String>,
    pub firmware: Option<u32>,
    pub os: Option<String>,
    pub epoch: Option<u64>,
}

/// Whatever an attacker learned from dumping KMS nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompromiseResult {
    Recovered,
    Unrecoverable,
}

/// A complete deployment living in one process, driven by one seed.
pub struct World {
    pub cfg: WorldConfig,
    pub rng: ChaCha20Rng,
    pub net: SimNetwork,
    pub vendor: Vendor,
    pub admins: Vec<KeyPair>,
    pub signers: Vec<KeyPair>,
    pub chain: Option<Chain>,
    pub kms: Option<KmsCluster>,
    pub gateway: Option<Gateway>,
    pub apps: BTreeMap<String, AppRecord>,
    pub instances: BTreeMap<String, Instance>,
    pub hosts: BTreeMap<String, String>,
    pub volumes: BTreeMap<String, (String, SealedVolume)>,
    pub backups: BTreeMap<String, BackupBlob>,
    pub alerts: AlertStore,
}

impl World {
    pub fn new(seed: u64, cfg: WorldConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let vendor = Vendor::new(&mut rng);
        let admins = (0..cfg.admins).map(|_| KeyPair::generate(&mut rng)).collect();
        let signers = (0..SIGNER_POOL).map(|_| KeyPair::generate(&mut rng)).collect();
        Self {
            cfg,
            rng,
            net: SimNetwork::new(seed),
            vendor,
            admins,
            signers,
            chain: None,
            kms: None,
            gateway: None,
            apps: BTreeMap::new(),
            instances: BTreeMap::new(),
            hosts: BTreeMap::new(),
            volumes: BTreeMap::new(),
            backups: BTreeMap::new(),
            alerts: AlertStore::default(),
        }
    }

    pub fn chain(&self) -> Result<&Chain, HarnessError> {
        self.chain.as_ref().ok_or(HarnessError::NotReady("governance"))
    }

    fn parts(&mut self) -> Result<(&mut KmsCluster, &mut Chain, &mut SimNetwork), HarnessError> {
        let kms = self.kms.as_mut().ok_or(HarnessError::NotReady("kms"))?;
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        Ok((kms, chain, &mut self.net))
    }

    pub fn gateway(&self) -> Result<&Gateway, HarnessError> {
        self.gateway.as_ref().ok_or(HarnessError::NotReady("gateway"))
    }

    fn gateway_mut(&mut self) -> Result<&mut Gateway, HarnessError> {
        self.gateway.as_mut().ok_or(HarnessError::NotReady("gateway"))
    }

    pub fn app(&self, name: &str) -> Result<&AppRecord, HarnessError> {
        self.apps.get(name).ok_or_else(|| unknown("app", name))
    }

    pub fn instance(&self, name: &str) -> Result<&Instance, HarnessError> {
        self.instances.get(name).ok_or_else(|| unknown("instance", name))
    }

    pub fn now(&self) -> u64 {
        self.net.now()
    }

    /// Contract id an operator would pin from the published genesis config.
    pub fn expected_contract_id(&self) -> Digest {
        self.cfg.genesis(&self.admins).contract_id()
    }

    fn admin_approvals(&self, action: &AdminAction) -> Result<Vec<Approval>, HarnessError> {
        let msg = admin_message(action, self.chain()?.kms_auth().admin_nonce);
        let approvals = self.admins.iter().take(self.cfg.admin_threshold).map(|k| Approval { signer: k.public(), signature: k.sign(&msg) });
        Ok(approvals.collect())
    }

    pub fn genesis(&mut self, config: GenesisConfig) -> Result<Digest, HarnessError> {
        let chain = Chain::genesis(config)?;
        let id = chain.kms_auth().contract_id;
        self.chain = Some(chain);
        Ok(id)
    }

    pub fn boot_tee(&mut self, os: &OsImage, code: Digest, kms_identity: Option<Digest>, firmware: u32) -> TeeInstance {
        let mut tee = self.vendor.provision(firmware, &mut self.rng);
        tee.boot(&BootManifest::new(os, code, kms_identity)).expect("fresh instance boots");
        tee
    }

    /// Starts the first KMS node running `code`.
    pub fn bootstrap_kms(&mut self, mode: KmsMode, code: Digest) -> Result<(), HarnessError> {
        let mut kms = KmsCluster::new(mode, self.vendor.root(self.cfg.min_firmware))?;
        let tee = self.boot_tee(&self.cfg.os(), code, None, self.cfg.firmware);
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        kms.bootstrap_first_node("kms-0", tee, chain, &self.net, &mut self.rng)?;
        self.kms = Some(kms);
        Ok(())
    }

    /// Boots a KMS node, optionally registers it with governance, and asks
    /// the cluster to admit it.
    pub fn admit_kms_node(&mut self, name: &str, register: bool) -> Result<ActorId, HarnessError> {
        let tee = self.boot_tee(&self.cfg.os(), self.cfg.kms_code_digest(), None, self.cfg.firmware);
        if register {
            let approvals = self.admin_approvals(&AdminAction::RegisterKmsNode(tee.public_key()))?;
            self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?.register_kms_node(tee.public_key(), approvals)?;
        }
        let World { kms, chain, net, rng, .. } = self;
        let (kms, chain) = (kms.as_mut().ok_or(HarnessError::NotReady("kms"))?, chain.as_mut().expect("kms implies governance"));
        Ok(kms.admit_node(name, tee, chain, net, rng)?)
    }

    fn single_signer_params(&self) -> GovernanceParams {
        GovernanceParams { signers: BTreeSet::from([self.signers[0].public()]), threshold: 1, authorized_instances: BTreeSet::new() }
    }

    /// Registers the gateway as an app, boots it on `os`, fetches its
    /// identity from the KMS and checks that identity against the on-chain root.
    pub fn setup_gateway(&mut self, os: &OsImage) -> Result<(), HarnessError> {
        let manifest = AppManifest::new("teestack-gateway/1.0", vec![in_cc_build(b"teestack-gateway/1.0")], "")?;
        let params = self.single_signer_params();
        let app_id = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?.register_app(&manifest, params)?;
        let identity_digest = self.chain()?.kms_auth().kms_identity();
        let tee = self.boot_tee(os, manifest.app_digest(), identity_digest, self.cfg.firmware);
        let req = key_request(app_id, &manifest, &tee, None, LeafRole::Gateway)?;
        let (kms, chain, net) = self.parts()?;
        let bundle = kms.request_app_keys(&req, chain, net)?;
        let root = *chain.kms_auth().root_public().ok_or(HarnessError::NotReady("kms root"))?;
        bundle.cert_chain.verify(&root).map_err(|e| HarnessError::check("bad-chain", e.to_string()))?;
        let mut gw = Gateway::new(Zone::new(&self.cfg.zone), bundle, self.vendor.root(self.cfg.min_firmware));
        gw.caa_set(CaaRecord { domain: self.cfg.zone.clone(), allowed_issuer: gw.issuer_name() });
        self.gateway = Some(gw);
        Ok(())
    }

    /// Genesis, first node, admissions and gateway, all from the config.
    pub fn setup(&mut self, mode: Option<KmsMode>, nodes: Option<usize>) -> Result<(), HarnessError> {
        let mode = mode.unwrap_or(self.cfg.kms);
        self.genesis(self.cfg.genesis(&self.admins))?;
        self.bootstrap_kms(mode, self.cfg.kms_code_digest())?;
        for i in 1..nodes.unwrap_or(self.cfg.kms_nodes) {
            self.admit_kms_node(&format!("kms-{i}"), true)?;
        }
        self.setup_gateway(&self.cfg.os())
    }

    pub fn manifest(name: &str, source: &str) -> AppManifest {
        AppManifest { compose_text: format!("services:\n  {name}:\n    image: {name}\n"), image_digests: vec![in_cc_build(source.as_bytes())], config: String::new() }
    }

    pub fn register_app(&mut self, name: &str, source: &str, signers: usize, threshold: usize) -> Result<Digest, HarnessError> {
        if signers > SIGNER_POOL {
            return Err(HarnessError::BadScenario(format!("at most {SIGNER_POOL} signers")));
        }
        let manifest = Self::manifest(name, source);
        let params = GovernanceParams {
            signers: self.signers[..signers].iter().map(KeyPair::public).collect(),
            threshold,
            authorized_instances: BTreeSet::new(),
        };
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        let app_id = chain.register_app(&manifest, params)?;
        self.apps.insert(name.to_owned(), AppRecord { app_id, manifest, signers: (0..signers).collect() });
        Ok(app_id)
    }

    pub fn propose_upgrade(&mut self, app: &str, source: &str) -> Result<u64, HarnessError> {
        let rec = self.app(app)?.clone();
        let proposer = self.signers[*rec.signers.first().ok_or_else(|| unknown("signer", "0"))?].public();
        let digest = Self::manifest(app, source).app_digest();
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        Ok(chain.propose_upgrade(&rec.app_id, digest, &proposer)?)
    }

    pub fn propose_revocation(&mut self, app: &str, source: &str) -> Result<u64, HarnessError> {
        let rec = self.app(app)?.clone();
        let proposer = self.signers[*rec.signers.first().ok_or_else(|| unknown("signer", "0"))?].public();
        let digest = Self::manifest(app, source).app_digest();
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        Ok(chain.propose_revocation(&rec.app_id, digest, &proposer)?)
    }

    pub fn approve(&mut self, app: &str, proposal: u64, signer: usize) -> Result<ApprovalStatus, HarnessError> {
        let app_id = self.app(app)?.app_id;
        let key = self.signers.get(signer).ok_or_else(|| unknown("signer", &signer.to_string()))?;
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        let action = chain.state().app(&app_id)?.proposals.get(&proposal).ok_or(GovernanceError::UnknownProposal(proposal))?.action;
        let sig = key.sign(&approval_message(&app_id, &action));
        Ok(chain.approve(&app_id, proposal, &key.public(), &sig)?)
    }

    /// Boots `instance` for `app` (or reuses it) and requests its keys.
    pub fn deploy(&mut self, app: &str, instance: &str, opts: &DeployOptions) -> Result<u64, HarnessError> {
        let rec = self.app(app)?.clone();
        if !self.instances.contains_key(instance) {
            let manifest = match &opts.source {
                Some(src) => Self::manifest(app, src),
                None => rec.manifest.clone(),
            };
            let os = opts.os.as_deref().map(OsImage::named).unwrap_or_else(|| self.cfg.os());
            let identity = self.chain()?.kms_auth().kms_identity();
            let tee = self.boot_tee(&os, manifest.app_digest(), identity, opts.firmware.unwrap_or(self.cfg.firmware));
            let inst = Instance { app: app.to_owned(), manifest, tee, bundles: BTreeMap::new() };
            self.instances.insert(instance.to_owned(), inst);
        }
        let inst = &self.instances[instance];
        let req = key_request(rec.app_id, &inst.manifest, &inst.tee, opts.epoch, LeafRole::App)?;
        let (kms, chain, net) = self.parts()?;
        let bundle = kms.request_app_keys(&req, chain, net)?;
        let epoch = bundle.epoch;
        self.instances.get_mut(instance).expect("inserted").bundles.insert(epoch, bundle);
        Ok(epoch)
    }

    /// A key request from hardware the vendor never certified.
    pub fn forge_quote(&mut self, app: &str) -> Result<(), HarnessError> {
        let rec = self.app(app)?.clone();
        let identity = self.chain()?.kms_auth().kms_identity();
        let mut tee = TeeInstance::uncertified(self.cfg.firmware, &mut self.rng);
        tee.boot(&BootManifest::new(&self.cfg.os(), rec.manifest.app_digest(), identity))?;
        let req = key_request(rec.app_id, &rec.manifest, &tee, None, LeafRole::App)?;
        let (kms, chain, net) = self.parts()?;
        kms.request_app_keys(&req, chain, net)?;
        Ok(())
    }

    fn bundle_for(&self, instance: &str, epoch: Option<u64>) -> Result<&AppKeyBundle, HarnessError> {
        let inst = self.instance(instance)?;
        let found = match epoch {
            Some(e) => inst.bundles.get(&e).or_else(|| inst.latest()),
            None => inst.latest(),
        };
        found.ok_or(HarnessError::NotReady("instance keys"))
    }

    pub fn seal(&mut self, instance: &str, volume: &str, counter: &str, data: &[u8]) -> Result<u64, HarnessError> {
        let bundle = self.bundle_for(instance, None)?.clone();
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        let sealed = storage::seal(&bundle, data, counter, chain, &mut self.rng)?;
        let value = sealed.header.counter_value;
        self.volumes.insert(volume.to_owned(), (instance.to_owned(), sealed));
        Ok(value)
    }

    fn volume(&self, name: &str) -> Result<&(String, SealedVolume), HarnessError> {
        self.volumes.get(name).ok_or_else(|| unknown("volume", name))
    }

    /// Opens `volume` on `instance` (by default the instance that sealed it).
    pub fn unseal(&self, volume: &str, instance: Option<&str>) -> Result<Vec<u8>, HarnessError> {
        let (owner, sealed) = self.volume(volume)?;
        let bundle = self.bundle_for(instance.unwrap_or(owner), Some(sealed.header.epoch))?;
        Ok(storage::unseal(bundle, sealed, self.chain()?)?)
    }

    pub fn backup(&mut self, volume: &str, backup: &str) -> Result<(), HarnessError> {
        let (owner, sealed) = self.volume(volume)?.clone();
        let bundle = self.bundle_for(&owner, Some(sealed.header.epoch))?.clone();
        let chain = self.chain.as_ref().ok_or(HarnessError::NotReady("governance"))?;
        let blob = storage::backup(&bundle, &sealed, chain, &mut self.rng)?;
        self.backups.insert(backup.to_owned(), blob);
        Ok(())
    }

    pub fn restore(&self, backup: &str, instance: &str) -> Result<Vec<u8>, HarnessError> {
        let blob = self.backups.get(backup).ok_or_else(|| unknown("backup", backup))?;
        let bundle = self.bundle_for(instance, Some(blob.volume.header.epoch))?;
        Ok(storage::restore(bundle, blob, self.chain()?)?)
    }

    /// Re-seals `volume` for `to` under its newest keys, stored as `into`.
    pub fn migrate(&mut self, volume: &str, to: &str, into: &str) -> Result<u64, HarnessError> {
        let (owner, sealed) = self.volume(volume)?.clone();
        let old = self.bundle_for(&owner, Some(sealed.header.epoch))?.clone();
        let new = self.bundle_for(to, None)?.clone();
        let chain = self.chain.as_mut().ok_or(HarnessError::NotReady("governance"))?;
        let moved = storage::migrate(&sealed, &old, &new, chain, &mut self.rng)?;
        let epoch = moved.header.epoch;
        self.volumes.insert(into.to_owned(), (to.to_owned(), moved));
        Ok(epoch)
    }

    pub fn rotate_shares(&mut self) -> Result<Vec<String>, HarnessError> {
        let approvals = self.admin_approvals(&AdminAction::Rotate(RotationKind::Shares))?;
        let World { kms, chain, net, rng, .. } = self;
        let (kms, chain) = (kms.as_mut().ok_or(HarnessError::NotReady("kms"))?, chain.as_mut().expect("kms implies governance"));
        let ticket = chain.authorize_rotation(RotationKind::Shares, approvals)?;
        Ok(kms.rotate_shares(ticket, chain, net, rng)?)
    }

    pub fn rotate_root(&mut self, handover_len: u64) -> Result<u64, HarnessError> {
        let kind = RotationKind::Root { handover_len };
        let approvals = self.admin_approvals(&AdminAction::Rotate(kind))?;
        let World { kms, chain, net, rng, .. } = self;
        let (kms, chain) = (kms.as_mut().ok_or(HarnessError::NotReady("kms"))?, chain.as_mut().expect("kms implies governance"));
        let ticket = chain.authorize_rotation(kind, approvals)?;
        Ok(kms.rotate_root(ticket, chain, net, rng)?)
    }

    /// Moves logical time forward and lets the KMS erase expired epochs.
    pub fn advance(&mut self, ticks: u64) -> Result<Vec<u64>, HarnessError> {
        self.net.advance(ticks);
        let now = self.net.now();
        match (self.kms.as_mut(), self.chain.as_mut()) {
            (Some(kms), Some(chain)) => Ok(kms.expire(chain, now)?),
            _ => Ok(Vec::new()),
        }
    }

    pub fn gateway_register(&mut self, instance: &str) -> Result<String, HarnessError> {
        let inst = self.instance(instance)?;
        let app = inst.app.clone();
        let credential = AppCredential::Chain(inst.latest().ok_or(HarnessError::NotReady("instance keys"))?.cert_chain.clone());
        let now = self.net.now();
        let chain = self.chain.as_ref().ok_or(HarnessError::NotReady("governance"))?;
        let gw = self.gateway.as_mut().ok_or(HarnessError::NotReady("gateway"))?;
        let host = gw.register_app(&credential, chain.state(), instance, now)?;
        self.hosts.insert(app, host.clone());
        Ok(host)
    }

    pub fn host_of(&self, app: &str) -> Result<String, HarnessError> {
        if let Some(h) = self.hosts.get(app) {
            return Ok(h.clone());
        }
        Ok(self.gateway()?.zone().subdomain_for(&self.app(app)?.app_id))
    }

    /// What a client sees when it visits `app`'s host through the gateway,
    /// pinning the current on-chain KMS root.
    pub fn client_get(&self, app: &str, body: &[u8]) -> Result<(Response, Verdict), HarnessError> {
        let host = self.host_of(app)?;
        let resp = self.gateway()?.route(&Request { host: host.clone(), body: body.to_vec() })?;
        let chain = self.chain()?;
        let pinned = *chain.kms_auth().root_public().ok_or(HarnessError::NotReady("kms root"))?;
        let verdict = verify_presented_chain(&resp.chain, &host, &pinned, chain.state(), self.net.now());
        Ok((resp, verdict))
    }

    /// Tries to register `app` at the gateway with a chain from a KMS the
    /// gateway does not belong to.
    pub fn register_foreign(&mut self, app: &str) -> Result<String, HarnessError> {
        let app_id = self.app(app)?.app_id;
        let rogue = RootKeyState::new(1, RootSecrets::generate(&mut self.rng), None);
        let ext = LeafExtensions { code_digest: Some(app_id), quote_digest: None };
        let bundle = AppKeyBundle::derive(&rogue, &app_id, &hash(b"rogue-instance"), LeafRole::App, ext);
        let now = self.net.now();
        let chain = self.chain.as_ref().ok_or(HarnessError::NotReady("governance"))?;
        let gw = self.gateway.as_mut().ok_or(HarnessError::NotReady("gateway"))?;
        Ok(gw.register_app(&AppCredential::Chain(bundle.cert_chain), chain.state(), "rogue", now)?)
    }

    /// Swaps the gateway's identity for one issued by a rogue KMS.
    pub fn swap_gateway_root(&mut self) -> Result<(), HarnessError> {
        let rogue = RootKeyState::new(1, RootSecrets::generate(&mut self.rng), None);
        let gw = self.gateway.as_mut().ok_or(HarnessError::NotReady("gateway"))?;
        let old = gw.identity().clone();
        let ext = LeafExtensions { code_digest: Some(old.app_id), quote_digest: None };
        gw.replace_identity(AppKeyBundle::derive(&rogue, &old.app_id, &old.instance_id, LeafRole::Gateway, ext));
        Ok(())
    }

    pub fn hijack(&mut self, victim: &str, attacker: &str) -> Result<(), HarnessError> {
        let (vh, ah) = (self.host_of(victim)?, self.host_of(attacker)?);
        let route = self.gateway()?.routes().get(&ah).cloned().ok_or_else(|| unknown("route", &ah))?;
        self.gateway_mut()?.hijack_route(&vh, route);
        Ok(())
    }

    pub fn caa_set(&mut self, domain: &str, issuer: &str) -> Result<(), HarnessError> {
        self.gateway_mut()?.caa_set(CaaRecord { domain: domain.to_owned(), allowed_issuer: issuer.to_owned() });
        Ok(())
    }

    /// A certificate from an outside issuer shows up in the public log.
    pub fn ct_inject(&mut self, domain: &str, issuer: &str) -> Result<usize, HarnessError> {
        let key = KeyPair::generate(&mut self.rng);
        let now = self.net.now();
        let body = CertBody {
            subject: domain.to_owned(),
            subject_public: key.public(),
            issuer: issuer.to_owned(),
            kind: CertKind::TlsLeaf,
            app_id_ext: None,
            quote_digest_ext: None,
            code_digest_ext: None,
            epoch: 0,
            validity: Validity { start: now, end: now + 1000 },
        };
        Ok(self.gateway_mut()?.ct_log_mut().append(now, Certificate::sign(body, &key)))
    }

    /// Scans the log and files any alerts. Returns the total alert count.
    pub fn ct_scan(&mut self) -> Result<usize, HarnessError> {
        let alerts = self.gateway()?.scan();
        self.alerts.ingest(alerts);
        Ok(self.alerts.len())
    }

    /// Dumps the first `nodes` KMS nodes at rest and tries to rebuild the
    /// keys `instance` was given.
    pub fn compromise(&self, nodes: usize, instance: &str) -> Result<CompromiseResult, HarnessError> {
        let target = self.bundle_for(instance, None)?;
        let kms = self.kms.as_ref().ok_or(HarnessError::NotReady("kms"))?;
        let dumps: Vec<NodeMaterial> = kms.nodes().iter().take(nodes).filter_map(|n| n.dump_at_rest().remove(&target.epoch)).collect();
        let secrets = if let Some(NodeMaterial::Full(s)) = dumps.iter().find(|m| matches!(m, NodeMaterial::Full(_))) {
            s.clone()
        } else {
            let (ca, sign): (Vec<KeyShare>, Vec<KeyShare>) = dumps
                .iter()
                .filter_map(|m| match m {
                    NodeMaterial::Share { ca, sign } => Some((ca.clone(), sign.clone())),
                    NodeMaterial::Full(_) => None,
                })
                .unzip();
            if ca.is_empty() {
                return Ok(CompromiseResult::Unrecoverable);
            }
            // Best guess with fewer than t shares: the lowest-degree interpolation.
            RootSecrets {
                ca: SecretScalar::from_bytes(shamir::interpolate_at(&ca, 0).map_err(KmsError::from)?),
                sign: SecretScalar::from_bytes(shamir::interpolate_at(&sign, 0).map_err(KmsError::from)?),
            }
        };
        let guess = AppKeyBundle::derive(
            &RootKeyState::new(target.epoch, secrets, None),
            &target.app_id,
            &target.instance_id,
            LeafRole::App,
            LeafExtensions::default(),
        );
        let same = guess.disk_key.expose() == target.disk_key.expose() && guess.env_key.expose() == target.env_key.expose();
        Ok(if same { CompromiseResult::Recovered } else { CompromiseResult::Unrecoverable })
    }

    /// The app makes a fresh keypair and quotes its public key; a verifier
    /// checks the quote, the measurement and the binding, then a signature.
    /// With `swap`, the quote carries some other key.
    pub fn key_proof(&mut self, instance: &str, swap: bool) -> Result<PublicKey, HarnessError> {
        let key = KeyPair::generate(&mut self.rng);
        let quoted = if swap { KeyPair::generate(&mut self.rng).public() } else { key.public() };
        let inst = self.instance(instance)?;
        let quote = inst.tee.generate_quote(quoted.as_bytes())?;
        let challenge = hash_concat(&[b"teestack/key-proof/v1", quote.digest().as_bytes()]);
        let signature = key.sign(challenge.as_bytes());

        let vq = verify_quote(&quote, &self.vendor.root(self.cfg.min_firmware))?;
        let identity = self.chain()?.kms_auth().kms_identity();
        if vq.measurements.get(Register::Rtmr3) != expected_rtmr3(&inst.manifest.app_digest(), identity.as_ref()) {
            return Err(HarnessError::check("measurement-mismatch", "quote was not produced by the deployed app"));
        }
        let presented = key.public();
        if vq.report_data != pad_report_data(presented.as_bytes())? {
            return Err(HarnessError::check("report-data-mismatch", "quoted key differs from the presented key"));
        }
        if !verify(&presented, challenge.as_bytes(), &signature) {
            return Err(HarnessError::check("bad-signature", "challenge signature does not verify"));
        }
        Ok(presented)
    }
}

fn key_request(app_id: Digest, manifest: &AppManifest, tee: &TeeInstance, epoch: Option<u64>, role: LeafRole) -> Result<KeyRequest, HarnessError> {
    Ok(KeyRequest {
        app_id,
        manifest: manifest.clone(),
        instance_id: tee.instance_id(),
        quote: tee.generate_quote(b"key-request")?,
        epoch,
        role,
    })
}
