#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub mod checks;

use teestack::crypto::{hash, Digest, KeyPair, KeyShare};
use teestack::governance::{admin_message, AdminAction, AppManifest, Approval, Chain, GenesisConfig, GovernanceParams, RotationKind};
use teestack::kms::{AppKeyBundle, KeyRequest, KmsCluster, KmsError, KmsMode, LeafRole, NodeMaterial};
use teestack::sim::SimNetwork;
use teestack::tee::{BootManifest, OsImage, TeeInstance, Vendor};

pub const FW: u32 = 5;

pub fn kms_code() -> Digest {
    hash(b"kms-node/1")
}

/// Governance plus a KMS cluster, driven through the public API only.
pub struct Fx {
    pub rng: ChaCha20Rng,
    pub vendor: Vendor,
    pub os: OsImage,
    pub admin: KeyPair,
    pub signers: Vec<KeyPair>,
    pub chain: Chain,
    pub net: SimNetwork,
    pub kms: KmsCluster,
}

impl Fx {
    pub fn new(mode: KmsMode, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let vendor = Vendor::new(&mut rng);
        let os = OsImage::named("os/1");
        let admin = KeyPair::generate(&mut rng);
        let signers = (0..3).map(|_| KeyPair::generate(&mut rng)).collect();
        let chain = Chain::genesis(GenesisConfig {
            label: "integration".into(),
            admins: BTreeSet::from([admin.public()]),
            admin_threshold: 1,
            os_digests: BTreeSet::from([os.os_digest()]),
            kms_node_digest: kms_code(),
        })
        .unwrap();
        let kms = KmsCluster::new(mode, vendor.root(FW)).unwrap();
        Self { rng, vendor, os, admin, signers, chain, net: SimNetwork::new(seed), kms }
    }

    /// Bootstraps and admits until `total` nodes are members.
    pub fn cluster(mode: KmsMode, total: usize, seed: u64) -> Self {
        let mut fx = Self::new(mode, seed);
        let tee = fx.node_tee();
        fx.kms.bootstrap_first_node("kms-0", tee, &mut fx.chain, &fx.net, &mut fx.rng).unwrap();
        for i in 1..total {
            let tee = fx.node_tee();
            let approvals = fx.approve(AdminAction::RegisterKmsNode(tee.public_key()));
            fx.chain.register_kms_node(tee.public_key(), approvals).unwrap();
            fx.kms.admit_node(&format!("kms-{i}"), tee, &mut fx.chain, &mut fx.net, &mut fx.rng).unwrap();
        }
        fx
    }

    pub fn approve(&self, action: AdminAction) -> Vec<Approval> {
        let msg = admin_message(&action, self.chain.kms_auth().admin_nonce);
        vec![Approval { signer: self.admin.public(), signature: self.admin.sign(&msg) }]
    }

    fn node_tee(&mut self) -> TeeInstance {
        let mut tee = self.vendor.provision(FW, &mut self.rng);
        tee.boot(&BootManifest::new(&self.os, kms_code(), None)).unwrap();
        tee
    }

    pub fn manifest(source: &str) -> AppManifest {
        AppManifest::new(format!("services:\n  app:\n    image: {source}\n"), vec![hash(source.as_bytes())], "").unwrap()
    }

    pub fn app(&mut self, source: &str, threshold: usize, instances: BTreeSet<Digest>) -> (Digest, AppManifest) {
        let manifest = Self::manifest(source);
        let params = GovernanceParams {
            signers: self.signers.iter().map(KeyPair::public).collect(),
            threshold,
            authorized_instances: instances,
        };
        (self.chain.register_app(&manifest, params).unwrap(), manifest)
    }

    /// A vendor-certified (or not) TEE booted with `os` and `manifest`.
    pub fn app_tee(&mut self, manifest: &AppManifest, os: &OsImage, certified: bool) -> TeeInstance {
        let identity = self.chain.kms_auth().kms_identity();
        let mut tee = if certified {
            self.vendor.provision(FW, &mut self.rng)
        } else {
            TeeInstance::uncertified(FW, &mut self.rng)
        };
        tee.boot(&BootManifest::new(os, manifest.app_digest(), identity)).unwrap();
        tee
    }

    pub fn request(app_id: Digest, manifest: &AppManifest, tee: &TeeInstance) -> KeyRequest {
        KeyRequest {
            app_id,
            manifest: manifest.clone(),
            instance_id: tee.instance_id(),
            quote: tee.generate_quote(b"key-request").unwrap(),
            epoch: None,
            role: LeafRole::App,
        }
    }

    pub fn keys(&mut self, req: &KeyRequest) -> Result<AppKeyBundle, KmsError> {
        self.kms.request_app_keys(req, &mut self.chain, &mut self.net)
    }

    pub fn rotate_shares(&mut self) -> Result<Vec<String>, KmsError> {
        let approvals = self.approve(AdminAction::Rotate(RotationKind::Shares));
        let ticket = self.chain.authorize_rotation(RotationKind::Shares, approvals).unwrap();
        self.kms.rotate_shares(ticket, &mut self.chain, &mut self.net, &mut self.rng)
    }

    /// Every node's CA share of `epoch`, read from at-rest dumps.
    pub fn ca_shares(&self, epoch: u64) -> Vec<KeyShare> {
        self.kms
            .nodes()
            .iter()
            .filter_map(|n| match n.dump_at_rest().remove(&epoch) {
                Some(NodeMaterial::Share { ref ca, .. }) => Some(ca.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Stable bytes of everything a key request hands out.
pub fn bundle_bytes(b: &AppKeyBundle) -> Vec<u8> {
    use teestack::wire::Canonical;
    let mut out = b.commitment().0.to_vec();
    out.extend_from_slice(&b.cert_chain.to_canonical_bytes());
    out
}

/// All k-element subsets of `0..n`, in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// The key-release gates in the order the KMS checks them.
pub const GATE_ORDER: [teestack::kms::Gate; 4] = {
    use teestack::kms::Gate;
    [Gate::Quote, Gate::Os, Gate::Code, Gate::Instance]
};

/// Builds one key request that violates exactly the gates whose bit is set
/// in `violated` (bit i is `GATE_ORDER[i]`) and returns the KMS's answer.
pub fn gate_case(violated: u8, seed: u64) -> Result<AppKeyBundle, KmsError> {
    let bad = |i: usize| violated & (1 << i) != 0;
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 2, n: 3 }, 3, seed);
    let deployed = Fx::manifest(if bad(2) { "svc/2" } else { "svc/1" });
    let os = if bad(1) { OsImage::named("os/1-rogue") } else { fx.os.clone() };
    let tee = fx.app_tee(&deployed, &os, !bad(0));
    let allowed = if bad(3) { BTreeSet::from([hash(b"some other instance")]) } else { BTreeSet::from([tee.instance_id()]) };
    let (app_id, _) = fx.app("svc/1", 1, allowed);
    fx.keys(&Fx::request(app_id, &deployed, &tee))
}
