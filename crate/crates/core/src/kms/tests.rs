use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::crypto::{hash, shamir, KeyPair};
use crate::governance::{admin_message, AdminAction, Approval, Chain, GenesisConfig, GovernanceParams};
use crate::sim::SimNetwork;
use crate::tee::{BootManifest, OsImage, TeeInstance, Vendor};

const FW: u32 = 5;

struct Fx {
    rng: ChaCha20Rng,
    vendor: Vendor,
    os: OsImage,
    admin: KeyPair,
    signer: KeyPair,
    chain: Chain,
    net: SimNetwork,
    kms: KmsCluster,
}

fn kms_code() -> Digest {
    hash(b"kms-node-v1")
}

impl Fx {
    fn new(mode: KmsMode) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let vendor = Vendor::new(&mut rng);
        let os = OsImage::named("os-v1");
        let admin = KeyPair::generate(&mut rng);
        let signer = KeyPair::generate(&mut rng);
        let chain = Chain::genesis(GenesisConfig {
            label: "kms-test".into(),
            admins: BTreeSet::from([admin.public()]),
            admin_threshold: 1,
            os_digests: BTreeSet::from([os.os_digest()]),
            kms_node_digest: kms_code(),
        })
        .unwrap();
        let kms = KmsCluster::new(mode, vendor.root(FW)).unwrap();
        Self { rng, vendor, os, admin, signer, chain, net: SimNetwork::new(1), kms }
    }

    fn approve(&self, action: AdminAction) -> Vec<Approval> {
        let msg = admin_message(&action, self.chain.kms_auth().admin_nonce);
        vec![Approval { signer: self.admin.public(), signature: self.admin.sign(&msg) }]
    }

    fn node_tee(&mut self, code: Digest, fw: u32) -> TeeInstance {
        let mut tee = self.vendor.provision(fw, &mut self.rng);
        tee.boot(&BootManifest::new(&self.os, code, None)).unwrap();
        tee
    }

    fn register(&mut self, tee: &TeeInstance) {
        let approvals = self.approve(AdminAction::RegisterKmsNode(tee.public_key()));
        self.chain.register_kms_node(tee.public_key(), approvals).unwrap();
    }

    fn bootstrap(&mut self) {
        let tee = self.node_tee(kms_code(), FW);
        self.kms.bootstrap_first_node("kms-0", tee, &mut self.chain, &self.net, &mut self.rng).unwrap();
    }

    fn admit(&mut self, name: &str) -> Result<crate::sim::ActorId, KmsError> {
        let tee = self.node_tee(kms_code(), FW);
        self.register(&tee);
        self.kms.admit_node(name, tee, &mut self.chain, &mut self.net, &mut self.rng)
    }

    /// Bootstraps and admits until `total` nodes are members.
    fn cluster(mode: KmsMode, total: usize) -> Self {
        let mut fx = Self::new(mode);
        fx.bootstrap();
        for i in 1..total {
            fx.admit(&format!("kms-{i}")).unwrap();
        }
        fx
    }

    fn app(&mut self, compose: &str) -> (Digest, AppManifest) {
        let manifest = AppManifest::new(compose, vec![hash(compose.as_bytes())], "").unwrap();
        let params = GovernanceParams {
            signers: BTreeSet::from([self.signer.public()]),
            threshold: 1,
            authorized_instances: BTreeSet::new(),
        };
        (self.chain.register_app(&manifest, params).unwrap(), manifest)
    }

    fn app_tee(&mut self, manifest: &AppManifest) -> TeeInstance {
        let identity = self.chain.kms_auth().kms_identity();
        let mut tee = self.vendor.provision(FW, &mut self.rng);
        tee.boot(&BootManifest::new(&self.os, manifest.app_digest(), identity)).unwrap();
        tee
    }

    fn request(&self, app_id: Digest, manifest: &AppManifest, tee: &TeeInstance) -> KeyRequest {
        KeyRequest {
            app_id,
            manifest: manifest.clone(),
            instance_id: tee.instance_id(),
            quote: tee.generate_quote(b"key-request").unwrap(),
            epoch: None,
            role: LeafRole::App,
        }
    }

    fn keys(&mut self, req: &KeyRequest) -> Result<AppKeyBundle, KmsError> {
        self.kms.request_app_keys(req, &mut self.chain, &mut self.net)
    }

    fn ticket(&mut self, kind: crate::governance::RotationKind) -> u64 {
        let approvals = self.approve(AdminAction::Rotate(kind));
        self.chain.authorize_rotation(kind, approvals).unwrap()
    }

    fn shares(&self, epoch: u64) -> (Vec<KeyShare>, Vec<KeyShare>) {
        self.kms.nodes().iter().filter_map(|n| n.share(epoch)).map(|(c, s)| (c.clone(), s.clone())).unzip()
    }
}

use crate::crypto::KeyShare;
use crate::governance::RotationKind;

#[test]
fn bootstrap_registers_root_and_rejects_repeats() {
    let mut fx = Fx::new(KmsMode::Duplication);
    fx.bootstrap();
    assert_eq!(fx.chain.kms_auth().root_public(), fx.kms.root_public(1).as_ref());
    assert!(fx.chain.kms_auth().first_node_quote.is_some());
    let tee = fx.node_tee(kms_code(), FW);
    assert_eq!(
        fx.kms.bootstrap_first_node("again", tee, &mut fx.chain, &fx.net, &mut fx.rng),
        Err(KmsError::AlreadyBootstrapped)
    );
}

#[test]
fn bootstrap_with_wrong_node_code_is_refused() {
    let mut fx = Fx::new(KmsMode::Duplication);
    let tee = fx.node_tee(hash(b"kms-node-evil"), FW);
    assert_eq!(
        fx.kms.bootstrap_first_node("kms-0", tee, &mut fx.chain, &fx.net, &mut fx.rng),
        Err(KmsError::CodeMismatch)
    );
    assert!(fx.chain.kms_auth().root_public().is_none());
}

#[test]
fn admission_requires_registration_and_fresh_firmware() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1);
    let tee = fx.node_tee(kms_code(), FW);
    assert_eq!(
        fx.kms.admit_node("x", tee, &mut fx.chain, &mut fx.net, &mut fx.rng),
        Err(KmsError::UnregisteredNode)
    );
    let stale = fx.node_tee(kms_code(), FW - 1);
    fx.register(&stale);
    let err = fx.kms.admit_node("y", stale, &mut fx.chain, &mut fx.net, &mut fx.rng).unwrap_err();
    assert_eq!(err.code(), "outdated-firmware");
}

#[test]
fn duplication_survives_loss_of_all_but_one_node() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 3);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let before = fx.keys(&req).unwrap();
    fx.net.set_online(1, false);
    fx.net.set_online(2, false);
    assert_eq!(fx.keys(&req).unwrap(), before);
    fx.net.set_online(3, false);
    assert!(matches!(fx.keys(&req), Err(KmsError::QuorumUnavailable { .. })));
}

#[test]
fn env_is_shared_and_disk_is_per_instance() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1);
    let (app_id, m) = fx.app("svc");
    let (a, b) = (fx.app_tee(&m), fx.app_tee(&m));
    let ka = fx.keys(&fx.request(app_id, &m, &a)).unwrap();
    let kb = fx.keys(&fx.request(app_id, &m, &b)).unwrap();
    assert_eq!(ka.env_key, kb.env_key);
    assert_eq!(ka.app_ca_secret, kb.app_ca_secret);
    assert_eq!(ka.app_sign_key.public(), kb.app_sign_key.public());
    assert_ne!(ka.disk_key, kb.disk_key);
}

#[test]
fn derivations_match_the_documented_table() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let bundle = fx.keys(&fx.request(app_id, &m, &tee)).unwrap();
    let NodeMaterial::Full(root) = fx.kms.nodes()[0].material(1).unwrap() else { panic!() };
    let mut disk_ctx = app_id.0.to_vec();
    disk_ctx.extend_from_slice(&tee.instance_id().0);
    let d = |p, k: &SecretScalar, c: &[u8]| crate::crypto::derive_key(k, p, c).unwrap();
    assert_eq!(bundle.app_ca_secret, d("app-ca", &root.ca, &app_id.0));
    assert_eq!(bundle.disk_key, d("disk", &root.ca, &disk_ctx));
    assert_eq!(bundle.env_key, d("env", &root.ca, &app_id.0));
    assert_eq!(bundle.app_sign_key.public(), KeyPair::from_secret(&d("ecdsa", &root.sign, &app_id.0)).public());
    assert_eq!(bundle.cert_chain.verify(&root.root_public()), Ok(()));
}

#[test]
fn unauthorized_code_is_denied() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1);
    let (app_id, _) = fx.app("svc");
    let evil = AppManifest::new("svc-patched", vec![hash(b"svc")], "").unwrap();
    let tee = fx.app_tee(&evil);
    assert_eq!(
        fx.keys(&fx.request(app_id, &evil, &tee)),
        Err(KmsError::KeyReleaseDenied(DenyReason::CodeNotAuthorized))
    );
}

#[test]
fn threshold_quorum_derives_the_same_keys_and_minorities_learn_nothing() {
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 3, n: 5 }, 5);
    assert_eq!(fx.kms.undealt_shares(), 0);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let bundle = fx.keys(&req).unwrap();
    let (ca, _) = fx.shares(1);
    assert_eq!(ca.len(), 5);
    let root_public = fx.kms.root_public(1).unwrap();
    for i in 0..5 {
        for j in i + 1..5 {
            let guess = SecretScalar::from_bytes(shamir::interpolate_at(&[ca[i].clone(), ca[j].clone()], 0).unwrap());
            assert_ne!(KeyPair::from_secret(&guess).public(), root_public);
        }
    }
    fx.net.set_online(1, false);
    fx.net.set_online(2, false);
    assert_eq!(fx.keys(&req).unwrap(), bundle);
    fx.net.set_online(3, false);
    assert_eq!(fx.keys(&req), Err(KmsError::QuorumUnavailable { needed: 3, got: 2 }));
}

#[test]
fn nodes_beyond_n_join_by_resharing() {
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 2, n: 3 }, 5);
    let (ca, sign) = fx.shares(1);
    assert_eq!(ca.len(), 5);
    shamir::check_consistent(&ca, 2).unwrap();
    shamir::check_consistent(&sign, 2).unwrap();
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let all = fx.keys(&req).unwrap();
    for a in 1..=3 {
        fx.net.set_online(a, false);
    }
    assert_eq!(fx.keys(&req).unwrap(), all, "two resharing-admitted nodes form a quorum");
}

#[test]
fn share_rotation_is_invisible_to_applications() {
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 3, n: 5 }, 5);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let before = fx.keys(&req).unwrap();
    let (old, _) = fx.shares(1);
    let t = fx.ticket(RotationKind::Shares);
    assert_eq!(fx.kms.rotate_shares(t, &mut fx.chain, &mut fx.net, &mut fx.rng), Ok(vec![]));
    let (new, _) = fx.shares(1);
    assert!(old.iter().zip(&new).all(|(a, b)| a.payload != b.payload));
    assert_eq!(fx.keys(&req).unwrap(), before);
    let mixed = vec![old[0].clone(), new[1].clone(), new[2].clone()];
    let secret = shamir::reconstruct(&new, 3).unwrap();
    assert_ne!(shamir::reconstruct(&mixed, 3).unwrap(), secret);
}

#[test]
fn share_rotation_needs_a_ticket_and_a_quorum() {
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 3, n: 5 }, 5);
    assert!(matches!(
        fx.kms.rotate_shares(7, &mut fx.chain, &mut fx.net, &mut fx.rng),
        Err(KmsError::RotationNotAuthorized(_))
    ));
    let t = fx.ticket(RotationKind::Shares);
    let (old, _) = fx.shares(1);
    for a in 1..=3 {
        fx.net.set_online(a, false);
    }
    assert_eq!(
        fx.kms.rotate_shares(t, &mut fx.chain, &mut fx.net, &mut fx.rng),
        Err(KmsError::QuorumUnavailable { needed: 3, got: 2 })
    );
    assert_eq!(fx.shares(1).0, old, "aborted rotation leaves shares intact");
    fx.net.set_online(1, true);
    let evicted = fx.kms.rotate_shares(t, &mut fx.chain, &mut fx.net, &mut fx.rng).unwrap();
    assert_eq!(evicted, vec!["kms-1".to_owned(), "kms-2".to_owned()]);
    assert_eq!(fx.shares(1).0.len(), 3);
    assert_eq!(
        fx.kms.rotate_shares(t, &mut fx.chain, &mut fx.net, &mut fx.rng),
        Err(KmsError::RotationNotAuthorized(GovernanceError::RotationAlreadyExecuted(t)))
    );
}

#[test]
fn share_rotation_is_threshold_only() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 2);
    let t = fx.ticket(RotationKind::Shares);
    assert_eq!(fx.kms.rotate_shares(t, &mut fx.chain, &mut fx.net, &mut fx.rng), Err(KmsError::WrongMode));
}

fn root_rotation_flow(mode: KmsMode, total: usize) {
    let mut fx = Fx::cluster(mode, total);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let old = fx.keys(&req).unwrap();
    let t = fx.ticket(RotationKind::Root { handover_len: 50 });
    assert_eq!(fx.kms.rotate_root(t, &mut fx.chain, &mut fx.net, &mut fx.rng), Ok(2));
    let status = fx.kms.epoch_status(fx.net.now());
    assert_eq!(status.live, vec![1, 2]);
    assert_eq!(status.handover.map(|h| h.old_epoch), Some(1));

    let new = fx.keys(&req).unwrap();
    assert_eq!(new.epoch, 2);
    assert_ne!(new.app_ca_secret, old.app_ca_secret);
    assert_ne!(new.root_public(), old.root_public());
    let during = fx.keys(&KeyRequest { epoch: Some(1), ..req.clone() }).unwrap();
    assert_eq!(during, old);

    let again = fx.ticket(RotationKind::Root { handover_len: 50 });
    assert!(matches!(
        fx.kms.rotate_root(again, &mut fx.chain, &mut fx.net, &mut fx.rng),
        Err(KmsError::HandoverInProgress { old_epoch: 1, .. })
    ));

    fx.net.advance(50);
    assert_eq!(fx.keys(&KeyRequest { epoch: Some(1), ..req.clone() }), Err(KmsError::EpochExpired(1)));
    assert!(fx.kms.nodes().iter().all(|n| n.material(1).is_none()), "old material erased everywhere");
    assert_eq!(fx.chain.kms_auth().live_epochs(), vec![2]);
    assert_eq!(fx.kms.epoch_status(fx.net.now()).live, vec![2]);
    assert_eq!(fx.keys(&req).unwrap(), new);
    // The app stays bound to the original kms identity across epochs.
    assert_eq!(fx.chain.kms_auth().kms_identity(), Some(old.root_public().unwrap().digest()));
}

#[test]
fn root_rotation_with_handover_duplication() {
    root_rotation_flow(KmsMode::Duplication, 2);
}

#[test]
fn root_rotation_with_handover_threshold() {
    root_rotation_flow(KmsMode::Threshold { t: 2, n: 3 }, 3);
}

#[test]
fn chains_from_different_epochs_do_not_share_a_root() {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let e1 = fx.keys(&req).unwrap();
    let t = fx.ticket(RotationKind::Root { handover_len: 5 });
    fx.kms.rotate_root(t, &mut fx.chain, &mut fx.net, &mut fx.rng).unwrap();
    let e2 = fx.keys(&req).unwrap();
    let (r1, r2) = (e1.root_public().unwrap(), e2.root_public().unwrap());
    assert_ne!(r1, r2);
    assert!(e1.cert_chain.verify(&r1).is_ok() && e2.cert_chain.verify(&r2).is_ok());
    assert_eq!(e1.cert_chain.verify(&r2), Err(crate::cert::CertError::ForeignRoot));
}

#[test]
fn every_coalition_below_threshold_fails_to_recover_keys() {
    for (t, n) in [(2, 3), (3, 5), (4, 5), (5, 5)] {
        let mut fx = Fx::cluster(KmsMode::Threshold { t, n }, n);
        let (app_id, m) = fx.app("svc");
        let tee = fx.app_tee(&m);
        let req = fx.request(app_id, &m, &tee);
        let real = fx.keys(&req).unwrap();
        let dumps: Vec<_> = fx.kms.nodes().iter().map(|n| n.dump_at_rest()).collect();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != t - 1 {
                continue;
            }
            let pick = |which: fn(&NodeMaterial) -> Option<KeyShare>| -> Vec<KeyShare> {
                (0..n).filter(|i| mask & (1 << i) != 0).filter_map(|i| which(&dumps[i][&1])).collect()
            };
            let ca = pick(|m| match m {
                NodeMaterial::Share { ca, .. } => Some(ca.clone()),
                NodeMaterial::Full(_) => None,
            });
            let sign = pick(|m| match m {
                NodeMaterial::Share { sign, .. } => Some(sign.clone()),
                NodeMaterial::Full(_) => None,
            });
            let guess = RootKeyState::new(
                1,
                RootSecrets {
                    ca: SecretScalar::from_bytes(shamir::interpolate_at(&ca, 0).unwrap()),
                    sign: SecretScalar::from_bytes(shamir::interpolate_at(&sign, 0).unwrap()),
                },
                None,
            );
            let ext = LeafExtensions { code_digest: Some(m.app_digest()), quote_digest: Some(req.quote.digest()) };
            let forged = AppKeyBundle::derive(&guess, &app_id, &tee.instance_id(), LeafRole::App, ext);
            assert_ne!(forged.env_key, real.env_key, "t={t} n={n} mask={mask:b}");
            assert_ne!(forged, real);
        }
    }
}

#[test]
fn requests_are_deterministic_across_calls() {
    let mut fx = Fx::cluster(KmsMode::Threshold { t: 2, n: 3 }, 3);
    let (app_id, m) = fx.app("svc");
    let tee = fx.app_tee(&m);
    let req = fx.request(app_id, &m, &tee);
    let a = fx.keys(&req).unwrap();
    fx.net.set_online(1, false);
    let b = fx.keys(&req).unwrap();
    assert_eq!(a.commitment(), b.commitment());
}
