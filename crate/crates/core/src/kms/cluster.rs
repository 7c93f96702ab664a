// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::shamir::{split_at, zero_polynomial_evals};
use crate::crypto::{gf256, shamir_reconstruct, shamir_split, CryptoError, KeyShare, PublicKey};
use crate::governance::{Chain, GovernanceError, KmsAuth, RotationKind};
use crate::sim::{ActorId, SimNetwork};
use crate::tee::{expected_rtmr3, verify_quote, AttestationRoot, Quote, Register, TeeInstance};

use super::node::{KmsNode, NodeMaterial};
use super::protocol::{self, PairMsg};
use super::{AppKeyBundle, DenyReason, KeyRequest, KmsError, KmsMode, LeafExtensions, Predecessor, RootKeyState, RootSecrets};

#[derive(Debug, Clone)]
struct EpochInfo {
    root_public: PublicKey,
    created_at: u64,
    deadline: Option<u64>,
    destroyed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverStatus {
    pub old_epoch: u64,
    pub deadline: u64,
}

/// Answer to "which epochs can I use right now?".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochStatus {
    pub current: u64,
    pub live: Vec<u64>,
    pub handover: Option<HandoverStatus>,
}

/// The KMS node network.
#[derive(Debug)]
pub struct KmsCluster {
    mode: KmsMode,
    attestation_root: AttestationRoot,
    nodes: Vec<KmsNode>,
    epochs: BTreeMap<u64, EpochInfo>,
    /// Initial shares still waiting for their node, held by the first node.
    dealer_queue: VecDeque<(KeyShare, KeyShare)>,
    session: u64,
}

fn xor_into(acc: &mut [u8; 32], v: &[u8; 32]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a ^= b;
    }
}

fn random_pair<R: RngCore + CryptoRng>(rng: &mut R) -> ([u8; 32], [u8; 32]) {
    let (mut a, mut b) = ([0u8; 32], [0u8; 32]);
    rng.fill_bytes(&mut a);
    rng.fill_bytes(&mut b);
    (a, b)
}

impl KmsCluster {
    pub fn new(mode: KmsMode, attestation_root: AttestationRoot) -> Result<Self, KmsError> {
        if let KmsMode::Threshold { t, n } = mode {
            if t == 0 || t > n || n > crate::crypto::shamir::MAX_SHARES {
                return Err(CryptoError::InvalidSharingParameters { threshold: t, count: n }.into());
            }
        }
        Ok(Self {
            mode,
            attestation_root,
            nodes: Vec::new(),
            epochs: BTreeMap::new(),
            dealer_queue: VecDeque::new(),
            session: 0,
        })
    }

    pub fn mode(&self) -> KmsMode {
        self.mode
    }

    pub fn attestation_root(&self) -> &AttestationRoot {
        &self.attestation_root
    }

    pub fn nodes(&self) -> &[KmsNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&KmsNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn current_epoch(&self) -> u64 {
        self.epochs.keys().next_back().copied().unwrap_or(0)
    }

    pub fn root_public(&self, epoch: u64) -> Option<PublicKey> {
        self.epochs.get(&epoch).map(|e| e.root_public)
    }

    /// Shares of the initial sharing not yet handed to a node.
    pub fn undealt_shares(&self) -> usize {
        self.dealer_queue.len()
    }

    fn threshold(&self) -> usize {
        match self.mode {
            KmsMode::Duplication => 1,
            KmsMode::Threshold { t, .. } => t,
        }
    }

    fn next_session(&mut self) -> u64 {
        self.session += 1;
        self.session
    }

    fn next_actor(&self) -> ActorId {
        self.nodes.len() as ActorId + 1
    }

    /// Quote, OS and code checks applied to every node joining the cluster.
    fn admission_check(&self, tee: &TeeInstance, ka: &KmsAuth) -> Result<Quote, KmsError> {
        let quote = tee.generate_quote(&tee.public_key().0).map_err(KmsError::Attestation)?;
        let vq = verify_quote(&quote, &self.attestation_root).map_err(KmsError::Attestation)?;
        let os = vq.measurements.os_digest();
        if !ka.os_digests.contains(&os) {
            return Err(KmsError::UntrustedOs(os));
        }
        if vq.measurements.get(Register::Rtmr3) != expected_rtmr3(&ka.kms_node_digest, None) {
            return Err(KmsError::CodeMismatch);
        }
        Ok(quote)
    }

    /// Creates the epoch-1 root inside the first node and records its public
    /// key and the node's quote on chain.
    pub fn bootstrap_first_node<R: RngCore + CryptoRng>(
        &mut self,
        name: &str,
        tee: TeeInstance,
        chain: &mut Chain,
        net: &SimNetwork,
        rng: &mut R,
    ) -> Result<u64, KmsError> {
        if !self.epochs.is_empty() {
            return Err(KmsError::AlreadyBootstrapped);
        }
        let quote = self.admission_check(&tee, chain.kms_auth())?;
        let secrets = RootSecrets::generate(rng);
        let root_public = secrets.root_public();
        let mut node = KmsNode::new(self.next_actor(), name.to_owned(), tee);
        match self.mode {
            KmsMode::Duplication => {
                node.material.insert(1, NodeMaterial::Full(secrets));
            }
            KmsMode::Threshold { t, n } => {
                let ca = shamir_split(&secrets.ca, t, n, rng)?;
                let sign = shamir_split(&secrets.sign, t, n, rng)?;
                let mut pairs = ca.into_iter().zip(sign);
                let (ca1, sign1) = pairs.next().expect("n >= 1");
                node.material.insert(1, NodeMaterial::Share { ca: ca1, sign: sign1 });
                self.dealer_queue = pairs.collect();
            }
        }
        chain.register_root(1, root_public, Some(quote), None, None)?;
        self.nodes.push(node);
        self.epochs.insert(1, EpochInfo { root_public, created_at: net.now(), deadline: None, destroyed: false });
        Ok(1)
    }

    /// Admits a registered, attested node and gives it key material for
    /// every live epoch.
    pub fn admit_node<R: RngCore + CryptoRng>(
        &mut self,
        name: &str,
        tee: TeeInstance,
        chain: &mut Chain,
        net: &mut SimNetwork,
        rng: &mut R,
    ) -> Result<ActorId, KmsError> {
        if self.epochs.is_empty() {
            return Err(KmsError::NotBootstrapped);
        }
        self.expire(chain, net.now())?;
        if self.nodes.iter().any(|n| n.public_key() == tee.public_key()) {
            return Err(KmsError::AlreadyMember);
        }
        if !chain.kms_auth().registered_kms_nodes.contains(&tee.public_key()) {
            return Err(KmsError::UnregisteredNode);
        }
        self.admission_check(&tee, chain.kms_auth())?;
        let actor = self.next_actor();
        let result = match self.mode {
            KmsMode::Duplication => self.copy_roots(actor, net),
            KmsMode::Threshold { .. } if !self.dealer_queue.is_empty() => self.deal_initial(actor, net),
            KmsMode::Threshold { .. } => self.reshare_all(actor, net, rng),
        };
        net.drain(actor);
        let material = result?;
        let mut node = KmsNode::new(actor, name.to_owned(), tee);
        node.material = material;
        self.nodes.push(node);
        Ok(actor)
    }

    fn live_epochs_at(&self, now: u64) -> Vec<u64> {
        self.epochs.keys().copied().filter(|&e| self.check_live(e, now).is_ok()).collect()
    }

    fn copy_roots(&mut self, target: ActorId, net: &mut SimNetwork) -> Result<BTreeMap<u64, NodeMaterial>, KmsError> {
        let live = self.live_epochs_at(net.now());
        let current = self.current_epoch();
        let sponsor = self
            .nodes
            .iter()
            .find(|n| net.is_online(n.actor) && n.material.contains_key(&current))
            .ok_or(KmsError::QuorumUnavailable { needed: 1, got: 0 })?;
        let session = self.session + 1;
        for e in &live {
            if let Some(NodeMaterial::Full(s)) = sponsor.material.get(e) {
                let msg = PairMsg { epoch: *e, session, index: 0, ca: *s.ca.expose(), sign: *s.sign.expose() };
                net.send(sponsor.actor, target, msg.envelope(protocol::ROOT_COPY));
            }
        }
        self.session = session;
        net.run_until_idle();
        let mut out = BTreeMap::new();
        for m in net.drain(target) {
            let Ok(msg) = PairMsg::decode(&m.envelope, protocol::ROOT_COPY) else { continue };
            if msg.session == session {
                let secrets = RootSecrets {
                    ca: crate::crypto::SecretScalar::from_bytes(msg.ca),
                    sign: crate::crypto::SecretScalar::from_bytes(msg.sign),
                };
                out.insert(msg.epoch, NodeMaterial::Full(secrets));
            }
        }
        if live.iter().any(|e| !out.contains_key(e)) {
            return Err(KmsError::Protocol("root copy lost in transit"));
        }
        Ok(out)
    }

    fn deal_initial(&mut self, target: ActorId, net: &mut SimNetwork) -> Result<BTreeMap<u64, NodeMaterial>, KmsError> {
        let dealer = self.nodes[0].actor;
        if !net.is_online(dealer) {
            return Err(KmsError::QuorumUnavailable { needed: 1, got: 0 });
        }
        let session = self.next_session();
        let (ca, sign) = self.dealer_queue.front().expect("queue is non-empty");
        net.send(dealer, target, PairMsg::shares(1, session, ca, sign).envelope(protocol::SHARE_DEAL));
        net.run_until_idle();
        let got = net
            .drain(target)
            .into_iter()
            .filter_map(|m| PairMsg::decode(&m.envelope, protocol::SHARE_DEAL).ok())
            .find(|m| m.session == session)
            .ok_or(KmsError::Protocol("share deal lost in transit"))?;
        self.dealer_queue.pop_front();
        let (ca, sign) = got.into_shares();
        Ok(BTreeMap::from([(1, NodeMaterial::Share { ca, sign })]))
    }

    fn reshare_all<R: RngCore + CryptoRng>(
        &mut self,
        target: ActorId,
        net: &mut SimNetwork,
        rng: &mut R,
    ) -> Result<BTreeMap<u64, NodeMaterial>, KmsError> {
        let mut out = BTreeMap::new();
        for epoch in self.live_epochs_at(net.now()) {
            let (ca, sign) = self.reshare(epoch, target, net, rng)?;
            out.insert(epoch, NodeMaterial::Share { ca, sign });
        }
        Ok(out)
    }

    /// Gives `target` a fresh share of `epoch` at an unused index.
    ///
    /// `t` online holders each send `λ_i(x_new) · s_i`, blinded with pairwise
    /// masks that cancel in the sum. The target learns `f(x_new)` and nothing
    /// about any individual share.
    fn reshare<R: RngCore + CryptoRng>(
        &mut self,
        epoch: u64,
        target: ActorId,
        net: &mut SimNetwork,
        rng: &mut R,
    ) -> Result<(KeyShare, KeyShare), KmsError> {
        let t = self.threshold();
        let used: BTreeSet<u8> = self.nodes.iter().filter_map(|n| n.share(epoch)).map(|(c, _)| c.index).collect();
        let contributors: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| net.is_online(self.nodes[i].actor) && self.nodes[i].share(epoch).is_some())
            .take(t)
            .collect();
        if contributors.len() < t {
            return Err(KmsError::QuorumUnavailable { needed: t, got: contributors.len() });
        }
        let new_index = (1..=255u8).find(|x| !used.contains(x)).ok_or(KmsError::ShareSpaceExhausted)?;
        let xs: Vec<u8> = contributors.iter().map(|&i| self.nodes[i].share(epoch).expect("holder").0.index).collect();
        let session = self.next_session();

        // Round 1: pairwise masks, sent from the lower to the higher position.
        let mut masks = vec![([0u8; 32], [0u8; 32]); t];
        for i in 0..t {
            for j in i + 1..t {
                let (ca, sign) = random_pair(rng);
                xor_into(&mut masks[i].0, &ca);
                xor_into(&mut masks[i].1, &sign);
                let msg = PairMsg { epoch, session, index: xs[i], ca, sign };
                net.send(self.nodes[contributors[i]].actor, self.nodes[contributors[j]].actor, msg.envelope(protocol::RESHARE_MASK));
            }
        }
        net.run_until_idle();
        for (j, &c) in contributors.iter().enumerate() {
            let received: Vec<PairMsg> = net
                .drain(self.nodes[c].actor)
                .into_iter()
                .filter_map(|m| PairMsg::decode(&m.envelope, protocol::RESHARE_MASK).ok())
                .filter(|m| m.session == session)
                .collect();
            if received.len() != j {
                return Err(KmsError::Protocol("reshare mask lost in transit"));
            }
            for m in received {
                xor_into(&mut masks[j].0, &m.ca);
                xor_into(&mut masks[j].1, &m.sign);
            }
        }

        // Round 2: blinded Lagrange-weighted contributions to the target.
        for (i, &c) in contributors.iter().enumerate() {
            let node = &self.nodes[c];
            let (ca, sign) = node.share(epoch).expect("holder");
            let li = gf256::lagrange_coefficient(&xs, i, new_index);
            let mut out = masks[i];
            for k in 0..32 {
                out.0[k] ^= gf256::mul(li, ca.payload[k]);
                out.1[k] ^= gf256::mul(li, sign.payload[k]);
            }
            let msg = PairMsg { epoch, session, index: new_index, ca: out.0, sign: out.1 };
            net.send(node.actor, target, msg.envelope(protocol::RESHARE_CONTRIBUTION));
        }
        net.run_until_idle();
        let contributions: Vec<PairMsg> = net
            .drain(target)
            .into_iter()
            .filter_map(|m| PairMsg::decode(&m.envelope, protocol::RESHARE_CONTRIBUTION).ok())
            .filter(|m| m.session == session)
            .collect();
        if contributions.len() != t {
            return Err(KmsError::Protocol("reshare contribution lost in transit"));
        }
        let mut sum = ([0u8; 32], [0u8; 32]);
        for m in &contributions {
            xor_into(&mut sum.0, &m.ca);
            xor_into(&mut sum.1, &m.sign);
        }
        Ok((KeyShare { index: new_index, payload: sum.0 }, KeyShare { index: new_index, payload: sum.1 }))
    }

    fn check_live(&self, epoch: u64, now: u64) -> Result<(), KmsError> {
        let info = self.epochs.get(&epoch).ok_or(KmsError::UnknownEpoch(epoch))?;
        if info.destroyed || info.deadline.is_some_and(|d| now >= d) {
            return Err(KmsError::EpochExpired(epoch));
        }
        Ok(())
    }

    /// Erases every epoch whose handover deadline has passed and logs its
    /// destruction. Returns the destroyed epochs.
    pub fn expire(&mut self, chain: &mut Chain, now: u64) -> Result<Vec<u64>, KmsError> {
        let due: Vec<u64> = self
            .epochs
            .iter()
            .filter(|(_, i)| !i.destroyed && i.deadline.is_some_and(|d| now >= d))
            .map(|(e, _)| *e)
            .collect();
        for &e in &due {
            for node in &mut self.nodes {
                node.erase(e);
            }
            self.epochs.get_mut(&e).expect("listed").destroyed = true;
            chain.record_root_destroyed(e)?;
        }
        Ok(due)
    }

    pub fn epoch_status(&self, now: u64) -> EpochStatus {
        let handover = self
            .epochs
            .iter()
            .find_map(|(e, i)| i.deadline.filter(|&d| !i.destroyed && now < d).map(|deadline| HandoverStatus { old_epoch: *e, deadline }));
        EpochStatus { current: self.current_epoch(), live: self.live_epochs_at(now), handover }
    }

    fn predecessor_of(&self, epoch: u64) -> Option<Predecessor> {
        let prev = self.epochs.get(&epoch.checked_sub(1)?)?;
        let deadline = prev.deadline?;
        (!prev.destroyed).then_some(Predecessor { epoch: epoch - 1, root_public: prev.root_public, handover_deadline: deadline })
    }

    /// Puts the root of `epoch` together in a leader's ephemeral memory.
    fn assemble_root(&mut self, epoch: u64, net: &mut SimNetwork) -> Result<RootKeyState, KmsError> {
        let predecessor = self.predecessor_of(epoch);
        if let KmsMode::Duplication = self.mode {
            let secrets = self
                .nodes
                .iter()
                .filter(|n| net.is_online(n.actor))
                .find_map(|n| match n.material.get(&epoch) {
                    Some(NodeMaterial::Full(s)) => Some(s.clone()),
                    _ => None,
                })
                .ok_or(KmsError::QuorumUnavailable { needed: 1, got: 0 })?;
            return Ok(RootKeyState::new(epoch, secrets, predecessor));
        }
        let t = self.threshold();
        let holders: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].share(epoch).is_some()).collect();
        let leader = *holders
            .iter()
            .find(|&&i| net.is_online(self.nodes[i].actor))
            .ok_or(KmsError::QuorumUnavailable { needed: t, got: 0 })?;
        let session = self.next_session();
        let leader_actor = self.nodes[leader].actor;
        for &h in holders.iter().filter(|&&h| h != leader) {
            net.send(leader_actor, self.nodes[h].actor, protocol::share_request(epoch, session));
        }
        net.run_until_idle();
        for &h in holders.iter().filter(|&&h| h != leader) {
            let node = &self.nodes[h];
            for m in net.drain(node.actor) {
                if protocol::decode_share_request(&m.envelope) == Ok((epoch, session)) {
                    let (ca, sign) = node.share(epoch).expect("holder");
                    net.send(node.actor, m.from, PairMsg::shares(epoch, session, ca, sign).envelope(protocol::SHARE_RESPONSE));
                }
            }
        }
        net.run_until_idle();
        let (own_ca, own_sign) = self.nodes[leader].share(epoch).expect("holder");
        let (mut ca, mut sign) = (vec![own_ca.clone()], vec![own_sign.clone()]);
        for m in net.drain(leader_actor) {
            if let Ok(msg) = PairMsg::decode(&m.envelope, protocol::SHARE_RESPONSE) {
                if msg.session == session && msg.epoch == epoch {
                    let (c, s) = msg.into_shares();
                    ca.push(c);
                    sign.push(s);
                }
            }
        }
        if ca.len() < t {
            return Err(KmsError::QuorumUnavailable { needed: t, got: ca.len() });
        }
        let secrets = RootSecrets { ca: shamir_reconstruct(&ca, t)?, sign: shamir_reconstruct(&sign, t)? };
        Ok(RootKeyState::new(epoch, secrets, predecessor))
    }

    /// Releases the keys of an application instance, after the four gates.
    pub fn request_app_keys(&mut self, req: &KeyRequest, chain: &mut Chain, net: &mut SimNetwork) -> Result<AppKeyBundle, KmsError> {
        let now = net.now();
        self.expire(chain, now)?;
        let ka = chain.kms_auth();

        let vq = verify_quote(&req.quote, &self.attestation_root).map_err(KmsError::Attestation)?;
        if vq.instance_id() != req.instance_id {
            return Err(KmsError::InstanceMismatch);
        }

        let os = vq.measurements.os_digest();
        if !ka.os_digests.contains(&os) {
            return Err(KmsError::UntrustedOs(os));
        }

        let app_digest = req.manifest.app_digest();
        let bound = expected_rtmr3(&app_digest, ka.kms_identity().as_ref());
        if vq.measurements.get(Register::Rtmr3) != bound {
            return Err(KmsError::KeyReleaseDenied(DenyReason::MeasurementMismatch));
        }
        match ka.is_code_authorized(&req.app_id, &app_digest) {
            Ok(true) => {}
            Ok(false) => return Err(KmsError::KeyReleaseDenied(DenyReason::CodeNotAuthorized)),
            Err(_) => return Err(KmsError::KeyReleaseDenied(DenyReason::UnknownApp)),
        }

        let app = chain.state().app(&req.app_id)?;
        if !app.instance_allowed(&req.instance_id) {
            return Err(KmsError::InstanceNotAuthorized);
        }

        if self.epochs.is_empty() {
            return Err(KmsError::NotBootstrapped);
        }
        let epoch = req.epoch.unwrap_or(self.current_epoch());
        self.check_live(epoch, now)?;
        let root = self.assemble_root(epoch, net)?;
        let ext = LeafExtensions { code_digest: Some(app_digest), quote_digest: Some(req.quote.digest()) };
        Ok(AppKeyBundle::derive(&root, &req.app_id, &req.instance_id, req.role, ext))
    }

    fn claim_ticket(chain: &Chain, ticket: u64) -> Result<RotationKind, KmsError> {
        chain.pending_rotation(ticket).map_err(KmsError::RotationNotAuthorized)
    }

    /// Proactive refresh of every live epoch's shares, authorized by a
    /// governance ticket. Online holders re-randomize their shares together;
    /// holders that do not take part lose their now-useless shares. If fewer
    /// than `t` holders take part, or a message is lost, nothing changes.
    pub fn rotate_shares<R: RngCore + CryptoRng>(
        &mut self,
        ticket: u64,
        chain: &mut Chain,
        net: &mut SimNetwork,
        rng: &mut R,
    ) -> Result<Vec<String>, KmsError> {
        let KmsMode::Threshold { t, .. } = self.mode else {
            return Err(KmsError::WrongMode);
        };
        if Self::claim_ticket(chain, ticket)? != RotationKind::Shares {
            return Err(KmsError::RotationNotAuthorized(GovernanceError::RotationKindMismatch(ticket)));
        }
        if !self.dealer_queue.is_empty() {
            return Err(KmsError::BootstrapIncomplete);
        }
        self.expire(chain, net.now())?;

        let mut updates: Vec<(usize, u64, KeyShare, KeyShare)> = Vec::new();
        let mut evictions: Vec<(usize, u64)> = Vec::new();
        for epoch in self.live_epochs_at(net.now()) {
            let holders: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].share(epoch).is_some()).collect();
            let participants: Vec<usize> = holders.iter().copied().filter(|&i| net.is_online(self.nodes[i].actor)).collect();
            if participants.len() < t {
                return Err(KmsError::QuorumUnavailable { needed: t, got: participants.len() });
            }
            let xs: Vec<u8> = participants.iter().map(|&i| self.nodes[i].share(epoch).expect("holder").0.index).collect();
            let session = self.next_session();
            let mut own = Vec::with_capacity(participants.len());
            for (pi, &p) in participants.iter().enumerate() {
                let ca = zero_polynomial_evals(t, &xs, rng);
                let sign = zero_polynomial_evals(t, &xs, rng);
                for (qi, &q) in participants.iter().enumerate() {
                    if qi == pi {
                        own.push((ca[qi], sign[qi]));
                    } else {
                        let msg = PairMsg { epoch, session, index: xs[qi], ca: ca[qi], sign: sign[qi] };
                        net.send(self.nodes[p].actor, self.nodes[q].actor, msg.envelope(protocol::REFRESH_DELTA));
                    }
                }
            }
            net.run_until_idle();
            for (qi, &q) in participants.iter().enumerate() {
                let deltas: Vec<PairMsg> = net
                    .drain(self.nodes[q].actor)
                    .into_iter()
                    .filter_map(|m| PairMsg::decode(&m.envelope, protocol::REFRESH_DELTA).ok())
                    .filter(|m| m.session == session && m.epoch == epoch)
                    .collect();
                if deltas.len() != participants.len() - 1 {
                    return Err(KmsError::Protocol("refresh delta lost in transit"));
                }
                let (old_ca, old_sign) = self.nodes[q].share(epoch).expect("holder");
                let (mut ca, mut sign) = (old_ca.clone(), old_sign.clone());
                xor_into(&mut ca.payload, &own[qi].0);
                xor_into(&mut sign.payload, &own[qi].1);
                for d in &deltas {
                    xor_into(&mut ca.payload, &d.ca);
                    xor_into(&mut sign.payload, &d.sign);
                }
                updates.push((q, epoch, ca, sign));
            }
            evictions.extend(holders.iter().filter(|h| !participants.contains(h)).map(|&h| (h, epoch)));
        }

        chain.record_shares_rotated(ticket)?;
        for (i, epoch, ca, sign) in updates {
            self.nodes[i].material.insert(epoch, NodeMaterial::Share { ca, sign });
        }
        let mut evicted = Vec::new();
        for (i, epoch) in evictions {
            self.nodes[i].erase(epoch);
            evicted.push(self.nodes[i].name.clone());
        }
        Ok(evicted)
    }

    /// Generates a new root epoch, authorized by a governance ticket. The old
    /// epoch stays usable until `now + handover_len`, then is erased.
    pub fn rotate_root<R: RngCore + CryptoRng>(
        &mut self,
        ticket: u64,
        chain: &mut Chain,
        net: &mut SimNetwork,
        rng: &mut R,
    ) -> Result<u64, KmsError> {
        let RotationKind::Root { handover_len } = Self::claim_ticket(chain, ticket)? else {
            return Err(KmsError::RotationNotAuthorized(GovernanceError::RotationKindMismatch(ticket)));
        };
        let now = net.now();
        self.expire(chain, now)?;
        if let Some(h) = self.epoch_status(now).handover {
            return Err(KmsError::HandoverInProgress { old_epoch: h.old_epoch, deadline: h.deadline });
        }
        if self.epochs.is_empty() {
            return Err(KmsError::NotBootstrapped);
        }
        if !self.dealer_queue.is_empty() {
            return Err(KmsError::BootstrapIncomplete);
        }
        let old = self.current_epoch();
        let new = old + 1;
        let t = self.threshold();
        let holders: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| net.is_online(self.nodes[i].actor) && self.nodes[i].material.contains_key(&old))
            .collect();
        if holders.len() < t || holders.is_empty() {
            return Err(KmsError::QuorumUnavailable { needed: t.max(1), got: holders.len() });
        }
        let leader = holders[0];
        let secrets = RootSecrets::generate(rng);
        let root_public = secrets.root_public();
        let session = self.next_session();

        let mut staged: Vec<(usize, NodeMaterial)> = Vec::new();
        match self.mode {
            KmsMode::Duplication => {
                let recipients: Vec<usize> = (0..self.nodes.len()).filter(|&i| i != leader).collect();
                for &r in &recipients {
                    let msg = PairMsg { epoch: new, session, index: 0, ca: *secrets.ca.expose(), sign: *secrets.sign.expose() };
                    net.send(self.nodes[leader].actor, self.nodes[r].actor, msg.envelope(protocol::ROOT_COPY));
                }
                net.run_until_idle();
                staged.push((leader, NodeMaterial::Full(secrets.clone())));
                for r in recipients {
                    let got = net
                        .drain(self.nodes[r].actor)
                        .into_iter()
                        .filter_map(|m| PairMsg::decode(&m.envelope, protocol::ROOT_COPY).ok())
                        .find(|m| m.session == session);
                    if let Some(m) = got {
                        let s = RootSecrets {
                            ca: crate::crypto::SecretScalar::from_bytes(m.ca),
                            sign: crate::crypto::SecretScalar::from_bytes(m.sign),
                        };
                        staged.push((r, NodeMaterial::Full(s)));
                    }
                }
            }
            KmsMode::Threshold { .. } => {
                let xs: Vec<u8> = holders
                    .iter()
                    .map(|&i| self.nodes[i].material[&old].share_index().expect("threshold material"))
                    .collect();
                let ca = split_at(&secrets.ca, t, &xs, rng)?;
                let sign = split_at(&secrets.sign, t, &xs, rng)?;
                staged.push((leader, NodeMaterial::Share { ca: ca[0].clone(), sign: sign[0].clone() }));
                for k in 1..holders.len() {
                    let msg = PairMsg::shares(new, session, &ca[k], &sign[k]);
                    net.send(self.nodes[leader].actor, self.nodes[holders[k]].actor, msg.envelope(protocol::SHARE_DEAL));
                }
                net.run_until_idle();
                for &h in &holders[1..] {
                    let got = net
                        .drain(self.nodes[h].actor)
                        .into_iter()
                        .filter_map(|m| PairMsg::decode(&m.envelope, protocol::SHARE_DEAL).ok())
                        .find(|m| m.session == session)
                        .ok_or(KmsError::Protocol("share deal lost in transit"))?;
                    let (ca, sign) = got.into_shares();
                    staged.push((h, NodeMaterial::Share { ca, sign }));
                }
            }
        }
        drop(secrets);

        let quote = self.nodes[leader].tee.generate_quote(&root_public.0).map_err(KmsError::Attestation)?;
        let deadline = now + handover_len;
        chain.register_root(new, root_public, Some(quote), Some(ticket), Some(deadline))?;
        for (i, m) in staged {
            self.nodes[i].material.insert(new, m);
        }
        self.epochs.get_mut(&old).expect("current epoch").deadline = Some(deadline);
        self.epochs.insert(new, EpochInfo { root_public, created_at: now, deadline: None, destroyed: false });
        Ok(new)
    }

    /// When `epoch` was created, in logical time.
    pub fn epoch_created_at(&self, epoch: u64) -> Option<u64> {
        self.epochs.get(&epoch).map(|e| e.created_at)
    }
}
