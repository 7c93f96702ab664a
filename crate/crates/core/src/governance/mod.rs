// SPDX-License-Identifier: Apache-2.0

//! Deterministic in-process governance contracts.
//!
//! [`Chain`] is a single-writer state machine holding the global `KmsAuth`
//! registry and one `AppAuth` contract per application. Every mutating call
//! validates against the current [`ChainState`], then commits exactly one
//! [`Event`] per state transition: the event is appended to the [`EventLog`]
//! and folded into the state by [`ChainState::apply`]. Replaying the log from
//! the genesis entry therefore reproduces the live state exactly.
//!
//! Code upgrades follow the multi-sig flow:
//!
//! 1. a signer proposes a new code digest ([`Chain::propose`]);
//! 2. signers approve with signatures over `app_id || code_digest`
//!    ([`Chain::approve`]), each recorded as its own event;
//! 3. the approval that reaches the threshold makes `AppAuth` add the digest,
//!    and `KmsAuth` synchronously copies the new allowed set into its view,
//!    which is what the KMS consults before releasing keys.

mod log;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, verify, Digest, PublicKey, Signature};
use crate::tee::Quote;
use crate::wire::Writer;

pub use log::{parse_jsonl, verify_chain, Divergence, EventLog, LogEntry, LogParseError};
pub use manifest::{in_cc_build, AppManifest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GovernanceError {
    #[error("invalid manifest: {0}")]
    InvalidManifest(&'static str),
    #[error("invalid governance parameters: {0}")]
    InvalidParams(&'static str),
    #[error("app {0} is already registered")]
    DuplicateApp(Digest),
    #[error("unknown app {0}")]
    UnknownApp(Digest),
    #[error("unknown proposal {0}")]
    UnknownProposal(u64),
    #[error("caller is not an authorized signer")]
    Unauthorized,
    #[error("approval signature does not verify")]
    BadSignature,
    #[error("not enough admin approvals: got {got}, need {need}")]
    NotEnoughAdminApprovals { got: usize, need: usize },
    #[error("kms node already registered")]
    DuplicateKmsNode,
    #[error("root for epoch {0} is already registered")]
    RootAlreadyRegistered(u64),
    #[error("epoch {got} out of order, expected {expected}")]
    EpochOutOfOrder { got: u64, expected: u64 },
    #[error("unknown rotation ticket {0}")]
    UnknownRotation(u64),
    #[error("rotation ticket {0} already executed")]
    RotationAlreadyExecuted(u64),
    #[error("rotation ticket {0} is of the wrong kind")]
    RotationKindMismatch(u64),
    #[error("epoch {0} is not registered or already destroyed")]
    EpochNotLive(u64),
    #[error("invalid proposal: {0}")]
    InvalidProposal(&'static str),
    #[error("event log does not start with genesis")]
    MissingGenesis,
}

impl GovernanceError {
    pub fn code(&self) -> &'static str {
        match self {
            GovernanceError::InvalidManifest(_) => "invalid-manifest",
            GovernanceError::InvalidParams(_) => "invalid-params",
            GovernanceError::DuplicateApp(_) => "duplicate-app",
            GovernanceError::UnknownApp(_) => "unknown-app",
            GovernanceError::UnknownProposal(_) => "unknown-proposal",
            GovernanceError::Unauthorized => "unauthorized",
            GovernanceError::BadSignature => "bad-signature",
            GovernanceError::NotEnoughAdminApprovals { .. } => "not-enough-approvals",
            GovernanceError::DuplicateKmsNode => "duplicate-kms-node",
            GovernanceError::RootAlreadyRegistered(_) => "root-already-registered",
            GovernanceError::EpochOutOfOrder { .. } => "epoch-out-of-order",
            GovernanceError::UnknownRotation(_) => "unknown-rotation",
            GovernanceError::RotationAlreadyExecuted(_) => "rotation-already-executed",
            GovernanceError::RotationKindMismatch(_) => "rotation-kind-mismatch",
            GovernanceError::EpochNotLive(_) => "epoch-not-live",
            GovernanceError::InvalidProposal(_) => "invalid-proposal",
            GovernanceError::MissingGenesis => "missing-genesis",
        }
    }
}

/// A signer's approval of some governance message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub signer: PublicKey,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisConfig {
    pub label: String,
    pub admins: BTreeSet<PublicKey>,
    pub admin_threshold: usize,
    pub os_digests: BTreeSet<Digest>,
    pub kms_node_digest: Digest,
}

impl GenesisConfig {
    /// The public "address" of the KmsAuth contract.
    pub fn contract_id(&self) -> Digest {
        hash(&serde_json::to_vec(self).expect("genesis config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceParams {
    pub signers: BTreeSet<PublicKey>,
    pub threshold: usize,
    /// Empty means any instance may run the app.
    pub authorized_instances: BTreeSet<Digest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "digest", rename_all = "snake_case")]
pub enum ProposalAction {
    AddCode(Digest),
    RevokeCode(Digest),
    AuthorizeInstance(Digest),
}

/// Message a signer signs to approve `action` for `app_id`.
///
/// Code additions sign exactly `app_id || code_digest`; the other actions
/// prefix a tag, so an upgrade approval can never be replayed as a
/// revocation.
pub fn approval_message(app_id: &Digest, action: &ProposalAction) -> Vec<u8> {
    let mut w = Writer::new();
    match action {
        ProposalAction::AddCode(d) => w.digest(app_id).digest(d),
        ProposalAction::RevokeCode(d) => w.raw(b"revoke").digest(app_id).digest(d),
        ProposalAction::AuthorizeInstance(d) => w.raw(b"instance").digest(app_id).digest(d),
    };
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Executed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpgradeProposal {
    pub action: ProposalAction,
    pub proposer: PublicKey,
    pub approvals: BTreeMap<PublicKey, Signature>,
    pub created_at: u64,
    pub status: ProposalStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppAuth {
    pub app_id: Digest,
    pub allowed_code_digests: BTreeSet<Digest>,
    pub authorized_instance_ids: BTreeSet<Digest>,
    pub signers: BTreeSet<PublicKey>,
    pub approval_threshold: usize,
    pub proposals: BTreeMap<u64, UpgradeProposal>,
}

impl AppAuth {
    pub fn instance_allowed(&self, instance_id: &Digest) -> bool {
        self.authorized_instance_ids.is_empty() || self.authorized_instance_ids.contains(instance_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RotationKind {
    Shares,
    Root { handover_len: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AdminAction {
    RegisterKmsNode(PublicKey),
    AddOsDigest(Digest),
    Rotate(RotationKind),
}

/// Message admins sign for `action` at the given admin nonce.
pub fn admin_message(action: &AdminAction, nonce: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(b"kms-admin").u64(nonce);
    match action {
        AdminAction::RegisterKmsNode(k) => w.u8(1).public_key(k),
        AdminAction::AddOsDigest(d) => w.u8(2).digest(d),
        AdminAction::Rotate(RotationKind::Shares) => w.u8(3),
        AdminAction::Rotate(RotationKind::Root { handover_len }) => w.u8(4).u64(*handover_len),
    };
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationTicket {
    pub kind: RotationKind,
    pub executed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handover {
    pub old_epoch: u64,
    pub deadline: u64,
}

/// The global registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmsAuth {
    pub contract_id: Digest,
    pub admins: BTreeSet<PublicKey>,
    pub admin_threshold: usize,
    pub admin_nonce: u64,
    pub os_digests: BTreeSet<Digest>,
    pub kms_node_digest: Digest,
    pub first_node_quote: Option<Quote>,
    pub registered_kms_nodes: BTreeSet<PublicKey>,
    pub root_publics: BTreeMap<u64, PublicKey>,
    pub destroyed_epochs: BTreeSet<u64>,
    pub handover: Option<Handover>,
    pub apps: BTreeSet<Digest>,
    /// Allowed code per app as last synchronized from each AppAuth.
    pub authorized_codes: BTreeMap<Digest, BTreeSet<Digest>>,
    pub counters: BTreeMap<Digest, BTreeMap<String, u64>>,
    pub rotations: BTreeMap<u64, RotationTicket>,
}

impl KmsAuth {
    fn from_genesis(config: &GenesisConfig) -> Self {
        Self {
            contract_id: config.contract_id(),
            admins: config.admins.clone(),
            admin_threshold: config.admin_threshold,
            admin_nonce: 0,
            os_digests: config.os_digests.clone(),
            kms_node_digest: config.kms_node_digest,
            first_node_quote: None,
            registered_kms_nodes: BTreeSet::new(),
            root_publics: BTreeMap::new(),
            destroyed_epochs: BTreeSet::new(),
            handover: None,
            apps: BTreeSet::new(),
            authorized_codes: BTreeMap::new(),
            counters: BTreeMap::new(),
            rotations: BTreeMap::new(),
        }
    }

    pub fn current_epoch(&self) -> u64 {
        self.root_publics.keys().next_back().copied().unwrap_or(0)
    }

    pub fn root_public(&self) -> Option<&PublicKey> {
        self.root_publics.get(&self.current_epoch())
    }

    pub fn epoch_live(&self, epoch: u64) -> bool {
        self.root_publics.contains_key(&epoch) && !self.destroyed_epochs.contains(&epoch)
    }

    pub fn live_epochs(&self) -> Vec<u64> {
        self.root_publics.keys().copied().filter(|e| !self.destroyed_epochs.contains(e)).collect()
    }

    /// Digest measured into app RTMR3 to bind instances to this KMS: the
    /// epoch-1 root key, which stays the KMS identity across rotations.
    pub fn kms_identity(&self) -> Option<Digest> {
        self.root_publics.get(&1).map(PublicKey::digest)
    }

    pub fn is_code_authorized(&self, app_id: &Digest, code_digest: &Digest) -> Result<bool, GovernanceError> {
        let codes = self.authorized_codes.get(app_id).ok_or(GovernanceError::UnknownApp(*app_id))?;
        Ok(codes.contains(code_digest))
    }

    pub fn counter_read(&self, app_id: &Digest, name: &str) -> Result<u64, GovernanceError> {
        if !self.apps.contains(app_id) {
            return Err(GovernanceError::UnknownApp(*app_id));
        }
        Ok(self.counters.get(app_id).and_then(|m| m.get(name)).copied().unwrap_or(0))
    }
}

/// One state transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Genesis { config: GenesisConfig },
    KmsNodeRegistered { node: PublicKey, approvals: Vec<Approval> },
    OsDigestAdded { digest: Digest, approvals: Vec<Approval> },
    RotationAuthorized { ticket: u64, rotation: RotationKind, approvals: Vec<Approval> },
    SharesRotated { ticket: u64 },
    RootRegistered { epoch: u64, root_public: PublicKey, quote: Option<Quote>, ticket: Option<u64>, handover_deadline: Option<u64> },
    RootDestroyed { epoch: u64 },
    AppRegistered { app_id: Digest, code_digest: Digest, params: GovernanceParams },
    ProposalCreated { app_id: Digest, proposal_id: u64, action: ProposalAction, proposer: PublicKey },
    ProposalApproved { app_id: Digest, proposal_id: u64, signer: PublicKey, signature: Signature },
    AppAuthUpdated { app_id: Digest, proposal_id: u64 },
    KmsAuthSynced { app_id: Digest, allowed: BTreeSet<Digest> },
    CounterBumped { app_id: Digest, name: String, value: u64 },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Genesis { .. } => "genesis",
            Event::KmsNodeRegistered { .. } => "kms_node_registered",
            Event::OsDigestAdded { .. } => "os_digest_added",
            Event::RotationAuthorized { .. } => "rotation_authorized",
            Event::SharesRotated { .. } => "shares_rotated",
            Event::RootRegistered { .. } => "root_registered",
            Event::RootDestroyed { .. } => "root_destroyed",
            Event::AppRegistered { .. } => "app_registered",
            Event::ProposalCreated { .. } => "proposal_created",
            Event::ProposalApproved { .. } => "proposal_approved",
            Event::AppAuthUpdated { .. } => "app_auth_updated",
            Event::KmsAuthSynced { .. } => "kms_auth_synced",
            Event::CounterBumped { .. } => "counter_bumped",
        }
    }
}

/// Full contract state: KmsAuth plus every AppAuth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub time: u64,
    pub kms_auth: KmsAuth,
    pub app_auths: BTreeMap<Digest, AppAuth>,
    pub next_proposal_id: u64,
}

impl ChainState {
    fn genesis(config: &GenesisConfig, time: u64) -> Self {
        Self { time, kms_auth: KmsAuth::from_genesis(config), app_auths: BTreeMap::new(), next_proposal_id: 1 }
    }

    /// Canonical bytes used for byte-exact state comparison.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("chain state serializes")
    }

    pub fn app(&self, app_id: &Digest) -> Result<&AppAuth, GovernanceError> {
        self.app_auths.get(app_id).ok_or(GovernanceError::UnknownApp(*app_id))
    }

    fn app_mut(&mut self, app_id: &Digest) -> Result<&mut AppAuth, GovernanceError> {
        self.app_auths.get_mut(app_id).ok_or(GovernanceError::UnknownApp(*app_id))
    }

    /// Folds one event into the state. Used both live and for replay.
    pub fn apply(state: Option<Self>, event: &Event, time: u64) -> Result<Self, GovernanceError> {
        let mut s = match (state, event) {
            (None, Event::Genesis { config }) => return Ok(Self::genesis(config, time)),
            (None, _) => return Err(GovernanceError::MissingGenesis),
            (Some(_), Event::Genesis { .. }) => return Err(GovernanceError::InvalidProposal("second genesis")),
            (Some(s), _) => s,
        };
        s.time = time;
        let ka = &mut s.kms_auth;
        match event {
            Event::Genesis { .. } => unreachable!(),
            Event::KmsNodeRegistered { node, .. } => {
                ka.admin_nonce += 1;
                ka.registered_kms_nodes.insert(*node);
            }
            Event::OsDigestAdded { digest, .. } => {
                ka.admin_nonce += 1;
                ka.os_digests.insert(*digest);
            }
            Event::RotationAuthorized { ticket, rotation, .. } => {
                ka.admin_nonce += 1;
                ka.rotations.insert(*ticket, RotationTicket { kind: *rotation, executed: false });
            }
            Event::SharesRotated { ticket } => {
                ka.rotations.get_mut(ticket).ok_or(GovernanceError::UnknownRotation(*ticket))?.executed = true;
            }
            Event::RootRegistered { epoch, root_public, quote, ticket, handover_deadline } => {
                if *epoch == 1 {
                    ka.first_node_quote = quote.clone();
                }
                if let Some(t) = ticket {
                    ka.rotations.get_mut(t).ok_or(GovernanceError::UnknownRotation(*t))?.executed = true;
                }
                let old = ka.current_epoch();
                ka.root_publics.insert(*epoch, *root_public);
                ka.handover = handover_deadline.map(|deadline| Handover { old_epoch: old, deadline });
            }
            Event::RootDestroyed { epoch } => {
                ka.destroyed_epochs.insert(*epoch);
                if ka.handover.is_some_and(|h| h.old_epoch == *epoch) {
                    ka.handover = None;
                }
            }
            Event::AppRegistered { app_id, code_digest, params } => {
                ka.apps.insert(*app_id);
                ka.authorized_codes.insert(*app_id, BTreeSet::from([*code_digest]));
                s.app_auths.insert(
                    *app_id,
                    AppAuth {
                        app_id: *app_id,
                        allowed_code_digests: BTreeSet::from([*code_digest]),
                        authorized_instance_ids: params.authorized_instances.clone(),
                        signers: params.signers.clone(),
                        approval_threshold: params.threshold,
                        proposals: BTreeMap::new(),
                    },
                );
            }
            Event::ProposalCreated { app_id, proposal_id, action, proposer } => {
                s.next_proposal_id = s.next_proposal_id.max(proposal_id + 1);
                s.app_mut(app_id)?.proposals.insert(
                    *proposal_id,
                    UpgradeProposal {
                        action: *action,
                        proposer: *proposer,
                        approvals: BTreeMap::new(),
                        created_at: time,
                        status: ProposalStatus::Pending,
                    },
                );
            }
            Event::ProposalApproved { app_id, proposal_id, signer, signature } => {
                let p = s
                    .app_mut(app_id)?
                    .proposals
                    .get_mut(proposal_id)
                    .ok_or(GovernanceError::UnknownProposal(*proposal_id))?;
                p.approvals.insert(*signer, *signature);
            }
            Event::AppAuthUpdated { app_id, proposal_id } => {
                let app = s.app_mut(app_id)?;
                let p = app.proposals.get_mut(proposal_id).ok_or(GovernanceError::UnknownProposal(*proposal_id))?;
                p.status = ProposalStatus::Executed;
                match p.action {
                    ProposalAction::AddCode(d) => {
                        app.allowed_code_digests.insert(d);
                    }
                    ProposalAction::RevokeCode(d) => {
                        app.allowed_code_digests.remove(&d);
                    }
                    ProposalAction::AuthorizeInstance(d) => {
                        app.authorized_instance_ids.insert(d);
                    }
                }
            }
            Event::KmsAuthSynced { app_id, allowed } => {
                ka.authorized_codes.insert(*app_id, allowed.clone());
            }
            Event::CounterBumped { app_id, name, value } => {
                ka.counters.entry(*app_id).or_default().insert(name.clone(), *value);
            }
        }
        Ok(s)
    }

    /// Rebuilds state from log entries, starting at genesis.
    pub fn replay<'a>(entries: impl IntoIterator<Item = &'a LogEntry>) -> Result<Self, (usize, GovernanceError)> {
        let mut state = None;
        for (i, e) in entries.into_iter().enumerate() {
            state = Some(Self::apply(state, &e.event, e.time).map_err(|err| (i, err))?);
        }
        state.ok_or((0, GovernanceError::MissingGenesis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ApprovalStatus {
    /// Recorded; threshold not yet met.
    Recorded { approvals: usize, threshold: usize },
    /// This approval met the threshold and the action took effect.
    Executed,
    /// The signer had already approved; nothing changed.
    DuplicateApproval,
    /// The proposal was already executed; nothing changed.
    AlreadyExecuted,
}

/// The single-writer contract machine.
#[derive(Debug, Clone)]
pub struct Chain {
    state: ChainState,
    log: EventLog,
}

impl Chain {
    pub fn genesis(config: GenesisConfig) -> Result<Self, GovernanceError> {
        if config.admin_threshold == 0 || config.admin_threshold > config.admins.len() {
            return Err(GovernanceError::InvalidParams("admin threshold must be in 1..=|admins|"));
        }
        let mut log = EventLog::default();
        let event = Event::Genesis { config };
        let state = ChainState::apply(None, &event, 1)?;
        log.append(1, event);
        Ok(Self { state, log })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn kms_auth(&self) -> &KmsAuth {
        &self.state.kms_auth
    }

    /// An immutable copy for concurrent readers.
    pub fn snapshot(&self) -> ChainState {
        self.state.clone()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    fn commit(&mut self, event: Event) -> Result<(), GovernanceError> {
        let time = self.state.time + 1;
        let next = ChainState::apply(Some(self.state.clone()), &event, time)?;
        self.state = next;
        self.log.append(time, event);
        Ok(())
    }

    fn check_admin_approvals(&self, action: &AdminAction, approvals: &[Approval]) -> Result<(), GovernanceError> {
        let ka = &self.state.kms_auth;
        let msg = admin_message(action, ka.admin_nonce);
        let mut distinct = BTreeSet::new();
        for a in approvals {
            if !ka.admins.contains(&a.signer) {
                return Err(GovernanceError::Unauthorized);
            }
            if !verify(&a.signer, &msg, &a.signature) {
                return Err(GovernanceError::BadSignature);
            }
            distinct.insert(a.signer);
        }
        if distinct.len() < ka.admin_threshold {
            return Err(GovernanceError::NotEnoughAdminApprovals { got: distinct.len(), need: ka.admin_threshold });
        }
        Ok(())
    }

    pub fn register_kms_node(&mut self, node: PublicKey, approvals: Vec<Approval>) -> Result<(), GovernanceError> {
        self.check_admin_approvals(&AdminAction::RegisterKmsNode(node), &approvals)?;
        if self.state.kms_auth.registered_kms_nodes.contains(&node) {
            return Err(GovernanceError::DuplicateKmsNode);
        }
        self.commit(Event::KmsNodeRegistered { node, approvals })
    }

    pub fn add_os_digest(&mut self, digest: Digest, approvals: Vec<Approval>) -> Result<(), GovernanceError> {
        self.check_admin_approvals(&AdminAction::AddOsDigest(digest), &approvals)?;
        self.commit(Event::OsDigestAdded { digest, approvals })
    }

    /// Governance-side start of a rotation; returns the ticket the KMS must
    /// present to execute it.
    pub fn authorize_rotation(&mut self, rotation: RotationKind, approvals: Vec<Approval>) -> Result<u64, GovernanceError> {
        self.check_admin_approvals(&AdminAction::Rotate(rotation), &approvals)?;
        let ticket = self.state.kms_auth.rotations.keys().next_back().map_or(1, |t| t + 1);
        self.commit(Event::RotationAuthorized { ticket, rotation, approvals })?;
        Ok(ticket)
    }

    pub fn pending_rotation(&self, ticket: u64) -> Result<RotationKind, GovernanceError> {
        let t = self.state.kms_auth.rotations.get(&ticket).ok_or(GovernanceError::UnknownRotation(ticket))?;
        if t.executed {
            return Err(GovernanceError::RotationAlreadyExecuted(ticket));
        }
        Ok(t.kind)
    }

    pub fn record_shares_rotated(&mut self, ticket: u64) -> Result<(), GovernanceError> {
        if self.pending_rotation(ticket)? != RotationKind::Shares {
            return Err(GovernanceError::RotationKindMismatch(ticket));
        }
        self.commit(Event::SharesRotated { ticket })
    }

    /// Records the public key of a new root epoch. Epoch 1 needs no ticket;
    /// later epochs consume a pending root-rotation ticket.
    pub fn register_root(
        &mut self,
        epoch: u64,
        root_public: PublicKey,
        quote: Option<Quote>,
        ticket: Option<u64>,
        handover_deadline: Option<u64>,
    ) -> Result<(), GovernanceError> {
        let ka = &self.state.kms_auth;
        if ka.root_publics.contains_key(&epoch) {
            return Err(GovernanceError::RootAlreadyRegistered(epoch));
        }
        let expected = ka.current_epoch() + 1;
        if epoch != expected {
            return Err(GovernanceError::EpochOutOfOrder { got: epoch, expected });
        }
        match (epoch, ticket) {
            (1, None) => {}
            (1, Some(_)) => return Err(GovernanceError::InvalidProposal("first epoch takes no ticket")),
            (_, None) => return Err(GovernanceError::InvalidProposal("root rotation needs a governance ticket")),
            (_, Some(t)) => {
                if !matches!(self.pending_rotation(t)?, RotationKind::Root { .. }) {
                    return Err(GovernanceError::RotationKindMismatch(t));
                }
            }
        }
        self.commit(Event::RootRegistered { epoch, root_public, quote, ticket, handover_deadline })
    }

    pub fn record_root_destroyed(&mut self, epoch: u64) -> Result<(), GovernanceError> {
        if !self.state.kms_auth.epoch_live(epoch) {
            return Err(GovernanceError::EpochNotLive(epoch));
        }
        self.commit(Event::RootDestroyed { epoch })
    }

    /// Registers an application; its id is the digest of its initial manifest.
    pub fn register_app(&mut self, manifest: &AppManifest, params: GovernanceParams) -> Result<Digest, GovernanceError> {
        manifest.validate()?;
        if params.threshold == 0 || params.threshold > params.signers.len() {
            return Err(GovernanceError::InvalidParams("approval threshold must be in 1..=|signers|"));
        }
        let app_id = manifest.app_digest();
        if self.state.app_auths.contains_key(&app_id) {
            return Err(GovernanceError::DuplicateApp(app_id));
        }
        self.commit(Event::AppRegistered { app_id, code_digest: app_id, params })?;
        Ok(app_id)
    }

    pub fn propose(&mut self, app_id: &Digest, action: ProposalAction, proposer: &PublicKey) -> Result<u64, GovernanceError> {
        let app = self.state.app(app_id)?;
        if !app.signers.contains(proposer) {
            return Err(GovernanceError::Unauthorized);
        }
        if let ProposalAction::RevokeCode(d) = action {
            if !app.allowed_code_digests.contains(&d) {
                return Err(GovernanceError::InvalidProposal("digest is not currently allowed"));
            }
        }
        let proposal_id = self.state.next_proposal_id;
        self.commit(Event::ProposalCreated { app_id: *app_id, proposal_id, action, proposer: *proposer })?;
        Ok(proposal_id)
    }

    pub fn propose_upgrade(&mut self, app_id: &Digest, new_code_digest: Digest, proposer: &PublicKey) -> Result<u64, GovernanceError> {
        self.propose(app_id, ProposalAction::AddCode(new_code_digest), proposer)
    }

    pub fn propose_revocation(&mut self, app_id: &Digest, code_digest: Digest, proposer: &PublicKey) -> Result<u64, GovernanceError> {
        self.propose(app_id, ProposalAction::RevokeCode(code_digest), proposer)
    }

    pub fn approve(
        &mut self,
        app_id: &Digest,
        proposal_id: u64,
        signer: &PublicKey,
        signature: &Signature,
    ) -> Result<ApprovalStatus, GovernanceError> {
        let app = self.state.app(app_id)?;
        let proposal = app.proposals.get(&proposal_id).ok_or(GovernanceError::UnknownProposal(proposal_id))?;
        if !app.signers.contains(signer) {
            return Err(GovernanceError::Unauthorized);
        }
        if proposal.status == ProposalStatus::Executed {
            return Ok(ApprovalStatus::AlreadyExecuted);
        }
        if proposal.approvals.contains_key(signer) {
            return Ok(ApprovalStatus::DuplicateApproval);
        }
        if !verify(signer, &approval_message(app_id, &proposal.action), signature) {
            return Err(GovernanceError::BadSignature);
        }
        let threshold = app.approval_threshold;
        let count = proposal.approvals.len() + 1;
        let action = proposal.action;
        self.commit(Event::ProposalApproved { app_id: *app_id, proposal_id, signer: *signer, signature: *signature })?;
        if count < threshold {
            return Ok(ApprovalStatus::Recorded { approvals: count, threshold });
        }
        self.commit(Event::AppAuthUpdated { app_id: *app_id, proposal_id })?;
        if matches!(action, ProposalAction::AddCode(_) | ProposalAction::RevokeCode(_)) {
            // KmsAuth watches AppAuth and mirrors its allowed set in the same transaction.
            let allowed = self.state.app(app_id)?.allowed_code_digests.clone();
            self.commit(Event::KmsAuthSynced { app_id: *app_id, allowed })?;
        }
        Ok(ApprovalStatus::Executed)
    }

    pub fn is_code_authorized(&self, app_id: &Digest, code_digest: &Digest) -> Result<bool, GovernanceError> {
        self.state.kms_auth.is_code_authorized(app_id, code_digest)
    }

    pub fn counter_read(&self, app_id: &Digest, name: &str) -> Result<u64, GovernanceError> {
        self.state.kms_auth.counter_read(app_id, name)
    }

    pub fn counter_bump(&mut self, app_id: &Digest, name: &str) -> Result<u64, GovernanceError> {
        let value = self.counter_read(app_id, name)? + 1;
        self.commit(Event::CounterBumped { app_id: *app_id, name: name.to_owned(), value })?;
        Ok(value)
    }
}
