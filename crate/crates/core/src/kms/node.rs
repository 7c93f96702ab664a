// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use zeroize::Zeroize;

use crate::crypto::{Digest, KeyShare, PublicKey};
use crate::sim::ActorId;
use crate::tee::{MeasurementState, TeeInstance};

use super::RootSecrets;

/// What a node stores at rest for one epoch.
#[derive(Clone, PartialEq, Eq)]
pub enum NodeMaterial {
    Full(RootSecrets),
    Share { ca: KeyShare, sign: KeyShare },
}

impl NodeMaterial {
    pub fn share_index(&self) -> Option<u8> {
        match self {
            NodeMaterial::Full(_) => None,
            NodeMaterial::Share { ca, .. } => Some(ca.index),
        }
    }
}

impl Drop for NodeMaterial {
    fn drop(&mut self) {
        if let NodeMaterial::Share { ca, sign } = self {
            ca.zeroize();
            sign.zeroize();
        }
    }
}

impl fmt::Debug for NodeMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeMaterial::Full(_) => f.write_str("Full(<redacted>)"),
            NodeMaterial::Share { ca, .. } => write!(f, "Share(index={})", ca.index),
        }
    }
}

/// One KMS node: a booted TEE plus per-epoch key material.
#[derive(Debug)]
pub struct KmsNode {
    pub(super) actor: ActorId,
    pub(super) name: String,
    pub(super) tee: TeeInstance,
    pub(super) material: BTreeMap<u64, NodeMaterial>,
}

impl KmsNode {
    pub(super) fn new(actor: ActorId, name: String, tee: TeeInstance) -> Self {
        Self { actor, name, tee, material: BTreeMap::new() }
    }

    pub fn actor(&self) -> ActorId {
        self.actor
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn public_key(&self) -> PublicKey {
        self.tee.public_key()
    }

    pub fn instance_id(&self) -> Digest {
        self.tee.instance_id()
    }

    pub fn measurement(&self) -> &MeasurementState {
        self.tee.measurement()
    }

    pub fn tee(&self) -> &TeeInstance {
        &self.tee
    }

    pub fn material(&self, epoch: u64) -> Option<&NodeMaterial> {
        self.material.get(&epoch)
    }

    pub fn epochs(&self) -> impl Iterator<Item = u64> + '_ {
        self.material.keys().copied()
    }

    /// Everything an attacker who fully compromises this node at rest learns.
    pub fn dump_at_rest(&self) -> BTreeMap<u64, NodeMaterial> {
        self.material.clone()
    }

    pub(super) fn share(&self, epoch: u64) -> Option<(&KeyShare, &KeyShare)> {
        match self.material.get(&epoch)? {
            NodeMaterial::Share { ca, sign } => Some((ca, sign)),
            NodeMaterial::Full(_) => None,
        }
    }

    /// Drops the node's material for `epoch`; dropping zeroizes the secrets.
    pub(super) fn erase(&mut self, epoch: u64) {
        self.material.remove(&epoch);
    }
}
