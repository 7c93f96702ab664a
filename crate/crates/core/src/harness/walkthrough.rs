// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::hash;
use crate::gateway::Verdict;
use crate::governance::verify_chain;
use crate::tee::{verify_quote, OsImage};

use super::world::{DeployOptions, HarnessError, World, WorldConfig};

pub const STEPS: [&str; 7] = [
    "kms-governance-genesis",
    "kms-bootstrap",
    "kms-node-admission",
    "gateway-verification",
    "app-deployment",
    "gateway-routing",
    "key-proof",
];

const DEMO_APP: &str = "keygen";
const DEMO_INSTANCE: &str = "keygen-0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Governance is deployed from a config other than the published one.
    WrongKmsAuth,
    /// The first KMS node runs code governance does not list.
    KmsCodeMismatch,
    /// A node tries to join without being registered on chain.
    UnregisteredKmsNode,
    /// The gateway boots on an OS image governance does not list.
    GatewayOsTamper,
    /// The deployed manifest differs from the registered one.
    CorruptAppDigest,
    /// The gateway's identity is swapped for one from a rogue KMS.
    ForeignGatewayRoot,
    /// The app quotes one key and presents another.
    ReportDataSwap,
}

impl Fault {
    pub const ALL: [Fault; 7] = [
        Fault::WrongKmsAuth,
        Fault::KmsCodeMismatch,
        Fault::UnregisteredKmsNode,
        Fault::GatewayOsTamper,
        Fault::CorruptAppDigest,
        Fault::ForeignGatewayRoot,
        Fault::ReportDataSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::WrongKmsAuth => "wrong-kms-auth",
            Fault::KmsCodeMismatch => "kms-code-mismatch",
            Fault::UnregisteredKmsNode => "unregistered-kms-node",
            Fault::GatewayOsTamper => "gateway-os-tamper",
            Fault::CorruptAppDigest => "corrupt-app-digest",
            Fault::ForeignGatewayRoot => "foreign-gateway-root",
            Fault::ReportDataSwap => "report-data-swap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// The step this fault must break the chain at.
    pub fn expected_step(self) -> &'static str {
        match self {
            Fault::WrongKmsAuth => STEPS[0],
            Fault::KmsCodeMismatch => STEPS[1],
            Fault::UnregisteredKmsNode => STEPS[2],
            Fault::GatewayOsTamper => STEPS[3],
            Fault::CorruptAppDigest => STEPS[4],
            Fault::ForeignGatewayRoot => STEPS[5],
            Fault::ReportDataSwap => STEPS[6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Verified,
    Broken,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub name: String,
    pub status: StepStatus,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkthroughReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub steps: Vec<StepReport>,
    pub broken_at: Option<String>,
}

impl WalkthroughReport {
    pub fn all_verified(&self) -> bool {
        self.broken_at.is_none() && self.steps.iter().all(|s| s.status == StepStatus::Verified)
    }

    /// With no fault, every step verified; with a fault, the chain broke at
    /// exactly that fault's step.
    pub fn as_expected(&self) -> bool {
        match self.fault {
            None => self.all_verified(),
            Some(f) => self.broken_at.as_deref() == Some(f.expected_step()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let fault = self.fault.map_or("none", Fault::name);
        let _ = writeln!(out, "walkthrough seed={} fault={}", self.seed, fault);
        for s in &self.steps {
            let mark = match s.status {
                StepStatus::Verified => "ok  ",
                StepStatus::Broken => "FAIL",
                StepStatus::Skipped => "skip",
            };
            let _ = writeln!(out, "[{mark}] {}. {}: {}", s.index, s.name, s.detail);
        }
        match &self.broken_at {
            None => out.push_str("chain of trust verified\n"),
            Some(step) => {
                let _ = writeln!(out, "chain broken at {step}");
            }
        }
        out
    }
}

type StepResult = Result<String, HarnessError>;

fn step(world: &mut World, index: usize, fault: Option<Fault>) -> StepResult {
    let inject = |f: Fault| fault == Some(f);
    match index {
        0 => {
            let mut config = world.cfg.genesis(&world.admins);
            if inject(Fault::WrongKmsAuth) {
                config.os_digests.insert(OsImage::named("attacker-os").os_digest());
            }
            let id = world.genesis(config)?;
            let pinned = world.expected_contract_id();
            if id != pinned {
                return Err(HarnessError::Check {
                    code: "contract-mismatch",
                    detail: format!("KmsAuth {} is not the pinned contract {}", id.short_hex(8), pinned.short_hex(8)),
                });
            }
            verify_chain(world.chain()?.log().entries()).map_err(|d| HarnessError::Check { code: "log-divergence", detail: d.to_string() })?;
            Ok(format!("KmsAuth {} matches the pinned contract", id.short_hex(8)))
        }
        1 => {
            let code = if inject(Fault::KmsCodeMismatch) { hash(b"teestack-kms-node/backdoored") } else { world.cfg.kms_code_digest() };
            world.bootstrap_kms(world.cfg.kms, code)?;
            let ka = world.chain()?.kms_auth();
            let quote = ka.first_node_quote.clone().ok_or(HarnessError::NotReady("bootstrap quote"))?;
            verify_quote(&quote, &world.vendor.root(world.cfg.min_firmware))?;
            let root = ka.root_public().ok_or(HarnessError::NotReady("kms root"))?;
            Ok(format!("first node attested; root {} registered for epoch 1", root.digest().short_hex(8)))
        }
        2 => {
            let total = world.cfg.kms_nodes;
            for i in 1..total {
                let register = !(inject(Fault::UnregisteredKmsNode) && i == total - 1);
                world.admit_kms_node(&format!("kms-{i}"), register)?;
            }
            let kms = world.kms.as_ref().ok_or(HarnessError::NotReady("kms"))?;
            Ok(format!("{} nodes hold epoch-1 material", kms.nodes().iter().filter(|n| n.material(1).is_some()).count()))
        }
        3 => {
            let os = if inject(Fault::GatewayOsTamper) { OsImage::named("teestack-os/1.0-tampered") } else { world.cfg.os() };
            world.setup_gateway(&os)?;
            Ok(format!("gateway {} holds a KMS-issued chain", world.gateway()?.issuer_name()))
        }
        4 => {
            world.register_app(DEMO_APP, "keygen-src/1.0", 3, 2)?;
            let opts = DeployOptions {
                source: inject(Fault::CorruptAppDigest).then(|| "keygen-src/1.0+corrupted".to_owned()),
                ..DeployOptions::default()
            };
            let epoch = world.deploy(DEMO_APP, DEMO_INSTANCE, &opts)?;
            Ok(format!("{DEMO_INSTANCE} attested and received epoch-{epoch} keys"))
        }
        5 => {
            if inject(Fault::ForeignGatewayRoot) {
                world.swap_gateway_root()?;
            }
            let host = world.gateway_register(DEMO_INSTANCE)?;
            let (resp, verdict) = world.client_get(DEMO_APP, b"GET /")?;
            if verdict != Verdict::Valid {
                return Err(HarnessError::Check { code: verdict.code(), detail: format!("client rejected the chain for {host}") });
            }
            Ok(format!("{host} routed; client verified a {}-certificate chain", resp.chain.certs.len()))
        }
        6 => {
            let key = world.key_proof(DEMO_INSTANCE, inject(Fault::ReportDataSwap))?;
            Ok(format!("quote binds app key {}", key.digest().short_hex(8)))
        }
        _ => unreachable!("seven steps"),
    }
}

/// Runs the seven-link verification chain, stopping at the first broken link.
pub fn run_walkthrough(seed: u64, cfg: WorldConfig, fault: Option<Fault>) -> WalkthroughReport {
    let mut world = World::new(seed, cfg);
    let mut steps = Vec::with_capacity(STEPS.len());
    let mut broken_at = None;
    for (i, name) in STEPS.iter().enumerate() {
        let (status, detail, error_code) = if broken_at.is_some() {
            (StepStatus::Skipped, "not reached".to_owned(), None)
        } else {
            match step(&mut world, i, fault) {
                Ok(detail) => (StepStatus::Verified, detail, None),
                Err(e) => {
                    broken_at = Some(name.to_string());
                    (StepStatus::Broken, e.to_string(), Some(e.code().to_owned()))
                }
            }
        };
        steps.push(StepReport { index: i + 1, name: name.to_string(), status, detail, error_code });
    }
    WalkthroughReport { seed, fault, steps, broken_at }
}
