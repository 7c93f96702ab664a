// SPDX-License-Identifier: Apache-2.0

//! Scenario scripts: JSON lists of actions, each with the outcome it must
//! produce. The outcome of a step is `"ok"` (or a step-specific word such as
//! a verdict or `alerts:N`) when it succeeds, and the error code when it fails.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::kms::KmsMode;

use super::world::{CompromiseResult, DeployOptions, HarnessError, World, WorldConfig};

fn default_counter() -> String {
    "data".into()
}

fn one() -> usize {
    1
}

/// One system action. Also the unit of the CLI's state journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    /// Genesis, KMS bootstrap and admissions, gateway.
    Setup {
        #[serde(default)]
        mode: Option<KmsMode>,
        #[serde(default)]
        nodes: Option<usize>,
    },
    KmsAdmit {
        name: String,
        #[serde(default = "yes")]
        registered: bool,
    },
    RegisterApp {
        app: String,
        source: String,
        #[serde(default = "one")]
        signers: usize,
        #[serde(default = "one")]
        threshold: usize,
    },
    ProposeUpgrade {
        app: String,
        source: String,
    },
    ProposeRevocation {
        app: String,
        source: String,
    },
    Approve {
        app: String,
        proposal: u64,
        signer: usize,
    },
    Deploy {
        app: String,
        instance: String,
        #[serde(default)]
        source: Option<String>,
        #[serde(default)]
        firmware: Option<u32>,
        #[serde(default)]
        os: Option<String>,
        #[serde(default)]
        epoch: Option<u64>,
    },
    ForgeQuote {
        app: String,
    },
    Seal {
        instance: String,
        volume: String,
        data: String,
        #[serde(default = "default_counter")]
        counter: String,
    },
    Unseal {
        volume: String,
        #[serde(default)]
        instance: Option<String>,
        #[serde(default)]
        data: Option<String>,
    },
    Backup {
        volume: String,
        backup: String,
    },
    Restore {
        backup: String,
        instance: String,
        #[serde(default)]
        data: Option<String>,
    },
    Migrate {
        volume: String,
        to: String,
        into: String,
    },
    RotateShares {},
    RotateRoot {
        handover: u64,
    },
    Advance {
        ticks: u64,
    },
    GatewayRegister {
        instance: String,
    },
    RegisterForeign {
        app: String,
    },
    Hijack {
        victim: String,
        attacker: String,
    },
    ClientGet {
        app: String,
        #[serde(default)]
        body: String,
    },
    CaaSet {
        domain: String,
        issuer: String,
    },
    CtInject {
        domain: String,
        issuer: String,
    },
    CtScan {},
    Compromise {
        nodes: usize,
        instance: String,
    },
}

fn yes() -> bool {
    true
}

impl Action {
    pub fn op(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v["op"].as_str().map(str::to_owned)).unwrap_or_default()
    }
}

fn expect_data(got: Vec<u8>, want: &Option<String>) -> Result<String, HarnessError> {
    match want {
        Some(w) if w.as_bytes() != got.as_slice() => Err(HarnessError::Check {
            code: "content-mismatch",
            detail: format!("expected {w:?}, got {:?}", String::from_utf8_lossy(&got)),
        }),
        _ => Ok("ok".into()),
    }
}

impl World {
    /// Applies one action and returns its outcome word.
    pub fn apply(&mut self, action: &Action) -> Result<String, HarnessError> {
        let ok = || Ok("ok".to_owned());
        match action {
            Action::Setup { mode, nodes } => {
                self.setup(*mode, *nodes)?;
                ok()
            }
            Action::KmsAdmit { name, registered } => {
                self.admit_kms_node(name, *registered)?;
                ok()
            }
            Action::RegisterApp { app, source, signers, threshold } => {
                self.register_app(app, source, *signers, *threshold)?;
                ok()
            }
            Action::ProposeUpgrade { app, source } => Ok(format!("proposal:{}", self.propose_upgrade(app, source)?)),
            Action::ProposeRevocation { app, source } => Ok(format!("proposal:{}", self.propose_revocation(app, source)?)),
            Action::Approve { app, proposal, signer } => {
                let status = self.approve(app, *proposal, *signer)?;
                Ok(serde_json::to_value(status).ok().and_then(|v| v["status"].as_str().map(str::to_owned)).unwrap_or_default())
            }
            Action::Deploy { app, instance, source, firmware, os, epoch } => {
                let options = DeployOptions { source: source.clone(), firmware: *firmware, os: os.clone(), epoch: *epoch };
                self.deploy(app, instance, &options)?;
                ok()
            }
            Action::ForgeQuote { app } => {
                self.forge_quote(app)?;
                ok()
            }
            Action::Seal { instance, volume, data, counter } => {
                self.seal(instance, volume, counter, data.as_bytes())?;
                ok()
            }
            Action::Unseal { volume, instance, data } => expect_data(self.unseal(volume, instance.as_deref())?, data),
            Action::Backup { volume, backup } => {
                self.backup(volume, backup)?;
                ok()
            }
            Action::Restore { backup, instance, data } => expect_data(self.restore(backup, instance)?, data),
            Action::Migrate { volume, to, into } => {
                self.migrate(volume, to, into)?;
                ok()
            }
            Action::RotateShares {} => Ok(match self.rotate_shares()? {
                evicted if evicted.is_empty() => "ok".into(),
                evicted => format!("evicted:{}", evicted.join(",")),
            }),
            Action::RotateRoot { handover } => Ok(format!("epoch:{}", self.rotate_root(*handover)?)),
            Action::Advance { ticks } => {
                self.advance(*ticks)?;
                ok()
            }
            Action::GatewayRegister { instance } => {
                self.gateway_register(instance)?;
                ok()
            }
            Action::RegisterForeign { app } => {
                self.register_foreign(app)?;
                ok()
            }
            Action::Hijack { victim, attacker } => {
                self.hijack(victim, attacker)?;
                ok()
            }
            Action::ClientGet { app, body } => Ok(self.client_get(app, body.as_bytes())?.1.code().to_owned()),
            Action::CaaSet { domain, issuer } => {
                self.caa_set(domain, issuer)?;
                ok()
            }
            Action::CtInject { domain, issuer } => {
                self.ct_inject(domain, issuer)?;
                ok()
            }
            Action::CtScan {} => Ok(format!("alerts:{}", self.ct_scan()?)),
            Action::Compromise { nodes, instance } => Ok(match self.compromise(*nodes, instance)? {
                CompromiseResult::Recovered => "keys-recovered".into(),
                CompromiseResult::Unrecoverable => "keys-unrecoverable".into(),
            }),
        }
    }

    /// Outcome word for `action`, with failures folded into their error code.
    pub fn outcome(&mut self, action: &Action) -> (String, Option<String>) {
        match self.apply(action) {
            Ok(word) => (word, None),
            Err(e) => (e.code().to_owned(), Some(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioStep {
    #[serde(flatten)]
    pub action: Action,
    pub expect: String,
}

// Split by hand so the action keeps its strict field checking.
impl<'de> Deserialize<'de> for ScenarioStep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut map = serde_json::Map::deserialize(d)?;
        let expect = match map.remove("expect") {
            Some(serde_json::Value::String(s)) => s,
            Some(_) => return Err(D::Error::custom("`expect` must be a string")),
            None => return Err(D::Error::missing_field("expect")),
        };
        let action = Action::deserialize(serde_json::Value::Object(map)).map_err(D::Error::custom)?;
        Ok(ScenarioStep { action, expect })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Invariant from the rest of the system that this scenario exercises.
    #[serde(default)]
    pub exercises: String,
    #[serde(default)]
    pub config: Option<WorldConfig>,
    pub steps: Vec<ScenarioStep>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::BadScenario(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub index: usize,
    pub op: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub steps: Vec<StepOutcome>,
    pub pass: bool,
}

impl ScenarioReport {
    /// The outcome of the last step: the scenario's containment result.
    pub fn verdict(&self) -> Option<&str> {
        self.steps.last().map(|s| s.actual.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} seed={}", self.name, self.seed);
        for s in &self.steps {
            let mark = if s.pass { "ok  " } else { "FAIL" };
            let _ = write!(out, "[{mark}] {}. {} -> {}", s.index, s.op, s.actual);
            if !s.pass {
                let _ = write!(out, " (expected {})", s.expected);
            }
            if let Some(d) = &s.detail {
                let _ = write!(out, ": {d}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

/// Runs every step, stopping at the first step whose outcome differs from
/// its expectation.
pub fn run_scenario(scenario: &Scenario, seed: u64, base: &WorldConfig) -> ScenarioReport {
    let cfg = scenario.config.clone().unwrap_or_else(|| base.clone());
    let mut world = World::new(seed, cfg);
    let mut steps = Vec::new();
    for (i, step) in scenario.steps.iter().enumerate() {
        let (actual, detail) = world.outcome(&step.action);
        let pass = actual == step.expect;
        steps.push(StepOutcome { index: i + 1, op: step.action.op(), expected: step.expect.clone(), actual, pass, detail });
        if !pass {
            break;
        }
    }
    let pass = steps.len() == scenario.steps.len() && steps.iter().all(|s| s.pass);
    ScenarioReport { name: scenario.name.clone(), seed, steps, pass }
}

pub const ATTACKS: [&str; 7] =
    ["fake-quote", "unauthorized-code", "supply-chain-image", "rollback", "dns-hijack", "stale-firmware", "kms-node-compromise"];

const BUILTIN: [(&str, &str); 7] = [
    ("fake-quote", include_str!("../../scenarios/fake-quote.json")),
    ("unauthorized-code", include_str!("../../scenarios/unauthorized-code.json")),
    ("supply-chain-image", include_str!("../../scenarios/supply-chain-image.json")),
    ("rollback", include_str!("../../scenarios/rollback.json")),
    ("dns-hijack", include_str!("../../scenarios/dns-hijack.json")),
    ("stale-firmware", include_str!("../../scenarios/stale-firmware.json")),
    ("kms-node-compromise", include_str!("../../scenarios/kms-node-compromise.json")),
];

pub fn builtin_attack(name: &str) -> Result<Scenario, HarnessError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::Unknown { kind: "attack", name: name.to_owned() })?;
    Scenario::from_json(text)
}

pub fn run_attack(name: &str, seed: u64, base: &WorldConfig) -> Result<ScenarioReport, HarnessError> {
    Ok(run_scenario(&builtin_attack(name)?, seed, base))
}
