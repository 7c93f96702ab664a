// SPDX-License-Identifier: Apache-2.0

//! Whole-system harness: one seeded [`World`] holding governance, the KMS
//! cluster, the gateway and app instances, plus the walkthrough, attack
//! scenarios and log audit built on it. Only logical time is used.

mod audit;
mod scenario;
mod walkthrough;
mod world;

pub use audit::{audit, first_difference, AuditReport, ByteDiff};
pub use scenario::{builtin_attack, run_attack, run_scenario, Action, Scenario, ScenarioReport, ScenarioStep, StepOutcome, ATTACKS};
pub use walkthrough::{run_walkthrough, Fault, StepReport, StepStatus, WalkthroughReport, STEPS};
pub use world::{AppRecord, CompromiseResult, DeployOptions, HarnessError, Instance, World, WorldConfig};
