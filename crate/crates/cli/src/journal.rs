use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use teestack::harness::{Action, ScenarioStep, World, WorldConfig};

/// Every action applied so far, with its outcome. Replaying it rebuilds the
/// same world, so the CLI can be driven one command at a time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Journal {
    pub seed: u64,
    pub config: WorldConfig,
    pub steps: Vec<ScenarioStep>,
}

impl Journal {
    pub fn new(seed: u64, config: WorldConfig) -> Self {
        Self { seed, config, steps: Vec::new() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing journal {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Rebuilds the world, failing if any recorded outcome does not recur.
    pub fn replay(&self) -> Result<World> {
        let mut world = World::new(self.seed, self.config.clone());
        for (i, step) in self.steps.iter().enumerate() {
            let (got, _) = world.outcome(&step.action);
            if got != step.expect {
                bail!("journal diverged at entry {}: {} gave {got}, recorded {}", i + 1, step.action.op(), step.expect);
            }
        }
        Ok(world)
    }

    /// Applies `action` and records it. Returns the outcome word and error
    /// detail, if any.
    pub fn apply(&mut self, world: &mut World, action: Action) -> (String, Option<String>) {
        let (outcome, detail) = world.outcome(&action);
        self.steps.push(ScenarioStep { action, expect: outcome.clone() });
        (outcome, detail)
    }
}
