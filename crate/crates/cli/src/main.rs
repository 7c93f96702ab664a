mod journal;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use teestack::harness::{self, Action, Fault, Scenario, WorldConfig, ATTACKS};
use teestack::kms::KmsMode;

use journal::Journal;

#[derive(Parser)]
#[command(name = "teestack", version, about = "Simulated confidential-computing stack: governance, KMS, gateway, sealed storage")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// World configuration (genesis parameters) as JSON.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Journal file holding the world between invocations.
    #[arg(long, global = true, value_name = "FILE")]
    state: Option<PathBuf>,
    /// Outcome the command must produce for a zero exit code.
    #[arg(long, global = true, value_name = "OUTCOME")]
    expect: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the seven-link verification chain, optionally with one fault.
    Walkthrough {
        #[arg(long, value_parser = parse_fault)]
        fault: Option<Fault>,
    },
    /// Run a built-in attack scenario.
    Attack {
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        #[arg(long)]
        list: bool,
    },
    /// Run a scenario file.
    Scenario { file: PathBuf },
    /// Check an exported governance log and replay it.
    Audit { file: PathBuf },
    /// Print the governance log of the journaled world as JSONL.
    ExportLog,
    #[command(subcommand)]
    Kms(KmsCmd),
    #[command(subcommand)]
    App(AppCmd),
    #[command(subcommand)]
    Gateway(GatewayCmd),
    /// Seal data for an instance into a named volume.
    Seal {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        volume: String,
        #[arg(long)]
        data: String,
        #[arg(long, default_value = "data")]
        counter: String,
    },
    Unseal {
        #[arg(long)]
        volume: String,
        #[arg(long)]
        instance: Option<String>,
        /// Plaintext the volume must contain.
        #[arg(long)]
        data: Option<String>,
    },
    /// Re-seal a volume for another instance or the newest epoch.
    Migrate {
        #[arg(long)]
        volume: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        into: String,
    },
    Backup {
        #[arg(long)]
        volume: String,
        #[arg(long)]
        backup: String,
    },
    Restore {
        #[arg(long)]
        backup: String,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        data: Option<String>,
    },
    /// Move logical time forward.
    Advance {
        #[arg(long)]
        ticks: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Duplication,
    Threshold,
}

#[derive(Subcommand)]
enum KmsCmd {
    /// Genesis, first node, admissions and gateway in one go.
    Bootstrap {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(short, long, default_value_t = 2)]
        t: usize,
        #[arg(short, long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        nodes: Option<usize>,
    },
    Admit {
        name: String,
        /// Skip on-chain registration.
        #[arg(long)]
        unregistered: bool,
    },
    RotateShares,
    RotateRoot {
        #[arg(long)]
        handover: u64,
    },
    /// Boot an app instance and request its keys.
    Derive {
        #[arg(long)]
        app: String,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        firmware: Option<u32>,
        #[arg(long)]
        os: Option<String>,
        #[arg(long)]
        epoch: Option<u64>,
    },
}

#[derive(Subcommand)]
enum AppCmd {
    Register {
        #[arg(long)]
        app: String,
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 1)]
        signers: usize,
        #[arg(long, default_value_t = 1)]
        threshold: usize,
    },
    ProposeUpgrade {
        #[arg(long)]
        app: String,
        #[arg(long)]
        source: String,
    },
    ProposeRevocation {
        #[arg(long)]
        app: String,
        #[arg(long)]
        source: String,
    },
    Approve {
        #[arg(long)]
        app: String,
        #[arg(long)]
        proposal: u64,
        #[arg(long)]
        signer: usize,
    },
}

#[derive(Subcommand)]
enum GatewayCmd {
    Register {
        #[arg(long)]
        instance: String,
    },
    /// Fetch through the gateway and verify the served chain as a client.
    Route {
        #[arg(long)]
        app: String,
        #[arg(long, default_value = "GET /")]
        body: String,
    },
    CaaSet {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        issuer: String,
    },
    /// Log a certificate from an outside issuer.
    CtInject {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        issuer: String,
    },
    CtScan,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    Fault::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Fault::ALL.iter().map(|f| f.name()).collect();
        format!("unknown fault {s:?}; expected one of {}", names.join(", "))
    })
}

fn load_config(path: Option<&Path>) -> Result<WorldConfig> {
    let Some(path) = path else { return Ok(WorldConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

impl Command {
    fn action(self) -> Option<Action> {
        Some(match self {
            Command::Kms(cmd) => match cmd {
                KmsCmd::Bootstrap { mode, t, n, nodes } => Action::Setup {
                    mode: mode.map(|m| match m {
                        ModeArg::Duplication => KmsMode::Duplication,
                        ModeArg::Threshold => KmsMode::Threshold { t, n },
                    }),
                    nodes,
                },
                KmsCmd::Admit { name, unregistered } => Action::KmsAdmit { name, registered: !unregistered },
                KmsCmd::RotateShares => Action::RotateShares {},
                KmsCmd::RotateRoot { handover } => Action::RotateRoot { handover },
                KmsCmd::Derive { app, instance, source, firmware, os, epoch } => {
                    Action::Deploy { app, instance, source, firmware, os, epoch }
                }
            },
            Command::App(cmd) => match cmd {
                AppCmd::Register { app, source, signers, threshold } => Action::RegisterApp { app, source, signers, threshold },
                AppCmd::ProposeUpgrade { app, source } => Action::ProposeUpgrade { app, source },
                AppCmd::ProposeRevocation { app, source } => Action::ProposeRevocation { app, source },
                AppCmd::Approve { app, proposal, signer } => Action::Approve { app, proposal, signer },
            },
            Command::Gateway(cmd) => match cmd {
                GatewayCmd::Register { instance } => Action::GatewayRegister { instance },
                GatewayCmd::Route { app, body } => Action::ClientGet { app, body },
                GatewayCmd::CaaSet { domain, issuer } => Action::CaaSet { domain, issuer },
                GatewayCmd::CtInject { domain, issuer } => Action::CtInject { domain, issuer },
                GatewayCmd::CtScan => Action::CtScan {},
            },
            Command::Seal { instance, volume, data, counter } => Action::Seal { instance, volume, data, counter },
            Command::Unseal { volume, instance, data } => Action::Unseal { volume, instance, data },
            Command::Migrate { volume, to, into } => Action::Migrate { volume, to, into },
            Command::Backup { volume, backup } => Action::Backup { volume, backup },
            Command::Restore { backup, instance, data } => Action::Restore { backup, instance, data },
            Command::Advance { ticks } => Action::Advance { ticks },
            _ => return None,
        })
    }
}

#[derive(Serialize)]
struct ActionReport {
    op: String,
    outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
    pass: bool,
}

fn open_journal(cli: &Cli) -> Result<Journal> {
    match &cli.state {
        Some(path) if path.exists() => Journal::load(path),
        _ => Ok(Journal::new(cli.seed, load_config(cli.config.as_deref())?)),
    }
}

/// Runs one command; `Ok(true)` means every assertion held.
fn run(cli: Cli) -> Result<bool> {
    let config = || load_config(cli.config.as_deref());
    match &cli.command {
        Command::Walkthrough { fault } => {
            let report = harness::run_walkthrough(cli.seed, config()?, *fault);
            emit(cli.json, &report, || report.render())?;
            return Ok(report.as_expected());
        }
        Command::Attack { list: true, .. } => {
            emit(cli.json, &ATTACKS, || ATTACKS.iter().map(|a| format!("{a}\n")).collect())?;
            return Ok(true);
        }
        Command::Attack { name, .. } => {
            let name = name.as_deref().unwrap_or_default();
            let report = harness::run_attack(name, cli.seed, &config()?)?;
            emit(cli.json, &report, || report.render())?;
            return Ok(report.pass);
        }
        Command::Scenario { file } => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let report = harness::run_scenario(&Scenario::from_json(&text)?, cli.seed, &config()?);
            emit(cli.json, &report, || report.render())?;
            return Ok(report.pass);
        }
        Command::Audit { file } => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let live = match &cli.state {
                Some(_) => Some(open_journal(&cli)?.replay()?),
                None => None,
            };
            let live_state = live.as_ref().map(|w| w.chain().map(|c| c.state())).transpose()?;
            let report = harness::audit(&text, live_state)?;
            emit(cli.json, &report, || render_audit(&report))?;
            return Ok(report.clean());
        }
        Command::ExportLog => {
            let world = open_journal(&cli)?.replay()?;
            print!("{}", world.chain()?.log().to_jsonl());
            return Ok(true);
        }
        _ => {}
    }

    let mut journal = open_journal(&cli)?;
    let mut world = journal.replay()?;
    let Cli { command, json, expect, state, .. } = cli;
    let action = command.action().expect("stateful command");
    let op = action.op();
    let (outcome, detail) = journal.apply(&mut world, action);
    let pass = match &expect {
        Some(want) => *want == outcome,
        None => detail.is_none(),
    };
    if let Some(path) = &state {
        journal.save(path)?;
    }
    let report = ActionReport { op, outcome, detail, pass };
    emit(json, &report, || {
        let mut line = format!("{} -> {}", report.op, report.outcome);
        if let Some(d) = &report.detail {
            line.push_str(&format!(": {d}"));
        }
        line + "\n"
    })?;
    Ok(pass)
}

fn render_audit(r: &harness::AuditReport) -> String {
    let mut out = format!("entries: {}\n", r.entries);
    match &r.divergence {
        Some((i, why)) => out.push_str(&format!("divergence at entry {i}: {why}\n")),
        None => out.push_str("hash chain intact\n"),
    }
    if let Some((i, why)) = &r.replay_error {
        out.push_str(&format!("replay stopped at entry {i}: {why}\n"));
    }
    if let Some(d) = &r.replayed_digest {
        out.push_str(&format!("replayed state {}\n", d.to_hex()));
    }
    match &r.diff {
        Some(d) => out.push_str(&format!(
            "state differs at byte {} (live {} bytes, replayed {} bytes)\n",
            d.offset, d.live_len, d.replayed_len
        )),
        None => out.push_str("no difference from live state\n"),
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
