//! One function per acceptance criterion. Each returns a short summary on
//! success and the first counterexample on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use teestack::crypto::shamir::{interpolate_at, split};
use teestack::crypto::{KeyShare, SecretScalar};
use teestack::governance::{ApprovalStatus, ChainState};
use teestack::harness::{run_attack, run_walkthrough, DeployOptions, Fault, World, WorldConfig};
use teestack::kms::KmsMode;
use teestack::storage::{self, StorageError};
use teestack::tee::{verify_quote, Register, TeeError, Vendor};

use super::{bundle_bytes, gate_case, subsets, Fx, GATE_ORDER};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn code_of<T, E: std::fmt::Debug>(r: Result<T, E>, code: impl Fn(&E) -> &'static str) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(e) => code(&e),
    }
}

fn world_code<T>(r: Result<T, teestack::harness::HarnessError>) -> &'static str {
    code_of(r, |e| e.code())
}

pub fn shamir_suite(seed: u64) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    for n in 1..=5 {
        for t in 1..=n {
            for _ in 0..50 {
                let secret = SecretScalar::random(&mut rng);
                let shares = split(&secret, t, n, &mut rng).map_err(|e| e.to_string())?;
                for k in t..=n {
                    for idx in subsets(n, k) {
                        let pick: Vec<KeyShare> = idx.iter().map(|&i| shares[i].clone()).collect();
                        let got = interpolate_at(&pick, 0).map_err(|e| e.to_string())?;
                        ensure!(&got == secret.expose(), "t={t} n={n}: subset {idx:?} did not reconstruct");
                        checked += 1;
                    }
                }
                if t == 1 {
                    continue;
                }
                for idx in subsets(n, t - 1) {
                    let pick: Vec<KeyShare> = idx.iter().map(|&i| shares[i].clone()).collect();
                    let low = interpolate_at(&pick, 0).map_err(|e| e.to_string())?;
                    ensure!(&low != secret.expose(), "t={t} n={n}: {idx:?} determined the secret as a lower-degree sharing");
                    let mut padded = pick.clone();
                    let mut payload = [0u8; 32];
                    rng.fill_bytes(&mut payload);
                    padded.push(KeyShare { index: 200, payload });
                    let guess = interpolate_at(&padded, 0).map_err(|e| e.to_string())?;
                    ensure!(&guess != secret.expose(), "t={t} n={n}: {idx:?} plus a random share hit the secret");
                    checked += 1;
                }
            }
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(format!("{checked} subset checks in {took:.2?}"))
}

pub fn share_rotation(seed: u64) -> Check {
    let (t, n) = (3, 5);
    let mut fx = Fx::cluster(KmsMode::Threshold { t, n }, n, seed);
    let (app_id, m) = fx.app("svc/1", 1, BTreeSet::new());
    let os = fx.os.clone();
    let tee = fx.app_tee(&m, &os, true);
    let req = Fx::request(app_id, &m, &tee);
    let before = bundle_bytes(&fx.keys(&req).map_err(|e| e.to_string())?);
    let by_index = |v: Vec<KeyShare>| v.into_iter().map(|s| (s.index, s)).collect::<BTreeMap<u8, KeyShare>>();
    let mut generations = vec![by_index(fx.ca_shares(1))];
    for round in 1..=3 {
        let evicted = fx.rotate_shares().map_err(|e| e.to_string())?;
        ensure!(evicted.is_empty(), "round {round} evicted {evicted:?}");
        let after = bundle_bytes(&fx.keys(&req).map_err(|e| e.to_string())?);
        ensure!(after == before, "keys changed after rotation {round}");
        generations.push(by_index(fx.ca_shares(1)));
    }
    let indices: Vec<u8> = generations[0].keys().copied().collect();
    ensure!(indices.len() == n, "expected {n} holders, found {}", indices.len());
    let all: Vec<KeyShare> = generations[3].values().cloned().collect();
    let secret = interpolate_at(&all[..t], 0).map_err(|e| e.to_string())?;
    let gens = generations.len();
    let mut mixtures = 0;
    for idx in subsets(n, t) {
        for assignment in 0..gens.pow(t as u32) {
            let picks: Vec<usize> = (0..t).map(|j| assignment / gens.pow(j as u32) % gens).collect();
            let shares: Vec<KeyShare> = idx.iter().zip(&picks).map(|(&i, &g)| generations[g][&indices[i]].clone()).collect();
            let got = interpolate_at(&shares, 0).map_err(|e| e.to_string())?;
            let uniform = picks.iter().all(|&g| g == picks[0]);
            ensure!(uniform == (got == secret), "subset {idx:?} generations {picks:?}: uniform={uniform} but match={}", got == secret);
            mixtures += usize::from(!uniform);
        }
    }
    Ok(format!("keys unchanged over 3 rotations; {mixtures} mixed sets all failed"))
}

fn ok<T>(r: Result<T, teestack::harness::HarnessError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn handover_run(seed: u64) -> Result<Vec<&'static str>, String> {
    let mut w = World::new(seed, WorldConfig::default());
    ok(w.setup(None, None))?;
    ok(w.register_app("svc", "svc/1", 1, 1))?;
    ok(w.deploy("svc", "i", &DeployOptions::default()))?;
    ok(w.seal("i", "v1", "data", b"payload"))?;
    let handover = 10 + seed % 40;
    let epoch = ok(w.rotate_root(handover))?;
    ensure!(epoch == 2, "rotation produced epoch {epoch}");
    let old_epoch = DeployOptions { epoch: Some(1), ..DeployOptions::default() };
    let mut trace = vec![
        world_code(w.deploy("svc", "i", &DeployOptions::default())),
        world_code(w.deploy("svc", "i", &old_epoch)),
        world_code(w.migrate("v1", "i", "v2")),
    ];
    ensure!(w.unseal("v2", None).as_deref() == Ok(&b"payload"[..]), "migrated volume did not round-trip");
    ok(w.advance(handover + 1))?;
    trace.push(world_code(w.unseal("v1", None)));
    trace.push(world_code(w.deploy("svc", "j", &old_epoch)));
    trace.push(world_code(w.migrate("v1", "i", "v3")));
    ensure!(w.unseal("v2", None).as_deref() == Ok(&b"payload"[..]), "epoch-2 volume lost after the deadline");
    Ok(trace)
}

pub fn root_rotation_handover() -> Check {
    let expected = vec!["ok", "ok", "ok", "epoch-expired", "epoch-expired", "unrecoverable"];
    for seed in 0..100 {
        let trace = handover_run(seed)?;
        ensure!(trace == expected, "seed {seed}: {trace:?}");
        ensure!(handover_run(seed)? == trace, "seed {seed} is not reproducible");
    }
    Ok("100 seeds: migrate during handover, epoch-expired after".into())
}

pub fn governance_gate() -> Check {
    ensure!(gate_case(0, 0).is_ok(), "honest request was refused");
    for mask in 1u8..16 {
        let first = GATE_ORDER[mask.trailing_zeros() as usize];
        match gate_case(mask, u64::from(mask)) {
            Ok(_) => return Err(format!("mask {mask:04b} released keys")),
            Err(e) => ensure!(e.gate() == Some(first), "mask {mask:04b}: expected {first:?}, got {e}"),
        }
    }
    Ok("15 violation combinations, first failing gate reported (quote, os, code, instance)".into())
}

pub fn multisig_upgrade(seed: u64) -> Check {
    let mut w = World::new(seed, WorldConfig::default());
    let err = |e: teestack::harness::HarnessError| e.to_string();
    w.setup(None, None).map_err(err)?;
    w.register_app("svc", "svc/1", 3, 2).map_err(err)?;
    let v2 = |i: &str| (i.to_owned(), DeployOptions { source: Some("svc/2".into()), ..DeployOptions::default() });
    let pid = w.propose_upgrade("svc", "svc/2").map_err(err)?;
    let status = w.approve("svc", pid, 0).map_err(err)?;
    ensure!(!matches!(status, ApprovalStatus::Executed), "one approval executed");
    let (i, o) = v2("a");
    let one = world_code(w.deploy("svc", &i, &o));
    ensure!(one == "key-release-denied", "after 1 approval: {one}");
    let status = w.approve("svc", pid, 1).map_err(err)?;
    ensure!(matches!(status, ApprovalStatus::Executed), "two approvals did not execute: {status:?}");
    let (i, o) = v2("b");
    let two = world_code(w.deploy("svc", &i, &o));
    ensure!(two == "ok", "after 2 approvals: {two}");
    let chain = w.chain().map_err(err)?;
    let replayed = ChainState::replay(chain.log().entries()).map_err(|(i, e)| format!("replay failed at {i}: {e}"))?;
    ensure!(replayed.canonical_bytes() == chain.state().canonical_bytes(), "replayed state differs");
    let report = teestack::harness::audit(&chain.log().to_jsonl(), Some(chain.state())).map_err(|e| e.to_string())?;
    ensure!(report.clean(), "audit of the exported log: {report:?}");
    Ok(format!("denied after 1 approval, released after 2; {} log entries replay byte-exactly", chain.log().len()))
}

pub fn attestation_fuzz(seed: u64) -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let vendor = Vendor::new(&mut rng);
    let min_fw = 5;
    let root = vendor.root(min_fw);
    let os = teestack::tee::OsImage::named("os/1");
    let mut honest = Vec::new();
    for i in 0..20u8 {
        let mut tee = vendor.provision(min_fw + u32::from(i % 3), &mut rng);
        tee.boot(&teestack::tee::BootManifest::new(&os, teestack::crypto::hash(&[i]), None)).map_err(|e| e.to_string())?;
        let mut data = [0u8; 64];
        rng.fill_bytes(&mut data);
        let q = tee.generate_quote(&data).map_err(|e| e.to_string())?;
        ensure!(verify_quote(&q, &root).is_ok(), "honest quote {i} rejected");
        honest.push(q);
    }
    let mut per_field = [0usize; 10];
    for round in 0..1000 {
        let mut q = honest[round % honest.len()].clone();
        let field = rng.gen_range(0..10);
        let flip = |bytes: &mut [u8], rng: &mut ChaCha20Rng| {
            let i = rng.gen_range(0..bytes.len());
            bytes[i] ^= rng.gen_range(1..=255u8);
        };
        match field {
            0..=4 => {
                let mut event = [0u8; 32];
                rng.fill_bytes(&mut event);
                q.measurements.extend(Register::ALL[field], &teestack::crypto::Digest(event));
            }
            5 => flip(&mut q.report_data, &mut rng),
            6 => flip(&mut q.tee_key_public.0, &mut rng),
            7 => q.firmware_version ^= rng.gen_range(1..=u32::MAX),
            8 => flip(&mut q.key_certificate.0, &mut rng),
            _ => flip(&mut q.signature.0, &mut rng),
        }
        ensure!(verify_quote(&q, &root).is_err(), "mutation {round} of field {field} verified");
        per_field[field] += 1;
    }
    let mut stale = vendor.provision(min_fw - 1, &mut rng);
    stale.boot(&teestack::tee::BootManifest::new(&os, teestack::crypto::hash(b"x"), None)).map_err(|e| e.to_string())?;
    let q = stale.generate_quote(b"").map_err(|e| e.to_string())?;
    ensure!(
        matches!(verify_quote(&q, &root), Err(TeeError::OutdatedFirmware { .. })),
        "stale firmware accepted"
    );
    Ok(format!("1000 single-field mutations rejected (per field {per_field:?}); 20 honest pass; stale firmware rejected"))
}

/// Random seal/restore interleavings against the on-chain counters, checked
/// against an independent model of "restore iff value >= max sealed".
pub fn rollback_interleaving(seed: u64, ops: usize) -> Check {
    let mut fx = Fx::cluster(KmsMode::Duplication, 1, seed);
    let (app_id, m) = fx.app("svc/1", 1, BTreeSet::new());
    let os = fx.os.clone();
    let tee = fx.app_tee(&m, &os, true);
    let req = Fx::request(app_id, &m, &tee);
    let bundle = fx.keys(&req).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let names = ["data", "config"];
    let mut max_sealed: BTreeMap<&str, u64> = BTreeMap::new();
    let mut snapshots: Vec<(&str, u64, Vec<u8>, storage::SealedVolume)> = Vec::new();
    let (mut accepted, mut rejected, mut equal_edge) = (0, 0, 0);
    for op in 0..ops {
        if snapshots.is_empty() || rng.gen_bool(0.4) {
            let name = names[rng.gen_range(0..names.len())];
            let data = format!("{name}#{op}").into_bytes();
            let vol = storage::seal(&bundle, &data, name, &mut fx.chain, &mut rng).map_err(|e| e.to_string())?;
            let model = max_sealed.entry(name).or_default();
            *model += 1;
            ensure!(vol.header.counter_value == *model, "op {op}: counter {} but model {}", vol.header.counter_value, model);
            snapshots.push((name, *model, data, vol));
            continue;
        }
        let (name, value, data, vol) = &snapshots[rng.gen_range(0..snapshots.len())];
        let result = if rng.gen_bool(0.5) {
            storage::unseal(&bundle, vol, &fx.chain)
        } else {
            let blob = storage::backup(&bundle, vol, &fx.chain, &mut rng);
            blob.and_then(|b| storage::restore(&bundle, &b, &fx.chain))
        };
        let allowed = *value >= max_sealed[name];
        match result {
            Ok(pt) => {
                ensure!(allowed, "op {op}: stale {name}@{value} accepted (max {})", max_sealed[name]);
                ensure!(&pt == data, "op {op}: wrong plaintext");
                accepted += 1;
                equal_edge += usize::from(*value == max_sealed[name]);
            }
            Err(StorageError::RollbackDetected { .. }) => {
                ensure!(!allowed, "op {op}: current {name}@{value} rejected");
                rejected += 1;
            }
            Err(e) => return Err(format!("op {op}: unexpected {e}")),
        }
    }
    ensure!(equal_edge > 0 && rejected > 0, "seed {seed} never hit both outcomes");
    Ok(format!("{accepted} accepted ({equal_edge} at equality), {rejected} rejected"))
}

pub fn gateway_zt_tls(seed: u64) -> Check {
    let mut w = World::new(seed, WorldConfig::default());
    let err = |e: teestack::harness::HarnessError| e.to_string();
    w.setup(None, None).map_err(err)?;
    w.register_app("bank", "bank/1", 1, 1).map_err(err)?;
    w.deploy("bank", "bank-0", &DeployOptions::default()).map_err(err)?;
    let host = w.gateway_register("bank-0").map_err(err)?;
    ensure!(w.ct_scan().map_err(err)? == 0, "honest issuance raised alerts");

    let apex = w.cfg.zone.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut injected = BTreeSet::new();
    for i in 0..12 {
        let issuer = format!("rogue-ca-{}", rng.gen_range(0..4));
        let domain = match i % 3 {
            0 => host.clone(),
            1 => apex.clone(),
            _ => format!("x{i}.{apex}"),
        };
        let index = w.ct_inject(&domain, &issuer).map_err(err)?;
        injected.insert((index, domain, issuer));
        if i % 4 == 0 {
            w.ct_inject(&format!("elsewhere{i}.example"), "rogue-ca-0").map_err(err)?;
        }
    }
    w.ct_scan().map_err(err)?;
    let alerts: BTreeSet<_> = w.alerts.all().map(|a| (a.index, a.domain.clone(), a.issuer.clone())).collect();
    ensure!(alerts == injected, "alerts {alerts:?} != injected {injected:?}");

    let foreign = world_code(w.register_foreign("bank"));
    ensure!(foreign == "foreign-root", "foreign chain registration gave {foreign}");
    w.swap_gateway_root().map_err(err)?;
    let routed = world_code(w.client_get("bank", b"GET /"));
    ensure!(routed == "foreign-root", "route under a swapped root gave {routed}");

    let hijack = run_attack("dns-hijack", seed, &WorldConfig::default()).map_err(err)?;
    ensure!(hijack.pass && hijack.verdict() == Some("name-mismatch"), "dns-hijack: {}", hijack.render());
    Ok(format!("{} injected certs alerted exactly; foreign roots refused; dns-hijack ends in name-mismatch", injected.len()))
}

pub fn walkthrough(seed: u64) -> Check {
    let start = Instant::now();
    let report = run_walkthrough(seed, WorldConfig::default(), None);
    let took = start.elapsed();
    ensure!(report.all_verified(), "{}", report.render());
    ensure!(report.steps.len() == 7, "{} steps", report.steps.len());
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    for fault in Fault::ALL {
        let r = run_walkthrough(seed, WorldConfig::default(), Some(fault));
        ensure!(r.as_expected(), "fault {} broke at {:?}", fault.name(), r.broken_at);
    }
    Ok(format!("7 steps green in {took:.2?}; 7 faults break at their steps"))
}
