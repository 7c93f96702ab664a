use teestack::harness::{audit, run_attack, run_walkthrough, World, WorldConfig, ATTACKS};

#[test]
fn reports_are_byte_identical_per_seed() {
    for seed in [0, 42, 1 << 40] {
        let a = serde_json::to_vec(&run_walkthrough(seed, WorldConfig::default(), None)).unwrap();
        let b = serde_json::to_vec(&run_walkthrough(seed, WorldConfig::default(), None)).unwrap();
        assert_eq!(a, b);
        for name in ATTACKS {
            let a = run_attack(name, seed, &WorldConfig::default()).unwrap().render();
            assert_eq!(a, run_attack(name, seed, &WorldConfig::default()).unwrap().render());
        }
    }
}

#[test]
fn every_attack_is_contained() {
    for name in ATTACKS {
        let r = run_attack(name, 3, &WorldConfig::default()).unwrap();
        assert!(r.pass, "{}", r.render());
    }
}

#[test]
fn scenario_world_log_audits_clean() {
    let mut w = World::new(4, WorldConfig::default());
    w.setup(None, None).unwrap();
    w.register_app("svc", "svc/1", 3, 2).unwrap();
    w.rotate_root(20).unwrap();
    w.advance(30).unwrap();
    let chain = w.chain().unwrap();
    let report = audit(&chain.log().to_jsonl(), Some(chain.state())).unwrap();
    assert!(report.clean(), "{report:?}");
}
