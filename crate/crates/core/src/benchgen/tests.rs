use super::*;
use crate::netlist::parse_netlist;
use crate::sim;

fn all_specs() -> Vec<FixtureSpec> {
    let triggers = [
        TriggerSpec::AlwaysOn,
        TriggerSpec::SpecificInput,
        TriggerSpec::Counter {
            width: 7,
            value: 100,
        },
        TriggerSpec::Fsm { patterns: 4 },
        TriggerSpec::FsmCounter {
            patterns: 4,
            width: 4,
        },
    ];
    let payloads = [
        Payload::BypassMux,
        Payload::XorLfsrLeak,
        Payload::IsolatedShiftRegister,
        Payload::ControlHijack,
        Payload::ScanEnableHijack,
        Payload::KeyReplacement,
    ];
    let mut v = vec![
        FixtureSpec::trojan_free(Core::ToyCipher, 1),
        FixtureSpec::trojan_free(Core::ToyProcessor, 1),
    ];
    for core in [Core::ToyCipher, Core::ToyProcessor] {
        for t in triggers {
            for p in payloads {
                v.push(FixtureSpec::new(core, t, p, 7));
            }
        }
    }
    v
}

#[test]
fn every_compatible_fixture_parses_and_names_its_points() {
    let mut built = 0;
    for spec in all_specs() {
        let (text, m) = match generate(&spec) {
            Ok(x) => x,
            Err(BenchError::Incompatible { .. }) => continue,
            Err(e) => panic!("{spec:?}: {e}"),
        };
        built += 1;
        let g = parse_netlist(&text).unwrap_or_else(|e| panic!("{spec:?}: {e}"));
        for name in m
            .valid_points
            .iter()
            .chain(&m.malicious_points)
            .chain(&m.type_i_points)
        {
            assert!(g.point_by_name(name).is_some(), "{spec:?}: {name}");
        }
        for a in &m.assets {
            assert!(g.net_by_name(&a.name).is_some() || g.ff_by_name(&a.name).is_some());
        }
        for r in &m.state_registers {
            assert!(g.ff_by_name(r).is_some(), "{r}");
        }
        assert!(g.report_unanalyzable().is_empty(), "{spec:?}");
    }
    assert_eq!(built, 2 + 5 * 5 + 5 * 2);
}

#[test]
fn generation_is_deterministic_per_seed() {
    let spec = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::Fsm { patterns: 4 },
        Payload::XorLfsrLeak,
        3,
    );
    assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    let other = FixtureSpec { seed: 4, ..spec };
    assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
}

#[test]
fn incompatible_and_invalid_specs_are_rejected() {
    let s = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::AlwaysOn,
        Payload::ControlHijack,
        0,
    );
    assert!(matches!(generate(&s), Err(BenchError::Incompatible { .. })));
    let s = FixtureSpec::new(
        Core::ToyProcessor,
        TriggerSpec::AlwaysOn,
        Payload::BypassMux,
        0,
    );
    assert!(matches!(generate(&s), Err(BenchError::Incompatible { .. })));
    let s = FixtureSpec::new(Core::ToyCipher, TriggerSpec::None, Payload::BypassMux, 0);
    assert!(matches!(generate(&s), Err(BenchError::Invalid(_))));
    let s = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::Counter { width: 3, value: 9 },
        Payload::BypassMux,
        0,
    );
    assert!(matches!(generate(&s), Err(BenchError::Invalid(_))));
}

#[test]
fn cipher_size_and_planted_elements() {
    let mut spec = FixtureSpec::trojan_free(Core::ToyCipher, 5);
    let (text, _) = generate(&spec).unwrap();
    let g = parse_netlist(&text).unwrap();
    assert!((300..1200).contains(&g.cells.len()), "{}", g.cells.len());
    spec.plant_latch = true;
    spec.plant_uncontrollable = true;
    let (text, m) = generate(&spec).unwrap();
    let g = parse_netlist(&text).unwrap();
    let names: Vec<String> = g
        .report_unanalyzable()
        .iter()
        .map(|e| e.name.clone())
        .collect();
    assert_eq!(names.len(), 2);
    for n in &m.unanalyzable {
        assert!(names.contains(n), "{n} in {names:?}");
    }
}

fn value_of(g: &crate::netlist::CircuitGraph, frame: &[bool], prefix: &str, n: usize) -> u64 {
    (0..n)
        .map(|i| (frame[g.net_by_name(&format!("{prefix}{i}_q")).unwrap().index()] as u64) << i)
        .sum()
}

#[test]
fn planted_sequence_reaches_the_trigger_state() {
    let spec = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::FsmCounter {
            patterns: 3,
            width: 3,
        },
        Payload::BypassMux,
        11,
    );
    let (text, m) = generate(&spec).unwrap();
    let g = parse_netlist(&text).unwrap();
    let stg = m.stg.as_ref().unwrap();
    let data = g.data_inputs();
    let frame_for = |pt: u64| -> Vec<bool> {
        g.inputs
            .iter()
            .map(|&n| {
                let name = g.net_name(n);
                match name.strip_prefix("pt[") {
                    Some(r) => pt >> r.trim_end_matches(']').parse::<u32>().unwrap() & 1 == 1,
                    None => !data.contains(&n) && name == "rstn",
                }
            })
            .collect()
    };
    let mut inputs: Vec<Vec<bool>> = m.trigger.sequence.iter().map(|&p| frame_for(p)).collect();
    let hold = m.trigger.hold_cycles.unwrap() as usize;
    inputs.extend((0..hold + 1).map(|_| frame_for(0)));
    let state: Vec<bool> = g
        .ffs
        .iter()
        .map(|f| f.reset.map(|r| r.value).unwrap_or(false))
        .collect();
    let frames = sim::run_sequence(&g, &state, &inputs, None);
    let bits = stg.registers.len();
    let st = |t: usize| value_of(&g, &frames[t], "tj_st", bits);
    assert_eq!(st(3), 3);
    assert_eq!(st(3 + hold - 1), 3);
    assert_eq!(st(3 + hold), stg.trigger_state);
    let trig = g.net_by_name("tj_trig").unwrap();
    assert!(!frames[3 + hold - 1][trig.index()]);
    assert!(frames[3 + hold][trig.index()]);
}

#[test]
fn random_fixtures_parse_within_bounds() {
    for seed in 0..200 {
        let f = random_fixture(seed);
        let g = parse_netlist(&f.netlist).unwrap();
        assert!(g.data_inputs().len() <= 6);
        assert!(g.ffs.len() <= 4);
        assert!((1..=3).contains(&f.depth));
        assert!(g.net_by_name(&f.asset).is_some());
    }
}
