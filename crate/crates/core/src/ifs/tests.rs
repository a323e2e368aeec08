use super::*;
use crate::atpg::Detection;
use crate::benchgen::{self, NetlistWriter, C17};
use crate::netlist::parse_netlist;
use crate::sim;

fn params(depth: usize) -> VerifyParams {
    VerifyParams {
        atpg: AtpgParams {
            depth,
            ..AtpgParams::default()
        },
        ..VerifyParams::default()
    }
}

fn conf(g: &CircuitGraph, name: &str) -> Asset {
    Asset::resolve(g, name, AssetKind::Confidentiality).unwrap()
}

fn replay_ok(g: &CircuitGraph, r: &FlowReport) {
    for p in r.points() {
        let (cut, w) = r.witness(g, p).unwrap();
        assert!(w.stimulus.len() <= r.depth_bound);
        let (state, inputs) = w.stimulus.to_bool(g);
        let a = sim::run_sequence(g, &state, &inputs, Some((cut, false)));
        let b = sim::run_sequence(g, &state, &inputs, Some((cut, true)));
        let t = w.frame;
        let differs = match w.observed {
            Observation::Net(n) => a[t][n.index()] != b[t][n.index()],
            Observation::Capture(f) => sim::next_state(g, f, &a[t]) != sim::next_state(g, f, &b[t]),
        };
        assert!(differs, "replay of {} does not differ", p.name);
    }
}

#[test]
fn c17_flow_reaches_only_n22() {
    let g = parse_netlist(C17).unwrap();
    let r = confidentiality_verify(&g, &conf(&g, "N1"), &params(1)).unwrap();
    assert_eq!(r.levels.len(), 1);
    assert_eq!(r.point_names(), BTreeSet::from(["N22".to_string()]));
    replay_ok(&g, &r);
}

#[test]
fn equality_property_is_violated_without_flow() {
    let g = parse_netlist(C17).unwrap();
    let (n1, n23) = (g.net_by_name("N1").unwrap(), g.net_by_name("N23").unwrap());
    assert!(matches!(
        check_equality_property(&g, n1, n23).unwrap(),
        PropertyResult::Violated { .. }
    ));
    assert!(check_equality_property(&g, n1, NetId(99)).is_err());
    let w =
        parse_netlist("module m (a, y);\n input a;\n output y;\n BUF u (.Y(y), .A(a));\nendmodule")
            .unwrap();
    let (a, y) = (w.net_by_name("a").unwrap(), w.net_by_name("y").unwrap());
    assert!(matches!(
        check_equality_property(&w, a, y).unwrap(),
        PropertyResult::Violated { .. }
    ));
    let r = confidentiality_verify(&w, &conf(&w, "a"), &params(1)).unwrap();
    assert_eq!(r.point_names().len(), 1);
}

#[test]
fn shift_register_levels_follow_the_chain() {
    let g = parse_netlist(&benchgen::shift_register_netlist(3)).unwrap();
    let r = confidentiality_verify(&g, &conf(&g, "din"), &params(4)).unwrap();
    let per_level: Vec<Vec<String>> = r
        .levels
        .iter()
        .map(|l| l.points.iter().map(|p| p.name.clone()).collect())
        .collect();
    assert_eq!(
        per_level,
        vec![vec!["s0"], vec!["s1"], vec!["s2"], vec!["dout"]]
    );
    let depths: Vec<usize> = r.points().map(|p| p.frame).collect();
    assert_eq!(depths, vec![0, 1, 2, 3]);
    replay_ok(&g, &r);
    let shallow = confidentiality_verify(&g, &conf(&g, "din"), &params(2)).unwrap();
    assert_eq!(shallow.point_names().len(), 2);
}

#[test]
fn integrity_of_a_register_fed_by_inputs() {
    let mut w = NetlistWriter::new("r");
    let clk = w.input("clk");
    let a = w.input("a");
    let b = w.input("b");
    let d = w.gate("AND", &[&a, &b]);
    w.dff("r0", &d, "q", &clk, None);
    w.wire("q");
    w.output("y");
    w.gate_to("BUF", "y", &["q"]);
    let g = parse_netlist(&w.finish()).unwrap();
    let asset = Asset::resolve(&g, "r0", AssetKind::Integrity).unwrap();
    let mut r = integrity_verify(&g, &asset, &params(2)).unwrap();
    assert_eq!(
        r.point_names(),
        BTreeSet::from(["a".to_string(), "b".to_string()])
    );
    assert_eq!(r.observed_at.as_deref(), Some("r0"));
    let valid = resolve_points(&g, &["a".into(), "b".into()]).unwrap();
    intersect_analysis(&g, &mut r, &valid).unwrap();
    assert!(r.malicious.is_empty());
    assert_eq!(r.verdict, Verdict::NoneFound);
    replay_ok(&g, &r);
    assert!(confidentiality_verify(&g, &asset, &params(1)).is_err());
}

#[test]
fn asset_names_resolve_with_index_alias() {
    let (text, _) = benchgen::generate(&benchgen::FixtureSpec::trojan_free(
        benchgen::Core::ToyCipher,
        1,
    ))
    .unwrap();
    let g = parse_netlist(&text).unwrap();
    assert_eq!(conf(&g, "key0").label, "key[0]");
    assert_eq!(conf(&g, "key[3]").label, "key[3]");
    assert!(Asset::resolve(&g, "nokey9", AssetKind::Confidentiality).is_err());
}

#[test]
fn range_expansion() {
    assert_eq!(expand_range("ct[2:0]"), vec!["ct[2]", "ct[1]", "ct[0]"]);
    assert_eq!(expand_range("a[0:1]"), vec!["a[0]", "a[1]"]);
    assert_eq!(expand_range("key[3]"), vec!["key[3]"]);
    assert_eq!(expand_range("x"), vec!["x"]);
}

fn toy_report(depths: &[usize]) -> FlowReport {
    let mut r = LevelLoop::new(
        &parse_netlist(C17).unwrap(),
        &Asset {
            net: NetId(0),
            label: "a".into(),
            kind: AssetKind::Confidentiality,
        },
        &VerifyParams::default(),
    )
    .report;
    r.levels.push(Level {
        level: 1,
        points: depths
            .iter()
            .enumerate()
            .map(|(i, &d)| ReportedPoint {
                name: format!("p{i}"),
                kind: PointKind::Output,
                level: 1,
                depth: d,
                frame: 0,
                strict: true,
                stimulus: StimulusRecord::default(),
                path: Vec::new(),
            })
            .collect(),
    });
    r
}

#[test]
fn depth_analysis_thresholds() {
    let mut r = toy_report(&[20, 21, 22, 2]);
    depth_analysis(&mut r, 0.5);
    assert_eq!(r.malicious_names(), BTreeSet::from(["p3".to_string()]));
    assert_eq!(r.verdict, Verdict::TypeI);
    depth_analysis(&mut r, 0.0);
    assert!(r.malicious.is_empty());
    assert_eq!(r.verdict, Verdict::NoneFound);
    let mut u = toy_report(&[7, 7, 7]);
    depth_analysis(&mut u, 0.5);
    assert!(u.malicious.is_empty());
    assert_eq!(u.depth_analysis.as_ref().unwrap().median, Some(7.0));
}

#[test]
fn report_json_round_trips_and_witnesses_rebuild() {
    let g = parse_netlist(&benchgen::shift_register_netlist(2)).unwrap();
    let r = confidentiality_verify(&g, &conf(&g, "din"), &params(3)).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let mut back: FlowReport = serde_json::from_str(&text).unwrap();
    back.asset = Asset::resolve(&g, &back.asset.label, back.asset.kind).unwrap();
    replay_ok(&g, &back);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn budget_exhaustion_is_listed_as_abandoned() {
    let g = parse_netlist(C17).unwrap();
    let mut p = params(1);
    p.atpg.budget = 0;
    let r = confidentiality_verify(&g, &conf(&g, "N1"), &p).unwrap();
    let _ = Detection::Abandoned;
    assert!(
        r.abandoned.iter().any(|a| a.name == "N22"),
        "{:?}",
        r.abandoned
    );
}
