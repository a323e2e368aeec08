use super::*;
use crate::benchgen::{self, C17};
use crate::netlist::{parse_netlist, Point};

fn params(depth: usize) -> AtpgParams {
    AtpgParams {
        depth,
        ..AtpgParams::default()
    }
}

/// Two-valued replay with the fault net forced to 0 and to 1.
fn replay_differs(g: &CircuitGraph, net: NetId, w: &Witness) -> bool {
    let (state, inputs) = w.stimulus.to_bool(g);
    let a = sim::run_sequence(g, &state, &inputs, Some((net, false)));
    let b = sim::run_sequence(g, &state, &inputs, Some((net, true)));
    let t = w.frame;
    match w.observed {
        Observation::Net(n) => a[t][n.index()] != b[t][n.index()],
        Observation::Capture(f) => sim::next_state(g, f, &a[t]) != sim::next_state(g, f, &b[t]),
    }
}

fn detected(o: &AtpgOutcome) -> &Witness {
    match &o.detection {
        Detection::Detected(w) => w,
        other => panic!("expected detection, got {other:?}"),
    }
}

#[test]
fn c17_n1_reaches_n22_but_not_n23() {
    let g = parse_netlist(C17).unwrap();
    let scan = ScanConfig::new();
    let n1 = g.net_by_name("N1").unwrap();
    let n22 = g.net_by_name("N22").unwrap();
    let n23 = g.net_by_name("N23").unwrap();
    for value in [false, true] {
        let f = StuckAtFault { net: n1, value };
        let r = detect_fault(&g, &scan, f, &[Observation::Net(n23)], &params(1)).unwrap();
        assert_eq!(r.detection, Detection::Undetectable);
        let r = detect_fault(&g, &scan, f, &[Observation::Net(n22)], &params(1)).unwrap();
        let w = detected(&r);
        assert_eq!(w.stimulus.len(), 1);
        assert_eq!(w.frame, 0);
        assert!(replay_differs(&g, n1, w));
        assert!(w.path.strict);
        assert_eq!(w.path.depth, 2);
    }
}

#[test]
fn asset_wired_to_output() {
    let g = parse_netlist(
        "module m (a, b, y);\n input a, b;\n output y, b;\n BUF u (.Y(y), .A(a));\nendmodule",
    )
    .unwrap();
    let a = g.net_by_name("a").unwrap();
    let y = g.net_by_name("y").unwrap();
    let b = g.net_by_name("b").unwrap();
    let scan = ScanConfig::new();
    let r = detect_flow(&g, &scan, a, &[Observation::Net(y)], &params(1)).unwrap();
    assert_eq!(detected(&r).path.depth, 1);
    let r = detect_flow(&g, &scan, b, &[Observation::Net(b)], &params(1)).unwrap();
    assert_eq!(detected(&r).path.depth, 0);
}

#[test]
fn zero_depth_and_unknown_net_are_errors() {
    let g = parse_netlist(C17).unwrap();
    let f = StuckAtFault {
        net: NetId(999),
        value: false,
    };
    assert_eq!(
        detect_fault(&g, &ScanConfig::new(), f, &[], &params(1)),
        Err(AtpgError::UnknownNet(999))
    );
    let f = StuckAtFault {
        net: NetId(0),
        value: false,
    };
    assert_eq!(
        detect_fault(&g, &ScanConfig::new(), f, &[], &params(0)),
        Err(AtpgError::ZeroDepth)
    );
}

#[test]
fn shift_register_depth_monotonicity() {
    let g = parse_netlist(&benchgen::shift_register_netlist(3)).unwrap();
    let din = g.net_by_name("din").unwrap();
    let dout = g.net_by_name("dout").unwrap();
    let scan = ScanConfig::new();
    let obs = [Observation::Net(dout)];
    let mut first = None;
    for d in 1..=6 {
        let r = detect_flow(&g, &scan, din, &obs, &params(d)).unwrap();
        if r.detection.is_detected() {
            first.get_or_insert(d);
            let w = detected(&r);
            assert!(replay_differs(&g, din, w));
            assert_eq!(w.frame, 3);
        } else {
            assert!(first.is_none(), "detected at {first:?} but not at {d}");
        }
    }
    assert_eq!(first, Some(4));
    let r = detect_flow(
        &g,
        &scan,
        din,
        &obs,
        &AtpgParams {
            depth: 2,
            adaptive: true,
            ..params(2)
        },
    )
    .unwrap();
    assert!(r.detection.is_detected());
    assert_eq!(r.depth, 4);
}

#[test]
fn scan_flipflop_is_observed_in_one_frame() {
    let g = parse_netlist(&benchgen::shift_register_netlist(3)).unwrap();
    let din = g.net_by_name("din").unwrap();
    let s0 = g.ff_by_name("s0").unwrap();
    let s2 = g.ff_by_name("s2").unwrap();
    let scan = ScanConfig::full_scan(&g);
    let r = detect_flow(&g, &scan, din, &[Observation::Capture(s0)], &params(1)).unwrap();
    let w = detected(&r);
    assert_eq!(w.stimulus.len(), 1);
    assert!(replay_differs(&g, din, w));
    let r = detect_flow(&g, &scan, din, &[Observation::Capture(s2)], &params(2)).unwrap();
    assert_eq!(r.detection, Detection::Undetectable);
    let partial = scan.remove_scan_ability(&g, s0).unwrap();
    let partial = partial
        .remove_scan_ability(&g, g.ff_by_name("s1").unwrap())
        .unwrap();
    let r = detect_flow(&g, &partial, din, &[Observation::Capture(s2)], &params(3)).unwrap();
    let w = detected(&r);
    assert_eq!(w.frame, 2);
    assert!(replay_differs(&g, din, w));
    assert!(partial.is_observable(&g, Point::Ff(s2)));
}

#[test]
fn stimulus_keeps_only_needed_bits() {
    let g = parse_netlist(C17).unwrap();
    let n1 = g.net_by_name("N1").unwrap();
    let n22 = g.net_by_name("N22").unwrap();
    let f = StuckAtFault {
        net: n1,
        value: false,
    };
    let r = detect_fault(
        &g,
        &ScanConfig::new(),
        f,
        &[Observation::Net(n22)],
        &params(1),
    )
    .unwrap();
    let w = detected(&r);
    // N22 = NAND(NAND(N1,N3), N16): N3 = 1 and N16 = 1 are required.
    let name = |k: usize| g.net_name(w.stimulus.inputs[k]).to_string();
    let spec: Vec<String> = (0..w.stimulus.inputs.len())
        .filter(|&k| w.stimulus.frames[0][k].is_some())
        .map(name)
        .collect();
    assert!(spec.contains(&"N3".to_string()));
    assert!(!spec.contains(&"N7".to_string()));
    assert!(!spec.contains(&"N1".to_string()));
}

#[test]
fn justify_counter_values() {
    let g = parse_netlist(&benchgen::counter_netlist(3)).unwrap();
    let bits = |v: u32| -> Vec<(FfId, bool)> {
        (0..3)
            .map(|i| (g.ff_by_name(&format!("c{i}")).unwrap(), v >> i & 1 == 1))
            .collect()
    };
    let scan = ScanConfig::new();
    let p = AtpgParams::default();
    match justify_state(&g, &scan, &bits(0), 0, &p).unwrap() {
        Justification::Reachable(s) => assert!(s.is_empty()),
        other => panic!("{other:?}"),
    }
    match justify_state(&g, &scan, &bits(5), 8, &p).unwrap() {
        Justification::Reachable(s) => {
            assert_eq!(s.len(), 5);
            let (state, inputs) = s.to_bool(&g);
            let frames = sim::run_sequence(&g, &state, &inputs, None);
            let last = frames.last().unwrap();
            let v: u32 = (0..3)
                .map(|i| {
                    (sim::next_state(&g, g.ff_by_name(&format!("c{i}")).unwrap(), last) as u32) << i
                })
                .sum();
            assert_eq!(v, 5);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(
        justify_state(&g, &scan, &bits(5), 4, &p).unwrap(),
        Justification::Unreachable
    );
}

#[test]
fn one_hot_violation_is_unreachable() {
    let src = "module ring (clk, rstn, go);\n input clk, rstn, go;\n wire a, b, c, na, nb, nc;\n\
        MUX2 m0 (.Y(na), .S(go), .A(a), .B(c));\n MUX2 m1 (.Y(nb), .S(go), .A(b), .B(a));\n\
        MUX2 m2 (.Y(nc), .S(go), .A(c), .B(b));\n DFF fa (.D(na), .Q(a), .CK(clk), .SN(rstn));\n\
        DFF fb (.D(nb), .Q(b), .CK(clk), .RN(rstn));\n DFF fc (.D(nc), .Q(c), .CK(clk), .RN(rstn));\nendmodule";
    let g = parse_netlist(src).unwrap();
    let ff = |n: &str| g.ff_by_name(n).unwrap();
    let target = [(ff("fa"), true), (ff("fb"), true)];
    for d in 0..=6 {
        assert_eq!(
            justify_state(&g, &ScanConfig::new(), &target, d, &AtpgParams::default()).unwrap(),
            Justification::Unreachable
        );
    }
    let ok = [(ff("fc"), true)];
    assert!(matches!(
        justify_state(&g, &ScanConfig::new(), &ok, 6, &AtpgParams::default()).unwrap(),
        Justification::Reachable(s) if s.len() == 2
    ));
}

#[test]
fn budget_exhaustion_abandons() {
    let mut w = benchgen::NetlistWriter::new("cmp");
    let k = w.input("k");
    let mut eqs = Vec::new();
    for i in 0..4 {
        let a = w.input(&format!("a{i}"));
        let b = w.input(&format!("b{i}"));
        eqs.push(w.gate("XNOR", &[&a, &b]));
    }
    let eq = w.tree("AND", &eqs);
    w.output("y");
    w.gate_to("AND", "y", &[&k, &eq]);
    let g = parse_netlist(&w.finish()).unwrap();
    let k = g.net_by_name("k").unwrap();
    let y = g.net_by_name("y").unwrap();
    let obs = [Observation::Net(y)];
    let p = AtpgParams {
        budget: 0,
        ..params(1)
    };
    let r = detect_flow(&g, &ScanConfig::new(), k, &obs, &p).unwrap();
    assert_eq!(r.detection, Detection::Abandoned);
    let r = detect_flow(&g, &ScanConfig::new(), k, &obs, &params(1)).unwrap();
    let w = detected(&r);
    assert!(replay_differs(&g, k, w));
    assert_eq!(w.stimulus.specified_bits(), 8);
}
