use std::fmt::Write;

use serde_json::{json, Value};

use super::{CircuitGraph, Driver, SeqKind};

/// Prints the graph back in the netlist grammar accepted by
/// [`super::parse_netlist`].
pub fn emit(g: &CircuitGraph) -> String {
    let mut s = String::new();
    let name = |n| g.net_name(n);
    let mut ports: Vec<&str> = g.inputs.iter().map(|&n| name(n)).collect();
    for &o in &g.outputs {
        if !g.inputs.contains(&o) {
            ports.push(name(o));
        }
    }
    writeln!(s, "module {} ({});", g.name, ports.join(", ")).unwrap();
    if !g.inputs.is_empty() {
        let v: Vec<&str> = g.inputs.iter().map(|&n| name(n)).collect();
        writeln!(s, "  input {};", v.join(", ")).unwrap();
    }
    if !g.outputs.is_empty() {
        let v: Vec<&str> = g.outputs.iter().map(|&n| name(n)).collect();
        writeln!(s, "  output {};", v.join(", ")).unwrap();
    }
    let wires: Vec<&str> = g
        .nets
        .iter()
        .filter(|n| {
            !g.is_input(n.id) && !g.is_output(n.id) && !matches!(n.driver, Some(Driver::Const(_)))
        })
        .map(|n| n.name.as_str())
        .collect();
    if !wires.is_empty() {
        writeln!(s, "  wire {};", wires.join(", ")).unwrap();
    }
    for c in &g.cells {
        let mut pins = vec![format!(".Y({})", name(c.output))];
        for (pin, &n) in c.kind.pin_names().iter().zip(&c.inputs) {
            pins.push(format!(".{pin}({})", name(n)));
        }
        writeln!(
            s,
            "  {} {} ({});",
            c.kind.keyword(),
            c.name,
            pins.join(", ")
        )
        .unwrap();
    }
    for f in &g.ffs {
        let (kw, clk) = match f.kind {
            SeqKind::Dff => ("DFF", "CK"),
            SeqKind::Latch => ("DLATCH", "G"),
        };
        let mut pins = vec![
            format!(".D({})", name(f.d)),
            format!(".Q({})", name(f.q)),
            format!(".{clk}({})", name(f.clock)),
        ];
        if let Some(r) = f.reset {
            let pin = if r.value { "SN" } else { "RN" };
            pins.push(format!(".{pin}({})", name(r.net)));
        }
        writeln!(s, "  {kw} {} ({});", f.name, pins.join(", ")).unwrap();
    }
    s.push_str("endmodule\n");
    s
}

/// Deterministic JSON dump of the graph, ordered by dense id.
pub fn dump_json(g: &CircuitGraph) -> Value {
    let name = |n| g.net_name(n).to_string();
    json!({
        "module": g.name,
        "inputs": g.inputs.iter().map(|&n| name(n)).collect::<Vec<_>>(),
        "outputs": g.outputs.iter().map(|&n| name(n)).collect::<Vec<_>>(),
        "nets": g.nets.iter().map(|n| json!({
            "id": n.id.0,
            "name": n.name,
            "driver": match n.driver {
                Some(Driver::Input) => json!("input"),
                Some(Driver::Const(v)) => json!(if v { "1'b1" } else { "1'b0" }),
                Some(Driver::Cell(c)) => json!(g.cell(c).name),
                Some(Driver::Ff(f)) => json!(g.ff(f).name),
                None => Value::Null,
            },
            "fanout": n.sinks.len(),
        })).collect::<Vec<_>>(),
        "cells": g.cells.iter().map(|c| json!({
            "id": c.id.0,
            "name": c.name,
            "kind": c.kind.keyword(),
            "inputs": c.inputs.iter().map(|&n| name(n)).collect::<Vec<_>>(),
            "output": name(c.output),
        })).collect::<Vec<_>>(),
        "flipflops": g.ffs.iter().map(|f| json!({
            "id": f.id.0,
            "name": f.name,
            "kind": match f.kind { SeqKind::Dff => "DFF", SeqKind::Latch => "DLATCH" },
            "d": name(f.d),
            "q": name(f.q),
            "clock": name(f.clock),
            "reset": f.reset.map(|r| json!({"net": name(r.net), "value": r.value})),
        })).collect::<Vec<_>>(),
        "unanalyzable": g.report_unanalyzable(),
    })
}
