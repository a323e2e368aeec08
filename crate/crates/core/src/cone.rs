//! Structural cone analysis over the combinational subgraph.
//!
//! Fan-out cones stop at flip-flop data pins and primary outputs; fan-in cones
//! stop at flip-flop outputs and primary inputs. The `transitive_*` variants
//! keep crossing flip-flops until a fixpoint.

use std::collections::{BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::netlist::{CellId, CircuitGraph, Driver, FfId, NetId, Point, SeqKind, Sink};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConeError {
    #[error("unknown net id {0}")]
    UnknownNet(u32),
    #[error("unknown point")]
    UnknownPoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeResult {
    pub origin: NetId,
    pub endpoints: BTreeSet<Point>,
    pub interior: BTreeSet<CellId>,
}

fn check_net(g: &CircuitGraph, n: NetId) -> Result<(), ConeError> {
    if n.index() < g.nets.len() {
        Ok(())
    } else {
        Err(ConeError::UnknownNet(n.0))
    }
}

/// Observe points reachable from `net` through combinational cells only.
pub fn fanout_endpoints(g: &CircuitGraph, net: NetId) -> Result<ConeResult, ConeError> {
    check_net(g, net)?;
    let mut seen = vec![false; g.nets.len()];
    let mut endpoints = BTreeSet::new();
    let mut interior = BTreeSet::new();
    let mut queue = VecDeque::from([net]);
    seen[net.index()] = true;
    while let Some(n) = queue.pop_front() {
        if g.is_output(n) {
            endpoints.insert(Point::Output(n));
        }
        for s in &g.net(n).sinks {
            match *s {
                Sink::Cell { cell, .. } => {
                    interior.insert(cell);
                    let out = g.cell(cell).output;
                    if !seen[out.index()] {
                        seen[out.index()] = true;
                        queue.push_back(out);
                    }
                }
                Sink::FfData(f) => {
                    endpoints.insert(Point::Ff(f));
                }
                Sink::FfClock(_) | Sink::FfReset(_) => {}
            }
        }
    }
    Ok(ConeResult {
        origin: net,
        endpoints,
        interior,
    })
}

/// Control points that reach `net` through combinational cells only.
pub fn fanin_startpoints(g: &CircuitGraph, net: NetId) -> Result<ConeResult, ConeError> {
    check_net(g, net)?;
    let mut seen = vec![false; g.nets.len()];
    let mut endpoints = BTreeSet::new();
    let mut interior = BTreeSet::new();
    let mut queue = VecDeque::from([net]);
    seen[net.index()] = true;
    while let Some(n) = queue.pop_front() {
        match g.net(n).driver {
            Some(Driver::Input) => {
                endpoints.insert(Point::Input(n));
            }
            Some(Driver::Ff(f)) => {
                endpoints.insert(Point::Ff(f));
            }
            Some(Driver::Cell(c)) => {
                interior.insert(c);
                for &i in &g.cell(c).inputs {
                    if !seen[i.index()] {
                        seen[i.index()] = true;
                        queue.push_back(i);
                    }
                }
            }
            Some(Driver::Const(_)) | None => {}
        }
    }
    Ok(ConeResult {
        origin: net,
        endpoints,
        interior,
    })
}

fn point_ok(g: &CircuitGraph, p: Point) -> bool {
    match p {
        Point::Input(n) | Point::Output(n) => n.index() < g.nets.len(),
        Point::Ff(f) => f.index() < g.ffs.len(),
    }
}

/// Flip-flops in the multi-cycle fan-in of the given observe points.
pub fn transitive_fanin_elements(
    g: &CircuitGraph,
    points: &BTreeSet<Point>,
) -> Result<BTreeSet<FfId>, ConeError> {
    let mut out = BTreeSet::new();
    let mut work: Vec<NetId> = Vec::new();
    for &p in points {
        if !point_ok(g, p) {
            return Err(ConeError::UnknownPoint);
        }
        match p {
            Point::Input(n) | Point::Output(n) => work.push(n),
            Point::Ff(f) => work.push(g.ff(f).d),
        }
    }
    while let Some(n) = work.pop() {
        for sp in fanin_startpoints(g, n)?.endpoints {
            if let Point::Ff(f) = sp {
                if out.insert(f) {
                    work.push(g.ff(f).d);
                }
            }
        }
    }
    Ok(out)
}

/// Flip-flops in the multi-cycle fan-out of the given control points.
pub fn transitive_fanout_elements(
    g: &CircuitGraph,
    points: &BTreeSet<Point>,
) -> Result<BTreeSet<FfId>, ConeError> {
    let mut out = BTreeSet::new();
    let mut work: Vec<NetId> = Vec::new();
    for &p in points {
        if !point_ok(g, p) {
            return Err(ConeError::UnknownPoint);
        }
        match p {
            Point::Input(n) | Point::Output(n) => work.push(n),
            Point::Ff(f) => work.push(g.ff(f).q),
        }
    }
    while let Some(n) = work.pop() {
        for ep in fanout_endpoints(g, n)?.endpoints {
            if let Point::Ff(f) = ep {
                if out.insert(f) {
                    work.push(g.ff(f).q);
                }
            }
        }
    }
    Ok(out)
}

/// Flip-flop level dependency graph: an edge `a -> b` when `a`'s output
/// reaches `b`'s data pin combinationally.
pub fn register_graph(g: &CircuitGraph) -> DiGraph<FfId, ()> {
    let mut dg = DiGraph::new();
    let nodes: Vec<_> = g.ffs.iter().map(|f| dg.add_node(f.id)).collect();
    for f in &g.ffs {
        if f.kind != SeqKind::Dff {
            continue;
        }
        let cone = fanin_startpoints(g, f.d).expect("valid net");
        for sp in cone.endpoints {
            if let Point::Ff(src) = sp {
                dg.add_edge(nodes[src.index()], nodes[f.id.index()], ());
            }
        }
    }
    dg
}

/// Flip-flops with sequential feedback: a self loop through combinational
/// logic, or membership in a register group with a sequential cycle.
pub fn identify_state_registers(g: &CircuitGraph) -> BTreeSet<FfId> {
    let dg = register_graph(g);
    let mut out = BTreeSet::new();
    for scc in tarjan_scc(&dg) {
        if scc.len() > 1 {
            out.extend(scc.iter().map(|&n| dg[n]));
        } else {
            let n = scc[0];
            if dg.contains_edge(n, n) {
                out.insert(dg[n]);
            }
        }
    }
    out
}

/// Flip-flops whose output reaches `ff`'s data pin in one cycle.
pub fn register_fanin(g: &CircuitGraph, ff: FfId) -> BTreeSet<FfId> {
    fanin_startpoints(g, g.ff(ff).d)
        .expect("valid net")
        .endpoints
        .into_iter()
        .filter_map(|p| match p {
            Point::Ff(f) => Some(f),
            _ => None,
        })
        .collect()
}
