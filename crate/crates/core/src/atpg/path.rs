use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::netlist::{CellId, CellKind, CircuitGraph, Driver, FfId, NetId, SeqKind, Sink};
use crate::sat::{SatResult, Sig};
use crate::sim::{self, Tern};

use super::{
    AtpgParams, Observation, PathElement, PathStep, PropagationPath, Search, Stimulus,
    StuckAtFault, Witness,
};

/// Ternary values of both rails in every frame of a replay.
#[derive(Clone, Debug)]
pub struct DualTrace {
    pub good: Vec<Vec<Tern>>,
    pub faulty: Vec<Vec<Tern>>,
}

impl DualTrace {
    pub fn differs(&self, t: usize, n: NetId) -> bool {
        let (a, b) = (self.good[t][n.index()], self.faulty[t][n.index()]);
        a != Tern::X && b != Tern::X && a != b
    }

    pub fn capture_differs(&self, g: &CircuitGraph, t: usize, f: FfId) -> bool {
        let a = sim::next_state(g, f, &self.good[t]);
        let b = sim::next_state(g, f, &self.faulty[t]);
        a != Tern::X && b != Tern::X && a != b
    }

    pub fn observed_differs(&self, g: &CircuitGraph, t: usize, o: Observation) -> bool {
        match o {
            Observation::Net(n) => self.differs(t, n),
            Observation::Capture(f) => self.capture_differs(g, t, f),
        }
    }
}

/// Replays a stimulus on both rails with the fault net cut.
pub fn dual_simulation(g: &CircuitGraph, fault: StuckAtFault, stim: &Stimulus) -> DualTrace {
    let (state, inputs) = stim.to_ternary(g);
    let good = sim::run_sequence(
        g,
        &state,
        &inputs,
        Some((fault.net, Tern::from_bool(!fault.value))),
    );
    let faulty = sim::run_sequence(
        g,
        &state,
        &inputs,
        Some((fault.net, Tern::from_bool(fault.value))),
    );
    DualTrace { good, faulty }
}

/// A condition a sensitized path imposes.
#[derive(Clone, Copy, Debug)]
enum Req {
    Differs(usize, NetId),
    CaptureDiffers(usize, FfId),
    GoodIs(usize, NetId, bool),
    GoodDiffer(usize, NetId, NetId),
}

/// Side-input conditions for the difference entering `cell` on `from`.
fn side_reqs(g: &CircuitGraph, t: usize, cell: CellId, from: NetId, out: &mut Vec<Req>) {
    let c = g.cell(cell);
    let pin = c
        .inputs
        .iter()
        .position(|&n| n == from)
        .expect("path enters through a pin");
    let sides = c.inputs.iter().copied().filter(|&n| n != from);
    match c.kind {
        CellKind::And | CellKind::Nand => out.extend(sides.map(|n| Req::GoodIs(t, n, true))),
        CellKind::Or | CellKind::Nor => out.extend(sides.map(|n| Req::GoodIs(t, n, false))),
        CellKind::Xor | CellKind::Xnor | CellKind::Not | CellKind::Buf => {}
        CellKind::Mux2 => match pin {
            0 => out.push(Req::GoodDiffer(t, c.inputs[1], c.inputs[2])),
            1 => out.push(Req::GoodIs(t, c.inputs[0], false)),
            _ => out.push(Req::GoodIs(t, c.inputs[0], true)),
        },
    }
}

/// Conditions under which `f` passes its data input on at frame `t`.
fn capture_reqs(g: &CircuitGraph, t: usize, f: FfId, out: &mut Vec<Req>) {
    let ff = g.ff(f);
    if ff.kind == SeqKind::Latch {
        out.push(Req::GoodIs(t, ff.clock, true));
    }
    if let Some(r) = ff.reset {
        out.push(Req::GoodIs(t, r.net, r.active_low));
    }
}

fn path_reqs(g: &CircuitGraph, path: &PropagationPath, end: usize, obs: Observation) -> Vec<Req> {
    let mut out = Vec::new();
    for s in &path.steps {
        match s.element {
            PathElement::Cell(c) => {
                out.push(Req::Differs(s.frame, g.cell(c).output));
                side_reqs(g, s.frame, c, s.from, &mut out);
            }
            PathElement::Ff(f) => {
                out.push(Req::Differs(s.frame + 1, g.ff(f).q));
                capture_reqs(g, s.frame, f, &mut out);
            }
        }
    }
    match obs {
        Observation::Net(n) => out.push(Req::Differs(end, n)),
        Observation::Capture(f) => {
            out.push(Req::CaptureDiffers(end, f));
            capture_reqs(g, end, f, &mut out);
        }
    }
    out
}

fn tern_holds(g: &CircuitGraph, tr: &DualTrace, r: Req) -> bool {
    match r {
        Req::Differs(t, n) => tr.differs(t, n),
        Req::CaptureDiffers(t, f) => tr.capture_differs(g, t, f),
        Req::GoodIs(t, n, v) => tr.good[t][n.index()] == Tern::from_bool(v),
        Req::GoodDiffer(t, a, b) => {
            let (x, y) = (tr.good[t][a.index()], tr.good[t][b.index()]);
            x != Tern::X && y != Tern::X && x != y
        }
    }
}

/// Whether `path` is strictly sensitized in the replay.
pub fn path_sensitized(
    g: &CircuitGraph,
    tr: &DualTrace,
    path: &PropagationPath,
    end: usize,
    obs: Observation,
) -> bool {
    path_reqs(g, path, end, obs)
        .into_iter()
        .all(|r| tern_holds(g, tr, r))
}

fn sig_of(search: &mut Search, r: Req) -> Sig {
    let m = &mut *search.model;
    match r {
        Req::Differs(t, n) => m.net_difference(t, n),
        Req::CaptureDiffers(t, f) => m.difference(t, Observation::Capture(f)),
        Req::GoodIs(t, n, v) => {
            let s = m.good(t, n);
            if v {
                s
            } else {
                !s
            }
        }
        Req::GoodDiffer(t, a, b) => {
            let (x, y) = (m.good(t, a), m.good(t, b));
            m.cnf.xor(x, y)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    frame: usize,
    net: NetId,
}

/// Data-pin successors of a net: cells (weight 1) and flip-flops (weight 0).
fn successors(g: &CircuitGraph, n: NetId) -> impl Iterator<Item = (PathElement, NetId)> + '_ {
    g.net(n).sinks.iter().filter_map(move |s| match *s {
        Sink::Cell { cell, .. } => Some((PathElement::Cell(cell), g.cell(cell).output)),
        Sink::FfData(f) => {
            let ff = g.ff(f);
            let holds =
                ff.kind == SeqKind::Dff && matches!(g.net(ff.clock).driver, Some(Driver::Const(_)));
            (!holds).then_some((PathElement::Ff(f), ff.q))
        }
        _ => None,
    })
}

fn is_goal(g: &CircuitGraph, n: NetId, obs: Observation) -> bool {
    match obs {
        Observation::Net(o) => o == n,
        Observation::Capture(f) => g.ff(f).d == n,
    }
}

/// Shortest difference-carrying path in a replay, by cell count. With
/// `strict`, every cell edge must have non-controlling side inputs.
pub fn witness_path(
    g: &CircuitGraph,
    tr: &DualTrace,
    cut: NetId,
    end: usize,
    obs: Observation,
    strict: bool,
) -> Option<PropagationPath> {
    let goal_ok = |node: Node| {
        if node.frame != end || !is_goal(g, node.net, obs) {
            return false;
        }
        match obs {
            Observation::Net(_) => tr.differs(end, node.net),
            Observation::Capture(f) => {
                let mut reqs = vec![Req::CaptureDiffers(end, f)];
                if strict {
                    capture_reqs(g, end, f, &mut reqs);
                }
                reqs.into_iter().all(|r| tern_holds(g, tr, r))
            }
        }
    };
    let mut dist: HashMap<Node, usize> = HashMap::new();
    let mut parent: HashMap<Node, (Node, PathElement)> = HashMap::new();
    let mut dq: VecDeque<(Node, usize)> = VecDeque::new();
    for s in 0..=end {
        let n = Node { frame: s, net: cut };
        dist.insert(n, 0);
        dq.push_back((n, 0));
    }
    while let Some((node, d)) = dq.pop_front() {
        if dist.get(&node) != Some(&d) {
            continue;
        }
        if goal_ok(node) {
            let mut steps = Vec::new();
            let mut cur = node;
            while let Some(&(p, el)) = parent.get(&cur) {
                steps.push(PathStep {
                    frame: p.frame,
                    element: el,
                    from: p.net,
                });
                cur = p;
            }
            steps.reverse();
            return Some(PropagationPath {
                steps,
                depth: d,
                strict,
            });
        }
        for (el, out) in successors(g, node.net) {
            let (next, w) = match el {
                PathElement::Cell(c) => {
                    if strict {
                        let mut reqs = Vec::new();
                        side_reqs(g, node.frame, c, node.net, &mut reqs);
                        if !reqs.into_iter().all(|r| tern_holds(g, tr, r)) {
                            continue;
                        }
                    }
                    (
                        Node {
                            frame: node.frame,
                            net: out,
                        },
                        1,
                    )
                }
                PathElement::Ff(f) => {
                    if node.frame + 1 > end || out == cut {
                        continue;
                    }
                    if strict {
                        let mut reqs = Vec::new();
                        capture_reqs(g, node.frame, f, &mut reqs);
                        if !reqs.into_iter().all(|r| tern_holds(g, tr, r)) {
                            continue;
                        }
                    }
                    (
                        Node {
                            frame: node.frame + 1,
                            net: out,
                        },
                        0,
                    )
                }
            };
            if next.net == cut || !tr.differs(next.frame, next.net) {
                continue;
            }
            let nd = d + w;
            if dist.get(&next).is_none_or(|&old| nd < old) {
                dist.insert(next, nd);
                parent.insert(next, (node, el));
                if w == 0 {
                    dq.push_front((next, nd));
                } else {
                    dq.push_back((next, nd));
                }
            }
        }
    }
    None
}

/// Greedily turns specified bits into don't-cares while `keep` still holds
/// on the ternary replay.
pub fn x_minimize(
    g: &CircuitGraph,
    fault: StuckAtFault,
    mut stim: Stimulus,
    keep: impl Fn(&DualTrace) -> bool,
) -> Stimulus {
    for b in stim.bits() {
        let Some(v) = stim.get(b) else { continue };
        stim.set(b, None);
        if !keep(&dual_simulation(g, fault, &stim)) {
            stim.set(b, Some(v));
        }
    }
    stim
}

/// Minimum cell count from each net to the observation along data pins.
fn distance_to_goal(g: &CircuitGraph, obs: Observation) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.nets.len()];
    let mut dq = VecDeque::new();
    let start = match obs {
        Observation::Net(n) => n,
        Observation::Capture(f) => g.ff(f).d,
    };
    dist[start.index()] = 0;
    dq.push_back(start);
    while let Some(n) = dq.pop_front() {
        let d = dist[n.index()];
        match g.net(n).driver {
            Some(Driver::Cell(c)) => {
                for &i in &g.cell(c).inputs {
                    if d + 1 < dist[i.index()] {
                        dist[i.index()] = d + 1;
                        dq.push_back(i);
                    }
                }
            }
            Some(Driver::Ff(f)) => {
                let i = g.ff(f).d;
                let holds = g.ff(f).kind == SeqKind::Dff
                    && matches!(g.net(g.ff(f).clock).driver, Some(Driver::Const(_)));
                if !holds && d < dist[i.index()] {
                    dist[i.index()] = d;
                    dq.push_front(i);
                }
            }
            _ => {}
        }
    }
    dist
}

const MAX_EXPANSIONS: usize = 200_000;

/// Enumerates structural paths from the cut net to the observation in the
/// time-expanded graph by increasing cell count (then end frame) and
/// returns the first one the solver can sensitize, with its model.
fn shallowest_sensitizable(
    search: &mut Search,
    cut: NetId,
    obs: Observation,
    frames: usize,
    limit: usize,
) -> Option<(PropagationPath, usize, Stimulus)> {
    let g = search.model.graph();
    let h = distance_to_goal(g, obs);
    if h[cut.index()] == usize::MAX {
        return None;
    }
    // Arena of partial paths: (parent, node, element that led here, depth).
    let mut arena: Vec<(usize, Node, Option<PathElement>, usize)> = Vec::new();
    let mut heap = BinaryHeap::new();
    for s in 0..frames {
        arena.push((usize::MAX, Node { frame: s, net: cut }, None, 0));
        heap.push(Reverse((h[cut.index()], s, arena.len() - 1)));
    }
    let mut tried = 0;
    let mut pops = 0;
    while let Some(Reverse((_, _, id))) = heap.pop() {
        pops += 1;
        if pops > MAX_EXPANSIONS || tried >= limit {
            return None;
        }
        let (_, node, _, depth) = arena[id];
        if is_goal(g, node.net, obs) {
            tried += 1;
            let mut steps = Vec::new();
            let mut cur = id;
            while arena[cur].0 != usize::MAX {
                let (p, _, el, _) = arena[cur];
                let pn = arena[p].1;
                steps.push(PathStep {
                    frame: pn.frame,
                    element: el.expect("non-root has element"),
                    from: pn.net,
                });
                cur = p;
            }
            steps.reverse();
            let path = PropagationPath {
                steps,
                depth,
                strict: true,
            };
            search.model.extend_to(node.frame + 1);
            let reqs = path_reqs(g, &path, node.frame, obs);
            let conds: Vec<Sig> = reqs.into_iter().map(|r| sig_of(search, r)).collect();
            if search.check(&conds) == SatResult::Sat {
                let stim = search.model.stimulus(node.frame + 1);
                return Some((path, node.frame, stim));
            }
        }
        for (el, out) in successors(g, node.net) {
            if out == cut || h[out.index()] == usize::MAX {
                continue;
            }
            let (next, w) = match el {
                PathElement::Cell(_) => (
                    Node {
                        frame: node.frame,
                        net: out,
                    },
                    1,
                ),
                PathElement::Ff(_) => {
                    if node.frame + 1 >= frames {
                        continue;
                    }
                    (
                        Node {
                            frame: node.frame + 1,
                            net: out,
                        },
                        0,
                    )
                }
            };
            arena.push((id, next, Some(el), depth + w));
            heap.push(Reverse((
                depth + w + h[out.index()],
                next.frame,
                arena.len() - 1,
            )));
        }
    }
    None
}

/// Turns a raw detection into a reported witness: shallowest sensitizable
/// path when one is found, the traced path of the raw witness otherwise;
/// the stimulus is reduced to the bits the path needs.
pub(super) fn refine_witness(
    search: &mut Search,
    fault: StuckAtFault,
    raw: Stimulus,
    frame: usize,
    observed: Observation,
    depth: usize,
    params: &AtpgParams,
) -> Witness {
    let g = search.model.graph();
    if let Some((path, end, stim)) =
        shallowest_sensitizable(search, fault.net, observed, depth, params.path_limit)
    {
        let stim = x_minimize(g, fault, stim, |tr| {
            path_sensitized(g, tr, &path, end, observed)
        });
        return Witness {
            stimulus: stim,
            frame: end,
            observed,
            path,
        };
    }
    let tr = dual_simulation(g, fault, &raw);
    let path = witness_path(g, &tr, fault.net, frame, observed, true)
        .or_else(|| witness_path(g, &tr, fault.net, frame, observed, false))
        .unwrap_or_default();
    let stim = if path.strict {
        x_minimize(g, fault, raw, |tr| {
            path_sensitized(g, tr, &path, frame, observed)
        })
    } else {
        x_minimize(g, fault, raw, |tr| tr.observed_differs(g, frame, observed))
    };
    Witness {
        stimulus: stim,
        frame,
        observed,
        path,
    }
}
