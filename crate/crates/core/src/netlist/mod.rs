//! Structural gate-level netlists.
//!
//! A [`CircuitGraph`] is built once by [`parse_netlist`] and never mutated
//! afterwards. Partial-scan experiments are expressed through the
//! [`ScanConfig`] overlay instead.

mod emit;
mod parse;
mod scan;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emit::{dump_json, emit};
pub use parse::parse_netlist;
pub use scan::{ScanConfig, ScanError};

/// Dense handle of a net.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NetId(pub u32);

/// Dense handle of a combinational cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u32);

/// Dense handle of a sequential element (flip-flop or latch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FfId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FfId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Line/column of an element in the netlist source (1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    And,
    Or,
    Nand,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    Mux2,
}

impl CellKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CellKind::And => "AND",
            CellKind::Or => "OR",
            CellKind::Nand => "NAND",
            CellKind::Nor => "NOR",
            CellKind::Xor => "XOR",
            CellKind::Xnor => "XNOR",
            CellKind::Not => "NOT",
            CellKind::Buf => "BUF",
            CellKind::Mux2 => "MUX2",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "AND" => CellKind::And,
            "OR" => CellKind::Or,
            "NAND" => CellKind::Nand,
            "NOR" => CellKind::Nor,
            "XOR" => CellKind::Xor,
            "XNOR" => CellKind::Xnor,
            "NOT" => CellKind::Not,
            "BUF" => CellKind::Buf,
            "MUX2" => CellKind::Mux2,
            _ => return None,
        })
    }

    /// Accepted input counts.
    pub fn arity(self) -> std::ops::RangeInclusive<usize> {
        match self {
            CellKind::Not | CellKind::Buf => 1..=1,
            CellKind::Mux2 => 3..=3,
            _ => 2..=4,
        }
    }

    /// Evaluates the cell on two-valued inputs. For `Mux2` the inputs are
    /// `[select, a, b]` and the output is `b` when `select` is high.
    pub fn eval(self, inputs: &[bool]) -> bool {
        match self {
            CellKind::And => inputs.iter().all(|&v| v),
            CellKind::Or => inputs.iter().any(|&v| v),
            CellKind::Nand => !inputs.iter().all(|&v| v),
            CellKind::Nor => !inputs.iter().any(|&v| v),
            CellKind::Xor => inputs.iter().fold(false, |acc, &v| acc ^ v),
            CellKind::Xnor => !inputs.iter().fold(false, |acc, &v| acc ^ v),
            CellKind::Not => !inputs[0],
            CellKind::Buf => inputs[0],
            CellKind::Mux2 => {
                if inputs[0] {
                    inputs[2]
                } else {
                    inputs[1]
                }
            }
        }
    }

    /// Bit-parallel evaluation over 64 patterns.
    pub fn eval_words(self, inputs: &[u64]) -> u64 {
        match self {
            CellKind::And => inputs.iter().fold(!0, |acc, &v| acc & v),
            CellKind::Or => inputs.iter().fold(0, |acc, &v| acc | v),
            CellKind::Nand => !inputs.iter().fold(!0, |acc, &v| acc & v),
            CellKind::Nor => !inputs.iter().fold(0, |acc, &v| acc | v),
            CellKind::Xor => inputs.iter().fold(0, |acc, &v| acc ^ v),
            CellKind::Xnor => !inputs.iter().fold(0, |acc, &v| acc ^ v),
            CellKind::Not => !inputs[0],
            CellKind::Buf => inputs[0],
            CellKind::Mux2 => (inputs[0] & inputs[2]) | (!inputs[0] & inputs[1]),
        }
    }

    pub(crate) fn pin_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Mux2 => &["S", "A", "B"],
            CellKind::Not | CellKind::Buf => &["A"],
            _ => &["A", "B", "C", "D"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Driver {
    Input,
    Const(bool),
    Cell(CellId),
    Ff(FfId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sink {
    Cell { cell: CellId, pin: u8 },
    FfData(FfId),
    FfClock(FfId),
    FfReset(FfId),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Net {
    pub id: NetId,
    pub name: String,
    pub driver: Option<Driver>,
    pub sinks: Vec<Sink>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub name: String,
    pub kind: CellKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    pub loc: Location,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqKind {
    Dff,
    Latch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetKind {
    Sync,
    Async,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reset {
    pub net: NetId,
    pub active_low: bool,
    pub kind: ResetKind,
    pub value: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlipFlop {
    pub id: FfId,
    pub name: String,
    pub kind: SeqKind,
    pub d: NetId,
    pub q: NetId,
    /// Clock for flip-flops, gate enable for latches.
    pub clock: NetId,
    pub reset: Option<Reset>,
    pub loc: Location,
}

impl FlipFlop {
    pub fn resettable(&self) -> bool {
        self.reset.is_some()
    }
}

/// Why a sequential element cannot be handled by the ATPG engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnanalyzableReason {
    Latch,
    ConstantClock,
    ConstantData,
    ResetHeldActive,
}

impl fmt::Display for UnanalyzableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnanalyzableReason::Latch => "latch",
            UnanalyzableReason::ConstantClock => "uncontrollable: constant clock",
            UnanalyzableReason::ConstantData => "uncontrollable: constant data",
            UnanalyzableReason::ResetHeldActive => "uncontrollable: reset held active",
        })
    }
}

/// Observe/control point: a primary I/O or a (pseudo-primary) flip-flop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Point {
    Input(NetId),
    Output(NetId),
    Ff(FfId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("{loc}: syntax error: {msg}")]
    Syntax { loc: Location, msg: String },
    #[error("{loc}: net `{net}` has multiple drivers")]
    MultiDriven { net: String, loc: Location },
    #[error("{loc}: net `{net}` is used but never driven")]
    Undriven { net: String, loc: Location },
    #[error("combinational cycle through net `{net}`")]
    CombinationalCycle { net: String },
    #[error("unknown net `{0}`")]
    UnknownNet(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
}

#[derive(Clone, Debug)]
pub struct CircuitGraph {
    pub name: String,
    pub nets: Vec<Net>,
    pub cells: Vec<Cell>,
    pub ffs: Vec<FlipFlop>,
    pub inputs: Vec<NetId>,
    pub outputs: Vec<NetId>,
    /// Sequential elements the ATPG engine cannot control or observe.
    pub unanalyzable: Vec<(FfId, UnanalyzableReason)>,
    net_index: HashMap<String, NetId>,
    ff_index: HashMap<String, FfId>,
    topo: Vec<CellId>,
    is_output: Vec<bool>,
}

impl CircuitGraph {
    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id.index()]
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id.index()]
    }

    pub fn ff(&self, id: FfId) -> &FlipFlop {
        &self.ffs[id.index()]
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn ff_by_name(&self, name: &str) -> Option<FfId> {
        self.ff_index.get(name).copied()
    }

    /// The sequential element whose output is `net`, if any.
    pub fn ff_driving(&self, net: NetId) -> Option<FfId> {
        match self.net(net).driver {
            Some(Driver::Ff(f)) => Some(f),
            _ => None,
        }
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.net(id).name
    }

    pub fn is_input(&self, net: NetId) -> bool {
        self.net(net).driver == Some(Driver::Input)
    }

    pub fn is_output(&self, net: NetId) -> bool {
        self.is_output[net.index()]
    }

    /// Cells in topological order of the combinational subgraph.
    pub fn topo_order(&self) -> &[CellId] {
        &self.topo
    }

    pub fn latches(&self) -> impl Iterator<Item = FfId> + '_ {
        self.ffs
            .iter()
            .filter(|f| f.kind == SeqKind::Latch)
            .map(|f| f.id)
    }

    pub fn is_unanalyzable(&self, ff: FfId) -> bool {
        self.unanalyzable.iter().any(|(f, _)| *f == ff)
    }

    /// Flip-flops the virtual scan overlay may include.
    pub fn scannable_ffs(&self) -> Vec<FfId> {
        self.ffs
            .iter()
            .filter(|f| !self.is_unanalyzable(f.id))
            .map(|f| f.id)
            .collect()
    }

    /// Nets used only as clock or reset pins; these are never treated as
    /// data inputs of a test sequence.
    pub fn is_clock_or_reset(&self, net: NetId) -> bool {
        let sinks = &self.net(net).sinks;
        !sinks.is_empty()
            && sinks
                .iter()
                .all(|s| matches!(s, Sink::FfClock(_) | Sink::FfReset(_)))
            && !self.is_output(net)
    }

    /// Primary inputs that carry data (clock and reset pins excluded).
    pub fn data_inputs(&self) -> Vec<NetId> {
        self.inputs
            .iter()
            .copied()
            .filter(|&n| !self.is_clock_or_reset(n))
            .collect()
    }

    pub fn point_name(&self, p: Point) -> String {
        match p {
            Point::Input(n) | Point::Output(n) => self.net_name(n).to_string(),
            Point::Ff(f) => self.ff(f).name.clone(),
        }
    }

    /// Resolves a user-facing name to a point. Flip-flop instance names and
    /// flip-flop output nets both resolve to the flip-flop.
    pub fn point_by_name(&self, name: &str) -> Option<Point> {
        if let Some(f) = self.ff_by_name(name) {
            return Some(Point::Ff(f));
        }
        let n = self.net_by_name(name)?;
        if self.is_output(n) {
            Some(Point::Output(n))
        } else if self.is_input(n) {
            Some(Point::Input(n))
        } else {
            self.ff_driving(n).map(Point::Ff)
        }
    }

    /// Unanalyzable elements with name and location.
    pub fn report_unanalyzable(&self) -> Vec<UnanalyzableElement> {
        self.unanalyzable
            .iter()
            .map(|&(f, reason)| {
                let ff = self.ff(f);
                UnanalyzableElement {
                    name: ff.name.clone(),
                    reason,
                    location: ff.loc,
                }
            })
            .collect()
    }

    pub(crate) fn from_parts(
        name: String,
        nets: Vec<Net>,
        cells: Vec<Cell>,
        ffs: Vec<FlipFlop>,
        inputs: Vec<NetId>,
        outputs: Vec<NetId>,
    ) -> Result<Self, NetlistError> {
        let net_index = nets.iter().map(|n| (n.name.clone(), n.id)).collect();
        let ff_index = ffs.iter().map(|f| (f.name.clone(), f.id)).collect();
        let mut is_output = vec![false; nets.len()];
        for o in &outputs {
            is_output[o.index()] = true;
        }
        let mut g = CircuitGraph {
            name,
            nets,
            cells,
            ffs,
            inputs,
            outputs,
            unanalyzable: Vec::new(),
            net_index,
            ff_index,
            topo: Vec::new(),
            is_output,
        };
        g.topo = g.compute_topo()?;
        g.unanalyzable = g.find_unanalyzable();
        Ok(g)
    }

    fn compute_topo(&self) -> Result<Vec<CellId>, NetlistError> {
        let mut indeg: Vec<usize> = self
            .cells
            .iter()
            .map(|c| {
                c.inputs
                    .iter()
                    .filter(|&&n| matches!(self.net(n).driver, Some(Driver::Cell(_))))
                    .count()
            })
            .collect();
        let mut ready: Vec<CellId> = self
            .cells
            .iter()
            .filter(|c| indeg[c.id.index()] == 0)
            .map(|c| c.id)
            .collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.cells.len());
        while let Some(c) = ready.pop() {
            order.push(c);
            for s in &self.net(self.cell(c).output).sinks {
                if let Sink::Cell { cell, .. } = *s {
                    indeg[cell.index()] -= 1;
                    if indeg[cell.index()] == 0 {
                        ready.push(cell);
                    }
                }
            }
        }
        if order.len() != self.cells.len() {
            let stuck = self
                .cells
                .iter()
                .find(|c| indeg[c.id.index()] > 0)
                .expect("cycle implies a blocked cell");
            return Err(NetlistError::CombinationalCycle {
                net: self.net_name(stuck.output).to_string(),
            });
        }
        Ok(order)
    }

    fn find_unanalyzable(&self) -> Vec<(FfId, UnanalyzableReason)> {
        let mut out = Vec::new();
        for ff in &self.ffs {
            let reason = if ff.kind == SeqKind::Latch {
                Some(UnanalyzableReason::Latch)
            } else if matches!(self.net(ff.clock).driver, Some(Driver::Const(_))) {
                Some(UnanalyzableReason::ConstantClock)
            } else if matches!(self.net(ff.d).driver, Some(Driver::Const(_))) {
                Some(UnanalyzableReason::ConstantData)
            } else if let Some(r) = ff.reset {
                match self.net(r.net).driver {
                    Some(Driver::Const(v)) if v != r.active_low => {
                        Some(UnanalyzableReason::ResetHeldActive)
                    }
                    _ => None,
                }
            } else {
                None
            };
            if let Some(r) = reason {
                out.push((ff.id, r));
            }
        }
        out
    }

    /// Counts used in summaries.
    pub fn stats(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("nets", self.nets.len()),
            ("cells", self.cells.len()),
            ("flipflops", self.ffs.len()),
            ("inputs", self.inputs.len()),
            ("outputs", self.outputs.len()),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnanalyzableElement {
    pub name: String,
    pub reason: UnanalyzableReason,
    pub location: Location,
}

/// Lists every latch and uncontrollable flip-flop with its source location.
pub fn report_unanalyzable(graph: &CircuitGraph) -> Vec<UnanalyzableElement> {
    graph.report_unanalyzable()
}
