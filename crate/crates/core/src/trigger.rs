//! Trigger condition recovery from witnesses and state transition graphs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atpg::{self, Observation, StimBit, Stimulus, StuckAtFault, Witness};
use crate::cone;
use crate::ifs::{AssetKind, FlowReport, IfsError};
use crate::netlist::{CircuitGraph, FfId, NetId, Point};
use crate::sat::{Cnf, SatResult, Sig};
use crate::sim::{self, Tern};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TriggerError {
    #[error("report has no malicious points")]
    NoMaliciousPoints,
    #[error("trigger state is unreachable from the initial state")]
    Unreachable,
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

pub const DEFAULT_STATE_BOUND: usize = 4096;

/// Splits `pt[3]` into (`pt`, 3) and `cnt3` into (`cnt`, 3).
pub fn bus_of(name: &str) -> (String, u32) {
    if let Some(s) = name.strip_suffix(']') {
        if let Some((base, idx)) = s.rsplit_once('[') {
            if let Ok(i) = idx.parse() {
                return (base.to_string(), i);
            }
        }
    }
    let digits = name.len() - name.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && digits < name.len() {
        let (base, idx) = name.split_at(name.len() - digits);
        if let Ok(i) = idx.parse() {
            return (base.to_string(), i);
        }
    }
    (name.to_string(), 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Input,
    Register,
}

/// Condition bits sharing a bus name. Input conditions carry the cycle
/// relative to the observation (0 = observation cycle); register
/// conditions refer to the state the witness starts from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionGroup {
    pub bus: String,
    pub kind: ElementKind,
    pub cycle: Option<i64>,
    pub bits: BTreeMap<u32, bool>,
    /// Bus value when every bit from 0 to the highest index is constrained.
    pub value: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectTrigger {
    pub always_on: bool,
    pub groups: Vec<ConditionGroup>,
    /// Register bits among the conditions, by flip-flop name.
    pub registers: BTreeMap<String, bool>,
    /// Points whose witnesses were used.
    pub sources: Vec<String>,
}

impl DirectTrigger {
    pub fn group(&self, bus: &str) -> Option<&ConditionGroup> {
        self.groups.iter().find(|g| g.bus == bus)
    }
}

fn bus_value(bits: &BTreeMap<u32, bool>) -> Option<u64> {
    let top = *bits.keys().next_back()?;
    if top >= 64 || bits.len() != top as usize + 1 {
        return None;
    }
    Some(bits.iter().map(|(&i, &v)| (v as u64) << i).sum())
}

/// Stimulus bits whose single flip breaks the witness: the path loses
/// sensitization (or, for a relaxed path, the observation stops differing).
pub fn condition_bits(g: &CircuitGraph, cut: NetId, w: &Witness) -> Vec<(StimBit, bool)> {
    let fault = StuckAtFault {
        net: cut,
        value: false,
    };
    let holds = |s: &Stimulus, strict: bool| {
        let tr = atpg::dual_simulation(g, fault, s);
        if strict {
            atpg::path_sensitized(g, &tr, &w.path, w.frame, w.observed)
        } else {
            tr.observed_differs(g, w.frame, w.observed)
        }
    };
    let strict = w.path.strict && holds(&w.stimulus, true);
    let mut out = Vec::new();
    for b in w.stimulus.bits() {
        let Some(v) = w.stimulus.get(b) else { continue };
        let mut s = w.stimulus.clone();
        s.set(b, Some(!v));
        if !holds(&s, strict) {
            out.push((b, v));
        }
    }
    out
}

/// Constant conditions shared by the witnesses of the first level holding
/// malicious points. For integrity reports with declared valid points,
/// bits on the valid points and their fan-out registers are left out.
pub fn extract_direct_trigger(
    g: &CircuitGraph,
    report: &FlowReport,
) -> Result<DirectTrigger, TriggerError> {
    let malicious = report.malicious_names();
    let level = report
        .levels
        .iter()
        .find(|l| l.points.iter().any(|p| malicious.contains(&p.name)))
        .ok_or(TriggerError::NoMaliciousPoints)?;
    let mut excluded: BTreeSet<Point> = BTreeSet::new();
    let mut excluded_ffs: BTreeSet<FfId> = BTreeSet::new();
    if let (AssetKind::Integrity, Some(valid)) = (report.asset.kind, &report.valid_points) {
        excluded = crate::ifs::resolve_points(g, valid)?;
        excluded_ffs = cone::transitive_fanout_elements(g, &excluded).map_err(IfsError::from)?;
    }
    let is_excluded_ff = |f: FfId| excluded_ffs.contains(&f) || excluded.contains(&Point::Ff(f));
    let mut inputs: BTreeMap<(String, i64), bool> = BTreeMap::new();
    let mut regs: BTreeMap<String, bool> = BTreeMap::new();
    let mut sources = Vec::new();
    for p in level.points.iter().filter(|p| malicious.contains(&p.name)) {
        let (cut, w) = report.witness(g, p)?;
        sources.push(p.name.clone());
        for (b, v) in condition_bits(g, cut, &w) {
            match b {
                StimBit::Load(i) | StimBit::PowerUp(i) => {
                    let f = if matches!(b, StimBit::Load(_)) {
                        w.stimulus.scan_load[i].0
                    } else {
                        w.stimulus.power_up[i].0
                    };
                    if !is_excluded_ff(f) {
                        regs.entry(g.ff(f).name.clone()).or_insert(v);
                    }
                }
                StimBit::Input(t, k) => {
                    let n = w.stimulus.inputs[k];
                    if !excluded.contains(&Point::Input(n)) {
                        let cycle = t as i64 - w.frame as i64;
                        inputs
                            .entry((g.net_name(n).to_string(), cycle))
                            .or_insert(v);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<(ElementKind, String, Option<i64>), BTreeMap<u32, bool>> =
        BTreeMap::new();
    for ((name, cycle), v) in &inputs {
        let (bus, i) = bus_of(name);
        groups
            .entry((ElementKind::Input, bus, Some(*cycle)))
            .or_default()
            .insert(i, *v);
    }
    for (name, v) in &regs {
        let (bus, i) = bus_of(name);
        groups
            .entry((ElementKind::Register, bus, None))
            .or_default()
            .insert(i, *v);
    }
    let groups: Vec<ConditionGroup> = groups
        .into_iter()
        .map(|((kind, bus, cycle), bits)| ConditionGroup {
            value: bus_value(&bits),
            bus,
            kind,
            cycle,
            bits,
        })
        .collect();
    Ok(DirectTrigger {
        always_on: groups.is_empty(),
        groups,
        registers: regs,
        sources,
    })
}

/// The condition registers that hold sequential state, closed under
/// register fan-in among state registers.
pub fn trigger_state_registers(g: &CircuitGraph, condition: &[FfId]) -> Vec<FfId> {
    let state = cone::identify_state_registers(g);
    let mut out: BTreeSet<FfId> = condition
        .iter()
        .copied()
        .filter(|f| state.contains(f))
        .collect();
    let mut work: Vec<FfId> = out.iter().copied().collect();
    while let Some(f) = work.pop() {
        for src in cone::register_fanin(g, f) {
            if state.contains(&src) && out.insert(src) {
                work.push(src);
            }
        }
    }
    out.into_iter().collect()
}

/// Recovered trigger FSM. State bits are `0`, `1` or `x` per register.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stg {
    pub registers: Vec<String>,
    /// Register groups collapsed as counters (indices into `registers`,
    /// least significant first).
    pub counters: Vec<Vec<usize>>,
    pub states: Vec<String>,
    pub transitions: Vec<StgEdge>,
    pub trigger: usize,
    pub initial: String,
    /// Width of each input bus, for labels.
    pub input_widths: BTreeMap<String, u32>,
    /// The state bound was hit; the graph is incomplete.
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StgEdge {
    pub from: usize,
    pub to: usize,
    pub inputs: BTreeMap<String, bool>,
    /// Cycles of unconditional counting, for a collapsed counter chain.
    pub wait: Option<u64>,
}

fn tern_char(t: Tern) -> char {
    match t {
        Tern::Zero => '0',
        Tern::One => '1',
        Tern::X => 'x',
    }
}

fn inputs_label(inputs: &BTreeMap<String, bool>, widths: &BTreeMap<String, u32>) -> String {
    if inputs.is_empty() {
        return "*".into();
    }
    let mut buses: BTreeMap<String, BTreeMap<u32, bool>> = BTreeMap::new();
    for (n, &v) in inputs {
        let (b, i) = bus_of(n);
        buses.entry(b).or_default().insert(i, v);
    }
    let parts: Vec<String> = buses
        .into_iter()
        .map(|(b, bits)| {
            let width = widths.get(&b).copied().unwrap_or(1);
            match bus_value(&bits) {
                Some(v) if width > 1 && bits.len() == width as usize => format!("{b}=0x{v:x}"),
                _ if width > 1 => {
                    let pat: String = (0..width)
                        .rev()
                        .map(|i| bits.get(&i).map_or('x', |&v| if v { '1' } else { '0' }))
                        .collect();
                    format!("{b}={pat}")
                }
                _ => format!("{b}={}", bits.values().next().map_or(0, |&v| v as u8)),
            }
        })
        .collect();
    parts.join(",")
}

impl Stg {
    fn bit(&self, s: usize, i: usize) -> char {
        self.states[s].as_bytes()[i] as char
    }

    /// State label with register buses printed most significant bit first
    /// and counters as values.
    pub fn state_label(&self, s: usize, with_counters: bool) -> String {
        let in_counter: BTreeSet<usize> = self.counters.iter().flatten().copied().collect();
        let mut buses: BTreeMap<String, Vec<(u32, usize)>> = BTreeMap::new();
        for (i, r) in self.registers.iter().enumerate() {
            if !in_counter.contains(&i) {
                let (b, k) = bus_of(r);
                buses.entry(b).or_default().push((k, i));
            }
        }
        let mut parts: Vec<String> = buses
            .into_iter()
            .map(|(b, mut bits)| {
                bits.sort();
                let s: String = bits.iter().rev().map(|&(_, i)| self.bit(s, i)).collect();
                format!("{b}={s}")
            })
            .collect();
        if with_counters {
            for grp in &self.counters {
                let (b, _) = bus_of(&self.registers[grp[0]]);
                let chars: Vec<char> = grp.iter().map(|&i| self.bit(s, i)).collect();
                let v = if chars.iter().all(|&c| c == 'x') {
                    "*".to_string()
                } else if chars.iter().all(|&c| c != 'x') {
                    chars
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| ((c == '1') as u64) << k)
                        .sum::<u64>()
                        .to_string()
                } else {
                    chars.iter().rev().collect()
                };
                parts.push(format!("{b}={v}"));
            }
        }
        parts.join(" ")
    }

    fn edge_line(&self, e: &StgEdge, with_counters: bool) -> String {
        let label = match e.wait {
            Some(n) if with_counters => format!("wait={n}"),
            Some(_) => "wait".to_string(),
            None => format!("inputs={}", inputs_label(&e.inputs, &self.input_widths)),
        };
        format!(
            "{} -> {} [{label}]",
            self.state_label(e.from, with_counters),
            self.state_label(e.to, with_counters)
        )
    }

    /// One line per transition: `from -> to [inputs=...]`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.transitions {
            s.push_str(&self.edge_line(e, true));
            s.push('\n');
        }
        s
    }

    /// Transitions with counter values and wait lengths abstracted away.
    pub fn control_edges(&self) -> BTreeSet<String> {
        self.transitions
            .iter()
            .map(|e| self.edge_line(e, false))
            .collect()
    }

    fn contains(&self, s: usize, point: &str) -> bool {
        self.states[s]
            .bytes()
            .zip(point.bytes())
            .all(|(c, p)| c == b'x' || c == p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum SplitVar {
    Reg(usize),
    Input(NetId),
}

type Cube = Vec<Tern>;
type InputCube = BTreeMap<String, bool>;
/// (from, to, inputs, wait)
type EdgeKey = (usize, usize, InputCube, Option<u64>);

struct Recovery<'g> {
    g: &'g CircuitGraph,
    regs: Vec<FfId>,
    reg_of: HashMap<FfId, usize>,
    counter_bits: BTreeSet<usize>,
    held: Vec<Option<bool>>,
}

impl Recovery<'_> {
    fn simulate(&self, cube: &[Tern], inputs: &BTreeMap<NetId, bool>) -> Vec<Tern> {
        let g = self.g;
        let mut vals = vec![Tern::X; g.nets.len()];
        for &pi in &g.inputs {
            vals[pi.index()] = match self.held[pi.index()] {
                Some(v) => Tern::from_bool(v),
                None => inputs.get(&pi).map_or(Tern::X, |&v| Tern::from_bool(v)),
            };
        }
        for (i, &f) in self.regs.iter().enumerate() {
            vals[g.ff(f).q.index()] = cube[i];
        }
        sim::eval_comb_ternary(g, &mut vals);
        vals
    }

    /// Split candidates reachable backward from the undetermined next-state
    /// functions through X-valued nets.
    fn x_sources(&self, vals: &[Tern], open: &[usize]) -> BTreeSet<SplitVar> {
        let g = self.g;
        let mut seen = vec![false; g.nets.len()];
        let mut work: Vec<NetId> = open
            .iter()
            .flat_map(|&i| atpg_inputs(g, self.regs[i]))
            .collect();
        let mut out = BTreeSet::new();
        while let Some(n) = work.pop() {
            if vals[n.index()] != Tern::X || std::mem::replace(&mut seen[n.index()], true) {
                continue;
            }
            match g.net(n).driver {
                Some(crate::netlist::Driver::Input) => {
                    out.insert(SplitVar::Input(n));
                }
                Some(crate::netlist::Driver::Ff(f)) => {
                    if let Some(&i) = self.reg_of.get(&f) {
                        out.insert(SplitVar::Reg(i));
                    }
                }
                Some(crate::netlist::Driver::Cell(c)) => {
                    work.extend(g.cell(c).inputs.iter().copied())
                }
                _ => {}
            }
        }
        out
    }

    fn pick(&self, cands: &BTreeSet<SplitVar>) -> Option<SplitVar> {
        let rank = |v: &SplitVar| match *v {
            SplitVar::Reg(i) if !self.counter_bits.contains(&i) => (0, i, 0),
            SplitVar::Input(n) => (
                1,
                self.g.inputs.iter().position(|&x| x == n).unwrap_or(0),
                0,
            ),
            SplitVar::Reg(i) => (2, i, 0),
        };
        cands.iter().min_by_key(|v| rank(v)).copied()
    }

    /// Exists a value of the registers outside the tracked set making the
    /// step land in `target`.
    fn exists_step(&self, cube: &[Tern], inputs: &BTreeMap<NetId, bool>, target: &[Tern]) -> bool {
        let g = self.g;
        let mut cnf = Cnf::new();
        let mut vals = vec![Sig::Const(false); g.nets.len()];
        for &pi in &g.inputs {
            vals[pi.index()] = match (self.held[pi.index()], inputs.get(&pi)) {
                (Some(v), _) | (None, Some(&v)) => Sig::Const(v),
                _ => cnf.fresh(),
            };
        }
        for ff in &g.ffs {
            vals[ff.q.index()] = match self.reg_of.get(&ff.id).and_then(|&i| cube[i].known()) {
                Some(v) => Sig::Const(v),
                None => cnf.fresh(),
            };
        }
        build_comb(g, &mut cnf, &mut vals);
        for (i, t) in target.iter().enumerate() {
            if let Some(v) = t.known() {
                let nx = next_sig(g, &mut cnf, self.regs[i], &vals);
                cnf.clause(&[if v { nx } else { !nx }]);
            }
        }
        cnf.solver.solve(None) == SatResult::Sat
    }

    /// All (present-state cube, input cube) pairs stepping into `target`.
    fn predecessors(&self, target: &[Tern]) -> Vec<(Cube, BTreeMap<NetId, bool>)> {
        let mut out = Vec::new();
        let mut cube = vec![Tern::X; self.regs.len()];
        let mut inputs = BTreeMap::new();
        self.split(target, &mut cube, &mut inputs, &mut out);
        out
    }

    fn split(
        &self,
        target: &[Tern],
        cube: &mut Cube,
        inputs: &mut BTreeMap<NetId, bool>,
        out: &mut Vec<(Cube, BTreeMap<NetId, bool>)>,
    ) {
        let vals = self.simulate(cube, inputs);
        let mut open = Vec::new();
        for (i, t) in target.iter().enumerate() {
            let Some(want) = t.known() else { continue };
            match sim::next_state(self.g, self.regs[i], &vals).known() {
                Some(v) if v != want => return,
                Some(_) => {}
                None => open.push(i),
            }
        }
        if open.is_empty() {
            out.push((cube.clone(), inputs.clone()));
            return;
        }
        match self.pick(&self.x_sources(&vals, &open)) {
            None => {
                if self.exists_step(cube, inputs, target) {
                    out.push((cube.clone(), inputs.clone()));
                }
            }
            Some(SplitVar::Reg(i)) => {
                for v in [false, true] {
                    cube[i] = Tern::from_bool(v);
                    self.split(target, cube, inputs, out);
                }
                cube[i] = Tern::X;
            }
            Some(SplitVar::Input(n)) => {
                for v in [false, true] {
                    inputs.insert(n, v);
                    self.split(target, cube, inputs, out);
                }
                inputs.remove(&n);
            }
        }
    }

    /// One-frame model with every register and input free.
    fn free_frame(&self, cnf: &mut Cnf) -> Vec<Sig> {
        let g = self.g;
        let mut vals = vec![Sig::Const(false); g.nets.len()];
        for &pi in &g.inputs {
            vals[pi.index()] = match self.held[pi.index()] {
                Some(v) => Sig::Const(v),
                None => cnf.fresh(),
            };
        }
        for ff in &g.ffs {
            vals[ff.q.index()] = cnf.fresh();
        }
        build_comb(g, cnf, &mut vals);
        vals
    }

    /// Whether a register group steps only to `G + 1`, `G` or 0, with no
    /// free input in its next-state logic.
    fn is_counter(&self, group: &[usize]) -> bool {
        for &i in group {
            let d = self.g.ff(self.regs[i]).d;
            let cone = cone::fanin_startpoints(self.g, d).expect("valid net");
            if cone
                .endpoints
                .iter()
                .any(|p| matches!(p, Point::Input(n) if self.held[n.index()].is_none()))
            {
                return false;
            }
        }
        let mut cnf = Cnf::new();
        let vals = self.free_frame(&mut cnf);
        let cur: Vec<Sig> = group
            .iter()
            .map(|&i| vals[self.g.ff(self.regs[i]).q.index()])
            .collect();
        let nxt: Vec<Sig> = group
            .iter()
            .map(|&i| next_sig(self.g, &mut cnf, self.regs[i], &vals))
            .collect();
        let inc = increment(&mut cnf, &cur);
        let e_inc = equal(&mut cnf, &nxt, &inc);
        let e_hold = equal(&mut cnf, &nxt, &cur);
        let zeros = vec![Sig::Const(false); group.len()];
        let e_zero = equal(&mut cnf, &nxt, &zeros);
        cnf.clause(&[!e_inc]);
        cnf.clause(&[!e_hold]);
        cnf.clause(&[!e_zero]);
        cnf.solver.solve(None) == SatResult::Unsat
    }

    /// Whether, with the other registers fixed to `control`, the group
    /// increments every cycle and the control part stays put until the
    /// group reaches `stop`.
    fn counts_freely(&self, control: &[Tern], group: &[usize], stop: u64) -> bool {
        let g = self.g;
        let mut cnf = Cnf::new();
        let vals = self.free_frame(&mut cnf);
        let q = |i: usize| vals[g.ff(self.regs[i]).q.index()];
        let mut stay = Vec::new();
        for (i, t) in control.iter().enumerate() {
            if group.contains(&i) {
                continue;
            }
            if let Some(v) = t.known() {
                cnf.clause(&[if v { q(i) } else { !q(i) }]);
                let nx = next_sig(g, &mut cnf, self.regs[i], &vals);
                stay.push(if v { nx } else { !nx });
            }
        }
        let cur: Vec<Sig> = group.iter().map(|&i| q(i)).collect();
        let stop_bits: Vec<Sig> = (0..group.len())
            .map(|k| Sig::Const(stop >> k & 1 == 1))
            .collect();
        let at_stop = equal(&mut cnf, &cur, &stop_bits);
        cnf.clause(&[!at_stop]);
        let nxt: Vec<Sig> = group
            .iter()
            .map(|&i| next_sig(g, &mut cnf, self.regs[i], &vals))
            .collect();
        let inc = increment(&mut cnf, &cur);
        stay.push(equal(&mut cnf, &nxt, &inc));
        let good = cnf.and(&stay);
        cnf.clause(&[!good]);
        cnf.solver.solve(None) == SatResult::Unsat
    }

    /// Counter value after one step from `cube` under `inputs`, if fixed.
    fn counter_after(
        &self,
        cube: &[Tern],
        inputs: &BTreeMap<NetId, bool>,
        group: &[usize],
    ) -> Option<u64> {
        let vals = self.simulate(cube, inputs);
        let mut v = 0;
        for (k, &i) in group.iter().enumerate() {
            v |= (sim::next_state(self.g, self.regs[i], &vals).known()? as u64) << k;
        }
        Some(v)
    }
}

fn atpg_inputs(g: &CircuitGraph, f: FfId) -> Vec<NetId> {
    let ff = g.ff(f);
    let mut v = vec![ff.d, ff.q, ff.clock];
    if let Some(r) = ff.reset {
        v.push(r.net);
    }
    v
}

fn build_comb(g: &CircuitGraph, cnf: &mut Cnf, vals: &mut [Sig]) {
    for n in &g.nets {
        if let Some(crate::netlist::Driver::Const(v)) = n.driver {
            vals[n.id.index()] = Sig::Const(v);
        }
    }
    for &c in g.topo_order() {
        let cell = g.cell(c);
        let ins: Vec<Sig> = cell.inputs.iter().map(|i| vals[i.index()]).collect();
        vals[cell.output.index()] = cnf.gate(cell.kind, &ins);
    }
}

fn next_sig(g: &CircuitGraph, cnf: &mut Cnf, f: FfId, vals: &[Sig]) -> Sig {
    let ff = g.ff(f);
    let (q, d) = (vals[ff.q.index()], vals[ff.d.index()]);
    match ff.kind {
        crate::netlist::SeqKind::Latch => cnf.mux(vals[ff.clock.index()], q, d),
        crate::netlist::SeqKind::Dff => {
            if matches!(
                g.net(ff.clock).driver,
                Some(crate::netlist::Driver::Const(_))
            ) {
                return q;
            }
            match ff.reset {
                Some(r) => {
                    let rv = vals[r.net.index()];
                    let active = if r.active_low { !rv } else { rv };
                    cnf.mux(active, d, Sig::Const(r.value))
                }
                None => d,
            }
        }
    }
}

fn increment(cnf: &mut Cnf, bits: &[Sig]) -> Vec<Sig> {
    let mut carry = Sig::Const(true);
    bits.iter()
        .map(|&b| {
            let s = cnf.xor(b, carry);
            carry = cnf.and(&[b, carry]);
            s
        })
        .collect()
}

fn equal(cnf: &mut Cnf, a: &[Sig], b: &[Sig]) -> Sig {
    let eqs: Vec<Sig> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = cnf.xor(x, y);
            !d
        })
        .collect();
    cnf.and(&eqs)
}

/// Counter groups among `regs`: chains whose bit `i` depends on bits
/// `0..=i` of the chain, confirmed by a SAT check that the group only
/// increments, holds or clears.
fn counter_groups(rec: &Recovery) -> Vec<Vec<usize>> {
    let g = rec.g;
    let support: Vec<BTreeSet<usize>> = rec
        .regs
        .iter()
        .map(|&f| {
            cone::register_fanin(g, f)
                .into_iter()
                .filter_map(|s| rec.reg_of.get(&s).copied())
                .collect()
        })
        .collect();
    let mut pool: BTreeSet<usize> = (0..rec.regs.len()).collect();
    let mut groups = Vec::new();
    loop {
        let start = pool
            .iter()
            .copied()
            .filter(|&i| support[i].contains(&i))
            .min_by_key(|&i| (support[i].len(), i));
        let Some(start) = start else { break };
        let mut chain = vec![start];
        loop {
            let have: BTreeSet<usize> = chain.iter().copied().collect();
            let next = pool
                .iter()
                .copied()
                .filter(|i| {
                    !have.contains(i) && support[*i].contains(i) && support[*i].is_superset(&have)
                })
                .min_by_key(|&i| (support[i].len(), i));
            match next {
                Some(n) => chain.push(n),
                None => break,
            }
        }
        let mut found = None;
        for k in (2..=chain.len().min(16)).rev() {
            if rec.is_counter(&chain[..k]) {
                found = Some(chain[..k].to_vec());
                break;
            }
        }
        match found {
            Some(grp) => {
                for i in &grp {
                    pool.remove(i);
                }
                groups.push(grp);
            }
            None => {
                pool.remove(&start);
            }
        }
    }
    groups
}

/// Backward recovery of the transitions leading into the trigger
/// condition `trig` over `state_regs`. Control registers are enumerated
/// explicitly; counter groups whose chain counts freely are summarised as a
/// single wait edge. Registers outside `state_regs` and unconstrained
/// inputs are existentially quantified.
pub fn extract_stg(
    g: &CircuitGraph,
    state_regs: &[FfId],
    trig: &[(FfId, bool)],
    bound: usize,
) -> Result<Stg, TriggerError> {
    let mut regs: Vec<FfId> = state_regs.to_vec();
    for &(f, _) in trig {
        if f.index() >= g.ffs.len() {
            return Err(TriggerError::UnknownRegister(format!("ff#{}", f.0)));
        }
        if !regs.contains(&f) {
            regs.push(f);
        }
    }
    regs.sort();
    regs.dedup();
    let reg_of: HashMap<FfId, usize> = regs.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let held = sim::held_inputs(g);
    let mut rec = Recovery {
        g,
        regs: regs.clone(),
        reg_of,
        counter_bits: BTreeSet::new(),
        held,
    };
    let counters = counter_groups(&rec);
    rec.counter_bits = counters.iter().flatten().copied().collect();
    let initial: Cube = regs
        .iter()
        .map(|&f| Tern::from_bool(sim::initial_value(g, f, false)))
        .collect();

    let mut target: Cube = vec![Tern::X; regs.len()];
    for &(f, v) in trig {
        target[rec.reg_of[&f]] = Tern::from_bool(v);
    }
    let mut states: Vec<Cube> = vec![target.clone()];
    let mut index: HashMap<Cube, usize> = HashMap::from([(target, 0)]);
    let mut edges: BTreeSet<EdgeKey> = BTreeSet::new();
    let mut queue = VecDeque::from([0usize]);
    let mut partial = false;
    let name_inputs = |m: &BTreeMap<NetId, bool>| -> BTreeMap<String, bool> {
        m.iter()
            .map(|(&n, &v)| (g.net_name(n).to_string(), v))
            .collect()
    };

    while let Some(ti) = queue.pop_front() {
        let t = states[ti].clone();
        let mut intern =
            |c: Cube, states: &mut Vec<Cube>, queue: &mut VecDeque<usize>, partial: &mut bool| {
                if let Some(&i) = index.get(&c) {
                    return Some(i);
                }
                if states.len() >= bound {
                    *partial = true;
                    return None;
                }
                let i = states.len();
                index.insert(c.clone(), i);
                states.push(c);
                queue.push_back(i);
                Some(i)
            };
        let full = counters
            .iter()
            .find(|grp| grp.iter().all(|&i| t[i] != Tern::X));
        if let Some(grp) = full {
            let stop: u64 = grp
                .iter()
                .enumerate()
                .map(|(k, &i)| (t[i] == Tern::One) as u64 * (1 << k))
                .sum();
            if rec.counts_freely(&t, grp, stop) {
                let mut open = t.clone();
                for &i in grp {
                    open[i] = Tern::X;
                }
                let same_control = |c: &[Tern]| {
                    c.iter()
                        .zip(&t)
                        .enumerate()
                        .all(|(i, (a, b))| grp.contains(&i) || a == b)
                };
                let modulus = 1u64 << grp.len();
                let mut entries: Vec<(Option<(usize, InputCube)>, u64)> = Vec::new();
                for (pred, ins) in explicit(&rec, rec.predecessors(&open)) {
                    if same_control(&pred) {
                        continue;
                    }
                    let Some(e) = rec.counter_after(&pred, &ins, grp) else {
                        continue;
                    };
                    let Some(pi) = intern(pred, &mut states, &mut queue, &mut partial) else {
                        continue;
                    };
                    entries.push((Some((pi, name_inputs(&ins))), e));
                }
                if same_control(&initial) {
                    let e: u64 = grp
                        .iter()
                        .enumerate()
                        .map(|(k, &i)| (initial[i] == Tern::One) as u64 * (1 << k))
                        .sum();
                    entries.push((None, e));
                }
                for (from, e) in entries {
                    let entry_state = if e == stop {
                        ti
                    } else {
                        let mut c = t.clone();
                        for (k, &i) in grp.iter().enumerate() {
                            c[i] = Tern::from_bool(e >> k & 1 == 1);
                        }
                        let Some(ci) = index.get(&c).copied().or_else(|| {
                            if states.len() >= bound {
                                partial = true;
                                return None;
                            }
                            let i = states.len();
                            index.insert(c.clone(), i);
                            states.push(c);
                            Some(i)
                        }) else {
                            continue;
                        };
                        edges.insert((
                            ci,
                            ti,
                            BTreeMap::new(),
                            Some((stop + modulus - e) % modulus),
                        ));
                        ci
                    };
                    if let Some((pi, ins)) = from {
                        edges.insert((pi, entry_state, ins, None));
                    }
                }
                continue;
            }
        }
        for (pred, ins) in explicit(&rec, rec.predecessors(&t)) {
            if let Some(pi) = intern(pred, &mut states, &mut queue, &mut partial) {
                edges.insert((pi, ti, name_inputs(&ins), None));
            }
        }
    }

    // Order states by bit pattern for a deterministic result.
    let label = |c: &Cube| -> String { c.iter().map(|&t| tern_char(t)).collect() };
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by_key(|&i| label(&states[i]));
    let mut remap = vec![0; states.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let transitions = edges
        .into_iter()
        .map(|(f, t, inputs, wait)| StgEdge {
            from: remap[f],
            to: remap[t],
            inputs,
            wait,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(Stg {
        registers: regs.iter().map(|&f| g.ff(f).name.clone()).collect(),
        counters,
        states: order.iter().map(|&i| label(&states[i])).collect(),
        transitions,
        trigger: remap[0],
        initial: label(&initial),
        input_widths: input_widths(g),
        partial,
    })
}

fn input_widths(g: &CircuitGraph) -> BTreeMap<String, u32> {
    let mut out: BTreeMap<String, u32> = BTreeMap::new();
    for &n in &g.inputs {
        let (b, i) = bus_of(g.net_name(n));
        let w = out.entry(b).or_default();
        *w = (*w).max(i + 1);
    }
    out
}

/// Expands unconstrained control registers of predecessor cubes into
/// explicit codes; counter bits stay symbolic.
fn explicit(
    rec: &Recovery,
    preds: Vec<(Cube, BTreeMap<NetId, bool>)>,
) -> Vec<(Cube, BTreeMap<NetId, bool>)> {
    let mut out = Vec::new();
    for (cube, ins) in preds {
        let open: Vec<usize> = (0..cube.len())
            .filter(|&i| cube[i] == Tern::X && !rec.counter_bits.contains(&i))
            .collect();
        if open.len() > 12 {
            out.push((cube, ins));
            continue;
        }
        for code in 0u64..(1 << open.len()) {
            let mut c = cube.clone();
            for (k, &i) in open.iter().enumerate() {
                c[i] = Tern::from_bool(code >> k & 1 == 1);
            }
            out.push((c, ins.clone()));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceStep {
    /// Constrained inputs; empty means any input.
    pub inputs: BTreeMap<String, bool>,
    pub repeat: u64,
}

impl SequenceStep {
    /// Value of a fully constrained input bus.
    pub fn bus_value(&self, bus: &str) -> Option<u64> {
        let bits: BTreeMap<u32, bool> = self
            .inputs
            .iter()
            .filter_map(|(n, &v)| {
                let (b, i) = bus_of(n);
                (b == bus).then_some((i, v))
            })
            .collect();
        bus_value(&bits)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerSequence {
    pub steps: Vec<SequenceStep>,
}

impl TriggerSequence {
    pub fn cycles(&self) -> u64 {
        self.steps.iter().map(|s| s.repeat).sum()
    }
}

/// Shortest input sequence from the initial state (reset values, zero for
/// registers without reset) into the trigger state.
pub fn extract_trigger_sequence(stg: &Stg) -> Result<TriggerSequence, TriggerError> {
    let n = stg.states.len();
    let mut dist = vec![u64::MAX; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    for (s, d) in dist.iter_mut().enumerate() {
        if stg.contains(s, &stg.initial) {
            *d = 0;
            heap.push(Reverse((0u64, s)));
        }
    }
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in stg.transitions.iter().enumerate() {
        out_edges[e.from].push(k);
    }
    while let Some(Reverse((d, s))) = heap.pop() {
        if d > dist[s] {
            continue;
        }
        for &k in &out_edges[s] {
            let e = &stg.transitions[k];
            let nd = d + e.wait.unwrap_or(1);
            if nd < dist[e.to] {
                dist[e.to] = nd;
                prev[e.to] = Some(k);
                heap.push(Reverse((nd, e.to)));
            }
        }
    }
    if dist[stg.trigger] == u64::MAX {
        return Err(TriggerError::Unreachable);
    }
    let mut path = Vec::new();
    let mut s = stg.trigger;
    while dist[s] > 0 {
        let k = prev[s].expect("reached state has a predecessor edge");
        path.push(k);
        s = stg.transitions[k].from;
    }
    path.reverse();
    let mut steps: Vec<SequenceStep> = Vec::new();
    for k in path {
        let e = &stg.transitions[k];
        let step = SequenceStep {
            inputs: e.inputs.clone(),
            repeat: e.wait.unwrap_or(1),
        };
        match steps.last_mut() {
            Some(last) if last.inputs.is_empty() && step.inputs.is_empty() => {
                last.repeat += step.repeat
            }
            _ => steps.push(step),
        }
    }
    Ok(TriggerSequence { steps })
}

/// Trigger section of a report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerReport {
    /// `always-on`, `condition` or `sequence`.
    pub kind: String,
    pub conditions: Vec<ConditionGroup>,
    pub sources: Vec<String>,
    #[serde(default)]
    pub state_registers: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sequence: Option<TriggerSequence>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stg: Option<Vec<String>>,
    #[serde(default)]
    pub partial: bool,
}

/// Direct conditions from the malicious witnesses, plus the activating
/// sequence when some conditions sit on state registers.
pub fn analyze_trigger(
    g: &CircuitGraph,
    report: &FlowReport,
    bound: usize,
) -> Result<TriggerReport, TriggerError> {
    let direct = extract_direct_trigger(g, report)?;
    let cond: Vec<(FfId, bool)> = direct
        .registers
        .iter()
        .filter_map(|(n, &v)| g.ff_by_name(n).map(|f| (f, v)))
        .collect();
    let ffs: Vec<FfId> = cond.iter().map(|&(f, _)| f).collect();
    let state = trigger_state_registers(g, &ffs);
    let mut out = TriggerReport {
        kind: if direct.always_on {
            "always-on"
        } else {
            "condition"
        }
        .into(),
        conditions: direct.groups,
        sources: direct.sources,
        state_registers: state.iter().map(|&f| g.ff(f).name.clone()).collect(),
        sequence: None,
        stg: None,
        partial: false,
    };
    if !state.is_empty() {
        let trig: Vec<(FfId, bool)> = cond
            .into_iter()
            .filter(|(f, _)| state.contains(f))
            .collect();
        let stg = extract_stg(g, &state, &trig, bound)?;
        out.partial = stg.partial;
        out.stg = Some(stg.to_text().lines().map(str::to_string).collect());
        if let Ok(seq) = extract_trigger_sequence(&stg) {
            out.kind = "sequence".into();
            out.sequence = Some(seq);
        }
    }
    Ok(out)
}

/// Convenience for callers holding a witness: the observation it refers to.
pub fn observation_name(g: &CircuitGraph, o: Observation) -> String {
    match o {
        Observation::Net(n) => g.net_name(n).to_string(),
        Observation::Capture(f) => g.ff(f).name.clone(),
    }
}
