//! Bounded partial-scan sequential test generation.
//!
//! A stuck-at fault on the asset net is searched for over a time-frame
//! expansion of the circuit. Scan-enabled flip-flops are loaded freely at
//! frame 0 and observed at their capture in any frame (equivalently, at the
//! final frame of a truncated stimulus); other flip-flops start from their
//! reset value (or freely when they have none) and chain across frames.

mod path;
mod unroll;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellId, CircuitGraph, FfId, NetId, ScanConfig};
use crate::sat::{SatResult, Sig};
use crate::sim::{self, Tern};

pub use path::{dual_simulation, path_sensitized, witness_path, DualTrace};
pub(crate) use unroll::observation_seeds;
pub use unroll::UnrolledModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtpgError {
    #[error("unknown net id {0}")]
    UnknownNet(u32),
    #[error("unknown flip-flop id {0}")]
    UnknownFf(u32),
    #[error("depth must be at least 1")]
    ZeroDepth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StuckAtFault {
    pub net: NetId,
    pub value: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtpgParams {
    /// Frame bound D.
    pub depth: usize,
    /// Keep doubling D on a miss, up to `max_depth`.
    pub adaptive: bool,
    pub max_depth: usize,
    /// Decision budget per fault.
    pub budget: u64,
    /// Resettable flip-flops start at their reset value.
    pub reset_init: bool,
    /// Structural paths tried by the minimum-depth search.
    pub path_limit: usize,
}

impl Default for AtpgParams {
    fn default() -> Self {
        AtpgParams {
            depth: 8,
            adaptive: false,
            max_depth: 32,
            budget: 1_000_000,
            reset_init: true,
            path_limit: 64,
        }
    }
}

/// Where a difference is observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observation {
    /// The value of a net (a primary output, or an asset under integrity
    /// checking).
    Net(NetId),
    /// The value a flip-flop captures at the end of the frame.
    Capture(FfId),
}

/// Test sequence. `None` entries are don't-cares.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub scan_load: Vec<(FfId, Option<bool>)>,
    /// Power-up values of non-scan flip-flops without a fixed initial value.
    pub power_up: Vec<(FfId, Option<bool>)>,
    /// Free data inputs; `frames[t][k]` drives `inputs[k]` in frame `t`.
    pub inputs: Vec<NetId>,
    pub frames: Vec<Vec<Option<bool>>>,
}

/// Position of one stimulus bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StimBit {
    Load(usize),
    PowerUp(usize),
    Input(usize, usize),
}

impl Stimulus {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn bits(&self) -> Vec<StimBit> {
        let mut v: Vec<StimBit> = (0..self.scan_load.len()).map(StimBit::Load).collect();
        v.extend((0..self.power_up.len()).map(StimBit::PowerUp));
        for (t, f) in self.frames.iter().enumerate() {
            v.extend((0..f.len()).map(|k| StimBit::Input(t, k)));
        }
        v
    }

    pub fn get(&self, b: StimBit) -> Option<bool> {
        match b {
            StimBit::Load(i) => self.scan_load[i].1,
            StimBit::PowerUp(i) => self.power_up[i].1,
            StimBit::Input(t, k) => self.frames[t][k],
        }
    }

    pub fn set(&mut self, b: StimBit, v: Option<bool>) {
        match b {
            StimBit::Load(i) => self.scan_load[i].1 = v,
            StimBit::PowerUp(i) => self.power_up[i].1 = v,
            StimBit::Input(t, k) => self.frames[t][k] = v,
        }
    }

    /// Initial state and per-frame input vectors for simulation, with
    /// don't-cares mapped through `fill`.
    pub fn expand<T: sim::Logic>(
        &self,
        g: &CircuitGraph,
        fill: impl Fn(Option<bool>) -> T,
    ) -> (Vec<T>, Vec<Vec<T>>) {
        let mut state: Vec<T> = g
            .ffs
            .iter()
            .map(|f| sim::initial_value(g, f.id, fill(None)))
            .collect();
        for &(f, v) in self.scan_load.iter().chain(&self.power_up) {
            state[f.index()] = fill(v);
        }
        let pos: Vec<usize> = self
            .inputs
            .iter()
            .map(|n| {
                g.inputs
                    .iter()
                    .position(|x| x == n)
                    .expect("input of graph")
            })
            .collect();
        let inputs = self
            .frames
            .iter()
            .map(|fr| {
                let mut v: Vec<T> = vec![fill(None); g.inputs.len()];
                for (k, &p) in pos.iter().enumerate() {
                    v[p] = fill(fr[k]);
                }
                v
            })
            .collect();
        (state, inputs)
    }

    /// Two-valued expansion with don't-cares fixed to 0.
    pub fn to_bool(&self, g: &CircuitGraph) -> (Vec<bool>, Vec<Vec<bool>>) {
        self.expand(g, |v| v.unwrap_or(false))
    }

    pub fn to_ternary(&self, g: &CircuitGraph) -> (Vec<Tern>, Vec<Vec<Tern>>) {
        self.expand(g, |v| v.map_or(Tern::X, Tern::from_bool))
    }

    pub fn specified_bits(&self) -> usize {
        self.bits()
            .into_iter()
            .filter(|&b| self.get(b).is_some())
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathElement {
    Cell(CellId),
    Ff(FfId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub frame: usize,
    pub element: PathElement,
    /// The net the difference enters the element on.
    pub from: NetId,
}

/// Route of the good/faulty difference from the asset to the observation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationPath {
    pub steps: Vec<PathStep>,
    /// Combinational cells on the path, summed over frames.
    pub depth: usize,
    /// Every side input is at a non-controlling value.
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub stimulus: Stimulus,
    /// Frame in which the difference reaches the observation.
    pub frame: usize,
    pub observed: Observation,
    pub path: PropagationPath,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Detection {
    Detected(Box<Witness>),
    Undetectable,
    Abandoned,
}

impl Detection {
    pub fn is_detected(&self) -> bool {
        matches!(self, Detection::Detected(_))
    }
}

/// Deterministic effort counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtpgStats {
    pub sat_calls: u64,
    pub decisions: u64,
    pub conflicts: u64,
}

impl AtpgStats {
    pub fn add(&mut self, o: &AtpgStats) {
        self.sat_calls += o.sat_calls;
        self.decisions += o.decisions;
        self.conflicts += o.conflicts;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtpgOutcome {
    pub detection: Detection,
    /// Frame bound the verdict refers to.
    pub depth: usize,
    pub stats: AtpgStats,
}

struct Search<'m, 'g> {
    model: &'m mut UnrolledModel<'g>,
    stats: AtpgStats,
    budget: u64,
    start_decisions: u64,
}

impl<'m, 'g> Search<'m, 'g> {
    fn new(model: &'m mut UnrolledModel<'g>, budget: u64) -> Self {
        let start_decisions = model.cnf.solver.stats.decisions;
        Search {
            model,
            stats: AtpgStats::default(),
            budget,
            start_decisions,
        }
    }

    fn solve(&mut self, assumption: Sig) -> SatResult {
        let used = self.model.cnf.solver.stats.decisions - self.start_decisions;
        let left = self.budget.saturating_sub(used);
        let before = self.model.cnf.solver.stats;
        let r = match assumption {
            Sig::Const(true) => self.model.cnf.solver.solve(Some(left)),
            Sig::Const(false) => SatResult::Unsat,
            Sig::Lit(l) => self
                .model
                .cnf
                .solver
                .solve_with_assumptions(&[l], Some(left)),
        };
        let after = self.model.cnf.solver.stats;
        self.stats.sat_calls += 1;
        self.stats.decisions += after.decisions - before.decisions;
        self.stats.conflicts += after.conflicts - before.conflicts;
        r
    }

    /// Solves with `cond` enabled through a fresh activation literal that is
    /// disabled afterwards.
    fn check(&mut self, cond: &[Sig]) -> SatResult {
        if cond.contains(&Sig::Const(false)) {
            return SatResult::Unsat;
        }
        let act = self.model.cnf.fresh();
        for &c in cond {
            self.model.cnf.clause(&[!act, c]);
        }
        let r = self.solve(act);
        if r != SatResult::Sat {
            self.model.cnf.clause(&[!act]);
        }
        r
    }
}

/// Searches for a stimulus exposing `fault` at one of `observe`.
///
/// The detecting frame is the earliest possible one. The reported path and
/// stimulus come from the shallowest sensitizable structural path found by
/// the minimum-depth search, falling back to the path traced on the first
/// witness.
pub fn detect_fault(
    g: &CircuitGraph,
    scan: &ScanConfig,
    fault: StuckAtFault,
    observe: &[Observation],
    params: &AtpgParams,
) -> Result<AtpgOutcome, AtpgError> {
    if params.depth == 0 {
        return Err(AtpgError::ZeroDepth);
    }
    for o in observe {
        if let Observation::Capture(f) = *o {
            if f.index() >= g.ffs.len() {
                return Err(AtpgError::UnknownFf(f.0));
            }
        }
    }
    let seeds = observation_seeds(g, observe);
    let mut model = UnrolledModel::new(g, scan, Some(fault), &seeds, params.reset_init)?;
    let mut depth = params.depth;
    let limit = if params.adaptive {
        params.max_depth.max(depth)
    } else {
        depth
    };
    if observe.is_empty() || !model.is_relevant(fault.net) {
        return Ok(AtpgOutcome {
            detection: Detection::Undetectable,
            depth,
            stats: AtpgStats::default(),
        });
    }
    let mut search = Search::new(&mut model, params.budget);
    let mut t = 0;
    while t < limit {
        if t == depth {
            depth = (depth * 2).min(limit);
        }
        search.model.extend_to(t + 1);
        let diffs: Vec<Sig> = observe
            .iter()
            .map(|&o| search.model.difference(t, o))
            .collect();
        let any = search.model.cnf.or(&diffs);
        match search.check(&[any]) {
            SatResult::Sat => {
                let observed = observe
                    .iter()
                    .zip(&diffs)
                    .find(|(_, &d)| search.model.cnf.value(d))
                    .map(|(&o, _)| o)
                    .expect("a difference is set");
                let stimulus = search.model.stimulus(t + 1);
                let witness =
                    path::refine_witness(&mut search, fault, stimulus, t, observed, depth, params);
                let stats = search.stats;
                return Ok(AtpgOutcome {
                    detection: Detection::Detected(Box::new(witness)),
                    depth,
                    stats,
                });
            }
            SatResult::Unsat => t += 1,
            SatResult::Unknown => {
                let stats = search.stats;
                return Ok(AtpgOutcome {
                    detection: Detection::Abandoned,
                    depth,
                    stats,
                });
            }
        }
    }
    let stats = search.stats;
    Ok(AtpgOutcome {
        detection: Detection::Undetectable,
        depth,
        stats,
    })
}

/// Information flow from `net` to `observe`: both stuck-at faults must be
/// detected at the same point. Returns the stuck-at-0 witness.
pub fn detect_flow(
    g: &CircuitGraph,
    scan: &ScanConfig,
    net: NetId,
    observe: &[Observation],
    params: &AtpgParams,
) -> Result<AtpgOutcome, AtpgError> {
    let sa0 = detect_fault(g, scan, StuckAtFault { net, value: false }, observe, params)?;
    let mut stats = sa0.stats;
    let Detection::Detected(w0) = &sa0.detection else {
        return Ok(sa0);
    };
    let sa1 = detect_fault(
        g,
        scan,
        StuckAtFault { net, value: true },
        &[w0.observed],
        params,
    )?;
    stats.add(&sa1.stats);
    let detection = match sa1.detection {
        Detection::Detected(_) => sa0.detection,
        other => other,
    };
    Ok(AtpgOutcome {
        detection,
        depth: sa0.depth.max(sa1.depth),
        stats,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Justification {
    Reachable(Stimulus),
    Unreachable,
    Abandoned,
}

/// Finds the shortest stimulus (at most `depth` frames) after which the
/// flip-flops hold `target`.
pub fn justify_state(
    g: &CircuitGraph,
    scan: &ScanConfig,
    target: &[(FfId, bool)],
    depth: usize,
    params: &AtpgParams,
) -> Result<Justification, AtpgError> {
    if let Some((f, _)) = target.iter().find(|(f, _)| f.index() >= g.ffs.len()) {
        return Err(AtpgError::UnknownFf(f.0));
    }
    let seeds: Vec<NetId> = target.iter().map(|&(f, _)| g.ff(f).q).collect();
    let seeds: Vec<NetId> = seeds
        .into_iter()
        .chain(
            target
                .iter()
                .flat_map(|&(f, _)| unroll::ff_input_nets(g, f)),
        )
        .collect();
    let mut model = UnrolledModel::new(g, scan, None, &seeds, params.reset_init)?;
    let mut search = Search::new(&mut model, params.budget);
    for k in 0..=depth {
        search.model.extend_to(k);
        let conds: Vec<Sig> = target
            .iter()
            .map(|&(f, v)| {
                let s = search.model.state(k, f);
                if v {
                    s
                } else {
                    !s
                }
            })
            .collect();
        match search.check(&conds) {
            SatResult::Sat => return Ok(Justification::Reachable(search.model.stimulus(k))),
            SatResult::Unsat => {}
            SatResult::Unknown => return Ok(Justification::Abandoned),
        }
    }
    Ok(Justification::Unreachable)
}

#[cfg(test)]
mod tests;
