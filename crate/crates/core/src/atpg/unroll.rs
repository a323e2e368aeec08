use crate::netlist::{CircuitGraph, Driver, FfId, NetId, ScanConfig, SeqKind};
use crate::sat::{Cnf, Sig};
use crate::sim;

use super::{AtpgError, Observation, Stimulus, StuckAtFault};

/// Time-frame expansion of a circuit in dual rails.
///
/// The fault net is cut from its driver: the good rail carries the
/// complement of the fault value and the faulty rail the fault value, in
/// every frame. Both rails share input and initial-state variables; with
/// structural hashing the rails coincide outside the fault's fan-out.
pub struct UnrolledModel<'g> {
    g: &'g CircuitGraph,
    pub(crate) cnf: Cnf,
    fault: Option<StuckAtFault>,
    scan: ScanConfig,
    reset_init: bool,
    relevant: Vec<bool>,
    /// Free data inputs, in `g.inputs` order.
    free_inputs: Vec<NetId>,
    held: Vec<Option<bool>>,
    init: Vec<Option<Sig>>,
    pi: Vec<Vec<Option<Sig>>>,
    good: Vec<Vec<Sig>>,
    faulty: Vec<Vec<Sig>>,
}

/// Nets whose values can influence the seeds, across flip-flops.
pub(crate) fn sequential_coi(g: &CircuitGraph, seeds: &[NetId]) -> Vec<bool> {
    let mut mark = vec![false; g.nets.len()];
    let mut work: Vec<NetId> = seeds.to_vec();
    while let Some(n) = work.pop() {
        if std::mem::replace(&mut mark[n.index()], true) {
            continue;
        }
        match g.net(n).driver {
            Some(Driver::Cell(c)) => work.extend(g.cell(c).inputs.iter().copied()),
            Some(Driver::Ff(f)) => work.extend(ff_input_nets(g, f)),
            _ => {}
        }
    }
    mark
}

/// Nets read by the next-state function of `f` (including its own output).
pub(crate) fn ff_input_nets(g: &CircuitGraph, f: FfId) -> Vec<NetId> {
    let ff = g.ff(f);
    let mut v = vec![ff.d, ff.q];
    if ff.kind == SeqKind::Latch {
        v.push(ff.clock);
    }
    if let Some(r) = ff.reset {
        v.push(r.net);
    }
    v
}

pub(crate) fn observation_seeds(g: &CircuitGraph, obs: &[Observation]) -> Vec<NetId> {
    let mut seeds = Vec::new();
    for o in obs {
        match *o {
            Observation::Net(n) => seeds.push(n),
            Observation::Capture(f) => seeds.extend(ff_input_nets(g, f)),
        }
    }
    seeds
}

impl<'g> UnrolledModel<'g> {
    /// Builds an empty model (no frames yet) restricted to the sequential
    /// cone of influence of `seeds`. `fault = None` gives a single-rail
    /// model.
    pub fn new(
        g: &'g CircuitGraph,
        scan: &ScanConfig,
        fault: Option<StuckAtFault>,
        seeds: &[NetId],
        reset_init: bool,
    ) -> Result<Self, AtpgError> {
        if let Some(f) = fault {
            if f.net.index() >= g.nets.len() {
                return Err(AtpgError::UnknownNet(f.net.0));
            }
        }
        if let Some(n) = seeds.iter().find(|n| n.index() >= g.nets.len()) {
            return Err(AtpgError::UnknownNet(n.0));
        }
        let held = sim::held_inputs(g);
        let free_inputs = g
            .inputs
            .iter()
            .copied()
            .filter(|n| held[n.index()].is_none())
            .collect();
        let mut cnf = Cnf::new();
        let relevant = sequential_coi(g, seeds);
        let init = g
            .ffs
            .iter()
            .map(|f| {
                if !relevant[f.q.index()] {
                    return None;
                }
                let fixed = !scan.is_scan(f.id) && reset_init && sim::has_fixed_init(g, f.id);
                Some(if fixed {
                    Sig::Const(f.reset.expect("fixed init").value)
                } else {
                    cnf.fresh()
                })
            })
            .collect();
        Ok(UnrolledModel {
            g,
            cnf,
            fault,
            scan: scan.clone(),
            reset_init,
            relevant,
            free_inputs,
            held,
            init,
            pi: Vec::new(),
            good: Vec::new(),
            faulty: Vec::new(),
        })
    }

    pub fn graph(&self) -> &'g CircuitGraph {
        self.g
    }

    pub fn frames(&self) -> usize {
        self.good.len()
    }

    pub fn is_relevant(&self, n: NetId) -> bool {
        self.relevant[n.index()]
    }

    pub fn fault(&self) -> Option<StuckAtFault> {
        self.fault
    }

    fn forced(&self, n: NetId) -> Option<(Sig, Sig)> {
        match self.fault {
            Some(f) if f.net == n => Some((Sig::Const(!f.value), Sig::Const(f.value))),
            _ => None,
        }
    }

    /// Next-state signal of `f` from frame `t` on one rail.
    fn next_state(&mut self, f: FfId, t: usize, faulty: bool) -> Sig {
        let g = self.g;
        let ff = g.ff(f);
        let vals = if faulty {
            &self.faulty[t]
        } else {
            &self.good[t]
        };
        let q = vals[ff.q.index()];
        let d = vals[ff.d.index()];
        match ff.kind {
            SeqKind::Latch => {
                let en = vals[ff.clock.index()];
                self.cnf.mux(en, q, d)
            }
            SeqKind::Dff => {
                if matches!(g.net(ff.clock).driver, Some(Driver::Const(_))) {
                    return q;
                }
                match ff.reset {
                    Some(r) => {
                        let rv = vals[r.net.index()];
                        let active = if r.active_low { !rv } else { rv };
                        self.cnf.mux(active, d, Sig::Const(r.value))
                    }
                    None => d,
                }
            }
        }
    }

    /// Appends frames until the model has `n` of them.
    pub fn extend_to(&mut self, n: usize) {
        while self.frames() < n {
            self.push_frame();
        }
    }

    fn push_frame(&mut self) {
        let g = self.g;
        let t = self.frames();
        let zero = Sig::Const(false);
        let mut good = vec![zero; g.nets.len()];
        let mut faulty = vec![zero; g.nets.len()];
        let mut pis = vec![None; g.inputs.len()];
        for (k, &pi) in g.inputs.iter().enumerate() {
            if !self.relevant[pi.index()] {
                continue;
            }
            let s = match self.held[pi.index()] {
                Some(v) => Sig::Const(v),
                None => {
                    let s = self.cnf.fresh();
                    pis[k] = Some(s);
                    s
                }
            };
            good[pi.index()] = s;
            faulty[pi.index()] = s;
        }
        for ff in &g.ffs {
            if !self.relevant[ff.q.index()] {
                continue;
            }
            let (sg, sf) = if t == 0 {
                let s = self.init[ff.id.index()].expect("relevant ff has init");
                (s, s)
            } else {
                (
                    self.next_state(ff.id, t - 1, false),
                    self.next_state(ff.id, t - 1, true),
                )
            };
            good[ff.q.index()] = sg;
            faulty[ff.q.index()] = sf;
        }
        for n in &g.nets {
            if let Some(Driver::Const(v)) = n.driver {
                good[n.id.index()] = Sig::Const(v);
                faulty[n.id.index()] = Sig::Const(v);
            }
        }
        if let Some(f) = self.fault {
            if !matches!(g.net(f.net).driver, Some(Driver::Cell(_))) {
                let (a, b) = self.forced(f.net).expect("fault");
                good[f.net.index()] = a;
                faulty[f.net.index()] = b;
            }
        }
        let mut buf = Vec::with_capacity(4);
        for &c in g.topo_order() {
            let cell = g.cell(c);
            let out = cell.output;
            if !self.relevant[out.index()] {
                continue;
            }
            if let Some((a, b)) = self.forced(out) {
                good[out.index()] = a;
                faulty[out.index()] = b;
                continue;
            }
            buf.clear();
            buf.extend(cell.inputs.iter().map(|&i| good[i.index()]));
            let sg = self.cnf.gate(cell.kind, &buf);
            buf.clear();
            buf.extend(cell.inputs.iter().map(|&i| faulty[i.index()]));
            let sf = self.cnf.gate(cell.kind, &buf);
            good[out.index()] = sg;
            faulty[out.index()] = sf;
        }
        self.pi.push(pis);
        self.good.push(good);
        self.faulty.push(faulty);
    }

    pub fn good(&self, t: usize, n: NetId) -> Sig {
        self.good[t][n.index()]
    }

    pub fn faulty(&self, t: usize, n: NetId) -> Sig {
        self.faulty[t][n.index()]
    }

    /// Signal on one rail at an observation in frame `t`.
    pub fn observed(&mut self, t: usize, o: Observation, faulty: bool) -> Sig {
        match o {
            Observation::Net(n) => {
                if faulty {
                    self.faulty(t, n)
                } else {
                    self.good(t, n)
                }
            }
            Observation::Capture(f) => self.next_state(f, t, faulty),
        }
    }

    /// Good/faulty difference at `o` in frame `t`.
    pub fn difference(&mut self, t: usize, o: Observation) -> Sig {
        let a = self.observed(t, o, false);
        let b = self.observed(t, o, true);
        self.cnf.xor(a, b)
    }

    pub fn net_difference(&mut self, t: usize, n: NetId) -> Sig {
        let (a, b) = (self.good(t, n), self.faulty(t, n));
        self.cnf.xor(a, b)
    }

    /// State of `f` at the start of frame `t` (`t` may equal `frames()`).
    pub fn state(&mut self, t: usize, f: FfId) -> Sig {
        if t == 0 {
            return self.init[f.index()].unwrap_or(Sig::Const(false));
        }
        self.next_state(f, t - 1, false)
    }

    /// Reads a stimulus of `frames` frames out of the solver model.
    pub fn stimulus(&self, frames: usize) -> Stimulus {
        let g = self.g;
        let val = |s: Option<Sig>| s.map(|s| self.cnf.value(s));
        let mut scan_load = Vec::new();
        let mut power_up = Vec::new();
        for ff in &g.ffs {
            let v = match self.init[ff.id.index()] {
                Some(Sig::Lit(l)) => Some(self.cnf.value(Sig::Lit(l))),
                _ => None,
            };
            if self.scan.is_scan(ff.id) {
                scan_load.push((ff.id, v));
            } else if !(self.reset_init && sim::has_fixed_init(g, ff.id)) {
                power_up.push((ff.id, v));
            }
        }
        let index: Vec<usize> = self
            .free_inputs
            .iter()
            .map(|n| g.inputs.iter().position(|x| x == n).expect("input"))
            .collect();
        let frames = (0..frames)
            .map(|t| index.iter().map(|&k| val(self.pi[t][k])).collect())
            .collect();
        Stimulus {
            scan_load,
            power_up,
            inputs: self.free_inputs.clone(),
            frames,
        }
    }
}
