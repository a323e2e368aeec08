//! A small CDCL satisfiability solver.
//!
//! Two-watched-literal propagation, first-UIP learning with local clause
//! minimization, VSIDS branching with phase saving, Luby restarts and
//! activity-based learnt clause reduction. A decision budget turns long
//! searches into [`SatResult::Unknown`].

use std::collections::HashMap;
use std::ops::Not;

use crate::netlist::CellKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(v: Var, negated: bool) -> Self {
        Lit(v.0 << 1 | negated as u32)
    }

    pub fn pos(v: Var) -> Self {
        Lit::new(v, false)
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    fn index(self) -> usize {
        self.0 as usize
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
}

const NO_REASON: u32 = u32::MAX;

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

pub struct Solver {
    clauses: Vec<Clause>,
    watches: Vec<Vec<u32>>,
    assign: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    phase: Vec<bool>,
    activity: Vec<f64>,
    heap: Vec<u32>,
    heap_pos: Vec<i32>,
    var_inc: f64,
    cla_inc: f64,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    seen: Vec<bool>,
    unsat: bool,
    model: Vec<bool>,
    n_learnts: usize,
    pub stats: SolverStats,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

fn luby(mut x: u64) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}

impl Solver {
    pub fn new() -> Self {
        Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            assign: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            phase: Vec::new(),
            activity: Vec::new(),
            heap: Vec::new(),
            heap_pos: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            seen: Vec::new(),
            unsat: false,
            model: Vec::new(),
            n_learnts: 0,
            stats: SolverStats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.assign.len()
    }

    pub fn new_var(&mut self) -> Var {
        let v = Var(self.assign.len() as u32);
        self.assign.push(0);
        self.level.push(0);
        self.reason.push(NO_REASON);
        self.phase.push(false);
        self.activity.push(0.0);
        self.seen.push(false);
        self.heap_pos.push(-1);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap_insert(v.0);
        v
    }

    fn lit_value(&self, l: Lit) -> i8 {
        let a = self.assign[l.var().0 as usize];
        if l.is_neg() {
            -a
        } else {
            a
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause at decision level 0. Returns `false` once the formula is
    /// known to be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if self.unsat {
            return false;
        }
        debug_assert_eq!(self.decision_level(), 0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        for w in c.windows(2) {
            if w[0] == !w[1] {
                return true;
            }
        }
        c.retain(|&l| self.lit_value(l) != -1);
        if c.iter().any(|&l| self.lit_value(l) == 1) {
            return true;
        }
        match c.len() {
            0 => {
                self.unsat = true;
                false
            }
            1 => {
                self.enqueue(c[0], NO_REASON);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
                !self.unsat
            }
            _ => {
                self.attach(c, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].index()].push(cref);
        self.watches[lits[1].index()].push(cref);
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
        });
        if learnt {
            self.n_learnts += 1;
        }
        cref
    }

    fn enqueue(&mut self, l: Lit, reason: u32) {
        let v = l.var().0 as usize;
        self.assign[v] = if l.is_neg() { -1 } else { 1 };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Returns a conflicting clause, if any.
    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.index()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let cref = ws[i];
                i += 1;
                let clause = &mut self.clauses[cref as usize];
                if clause.deleted {
                    continue;
                }
                if clause.lits[0] == false_lit {
                    clause.lits.swap(0, 1);
                }
                let first = clause.lits[0];
                let fv = {
                    let a = self.assign[first.var().0 as usize];
                    if first.is_neg() {
                        -a
                    } else {
                        a
                    }
                };
                if fv == 1 {
                    ws[j] = cref;
                    j += 1;
                    continue;
                }
                let mut found = None;
                for k in 2..clause.lits.len() {
                    let l = clause.lits[k];
                    let a = self.assign[l.var().0 as usize];
                    let lv = if l.is_neg() { -a } else { a };
                    if lv != -1 {
                        found = Some(k);
                        break;
                    }
                }
                if let Some(k) = found {
                    clause.lits.swap(1, k);
                    let nw = clause.lits[1];
                    self.watches[nw.index()].push(cref);
                    continue;
                }
                ws[j] = cref;
                j += 1;
                if fv == -1 {
                    conflict = Some(cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, cref);
                }
            }
            ws.truncate(j);
            let slot = &mut self.watches[false_lit.index()];
            ws.append(slot);
            *slot = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn bump_var(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        if self.heap_pos[v as usize] >= 0 {
            self.heap_up(self.heap_pos[v as usize] as usize);
        }
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut path_c = 0usize;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        let dl = self.decision_level();
        loop {
            self.bump_clause(confl);
            let lits = self.clauses[confl as usize].lits.clone();
            let start = if p.is_some() { 1 } else { 0 };
            for &q in &lits[start..] {
                let v = q.var().0 as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v as u32);
                    if self.level[v] >= dl {
                        path_c += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[self.trail[index].var().0 as usize] {
                    break;
                }
            }
            let pl = self.trail[index];
            p = Some(pl);
            confl = self.reason[pl.var().0 as usize];
            self.seen[pl.var().0 as usize] = false;
            path_c -= 1;
            if path_c == 0 {
                break;
            }
        }
        learnt[0] = !p.expect("uip");

        // Local minimization: drop literals implied by others in the clause.
        let keep: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if i == 0 {
                    return true;
                }
                let r = self.reason[l.var().0 as usize];
                if r == NO_REASON {
                    return true;
                }
                self.clauses[r as usize].lits[1..].iter().any(|&q| {
                    let v = q.var().0 as usize;
                    !self.seen[v] && self.level[v] > 0
                })
            })
            .collect();
        for &l in &learnt[1..] {
            self.seen[l.var().0 as usize] = false;
        }
        let mut out: Vec<Lit> = learnt
            .into_iter()
            .zip(keep)
            .filter_map(|(l, k)| k.then_some(l))
            .collect();

        let bt = if out.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..out.len() {
                if self.level[out[i].var().0 as usize] > self.level[out[max_i].var().0 as usize] {
                    max_i = i;
                }
            }
            out.swap(1, max_i);
            self.level[out[1].var().0 as usize]
        };
        (out, bt)
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for i in (lim..self.trail.len()).rev() {
            let v = self.trail[i].var().0;
            self.phase[v as usize] = !self.trail[i].is_neg();
            self.assign[v as usize] = 0;
            self.reason[v as usize] = NO_REASON;
            if self.heap_pos[v as usize] < 0 {
                self.heap_insert(v);
            }
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = self.trail.len();
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap_pop() {
            if self.assign[v as usize] == 0 {
                return Some(Lit::new(Var(v), !self.phase[v as usize]));
            }
        }
        None
    }

    fn reduce_db(&mut self) {
        let mut learnts: Vec<u32> = (0..self.clauses.len() as u32)
            .filter(|&c| {
                let cl = &self.clauses[c as usize];
                cl.learnt && !cl.deleted && cl.lits.len() > 2
            })
            .collect();
        learnts.sort_by(|&a, &b| {
            self.clauses[a as usize]
                .activity
                .partial_cmp(&self.clauses[b as usize].activity)
                .unwrap()
        });
        let locked = |s: &Self, c: u32| {
            let l = s.clauses[c as usize].lits[0];
            s.lit_value(l) == 1 && s.reason[l.var().0 as usize] == c
        };
        for &c in &learnts[..learnts.len() / 2] {
            if !locked(self, c) {
                self.clauses[c as usize].deleted = true;
                self.n_learnts -= 1;
            }
        }
    }

    /// Searches for a model. `budget` caps the number of decisions.
    pub fn solve(&mut self, budget: Option<u64>) -> SatResult {
        self.solve_with_assumptions(&[], budget)
    }

    pub fn solve_with_assumptions(
        &mut self,
        assumptions: &[Lit],
        budget: Option<u64>,
    ) -> SatResult {
        if self.unsat {
            return SatResult::Unsat;
        }
        if self.propagate().is_some() {
            self.unsat = true;
            return SatResult::Unsat;
        }
        let start_decisions = self.stats.decisions;
        let mut restart_idx = 0u64;
        let mut max_learnts = (self.clauses.len() / 3).max(2000) as f64;
        loop {
            let limit = luby(restart_idx) * 100;
            restart_idx += 1;
            let mut conflicts_here = 0u64;
            loop {
                if let Some(confl) = self.propagate() {
                    self.stats.conflicts += 1;
                    conflicts_here += 1;
                    if self.decision_level() == 0 {
                        self.unsat = true;
                        return SatResult::Unsat;
                    }
                    let (learnt, bt) = self.analyze(confl);
                    if (bt as usize) < assumptions.len().min(self.trail_lim.len())
                        && self.assumption_conflict(&learnt, assumptions)
                    {
                        self.cancel_until(0);
                        return SatResult::Unsat;
                    }
                    self.cancel_until(bt);
                    if learnt.len() == 1 {
                        self.enqueue(learnt[0], NO_REASON);
                    } else {
                        let first = learnt[0];
                        let cref = self.attach(learnt, true);
                        self.bump_clause(cref);
                        self.enqueue(first, cref);
                    }
                    self.var_inc /= 0.95;
                    self.cla_inc /= 0.999;
                    continue;
                }
                if conflicts_here >= limit {
                    self.cancel_until(0);
                    break;
                }
                if self.n_learnts as f64 > max_learnts + self.trail.len() as f64 {
                    self.reduce_db();
                    max_learnts *= 1.1;
                }
                let dl = self.decision_level() as usize;
                let next = if dl < assumptions.len() {
                    let a = assumptions[dl];
                    match self.lit_value(a) {
                        1 => {
                            self.trail_lim.push(self.trail.len());
                            continue;
                        }
                        -1 => {
                            self.cancel_until(0);
                            return SatResult::Unsat;
                        }
                        _ => Some(a),
                    }
                } else {
                    if let Some(b) = budget {
                        if self.stats.decisions - start_decisions >= b {
                            self.cancel_until(0);
                            return SatResult::Unknown;
                        }
                    }
                    self.pick_branch()
                };
                match next {
                    None => {
                        self.model = self.assign.iter().map(|&a| a == 1).collect();
                        self.cancel_until(0);
                        return SatResult::Sat;
                    }
                    Some(l) => {
                        self.stats.decisions += 1;
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(l, NO_REASON);
                    }
                }
            }
        }
    }

    /// A learnt clause whose literals are all negated assumptions proves the
    /// assumptions inconsistent.
    fn assumption_conflict(&self, learnt: &[Lit], assumptions: &[Lit]) -> bool {
        learnt.iter().all(|l| assumptions.contains(&!*l))
    }

    /// Model value of `v` after [`SatResult::Sat`].
    pub fn value(&self, v: Var) -> bool {
        self.model[v.0 as usize]
    }

    pub fn lit_model(&self, l: Lit) -> bool {
        self.value(l.var()) != l.is_neg()
    }

    // Binary max-heap on activity.
    fn heap_less(&self, a: u32, b: u32) -> bool {
        let (x, y) = (self.activity[a as usize], self.activity[b as usize]);
        x > y || (x == y && a < b)
    }

    fn heap_insert(&mut self, v: u32) {
        self.heap_pos[v as usize] = self.heap.len() as i32;
        self.heap.push(v);
        self.heap_up(self.heap.len() - 1);
    }

    fn heap_up(&mut self, mut i: usize) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.heap_less(v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.heap_pos[self.heap[i] as usize] = i as i32;
            i = parent;
        }
        self.heap[i] = v;
        self.heap_pos[v as usize] = i as i32;
    }

    fn heap_pop(&mut self) -> Option<u32> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap[0];
        let last = self.heap.pop().unwrap();
        self.heap_pos[top as usize] = -1;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.heap_pos[last as usize] = 0;
            let n = self.heap.len();
            let mut i = 0;
            loop {
                let l = 2 * i + 1;
                let r = l + 1;
                let mut best = i;
                if l < n && self.heap_less(self.heap[l], self.heap[best]) {
                    best = l;
                }
                if r < n && self.heap_less(self.heap[r], self.heap[best]) {
                    best = r;
                }
                if best == i {
                    break;
                }
                self.heap.swap(i, best);
                self.heap_pos[self.heap[i] as usize] = i as i32;
                self.heap_pos[self.heap[best] as usize] = best as i32;
                i = best;
            }
        }
        Some(top)
    }
}

/// A circuit signal during CNF construction: a constant or a literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sig {
    Const(bool),
    Lit(Lit),
}

impl Not for Sig {
    type Output = Sig;
    fn not(self) -> Sig {
        match self {
            Sig::Const(v) => Sig::Const(!v),
            Sig::Lit(l) => Sig::Lit(!l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum GateKey {
    And(Vec<Lit>),
    Xor(Lit, Lit),
    Mux(Lit, Lit, Lit),
}

/// Tseitin encoder with constant folding and structural hashing on top of
/// a [`Solver`].
#[derive(Default)]
pub struct Cnf {
    pub solver: Solver,
    cache: HashMap<GateKey, Lit>,
}

impl Cnf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> Sig {
        Sig::Lit(Lit::pos(self.solver.new_var()))
    }

    pub fn and(&mut self, ins: &[Sig]) -> Sig {
        let mut lits = Vec::with_capacity(ins.len());
        for &s in ins {
            match s {
                Sig::Const(false) => return Sig::Const(false),
                Sig::Const(true) => {}
                Sig::Lit(l) => lits.push(l),
            }
        }
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] == !w[1]) {
            return Sig::Const(false);
        }
        match lits.len() {
            0 => return Sig::Const(true),
            1 => return Sig::Lit(lits[0]),
            _ => {}
        }
        let key = GateKey::And(lits.clone());
        if let Some(&y) = self.cache.get(&key) {
            return Sig::Lit(y);
        }
        let y = Lit::pos(self.solver.new_var());
        let mut big = vec![y];
        for &l in &lits {
            self.solver.add_clause(&[!y, l]);
            big.push(!l);
        }
        self.solver.add_clause(&big);
        self.cache.insert(key, y);
        Sig::Lit(y)
    }

    pub fn or(&mut self, ins: &[Sig]) -> Sig {
        let neg: Vec<Sig> = ins.iter().map(|&s| !s).collect();
        !self.and(&neg)
    }

    pub fn xor(&mut self, a: Sig, b: Sig) -> Sig {
        let (la, lb) = match (a, b) {
            (Sig::Const(x), s) | (s, Sig::Const(x)) => return if x { !s } else { s },
            (Sig::Lit(la), Sig::Lit(lb)) => (la, lb),
        };
        if la == lb {
            return Sig::Const(false);
        }
        if la == !lb {
            return Sig::Const(true);
        }
        let flip = la.is_neg() != lb.is_neg();
        let (pa, pb) = (Lit::pos(la.var()), Lit::pos(lb.var()));
        let (pa, pb) = if pa < pb { (pa, pb) } else { (pb, pa) };
        let key = GateKey::Xor(pa, pb);
        let y = match self.cache.get(&key) {
            Some(&y) => y,
            None => {
                let y = Lit::pos(self.solver.new_var());
                self.solver.add_clause(&[!y, pa, pb]);
                self.solver.add_clause(&[!y, !pa, !pb]);
                self.solver.add_clause(&[y, !pa, pb]);
                self.solver.add_clause(&[y, pa, !pb]);
                self.cache.insert(key, y);
                y
            }
        };
        if flip {
            Sig::Lit(!y)
        } else {
            Sig::Lit(y)
        }
    }

    pub fn xor_all(&mut self, ins: &[Sig]) -> Sig {
        ins.iter()
            .fold(Sig::Const(false), |acc, &s| self.xor(acc, s))
    }

    /// `b` when `s` is high, `a` otherwise.
    pub fn mux(&mut self, s: Sig, a: Sig, b: Sig) -> Sig {
        match (s, a, b) {
            (Sig::Const(v), _, _) => return if v { b } else { a },
            _ if a == b => return a,
            (_, Sig::Const(false), _) => return self.and(&[s, b]),
            (_, Sig::Const(true), _) => return self.or(&[!s, b]),
            (_, _, Sig::Const(false)) => return self.and(&[!s, a]),
            (_, _, Sig::Const(true)) => return self.or(&[s, a]),
            _ if a == !b => return self.xor(s, a),
            _ => {}
        }
        let (Sig::Lit(ls), Sig::Lit(la), Sig::Lit(lb)) = (s, a, b) else {
            unreachable!("constants folded above")
        };
        let key = GateKey::Mux(ls, la, lb);
        if let Some(&y) = self.cache.get(&key) {
            return Sig::Lit(y);
        }
        let y = Lit::pos(self.solver.new_var());
        self.solver.add_clause(&[!ls, !lb, y]);
        self.solver.add_clause(&[!ls, lb, !y]);
        self.solver.add_clause(&[ls, !la, y]);
        self.solver.add_clause(&[ls, la, !y]);
        self.solver.add_clause(&[!la, !lb, y]);
        self.solver.add_clause(&[la, lb, !y]);
        self.cache.insert(key, y);
        Sig::Lit(y)
    }

    pub fn gate(&mut self, kind: CellKind, ins: &[Sig]) -> Sig {
        match kind {
            CellKind::And => self.and(ins),
            CellKind::Nand => !self.and(ins),
            CellKind::Or => self.or(ins),
            CellKind::Nor => !self.or(ins),
            CellKind::Xor => self.xor_all(ins),
            CellKind::Xnor => !self.xor_all(ins),
            CellKind::Not => !ins[0],
            CellKind::Buf => ins[0],
            CellKind::Mux2 => self.mux(ins[0], ins[1], ins[2]),
        }
    }

    /// Adds a clause over signals. Constant-true literals satisfy it.
    pub fn clause(&mut self, sigs: &[Sig]) {
        let mut lits = Vec::with_capacity(sigs.len());
        for &s in sigs {
            match s {
                Sig::Const(true) => return,
                Sig::Const(false) => {}
                Sig::Lit(l) => lits.push(l),
            }
        }
        self.solver.add_clause(&lits);
    }

    /// Model value after a satisfiable solve.
    pub fn value(&self, s: Sig) -> bool {
        match s {
            Sig::Const(v) => v,
            Sig::Lit(l) => self.solver.lit_model(l),
        }
    }
}
