//! Cycle-level logic simulation.
//!
//! The sequential model shared with the ATPG engine and the oracle:
//! a flip-flop with a reset pin loads its reset value whenever the reset net
//! is active at the end of a cycle (asynchronous resets are handled at the
//! cycle boundary too); a flip-flop with a constant clock holds its value;
//! a latch samples `D` when its gate is high. Inputs used only as clocks or
//! resets are held at their inactive level.

use crate::netlist::{CellKind, CircuitGraph, Driver, FfId, NetId, SeqKind};

/// Values that the combinational evaluator can work on.
pub trait Logic: Copy + PartialEq {
    fn konst(v: bool) -> Self;
    fn gate(kind: CellKind, inputs: &[Self]) -> Self;
    fn mux(s: Self, a: Self, b: Self) -> Self {
        Self::gate(CellKind::Mux2, &[s, a, b])
    }
}

impl Logic for bool {
    fn konst(v: bool) -> Self {
        v
    }
    fn gate(kind: CellKind, inputs: &[Self]) -> Self {
        kind.eval(inputs)
    }
}

impl Logic for u64 {
    fn konst(v: bool) -> Self {
        if v {
            !0
        } else {
            0
        }
    }
    fn gate(kind: CellKind, inputs: &[Self]) -> Self {
        kind.eval_words(inputs)
    }
}

/// Fixed levels of clock and reset inputs during a sequence.
pub fn held_inputs(g: &CircuitGraph) -> Vec<Option<bool>> {
    let mut out = vec![None; g.nets.len()];
    for ff in &g.ffs {
        if g.is_input(ff.clock) && g.is_clock_or_reset(ff.clock) {
            out[ff.clock.index()] = Some(false);
        }
        if let Some(r) = ff.reset {
            if g.is_input(r.net) && g.is_clock_or_reset(r.net) {
                out[r.net.index()] = Some(r.active_low);
            }
        }
    }
    out
}

/// Evaluates all cells in topological order. Source nets (inputs and
/// flip-flop outputs) must already hold their values. A forced net keeps
/// its value regardless of its driver.
pub fn eval_comb<T: Logic>(g: &CircuitGraph, values: &mut [T], forced: Option<(NetId, T)>) {
    for n in &g.nets {
        if let Some(Driver::Const(v)) = n.driver {
            values[n.id.index()] = T::konst(v);
        }
    }
    if let Some((n, v)) = forced {
        values[n.index()] = v;
    }
    let mut buf = Vec::with_capacity(4);
    for &c in g.topo_order() {
        let cell = g.cell(c);
        if matches!(forced, Some((n, _)) if n == cell.output) {
            continue;
        }
        buf.clear();
        buf.extend(cell.inputs.iter().map(|&i| values[i.index()]));
        values[cell.output.index()] = T::gate(cell.kind, &buf);
    }
}

/// Next value of a sequential element given the current net values.
pub fn next_state<T: Logic>(g: &CircuitGraph, ff: FfId, values: &[T]) -> T {
    let f = g.ff(ff);
    let q = values[f.q.index()];
    let d = values[f.d.index()];
    match f.kind {
        SeqKind::Latch => T::mux(values[f.clock.index()], q, d),
        SeqKind::Dff => {
            if matches!(g.net(f.clock).driver, Some(Driver::Const(_))) {
                return q;
            }
            match f.reset {
                Some(r) => {
                    let rv = values[r.net.index()];
                    // active = rv ^ active_low
                    let active = if r.active_low {
                        T::gate(CellKind::Not, &[rv])
                    } else {
                        rv
                    };
                    T::mux(active, d, T::konst(r.value))
                }
                None => d,
            }
        }
    }
}

/// Whether a flip-flop powers up at a known value.
pub fn has_fixed_init(g: &CircuitGraph, ff: FfId) -> bool {
    g.ff(ff).kind == SeqKind::Dff && g.ff(ff).reset.is_some()
}

/// Initial value for a flip-flop that is not scan-loaded: the reset value,
/// or `free` for a non-resettable element.
pub fn initial_value<T: Logic>(g: &CircuitGraph, ff: FfId, free: T) -> T {
    match g.ff(ff).reset {
        Some(r) if g.ff(ff).kind == SeqKind::Dff => T::konst(r.value),
        _ => free,
    }
}

/// Simulates a sequence and returns the net values of every frame.
///
/// `state0` holds the frame-0 value of every sequential element, `inputs`
/// one value per primary input (in `g.inputs` order) per frame. The
/// `forced` net is cut from its driver in every frame.
pub fn run_sequence<T: Logic>(
    g: &CircuitGraph,
    state0: &[T],
    inputs: &[Vec<T>],
    forced: Option<(NetId, T)>,
) -> Vec<Vec<T>> {
    let held = held_inputs(g);
    let mut state = state0.to_vec();
    let mut frames = Vec::with_capacity(inputs.len());
    for frame_in in inputs {
        let mut values = vec![T::konst(false); g.nets.len()];
        for (k, &pi) in g.inputs.iter().enumerate() {
            values[pi.index()] = match held[pi.index()] {
                Some(v) => T::konst(v),
                None => frame_in[k],
            };
        }
        for ff in &g.ffs {
            values[ff.q.index()] = state[ff.id.index()];
        }
        eval_comb(g, &mut values, forced);
        for ff in &g.ffs {
            state[ff.id.index()] = next_state(g, ff.id, &values);
        }
        frames.push(values);
    }
    frames
}

/// Three-valued logic for symbolic simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tern {
    Zero,
    One,
    X,
}

impl Tern {
    pub fn from_bool(v: bool) -> Self {
        if v {
            Tern::One
        } else {
            Tern::Zero
        }
    }

    pub fn known(self) -> Option<bool> {
        match self {
            Tern::Zero => Some(false),
            Tern::One => Some(true),
            Tern::X => None,
        }
    }

    fn not(self) -> Self {
        match self {
            Tern::Zero => Tern::One,
            Tern::One => Tern::Zero,
            Tern::X => Tern::X,
        }
    }
}

pub fn eval_ternary(kind: CellKind, ins: &[Tern]) -> Tern {
    let and = |ins: &[Tern]| {
        if ins.contains(&Tern::Zero) {
            Tern::Zero
        } else if ins.contains(&Tern::X) {
            Tern::X
        } else {
            Tern::One
        }
    };
    let or = |ins: &[Tern]| {
        if ins.contains(&Tern::One) {
            Tern::One
        } else if ins.contains(&Tern::X) {
            Tern::X
        } else {
            Tern::Zero
        }
    };
    let xor = |ins: &[Tern]| {
        ins.iter()
            .try_fold(false, |acc, t| t.known().map(|v| acc ^ v))
            .map_or(Tern::X, Tern::from_bool)
    };
    match kind {
        CellKind::And => and(ins),
        CellKind::Nand => and(ins).not(),
        CellKind::Or => or(ins),
        CellKind::Nor => or(ins).not(),
        CellKind::Xor => xor(ins),
        CellKind::Xnor => xor(ins).not(),
        CellKind::Not => ins[0].not(),
        CellKind::Buf => ins[0],
        CellKind::Mux2 => match ins[0] {
            Tern::Zero => ins[1],
            Tern::One => ins[2],
            Tern::X if ins[1] == ins[2] => ins[1],
            Tern::X => Tern::X,
        },
    }
}

/// Ternary evaluation of one frame; source nets must be set by the caller.
pub fn eval_comb_ternary(g: &CircuitGraph, values: &mut [Tern]) {
    for n in &g.nets {
        if let Some(Driver::Const(v)) = n.driver {
            values[n.id.index()] = Tern::from_bool(v);
        }
    }
    let mut buf = Vec::with_capacity(4);
    for &c in g.topo_order() {
        let cell = g.cell(c);
        buf.clear();
        buf.extend(cell.inputs.iter().map(|&i| values[i.index()]));
        values[cell.output.index()] = eval_ternary(cell.kind, &buf);
    }
}

impl Logic for Tern {
    fn konst(v: bool) -> Self {
        Tern::from_bool(v)
    }
    fn gate(kind: CellKind, inputs: &[Self]) -> Self {
        eval_ternary(kind, inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen;
    use crate::netlist::parse_netlist;

    #[test]
    fn counter_counts() {
        let g = parse_netlist(&benchgen::counter_netlist(3)).unwrap();
        let state0 = vec![false; g.ffs.len()];
        let inputs = vec![vec![true; g.inputs.len()]; 10];
        let frames = run_sequence::<bool>(&g, &state0, &inputs, None);
        let read = |f: &Vec<bool>| {
            (0..3).fold(0, |acc, i| {
                let ff = g.ff_by_name(&format!("c{i}")).unwrap();
                acc | (f[g.ff(ff).q.index()] as u32) << i
            })
        };
        let seq: Vec<u32> = frames.iter().map(read).collect();
        assert_eq!(seq, [0, 1, 2, 3, 4, 5, 6, 7, 0, 1]);
    }

    #[test]
    fn word_and_bool_agree() {
        let g = parse_netlist(benchgen::C17).unwrap();
        for m in 0u32..32 {
            let ins: Vec<bool> = (0..5).map(|i| m >> i & 1 == 1).collect();
            let w: Vec<u64> = ins.iter().map(|&b| u64::konst(b)).collect();
            let fb = run_sequence::<bool>(&g, &[], &[ins], None);
            let fw = run_sequence::<u64>(&g, &[], &[w], None);
            for n in &g.nets {
                assert_eq!(u64::konst(fb[0][n.id.index()]), fw[0][n.id.index()]);
            }
        }
    }

    #[test]
    fn ternary_controlling_values() {
        use Tern::*;
        assert_eq!(eval_ternary(CellKind::And, &[Zero, X]), Zero);
        assert_eq!(eval_ternary(CellKind::Nand, &[Zero, X]), One);
        assert_eq!(eval_ternary(CellKind::Or, &[One, X]), One);
        assert_eq!(eval_ternary(CellKind::Xor, &[One, X]), X);
        assert_eq!(eval_ternary(CellKind::Mux2, &[X, One, One]), One);
        assert_eq!(eval_ternary(CellKind::Mux2, &[X, Zero, One]), X);
    }

    #[test]
    fn forced_net_cuts_driver() {
        let g = parse_netlist(benchgen::C17).unwrap();
        let n10 = g.net_by_name("N10").unwrap();
        let frames = run_sequence::<bool>(&g, &[], &[vec![true; 5]], Some((n10, true)));
        assert!(frames[0][n10.index()]);
    }
}
