//! Exhaustive two-run taint oracle for small circuits.
//!
//! The cut net is forced to 0 in one run and to 1 in the other; every free
//! stimulus bit (data inputs per frame, scan loads, power-up values of
//! non-resettable elements) is enumerated 64 assignments at a time. A flow
//! exists iff some assignment makes a probe differ between the runs within
//! the frame bound. This shares only the cycle semantics of [`crate::sim`]
//! with the ATPG engine.

use thiserror::Error;

use crate::netlist::{CircuitGraph, FfId, NetId, Point, ScanConfig};
use crate::sim::{self, Logic};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("{0} free stimulus bits exceed the exhaustive limit of {1}")]
    TooLarge(usize, usize),
}

pub const MAX_FREE_BITS: usize = 26;

/// What the oracle watches in each frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    /// A net value in any frame.
    Net(NetId),
    /// The value a flip-flop captures at the end of any frame.
    Capture(FfId),
}

/// Probes for a set of observe points under a scan configuration. Masked
/// points and non-scan flip-flops contribute nothing.
pub fn probes_for(g: &CircuitGraph, scan: &ScanConfig, points: &[Point]) -> Vec<Probe> {
    points
        .iter()
        .filter(|&&p| scan.is_observable(g, p))
        .map(|&p| match p {
            Point::Output(n) | Point::Input(n) => Probe::Net(n),
            Point::Ff(f) => Probe::Capture(f),
        })
        .collect()
}

/// Whether some stimulus of at most `depth` frames distinguishes the two
/// values of `cut` at one of the probes.
pub fn two_run_differs(
    g: &CircuitGraph,
    cut: NetId,
    probes: &[Probe],
    scan: &ScanConfig,
    depth: usize,
) -> Result<bool, OracleError> {
    let held = sim::held_inputs(g);
    let free_pis: Vec<usize> = g
        .inputs
        .iter()
        .enumerate()
        .filter(|(_, &n)| held[n.index()].is_none())
        .map(|(k, _)| k)
        .collect();
    let free_init: Vec<FfId> = g
        .ffs
        .iter()
        .filter(|f| scan.is_scan(f.id) || !sim::has_fixed_init(g, f.id))
        .map(|f| f.id)
        .collect();
    let nbits = free_pis.len() * depth + free_init.len();
    if nbits > MAX_FREE_BITS {
        return Err(OracleError::TooLarge(nbits, MAX_FREE_BITS));
    }
    if probes.is_empty() || depth == 0 {
        return Ok(false);
    }
    const LANES: [u64; 6] = [
        0xAAAA_AAAA_AAAA_AAAA,
        0xCCCC_CCCC_CCCC_CCCC,
        0xF0F0_F0F0_F0F0_F0F0,
        0xFF00_FF00_FF00_FF00,
        0xFFFF_0000_FFFF_0000,
        0xFFFF_FFFF_0000_0000,
    ];
    let lane_bits = nbits.min(6);
    let valid_mask: u64 = if lane_bits == 6 {
        !0
    } else {
        (1u64 << (1 << lane_bits)) - 1
    };
    let blocks: u64 = 1 << (nbits - lane_bits);
    for block in 0..blocks {
        let bit = |j: usize| -> u64 {
            if j < lane_bits {
                LANES[j]
            } else {
                u64::konst(block >> (j - lane_bits) & 1 == 1)
            }
        };
        let mut j = 0;
        let mut state0 = vec![0u64; g.ffs.len()];
        for f in &g.ffs {
            state0[f.id.index()] = sim::initial_value(g, f.id, 0u64);
        }
        for &f in &free_init {
            state0[f.index()] = bit(j);
            j += 1;
        }
        let mut inputs = vec![vec![0u64; g.inputs.len()]; depth];
        for frame in inputs.iter_mut() {
            for &k in &free_pis {
                frame[k] = bit(j);
                j += 1;
            }
        }
        let r0 = sim::run_sequence(g, &state0, &inputs, Some((cut, 0u64)));
        let r1 = sim::run_sequence(g, &state0, &inputs, Some((cut, !0u64)));
        for t in 0..depth {
            for p in probes {
                let diff = match *p {
                    Probe::Net(n) => r0[t][n.index()] ^ r1[t][n.index()],
                    Probe::Capture(f) => {
                        sim::next_state(g, f, &r0[t]) ^ sim::next_state(g, f, &r1[t])
                    }
                };
                if diff & valid_mask != 0 {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{self, C17};
    use crate::netlist::parse_netlist;

    #[test]
    fn c17_structural_and_functional_flows() {
        let g = parse_netlist(C17).unwrap();
        let scan = ScanConfig::new();
        let n1 = g.net_by_name("N1").unwrap();
        let n22 = g.net_by_name("N22").unwrap();
        let n23 = g.net_by_name("N23").unwrap();
        assert!(two_run_differs(&g, n1, &[Probe::Net(n22)], &scan, 1).unwrap());
        assert!(!two_run_differs(&g, n1, &[Probe::Net(n23)], &scan, 1).unwrap());
    }

    #[test]
    fn shift_register_needs_depth() {
        let g = parse_netlist(&benchgen::shift_register_netlist(3)).unwrap();
        let din = g.net_by_name("din").unwrap();
        let dout = g.net_by_name("dout").unwrap();
        let scan = ScanConfig::new();
        assert!(!two_run_differs(&g, din, &[Probe::Net(dout)], &scan, 3).unwrap());
        assert!(two_run_differs(&g, din, &[Probe::Net(dout)], &scan, 4).unwrap());
        let s0 = g.ff_by_name("s0").unwrap();
        let full = ScanConfig::full_scan(&g);
        assert!(two_run_differs(&g, din, &[Probe::Capture(s0)], &full, 1).unwrap());
    }

    #[test]
    fn too_large_is_reported() {
        let g = parse_netlist(C17).unwrap();
        let n1 = g.net_by_name("N1").unwrap();
        assert!(matches!(
            two_run_differs(&g, n1, &[], &ScanConfig::new(), 6),
            Err(OracleError::TooLarge(30, _))
        ));
    }
}
