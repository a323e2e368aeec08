//! Hardware Trojan detection through information-flow security verification
//! of gate-level netlists.
//!
//! An asset net is modeled as a stuck-at fault and a bounded partial-scan
//! sequential ATPG search looks for stimuli that make the asset observable at
//! (or controllable from) observe/control points. The reached points are then
//! classified against the designer's declared valid points, and trigger
//! conditions are recovered from the witnesses.

pub mod atpg;
pub mod benchgen;
pub mod cli;
pub mod cone;
pub mod ifs;
pub mod netlist;
pub mod oracle;
pub mod sat;
pub mod sim;
pub mod trigger;

pub use netlist::{parse_netlist, CircuitGraph, NetId, Point, ScanConfig};
