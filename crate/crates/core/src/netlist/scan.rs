use std::collections::BTreeSet;

use thiserror::Error;

use super::{CircuitGraph, FfId, Point};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScanError {
    #[error("unknown flip-flop id {0}")]
    UnknownFf(u32),
    #[error("flip-flop `{0}` cannot be scanned (latch or uncontrollable)")]
    NotScannable(String),
    #[error("point `{0}` is neither a scan flip-flop nor a primary output")]
    NotMaskable(String),
}

/// Virtual partial-scan overlay: which flip-flops are scan-enabled and which
/// observe points have their capture masked. Only membership matters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ScanConfig {
    scan: BTreeSet<FfId>,
    masked: BTreeSet<Point>,
}

impl ScanConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every flip-flop that can be scanned, nothing masked.
    pub fn full_scan(graph: &CircuitGraph) -> Self {
        ScanConfig {
            scan: graph.scannable_ffs().into_iter().collect(),
            masked: BTreeSet::new(),
        }
    }

    fn check_ff(graph: &CircuitGraph, ff: FfId) -> Result<(), ScanError> {
        if ff.index() >= graph.ffs.len() {
            return Err(ScanError::UnknownFf(ff.0));
        }
        if graph.is_unanalyzable(ff) {
            return Err(ScanError::NotScannable(graph.ff(ff).name.clone()));
        }
        Ok(())
    }

    pub fn add_scan_ability(
        &self,
        graph: &CircuitGraph,
        ffs: impl IntoIterator<Item = FfId>,
    ) -> Result<Self, ScanError> {
        let mut out = self.clone();
        for ff in ffs {
            Self::check_ff(graph, ff)?;
            out.scan.insert(ff);
        }
        Ok(out)
    }

    /// Removing scan ability also drops any capture mask on the flip-flop,
    /// since a non-scan flip-flop is not an observe point.
    pub fn remove_scan_ability(&self, graph: &CircuitGraph, ff: FfId) -> Result<Self, ScanError> {
        if ff.index() >= graph.ffs.len() {
            return Err(ScanError::UnknownFf(ff.0));
        }
        let mut out = self.clone();
        out.scan.remove(&ff);
        out.masked.remove(&Point::Ff(ff));
        Ok(out)
    }

    pub fn mask(
        &self,
        graph: &CircuitGraph,
        points: impl IntoIterator<Item = Point>,
    ) -> Result<Self, ScanError> {
        let mut out = self.clone();
        for p in points {
            let ok = match p {
                Point::Ff(f) => f.index() < graph.ffs.len() && self.scan.contains(&f),
                Point::Output(n) => n.index() < graph.nets.len() && graph.is_output(n),
                Point::Input(_) => false,
            };
            if !ok {
                let name = match p {
                    Point::Ff(f) if f.index() >= graph.ffs.len() => {
                        return Err(ScanError::UnknownFf(f.0))
                    }
                    Point::Input(n) | Point::Output(n) if n.index() >= graph.nets.len() => {
                        format!("net#{}", n.0)
                    }
                    _ => graph.point_name(p),
                };
                return Err(ScanError::NotMaskable(name));
            }
            out.masked.insert(p);
        }
        Ok(out)
    }

    pub fn unmask(&self, point: Point) -> Self {
        let mut out = self.clone();
        out.masked.remove(&point);
        out
    }

    pub fn is_scan(&self, ff: FfId) -> bool {
        self.scan.contains(&ff)
    }

    pub fn is_masked(&self, p: Point) -> bool {
        self.masked.contains(&p)
    }

    pub fn scan_enabled(&self) -> &BTreeSet<FfId> {
        &self.scan
    }

    pub fn masked(&self) -> &BTreeSet<Point> {
        &self.masked
    }

    /// Whether `p` may currently serve as an observe point.
    pub fn is_observable(&self, graph: &CircuitGraph, p: Point) -> bool {
        let base = match p {
            Point::Output(n) => graph.is_output(n),
            Point::Ff(f) => self.scan.contains(&f),
            Point::Input(_) => false,
        };
        base && !self.masked.contains(&p)
    }
}
