//! Confidentiality and integrity verification loops, and the classification
//! of reached points into valid and malicious ones.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atpg::{
    self, AtpgError, AtpgParams, AtpgStats, Detection, Observation, PathElement, PathStep,
    PropagationPath, Stimulus, Witness,
};
use crate::cone::{self, ConeError};
use crate::netlist::{CircuitGraph, Driver, FfId, NetId, Point, ScanConfig, SeqKind};
use crate::sat::{Cnf, SatResult, Sig};
use crate::trigger::TriggerReport;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IfsError {
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
    #[error("unknown net `{0}`")]
    UnknownNet(String),
    #[error("asset `{name}` is not a {expected:?} asset")]
    WrongKind { name: String, expected: AssetKind },
    #[error("report does not match the netlist: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Atpg(#[from] AtpgError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssetKind {
    Confidentiality,
    Integrity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    #[serde(skip)]
    pub net: NetId,
    pub label: String,
    pub kind: AssetKind,
}

impl Asset {
    /// Resolves a net or flip-flop name. `key0` also finds `key[0]`.
    pub fn resolve(g: &CircuitGraph, name: &str, kind: AssetKind) -> Result<Asset, IfsError> {
        let lookup = |n: &str| {
            g.net_by_name(n)
                .map(|id| (id, n.to_string()))
                .or_else(|| g.ff_by_name(n).map(|f| (g.ff(f).q, n.to_string())))
        };
        let found = lookup(name).or_else(|| {
            let digits = name.len() - name.trim_end_matches(|c: char| c.is_ascii_digit()).len();
            (digits > 0 && digits < name.len()).then(|| {
                let (base, idx) = name.split_at(name.len() - digits);
                lookup(&format!("{base}[{idx}]"))
            })?
        });
        let (net, label) = found.ok_or_else(|| IfsError::UnknownAsset(name.to_string()))?;
        Ok(Asset { net, label, kind })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub atpg: AtpgParams,
    pub max_levels: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            atpg: AtpgParams::default(),
            max_levels: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    Input,
    Output,
    FlipFlop,
}

/// Stimulus in report form: one character (`0`, `1`, `x`) per free input and
/// frame, plus the specified scan loads and power-up values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub inputs: Vec<String>,
    pub frames: Vec<String>,
    pub scan_load: BTreeMap<String, u8>,
    pub power_up: BTreeMap<String, u8>,
}

fn bit_char(v: Option<bool>) -> char {
    match v {
        Some(true) => '1',
        Some(false) => '0',
        None => 'x',
    }
}

impl StimulusRecord {
    pub fn from_stimulus(g: &CircuitGraph, s: &Stimulus) -> Self {
        let specified = |v: &[(FfId, Option<bool>)]| {
            v.iter()
                .filter_map(|&(f, b)| b.map(|b| (g.ff(f).name.clone(), b as u8)))
                .collect()
        };
        StimulusRecord {
            inputs: s
                .inputs
                .iter()
                .map(|&n| g.net_name(n).to_string())
                .collect(),
            frames: s
                .frames
                .iter()
                .map(|f| f.iter().map(|&b| bit_char(b)).collect())
                .collect(),
            scan_load: specified(&s.scan_load),
            power_up: specified(&s.power_up),
        }
    }

    pub fn to_stimulus(&self, g: &CircuitGraph) -> Result<Stimulus, IfsError> {
        let ff = |name: &String, v: u8| {
            g.ff_by_name(name)
                .map(|f| (f, Some(v != 0)))
                .ok_or_else(|| IfsError::Mismatch(format!("no flip-flop `{name}`")))
        };
        let scan_load = self
            .scan_load
            .iter()
            .map(|(n, &v)| ff(n, v))
            .collect::<Result<_, _>>()?;
        let power_up = self
            .power_up
            .iter()
            .map(|(n, &v)| ff(n, v))
            .collect::<Result<_, _>>()?;
        let inputs: Vec<NetId> = self
            .inputs
            .iter()
            .map(|n| {
                g.net_by_name(n)
                    .filter(|&id| g.is_input(id))
                    .ok_or_else(|| IfsError::Mismatch(format!("no input `{n}`")))
            })
            .collect::<Result<_, _>>()?;
        let frames = self
            .frames
            .iter()
            .map(|f| {
                if f.len() != inputs.len() {
                    return Err(IfsError::Mismatch("frame width".into()));
                }
                f.chars()
                    .map(|c| match c {
                        '0' => Ok(Some(false)),
                        '1' => Ok(Some(true)),
                        'x' => Ok(None),
                        _ => Err(IfsError::Mismatch(format!("bad stimulus character `{c}`"))),
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(Stimulus {
            scan_load,
            power_up,
            inputs,
            frames,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStepRecord {
    pub frame: usize,
    pub element: String,
    pub cell: String,
    pub from: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedPoint {
    pub name: String,
    pub kind: PointKind,
    pub level: usize,
    pub depth: usize,
    /// Frame in which the difference is observed.
    pub frame: usize,
    pub strict: bool,
    pub stimulus: StimulusRecord,
    pub path: Vec<PathStepRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub level: usize,
    pub points: Vec<ReportedPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaliciousReason {
    OutsideValidCone,
    ShallowDepth,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaliciousPoint {
    pub name: String,
    pub reason: MaliciousReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "none-found")]
    NoneFound,
    #[serde(rename = "Type I")]
    TypeI,
    #[serde(rename = "Type II")]
    TypeII,
    #[serde(rename = "both")]
    Both,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbandonedItem {
    pub name: String,
    pub level: usize,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub checks: u64,
    pub sat_calls: u64,
    pub decisions: u64,
    pub conflicts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub theta: f64,
    pub median: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub asset: Asset,
    /// Where differences are observed in integrity reports.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub observed_at: Option<String>,
    pub depth_bound: usize,
    pub levels: Vec<Level>,
    pub malicious: Vec<MaliciousPoint>,
    pub verdict: Verdict,
    pub abandoned: Vec<AbandonedItem>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_points: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub depth_analysis: Option<DepthSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trigger: Option<TriggerReport>,
    pub timing: Timing,
}

impl FlowReport {
    pub fn points(&self) -> impl Iterator<Item = &ReportedPoint> {
        self.levels.iter().flat_map(|l| l.points.iter())
    }

    pub fn point(&self, name: &str) -> Option<&ReportedPoint> {
        self.points().find(|p| p.name == name)
    }

    pub fn point_names(&self) -> BTreeSet<String> {
        self.points().map(|p| p.name.clone()).collect()
    }

    pub fn malicious_names(&self) -> BTreeSet<String> {
        self.malicious.iter().map(|m| m.name.clone()).collect()
    }

    fn update_verdict(&mut self) {
        let has = |r| self.malicious.iter().any(|m| m.reason == r);
        self.verdict = match (
            has(MaliciousReason::ShallowDepth),
            has(MaliciousReason::OutsideValidCone),
        ) {
            (false, false) => Verdict::NoneFound,
            (true, false) => Verdict::TypeI,
            (false, true) => Verdict::TypeII,
            (true, true) => Verdict::Both,
        };
    }

    /// Observation used for a reported point.
    pub fn observation(
        &self,
        g: &CircuitGraph,
        p: &ReportedPoint,
    ) -> Result<(NetId, Observation), IfsError> {
        let point = g
            .point_by_name(&p.name)
            .ok_or_else(|| IfsError::UnknownPoint(p.name.clone()))?;
        Ok(match self.asset.kind {
            AssetKind::Confidentiality => (self.asset.net, observation_of(g, point)),
            AssetKind::Integrity => (point_net(g, point), integrity_target(g, self.asset.net).0),
        })
    }

    /// Rebuilds the in-memory witness of a reported point.
    pub fn witness(
        &self,
        g: &CircuitGraph,
        p: &ReportedPoint,
    ) -> Result<(NetId, Witness), IfsError> {
        let (cut, observed) = self.observation(g, p)?;
        let steps = p
            .path
            .iter()
            .map(|s| {
                let element = match g.ff_by_name(&s.element) {
                    Some(f) if s.cell == "DFF" || s.cell == "DLATCH" => PathElement::Ff(f),
                    _ => PathElement::Cell(
                        g.cells
                            .iter()
                            .find(|c| c.name == s.element)
                            .map(|c| c.id)
                            .ok_or_else(|| {
                                IfsError::Mismatch(format!("no cell `{}`", s.element))
                            })?,
                    ),
                };
                let from = g
                    .net_by_name(&s.from)
                    .ok_or_else(|| IfsError::Mismatch(format!("no net `{}`", s.from)))?;
                Ok(PathStep {
                    frame: s.frame,
                    element,
                    from,
                })
            })
            .collect::<Result<_, IfsError>>()?;
        Ok((
            cut,
            Witness {
                stimulus: p.stimulus.to_stimulus(g)?,
                frame: p.frame,
                observed,
                path: PropagationPath {
                    steps,
                    depth: p.depth,
                    strict: p.strict,
                },
            },
        ))
    }
}

fn point_kind(p: Point) -> PointKind {
    match p {
        Point::Input(_) => PointKind::Input,
        Point::Output(_) => PointKind::Output,
        Point::Ff(_) => PointKind::FlipFlop,
    }
}

fn point_net(g: &CircuitGraph, p: Point) -> NetId {
    match p {
        Point::Input(n) | Point::Output(n) => n,
        Point::Ff(f) => g.ff(f).q,
    }
}

fn observation_of(g: &CircuitGraph, p: Point) -> Observation {
    match p {
        Point::Ff(f) => Observation::Capture(f),
        other => Observation::Net(point_net(g, other)),
    }
}

/// Integrity observation of an asset, and the net whose fan-in holds the
/// control points: a register asset is observed at its capture.
fn integrity_target(g: &CircuitGraph, asset: NetId) -> (Observation, NetId) {
    match g.net(asset).driver {
        Some(Driver::Ff(f)) if g.ff(f).kind == SeqKind::Dff => (Observation::Capture(f), g.ff(f).d),
        _ => (Observation::Net(asset), asset),
    }
}

fn record(g: &CircuitGraph, p: Point, level: usize, w: &Witness) -> ReportedPoint {
    let path = w
        .path
        .steps
        .iter()
        .map(|s| {
            let (element, cell) = match s.element {
                PathElement::Cell(c) => {
                    (g.cell(c).name.clone(), g.cell(c).kind.keyword().to_string())
                }
                PathElement::Ff(f) => {
                    let ff = g.ff(f);
                    let kw = if ff.kind == SeqKind::Latch {
                        "DLATCH"
                    } else {
                        "DFF"
                    };
                    (ff.name.clone(), kw.to_string())
                }
            };
            PathStepRecord {
                frame: s.frame,
                element,
                cell,
                from: g.net_name(s.from).to_string(),
            }
        })
        .collect();
    ReportedPoint {
        name: g.point_name(p),
        kind: point_kind(p),
        level,
        depth: w.path.depth,
        frame: w.frame,
        strict: w.path.strict,
        stimulus: StimulusRecord::from_stimulus(g, &w.stimulus),
        path,
    }
}

struct LevelLoop<'a> {
    g: &'a CircuitGraph,
    params: &'a VerifyParams,
    report: FlowReport,
    visited: BTreeSet<Point>,
}

impl<'a> LevelLoop<'a> {
    fn new(g: &'a CircuitGraph, asset: &Asset, params: &'a VerifyParams) -> Self {
        LevelLoop {
            g,
            params,
            report: FlowReport {
                asset: asset.clone(),
                observed_at: None,
                depth_bound: params.atpg.depth,
                levels: Vec::new(),
                malicious: Vec::new(),
                verdict: Verdict::NoneFound,
                abandoned: Vec::new(),
                valid_points: None,
                depth_analysis: None,
                trigger: None,
                timing: Timing::default(),
            },
            visited: BTreeSet::new(),
        }
    }

    /// Runs the level iteration. `check` decides one point under the
    /// level's scan configuration; `expand` gives the next-level candidates
    /// of a confirmed flip-flop.
    fn run(
        mut self,
        first: BTreeSet<Point>,
        check: impl Fn(&ScanConfig, Point) -> Result<(Detection, AtpgStats), AtpgError> + Sync,
        expand: impl Fn(FfId) -> Result<BTreeSet<Point>, ConeError>,
    ) -> Result<FlowReport, IfsError> {
        let g = self.g;
        let mut scan = ScanConfig::full_scan(g);
        let mut candidates = first;
        let mut level = 1;
        while !candidates.is_empty() && level <= self.params.max_levels {
            let mut pts = Vec::new();
            let mut next = BTreeSet::new();
            for p in std::mem::take(&mut candidates) {
                if !self.visited.insert(p) {
                    continue;
                }
                if let Point::Ff(f) = p {
                    if let Some(&(_, reason)) = g.unanalyzable.iter().find(|(u, _)| *u == f) {
                        self.report.abandoned.push(AbandonedItem {
                            name: g.ff(f).name.clone(),
                            level,
                            reason: reason.to_string(),
                        });
                        next.extend(expand(f)?);
                        continue;
                    }
                }
                pts.push(p);
            }
            let results: Vec<_> = pts.par_iter().map(|&p| check(&scan, p)).collect();
            let mut points = Vec::new();
            let mut confirmed = Vec::new();
            for (&p, r) in pts.iter().zip(results) {
                let (det, stats) = r?;
                self.report.timing.checks += 1;
                self.report.timing.sat_calls += stats.sat_calls;
                self.report.timing.decisions += stats.decisions;
                self.report.timing.conflicts += stats.conflicts;
                match det {
                    Detection::Detected(w) => {
                        points.push(record(g, p, level, &w));
                        if let Point::Ff(f) = p {
                            confirmed.push(f);
                            next.extend(expand(f)?);
                        }
                    }
                    Detection::Abandoned => self.report.abandoned.push(AbandonedItem {
                        name: g.point_name(p),
                        level,
                        reason: "search budget exhausted".into(),
                    }),
                    Detection::Undetectable => {}
                }
            }
            for f in confirmed {
                scan = scan.remove_scan_ability(g, f).expect("known flip-flop");
            }
            if !points.is_empty() {
                self.report.levels.push(Level { level, points });
            }
            candidates = next;
            level += 1;
        }
        Ok(self.report)
    }
}

fn check_asset(g: &CircuitGraph, asset: &Asset) -> Result<(), IfsError> {
    if asset.net.index() >= g.nets.len()
        || g.net_name(asset.net) != asset.label && g.ff_by_name(&asset.label).is_none()
    {
        return Err(IfsError::UnknownAsset(asset.label.clone()));
    }
    Ok(())
}

/// Observe points reached by the asset, level by level. All flip-flops
/// start scan-enabled; each confirmed flip-flop loses scan ability after its
/// level and contributes its own fan-out endpoints to the next level. Every
/// check observes exactly one point, the others being masked.
pub fn confidentiality_verify(
    g: &CircuitGraph,
    asset: &Asset,
    params: &VerifyParams,
) -> Result<FlowReport, IfsError> {
    if asset.kind != AssetKind::Confidentiality {
        return Err(IfsError::WrongKind {
            name: asset.label.clone(),
            expected: AssetKind::Confidentiality,
        });
    }
    check_asset(g, asset)?;
    let first = cone::fanout_endpoints(g, asset.net)?.endpoints;
    let check = |scan: &ScanConfig, p: Point| {
        let out = atpg::detect_flow(g, scan, asset.net, &[observation_of(g, p)], &params.atpg)?;
        Ok((out.detection, out.stats))
    };
    let expand = |f: FfId| cone::fanout_endpoints(g, g.ff(f).q).map(|c| c.endpoints);
    LevelLoop::new(g, asset, params).run(first, check, expand)
}

/// Control points from which the asset can be set, level by level. Each
/// control point is cut from its driver and must change the asset (or, for a
/// register asset, the value it captures).
pub fn integrity_verify(
    g: &CircuitGraph,
    asset: &Asset,
    params: &VerifyParams,
) -> Result<FlowReport, IfsError> {
    if asset.kind != AssetKind::Integrity {
        return Err(IfsError::WrongKind {
            name: asset.label.clone(),
            expected: AssetKind::Integrity,
        });
    }
    check_asset(g, asset)?;
    let (obs, root) = integrity_target(g, asset.net);
    let first = cone::fanin_startpoints(g, root)?.endpoints;
    let check = |scan: &ScanConfig, p: Point| {
        let out = atpg::detect_flow(g, scan, point_net(g, p), &[obs], &params.atpg)?;
        Ok((out.detection, out.stats))
    };
    let expand = |f: FfId| cone::fanin_startpoints(g, g.ff(f).d).map(|c| c.endpoints);
    let mut report = LevelLoop::new(g, asset, params).run(first, check, expand)?;
    report.observed_at = Some(match obs {
        Observation::Capture(f) => g.ff(f).name.clone(),
        Observation::Net(n) => g.net_name(n).to_string(),
    });
    Ok(report)
}

/// Resolves point names (`ct[7:0]` ranges allowed) to points.
pub fn resolve_points(g: &CircuitGraph, names: &[String]) -> Result<BTreeSet<Point>, IfsError> {
    let mut out = BTreeSet::new();
    for raw in names {
        for name in expand_range(raw) {
            let p = g.point_by_name(&name).ok_or(IfsError::UnknownPoint(name))?;
            out.insert(p);
        }
    }
    Ok(out)
}

/// `ct[7:0]` expands to `ct[7]`, ..., `ct[0]`; other names pass through.
pub fn expand_range(name: &str) -> Vec<String> {
    let parsed = name.strip_suffix(']').and_then(|s| {
        let (base, range) = s.rsplit_once('[')?;
        let (hi, lo) = range.split_once(':')?;
        Some((
            base,
            hi.trim().parse::<i64>().ok()?,
            lo.trim().parse::<i64>().ok()?,
        ))
    });
    match parsed {
        Some((base, hi, lo)) => {
            let step = if hi >= lo { -1 } else { 1 };
            let mut v = Vec::new();
            let mut i = hi;
            loop {
                v.push(format!("{base}[{i}]"));
                if i == lo {
                    break;
                }
                i += step;
            }
            v
        }
        None => vec![name.to_string()],
    }
}

/// Flags reported points outside the structural cone of the valid points:
/// the multi-cycle fan-in of valid observe points for confidentiality, the
/// multi-cycle fan-out of valid control points for integrity.
pub fn intersect_analysis(
    g: &CircuitGraph,
    report: &mut FlowReport,
    valid: &BTreeSet<Point>,
) -> Result<(), IfsError> {
    let cone = match report.asset.kind {
        AssetKind::Confidentiality => cone::transitive_fanin_elements(g, valid)?,
        AssetKind::Integrity => cone::transitive_fanout_elements(g, valid)?,
    };
    let mut flagged = Vec::new();
    for p in report.points() {
        let point = g
            .point_by_name(&p.name)
            .ok_or_else(|| IfsError::UnknownPoint(p.name.clone()))?;
        let inside = valid.contains(&point) || matches!(point, Point::Ff(f) if cone.contains(&f));
        if !inside {
            flagged.push(p.name.clone());
        }
    }
    report
        .malicious
        .retain(|m| m.reason != MaliciousReason::OutsideValidCone);
    report
        .malicious
        .extend(flagged.into_iter().map(|name| MaliciousPoint {
            name,
            reason: MaliciousReason::OutsideValidCone,
        }));
    report.malicious.sort();
    report.valid_points = Some(valid.iter().map(|&p| g.point_name(p)).collect());
    report.update_verdict();
    Ok(())
}

fn median(mut v: Vec<usize>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    })
}

/// Flags reported points whose propagation depth is below `theta` times the
/// median depth of the points not already flagged as outside the valid cone.
pub fn depth_analysis(report: &mut FlowReport, theta: f64) {
    report
        .malicious
        .retain(|m| m.reason != MaliciousReason::ShallowDepth);
    let outside: BTreeSet<String> = report.malicious_names();
    let candidates: Vec<(String, usize)> = report
        .points()
        .filter(|p| !outside.contains(&p.name))
        .map(|p| (p.name.clone(), p.depth))
        .collect();
    let med = median(candidates.iter().map(|&(_, d)| d).collect());
    let threshold = med.map(|m| theta * m);
    if let Some(th) = threshold {
        for (name, d) in candidates {
            if (d as f64) < th {
                report.malicious.push(MaliciousPoint {
                    name,
                    reason: MaliciousReason::ShallowDepth,
                });
            }
        }
    }
    report.malicious.sort();
    report.depth_analysis = Some(DepthSummary {
        theta,
        median: med,
        threshold,
    });
    report.update_verdict();
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "result")]
pub enum PropertyResult {
    /// An input assignment under which the assertion fails.
    Violated {
        witness: BTreeMap<String, bool>,
    },
    Holds,
}

/// Single-frame check of `never ((s0 == o) || (!s0 == o))`. Flip-flop
/// outputs are free.
pub fn check_equality_property(
    g: &CircuitGraph,
    s0: NetId,
    o: NetId,
) -> Result<PropertyResult, IfsError> {
    for n in [s0, o] {
        if n.index() >= g.nets.len() {
            return Err(IfsError::UnknownNet(format!("net#{}", n.0)));
        }
    }
    let mut cnf = Cnf::new();
    let mut vals = vec![Sig::Const(false); g.nets.len()];
    let mut free = Vec::new();
    for n in &g.nets {
        match n.driver {
            Some(Driver::Input) | Some(Driver::Ff(_)) => {
                let s = cnf.fresh();
                vals[n.id.index()] = s;
                free.push((n.id, s));
            }
            Some(Driver::Const(v)) => vals[n.id.index()] = Sig::Const(v),
            _ => {}
        }
    }
    for &c in g.topo_order() {
        let cell = g.cell(c);
        let ins: Vec<Sig> = cell.inputs.iter().map(|i| vals[i.index()]).collect();
        vals[cell.output.index()] = cnf.gate(cell.kind, &ins);
    }
    let (a, b) = (vals[s0.index()], vals[o.index()]);
    let same = cnf.xor(a, b);
    let same = !same;
    let diff = cnf.xor(!a, b);
    let diff = !diff;
    let either = cnf.or(&[same, diff]);
    cnf.clause(&[either]);
    Ok(match cnf.solver.solve(None) {
        SatResult::Sat => PropertyResult::Violated {
            witness: free
                .into_iter()
                .map(|(n, s)| (g.net_name(n).to_string(), cnf.value(s)))
                .collect(),
        },
        _ => PropertyResult::Holds,
    })
}

#[cfg(test)]
mod tests;
