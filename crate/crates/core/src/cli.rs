//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::atpg::AtpgParams;
use crate::benchgen::{self, BenchError, Core, FixtureSpec, Payload, TriggerSpec};
use crate::ifs::{
    self, Asset, AssetKind, FlowReport, IfsError, PropertyResult, Verdict, VerifyParams,
};
use crate::netlist::{self, CircuitGraph, NetlistError};
use crate::trigger::{self, TriggerError, TriggerReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Netlist { path: PathBuf, source: NetlistError },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "ifsguard",
    version,
    about = "Gate-level information-flow checks for hardware Trojan detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Where can the asset be observed? Flags points outside the valid cone
    /// and shallow paths, then recovers the trigger.
    VerifyConf(VerifyArgs),
    /// Which control points can change the asset?
    VerifyInt(VerifyArgs),
    /// Recover trigger conditions from a saved report.
    ExtractTrigger(ExtractArgs),
    /// Single-frame equality assertion between two nets.
    CheckProperty(PropertyArgs),
    /// Write a synthetic fixture and its manifest.
    GenBench(BenchArgs),
    /// List latches and uncontrollable flip-flops.
    Lint(LintArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    /// Asset net or flip-flop; ranges like `key[7:0]` expand.
    #[arg(long, required = true)]
    pub asset: Vec<String>,
    /// Valid observe points (comma separated, ranges allowed).
    #[arg(long = "valid-out", value_delimiter = ',')]
    pub valid_out: Vec<String>,
    /// Valid control points (comma separated, ranges allowed).
    #[arg(long = "valid-in", value_delimiter = ',')]
    pub valid_in: Vec<String>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Shallow-path ratio against the median depth.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Upper bound on recovered trigger states.
    #[arg(long, default_value_t = trigger::DEFAULT_STATE_BOUND)]
    pub state_bound: usize,
    #[arg(long)]
    pub no_trigger: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Time-frame bound.
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    /// Solver decisions per check.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: u64,
    /// Double the bound on a miss.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 32)]
    pub max_depth: usize,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Accepted for reproducibility; the search itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SearchArgs {
    fn params(&self) -> VerifyParams {
        VerifyParams {
            atpg: AtpgParams {
                depth: self.depth,
                adaptive: self.adaptive,
                max_depth: self.max_depth.max(self.depth),
                budget: self.budget,
                ..AtpgParams::default()
            },
            ..VerifyParams::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    /// Report written by `verify-conf` or `verify-int`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = trigger::DEFAULT_STATE_BOUND)]
    pub state_bound: usize,
}

#[derive(Debug, Args)]
pub struct PropertyArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub sink: String,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoreArg {
    Cipher,
    Processor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TriggerArg {
    None,
    AlwaysOn,
    SpecificInput,
    Counter,
    Fsm,
    FsmCounter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PayloadArg {
    None,
    BypassMux,
    XorLfsrLeak,
    IsolatedShiftRegister,
    ControlHijack,
    ScanEnableHijack,
    KeyReplacement,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = CoreArg::Cipher)]
    pub core: CoreArg,
    #[arg(long, value_enum, default_value_t = TriggerArg::None)]
    pub trigger: TriggerArg,
    #[arg(long, value_enum, default_value_t = PayloadArg::None)]
    pub payload: PayloadArg,
    /// Counter width.
    #[arg(long, default_value_t = 4)]
    pub width: u32,
    /// Counter trigger value.
    #[arg(long, default_value_t = 10)]
    pub value: u64,
    /// Sequence length of an FSM trigger.
    #[arg(long, default_value_t = 4)]
    pub patterns: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub plant_latch: bool,
    #[arg(long)]
    pub plant_uncontrollable: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LintArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<CircuitGraph, CliError> {
    netlist::parse_netlist(&read(path)?).map_err(|source| CliError::Netlist {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn expand_all(names: &[String]) -> Vec<String> {
    names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .flat_map(ifs::expand_range)
        .collect()
}

/// One array entry per asset, or the bare object for a single asset.
fn write_reports(path: &Path, reports: &[FlowReport]) -> Result<(), CliError> {
    match reports {
        [one] => write_json(path, one),
        many => write_json(path, many),
    }
}

fn exit_code(reports: &[FlowReport]) -> i32 {
    if reports.iter().any(|r| r.verdict != Verdict::NoneFound) {
        EXIT_VIOLATION
    } else if reports.iter().any(|r| !r.abandoned.is_empty()) {
        EXIT_INCOMPLETE
    } else {
        EXIT_OK
    }
}

fn print_trigger(out: &mut dyn Write, t: &TriggerReport) -> std::io::Result<()> {
    writeln!(out, "  trigger: {}", t.kind)?;
    for c in &t.conditions {
        let at = c.cycle.map(|k| format!(" @ cycle {k}")).unwrap_or_default();
        match c.value {
            Some(v) => writeln!(out, "    {} = {v} (0x{v:x}){at}", c.bus)?,
            None => {
                let bits: Vec<String> = c
                    .bits
                    .iter()
                    .map(|(i, b)| format!("[{i}]={}", *b as u8))
                    .collect();
                writeln!(out, "    {} {}{at}", c.bus, bits.join(" "))?
            }
        }
    }
    if !t.state_registers.is_empty() {
        writeln!(out, "    state registers: {}", t.state_registers.join(" "))?;
    }
    if let Some(seq) = &t.sequence {
        writeln!(out, "    sequence ({} cycles):", seq.cycles())?;
        for s in &seq.steps {
            let ins = if s.inputs.is_empty() {
                "any input".to_string()
            } else {
                let mut buses: Vec<String> = Vec::new();
                let mut seen = std::collections::BTreeSet::new();
                for n in s.inputs.keys() {
                    let (b, _) = trigger::bus_of(n);
                    if seen.insert(b.clone()) {
                        buses.push(match s.bus_value(&b) {
                            Some(v) => format!("{b}=0x{v:x}"),
                            None => s
                                .inputs
                                .iter()
                                .filter(|(k, _)| trigger::bus_of(k).0 == b)
                                .map(|(k, v)| format!("{k}={}", *v as u8))
                                .collect::<Vec<_>>()
                                .join(" "),
                        });
                    }
                }
                buses.join(" ")
            };
            writeln!(out, "      {ins} x{}", s.repeat)?;
        }
    }
    if t.partial {
        writeln!(out, "    state graph truncated at the state bound")?;
    }
    Ok(())
}

fn print_report(out: &mut dyn Write, r: &FlowReport, secs: f64) -> std::io::Result<()> {
    let kind = match r.asset.kind {
        AssetKind::Confidentiality => "confidentiality",
        AssetKind::Integrity => "integrity",
    };
    let total: usize = r.levels.iter().map(|l| l.points.len()).sum();
    writeln!(out, "asset {} ({kind}), D={}", r.asset.label, r.depth_bound)?;
    if let Some(o) = &r.observed_at {
        writeln!(out, "  observed at {o}")?;
    }
    for l in &r.levels {
        let names: Vec<String> = l
            .points
            .iter()
            .map(|p| format!("{}(d={})", p.name, p.depth))
            .collect();
        writeln!(
            out,
            "  level {}: {} point(s): {}",
            l.level,
            l.points.len(),
            names.join(" ")
        )?;
    }
    writeln!(out, "  reached points: {total}")?;
    if r.malicious.is_empty() {
        writeln!(out, "  malicious points: none")?;
    } else {
        writeln!(out, "  malicious points: {}", r.malicious.len())?;
        for m in &r.malicious {
            let why = match m.reason {
                ifs::MaliciousReason::OutsideValidCone => "outside valid cone",
                ifs::MaliciousReason::ShallowDepth => "shallow path",
            };
            writeln!(out, "    {} ({why})", m.name)?;
        }
    }
    for a in &r.abandoned {
        writeln!(
            out,
            "  abandoned {} at level {}: {}",
            a.name, a.level, a.reason
        )?;
    }
    if let Some(t) = &r.trigger {
        print_trigger(out, t)?;
    }
    let verdict = serde_json::to_value(r.verdict).ok();
    let verdict = verdict.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
    writeln!(out, "  verdict: {verdict}")?;
    writeln!(out, "  checks: {}, time: {secs:.3} s", r.timing.checks)
}

fn verify(
    args: &VerifyArgs,
    kind: AssetKind,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let g = load(&args.netlist)?;
    let assets = expand_all(&args.asset);
    let valid_names = match kind {
        AssetKind::Confidentiality => {
            if !args.valid_in.is_empty() {
                return Err(CliError::Usage(
                    "verify-conf takes --valid-out, not --valid-in".into(),
                ));
            }
            expand_all(&args.valid_out)
        }
        AssetKind::Integrity => {
            if !args.valid_out.is_empty() {
                return Err(CliError::Usage(
                    "verify-int takes --valid-in, not --valid-out".into(),
                ));
            }
            expand_all(&args.valid_in)
        }
    };
    let valid = if valid_names.is_empty() {
        None
    } else {
        Some(ifs::resolve_points(&g, &valid_names)?)
    };
    let params = args.search.params();
    let mut reports = Vec::new();
    for name in &assets {
        let start = Instant::now();
        let asset = Asset::resolve(&g, name, kind)?;
        let mut r = match kind {
            AssetKind::Confidentiality => ifs::confidentiality_verify(&g, &asset, &params)?,
            AssetKind::Integrity => ifs::integrity_verify(&g, &asset, &params)?,
        };
        if let Some(v) = &valid {
            ifs::intersect_analysis(&g, &mut r, v)?;
            ifs::depth_analysis(&mut r, args.theta);
        }
        if !args.no_trigger && !r.malicious.is_empty() {
            match trigger::analyze_trigger(&g, &r, args.state_bound) {
                Ok(t) => r.trigger = Some(t),
                Err(e) => {
                    let _ = writeln!(err, "warning: trigger extraction for {name}: {e}");
                }
            }
        }
        let _ = print_report(out, &r, start.elapsed().as_secs_f64());
        reports.push(r);
    }
    if let Some(path) = &args.json {
        write_reports(path, &reports)?;
    }
    Ok(exit_code(&reports))
}

fn extract(args: &ExtractArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let g = load(&args.netlist)?;
    let text = read(&args.report)?;
    let json_err = |source| CliError::Json {
        path: args.report.clone(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    let single = !value.is_array();
    let mut reports: Vec<FlowReport> = if single {
        vec![serde_json::from_value(value).map_err(json_err)?]
    } else {
        serde_json::from_value(value).map_err(json_err)?
    };
    for r in &mut reports {
        r.asset = Asset::resolve(&g, &r.asset.label, r.asset.kind)?;
        if r.malicious.is_empty() {
            writeln!(
                out,
                "asset {}: no malicious points, nothing to extract",
                r.asset.label
            )
            .ok();
            r.trigger = None;
            continue;
        }
        let t = trigger::analyze_trigger(&g, r, args.state_bound)?;
        writeln!(out, "asset {}", r.asset.label).ok();
        print_trigger(out, &t).ok();
        r.trigger = Some(t);
    }
    if let Some(path) = &args.json {
        if single {
            write_json(path, &reports[0])?;
        } else {
            write_json(path, &reports)?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PropertyReport {
    source: String,
    sink: String,
    property: PropertyResult,
    flow: bool,
}

fn check_property(args: &PropertyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let g = load(&args.netlist)?;
    let net = |n: &str| {
        g.net_by_name(n)
            .ok_or_else(|| IfsError::UnknownNet(n.to_string()))
    };
    let (s, o) = (net(&args.source)?, net(&args.sink)?);
    let result = ifs::check_equality_property(&g, s, o)?;
    match &result {
        PropertyResult::Violated { witness } => {
            writeln!(
                out,
                "property (s0 == o) || (!s0 == o) on {} / {}: violated",
                args.source, args.sink
            )
            .ok();
            let w: Vec<String> = witness
                .iter()
                .map(|(k, v)| format!("{k}={}", *v as u8))
                .collect();
            writeln!(out, "  counterexample: {}", w.join(" ")).ok();
        }
        PropertyResult::Holds => {
            writeln!(
                out,
                "property (s0 == o) || (!s0 == o) on {} / {}: holds",
                args.source, args.sink
            )
            .ok();
        }
    }
    let params = VerifyParams {
        atpg: AtpgParams {
            depth: args.depth,
            ..AtpgParams::default()
        },
        ..VerifyParams::default()
    };
    let asset = Asset::resolve(&g, &args.source, AssetKind::Confidentiality)?;
    let report = ifs::confidentiality_verify(&g, &asset, &params)?;
    let flow = report.point_names().contains(&args.sink);
    let violated = matches!(result, PropertyResult::Violated { .. });
    if flow {
        writeln!(
            out,
            "  flow check: information flows from {} to {}",
            args.source, args.sink
        )
        .ok();
    } else {
        writeln!(
            out,
            "  flow check: no information flow from {} to {}",
            args.source, args.sink
        )
        .ok();
    }
    if violated != flow {
        writeln!(
            out,
            "  note: the flow check disagrees with the property result"
        )
        .ok();
    }
    if let Some(path) = &args.json {
        write_json(
            path,
            &PropertyReport {
                source: args.source.clone(),
                sink: args.sink.clone(),
                property: result,
                flow,
            },
        )?;
    }
    Ok(if violated { EXIT_VIOLATION } else { EXIT_OK })
}

fn gen_bench(args: &BenchArgs, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    let trigger = match args.trigger {
        TriggerArg::None => TriggerSpec::None,
        TriggerArg::AlwaysOn => TriggerSpec::AlwaysOn,
        TriggerArg::SpecificInput => TriggerSpec::SpecificInput,
        TriggerArg::Counter => TriggerSpec::Counter {
            width: args.width,
            value: args.value,
        },
        TriggerArg::Fsm => TriggerSpec::Fsm {
            patterns: args.patterns,
        },
        TriggerArg::FsmCounter => TriggerSpec::FsmCounter {
            patterns: args.patterns,
            width: args.width,
        },
    };
    let payload = match args.payload {
        PayloadArg::None => Payload::None,
        PayloadArg::BypassMux => Payload::BypassMux,
        PayloadArg::XorLfsrLeak => Payload::XorLfsrLeak,
        PayloadArg::IsolatedShiftRegister => Payload::IsolatedShiftRegister,
        PayloadArg::ControlHijack => Payload::ControlHijack,
        PayloadArg::ScanEnableHijack => Payload::ScanEnableHijack,
        PayloadArg::KeyReplacement => Payload::KeyReplacement,
    };
    let core = match args.core {
        CoreArg::Cipher => Core::ToyCipher,
        CoreArg::Processor => Core::ToyProcessor,
    };
    let mut spec = FixtureSpec::new(core, trigger, payload, seed);
    spec.plant_latch = args.plant_latch;
    spec.plant_uncontrollable = args.plant_uncontrollable;
    let (text, manifest) = benchgen::generate(&spec)?;
    std::fs::write(&args.out, &text).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    write_json(&manifest_path, &manifest)?;
    writeln!(
        out,
        "wrote {} ({} lines) and {}",
        args.out.display(),
        text.lines().count(),
        manifest_path.display()
    )
    .ok();
    Ok(EXIT_OK)
}

fn lint(args: &LintArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let g = load(&args.netlist)?;
    let items = netlist::report_unanalyzable(&g);
    if items.is_empty() {
        writeln!(out, "no latches or uncontrollable flip-flops").ok();
    }
    for e in &items {
        writeln!(
            out,
            "{}:{}: {} ({})",
            args.netlist.display(),
            e.location,
            e.name,
            e.reason
        )
        .ok();
    }
    if let Some(path) = &args.json {
        write_json(path, &items)?;
    }
    Ok(EXIT_OK)
}

fn dispatch(
    cli: &Cli,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    match &cli.command {
        Command::VerifyConf(a) | Command::VerifyInt(a) => {
            let kind = if matches!(cli.command, Command::VerifyConf(_)) {
                AssetKind::Confidentiality
            } else {
                AssetKind::Integrity
            };
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = a.search.jobs {
                if n == 0 {
                    return Err(CliError::Usage("--jobs must be at least 1".into()));
                }
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| verify(a, kind, out, err))
        }
        Command::ExtractTrigger(a) => extract(a, out),
        Command::CheckProperty(a) => check_property(a, out),
        Command::GenBench(a) => {
            let seed = seed_override().unwrap_or(a.seed);
            gen_bench(a, seed, out)
        }
        Command::Lint(a) => lint(a, out),
    }
}

/// `IFSGUARD_SEED`, when set to an integer.
pub fn seed_override() -> Option<u64> {
    std::env::var("IFSGUARD_SEED").ok()?.trim().parse().ok()
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_ERROR
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
