use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use ifsguard::atpg::Observation;
use ifsguard::benchgen::{self, Core, FixtureSpec, Manifest, Payload, TriggerSpec};
use ifsguard::cone;
use ifsguard::ifs::{
    self, Asset, AssetKind, FlowReport, MaliciousReason, PropertyResult, Verdict, VerifyParams,
};
use ifsguard::oracle;
use ifsguard::sim;
use ifsguard::trigger::{self, DEFAULT_STATE_BOUND};
use ifsguard::{parse_netlist, CircuitGraph, Point, ScanConfig};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

/// Every report produced by the suite, kept for witness replay.
#[derive(Default)]
struct Reports(Mutex<Vec<(Arc<CircuitGraph>, FlowReport)>>);

impl Reports {
    fn keep(&self, g: &Arc<CircuitGraph>, r: &FlowReport) {
        self.0.lock().unwrap().push((g.clone(), r.clone()));
    }
}

struct Run {
    g: Arc<CircuitGraph>,
    m: Manifest,
    r: FlowReport,
    elapsed: Duration,
}

fn names<I: IntoIterator<Item = S>, S: Into<String>>(it: I) -> BTreeSet<String> {
    it.into_iter().map(Into::into).collect()
}

/// Verification of the first manifest asset, then intersect and depth
/// analysis against the manifest's valid points, then trigger recovery.
fn pipeline(spec: FixtureSpec, theta: f64, keep: &Reports) -> Run {
    let (text, m) = benchgen::generate(&spec).unwrap();
    let g = Arc::new(parse_netlist(&text).unwrap());
    let start = Instant::now();
    let a = &m.assets[0];
    let asset = Asset::resolve(&g, &a.name, a.kind).unwrap();
    let p = VerifyParams::default();
    let mut r = match a.kind {
        AssetKind::Confidentiality => ifs::confidentiality_verify(&g, &asset, &p).unwrap(),
        AssetKind::Integrity => ifs::integrity_verify(&g, &asset, &p).unwrap(),
    };
    let valid = ifs::resolve_points(&g, &m.valid_points).unwrap();
    ifs::intersect_analysis(&g, &mut r, &valid).unwrap();
    ifs::depth_analysis(&mut r, theta);
    if !r.malicious.is_empty() {
        r.trigger = Some(trigger::analyze_trigger(&g, &r, DEFAULT_STATE_BOUND).unwrap());
    }
    let elapsed = start.elapsed();
    keep.keep(&g, &r);
    Run { g, m, r, elapsed }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifsguard"))
}

fn write_fixture(dir: &Path, name: &str, spec: &FixtureSpec) -> (std::path::PathBuf, Manifest) {
    let (text, m) = benchgen::generate(spec).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    (path, m)
}

fn c1_c17(keep: &Reports) -> Outcome {
    let start = Instant::now();
    let g = Arc::new(parse_netlist(benchgen::C17).unwrap());
    let n1 = g.net_by_name("N1").unwrap();
    let n23 = g.net_by_name("N23").unwrap();
    let prop = ifs::check_equality_property(&g, n1, n23).map_err(|e| e.to_string())?;
    ensure!(
        matches!(prop, PropertyResult::Violated { .. }),
        "property not violated: {prop:?}"
    );
    let asset = Asset::resolve(&g, "N1", AssetKind::Confidentiality).unwrap();
    let r = ifs::confidentiality_verify(&g, &asset, &VerifyParams::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    keep.keep(&g, &r);
    ensure!(
        r.point_names() == names(["N22"]),
        "reached {:?}, expected only N22",
        r.point_names()
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c17.v");
    std::fs::write(&path, benchgen::C17).unwrap();
    let out = bin()
        .args(["check-property", "--netlist"])
        .arg(&path)
        .args(["--source", "N1", "--sink", "N23"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure!(
        stdout.contains("violated"),
        "cli output lacks `violated`: {stdout}"
    );
    ensure!(
        stdout.contains("no information flow from N1 to N23"),
        "cli output lacks the flow note: {stdout}"
    );
    ensure!(out.status.code() == Some(2), "exit {:?}", out.status.code());
    Ok(())
}

/// Level iteration with each flow decided by exhaustive two-run simulation.
fn oracle_points(g: &CircuitGraph, asset: &str, depth: usize) -> BTreeSet<String> {
    let cut = g.net_by_name(asset).unwrap();
    let mut scan = ScanConfig::full_scan(g);
    let mut candidates = cone::fanout_endpoints(g, cut).unwrap().endpoints;
    let mut visited = BTreeSet::new();
    let mut reached = BTreeSet::new();
    while !candidates.is_empty() {
        let mut next = BTreeSet::new();
        let mut confirmed = Vec::new();
        for p in std::mem::take(&mut candidates) {
            if !visited.insert(p) {
                continue;
            }
            if let Point::Ff(f) = p {
                if g.is_unanalyzable(f) {
                    next.extend(cone::fanout_endpoints(g, g.ff(f).q).unwrap().endpoints);
                    continue;
                }
            }
            let probes = oracle::probes_for(g, &scan, &[p]);
            if oracle::two_run_differs(g, cut, &probes, &scan, depth).unwrap() {
                reached.insert(g.point_name(p));
                if let Point::Ff(f) = p {
                    confirmed.push(f);
                    next.extend(cone::fanout_endpoints(g, g.ff(f).q).unwrap().endpoints);
                }
            }
        }
        for f in confirmed {
            scan = scan.remove_scan_ability(g, f).unwrap();
        }
        candidates = next;
    }
    reached
}

fn c2_oracle(keep: &Reports) -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut count = 0;
    let (mut nonempty, mut multi_level) = (0, 0);
    for seed in 0..64u64 {
        let fx = benchgen::random_fixture(seed);
        let g = Arc::new(parse_netlist(&fx.netlist).unwrap());
        ensure!(
            g.data_inputs().len() <= 12,
            "fixture {seed} has {} input bits",
            g.data_inputs().len()
        );
        ensure!(fx.depth <= 3, "fixture {seed} has D={}", fx.depth);
        let asset = Asset::resolve(&g, &fx.asset, AssetKind::Confidentiality).unwrap();
        let mut p = VerifyParams::default();
        p.atpg.depth = fx.depth;
        let r = ifs::confidentiality_verify(&g, &asset, &p).map_err(|e| e.to_string())?;
        ensure!(
            r.abandoned.is_empty(),
            "fixture {seed} abandoned {:?}",
            r.abandoned
        );
        keep.keep(&g, &r);
        let want = oracle_points(&g, &fx.asset, fx.depth);
        nonempty += usize::from(!want.is_empty());
        multi_level += usize::from(r.levels.len() > 1);
        if r.point_names() != want {
            mismatches.push((seed, r.point_names(), want));
        }
        count += 1;
    }
    let elapsed = start.elapsed();
    ensure!(count >= 50, "only {count} fixtures");
    ensure!(
        nonempty >= count / 2 && multi_level >= 5,
        "trivial fixtures: {nonempty} reach, {multi_level} multi-level"
    );
    ensure!(mismatches.is_empty(), "mismatches: {mismatches:?}");
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(())
}

fn c3_replay(keep: &Reports) -> Outcome {
    let all = keep.0.lock().unwrap();
    let mut replayed = 0;
    for (g, r) in all.iter() {
        for p in r.points() {
            let (cut, w) = r.witness(g, p).map_err(|e| e.to_string())?;
            ensure!(
                w.stimulus.len() <= r.depth_bound,
                "{}: witness longer than D",
                p.name
            );
            let (state, inputs) = w.stimulus.to_bool(g);
            let a = sim::run_sequence(g, &state, &inputs, Some((cut, false)));
            let b = sim::run_sequence(g, &state, &inputs, Some((cut, true)));
            let t = w.frame;
            let differs = match w.observed {
                Observation::Net(n) => a[t][n.index()] != b[t][n.index()],
                Observation::Capture(f) => {
                    sim::next_state(g, f, &a[t]) != sim::next_state(g, f, &b[t])
                }
            };
            ensure!(
                differs,
                "replay of {} for asset {} shows no difference",
                p.name,
                r.asset.label
            );
            replayed += 1;
        }
    }
    ensure!(replayed > 100, "only {replayed} witnesses replayed");
    Ok(())
}

fn c4_type_ii(keep: &Reports) -> Outcome {
    let run = pipeline(
        FixtureSpec::new(
            Core::ToyCipher,
            TriggerSpec::AlwaysOn,
            Payload::XorLfsrLeak,
            11,
        ),
        0.5,
        keep,
    );
    let want = names(run.m.malicious_points.clone());
    ensure!(want.contains("leak"), "manifest lacks the leak port");
    ensure!(
        run.r.malicious_names() == want,
        "flagged {:?}, manifest {:?}",
        run.r.malicious_names(),
        want
    );
    ensure!(
        run.r.verdict == Verdict::TypeII,
        "verdict {:?}",
        run.r.verdict
    );
    let free = pipeline(FixtureSpec::trojan_free(Core::ToyCipher, 11), 0.5, keep);
    ensure!(
        free.r.malicious.is_empty(),
        "control flagged {:?}",
        free.r.malicious
    );
    ensure!(
        free.r.verdict == Verdict::NoneFound,
        "control verdict {:?}",
        free.r.verdict
    );
    Ok(())
}

fn c5_type_i(keep: &Reports) -> Outcome {
    let run = pipeline(
        FixtureSpec::new(
            Core::ToyCipher,
            TriggerSpec::SpecificInput,
            Payload::BypassMux,
            12,
        ),
        0.5,
        keep,
    );
    let shallow: BTreeSet<String> = run
        .r
        .malicious
        .iter()
        .filter(|m| m.reason == MaliciousReason::ShallowDepth)
        .map(|m| m.name.clone())
        .collect();
    let want = names(run.m.type_i_points.clone());
    ensure!(!want.is_empty(), "manifest has no bypass points");
    ensure!(shallow == want, "shallow {shallow:?}, manifest {want:?}");
    let median = run
        .r
        .depth_analysis
        .as_ref()
        .and_then(|d| d.median)
        .ok_or("no median")?;
    for name in &shallow {
        let d = run.r.point(name).unwrap().depth as f64;
        ensure!(d <= 0.2 * median, "{name}: depth {d} vs median {median}");
    }
    ensure!(
        matches!(run.r.verdict, Verdict::TypeI | Verdict::Both),
        "verdict {:?}",
        run.r.verdict
    );
    let free = pipeline(FixtureSpec::trojan_free(Core::ToyCipher, 12), 0.5, keep);
    ensure!(
        free.r.malicious.is_empty(),
        "control flagged {:?}",
        free.r.malicious
    );
    Ok(())
}

fn c6_integrity(keep: &Reports) -> Outcome {
    let pic = pipeline(
        FixtureSpec::new(
            Core::ToyProcessor,
            TriggerSpec::Counter {
                width: 7,
                value: 100,
            },
            Payload::ControlHijack,
            13,
        ),
        0.5,
        keep,
    );
    let want = names(pic.m.malicious_points.clone());
    ensure!(
        pic.r.malicious_names() == want,
        "flagged {:?}, manifest {want:?}",
        pic.r.malicious_names()
    );
    let t = pic.r.trigger.as_ref().ok_or("no trigger")?;
    let bus = pic
        .m
        .trigger
        .bus
        .as_deref()
        .ok_or("manifest trigger has no bus")?;
    let group = t
        .conditions
        .iter()
        .find(|c| c.bus == bus)
        .ok_or("no condition on the counter")?;
    ensure!(
        group.value == pic.m.trigger.constant,
        "trigger {:?}, planted {:?}",
        group.value,
        pic.m.trigger.constant
    );
    ensure!(group.value == Some(100), "trigger value {:?}", group.value);

    let scan = pipeline(
        FixtureSpec::new(
            Core::ToyProcessor,
            TriggerSpec::Counter {
                width: 7,
                value: 100,
            },
            Payload::ScanEnableHijack,
            13,
        ),
        0.5,
        keep,
    );
    let want = names(scan.m.malicious_points.clone());
    ensure!(!want.is_empty(), "manifest has no hijack drivers");
    ensure!(
        scan.r.malicious_names() == want,
        "flagged {:?}, manifest {want:?}",
        scan.r.malicious_names()
    );
    Ok(())
}

/// Simulates from reset with the given pt values per cycle and returns the
/// `leak` output per cycle for key = 0 and key = 1 on the asset bit.
fn leak_runs(g: &CircuitGraph, pts: &[u64]) -> (Vec<bool>, Vec<bool>) {
    let held = sim::held_inputs(g);
    let state: Vec<bool> = g
        .ffs
        .iter()
        .map(|f| sim::initial_value(g, f.id, false))
        .collect();
    let leak = g.net_by_name("leak").unwrap();
    let run = |k0: bool| {
        let inputs: Vec<Vec<bool>> = pts
            .iter()
            .map(|&v| {
                g.inputs
                    .iter()
                    .map(|&n| {
                        if let Some(h) = held[n.index()] {
                            return h;
                        }
                        let name = g.net_name(n);
                        if name == "key[0]" {
                            return k0;
                        }
                        match trigger::bus_of(name) {
                            (b, i) if b == "pt" => v >> i & 1 == 1,
                            _ => false,
                        }
                    })
                    .collect()
            })
            .collect();
        sim::run_sequence(g, &state, &inputs, None)
            .iter()
            .map(|f| f[leak.index()])
            .collect::<Vec<bool>>()
    };
    (run(false), run(true))
}

fn c7_fsm(keep: &Reports) -> Outcome {
    let run = pipeline(
        FixtureSpec::new(
            Core::ToyCipher,
            TriggerSpec::Fsm { patterns: 4 },
            Payload::XorLfsrLeak,
            14,
        ),
        0.5,
        keep,
    );
    ensure!(
        run.r.malicious_names().contains("leak"),
        "leak not flagged: {:?}",
        run.r.malicious_names()
    );
    let t = run.r.trigger.as_ref().ok_or("no trigger")?;
    let seq = t.sequence.as_ref().ok_or("no sequence")?;
    let got: Vec<Option<u64>> = seq.steps.iter().map(|s| s.bus_value("pt")).collect();
    let want: Vec<Option<u64>> = run.m.trigger.sequence.iter().map(|&v| Some(v)).collect();
    ensure!(want.len() == 4, "planted sequence {want:?}");
    ensure!(got == want, "extracted {got:?}, planted {want:?}");
    ensure!(
        seq.steps.iter().all(|s| s.repeat == 1),
        "unexpected repeats {seq:?}"
    );

    let tail = 8;
    let mut pts: Vec<u64> = want.iter().map(|v| v.unwrap()).collect();
    pts.extend(std::iter::repeat_n(0, tail));
    let (a, b) = leak_runs(&run.g, &pts);
    ensure!(a != b, "key bit does not reach `leak` after the sequence");
    let (a, b) = leak_runs(&run.g, &vec![0; pts.len()]);
    ensure!(a == b, "key bit reaches `leak` without the sequence");
    Ok(())
}

fn c8_counter_widths(keep: &Reports) -> Outcome {
    let mut edges = Vec::new();
    let mut times = Vec::new();
    for width in [4u32, 6, 8] {
        let spec = FixtureSpec::new(
            Core::ToyCipher,
            TriggerSpec::FsmCounter { patterns: 4, width },
            Payload::XorLfsrLeak,
            15,
        );
        let mut best = Duration::MAX;
        let mut last = None;
        for _ in 0..3 {
            let run = pipeline(spec, 0.5, keep);
            best = best.min(run.elapsed);
            last = Some(run);
        }
        let run = last.unwrap();
        let t = run
            .r
            .trigger
            .as_ref()
            .ok_or(format!("width {width}: no trigger"))?;
        let seq = t
            .sequence
            .as_ref()
            .ok_or(format!("width {width}: no sequence"))?;
        let (hold, head) = seq.steps.split_last().ok_or("empty sequence")?;
        let got: Vec<Option<u64>> = head.iter().map(|s| s.bus_value("pt")).collect();
        let want: Vec<Option<u64>> = run.m.trigger.sequence.iter().map(|&v| Some(v)).collect();
        ensure!(
            got == want,
            "width {width}: extracted {got:?}, planted {want:?}"
        );
        ensure!(
            hold.inputs.is_empty(),
            "width {width}: final step constrains inputs"
        );
        ensure!(
            hold.repeat == 1 << width,
            "width {width}: hold {} cycles",
            hold.repeat
        );

        let direct = trigger::extract_direct_trigger(&run.g, &run.r).map_err(|e| e.to_string())?;
        let cond: Vec<_> = direct
            .registers
            .iter()
            .map(|(n, &v)| (run.g.ff_by_name(n).unwrap(), v))
            .collect();
        let ffs: Vec<_> = cond.iter().map(|&(f, _)| f).collect();
        let regs = trigger::trigger_state_registers(&run.g, &ffs);
        let stg = trigger::extract_stg(&run.g, &regs, &cond, DEFAULT_STATE_BOUND)
            .map_err(|e| e.to_string())?;
        ensure!(!stg.partial, "width {width}: partial state graph");
        ensure!(
            stg.counters.iter().any(|c| c.len() == width as usize),
            "width {width}: counter not collapsed"
        );
        edges.push(stg.control_edges());
        times.push(best);
    }
    ensure!(
        edges[0] == edges[1] && edges[1] == edges[2],
        "control state graphs differ across widths"
    );
    let ratio = times[2].as_secs_f64() / times[0].as_secs_f64();
    ensure!(
        ratio <= 2.0,
        "time grows {ratio:.2}x from width 4 to 8 ({times:?})"
    );
    Ok(())
}

fn c9_diagnostics(keep: &Reports) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = FixtureSpec::trojan_free(Core::ToyCipher, 16);
    spec.plant_latch = true;
    spec.plant_uncontrollable = true;
    let (path, m) = write_fixture(dir.path(), "planted.v", &spec);
    ensure!(
        m.unanalyzable.len() == 2,
        "manifest lists {:?}",
        m.unanalyzable
    );
    let text = std::fs::read_to_string(&path).unwrap();
    let out = bin()
        .arg("lint")
        .arg("--netlist")
        .arg(&path)
        .output()
        .unwrap();
    ensure!(
        out.status.code() == Some(0),
        "lint exit {:?}",
        out.status.code()
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in &m.unanalyzable {
        let line = text
            .lines()
            .position(|l| l.split_whitespace().nth(1) == Some(name.as_str()))
            .ok_or(format!("{name} not in netlist"))?
            + 1;
        let needle = format!("{}:{line}:", path.display());
        ensure!(
            stdout
                .lines()
                .any(|l| l.starts_with(&needle) && l.contains(name.as_str())),
            "lint output lacks {name} at line {line}: {stdout}"
        );
    }
    let g = Arc::new(parse_netlist(&text).unwrap());
    let valid = ifs::resolve_points(&g, &m.valid_points).unwrap();
    let mut reported = BTreeSet::new();
    for key in ["key[0]", "key[1]"] {
        let asset = Asset::resolve(&g, key, AssetKind::Confidentiality).unwrap();
        let mut r = ifs::confidentiality_verify(&g, &asset, &VerifyParams::default())
            .map_err(|e| e.to_string())?;
        ifs::intersect_analysis(&g, &mut r, &valid).unwrap();
        keep.keep(&g, &r);
        reported.extend(r.abandoned.iter().map(|a| a.name.clone()));
    }
    let want = names(m.unanalyzable.clone());
    ensure!(
        want.is_subset(&reported),
        "reported {reported:?}, planted {want:?}"
    );
    Ok(())
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::Fsm { patterns: 4 },
        Payload::XorLfsrLeak,
        17,
    );
    let (path, _) = write_fixture(dir.path(), "fsm.v", &spec);
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "4"].iter().enumerate() {
        let json = dir.path().join(format!("r{i}.json"));
        let out = bin()
            .arg("verify-conf")
            .arg("--netlist")
            .arg(&path)
            .args([
                "--asset",
                "key[0]",
                "--valid-out",
                "ct[7:0]",
                "--seed",
                "7",
                "--jobs",
                jobs,
                "--json",
            ])
            .arg(&json)
            .output()
            .unwrap();
        ensure!(out.status.code() == Some(2), "exit {:?}", out.status.code());
        outputs.push(std::fs::read(&json).unwrap());
    }
    ensure!(
        outputs.windows(2).all(|w| w[0] == w[1]),
        "JSON reports differ between runs"
    );
    let mut benches = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("b{i}.v"));
        let status = bin()
            .args([
                "gen-bench",
                "--trigger",
                "fsm",
                "--payload",
                "xor-lfsr-leak",
                "--seed",
                "5",
                "--out",
            ])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        ensure!(status.success(), "gen-bench failed");
        benches.push((
            std::fs::read(&out).unwrap(),
            std::fs::read(out.with_extension("json")).unwrap(),
        ));
    }
    ensure!(benches[0] == benches[1], "generated fixtures differ");
    Ok(())
}

#[test]
fn acceptance() {
    let keep = Reports::default();
    let guarded = |f: &dyn Fn() -> Outcome| match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    };
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n: u32, title: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let r = guarded(f);
        results.push((n, title, r, start.elapsed()));
    };
    record(1, "c17 property false positive vs flow check", &|| {
        c1_c17(&keep)
    });
    record(2, "oracle equivalence on random fixtures", &|| {
        c2_oracle(&keep)
    });
    record(4, "leak Trojan flagged by intersect analysis", &|| {
        c4_type_ii(&keep)
    });
    record(5, "bypass Trojan flagged by depth analysis", &|| {
        c5_type_i(&keep)
    });
    record(
        6,
        "integrity: counter hijack and scan-enable hijack",
        &|| c6_integrity(&keep),
    );
    record(7, "FSM trigger sequence extraction", &|| c7_fsm(&keep));
    record(8, "counter width insensitivity", &|| {
        c8_counter_widths(&keep)
    });
    record(9, "latch and uncontrollable flip-flop diagnostics", &|| {
        c9_diagnostics(&keep)
    });
    record(10, "byte-identical JSON across runs", &c10_determinism);
    record(3, "witness replay for every detected point", &|| {
        c3_replay(&keep)
    });
    results.sort_by_key(|r| r.0);

    let mut stdout = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (n, title, r, t) in &results {
        match r {
            Ok(()) => writeln!(
                stdout,
                "criterion {n:>2} PASS  {title} ({:.2} s)",
                t.as_secs_f64()
            )
            .unwrap(),
            Err(e) => {
                writeln!(stdout, "criterion {n:>2} FAIL  {title}: {e}").unwrap();
                failed.push(*n);
            }
        }
    }
    drop(stdout);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
