use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ifsguard::benchgen::{self, Core, FixtureSpec, Payload, TriggerSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifsguard"))
}

fn fixture(dir: &Path, name: &str, spec: &FixtureSpec) -> PathBuf {
    let (text, _) = benchgen::generate(spec).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], extra: &[&Path]) -> Output {
    let mut c = bin();
    c.args(args);
    for p in extra {
        c.arg(p);
    }
    c.output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn type_ii_fixture_exits_with_violation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec::new(
        Core::ToyCipher,
        TriggerSpec::AlwaysOn,
        Payload::XorLfsrLeak,
        21,
    );
    let f = fixture(dir.path(), "t.v", &spec);
    let out_json = dir.path().join("out.json");
    let mut c = bin();
    c.args(["verify-conf", "--netlist"]).arg(&f);
    c.args(["--asset", "key0", "--valid-out", "ct[7:0]", "--json"])
        .arg(&out_json);
    let out = c.output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out_json);
    assert_eq!(v["verdict"], "Type II");
    assert_eq!(v["trigger"]["kind"], "always-on");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verdict: Type II"));
    assert!(stdout.contains("reached points:"));
}

#[test]
fn trojan_free_fixture_exits_clean() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(
        dir.path(),
        "free.v",
        &FixtureSpec::trojan_free(Core::ToyCipher, 22),
    );
    let out = run(
        &[
            "verify-conf",
            "--asset",
            "key[0]",
            "--valid-out",
            "ct[7:0]",
            "--netlist",
        ],
        &[&f],
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn exhausted_budget_exits_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(
        dir.path(),
        "free.v",
        &FixtureSpec::trojan_free(Core::ToyCipher, 22),
    );
    let out = run(
        &[
            "verify-conf",
            "--asset",
            "key[0]",
            "--budget",
            "0",
            "--netlist",
        ],
        &[&f],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("search budget exhausted"));
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.v");
    let out = run(&["verify-conf", "--asset", "x", "--netlist"], &[&missing]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.v"));

    let bad = dir.path().join("bad.v");
    std::fs::write(
        &bad,
        "module m (a);\n input a;\n FOO u (.Y(a));\nendmodule\n",
    )
    .unwrap();
    let out = run(&["lint", "--netlist"], &[&bad]);
    assert_eq!(out.status.code(), Some(1));

    let f = fixture(
        dir.path(),
        "free.v",
        &FixtureSpec::trojan_free(Core::ToyCipher, 1),
    );
    let out = run(&["verify-conf", "--asset", "nope", "--netlist"], &[&f]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["verify-conf", "--netlist"], &[&f]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(
        &["verify-conf", "--asset", "key0", "--jobs", "0", "--netlist"],
        &[&f],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = run(
        &[
            "verify-conf",
            "--asset",
            "key0",
            "--valid-in",
            "pt[0]",
            "--netlist",
        ],
        &[&f],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["no-such-command"], &[]).status.code(), Some(1));
    assert_eq!(run(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn several_assets_give_an_array() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(
        dir.path(),
        "free.v",
        &FixtureSpec::trojan_free(Core::ToyCipher, 23),
    );
    let j = dir.path().join("r.json");
    let mut c = bin();
    c.args([
        "verify-conf",
        "--asset",
        "key[1:0]",
        "--valid-out",
        "ct[7:0]",
        "--netlist",
    ])
    .arg(&f);
    c.arg("--json").arg(&j);
    assert_eq!(c.output().unwrap().status.code(), Some(0));
    let v = json(&j);
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[0]["asset"]["label"], "key[1]");
    assert_eq!(arr[1]["asset"]["label"], "key[0]");
}

#[test]
fn integrity_and_trigger_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec::new(
        Core::ToyProcessor,
        TriggerSpec::Counter {
            width: 6,
            value: 37,
        },
        Payload::ControlHijack,
        24,
    );
    let f = fixture(dir.path(), "pic.v", &spec);
    let j = dir.path().join("r.json");
    let mut c = bin();
    c.args([
        "verify-int",
        "--asset",
        "pa0",
        "--valid-in",
        "instr[3:0]",
        "--no-trigger",
        "--netlist",
    ])
    .arg(&f);
    c.arg("--json").arg(&j);
    assert_eq!(c.output().unwrap().status.code(), Some(2));
    assert!(json(&j).get("trigger").is_none());

    let j2 = dir.path().join("t.json");
    let mut c = bin();
    c.args(["extract-trigger", "--netlist"])
        .arg(&f)
        .arg("--report")
        .arg(&j)
        .arg("--json")
        .arg(&j2);
    let out = c.output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&j2);
    assert_eq!(v["trigger"]["kind"], "sequence");
    assert_eq!(v["trigger"]["sequence"]["steps"][0]["repeat"], 37);
    assert!(String::from_utf8_lossy(&out.stdout).contains("(37 cycles)"));
}

#[test]
fn seed_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args([
            "gen-bench",
            "--trigger",
            "specific-input",
            "--payload",
            "bypass-mux",
            "--seed",
            seed,
            "--out",
        ]);
        c.arg(&out);
        c.env_remove("IFSGUARD_SEED");
        if let Some(s) = env {
            c.env("IFSGUARD_SEED", s);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let a = gen("a.v", "3", None);
    let b = gen("b.v", "4", Some("3"));
    let c = gen("c.v", "4", None);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn lint_reports_locations_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = FixtureSpec::trojan_free(Core::ToyProcessor, 25);
    spec.plant_latch = true;
    let f = fixture(dir.path(), "p.v", &spec);
    let j = dir.path().join("lint.json");
    let out = run(&["lint", "--netlist"], &[&f]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("lat0 (latch)"));
    let mut c = bin();
    c.args(["lint", "--netlist"]).arg(&f).arg("--json").arg(&j);
    assert_eq!(c.output().unwrap().status.code(), Some(0));
    let v = json(&j);
    assert_eq!(v[0]["name"], "lat0");
    assert!(v[0]["location"]["line"].as_u64().unwrap() > 1);
}
