use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NetlistWriter;
use crate::ifs::AssetKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Core {
    ToyCipher,
    ToyProcessor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TriggerSpec {
    None,
    AlwaysOn,
    SpecificInput,
    /// Free-running counter firing at `value`.
    Counter {
        width: u32,
        value: u64,
    },
    /// Sequence detector over `patterns` input patterns.
    Fsm {
        patterns: usize,
    },
    /// Sequence detector followed by a `width`-bit wait counter.
    FsmCounter {
        patterns: usize,
        width: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Payload {
    None,
    BypassMux,
    XorLfsrLeak,
    IsolatedShiftRegister,
    ControlHijack,
    ScanEnableHijack,
    KeyReplacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub core: Core,
    pub trigger: TriggerSpec,
    pub payload: Payload,
    pub seed: u64,
    #[serde(default)]
    pub plant_latch: bool,
    #[serde(default)]
    pub plant_uncontrollable: bool,
}

impl FixtureSpec {
    pub fn new(core: Core, trigger: TriggerSpec, payload: Payload, seed: u64) -> Self {
        FixtureSpec {
            core,
            trigger,
            payload,
            seed,
            plant_latch: false,
            plant_uncontrollable: false,
        }
    }

    pub fn trojan_free(core: Core, seed: u64) -> Self {
        Self::new(core, TriggerSpec::None, Payload::None, seed)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("payload {payload:?} is not available on core {core:?}")]
    Incompatible { core: Core, payload: Payload },
    #[error("invalid fixture: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetTruth {
    pub name: String,
    pub kind: AssetKind,
}

/// Planted trigger FSM. States are codes of `registers` (bit `i` of a code
/// is `registers[i]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedStg {
    pub registers: Vec<String>,
    pub input_bus: String,
    pub states: Vec<u64>,
    /// `(from, pattern, to)`; a `None` pattern means "any other input".
    pub transitions: Vec<(u64, Option<u64>, u64)>,
    pub initial: u64,
    pub trigger_state: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerTruth {
    pub kind: String,
    /// Input bus or register group the condition is stated over.
    pub bus: Option<String>,
    pub constant: Option<u64>,
    pub sequence: Vec<u64>,
    pub counter_width: Option<u32>,
    /// Cycles spent waiting in the last sequence state.
    pub hold_cycles: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: FixtureSpec,
    pub module: String,
    pub assets: Vec<AssetTruth>,
    pub valid_points: Vec<String>,
    pub malicious_points: Vec<String>,
    /// Valid points reached through a shallow bypass for the first asset.
    pub type_i_points: Vec<String>,
    pub trigger: TriggerTruth,
    pub state_registers: Vec<String>,
    pub stg: Option<PlantedStg>,
    pub unanalyzable: Vec<String>,
}

fn bus(name: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{name}[{i}]")).collect()
}

fn nibble_sbox(rng: &mut ChaCha8Rng) -> [u8; 16] {
    let mut s: Vec<u8> = (0..16).collect();
    // Reject permutations with fixed points so every round mixes.
    loop {
        s.shuffle(rng);
        if s.iter().enumerate().all(|(i, &v)| i as u8 != v) {
            break;
        }
    }
    s.try_into().expect("16 entries")
}

const PERM: [usize; 8] = [0, 4, 1, 5, 2, 6, 3, 7];

struct Builder<'a> {
    w: NetlistWriter,
    rng: &'a mut ChaCha8Rng,
    clk: String,
    rstn: String,
}

impl Builder<'_> {
    /// Four-input sbox as a minterm decoder followed by OR trees.
    fn sbox(&mut self, x: &[String], table: &[u8; 16]) -> Vec<String> {
        let inv: Vec<String> = x.iter().map(|b| self.w.gate("NOT", &[b])).collect();
        let lit = |i: usize, v: bool| if v { x[i].clone() } else { inv[i].clone() };
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for m in 0..4 {
            let (a, b) = (lit(0, m & 1 == 1), lit(1, m & 2 == 2));
            lo.push(self.w.gate("AND", &[&a, &b]));
            let (c, d) = (lit(2, m & 1 == 1), lit(3, m & 2 == 2));
            hi.push(self.w.gate("AND", &[&c, &d]));
        }
        let minterms: Vec<String> = (0..16)
            .map(|m| self.w.gate("AND", &[&lo[m & 3], &hi[m >> 2]]))
            .collect();
        (0..4)
            .map(|bit| {
                let ones: Vec<String> = (0..16)
                    .filter(|&m| table[m] >> bit & 1 == 1)
                    .map(|m| minterms[m].clone())
                    .collect();
                self.w.tree("OR", &ones)
            })
            .collect()
    }

    fn sbox_layer(&mut self, x: &[String], table: &[u8; 16]) -> Vec<String> {
        let mut y = self.sbox(&x[..4], table);
        y.extend(self.sbox(&x[4..], table));
        PERM.iter().map(|&p| y[p].clone()).collect()
    }

    fn register(&mut self, name: &str, d: &str, reset: bool) -> String {
        let q = self.w.wire(&format!("{name}_q"));
        let rst = self.rstn.clone();
        let clk = self.clk.clone();
        self.w
            .dff(name, d, &q, &clk, reset.then_some(("RN", rst.as_str())));
        q
    }

    /// Binary counter register group. `inc` gates the increment, `clear`
    /// synchronously zeroes it.
    fn counter(
        &mut self,
        prefix: &str,
        width: u32,
        inc: &str,
        clear: Option<&str>,
        reset: bool,
    ) -> Vec<String> {
        let qs: Vec<String> = (0..width)
            .map(|i| self.w.wire(&format!("{prefix}{i}_q")))
            .collect();
        let mut carry = inc.to_string();
        for (i, q) in qs.iter().enumerate() {
            let mut d = self.w.gate("XOR", &[q, &carry]);
            if let Some(c) = clear {
                let nc = self.w.gate("NOT", &[c]);
                d = self.w.gate("AND", &[&d, &nc]);
            }
            let rst = self.rstn.clone();
            let clk = self.clk.clone();
            self.w.dff(
                &format!("{prefix}{i}"),
                &d,
                q,
                &clk,
                reset.then_some(("RN", rst.as_str())),
            );
            carry = self.w.gate("AND", &[q, &carry]);
        }
        qs
    }

    /// Sequence detector FSM: state `s < n` advances on `patterns[s]`,
    /// otherwise returns to 0; state `n` is sticky unless `extra` moves it
    /// to `n + 1` (also sticky). Returns (state bits, decoded states).
    fn fsm(
        &mut self,
        input: &[String],
        patterns: &[u64],
        extra: Option<&str>,
        stg: &mut PlantedStg,
    ) -> (Vec<String>, Vec<String>) {
        let n = patterns.len();
        let states = if extra.is_some() { n + 2 } else { n + 1 };
        let bits = usize::BITS as usize - (states - 1).leading_zeros() as usize;
        let bits = bits.max(1);
        let qs: Vec<String> = (0..bits)
            .map(|i| self.w.wire(&format!("tj_st{i}_q")))
            .collect();
        let dec: Vec<String> = (0..states)
            .map(|s| self.w.eq_const(&qs, s as u64))
            .collect();
        let matches: Vec<String> = patterns
            .iter()
            .map(|&p| self.w.eq_const(input, p))
            .collect();
        // Terms that set the next state to code `s`.
        let mut into: Vec<Vec<String>> = vec![Vec::new(); states];
        for s in 0..n {
            into[s + 1].push(self.w.gate("AND", &[&dec[s], &matches[s]]));
            stg.transitions
                .push((s as u64, Some(patterns[s]), s as u64 + 1));
            if s > 0 {
                stg.transitions.push((s as u64, None, 0));
            } else {
                stg.transitions.push((0, None, 0));
            }
        }
        match extra {
            Some(go) => {
                let ngo = self.w.gate("NOT", &[go]);
                into[n].push(self.w.gate("AND", &[&dec[n], &ngo]));
                into[n + 1].push(self.w.gate("AND", &[&dec[n], go]));
                into[n + 1].push(dec[n + 1].clone());
                stg.transitions.push((n as u64, None, n as u64));
                stg.transitions.push((n as u64, None, n as u64 + 1));
                stg.transitions.push((n as u64 + 1, None, n as u64 + 1));
            }
            None => {
                into[n].push(dec[n].clone());
                stg.transitions.push((n as u64, None, n as u64));
            }
        }
        for (i, q) in qs.iter().enumerate() {
            let terms: Vec<String> = (0..states)
                .filter(|&s| s >> i & 1 == 1)
                .flat_map(|s| into[s].clone())
                .collect();
            let d = if terms.is_empty() {
                "1'b0".to_string()
            } else {
                self.w.tree("OR", &terms)
            };
            let rst = self.rstn.clone();
            let clk = self.clk.clone();
            self.w.dff(
                &format!("tj_st{i}"),
                &d,
                q,
                &clk,
                Some(("RN", rst.as_str())),
            );
        }
        stg.registers = (0..bits).map(|i| format!("tj_st{i}")).collect();
        stg.states = (0..states as u64).collect();
        (qs, dec)
    }
}

/// Builds a fixture netlist and its ground-truth manifest.
pub fn generate(spec: &FixtureSpec) -> Result<(String, Manifest), BenchError> {
    use Payload::*;
    let compatible = match spec.core {
        Core::ToyCipher => !matches!(spec.payload, ControlHijack),
        Core::ToyProcessor => matches!(spec.payload, None | ControlHijack | ScanEnableHijack),
    };
    if !compatible {
        return Err(BenchError::Incompatible {
            core: spec.core,
            payload: spec.payload,
        });
    }
    if (spec.trigger == TriggerSpec::None) != (spec.payload == None) {
        return Err(BenchError::Invalid(
            "a trigger needs a payload and a payload needs a trigger".into(),
        ));
    }
    match spec.trigger {
        TriggerSpec::Counter { width, value }
            if width == 0 || width > 16 || value >> width != 0 =>
        {
            return Err(BenchError::Invalid(format!(
                "counter value {value} does not fit {width} bits"
            )))
        }
        TriggerSpec::Fsm { patterns } | TriggerSpec::FsmCounter { patterns, .. }
            if patterns == 0 || patterns > 8 =>
        {
            return Err(BenchError::Invalid("sequence length must be 1..=8".into()))
        }
        TriggerSpec::FsmCounter { width, .. } if width == 0 || width > 16 => {
            return Err(BenchError::Invalid("counter width must be 1..=16".into()))
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let module = match spec.core {
        Core::ToyCipher => "toy_cipher",
        Core::ToyProcessor => "toy_proc",
    };
    let mut w = NetlistWriter::new(module);
    let clk = w.input("clk");
    let rstn = w.input("rstn");
    let mut b = Builder {
        w,
        rng: &mut rng,
        clk,
        rstn,
    };
    let mut m = Manifest {
        spec: *spec,
        module: module.into(),
        assets: Vec::new(),
        valid_points: Vec::new(),
        malicious_points: Vec::new(),
        type_i_points: Vec::new(),
        trigger: TriggerTruth::default(),
        state_registers: Vec::new(),
        stg: Option::None,
        unanalyzable: Vec::new(),
    };

    let width = match spec.core {
        Core::ToyCipher => 8,
        Core::ToyProcessor => 4,
    };
    let (in_name, data_in): (&str, Vec<String>) = match spec.core {
        Core::ToyCipher => ("pt", bus("pt", 8)),
        Core::ToyProcessor => ("instr", bus("instr", 4)),
    };
    for n in &data_in {
        b.w.input(n);
    }
    let key = bus("key", 8);
    if spec.core == Core::ToyCipher {
        for k in &key {
            b.w.input(k);
        }
    }
    let scan_pins = if spec.payload == ScanEnableHijack {
        Some((b.w.input("se"), b.w.input("si")))
    } else {
        Option::None
    };

    // Trigger.
    let mask = (1u64 << width) - 1;
    let trig: Option<String> = match spec.trigger {
        TriggerSpec::None => Option::None,
        TriggerSpec::AlwaysOn => {
            m.trigger.kind = "always-on".into();
            Some(b.w.gate("BUF", &["1'b1"]))
        }
        TriggerSpec::SpecificInput => {
            let magic = b.rng.gen_range(1..=mask);
            m.trigger = TriggerTruth {
                kind: "specific-input".into(),
                bus: Some(in_name.into()),
                constant: Some(magic),
                ..Default::default()
            };
            Some(b.w.eq_const(&data_in, magic))
        }
        TriggerSpec::Counter { width: cw, value } => {
            let qs = b.counter("tj_cnt", cw, "1'b1", Option::None, false);
            m.trigger = TriggerTruth {
                kind: "counter".into(),
                bus: Some("tj_cnt".into()),
                constant: Some(value),
                counter_width: Some(cw),
                ..Default::default()
            };
            m.state_registers = (0..cw).map(|i| format!("tj_cnt{i}")).collect();
            Some(b.w.eq_const(&qs, value))
        }
        TriggerSpec::Fsm { patterns } | TriggerSpec::FsmCounter { patterns, .. } => {
            let mut pats: Vec<u64> = Vec::new();
            while pats.len() < patterns {
                let p = b.rng.gen_range(1..=mask);
                if !pats.contains(&p) {
                    pats.push(p);
                }
            }
            let mut stg = PlantedStg {
                registers: Vec::new(),
                input_bus: in_name.into(),
                states: Vec::new(),
                transitions: Vec::new(),
                initial: 0,
                trigger_state: 0,
            };
            let (trig, kind, hold, cw) =
                if let TriggerSpec::FsmCounter { width: cw, .. } = spec.trigger {
                    // The wait counter runs while the detector sits in its last
                    // sequence state and wraps into the trigger state.
                    let n = patterns;
                    let states = n + 2;
                    let bits = (usize::BITS - (states - 1).leading_zeros()) as usize;
                    let st_q: Vec<String> = (0..bits).map(|i| format!("tj_st{i}_q")).collect();
                    let in_wait = b.w.eq_const(&st_q, n as u64);
                    let not_wait = b.w.gate("NOT", &[&in_wait]);
                    let cnt = b.counter("tj_cnt", cw, &in_wait, Some(&not_wait), true);
                    let full = b.w.eq_const(&cnt, (1u64 << cw) - 1);
                    let go = b.w.gate("AND", &[&in_wait, &full]);
                    let (_, dec) = b.fsm(&data_in, &pats, Some(&go), &mut stg);
                    m.state_registers
                        .extend((0..cw).map(|i| format!("tj_cnt{i}")));
                    stg.trigger_state = n as u64 + 1;
                    (
                        dec[n + 1].clone(),
                        "fsm-counter",
                        Some(1u64 << cw),
                        Some(cw),
                    )
                } else {
                    let (_, dec) = b.fsm(&data_in, &pats, Option::None, &mut stg);
                    stg.trigger_state = patterns as u64;
                    (dec[patterns].clone(), "fsm", Option::None, Option::None)
                };
            let mut regs = stg.registers.clone();
            regs.append(&mut m.state_registers);
            m.state_registers = regs;
            m.trigger = TriggerTruth {
                kind: kind.into(),
                bus: Some(in_name.into()),
                sequence: pats,
                counter_width: cw,
                hold_cycles: hold,
                ..Default::default()
            };
            m.stg = Some(stg);
            Some(trig)
        }
    };
    if trig.is_some() {
        b.w.wire("tj_trig");
        b.w.gate_to("BUF", "tj_trig", &[trig.as_deref().unwrap()]);
    }
    let trig = trig.map(|_| "tj_trig".to_string());

    match spec.core {
        Core::ToyCipher => build_cipher(
            &mut b,
            spec,
            &mut m,
            &key,
            &data_in,
            trig.as_deref(),
            scan_pins,
        ),
        Core::ToyProcessor => {
            build_processor(&mut b, spec, &mut m, &data_in, trig.as_deref(), scan_pins)
        }
    }

    if spec.plant_latch {
        let x = match spec.core {
            Core::ToyCipher => b.w.gate("XOR", &[&key[0], &data_in[0]]),
            Core::ToyProcessor => b.w.gate("BUF", &[&data_in[0]]),
        };
        let q = b.w.wire("lat0_q");
        b.w.latch("lat0", &x, &q, &data_in[1]);
        b.w.output("lat_o");
        b.w.gate_to("BUF", "lat_o", &[&q]);
        m.unanalyzable.push("lat0".into());
        m.valid_points.push("lat_o".into());
    }
    if spec.plant_uncontrollable {
        let src = if spec.core == Core::ToyCipher {
            key[1].clone()
        } else {
            data_in[2].clone()
        };
        let q = b.w.wire("unc0_q");
        b.w.dff("unc0", &src, &q, "1'b0", Option::None);
        b.w.output("unc_o");
        b.w.gate_to("BUF", "unc_o", &[&q]);
        m.unanalyzable.push("unc0".into());
        m.valid_points.push("unc_o".into());
    }
    Ok((b.w.finish(), m))
}

#[allow(clippy::too_many_arguments)]
fn build_cipher(
    b: &mut Builder,
    spec: &FixtureSpec,
    m: &mut Manifest,
    key: &[String],
    pt: &[String],
    trig: Option<&str>,
    scan_pins: Option<(String, String)>,
) {
    use Payload::*;
    let table = nibble_sbox(b.rng);
    let mut k: Vec<String> = key.to_vec();
    if spec.payload == KeyReplacement {
        let konst: u64 = b.rng.gen_range(0..256);
        let t = trig.expect("trigger");
        k = (0..8)
            .map(|i| {
                let c = if konst >> i & 1 == 1 { "1'b1" } else { "1'b0" };
                let d = b.w.mux(t, &key[i], c);
                b.register(&format!("kreg{i}"), &d, true)
            })
            .collect();
        m.assets.push(AssetTruth {
            name: "kreg0".into(),
            kind: AssetKind::Integrity,
        });
        m.valid_points = key.to_vec();
        m.malicious_points = match spec.trigger {
            TriggerSpec::SpecificInput
            | TriggerSpec::Fsm { .. }
            | TriggerSpec::FsmCounter { .. } => pt.to_vec(),
            _ => Vec::new(),
        };
        if let TriggerSpec::Counter { width, .. } = spec.trigger {
            m.malicious_points = (0..width).map(|i| format!("tj_cnt{i}")).collect();
        }
        if matches!(
            spec.trigger,
            TriggerSpec::Fsm { .. } | TriggerSpec::FsmCounter { .. }
        ) {
            m.malicious_points.extend(m.state_registers.iter().cloned());
        }
    } else {
        m.assets.push(AssetTruth {
            name: "key[0]".into(),
            kind: AssetKind::Confidentiality,
        });
    }
    let mut rk = vec![k.clone()];
    for _ in 0..3 {
        let next = b.sbox_layer(rk.last().unwrap(), &table);
        rk.push(next);
    }
    let mut s: Vec<String> = pt.to_vec();
    for k in rk.iter().take(4) {
        let x: Vec<String> = (0..8).map(|i| b.w.gate("XOR", &[&s[i], &k[i]])).collect();
        s = b.sbox_layer(&x, &table);
    }
    let mut ct_d = s;
    if spec.payload == BypassMux {
        let t = trig.expect("trigger");
        ct_d = (0..8).map(|i| b.w.mux(t, &ct_d[i], &key[i])).collect();
        m.type_i_points = vec!["ct_r0".into(), "ct[0]".into()];
    }
    if let Some((se, si)) = &scan_pins {
        let t = trig.expect("trigger");
        b.w.wire("se_int");
        b.w.gate_to("OR", "se_int", &[se, t]);
        let mut prev = si.clone();
        for (i, d) in ct_d.iter_mut().enumerate() {
            *d = b.w.mux("se_int", d, &prev);
            prev = format!("ct_r{i}_q");
        }
        m.assets.clear();
        m.assets.push(AssetTruth {
            name: "se_int".into(),
            kind: AssetKind::Integrity,
        });
        m.valid_points = vec![se.clone()];
        m.malicious_points = trigger_sources(spec, m, pt);
    }
    for (i, d) in ct_d.iter().enumerate() {
        let q = b.register(&format!("ct_r{i}"), d, true);
        let o = format!("ct[{i}]");
        b.w.output(&o);
        b.w.gate_to("BUF", &o, &[&q]);
    }
    if m.assets[0].kind == AssetKind::Confidentiality {
        m.valid_points = bus("ct", 8);
    }

    let parity = || -> Vec<String> { key.to_vec() };
    match spec.payload {
        XorLfsrLeak => {
            let t = trig.expect("trigger");
            let kp = b.w.tree("XOR", &parity());
            // 4-bit PRNG, x^4 + x^3 + 1.
            let pq: Vec<String> = (0..4).map(|i| b.w.wire(&format!("tj_prng{i}_q"))).collect();
            let fb = b.w.gate("XOR", &[&pq[3], &pq[2]]);
            for i in 0..4 {
                let d = if i == 0 {
                    fb.clone()
                } else {
                    pq[i - 1].clone()
                };
                let (clk, rst) = (b.clk.clone(), b.rstn.clone());
                let pin = if i == 0 { "SN" } else { "RN" };
                b.w.dff(&format!("tj_prng{i}"), &d, &pq[i], &clk, Some((pin, &rst)));
            }
            let mixed = b.w.gate("XOR", &[&kp, &pq[0]]);
            let gated = b.w.gate("AND", &[&mixed, t]);
            let sq: Vec<String> = (0..3)
                .map(|i| b.w.wire(&format!("tj_leak_s{i}_q")))
                .collect();
            let d0 = b.w.gate("XOR", &[&gated, &sq[2]]);
            for i in 0..3 {
                let d = if i == 0 {
                    d0.clone()
                } else {
                    sq[i - 1].clone()
                };
                let (clk, rst) = (b.clk.clone(), b.rstn.clone());
                b.w.dff(
                    &format!("tj_leak_s{i}"),
                    &d,
                    &sq[i],
                    &clk,
                    Some(("RN", &rst)),
                );
            }
            b.w.output("leak");
            b.w.gate_to("BUF", "leak", &[&sq[2]]);
            m.malicious_points = vec![
                "leak".into(),
                "tj_leak_s0".into(),
                "tj_leak_s1".into(),
                "tj_leak_s2".into(),
            ];
        }
        IsolatedShiftRegister => {
            let t = trig.expect("trigger");
            let kp = b.w.tree("XOR", &parity());
            let gated = b.w.gate("AND", &[&kp, t]);
            let sq: Vec<String> = (0..4).map(|i| b.w.wire(&format!("tj_sr{i}_q"))).collect();
            let d0 = b.w.gate("XOR", &[&gated, &sq[3]]);
            for i in 0..4 {
                let d = if i == 0 {
                    d0.clone()
                } else {
                    sq[i - 1].clone()
                };
                let (clk, rst) = (b.clk.clone(), b.rstn.clone());
                b.w.dff(&format!("tj_sr{i}"), &d, &sq[i], &clk, Some(("RN", &rst)));
            }
            m.malicious_points = (0..4).map(|i| format!("tj_sr{i}")).collect();
        }
        _ => {}
    }
}

/// Points through which the trigger logic alone reaches the payload.
fn trigger_sources(spec: &FixtureSpec, m: &Manifest, data_in: &[String]) -> Vec<String> {
    match spec.trigger {
        TriggerSpec::Counter { .. } => m.state_registers.clone(),
        TriggerSpec::SpecificInput => data_in.to_vec(),
        TriggerSpec::Fsm { .. } | TriggerSpec::FsmCounter { .. } => m.state_registers.clone(),
        _ => Vec::new(),
    }
}

fn build_processor(
    b: &mut Builder,
    spec: &FixtureSpec,
    m: &mut Manifest,
    instr: &[String],
    trig: Option<&str>,
    scan_pins: Option<(String, String)>,
) {
    let ir: Vec<String> = (0..4)
        .map(|i| b.register(&format!("ir{i}"), &instr[i], true))
        .collect();
    let pc: Vec<String> = (0..4).map(|i| b.w.wire(&format!("pc{i}_q"))).collect();
    let mut carry = "1'b1".to_string();
    let mut pc_d = Vec::new();
    for i in 0..4 {
        let inc = b.w.gate("XOR", &[&pc[i], &carry]);
        carry = b.w.gate("AND", &[&pc[i], &carry]);
        let jump = if i < 3 { ir[i].clone() } else { "1'b0".into() };
        pc_d.push(b.w.mux(&ir[3], &inc, &jump));
    }
    if let Some((se, si)) = &scan_pins {
        let t = trig.expect("trigger");
        b.w.wire("se_int");
        b.w.gate_to("OR", "se_int", &[se, t]);
        let mut prev = si.clone();
        for (i, d) in pc_d.iter_mut().enumerate() {
            *d = b.w.mux("se_int", d, &prev);
            prev = pc[i].clone();
        }
        m.assets.push(AssetTruth {
            name: "se_int".into(),
            kind: AssetKind::Integrity,
        });
        m.valid_points = vec![se.clone()];
        m.malicious_points = trigger_sources(spec, m, instr);
    }
    for i in 0..4 {
        let (clk, rst) = (b.clk.clone(), b.rstn.clone());
        b.w.dff(
            &format!("pc{i}"),
            &pc_d[i],
            &pc[i],
            &clk,
            Some(("RN", &rst)),
        );
    }
    let mut pa_d = pc.clone();
    if spec.payload == Payload::ControlHijack {
        let t = trig.expect("trigger");
        let mal: u64 = b.rng.gen_range(1..16);
        pa_d = (0..4)
            .map(|i| {
                let c = if mal >> i & 1 == 1 { "1'b1" } else { "1'b0" };
                b.w.mux(t, &pc[i], c)
            })
            .collect();
        m.malicious_points = trigger_sources(spec, m, instr);
    }
    for (i, d) in pa_d.iter().enumerate() {
        let q = b.register(&format!("pa{i}"), d, true);
        let o = format!("pa[{i}]");
        b.w.output(&o);
        b.w.gate_to("BUF", &o, &[&q]);
    }
    if m.assets.is_empty() {
        m.assets.push(AssetTruth {
            name: "pa0".into(),
            kind: AssetKind::Integrity,
        });
        m.valid_points = instr.to_vec();
    }
}

/// Small random sequential circuit for oracle cross-checks.
#[derive(Clone, Debug)]
pub struct RandomFixture {
    pub netlist: String,
    pub asset: String,
    pub depth: usize,
    pub data_inputs: usize,
}

/// Random circuit with at most 6 data inputs and 4 flip-flops (any mix of
/// resettable and free power-up), used with a frame bound of at most 3.
pub fn random_fixture(seed: u64) -> RandomFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = NetlistWriter::new(&format!("rnd{seed}"));
    let n_pi = rng.gen_range(2..=6);
    let n_ff = rng.gen_range(0..=4);
    let clk = if n_ff > 0 {
        w.input("clk")
    } else {
        String::new()
    };
    let resets: Vec<bool> = (0..n_ff).map(|_| rng.gen_bool(0.5)).collect();
    let rstn = if resets.contains(&true) {
        w.input("rstn")
    } else {
        String::new()
    };
    let n_gates = rng.gen_range(4..=14);
    let depth = rng.gen_range(1..=3);
    let mut nets: Vec<String> = (0..n_pi).map(|i| w.input(&format!("p{i}"))).collect();
    let ff_q: Vec<String> = (0..n_ff).map(|i| w.wire(&format!("r{i}_q"))).collect();
    nets.extend(ff_q.iter().cloned());
    let kinds = [
        "AND", "OR", "NAND", "NOR", "XOR", "XNOR", "NOT", "BUF", "MUX2",
    ];
    for _ in 0..n_gates {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = match kind {
            "NOT" | "BUF" => 1,
            "MUX2" => 3,
            _ => rng.gen_range(2..=3),
        };
        let ins: Vec<String> = (0..arity)
            .map(|_| nets[rng.gen_range(0..nets.len())].clone())
            .collect();
        let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
        let out = w.gate(kind, &refs);
        nets.push(out);
    }
    for (i, q) in ff_q.iter().enumerate() {
        let d = nets[rng.gen_range(n_pi..nets.len())].clone();
        let d = if d == *q {
            nets[rng.gen_range(0..n_pi)].clone()
        } else {
            d
        };
        let reset = resets[i].then_some(("RN", rstn.as_str()));
        w.dff(&format!("r{i}"), &d, q, &clk, reset);
    }
    let n_po = rng.gen_range(1..=3);
    for i in 0..n_po {
        let src = nets[rng.gen_range(n_pi..nets.len())].clone();
        let o = format!("o{i}");
        w.output(&o);
        w.gate_to("BUF", &o, &[&src]);
    }
    RandomFixture {
        netlist: w.finish(),
        asset: "p0".into(),
        depth,
        data_inputs: n_pi,
    }
}
