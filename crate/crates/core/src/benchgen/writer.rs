use std::fmt::Write;

/// Accumulates a netlist in the textual grammar, handing out fresh names.
#[derive(Debug, Default)]
pub struct NetlistWriter {
    module: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wires: Vec<String>,
    body: Vec<String>,
    next: usize,
}

impl NetlistWriter {
    pub fn new(module: &str) -> Self {
        NetlistWriter {
            module: module.to_string(),
            ..Default::default()
        }
    }

    pub fn input(&mut self, name: &str) -> String {
        self.inputs.push(name.to_string());
        name.to_string()
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn wire(&mut self, name: &str) -> String {
        self.wires.push(name.to_string());
        name.to_string()
    }

    pub fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        let n = format!("{prefix}_{}", self.next);
        self.wires.push(n.clone());
        n
    }

    /// Instantiates a cell driving `out`.
    pub fn gate_to(&mut self, kind: &str, out: &str, ins: &[&str]) {
        self.next += 1;
        let pins: &[&str] = match kind {
            "MUX2" => &["S", "A", "B"],
            _ => &["A", "B", "C", "D"],
        };
        let mut s = format!("  {kind} u{} (.Y({out})", self.next);
        for (p, i) in pins.iter().zip(ins) {
            write!(s, ", .{p}({i})").unwrap();
        }
        s.push_str(");");
        self.body.push(s);
    }

    /// Instantiates a cell driving a fresh wire and returns the wire.
    pub fn gate(&mut self, kind: &str, ins: &[&str]) -> String {
        let out = self.fresh("n");
        self.gate_to(kind, &out, ins);
        out
    }

    /// `mux(s, a, b)` is `b` when `s` is high.
    pub fn mux(&mut self, s: &str, a: &str, b: &str) -> String {
        self.gate("MUX2", &[s, a, b])
    }

    /// Balanced tree of 2..4-input gates of `kind` (AND, OR or XOR).
    pub fn tree(&mut self, kind: &str, ins: &[String]) -> String {
        match ins.len() {
            0 => panic!("empty gate tree"),
            1 => ins[0].clone(),
            2..=4 => {
                let r: Vec<&str> = ins.iter().map(String::as_str).collect();
                self.gate(kind, &r)
            }
            _ => {
                let parts: Vec<String> = ins.chunks(4).map(|c| self.tree(kind, c)).collect();
                self.tree(kind, &parts)
            }
        }
    }

    /// Equality comparator against a constant.
    pub fn eq_const(&mut self, bits: &[String], value: u64) -> String {
        let lits: Vec<String> = bits
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if value >> i & 1 == 1 {
                    b.clone()
                } else {
                    self.gate("NOT", &[b])
                }
            })
            .collect();
        self.tree("AND", &lits)
    }

    /// Flip-flop; `reset` is `Some(("RN" | "SN", net))`.
    pub fn dff(&mut self, name: &str, d: &str, q: &str, clk: &str, reset: Option<(&str, &str)>) {
        let mut s = format!("  DFF {name} (.D({d}), .Q({q}), .CK({clk})");
        if let Some((pin, net)) = reset {
            write!(s, ", .{pin}({net})").unwrap();
        }
        s.push_str(");");
        self.body.push(s);
    }

    pub fn latch(&mut self, name: &str, d: &str, q: &str, gate: &str) {
        self.body
            .push(format!("  DLATCH {name} (.D({d}), .Q({q}), .G({gate}));"));
    }

    pub fn comment(&mut self, text: &str) {
        self.body.push(format!("  // {text}"));
    }

    pub fn finish(self) -> String {
        let mut s = String::new();
        let mut ports = self.inputs.clone();
        ports.extend(self.outputs.iter().cloned());
        writeln!(s, "module {} ({});", self.module, ports.join(", ")).unwrap();
        if !self.inputs.is_empty() {
            writeln!(s, "  input {};", self.inputs.join(", ")).unwrap();
        }
        if !self.outputs.is_empty() {
            writeln!(s, "  output {};", self.outputs.join(", ")).unwrap();
        }
        for chunk in self.wires.chunks(16) {
            writeln!(s, "  wire {};", chunk.join(", ")).unwrap();
        }
        for line in &self.body {
            s.push_str(line);
            s.push('\n');
        }
        s.push_str("endmodule\n");
        s
    }
}
