//! Synthetic Trojan-infected netlists with ground-truth manifests.

mod fixtures;
mod writer;

pub use fixtures::{
    generate, random_fixture, AssetTruth, BenchError, Core, FixtureSpec, Manifest, Payload,
    PlantedStg, RandomFixture, TriggerSpec, TriggerTruth,
};
pub use writer::NetlistWriter;

/// The ISCAS'85 C17 benchmark.
pub const C17: &str = "\
module c17 (N1, N2, N3, N6, N7, N22, N23);
  input N1, N2, N3, N6, N7;
  output N22, N23;
  wire N10, N11, N16, N19;
  NAND NAND2_1 (.Y(N10), .A(N1), .B(N3));
  NAND NAND2_2 (.Y(N11), .A(N3), .B(N6));
  NAND NAND2_3 (.Y(N16), .A(N2), .B(N11));
  NAND NAND2_4 (.Y(N19), .A(N11), .B(N7));
  NAND NAND2_5 (.Y(N22), .A(N10), .B(N16));
  NAND NAND2_6 (.Y(N23), .A(N16), .B(N19));
endmodule
";

/// An `n`-bit binary up-counter with enable. Flip-flops `c0..` reset to
/// zero through `rstn`, outputs `cnt[i]`.
pub fn counter_netlist(n: usize) -> String {
    let mut w = NetlistWriter::new("counter");
    let clk = w.input("clk");
    let rstn = w.input("rstn");
    let en = w.input("en");
    let mut carry = en;
    for i in 0..n {
        let q = w.wire(&format!("q{i}"));
        let d = w.gate("XOR", &[&q, &carry]);
        w.dff(&format!("c{i}"), &d, &q, &clk, Some(("RN", &rstn)));
        let o = format!("cnt[{i}]");
        w.output(&o);
        w.gate_to("BUF", &o, &[&q]);
        carry = w.gate("AND", &[&q, &carry]);
    }
    w.finish()
}

/// An `n`-stage shift register from `din` to `dout`.
pub fn shift_register_netlist(n: usize) -> String {
    let mut w = NetlistWriter::new("shift");
    let clk = w.input("clk");
    let mut prev = w.input("din");
    for i in 0..n {
        let q = w.wire(&format!("s{i}_q"));
        w.dff(&format!("s{i}"), &prev, &q, &clk, None);
        prev = q;
    }
    w.output("dout");
    w.gate_to("BUF", "dout", &[&prev]);
    w.finish()
}

#[cfg(test)]
mod tests;
