use std::collections::HashMap;

use super::{
    Cell, CellId, CellKind, CircuitGraph, Driver, FfId, FlipFlop, Location, Net, NetId,
    NetlistError, Reset, ResetKind, SeqKind, Sink,
};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Const(bool),
    Punct(char),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'/' | b'.' | b'[' | b']')
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn loc(&self) -> Location {
        Location {
            line: self.line,
            col: self.col,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, Location)>, NetlistError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.bump();
                continue;
            }
            if c == b'/' && self.src.get(self.pos + 1) == Some(&b'/') {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.bump();
                }
                continue;
            }
            let loc = self.loc();
            if is_ident_start(c) {
                let start = self.pos;
                while self.pos < self.src.len() && is_ident_char(self.src[self.pos]) {
                    self.bump();
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                out.push((Tok::Ident(s.to_string()), loc));
            } else if c == b'1' && self.src[self.pos..].starts_with(b"1'b") {
                for _ in 0..3 {
                    self.bump();
                }
                match self.src.get(self.pos) {
                    Some(b'0') => out.push((Tok::Const(false), loc)),
                    Some(b'1') => out.push((Tok::Const(true), loc)),
                    _ => {
                        return Err(NetlistError::Syntax {
                            loc,
                            msg: "expected 1'b0 or 1'b1".into(),
                        })
                    }
                }
                self.bump();
            } else if matches!(c, b'(' | b')' | b';' | b',' | b'.') {
                self.bump();
                out.push((Tok::Punct(c as char), loc));
            } else {
                return Err(NetlistError::Syntax {
                    loc,
                    msg: format!("unexpected character `{}`", c as char),
                });
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, Location)>,
    pos: usize,
    eof: Location,
}

/// A pin connection: net name (or constant) and where it appeared.
#[derive(Clone, Debug)]
enum Conn {
    Net(String),
    Const(bool),
}

struct Instance {
    kind: String,
    name: String,
    pins: Vec<(String, Conn, Location)>,
    loc: Location,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn loc(&self) -> Location {
        self.toks.get(self.pos).map(|(_, l)| *l).unwrap_or(self.eof)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, NetlistError> {
        Err(NetlistError::Syntax {
            loc: self.loc(),
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_punct(&mut self, c: char) -> Result<(), NetlistError> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{c}`")),
        }
    }

    fn ident(&mut self) -> Result<String, NetlistError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<(String, Location)>, NetlistError> {
        let mut out = Vec::new();
        loop {
            let loc = self.loc();
            out.push((self.ident()?, loc));
            match self.peek() {
                Some(Tok::Punct(',')) => self.pos += 1,
                _ => return Ok(out),
            }
        }
    }

    fn instance(&mut self, kind: String, loc: Location) -> Result<Instance, NetlistError> {
        let name = self.ident()?;
        self.expect_punct('(')?;
        let mut pins = Vec::new();
        if self.peek() != Some(&Tok::Punct(')')) {
            loop {
                self.expect_punct('.')?;
                let pin = self.ident()?;
                self.expect_punct('(')?;
                let ploc = self.loc();
                let conn = match self.next() {
                    Some(Tok::Ident(s)) => Conn::Net(s),
                    Some(Tok::Const(v)) => Conn::Const(v),
                    _ => {
                        self.pos -= 1;
                        return self.err("expected net name or constant");
                    }
                };
                self.expect_punct(')')?;
                pins.push((pin, conn, ploc));
                match self.peek() {
                    Some(Tok::Punct(',')) => self.pos += 1,
                    _ => break,
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct(';')?;
        Ok(Instance {
            kind,
            name,
            pins,
            loc,
        })
    }
}

#[derive(Default)]
struct Builder {
    nets: Vec<Net>,
    index: HashMap<String, NetId>,
    first_use: Vec<Option<Location>>,
    driver_loc: Vec<Option<Location>>,
}

impl Builder {
    fn net(&mut self, name: &str, loc: Location) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = NetId(self.nets.len() as u32);
        self.nets.push(Net {
            id,
            name: name.to_string(),
            driver: None,
            sinks: Vec::new(),
        });
        self.index.insert(name.to_string(), id);
        self.first_use.push(Some(loc));
        self.driver_loc.push(None);
        id
    }

    fn conn(&mut self, c: &Conn, loc: Location) -> Result<NetId, NetlistError> {
        match c {
            Conn::Net(n) => Ok(self.net(n, loc)),
            Conn::Const(v) => {
                let name = if *v { "1'b1" } else { "1'b0" };
                let id = self.net(name, loc);
                self.nets[id.index()].driver = Some(Driver::Const(*v));
                Ok(id)
            }
        }
    }

    fn drive(&mut self, net: NetId, d: Driver, loc: Location) -> Result<(), NetlistError> {
        let n = &mut self.nets[net.index()];
        if n.driver.is_some() {
            return Err(NetlistError::MultiDriven {
                net: n.name.clone(),
                loc,
            });
        }
        n.driver = Some(d);
        self.driver_loc[net.index()] = Some(loc);
        Ok(())
    }

    fn sink(&mut self, net: NetId, s: Sink) {
        let sinks = &mut self.nets[net.index()].sinks;
        if !sinks.contains(&s) {
            sinks.push(s);
        }
    }
}

fn pin_lookup<'i>(
    inst: &'i Instance,
    allowed: &[&str],
) -> Result<HashMap<&'i str, (&'i Conn, Location)>, NetlistError> {
    let mut map = HashMap::new();
    for (pin, conn, loc) in &inst.pins {
        if !allowed.contains(&pin.as_str()) {
            return Err(NetlistError::Syntax {
                loc: *loc,
                msg: format!("pin `.{pin}` not valid on {}", inst.kind),
            });
        }
        if map.insert(pin.as_str(), (conn, *loc)).is_some() {
            return Err(NetlistError::Syntax {
                loc: *loc,
                msg: format!("pin `.{pin}` connected twice"),
            });
        }
    }
    Ok(map)
}

/// Parses the structural netlist subset into a validated [`CircuitGraph`].
///
/// Latches and uncontrollable flip-flops are accepted and recorded in
/// [`CircuitGraph::unanalyzable`].
pub fn parse_netlist(source: &str) -> Result<CircuitGraph, NetlistError> {
    let toks = Lexer::new(source).tokens()?;
    let eof = toks
        .last()
        .map(|(_, l)| *l)
        .unwrap_or(Location { line: 1, col: 1 });
    let mut p = Parser { toks, pos: 0, eof };

    match p.next() {
        Some(Tok::Ident(k)) if k == "module" => {}
        _ => {
            p.pos = 0;
            return p.err("expected `module`");
        }
    }
    let module_name = p.ident()?;
    p.expect_punct('(')?;
    let ports = if p.peek() == Some(&Tok::Punct(')')) {
        Vec::new()
    } else {
        p.ident_list()?
    };
    p.expect_punct(')')?;
    p.expect_punct(';')?;

    let mut b = Builder::default();
    let mut inputs: Vec<NetId> = Vec::new();
    let mut outputs: Vec<NetId> = Vec::new();
    let mut instances = Vec::new();

    loop {
        let loc = p.loc();
        let kw = match p.next() {
            Some(Tok::Ident(s)) => s,
            None => {
                return Err(NetlistError::Syntax {
                    loc,
                    msg: "missing `endmodule`".into(),
                })
            }
            _ => {
                p.pos -= 1;
                return p.err("expected declaration or instance");
            }
        };
        match kw.as_str() {
            "endmodule" => break,
            "input" | "output" | "wire" => {
                for (name, l) in p.ident_list()? {
                    let id = b.net(&name, l);
                    match kw.as_str() {
                        "input" => {
                            b.drive(id, Driver::Input, l)?;
                            inputs.push(id);
                        }
                        "output" if !outputs.contains(&id) => {
                            outputs.push(id);
                        }
                        _ => {}
                    }
                }
                p.expect_punct(';')?;
            }
            _ => instances.push(p.instance(kw, loc)?),
        }
    }
    if p.peek().is_some() {
        return p.err("content after `endmodule`");
    }
    for (port, loc) in &ports {
        if !b.index.contains_key(port) {
            return Err(NetlistError::Syntax {
                loc: *loc,
                msg: format!("port `{port}` has no input/output declaration"),
            });
        }
    }

    let mut cells: Vec<Cell> = Vec::new();
    let mut ffs: Vec<FlipFlop> = Vec::new();
    let mut names: HashMap<String, Location> = HashMap::new();

    for inst in &instances {
        if names.insert(inst.name.clone(), inst.loc).is_some() {
            return Err(NetlistError::Syntax {
                loc: inst.loc,
                msg: format!("duplicate instance name `{}`", inst.name),
            });
        }
        if let Some(kind) = CellKind::from_keyword(&inst.kind) {
            let mut allowed: Vec<&str> = kind.pin_names().to_vec();
            allowed.push("Y");
            let pins = pin_lookup(inst, &allowed)?;
            let (yconn, yloc) = pins.get("Y").copied().ok_or_else(|| NetlistError::Syntax {
                loc: inst.loc,
                msg: format!("{} `{}` has no output pin .Y", inst.kind, inst.name),
            })?;
            let mut in_nets = Vec::new();
            for pin in kind.pin_names() {
                match pins.get(pin) {
                    Some(&(c, l)) => in_nets.push(b.conn(c, l)?),
                    None => break,
                }
            }
            let n_inputs = pins.len() - 1;
            if in_nets.len() != n_inputs || !kind.arity().contains(&n_inputs) {
                return Err(NetlistError::Syntax {
                    loc: inst.loc,
                    msg: format!(
                        "{} `{}` has {} inputs; pins must be {:?} in order",
                        inst.kind,
                        inst.name,
                        n_inputs,
                        kind.pin_names()
                    ),
                });
            }
            let id = CellId(cells.len() as u32);
            let out = match yconn {
                Conn::Net(n) => b.net(n, yloc),
                Conn::Const(_) => {
                    return Err(NetlistError::Syntax {
                        loc: yloc,
                        msg: "cell output tied to a constant".into(),
                    })
                }
            };
            b.drive(out, Driver::Cell(id), inst.loc)?;
            for (pin, &n) in in_nets.iter().enumerate() {
                b.sink(
                    n,
                    Sink::Cell {
                        cell: id,
                        pin: pin as u8,
                    },
                );
            }
            cells.push(Cell {
                id,
                name: inst.name.clone(),
                kind,
                inputs: in_nets,
                output: out,
                loc: inst.loc,
            });
        } else if inst.kind == "DFF" || inst.kind == "DLATCH" {
            let latch = inst.kind == "DLATCH";
            let allowed: &[&str] = if latch {
                &["D", "Q", "G"]
            } else {
                &["D", "Q", "CK", "RN", "SN"]
            };
            let pins = pin_lookup(inst, allowed)?;
            let get = |pin: &str| {
                pins.get(pin).copied().ok_or_else(|| NetlistError::Syntax {
                    loc: inst.loc,
                    msg: format!("{} `{}` missing pin .{pin}", inst.kind, inst.name),
                })
            };
            let id = FfId(ffs.len() as u32);
            let (dc, dl) = get("D")?;
            let d = b.conn(dc, dl)?;
            let (qc, ql) = get("Q")?;
            let q = match qc {
                Conn::Net(n) => b.net(n, ql),
                Conn::Const(_) => {
                    return Err(NetlistError::Syntax {
                        loc: ql,
                        msg: "flip-flop output tied to a constant".into(),
                    })
                }
            };
            let (cc, cl) = get(if latch { "G" } else { "CK" })?;
            let clock = b.conn(cc, cl)?;
            let reset = match (pins.get("RN"), pins.get("SN")) {
                (Some(_), Some(_)) => {
                    return Err(NetlistError::Syntax {
                        loc: inst.loc,
                        msg: "both .RN and .SN connected".into(),
                    })
                }
                (Some(&(c, l)), None) | (None, Some(&(c, l))) => Some(Reset {
                    net: b.conn(c, l)?,
                    active_low: true,
                    kind: ResetKind::Async,
                    value: pins.contains_key("SN"),
                }),
                (None, None) => None,
            };
            b.drive(q, Driver::Ff(id), inst.loc)?;
            b.sink(d, Sink::FfData(id));
            b.sink(clock, Sink::FfClock(id));
            if let Some(r) = reset {
                b.sink(r.net, Sink::FfReset(id));
            }
            ffs.push(FlipFlop {
                id,
                name: inst.name.clone(),
                kind: if latch { SeqKind::Latch } else { SeqKind::Dff },
                d,
                q,
                clock,
                reset,
                loc: inst.loc,
            });
        } else {
            return Err(NetlistError::Syntax {
                loc: inst.loc,
                msg: format!("unknown primitive `{}`", inst.kind),
            });
        }
    }

    for net in &b.nets {
        let used = !net.sinks.is_empty() || outputs.contains(&net.id);
        if used && net.driver.is_none() {
            return Err(NetlistError::Undriven {
                net: net.name.clone(),
                loc: b.first_use[net.id.index()].unwrap_or_default(),
            });
        }
    }

    CircuitGraph::from_parts(module_name, b.nets, cells, ffs, inputs, outputs)
}
