//! The structural netlist subset.
//!
//! ```text
//! module NAME ( port, port, … );
//!   input a;            // also: input a, b;
//!   output y;
//!   wire w1, w2;
//!   CELL inst ( .PIN(net), .PIN(net), … );
//!   …
//! endmodule
//! ```
//!
//! Named port connections only; buses are pre-flattened into scalar nets
//! (bracketed names like `d[3]` are plain identifiers here). `//` and
//! `/* … */` comments are ignored. Nets must be declared before an
//! instance uses them. Registers may connect clock/reset pins that the
//! library does not declare; they are accepted and dropped.

use super::cell::{CellLibrary};
use super::ir::{Netlist, NetlistBuilder, NetlistError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Comma => write!(f, ","),
            Tok::Semi => write!(f, ";"),
            Tok::Dot => write!(f, "."),
        }
    }
}

fn line_col(text: &str, off: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in text.char_indices() {
        if i >= off {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'[' | b']')
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, NetlistError> {
    let syntax = |off: usize, msg: String| {
        let (line, col) = line_col(text, off);
        NetlistError::Syntax { line, col, msg }
    };
    let b = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            c if c.is_ascii_whitespace() => i += 1,
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                loop {
                    if i + 1 >= b.len() {
                        return Err(syntax(start, "unterminated comment".to_string()));
                    }
                    if b[i] == b'*' && b[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            b';' => {
                toks.push((Tok::Semi, i));
                i += 1;
            }
            b'.' => {
                toks.push((Tok::Dot, i));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < b.len() && is_ident_byte(b[i]) {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().expect("in bounds");
                return Err(syntax(i, format!("unexpected character `{ch}`")));
            }
        }
    }
    Ok(toks)
}

struct P<'a> {
    text: &'a str,
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl P<'_> {
    fn syntax(&self, off: usize, msg: String) -> NetlistError {
        let (line, col) = line_col(self.text, off);
        NetlistError::Syntax { line, col, msg }
    }

    fn eof_off(&self) -> usize {
        self.text.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.at).cloned();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), NetlistError> {
        match self.bump() {
            Some((t, _)) if t == *want => Ok(()),
            Some((t, off)) => Err(self.syntax(off, format!("expected {what}, found `{t}`"))),
            None => Err(self.syntax(self.eof_off(), format!("expected {what}, found end of file"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), NetlistError> {
        match self.bump() {
            Some((Tok::Ident(s), off)) => Ok((s, off)),
            Some((t, off)) => Err(self.syntax(off, format!("expected {what}, found `{t}`"))),
            None => Err(self.syntax(self.eof_off(), format!("expected {what}, found end of file"))),
        }
    }

    fn eat_comma(&mut self) -> bool {
        if self.peek() == Some(&Tok::Comma) {
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Parse and validate a netlist against `lib`. Gate ids follow source
/// order; net ids are grouped inputs / outputs / wires in declaration
/// order.
pub fn parse_netlist(text: &str, lib: &CellLibrary) -> Result<Netlist, NetlistError> {
    let mut p = P { text, toks: lex(text)?, at: 0 };

    let (kw, off) = p.ident("`module`")?;
    if kw != "module" {
        return Err(p.syntax(off, format!("expected `module`, found `{kw}`")));
    }
    let (module_name, _) = p.ident("module name")?;
    let mut builder = NetlistBuilder::new(&module_name);

    let mut ports: Vec<String> = Vec::new();
    p.expect(&Tok::LParen, "`(`")?;
    if p.peek() != Some(&Tok::RParen) {
        loop {
            let (port, _) = p.ident("port name")?;
            ports.push(port);
            if !p.eat_comma() {
                break;
            }
        }
    }
    p.expect(&Tok::RParen, "`)`")?;
    p.expect(&Tok::Semi, "`;`")?;

    let mut declared_ports: Vec<String> = Vec::new();
    loop {
        let (word, word_off) = p.ident("a declaration, an instance, or `endmodule`")?;
        match word.as_str() {
            "endmodule" => break,
            "input" | "output" | "wire" => {
                loop {
                    let (net, net_off) = p.ident("net name")?;
                    let res = match word.as_str() {
                        "input" => builder.add_input(&net),
                        "output" => builder.add_output(&net),
                        _ => builder.add_wire(&net),
                    };
                    res.map_err(|e| match e {
                        NetlistError::DuplicateNet { name } => {
                            p.syntax(net_off, format!("duplicate net `{name}`"))
                        }
                        other => other,
                    })?;
                    if word != "wire" {
                        declared_ports.push(net);
                    }
                    if !p.eat_comma() {
                        break;
                    }
                }
                p.expect(&Tok::Semi, "`;`")?;
            }
            _ => {
                let cell = word;
                let _ = word_off;
                let (instance, _) = p.ident("instance name")?;
                p.expect(&Tok::LParen, "`(`")?;
                let mut conns: Vec<(String, usize)> = Vec::new();
                if p.peek() != Some(&Tok::RParen) {
                    loop {
                        p.expect(&Tok::Dot, "`.PIN(net)`")?;
                        let (pin, _) = p.ident("pin name")?;
                        p.expect(&Tok::LParen, "`(`")?;
                        let (net, _) = p.ident("net name")?;
                        let net_id =
                            builder.net_id(&net).ok_or_else(|| NetlistError::UnknownNet {
                                net: net.clone(),
                                instance: instance.clone(),
                            })?;
                        conns.push((pin, net_id));
                        p.expect(&Tok::RParen, "`)`")?;
                        if !p.eat_comma() {
                            break;
                        }
                    }
                }
                p.expect(&Tok::RParen, "`)`")?;
                p.expect(&Tok::Semi, "`;`")?;
                builder.add_gate_named(&instance, &cell, conns)?;
            }
        }
    }
    if let Some((_, off)) = p.bump() {
        return Err(p.syntax(off, "text after `endmodule`".to_string()));
    }

    for port in &ports {
        if !declared_ports.contains(port) {
            return Err(NetlistError::UndeclaredPort { port: port.clone() });
        }
    }
    for name in &declared_ports {
        if !ports.contains(name) {
            return Err(NetlistError::PortNotListed { kind: "port", name: name.clone() });
        }
    }

    builder.finish(lib)
}

/// Deterministic netlist text: ports inputs-then-outputs, one declaration
/// per line in net-id order, instances in gate-id order with pins in cell
/// declaration order (output last). Ignored register pins from the source
/// are not reproduced. `parse_netlist(emit_netlist(n)) == n`.
pub fn emit_netlist(n: &Netlist, lib: &CellLibrary) -> String {
    let mut out = String::new();
    let port_names: Vec<&str> = n
        .primary_inputs()
        .iter()
        .chain(n.primary_outputs())
        .map(|&id| n.net(id).name.as_str())
        .collect();
    out.push_str(&format!("module {} ({});\n", n.name(), port_names.join(", ")));
    for &id in n.primary_inputs() {
        out.push_str(&format!("  input {};\n", n.net(id).name));
    }
    for &id in n.primary_outputs() {
        out.push_str(&format!("  output {};\n", n.net(id).name));
    }
    for (id, net) in n.nets().iter().enumerate() {
        if !n.primary_inputs().contains(&id) && !n.primary_outputs().contains(&id) {
            out.push_str(&format!("  wire {};\n", net.name));
        }
    }
    for g in n.gates() {
        let cell = lib.get(&g.cell).expect("netlist validated against this library");
        let mut pins: Vec<String> = g
            .input_nets
            .iter()
            .zip(&cell.inputs)
            .map(|(&net, pin)| format!(".{pin}({})", n.net(net).name))
            .collect();
        pins.push(format!(".{}({})", cell.output, n.net(g.output_net).name));
        out.push_str(&format!("  {} {} ({});\n", g.cell, g.instance_name, pins.join(", ")));
    }
    out.push_str("endmodule\n");
    out
}

/// One-line summary used by the CLI `parse` command.
pub fn describe(n: &Netlist) -> String {
    format!(
        "module {}: {} gates ({} comb, {} reg), {} nets, {} inputs, {} outputs",
        n.name(),
        n.gates().len(),
        n.num_comb_gates(),
        n.registers().len(),
        n.nets().len(),
        n.primary_inputs().len(),
        n.primary_outputs().len()
    )
}

#[cfg(test)]
mod tests {
    use super::super::cell::demo_library;
    use super::*;

    const FIG_NETLIST: &str = include_str!("../../../../fixtures/fig3b.net");

    #[test]
    fn parses_the_two_register_fragment() {
        let lib = demo_library();
        let n = parse_netlist(FIG_NETLIST, &lib).unwrap();
        assert_eq!(n.registers().len(), 2);
        assert_eq!(n.num_comb_gates(), 3);
        assert_eq!(n.gates().len(), 5);
        // clk is a declared input with no sinks: register clock pins are
        // accepted and dropped.
        let clk = n.net_by_name("clk").unwrap();
        assert!(n.net(clk).sinks.is_empty());
        let u3 = n.gate_by_name("U3").unwrap();
        assert_eq!(n.gate(u3).cell, "NOR2");
    }

    #[test]
    fn empty_module_parses_to_zero_gates() {
        let lib = demo_library();
        let n = parse_netlist("module empty (a);\n input a;\nendmodule\n", &lib).unwrap();
        assert_eq!(n.gates().len(), 0);
        assert_eq!(n.primary_inputs().len(), 1);
    }

    #[test]
    fn round_trips_structurally_and_bytewise_after_one_emit() {
        let lib = demo_library();
        let first = parse_netlist(FIG_NETLIST, &lib).unwrap();
        let text = emit_netlist(&first, &lib);
        let second = parse_netlist(&text, &lib).unwrap();
        assert_eq!(first, second);
        assert_eq!(emit_netlist(&second, &lib), text);
    }

    #[test]
    fn comments_and_positions() {
        let lib = demo_library();
        let src = "// header\nmodule m (a, y); /* ports */\n input a;\n output y;\n BUF b (.A(a), .Y(y));\nendmodule\n";
        assert!(parse_netlist(src, &lib).is_ok());
        let err = parse_netlist("module m (a);\n input a$;\nendmodule", &lib).unwrap_err();
        assert_eq!(
            err,
            NetlistError::Syntax { line: 2, col: 9, msg: "unexpected character `$`".into() }
        );
    }

    #[test]
    fn error_paths() {
        let lib = demo_library();
        let bad = |src: &str| parse_netlist(src, &lib).unwrap_err();
        assert!(matches!(
            bad("module m (a); input a; FOO u (.A(a)); endmodule"),
            NetlistError::UnknownCell { .. }
        ));
        assert!(matches!(
            bad("module m (a); input a; INV u (.A(b), .Y(a)); endmodule"),
            NetlistError::UnknownNet { .. }
        ));
        assert!(matches!(
            bad("module m (a, y); input a; output y; INV u (.A(a), .Z(y)); endmodule"),
            NetlistError::MissingPin { .. }
        ));
        assert!(matches!(
            bad("module m (a, y); input a; output y; wire w; INV u (.A(a), .Y(y), .B(w)); endmodule"),
            NetlistError::UnknownPin { .. }
        ));
        assert!(matches!(
            bad("module m (a); input a; input a; endmodule"),
            NetlistError::Syntax { .. }
        ));
        assert!(matches!(
            bad("module m (a, ghost); input a; endmodule"),
            NetlistError::UndeclaredPort { .. }
        ));
        assert!(matches!(
            bad("module m (); input a; endmodule"),
            NetlistError::PortNotListed { .. }
        ));
        assert!(matches!(bad("module m (a) input a; endmodule"), NetlistError::Syntax { .. }));
    }
}
