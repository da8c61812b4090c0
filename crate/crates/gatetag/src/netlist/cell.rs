//! Cell definitions and the cell library file format.
//!
//! One cell per line:
//!
//! ```text
//! NAME kind in:(P1,P2,…) out:P fn:<expr> phys:(p,a,d,t,pr,l,c,r)
//! ```
//!
//! `kind` is `comb` or `reg`; registers omit `fn:` and have exactly one
//! data input. `#` starts a comment. The eight `phys` floats are power
//! (µW), area (µm²), delay (ns), toggle rate (1/ns), output-one
//! probability, load (fF), capacitance (fF), and resistance (kΩ).
//!
//! `TIE0` and `TIE1` — zero-input constant drivers — are built in and
//! always present; library files must not redefine them and `dump_library`
//! does not write them.

use crate::expr::{parse_expr, to_text, BoolExpr};
use crate::util::fmt_f64;
use std::collections::HashMap;
use thiserror::Error;

pub const PHYS_DIMS: usize = 8;

/// Per-cell physical attributes, in library units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysAttrs {
    pub power: f64,
    pub area: f64,
    pub delay: f64,
    pub toggle_rate: f64,
    pub probability: f64,
    pub load: f64,
    pub capacitance: f64,
    pub resistance: f64,
}

impl PhysAttrs {
    pub const ZERO: PhysAttrs = PhysAttrs {
        power: 0.0,
        area: 0.0,
        delay: 0.0,
        toggle_rate: 0.0,
        probability: 0.0,
        load: 0.0,
        capacitance: 0.0,
        resistance: 0.0,
    };

    pub fn as_array(&self) -> [f64; PHYS_DIMS] {
        [
            self.power,
            self.area,
            self.delay,
            self.toggle_rate,
            self.probability,
            self.load,
            self.capacitance,
            self.resistance,
        ]
    }

    pub fn from_array(a: [f64; PHYS_DIMS]) -> Self {
        PhysAttrs {
            power: a[0],
            area: a[1],
            delay: a[2],
            toggle_rate: a[3],
            probability: a[4],
            load: a[5],
            capacitance: a[6],
            resistance: a[7],
        }
    }

    /// All fields finite, probability in [0,1], everything else >= 0.
    pub fn validate(&self) -> Result<(), String> {
        let a = self.as_array();
        if a.iter().any(|x| !x.is_finite()) {
            return Err("physical attributes must be finite".to_string());
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(format!("probability {} outside [0,1]", self.probability));
        }
        if a.iter().any(|&x| x < 0.0) {
            return Err("physical attributes must be non-negative".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Combinational,
    Register,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellDef {
    pub name: String,
    pub kind: CellKind,
    pub inputs: Vec<String>,
    pub output: String,
    /// Output function over the input pins; `None` for registers.
    pub function: Option<BoolExpr>,
    pub phys: PhysAttrs,
}

impl CellDef {
    pub fn is_register(&self) -> bool {
        self.kind == CellKind::Register
    }

    fn validate(&self) -> Result<(), String> {
        let mut pins: Vec<&String> = self.inputs.iter().collect();
        pins.push(&self.output);
        for (i, p) in pins.iter().enumerate() {
            if !is_identifier(p) {
                return Err(format!("bad pin name `{p}`"));
            }
            if pins[..i].contains(p) {
                return Err(format!("duplicate pin name `{p}`"));
            }
        }
        if !is_identifier(&self.name) {
            return Err(format!("bad cell name `{}`", self.name));
        }
        match self.kind {
            CellKind::Register => {
                if self.function.is_some() {
                    return Err("register cells take no function".to_string());
                }
                if self.inputs.len() != 1 {
                    return Err(format!(
                        "register cells have exactly one data input, got {}",
                        self.inputs.len()
                    ));
                }
            }
            CellKind::Combinational => {
                let Some(f) = &self.function else {
                    return Err("combinational cells need a function".to_string());
                };
                for v in f.vars() {
                    if !self.inputs.contains(&v) {
                        return Err(format!("function uses `{v}` which is not an input pin"));
                    }
                }
            }
        }
        self.phys.validate()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '[' | ']'))
}

pub const TIE_CELLS: [&str; 2] = ["TIE0", "TIE1"];

fn tie_cell(one: bool) -> CellDef {
    CellDef {
        name: if one { "TIE1" } else { "TIE0" }.to_string(),
        kind: CellKind::Combinational,
        inputs: Vec::new(),
        output: "Y".to_string(),
        function: Some(BoolExpr::Const(one)),
        phys: PhysAttrs {
            probability: if one { 1.0 } else { 0.0 },
            ..PhysAttrs::ZERO
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLibrary {
    cells: Vec<CellDef>,
    index: HashMap<String, usize>,
}

impl CellLibrary {
    /// A library containing only the built-in tie cells.
    pub fn builtin() -> Self {
        let mut lib = CellLibrary { cells: Vec::new(), index: HashMap::new() };
        for one in [false, true] {
            lib.push(tie_cell(one)).expect("builtin cells are valid");
        }
        lib
    }

    /// Validate and add a cell. Functions are stored canonicalized, which
    /// is what makes `load_library(dump_library(lib))` reproduce `lib`
    /// exactly.
    pub fn push(&mut self, mut cell: CellDef) -> Result<(), String> {
        cell.validate()?;
        cell.function = cell.function.map(|f| f.canonical());
        if self.index.contains_key(&cell.name) {
            return Err(format!("duplicate cell `{}`", cell.name));
        }
        self.index.insert(cell.name.clone(), self.cells.len());
        self.cells.push(cell);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CellDef> {
        self.index.get(name).map(|&i| &self.cells[i])
    }

    /// All cells, built-ins first, then file/insertion order.
    pub fn cells(&self) -> &[CellDef] {
        &self.cells
    }

    pub fn is_builtin(name: &str) -> bool {
        TIE_CELLS.contains(&name)
    }

    /// Cell names in sorted order — the stable gate-type vocabulary.
    pub fn sorted_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.cells.iter().map(|c| c.name.clone()).collect();
        names.sort();
        names
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LibraryError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: {msg}")]
    BadCell { line: usize, msg: String },
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> LibraryError {
    LibraryError::Syntax { line, col, msg: msg.into() }
}

/// Split off the first whitespace-delimited word; returns (word, rest,
/// offset of rest within the input).
fn take_word(s: &str) -> (&str, &str, usize) {
    let s = s.trim_start();
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    let rest = s[end..].trim_start();
    let off = s.len() - rest.len();
    (&s[..end], rest, off)
}

fn parse_cell_line(line: &str, lineno: usize) -> Result<CellDef, LibraryError> {
    // Every intermediate `rest` is a suffix of `line`, so the 1-based column
    // of whatever it starts with falls out of the lengths.
    let col_of = |tail: &str| line.len() - tail.len() + 1;

    let (name, at_kind, _) = take_word(line);
    let (kind_tok, rest, _) = take_word(at_kind);
    let kind = match kind_tok {
        "comb" => CellKind::Combinational,
        "reg" => CellKind::Register,
        other => {
            return Err(syntax(
                lineno,
                col_of(at_kind),
                format!("expected cell kind `comb` or `reg`, found `{other}`"),
            ))
        }
    };

    let rest = rest.strip_prefix("in:(").ok_or_else(|| {
        syntax(lineno, col_of(rest), "expected `in:(…)` pin list")
    })?;
    let close = rest
        .find(')')
        .ok_or_else(|| syntax(lineno, col_of(rest), "unclosed `in:(` pin list"))?;
    let inputs: Vec<String> = if rest[..close].trim().is_empty() {
        Vec::new()
    } else {
        rest[..close].split(',').map(|p| p.trim().to_string()).collect()
    };
    let rest = rest[close + 1..].trim_start();

    let rest = rest
        .strip_prefix("out:")
        .ok_or_else(|| syntax(lineno, col_of(rest), "expected `out:PIN`"))?;
    let (output, rest, _) = take_word(rest);

    let (function, rest) = if let Some(fn_rest) = rest.strip_prefix("fn:") {
        let phys_at = fn_rest.find("phys:(").ok_or_else(|| {
            syntax(lineno, col_of(fn_rest), "expected `phys:(…)` after function")
        })?;
        let text = fn_rest[..phys_at].trim();
        let expr = parse_expr(text).map_err(|e| LibraryError::BadCell {
            line: lineno,
            msg: format!("malformed function template `{text}`: {e}"),
        })?;
        (Some(expr), &fn_rest[phys_at..])
    } else {
        (None, rest)
    };

    let rest = rest
        .strip_prefix("phys:(")
        .ok_or_else(|| syntax(lineno, col_of(rest), "expected `phys:(…)`"))?;
    let close = rest
        .find(')')
        .ok_or_else(|| syntax(lineno, col_of(rest), "unclosed `phys:(`"))?;
    let nums: Vec<&str> = rest[..close].split(',').map(str::trim).collect();
    if nums.len() != PHYS_DIMS {
        return Err(syntax(
            lineno,
            col_of(rest),
            format!("expected {PHYS_DIMS} physical attributes, found {}", nums.len()),
        ));
    }
    let mut vals = [0.0f64; PHYS_DIMS];
    for (i, n) in nums.iter().enumerate() {
        vals[i] = n.parse().map_err(|_| {
            syntax(lineno, col_of(rest), format!("bad float `{n}` in phys list"))
        })?;
    }
    if !rest[close + 1..].trim().is_empty() {
        return Err(syntax(lineno, col_of(&rest[close + 1..]), "trailing text after `phys:(…)`"));
    }

    Ok(CellDef {
        name: name.to_string(),
        kind,
        inputs,
        output: output.to_string(),
        function,
        phys: PhysAttrs::from_array(vals),
    })
}

/// Parse a library file. The result always contains the tie-cell built-ins.
pub fn load_library(text: &str) -> Result<CellLibrary, LibraryError> {
    let mut lib = CellLibrary::builtin();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.find('#').map_or(raw, |at| &raw[..at]);
        if line.trim().is_empty() {
            continue;
        }
        let cell = parse_cell_line(line, lineno)?;
        lib.push(cell)
            .map_err(|msg| LibraryError::BadCell { line: lineno, msg })?;
    }
    Ok(lib)
}

/// Canonical library text: one line per non-builtin cell in insertion
/// order, expressions in canonical form without spaces, floats at 9
/// significant digits. `load_library(dump_library(lib))` reproduces `lib`,
/// and dumping again is byte-identical.
pub fn dump_library(lib: &CellLibrary) -> String {
    let mut out = String::new();
    for cell in lib.cells() {
        if CellLibrary::is_builtin(&cell.name) {
            continue;
        }
        let kind = match cell.kind {
            CellKind::Combinational => "comb",
            CellKind::Register => "reg",
        };
        out.push_str(&format!(
            "{} {} in:({}) out:{}",
            cell.name,
            kind,
            cell.inputs.join(","),
            cell.output
        ));
        if let Some(f) = &cell.function {
            out.push_str(&format!(" fn:{}", to_text(f).replace(' ', "")));
        }
        let phys: Vec<String> = cell.phys.as_array().iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&format!(" phys:({})\n", phys.join(",")));
    }
    out
}

/// The stock 15-cell demo library used by the fixtures, tests, and toy
/// corpora. Mirrors `fixtures/demo.lib`.
pub fn demo_library() -> CellLibrary {
    let mut lib = CellLibrary::builtin();
    let mut add = |name: &str, kind: CellKind, ins: &[&str], f: Option<&str>, phys: [f64; 8]| {
        let cell = CellDef {
            name: name.to_string(),
            kind,
            inputs: ins.iter().map(|s| s.to_string()).collect(),
            output: if kind == CellKind::Register { "Q" } else { "Y" }.to_string(),
            function: f.map(|t| parse_expr(t).expect("demo cell function")),
            phys: PhysAttrs::from_array(phys),
        };
        lib.push(cell).expect("demo cell");
    };
    use CellKind::{Combinational as C, Register as R};
    add("INV", C, &["A"], Some("!A"), [0.8, 1.2, 0.03, 1.5, 0.5, 2.0, 1.1, 0.45]);
    add("BUF", C, &["A"], Some("A"), [1.1, 1.6, 0.05, 1.5, 0.5, 3.2, 1.4, 0.4]);
    add("AND2", C, &["A", "B"], Some("A&B"), [1.6, 2.4, 0.07, 0.9, 0.25, 2.6, 1.8, 0.52]);
    add("AND3", C, &["A", "B", "C"], Some("A&B&C"), [2.2, 3.1, 0.09, 0.7, 0.125, 2.4, 2.3, 0.55]);
    add("OR2", C, &["A", "B"], Some("A|B"), [1.7, 2.4, 0.07, 0.9, 0.75, 2.6, 1.9, 0.5]);
    add("OR3", C, &["A", "B", "C"], Some("A|B|C"), [2.3, 3.1, 0.1, 0.7, 0.875, 2.4, 2.4, 0.53]);
    add("NAND2", C, &["A", "B"], Some("!(A&B)"), [1.2, 1.9, 0.05, 0.9, 0.75, 2.8, 1.5, 0.48]);
    add("NOR2", C, &["A", "B"], Some("!(A|B)"), [1.3, 1.9, 0.06, 0.9, 0.25, 2.7, 1.6, 0.49]);
    add("XOR2", C, &["A", "B"], Some("A^B"), [2.8, 3.6, 0.11, 1.2, 0.5, 2.2, 2.6, 0.6]);
    add("XNOR2", C, &["A", "B"], Some("!(A^B)"), [2.9, 3.6, 0.12, 1.2, 0.5, 2.2, 2.7, 0.61]);
    add("AOI21", C, &["A", "B", "C"], Some("!((A&B)|C)"), [2.0, 2.8, 0.08, 0.8, 0.375, 2.5, 2.1, 0.54]);
    add("OAI21", C, &["A", "B", "C"], Some("!((A|B)&C)"), [2.1, 2.8, 0.08, 0.8, 0.625, 2.5, 2.2, 0.54]);
    add("MUX2", C, &["A", "B", "S"], Some("(A&!S)|(B&S)"), [3.1, 4.2, 0.13, 1.0, 0.5, 2.3, 2.9, 0.58]);
    add("MAJ3", C, &["A", "B", "C"], Some("(A&B)|(A&C)|(B&C)"), [3.4, 4.8, 0.14, 0.8, 0.5, 2.1, 3.2, 0.62]);
    add("DFF", R, &["D"], None, [5.6, 9.5, 0.16, 0.5, 0.5, 3.0, 4.4, 0.35]);
    lib
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_constant_drivers() {
        let lib = CellLibrary::builtin();
        let t0 = lib.get("TIE0").unwrap();
        assert_eq!(t0.function, Some(BoolExpr::Const(false)));
        assert!(t0.inputs.is_empty());
        assert_eq!(lib.get("TIE1").unwrap().function, Some(BoolExpr::Const(true)));
    }

    #[test]
    fn parses_the_documented_examples() {
        let lib = load_library(
            "# demo\nNOR2 comb in:(A,B) out:Y fn:!(A|B) phys:(1,2,0.5,1,0.25,2,1,0.4)\n\
             DFF reg in:(D) out:Q phys:(5,9,0.2,0.5,0.5,3,4,0.3)\n",
        )
        .unwrap();
        let nor = lib.get("NOR2").unwrap();
        assert_eq!(nor.kind, CellKind::Combinational);
        assert_eq!(nor.inputs, ["A", "B"]);
        assert_eq!(nor.function, Some(parse_expr("!(A|B)").unwrap()));
        let dff = lib.get("DFF").unwrap();
        assert!(dff.is_register());
        assert_eq!(dff.function, None);
        assert_eq!(dff.phys.power, 5.0);
    }

    #[test]
    fn rejects_bad_cells() {
        let dup = "INV comb in:(A) out:Y fn:!A phys:(1,1,1,1,0.5,1,1,1)\n";
        assert!(load_library(&format!("{dup}{dup}")).is_err());
        // function over a pin that does not exist
        assert!(load_library("X comb in:(A) out:Y fn:!B phys:(1,1,1,1,0.5,1,1,1)").is_err());
        // registers have exactly one data input
        assert!(load_library("D2 reg in:(D,E) out:Q phys:(1,1,1,1,0.5,1,1,1)").is_err());
        // probability out of range
        assert!(load_library("X comb in:(A) out:Y fn:A phys:(1,1,1,1,1.5,1,1,1)").is_err());
        // redefining a builtin
        assert!(load_library("TIE0 comb in:() out:Y fn:0 phys:(0,0,0,0,0,0,0,0)").is_err());
        let err = load_library("X floop in:(A) out:Y fn:A phys:(1,1,1,1,1,1,1,1)").unwrap_err();
        assert!(matches!(err, LibraryError::Syntax { line: 1, .. }), "{err}");
    }

    #[test]
    fn demo_library_round_trips_byte_identically() {
        let lib = demo_library();
        assert_eq!(lib.cells().len(), 17); // 15 cells + 2 builtins
        let text = dump_library(&lib);
        let back = load_library(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(dump_library(&back), text);
    }

    // Set GATETAG_REGEN_FIXTURES=1 to rewrite the checked-in file.
    #[test]
    fn demo_fixture_file_is_current() {
        let want = dump_library(&demo_library());
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/demo.lib");
        if std::env::var_os("GATETAG_REGEN_FIXTURES").is_some() {
            std::fs::write(path, &want).unwrap();
        }
        let got = std::fs::read_to_string(path).unwrap();
        assert_eq!(got, want);
    }
}
