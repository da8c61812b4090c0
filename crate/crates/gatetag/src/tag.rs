//! Text-attributed graphs and their dataset format.
//!
//! Each gate of a (sub)netlist becomes a node carrying a composed text
//! card, one line, fixed template:
//!
//! ```text
//! name=<instance> type=<cell> expr=<expression> phys=(<8 floats>)
//! ```
//!
//! where `<expression>` is the gate's k-level fan-in expression in
//! canonical printed form (a register's expression is its own output
//! symbol) and the floats are the cell's physical attributes at 4
//! significant digits. Full-precision physical values live in
//! [`PhysVector`] beside a z-normalized copy fitted on corpus statistics.
//! Edges follow signal flow, driver to sink.
//!
//! Serialized corpora are line-delimited. Per graph: a header line
//!
//! ```text
//! TAG1<TAB>source=<id>, nodes=<m>, edges=<e>, vocab=<hex64>, cls=<0|1>, checksum=<hex64>
//! ```
//!
//! (fields tab-separated, shown here with commas), then `m` node lines
//! `N <id> <label> <raw,…> <norm,…> <text>` and `e` edge lines
//! `E <src> <dst>`, all tab-separated, floats at 9 significant digits.
//! The checksum is FNV-1a over the node and edge lines; the vocab field
//! fingerprints the gate-type vocabulary so datasets cannot silently mix
//! label spaces.

use crate::expr::{equivalent, expr_of_gate, to_text, BoolExpr, ExtractError};
use crate::netlist::{
    CellDef, CellKind, CellLibrary, NetDriver, Netlist, NetlistBuilder, PHYS_DIMS,
};
use crate::par::ordered_map;
use crate::util::{fmt_f64, fmt_sig, fnv1a64, round_f64};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

/// Ordered gate-type names; node labels index into it. Derived from the
/// cell library so every dataset built against the same library shares one
/// label space, fingerprinted by [`GateTypeVocab::hash`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateTypeVocab {
    names: Vec<String>,
}

impl GateTypeVocab {
    pub fn from_library(lib: &CellLibrary) -> Self {
        GateTypeVocab { names: lib.sorted_names() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.names.join("\n").as_bytes())
    }
}

/// Per-component mean and standard deviation of physical attributes over
/// a corpus; constant components normalize to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysStats {
    pub mean: [f64; PHYS_DIMS],
    pub std: [f64; PHYS_DIMS],
}

impl PhysStats {
    /// Mean 0, std 1: normalization becomes the identity.
    pub fn identity() -> Self {
        PhysStats { mean: [0.0; PHYS_DIMS], std: [1.0; PHYS_DIMS] }
    }

    pub fn fit(rows: impl Iterator<Item = [f64; PHYS_DIMS]>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; PHYS_DIMS];
        let mut sumsq = [0.0; PHYS_DIMS];
        for row in rows {
            n += 1;
            for i in 0..PHYS_DIMS {
                sum[i] += row[i];
                sumsq[i] += row[i] * row[i];
            }
        }
        assert!(n > 0, "cannot fit statistics on an empty corpus");
        let mut mean = [0.0; PHYS_DIMS];
        let mut std = [0.0; PHYS_DIMS];
        for i in 0..PHYS_DIMS {
            mean[i] = sum[i] / n as f64;
            std[i] = (sumsq[i] / n as f64 - mean[i] * mean[i]).max(0.0).sqrt();
        }
        PhysStats { mean, std }
    }

    /// Fit over every gate of every netlist, weighted by occurrence.
    pub fn fit_netlists<'a>(ns: impl Iterator<Item = &'a Netlist>, lib: &CellLibrary) -> Self {
        Self::fit(ns.flat_map(|n| {
            n.gates().iter().map(|g| {
                lib.get(&g.cell).expect("netlist validated against this library").phys.as_array()
            })
        }))
    }

    pub fn normalize(&self, raw: &[f64; PHYS_DIMS]) -> [f64; PHYS_DIMS] {
        let mut out = [0.0; PHYS_DIMS];
        for i in 0..PHYS_DIMS {
            out[i] = if self.std[i] < 1e-12 { 0.0 } else { (raw[i] - self.mean[i]) / self.std[i] };
        }
        out
    }
}

/// Physical attributes of one node: library units plus the z-normalized
/// copy. Both are snapped to 9 significant digits at construction so that
/// dataset round trips are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysVector {
    pub raw: [f64; PHYS_DIMS],
    pub norm: [f64; PHYS_DIMS],
}

impl PhysVector {
    pub fn new(raw: [f64; PHYS_DIMS], stats: &PhysStats) -> Self {
        let norm = stats.normalize(&raw);
        PhysVector { raw: raw.map(round_f64), norm: norm.map(round_f64) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagNode {
    pub id: usize,
    pub text: String,
    pub phys: PhysVector,
    pub gate_type_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagGraph {
    pub source: String,
    pub nodes: Vec<TagNode>,
    /// Driver → sink pairs, deduplicated, sorted.
    pub edges: Vec<(usize, usize)>,
    /// The virtual graph-summary node is added at encode time, never here.
    pub cls_present: bool,
    pub vocab_hash: u64,
}

fn node_text(instance: &str, cell: &CellDef, expr_text: &str) -> String {
    let phys: Vec<String> =
        cell.phys.as_array().iter().map(|&x| fmt_sig(x, 4)).collect();
    let text = format!(
        "name={instance} type={} expr={expr_text} phys=({})",
        cell.name,
        phys.join(",")
    );
    debug_assert!(!text.contains('\n') && !text.contains('\t'));
    text
}

/// Build the text-attributed graph of a netlist: one node per gate in id
/// order, expressions extracted at depth `k`, edges along net connectivity.
pub fn build_tag(
    n: &Netlist,
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
) -> Result<TagGraph, ExtractError> {
    let mut nodes = Vec::with_capacity(n.gates().len());
    for g in n.gates() {
        let cell = lib.get(&g.cell).expect("netlist validated against this library");
        let expr_text = match g.kind {
            CellKind::Register => g.instance_name.clone(),
            CellKind::Combinational => to_text(&expr_of_gate(n, lib, g.id, k)?),
        };
        nodes.push(TagNode {
            id: g.id,
            text: node_text(&g.instance_name, cell, &expr_text),
            phys: PhysVector::new(cell.phys.as_array(), stats),
            gate_type_label: vocab
                .label(&g.cell)
                .expect("vocabulary built from the same library"),
        });
    }
    let mut edges = BTreeSet::new();
    for net in n.nets() {
        if let NetDriver::Gate(d) = net.driver {
            for &s in &net.sinks {
                edges.insert((d, s));
            }
        }
    }
    Ok(TagGraph {
        source: n.name().to_string(),
        nodes,
        edges: edges.into_iter().collect(),
        cls_present: false,
        vocab_hash: vocab.hash(),
    })
}

// ---------------------------------------------------------------------
// Function-preserving netlist augmentation.

/// Library cells classified by function shape, resolved once per library.
/// Everything is detected by truth-table equivalence, not by cell name.
struct LibShapes {
    inverter: Option<String>,
    buffer: Option<String>,
    and2: Option<String>,
    or2: Option<String>,
    nor_like: Vec<String>,
    nand_like: Vec<String>,
    /// Per cell: input pin index pairs the function is symmetric in.
    sym_pairs: HashMap<String, Vec<(usize, usize)>>,
}

fn swap_vars(e: &BoolExpr, a: &str, b: &str) -> BoolExpr {
    match e {
        BoolExpr::Var(v) if v == a => BoolExpr::var(b),
        BoolExpr::Var(v) if v == b => BoolExpr::var(a),
        BoolExpr::Var(_) | BoolExpr::Const(_) => e.clone(),
        BoolExpr::Not(x) => BoolExpr::not(swap_vars(x, a, b)),
        BoolExpr::And(xs) => BoolExpr::and(xs.iter().map(|x| swap_vars(x, a, b)).collect()),
        BoolExpr::Or(xs) => BoolExpr::or(xs.iter().map(|x| swap_vars(x, a, b)).collect()),
        BoolExpr::Xor(x, y) => BoolExpr::xor(swap_vars(x, a, b), swap_vars(y, a, b)),
    }
}

impl LibShapes {
    fn scan(lib: &CellLibrary) -> Self {
        let mut shapes = LibShapes {
            inverter: None,
            buffer: None,
            and2: None,
            or2: None,
            nor_like: Vec::new(),
            nand_like: Vec::new(),
            sym_pairs: HashMap::new(),
        };
        for cell in lib.cells() {
            let Some(f) = &cell.function else { continue };
            let pins: Vec<BoolExpr> =
                cell.inputs.iter().map(|p| BoolExpr::var(p.as_str())).collect();
            match pins.len() {
                1 => {
                    if shapes.inverter.is_none() && equivalent(f, &BoolExpr::not(pins[0].clone()))
                    {
                        shapes.inverter = Some(cell.name.clone());
                    }
                    if shapes.buffer.is_none() && equivalent(f, &pins[0]) {
                        shapes.buffer = Some(cell.name.clone());
                    }
                }
                2 => {
                    let and = BoolExpr::and(pins.clone());
                    let or = BoolExpr::or(pins.clone());
                    if shapes.and2.is_none() && equivalent(f, &and) {
                        shapes.and2 = Some(cell.name.clone());
                    }
                    if shapes.or2.is_none() && equivalent(f, &or) {
                        shapes.or2 = Some(cell.name.clone());
                    }
                    if equivalent(f, &BoolExpr::not(or)) {
                        shapes.nor_like.push(cell.name.clone());
                    }
                    if equivalent(f, &BoolExpr::not(and)) {
                        shapes.nand_like.push(cell.name.clone());
                    }
                }
                _ => {}
            }
            let mut pairs = Vec::new();
            for i in 0..cell.inputs.len() {
                for j in i + 1..cell.inputs.len() {
                    if equivalent(f, &swap_vars(f, &cell.inputs[i], &cell.inputs[j])) {
                        pairs.push((i, j));
                    }
                }
            }
            if !pairs.is_empty() {
                shapes.sym_pairs.insert(cell.name.clone(), pairs);
            }
        }
        shapes
    }
}

#[derive(Clone)]
struct EditGate {
    instance: String,
    cell: String,
    inputs: Vec<String>,
    output: String,
}

/// A netlist unpacked into name-based declarations that transforms can
/// splice without tracking ids.
struct Edit {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wires: Vec<String>,
    gates: Vec<EditGate>,
    taken: HashSet<String>,
    fresh: usize,
}

impl Edit {
    fn from_netlist(n: &Netlist) -> Self {
        let inputs: Vec<String> =
            n.primary_inputs().iter().map(|&i| n.net(i).name.clone()).collect();
        let outputs: Vec<String> =
            n.primary_outputs().iter().map(|&i| n.net(i).name.clone()).collect();
        let wires: Vec<String> = (0..n.nets().len())
            .filter(|i| !n.primary_inputs().contains(i) && !n.primary_outputs().contains(i))
            .map(|i| n.net(i).name.clone())
            .collect();
        let gates: Vec<EditGate> = n
            .gates()
            .iter()
            .map(|g| EditGate {
                instance: g.instance_name.clone(),
                cell: g.cell.clone(),
                inputs: g.input_nets.iter().map(|&i| n.net(i).name.clone()).collect(),
                output: n.net(g.output_net).name.clone(),
            })
            .collect();
        let mut taken: HashSet<String> = inputs.iter().cloned().collect();
        taken.extend(outputs.iter().cloned());
        taken.extend(wires.iter().cloned());
        taken.extend(gates.iter().map(|g| g.instance.clone()));
        Edit { name: n.name().to_string(), inputs, outputs, wires, gates, taken, fresh: 0 }
    }

    fn fresh_name(&mut self, prefix: &str) -> String {
        loop {
            let name = format!("{prefix}{}", self.fresh);
            self.fresh += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    fn fresh_wire(&mut self) -> String {
        let w = self.fresh_name("aw");
        self.wires.push(w.clone());
        w
    }

    /// Nets read by at least one gate, sorted for deterministic site picks.
    fn read_nets(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.gates.iter().flat_map(|g| g.inputs.iter()).collect();
        set.into_iter().cloned().collect()
    }

    fn rewire_reads(&mut self, from: &str, to: &str) {
        for g in &mut self.gates {
            for i in &mut g.inputs {
                if i == from {
                    *i = to.to_string();
                }
            }
        }
    }

    fn build(&self, lib: &CellLibrary) -> Netlist {
        let mut b = NetlistBuilder::new(&self.name);
        for n in &self.inputs {
            b.add_input(n).expect("names stay unique under edits");
        }
        for n in &self.outputs {
            b.add_output(n).expect("names stay unique under edits");
        }
        for n in &self.wires {
            b.add_wire(n).expect("names stay unique under edits");
        }
        for g in &self.gates {
            let inputs: Vec<usize> =
                g.inputs.iter().map(|n| b.net_id(n).expect("declared above")).collect();
            let out = b.net_id(&g.output).expect("declared above");
            b.add_gate(&g.instance, &g.cell, &inputs, out)
                .expect("names stay unique under edits");
        }
        b.finish(lib).expect("transforms preserve validity")
    }
}

/// Insert an identity path after a read net: two inverters, or one buffer.
/// Every gate read of the net moves to the path's end; drivers and primary
/// outputs are untouched.
fn apply_path_insert(edit: &mut Edit, rng: &mut ChaCha8Rng, shapes: &LibShapes, double: bool) -> bool {
    let cells: Vec<&String> = if double {
        match &shapes.inverter {
            Some(c) => vec![c, c],
            None => return false,
        }
    } else {
        match &shapes.buffer {
            Some(c) => vec![c],
            None => return false,
        }
    };
    let sites = edit.read_nets();
    if sites.is_empty() {
        return false;
    }
    let x = sites[rng.gen_range(0..sites.len())].clone();
    let hops: Vec<String> = cells.iter().map(|_| edit.fresh_wire()).collect();
    edit.rewire_reads(&x, hops.last().expect("at least one hop"));
    let mut src = x;
    for (cell, hop) in cells.into_iter().zip(&hops) {
        let inst = edit.fresh_name("ag");
        edit.gates.push(EditGate {
            instance: inst,
            cell: cell.clone(),
            inputs: vec![src],
            output: hop.clone(),
        });
        src = hop.clone();
    }
    true
}

/// Replace a NOR-shaped gate with AND of inverted inputs (or a NAND-shaped
/// one with OR of inverted inputs).
fn apply_de_morgan(edit: &mut Edit, rng: &mut ChaCha8Rng, shapes: &LibShapes) -> bool {
    let Some(inv) = shapes.inverter.clone() else { return false };
    let mut sites: Vec<(usize, String)> = Vec::new();
    for (i, g) in edit.gates.iter().enumerate() {
        if shapes.nor_like.contains(&g.cell) {
            if let Some(and2) = &shapes.and2 {
                sites.push((i, and2.clone()));
            }
        } else if shapes.nand_like.contains(&g.cell) {
            if let Some(or2) = &shapes.or2 {
                sites.push((i, or2.clone()));
            }
        }
    }
    if sites.is_empty() {
        return false;
    }
    let (idx, target_cell) = sites[rng.gen_range(0..sites.len())].clone();
    let old = edit.gates[idx].clone();
    let w0 = edit.fresh_wire();
    let w1 = edit.fresh_wire();
    let ia = edit.fresh_name("ag");
    let ib = edit.fresh_name("ag");
    edit.gates[idx] = EditGate {
        instance: old.instance,
        cell: target_cell,
        inputs: vec![w0.clone(), w1.clone()],
        output: old.output,
    };
    edit.gates.push(EditGate {
        instance: ia,
        cell: inv.clone(),
        inputs: vec![old.inputs[0].clone()],
        output: w0,
    });
    edit.gates.push(EditGate {
        instance: ib,
        cell: inv,
        inputs: vec![old.inputs[1].clone()],
        output: w1,
    });
    true
}

/// Swap two inputs the gate's function is symmetric in.
fn apply_commutative_swap(edit: &mut Edit, rng: &mut ChaCha8Rng, shapes: &LibShapes) -> bool {
    let mut sites: Vec<(usize, usize, usize)> = Vec::new();
    for (i, g) in edit.gates.iter().enumerate() {
        if let Some(pairs) = shapes.sym_pairs.get(&g.cell) {
            sites.extend(pairs.iter().map(|&(a, b)| (i, a, b)));
        }
    }
    if sites.is_empty() {
        return false;
    }
    let (idx, a, b) = sites[rng.gen_range(0..sites.len())];
    edit.gates[idx].inputs.swap(a, b);
    true
}

/// Remove a buffer-shaped gate whose output is not a primary output,
/// rewiring its readers to its input.
fn apply_buffer_removal(edit: &mut Edit, rng: &mut ChaCha8Rng, shapes: &LibShapes) -> bool {
    let Some(buf) = &shapes.buffer else { return false };
    let outputs: HashSet<&String> = edit.outputs.iter().collect();
    let sites: Vec<usize> = edit
        .gates
        .iter()
        .enumerate()
        .filter(|(_, g)| g.cell == *buf && !outputs.contains(&g.output))
        .map(|(i, _)| i)
        .collect();
    if sites.is_empty() {
        return false;
    }
    let idx = sites[rng.gen_range(0..sites.len())];
    let old = edit.gates.remove(idx);
    edit.rewire_reads(&old.output, &old.inputs[0]);
    true
}

/// Apply 1–5 random function-preserving transforms. When a drawn transform
/// has no applicable site the others are tried in turn (the commutative
/// swap is the fallback of last resort); if nothing at all applies the
/// netlist is rebuilt unchanged.
pub fn augment_netlist(n: &Netlist, lib: &CellLibrary, seed: u64) -> Netlist {
    let shapes = LibShapes::scan(lib);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edit = Edit::from_netlist(n);
    let count = rng.gen_range(1..=5);
    for _ in 0..count {
        let start = rng.gen_range(0..5usize);
        let applied = (0..5).any(|off| match (start + off) % 5 {
            0 => apply_path_insert(&mut edit, &mut rng, &shapes, true),
            1 => apply_de_morgan(&mut edit, &mut rng, &shapes),
            2 => apply_path_insert(&mut edit, &mut rng, &shapes, false),
            3 => apply_buffer_removal(&mut edit, &mut rng, &shapes),
            _ => apply_commutative_swap(&mut edit, &mut rng, &shapes),
        });
        if !applied {
            log::debug!("no augmentation applicable to `{}`", n.name());
            break;
        }
    }
    edit.build(lib)
}

/// Transform the source netlist, then rebuild its graph with the same
/// vocabulary and normalization statistics.
pub fn augment_graph(
    n: &Netlist,
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    seed: u64,
) -> Result<(TagGraph, Netlist), ExtractError> {
    let aug = augment_netlist(n, lib, seed);
    let graph = build_tag(&aug, lib, k, vocab, stats)?;
    Ok((graph, aug))
}

// ---------------------------------------------------------------------
// Dataset serialization.

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("line {line}: unsupported record version `{found}`")]
    Version { line: usize, found: String },
    #[error("graph at line {line}: checksum mismatch")]
    Checksum { line: usize },
    #[error("graph at line {line}: vocabulary hash {got:016x} != expected {want:016x}")]
    VocabHash { line: usize, want: u64, got: u64 },
}

fn floats_csv(xs: &[f64; PHYS_DIMS]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

pub fn serialize_graph(g: &TagGraph) -> String {
    assert!(
        !g.source.contains('\t') && !g.source.contains('\n'),
        "source ids are single tokens"
    );
    let mut body = String::new();
    for n in &g.nodes {
        body.push_str(&format!(
            "N\t{}\t{}\t{}\t{}\t{}\n",
            n.id,
            n.gate_type_label,
            floats_csv(&n.phys.raw),
            floats_csv(&n.phys.norm),
            n.text
        ));
    }
    for &(s, d) in &g.edges {
        body.push_str(&format!("E\t{s}\t{d}\n"));
    }
    format!(
        "TAG1\tsource={}\tnodes={}\tedges={}\tvocab={:016x}\tcls={}\tchecksum={:016x}\n{body}",
        g.source,
        g.nodes.len(),
        g.edges.len(),
        g.vocab_hash,
        u8::from(g.cls_present),
        fnv1a64(body.as_bytes())
    )
}

/// Graphs concatenated in order; serialization is per-graph parallel.
pub fn serialize_corpus(graphs: &[TagGraph]) -> String {
    ordered_map(graphs, |_, g| serialize_graph(g)).concat()
}

struct HeaderFields {
    source: String,
    nodes: usize,
    edges: usize,
    vocab: u64,
    cls: bool,
    checksum: u64,
}

fn parse_header(line: &str, lineno: usize) -> Result<HeaderFields, TagError> {
    let fmt = |msg: &str| TagError::Format { line: lineno, msg: msg.to_string() };
    let mut parts = line.split('\t');
    let version = parts.next().unwrap_or_default();
    if version != "TAG1" {
        return Err(TagError::Version { line: lineno, found: version.to_string() });
    }
    let mut source = None;
    let mut nodes = None;
    let mut edges = None;
    let mut vocab = None;
    let mut cls = None;
    let mut checksum = None;
    for part in parts {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| fmt(&format!("malformed header field `{part}`")))?;
        match key {
            "source" => source = Some(val.to_string()),
            "nodes" => nodes = Some(val.parse().map_err(|_| fmt("bad node count"))?),
            "edges" => edges = Some(val.parse().map_err(|_| fmt("bad edge count"))?),
            "vocab" => {
                vocab = Some(u64::from_str_radix(val, 16).map_err(|_| fmt("bad vocab hash"))?)
            }
            "cls" => cls = Some(val == "1"),
            "checksum" => {
                checksum =
                    Some(u64::from_str_radix(val, 16).map_err(|_| fmt("bad checksum"))?)
            }
            other => return Err(fmt(&format!("unknown header field `{other}`"))),
        }
    }
    Ok(HeaderFields {
        source: source.ok_or_else(|| fmt("missing source"))?,
        nodes: nodes.ok_or_else(|| fmt("missing nodes"))?,
        edges: edges.ok_or_else(|| fmt("missing edges"))?,
        vocab: vocab.ok_or_else(|| fmt("missing vocab"))?,
        cls: cls.ok_or_else(|| fmt("missing cls"))?,
        checksum: checksum.ok_or_else(|| fmt("missing checksum"))?,
    })
}

fn parse_floats(s: &str, lineno: usize) -> Result<[f64; PHYS_DIMS], TagError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != PHYS_DIMS {
        return Err(TagError::Format {
            line: lineno,
            msg: format!("expected {PHYS_DIMS} floats, found {}", parts.len()),
        });
    }
    let mut out = [0.0; PHYS_DIMS];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.parse().map_err(|_| TagError::Format {
            line: lineno,
            msg: format!("bad float `{p}`"),
        })?;
    }
    Ok(out)
}

/// Parse a whole corpus. When `expect_vocab` is given, every graph's vocab
/// fingerprint must match it.
pub fn deserialize_corpus(
    text: &str,
    expect_vocab: Option<u64>,
) -> Result<Vec<TagGraph>, TagError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut graphs = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].is_empty() {
            at += 1;
            continue;
        }
        let head_line = at + 1; // 1-based for messages
        let h = parse_header(lines[at], head_line)?;
        let body_len = h.nodes + h.edges;
        if at + 1 + body_len > lines.len() {
            return Err(TagError::Format {
                line: lines.len(),
                msg: "truncated graph record".to_string(),
            });
        }
        let body = &lines[at + 1..at + 1 + body_len];
        let mut hashed = String::new();
        for l in body {
            hashed.push_str(l);
            hashed.push('\n');
        }
        if fnv1a64(hashed.as_bytes()) != h.checksum {
            return Err(TagError::Checksum { line: head_line });
        }
        if let Some(want) = expect_vocab {
            if h.vocab != want {
                return Err(TagError::VocabHash { line: head_line, want, got: h.vocab });
            }
        }

        let mut nodes = Vec::with_capacity(h.nodes);
        for (i, l) in body[..h.nodes].iter().enumerate() {
            let lineno = head_line + 1 + i;
            let fmt = |msg: String| TagError::Format { line: lineno, msg };
            let mut f = l.splitn(6, '\t');
            if f.next() != Some("N") {
                return Err(fmt("expected node record".to_string()));
            }
            let id: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fmt("bad node id".to_string()))?;
            if id != i {
                return Err(fmt(format!("node id {id} out of order (expected {i})")));
            }
            let label: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fmt("bad gate type label".to_string()))?;
            let raw = parse_floats(f.next().ok_or_else(|| fmt("missing raw floats".into()))?, lineno)?;
            let norm =
                parse_floats(f.next().ok_or_else(|| fmt("missing norm floats".into()))?, lineno)?;
            let text = f.next().ok_or_else(|| fmt("missing text".into()))?.to_string();
            if text.is_empty() {
                return Err(fmt("empty node text".to_string()));
            }
            nodes.push(TagNode {
                id,
                text,
                phys: PhysVector { raw, norm },
                gate_type_label: label,
            });
        }
        let mut edges = Vec::with_capacity(h.edges);
        for (i, l) in body[h.nodes..].iter().enumerate() {
            let lineno = head_line + 1 + h.nodes + i;
            let fmt = |msg: String| TagError::Format { line: lineno, msg };
            let mut f = l.split('\t');
            if f.next() != Some("E") {
                return Err(fmt("expected edge record".to_string()));
            }
            let src: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fmt("bad edge source".to_string()))?;
            let dst: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fmt("bad edge sink".to_string()))?;
            if src >= h.nodes || dst >= h.nodes {
                return Err(fmt(format!("edge ({src}, {dst}) out of range")));
            }
            edges.push((src, dst));
        }
        graphs.push(TagGraph {
            source: h.source,
            nodes,
            edges,
            cls_present: h.cls,
            vocab_hash: h.vocab,
        });
        at += 1 + body_len;
    }
    Ok(graphs)
}

/// Corpus-level counts for the `stats` report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub graphs: usize,
    pub nodes_total: usize,
    pub edges_total: usize,
    pub tokens_total: usize,
}

impl CorpusStats {
    pub fn report(&self) -> String {
        let avg = |total: usize| {
            if self.graphs == 0 { 0.0 } else { total as f64 / self.graphs as f64 }
        };
        format!(
            "data {}\nnodes_avg {}\nedges_avg {}\ntokens_avg {}\n",
            self.graphs,
            fmt_f64(avg(self.nodes_total)),
            fmt_f64(avg(self.edges_total)),
            fmt_f64(avg(self.tokens_total)),
        )
    }
}

/// `count_tokens` is the tokenizer's counting function, injected to keep
/// this module independent of the encoder.
pub fn corpus_stats(graphs: &[TagGraph], count_tokens: &dyn Fn(&str) -> usize) -> CorpusStats {
    let mut s = CorpusStats { graphs: graphs.len(), nodes_total: 0, edges_total: 0, tokens_total: 0 };
    for g in graphs {
        s.nodes_total += g.nodes.len();
        s.edges_total += g.edges.len();
        s.tokens_total += g.nodes.iter().map(|n| count_tokens(&n.text)).sum::<usize>();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::chunk;
    use crate::netlist::{
        demo_library, netlists_equivalent, parse_netlist, random_netlist, RandomNetlistCfg,
    };

    const FIG_NETLIST: &str = include_str!("../../../fixtures/fig3b.net");

    fn fig() -> (CellLibrary, Netlist, GateTypeVocab) {
        let lib = demo_library();
        let n = parse_netlist(FIG_NETLIST, &lib).unwrap();
        let vocab = GateTypeVocab::from_library(&lib);
        (lib, n, vocab)
    }

    #[test]
    fn vocab_is_sorted_and_stable() {
        let lib = demo_library();
        let vocab = GateTypeVocab::from_library(&lib);
        assert_eq!(vocab.len(), 17);
        assert_eq!(vocab.name(0), "AND2");
        assert!(vocab.label("NOR2").is_some());
        assert_eq!(vocab.label("missing"), None);
        assert_eq!(vocab.hash(), GateTypeVocab::from_library(&lib).hash());
    }

    #[test]
    fn phys_stats_normalize_to_zero_mean_unit_std() {
        let lib = demo_library();
        let n = random_netlist(&lib, &RandomNetlistCfg::default());
        let stats = PhysStats::fit_netlists(std::iter::once(&n), &lib);
        let rows: Vec<[f64; PHYS_DIMS]> = n
            .gates()
            .iter()
            .map(|g| stats.normalize(&lib.get(&g.cell).unwrap().phys.as_array()))
            .collect();
        for c in 0..PHYS_DIMS {
            let mean: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
            let var: f64 = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>()
                / rows.len() as f64;
            assert!(mean.abs() < 1e-6, "component {c} mean {mean}");
            let std = var.sqrt();
            assert!(std < 1e-12 || (std - 1.0).abs() < 1e-6, "component {c} std {std}");
        }
        // constant component → normalized to exactly zero
        let const_stats = PhysStats::fit([[2.0; PHYS_DIMS]; 3].into_iter());
        assert_eq!(const_stats.normalize(&[2.0; PHYS_DIMS]), [0.0; PHYS_DIMS]);
    }

    #[test]
    fn fragment_graph_has_the_documented_card() {
        let (lib, n, vocab) = fig();
        let g = build_tag(&n, &lib, 2, &vocab, &PhysStats::identity()).unwrap();
        assert_eq!(g.nodes.len(), 5);
        let u3 = &g.nodes[n.gate_by_name("U3").unwrap()];
        assert_eq!(
            u3.text,
            "name=U3 type=NOR2 expr=!(((R1 ^ R2)) | (!R2)) \
             phys=(1.300,1.900,0.06000,0.9000,0.2500,2.700,1.600,0.4900)"
        );
        assert_eq!(u3.gate_type_label, vocab.label("NOR2").unwrap());
        let r1 = &g.nodes[n.gate_by_name("R1").unwrap()];
        assert!(r1.text.starts_with("name=R1 type=DFF expr=R1 phys=("));
        // R1→x1, R2→x1, R2→i1, x1→U3, i1→U3, U3→R2 (feedback through `out`)
        assert_eq!(g.edges, vec![(0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (4, 1)]);
        assert!(!g.cls_present);
    }

    #[test]
    fn empty_netlist_builds_an_empty_graph() {
        let lib = demo_library();
        let n = parse_netlist("module empty (a);\n input a;\nendmodule\n", &lib).unwrap();
        let vocab = GateTypeVocab::from_library(&lib);
        let g = build_tag(&n, &lib, 2, &vocab, &PhysStats::identity()).unwrap();
        assert!(g.nodes.is_empty());
        assert!(g.edges.is_empty());
    }

    #[test]
    fn corpus_round_trips_byte_and_value_exact() {
        let lib = demo_library();
        let vocab = GateTypeVocab::from_library(&lib);
        let mut graphs = Vec::new();
        for seed in 0..10 {
            let cfg = RandomNetlistCfg { seed, comb_gates: 20, registers: 3, ..Default::default() };
            let n = random_netlist(&lib, &cfg);
            let stats = PhysStats::fit_netlists(std::iter::once(&n), &lib);
            for cone in chunk(&n, &lib).cones() {
                graphs.push(build_tag(&cone.subnetlist, &lib, 2, &vocab, &stats).unwrap());
            }
        }
        assert!(graphs.len() > 30);
        let text = serialize_corpus(&graphs);
        let back = deserialize_corpus(&text, Some(vocab.hash())).unwrap();
        assert_eq!(back, graphs);
        assert_eq!(serialize_corpus(&back), text);
    }

    #[test]
    fn corrupted_records_are_rejected_with_positions() {
        let (lib, n, vocab) = fig();
        let g = build_tag(&n, &lib, 2, &vocab, &PhysStats::identity()).unwrap();
        let text = serialize_graph(&g);

        let flipped = text.replace("type=NOR2", "type=NOR9");
        assert_eq!(
            deserialize_corpus(&flipped, None).unwrap_err(),
            TagError::Checksum { line: 1 }
        );

        let bad_version = text.replace("TAG1", "TAG9");
        assert!(matches!(
            deserialize_corpus(&bad_version, None).unwrap_err(),
            TagError::Version { line: 1, .. }
        ));

        assert!(matches!(
            deserialize_corpus(&text, Some(vocab.hash() ^ 1)).unwrap_err(),
            TagError::VocabHash { .. }
        ));

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            deserialize_corpus(truncated, None).unwrap_err(),
            TagError::Format { .. } | TagError::Checksum { .. }
        ));
    }

    #[test]
    fn double_inverter_insertion_cancels() {
        let lib = demo_library();
        let shapes = LibShapes::scan(&lib);
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let c = b.add_input("b").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g", "NOR2", &[a, c], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let mut edit = Edit::from_netlist(&n);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(apply_path_insert(&mut edit, &mut rng, &shapes, true));
        let aug = edit.build(&lib);
        assert_eq!(aug.gates().len(), 3);
        assert!(netlists_equivalent(&n, &aug, &lib, 0, 0));
    }

    #[test]
    fn de_morgan_substitution_is_sound() {
        let lib = demo_library();
        let shapes = LibShapes::scan(&lib);
        assert_eq!(shapes.inverter.as_deref(), Some("INV"));
        assert_eq!(shapes.buffer.as_deref(), Some("BUF"));
        assert!(shapes.nor_like.contains(&"NOR2".to_string()));
        assert!(shapes.nand_like.contains(&"NAND2".to_string()));

        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let c = b.add_input("b").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g", "NOR2", &[a, c], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let mut edit = Edit::from_netlist(&n);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(apply_de_morgan(&mut edit, &mut rng, &shapes));
        let aug = edit.build(&lib);
        assert_eq!(aug.gates().len(), 3);
        let cells: BTreeSet<&str> = aug.gates().iter().map(|g| g.cell.as_str()).collect();
        assert_eq!(cells, BTreeSet::from(["AND2", "INV"]));
        assert!(netlists_equivalent(&n, &aug, &lib, 0, 0));
    }

    #[test]
    fn buffer_insert_and_remove_are_sound() {
        let lib = demo_library();
        let shapes = LibShapes::scan(&lib);
        let (_, n, _) = fig();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut edit = Edit::from_netlist(&n);
        assert!(apply_path_insert(&mut edit, &mut rng, &shapes, false));
        let with_buf = edit.build(&lib);
        assert_eq!(with_buf.gates().len(), n.gates().len() + 1);
        assert!(netlists_equivalent(&n, &with_buf, &lib, 0, 0));

        let mut edit = Edit::from_netlist(&with_buf);
        assert!(apply_buffer_removal(&mut edit, &mut rng, &shapes));
        let removed = edit.build(&lib);
        assert!(netlists_equivalent(&n, &removed, &lib, 0, 0));
    }

    #[test]
    fn augmentation_preserves_function_on_random_circuits() {
        let lib = demo_library();
        for seed in 0..12 {
            let cfg = RandomNetlistCfg {
                seed,
                num_inputs: 4,
                num_outputs: 2,
                comb_gates: 25,
                registers: 3,
                ..Default::default()
            };
            let n = random_netlist(&lib, &cfg);
            let aug = augment_netlist(&n, &lib, seed.wrapping_mul(31) + 7);
            assert!(
                netlists_equivalent(&n, &aug, &lib, 64, seed),
                "augmentation changed function for seed {seed}"
            );
        }
    }

    #[test]
    fn augmentation_is_deterministic() {
        let lib = demo_library();
        let n = random_netlist(&lib, &RandomNetlistCfg::default());
        let a = augment_netlist(&n, &lib, 42);
        let b = augment_netlist(&n, &lib, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn stats_report_counts() {
        let (lib, n, vocab) = fig();
        let g = build_tag(&n, &lib, 2, &vocab, &PhysStats::identity()).unwrap();
        let s = corpus_stats(
            std::slice::from_ref(&g),
            &|t: &str| t.split_whitespace().count(),
        );
        assert_eq!(s.graphs, 1);
        assert_eq!(s.nodes_total, 5);
        assert_eq!(s.edges_total, 6);
        assert!(s.report().starts_with("data 1\nnodes_avg 5.00000000\n"));
    }
}
