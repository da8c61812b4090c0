//! The validated circuit IR and its construction path.
//!
//! Both the text parser and programmatic callers go through
//! [`NetlistBuilder`]; `finish()` runs every structural check (cell
//! resolution, pin completeness, single driver, no combinational cycles)
//! and produces an immutable [`Netlist`]. Net ids are normalized at that
//! point — primary inputs first, then primary outputs, then wires, each in
//! declaration order — so parse/emit round trips reproduce ids exactly.

use super::cell::{is_identifier, CellKind, CellLibrary};
use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use thiserror::Error;

pub type NetId = usize;
pub type GateId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetDriver {
    PrimaryInput,
    Gate(GateId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub name: String,
    pub driver: NetDriver,
    /// Gates reading this net, in gate-id order (duplicates possible when a
    /// gate reads the same net on two pins).
    pub sinks: Vec<GateId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateInst {
    pub id: GateId,
    pub instance_name: String,
    pub cell: String,
    pub kind: CellKind,
    /// Net per declared input pin, in the cell's pin order.
    pub input_nets: Vec<NetId>,
    pub output_net: NetId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    name: String,
    gates: Vec<GateInst>,
    nets: Vec<Net>,
    primary_inputs: Vec<NetId>,
    primary_outputs: Vec<NetId>,
    registers: Vec<GateId>,
    net_index: HashMap<String, NetId>,
    gate_index: HashMap<String, GateId>,
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gates(&self) -> &[GateInst] {
        &self.gates
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn gate(&self, id: GateId) -> &GateInst {
        &self.gates[id]
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id]
    }

    pub fn primary_inputs(&self) -> &[NetId] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[NetId] {
        &self.primary_outputs
    }

    /// Register gate ids, ascending.
    pub fn registers(&self) -> &[GateId] {
        &self.registers
    }

    pub fn gate_by_name(&self, name: &str) -> Option<GateId> {
        self.gate_index.get(name).copied()
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn comb_gates(&self) -> impl Iterator<Item = &GateInst> {
        self.gates.iter().filter(|g| g.kind == CellKind::Combinational)
    }

    pub fn num_comb_gates(&self) -> usize {
        self.comb_gates().count()
    }

    /// The symbol a net contributes when it acts as an expression leaf or a
    /// free simulation source: net name for primary inputs, instance name
    /// for register outputs.
    pub fn source_symbol(&self, net: NetId) -> Option<&str> {
        match self.nets[net].driver {
            NetDriver::PrimaryInput => Some(&self.nets[net].name),
            NetDriver::Gate(g) if self.gates[g].kind == CellKind::Register => {
                Some(&self.gates[g].instance_name)
            }
            NetDriver::Gate(_) => None,
        }
    }

    /// Inverse of the expression-leaf naming scheme: a primary-input net
    /// name or a gate instance name, mapped to the net carrying its value.
    pub fn symbol_net(&self, symbol: &str) -> Option<NetId> {
        if let Some(&id) = self.net_index.get(symbol) {
            if self.nets[id].driver == NetDriver::PrimaryInput {
                return Some(id);
            }
        }
        self.gate_index.get(symbol).map(|&g| self.gates[g].output_net)
    }

    /// Free simulation sources: primary inputs then register outputs, each
    /// in id order, as (symbol, net) pairs.
    pub fn free_sources(&self) -> Vec<(String, NetId)> {
        let mut out: Vec<(String, NetId)> = self
            .primary_inputs
            .iter()
            .map(|&n| (self.nets[n].name.clone(), n))
            .collect();
        for &g in &self.registers {
            let q = self.gates[g].output_net;
            out.push((self.gates[g].instance_name.clone(), q));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown cell `{cell}` for instance `{instance}`")]
    UnknownCell { cell: String, instance: String },
    #[error("duplicate net `{name}`")]
    DuplicateNet { name: String },
    #[error("duplicate instance `{name}`")]
    DuplicateInstance { name: String },
    #[error("instance `{instance}`: cell `{cell}` has no pin `{pin}`")]
    UnknownPin { instance: String, cell: String, pin: String },
    #[error("instance `{instance}`: pin `{pin}` of cell `{cell}` is not connected")]
    MissingPin { instance: String, cell: String, pin: String },
    #[error("instance `{instance}`: pin `{pin}` connected twice")]
    DoubleConnection { instance: String, pin: String },
    #[error("unknown net `{net}` referenced by instance `{instance}`")]
    UnknownNet { net: String, instance: String },
    #[error("net `{net}` is multiply driven (by {first} and {second})")]
    MultiplyDriven { net: String, first: String, second: String },
    #[error("undriven net `{net}` used by {user}")]
    UndrivenNet { net: String, user: String },
    #[error("combinational cycle through gates: {}", gates.join(" -> "))]
    CombinationalCycle { gates: Vec<String> },
    #[error("module port `{port}` is not declared as an input or output")]
    UndeclaredPort { port: String },
    #[error("{kind} `{name}` missing from the module port list")]
    PortNotListed { kind: &'static str, name: String },
    #[error("bad {what} name `{name}`")]
    BadName { what: &'static str, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NetClass {
    Input,
    Output,
    Wire,
}

struct PendingNet {
    name: String,
    class: NetClass,
}

enum PendingConn {
    /// `.PIN(net)` pairs straight from source text.
    Named(Vec<(String, usize)>),
    /// Nets in cell pin order, output last implicit.
    Positional { inputs: Vec<usize>, output: usize },
}

struct PendingGate {
    instance: String,
    cell: String,
    conn: PendingConn,
}

/// Builder for programmatic construction and the parser back end. Net ids
/// handed out before `finish()` are provisional; `finish()` renumbers.
pub struct NetlistBuilder {
    name: String,
    nets: Vec<PendingNet>,
    net_index: HashMap<String, usize>,
    gates: Vec<PendingGate>,
    fresh: usize,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            nets: Vec::new(),
            net_index: HashMap::new(),
            gates: Vec::new(),
            fresh: 0,
        }
    }

    fn declare(&mut self, name: &str, class: NetClass) -> Result<usize, NetlistError> {
        if !is_identifier(name) {
            return Err(NetlistError::BadName { what: "net", name: name.to_string() });
        }
        if self.net_index.contains_key(name) {
            return Err(NetlistError::DuplicateNet { name: name.to_string() });
        }
        let id = self.nets.len();
        self.net_index.insert(name.to_string(), id);
        self.nets.push(PendingNet { name: name.to_string(), class });
        Ok(id)
    }

    pub fn add_input(&mut self, name: &str) -> Result<usize, NetlistError> {
        self.declare(name, NetClass::Input)
    }

    pub fn add_output(&mut self, name: &str) -> Result<usize, NetlistError> {
        self.declare(name, NetClass::Output)
    }

    pub fn add_wire(&mut self, name: &str) -> Result<usize, NetlistError> {
        self.declare(name, NetClass::Wire)
    }

    /// A wire with a generated, collision-free name.
    pub fn fresh_wire(&mut self, prefix: &str) -> usize {
        loop {
            let name = format!("{prefix}_{}", self.fresh);
            self.fresh += 1;
            if !self.net_index.contains_key(&name) {
                return self.declare(&name, NetClass::Wire).expect("fresh name");
            }
        }
    }

    pub fn net_id(&self, name: &str) -> Option<usize> {
        self.net_index.get(name).copied()
    }

    /// Add a gate with nets given in the cell's pin order.
    pub fn add_gate(
        &mut self,
        instance: &str,
        cell: &str,
        inputs: &[usize],
        output: usize,
    ) -> Result<(), NetlistError> {
        self.push_gate(instance, cell, PendingConn::Positional {
            inputs: inputs.to_vec(),
            output,
        })
    }

    /// Add a gate with named `.PIN(net)` connections.
    pub fn add_gate_named(
        &mut self,
        instance: &str,
        cell: &str,
        conns: Vec<(String, usize)>,
    ) -> Result<(), NetlistError> {
        self.push_gate(instance, cell, PendingConn::Named(conns))
    }

    fn push_gate(
        &mut self,
        instance: &str,
        cell: &str,
        conn: PendingConn,
    ) -> Result<(), NetlistError> {
        if !is_identifier(instance) {
            return Err(NetlistError::BadName { what: "instance", name: instance.to_string() });
        }
        if self.gates.iter().any(|g| g.instance == instance) {
            return Err(NetlistError::DuplicateInstance { name: instance.to_string() });
        }
        self.gates.push(PendingGate {
            instance: instance.to_string(),
            cell: cell.to_string(),
            conn,
        });
        Ok(())
    }

    pub fn finish(self, lib: &CellLibrary) -> Result<Netlist, NetlistError> {
        finish(self, lib)
    }
}

fn finish(b: NetlistBuilder, lib: &CellLibrary) -> Result<Netlist, NetlistError> {
    // Resolve cells and pins against the library, still on provisional ids.
    struct Resolved {
        instance: String,
        cell: String,
        kind: CellKind,
        inputs: Vec<usize>,
        output: usize,
    }
    let mut resolved = Vec::with_capacity(b.gates.len());
    for g in &b.gates {
        let cell = lib.get(&g.cell).ok_or_else(|| NetlistError::UnknownCell {
            cell: g.cell.clone(),
            instance: g.instance.clone(),
        })?;
        let (inputs, output) = match &g.conn {
            PendingConn::Positional { inputs, output } => {
                if inputs.len() != cell.inputs.len() {
                    return Err(NetlistError::MissingPin {
                        instance: g.instance.clone(),
                        cell: cell.name.clone(),
                        pin: cell.inputs.get(inputs.len()).cloned().unwrap_or_default(),
                    });
                }
                (inputs.clone(), *output)
            }
            PendingConn::Named(conns) => {
                let mut by_pin: HashMap<&str, usize> = HashMap::new();
                for (pin, net) in conns {
                    if by_pin.insert(pin.as_str(), *net).is_some() {
                        return Err(NetlistError::DoubleConnection {
                            instance: g.instance.clone(),
                            pin: pin.clone(),
                        });
                    }
                }
                let mut take = |pin: &str| -> Result<usize, NetlistError> {
                    by_pin.remove(pin).ok_or_else(|| NetlistError::MissingPin {
                        instance: g.instance.clone(),
                        cell: cell.name.clone(),
                        pin: pin.to_string(),
                    })
                };
                let inputs: Vec<usize> = cell
                    .inputs
                    .iter()
                    .map(|p| take(p))
                    .collect::<Result<_, _>>()?;
                let output = take(&cell.output)?;
                // Clock/reset/scan pins on registers are accepted and
                // dropped; anything unexpected on a combinational cell is an
                // error.
                if cell.kind == CellKind::Combinational {
                    if let Some(pin) = by_pin.keys().min() {
                        return Err(NetlistError::UnknownPin {
                            instance: g.instance.clone(),
                            cell: cell.name.clone(),
                            pin: pin.to_string(),
                        });
                    }
                }
                (inputs, output)
            }
        };
        resolved.push(Resolved {
            instance: g.instance.clone(),
            cell: cell.name.clone(),
            kind: cell.kind,
            inputs,
            output,
        });
    }

    // Which provisional nets are actually referenced?
    let mut used = vec![false; b.nets.len()];
    for r in &resolved {
        for &n in &r.inputs {
            used[n] = true;
        }
        used[r.output] = true;
    }
    for (i, n) in b.nets.iter().enumerate() {
        if n.class != NetClass::Wire {
            used[i] = true;
        }
    }

    // Renumber: inputs, outputs, wires — declaration order within each
    // class. Untouched wires are dropped.
    let mut remap: Vec<Option<usize>> = vec![None; b.nets.len()];
    let mut nets: Vec<Net> = Vec::new();
    let mut primary_inputs = Vec::new();
    let mut primary_outputs = Vec::new();
    for class in [NetClass::Input, NetClass::Output, NetClass::Wire] {
        for (i, pn) in b.nets.iter().enumerate() {
            if pn.class != class || !used[i] {
                if pn.class == NetClass::Wire && !used[i] {
                    log::debug!("dropping unused wire `{}`", pn.name);
                }
                continue;
            }
            let id = nets.len();
            remap[i] = Some(id);
            nets.push(Net {
                name: pn.name.clone(),
                driver: NetDriver::PrimaryInput, // placeholder, fixed below
                sinks: Vec::new(),
            });
            match class {
                NetClass::Input => primary_inputs.push(id),
                NetClass::Output => primary_outputs.push(id),
                NetClass::Wire => {}
            }
        }
    }

    // Driver and sink wiring with the single-driver check.
    let mut drivers: Vec<Option<String>> = vec![None; nets.len()];
    for &n in &primary_inputs {
        drivers[n] = Some("primary input".to_string());
    }
    let mut gates: Vec<GateInst> = Vec::new();
    let mut registers = Vec::new();
    let mut gate_index = HashMap::new();
    for (id, r) in resolved.iter().enumerate() {
        let inputs: Vec<usize> = r.inputs.iter().map(|&n| remap[n].expect("used net")).collect();
        let output = remap[r.output].expect("used net");
        let who = format!("gate `{}`", r.instance);
        if let Some(first) = &drivers[output] {
            return Err(NetlistError::MultiplyDriven {
                net: nets[output].name.clone(),
                first: first.clone(),
                second: who,
            });
        }
        drivers[output] = Some(who);
        nets[output].driver = NetDriver::Gate(id);
        for &n in &inputs {
            nets[n].sinks.push(id);
        }
        if r.kind == CellKind::Register {
            registers.push(id);
        }
        gate_index.insert(r.instance.clone(), id);
        gates.push(GateInst {
            id,
            instance_name: r.instance.clone(),
            cell: r.cell.clone(),
            kind: r.kind,
            input_nets: inputs,
            output_net: output,
        });
    }

    // Every used net needs a driver: gate inputs and primary outputs.
    for g in &gates {
        for &n in &g.input_nets {
            if drivers[n].is_none() {
                return Err(NetlistError::UndrivenNet {
                    net: nets[n].name.clone(),
                    user: format!("gate `{}`", g.instance_name),
                });
            }
        }
    }
    for &n in &primary_outputs {
        if drivers[n].is_none() {
            return Err(NetlistError::UndrivenNet {
                net: nets[n].name.clone(),
                user: "module output".to_string(),
            });
        }
    }

    let netlist = Netlist {
        name: b.name,
        net_index: nets.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect(),
        gates,
        nets,
        primary_inputs,
        primary_outputs,
        registers,
        gate_index,
    };
    check_acyclic(&netlist)?;
    Ok(netlist)
}

/// Comb-only in-degree: how many of a gate's input nets are driven by
/// combinational gates.
fn comb_indegree(n: &Netlist, g: &GateInst) -> usize {
    g.input_nets
        .iter()
        .filter(|&&net| {
            matches!(n.net(net).driver,
                NetDriver::Gate(d) if n.gate(d).kind == CellKind::Combinational)
        })
        .count()
}

fn check_acyclic(n: &Netlist) -> Result<(), NetlistError> {
    let order = kahn_comb_order(n);
    let comb_total = n.num_comb_gates();
    if order.len() == comb_total {
        return Ok(());
    }
    // Walk backward through unplaced gates until one repeats, then report
    // the loop in forward order.
    let placed: Vec<bool> = {
        let mut p = vec![false; n.gates().len()];
        for &g in &order {
            p[g] = true;
        }
        p
    };
    let start = n
        .gates()
        .iter()
        .find(|g| g.kind == CellKind::Combinational && !placed[g.id])
        .expect("cycle exists")
        .id;
    let mut seen: Vec<GateId> = Vec::new();
    let mut cur = start;
    loop {
        if let Some(at) = seen.iter().position(|&g| g == cur) {
            let mut cycle: Vec<String> = seen[at..]
                .iter()
                .rev()
                .map(|&g| n.gate(g).instance_name.clone())
                .collect();
            let head = cycle[0].clone();
            cycle.push(head);
            return Err(NetlistError::CombinationalCycle { gates: cycle });
        }
        seen.push(cur);
        cur = n
            .gate(cur)
            .input_nets
            .iter()
            .find_map(|&net| match n.net(net).driver {
                NetDriver::Gate(d)
                    if n.gate(d).kind == CellKind::Combinational && !placed[d] =>
                {
                    Some(d)
                }
                _ => None,
            })
            .expect("unplaced gate has an unplaced combinational driver");
    }
}

/// Kahn's algorithm over combinational gates with an id-ordered ready
/// queue. Returns fewer gates than exist exactly when there is a cycle.
fn kahn_comb_order(n: &Netlist) -> Vec<GateId> {
    let mut indeg: Vec<usize> = n.gates().iter().map(|g| comb_indegree(n, g)).collect();
    let mut ready: BinaryHeap<Reverse<GateId>> = n
        .gates()
        .iter()
        .filter(|g| g.kind == CellKind::Combinational && indeg[g.id] == 0)
        .map(|g| Reverse(g.id))
        .collect();
    let mut order = Vec::new();
    while let Some(Reverse(g)) = ready.pop() {
        order.push(g);
        for &sink in &n.net(n.gate(g).output_net).sinks {
            if n.gate(sink).kind != CellKind::Combinational {
                continue;
            }
            indeg[sink] -= 1;
            if indeg[sink] == 0 {
                ready.push(Reverse(sink));
            }
        }
    }
    order
}

/// Deterministic evaluation order: registers first (id order), then
/// combinational gates such that every gate follows its combinational
/// drivers; ties broken by gate id.
pub fn topo_order(n: &Netlist) -> Vec<GateId> {
    let mut order: Vec<GateId> = n.registers().to_vec();
    order.extend(kahn_comb_order(n));
    debug_assert_eq!(order.len(), n.gates().len(), "validated netlists are acyclic");
    order
}

#[cfg(test)]
mod tests {
    use super::super::cell::demo_library;
    use super::*;

    #[test]
    fn builder_produces_grouped_net_ids() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let w = b.add_wire("w").unwrap();
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g1", "INV", &[a], w).unwrap();
        b.add_gate("g2", "BUF", &[w], y).unwrap();
        let n = b.finish(&lib).unwrap();
        assert_eq!(n.net(0).name, "a");
        assert_eq!(n.net(1).name, "y");
        assert_eq!(n.net(2).name, "w");
        assert_eq!(n.primary_inputs(), &[0]);
        assert_eq!(n.primary_outputs(), &[1]);
        assert_eq!(n.net(2).driver, NetDriver::Gate(0));
        assert_eq!(n.net(2).sinks, vec![1]);
    }

    #[test]
    fn unused_wires_are_dropped_and_used_undriven_rejected() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_wire("dangling").unwrap();
        b.add_gate("g1", "BUF", &[a], y).unwrap();
        let n = b.finish(&lib).unwrap();
        assert_eq!(n.nets().len(), 2);

        let mut b = NetlistBuilder::new("t");
        let _ = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        let ghost = b.add_wire("ghost").unwrap();
        b.add_gate("g1", "BUF", &[ghost], y).unwrap();
        assert_eq!(
            b.finish(&lib).unwrap_err(),
            NetlistError::UndrivenNet { net: "ghost".into(), user: "gate `g1`".into() }
        );
    }

    #[test]
    fn multiply_driven_and_unknown_cell() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g1", "BUF", &[a], y).unwrap();
        b.add_gate("g2", "INV", &[a], y).unwrap();
        assert!(matches!(b.finish(&lib), Err(NetlistError::MultiplyDriven { .. })));

        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g1", "NOPE", &[a], y).unwrap();
        assert!(matches!(b.finish(&lib), Err(NetlistError::UnknownCell { .. })));
    }

    #[test]
    fn cycle_reported_with_gate_names() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        let w1 = b.add_wire("w1").unwrap();
        let w2 = b.add_wire("w2").unwrap();
        b.add_gate("u1", "AND2", &[a, w2], w1).unwrap();
        b.add_gate("u2", "INV", &[w1], w2).unwrap();
        b.add_gate("u3", "BUF", &[w1], y).unwrap();
        match b.finish(&lib).unwrap_err() {
            NetlistError::CombinationalCycle { gates } => {
                assert!(gates.len() >= 3);
                assert!(gates.contains(&"u1".to_string()) && gates.contains(&"u2".to_string()));
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn registers_break_cycles_and_lead_topo_order() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let y = b.add_output("y").unwrap();
        let q = b.add_wire("q").unwrap();
        b.add_gate("inv", "INV", &[q], y).unwrap();
        b.add_gate("r", "DFF", &[y], q).unwrap();
        let n = b.finish(&lib).unwrap();
        assert_eq!(n.registers(), &[1]);
        assert_eq!(topo_order(&n), vec![1, 0]);
        assert_eq!(n.source_symbol(q), Some("r"));
        assert_eq!(n.free_sources(), vec![("r".to_string(), q)]);
    }

    #[test]
    fn chain_topo_order_is_forced() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        let w1 = b.add_wire("w1").unwrap();
        let w2 = b.add_wire("w2").unwrap();
        // Add in reverse so ids disagree with dependency order.
        b.add_gate("g3", "INV", &[w2], y).unwrap();
        b.add_gate("g2", "INV", &[w1], w2).unwrap();
        b.add_gate("g1", "INV", &[a], w1).unwrap();
        let n = b.finish(&lib).unwrap();
        assert_eq!(topo_order(&n), vec![2, 1, 0]);
    }
}
