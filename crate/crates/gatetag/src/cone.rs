//! Register-cone chunking.
//!
//! A sequential circuit is split into one cone per register: the
//! combinational gates reachable backward from the register's data input,
//! stopping at register outputs and primary inputs. Each cone carries the
//! register's complete next-state function, so shared logic is duplicated
//! into every cone that reads it rather than cut.
//!
//! Combinational logic that feeds only primary outputs would be dropped by
//! that rule, so each primary output additionally gets a pseudo-cone built
//! the same way from the output net.
//!
//! Every cone is materialized as a self-contained subnetlist: frontier
//! symbols become primary inputs (register outputs are renamed to their
//! instance symbol, matching expression leaves), members keep their
//! instance names, and the cone's output net is exported when a member
//! drives it. A cone whose root is fed directly by a frontier source has
//! no members and a single-net subnetlist.
//!
//! The manifest written by the CLI has one line per cone:
//!
//! ```text
//! circuit=<id> root=<name> kind=<reg|out> members=<count> frontier=<s1,s2,…>
//! ```

use crate::expr::{expr_of_gate, BoolExpr, ExtractError};
use crate::netlist::{
    CellKind, CellLibrary, GateId, NetDriver, NetId, Netlist, NetlistBuilder,
};
use crate::par::ordered_map;
use std::collections::{BTreeMap, BTreeSet};

/// Advisory threshold: cones beyond this are legal but logged.
pub const CONE_WARN_MEMBERS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeRoot {
    /// Register gate id in the parent netlist; the cone feeds its data pin.
    Register(GateId),
    /// Primary-output net id in the parent netlist.
    Output(NetId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterCone {
    pub root: ConeRoot,
    /// Register instance name or output net name.
    pub root_name: String,
    /// Member combinational gates as parent gate ids, ascending.
    pub members: Vec<GateId>,
    /// Source symbols feeding the cone, sorted.
    pub frontier: Vec<String>,
    pub subnetlist: Netlist,
    /// Net in `subnetlist` carrying the cone's output value.
    pub root_net: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageStats {
    /// Distinct combinational gates appearing in at least one cone.
    pub covered: usize,
    /// Distinct combinational gates on some register's fan-in.
    pub register_fanin: usize,
    /// All combinational gates in the circuit.
    pub comb_total: usize,
    /// Sum of member counts; exceeds `covered` when logic is shared.
    pub total_members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSet {
    circuit: String,
    cones: Vec<RegisterCone>,
    coverage: CoverageStats,
}

impl ConeSet {
    pub fn circuit(&self) -> &str {
        &self.circuit
    }

    pub fn cones(&self) -> &[RegisterCone] {
        &self.cones
    }

    pub fn coverage(&self) -> CoverageStats {
        self.coverage
    }
}

/// Backward reachability from `start`: member gate ids and frontier
/// symbols.
fn backtrace(n: &Netlist, start: NetId) -> (Vec<GateId>, Vec<String>) {
    let mut members = BTreeSet::new();
    let mut frontier = BTreeSet::new();
    let mut stack = vec![start];
    let mut seen_nets = BTreeSet::new();
    while let Some(net) = stack.pop() {
        if !seen_nets.insert(net) {
            continue;
        }
        match n.net(net).driver {
            NetDriver::PrimaryInput => {
                frontier.insert(n.net(net).name.clone());
            }
            NetDriver::Gate(g) if n.gate(g).kind == CellKind::Register => {
                frontier.insert(n.gate(g).instance_name.clone());
            }
            NetDriver::Gate(g) => {
                if members.insert(g) {
                    stack.extend(n.gate(g).input_nets.iter().copied());
                }
            }
        }
    }
    (members.into_iter().collect(), frontier.into_iter().collect())
}

fn build_cone(n: &Netlist, lib: &CellLibrary, root: ConeRoot) -> RegisterCone {
    let (root_name, start) = match root {
        ConeRoot::Register(g) => (n.gate(g).instance_name.clone(), n.gate(g).input_nets[0]),
        ConeRoot::Output(net) => (n.net(net).name.clone(), net),
    };
    let (members, frontier) = backtrace(n, start);
    if members.len() > CONE_WARN_MEMBERS {
        log::warn!("cone `{root_name}` has {} members", members.len());
    }

    let mut b = NetlistBuilder::new(format!("{}__{}", n.name(), root_name));
    let mut net_map: BTreeMap<NetId, usize> = BTreeMap::new();

    // Frontier sources become primary inputs named by symbol.
    for sym in &frontier {
        let id = b.add_input(sym).expect("frontier symbols are distinct");
        let parent = n.symbol_net(sym).expect("frontier symbols name circuit signals");
        net_map.insert(parent, id);
    }
    // Member outputs keep their net names unless a frontier symbol (or an
    // earlier rename) took the name; the cone's own output net is exported.
    let mut taken: BTreeSet<String> = frontier.iter().cloned().collect();
    let mut root_net_name =
        n.source_symbol(start).map(String::from).unwrap_or_default();
    for &g in &members {
        let out = n.gate(g).output_net;
        let mut name = n.net(out).name.clone();
        while !taken.insert(name.clone()) {
            name.push_str("__c");
        }
        let id = if out == start {
            root_net_name = name.clone();
            b.add_output(&name).expect("member output nets are distinct")
        } else {
            b.add_wire(&name).expect("member output nets are distinct")
        };
        net_map.insert(out, id);
    }
    for &g in &members {
        let gate = n.gate(g);
        let inputs: Vec<usize> =
            gate.input_nets.iter().map(|net| net_map[net]).collect();
        b.add_gate(&gate.instance_name, &gate.cell, &inputs, net_map[&gate.output_net])
            .expect("member instances are distinct");
    }
    let subnetlist = b.finish(lib).expect("cones are valid netlists by construction");
    // finish() renumbers nets, so resolve the root by its final name.
    let root_net = subnetlist
        .net_by_name(&root_net_name)
        .expect("root net survives subnetlist construction");

    RegisterCone { root, root_name, members, frontier, subnetlist, root_net }
}

/// Chunk a netlist into register cones plus one pseudo-cone per primary
/// output, in register-id then output-id order.
pub fn chunk(n: &Netlist, lib: &CellLibrary) -> ConeSet {
    let roots: Vec<ConeRoot> = n
        .registers()
        .iter()
        .map(|&g| ConeRoot::Register(g))
        .chain(n.primary_outputs().iter().map(|&net| ConeRoot::Output(net)))
        .collect();
    let cones = ordered_map(&roots, |_, &root| build_cone(n, lib, root));

    let mut covered = BTreeSet::new();
    let mut register_fanin = BTreeSet::new();
    let mut total_members = 0;
    for c in &cones {
        covered.extend(c.members.iter().copied());
        if matches!(c.root, ConeRoot::Register(_)) {
            register_fanin.extend(c.members.iter().copied());
        }
        total_members += c.members.len();
    }
    let coverage = CoverageStats {
        covered: covered.len(),
        register_fanin: register_fanin.len(),
        comb_total: n.num_comb_gates(),
        total_members,
    };
    ConeSet { circuit: n.name().to_string(), cones, coverage }
}

/// Per-member expressions, keyed by instance name, extracted inside the
/// cone's subnetlist.
pub fn cone_expr(
    c: &RegisterCone,
    lib: &CellLibrary,
    k: usize,
) -> Result<BTreeMap<String, BoolExpr>, ExtractError> {
    let mut out = BTreeMap::new();
    for g in c.subnetlist.gates() {
        let e = expr_of_gate(&c.subnetlist, lib, g.id, k)?;
        out.insert(g.instance_name.clone(), e);
    }
    Ok(out)
}

/// One line per cone; format documented at the module level.
pub fn manifest(set: &ConeSet) -> String {
    let mut out = String::new();
    for c in set.cones() {
        let kind = match c.root {
            ConeRoot::Register(_) => "reg",
            ConeRoot::Output(_) => "out",
        };
        out.push_str(&format!(
            "circuit={} root={} kind={kind} members={} frontier={}\n",
            set.circuit(),
            c.root_name,
            c.members.len(),
            c.frontier.join(",")
        ));
    }
    out
}
