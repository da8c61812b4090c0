//! Single-pass combinational simulation.
//!
//! Registers are not clocked here: each register output is a *free source*
//! alongside the primary inputs, so one run computes every net as a pure
//! function of (primary inputs, current register states). This is the
//! ground-truth oracle that extracted gate expressions are checked against.

use super::cell::{CellKind, CellLibrary};
use super::ir::{topo_order, NetId, Netlist};
use crate::expr::{compile, eval_compiled, Compiled};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("no value for free source `{symbol}`")]
    MissingSource { symbol: String },
}

struct SimStep {
    func: Compiled,
    inputs: Vec<NetId>,
    output: NetId,
}

/// A netlist lowered to straight-line evaluation steps.
pub struct CompiledNetlist {
    free: Vec<(String, NetId)>,
    steps: Vec<SimStep>,
    num_nets: usize,
}

impl CompiledNetlist {
    pub fn new(n: &Netlist, lib: &CellLibrary) -> Self {
        let steps = topo_order(n)
            .into_iter()
            .filter_map(|g| {
                let gate = n.gate(g);
                if gate.kind != CellKind::Combinational {
                    return None;
                }
                let cell = lib.get(&gate.cell).expect("netlist validated against this library");
                let func = cell.function.as_ref().expect("combinational cell has a function");
                let slots: HashMap<&str, usize> =
                    cell.inputs.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
                Some(SimStep {
                    func: compile(func, &slots),
                    inputs: gate.input_nets.clone(),
                    output: gate.output_net,
                })
            })
            .collect();
        CompiledNetlist { free: n.free_sources(), steps, num_nets: n.nets().len() }
    }

    /// Free sources in evaluation order: primary inputs then register
    /// outputs, as (symbol, net) pairs.
    pub fn free(&self) -> &[(String, NetId)] {
        &self.free
    }

    /// Evaluate with free-source values given positionally, aligned with
    /// [`CompiledNetlist::free`]. Returns one value per net.
    pub fn run_bits(&self, values: &[bool]) -> Vec<bool> {
        assert_eq!(values.len(), self.free.len(), "one value per free source");
        let mut nets = vec![false; self.num_nets];
        for ((_, net), &v) in self.free.iter().zip(values) {
            nets[*net] = v;
        }
        let mut env = Vec::new();
        for step in &self.steps {
            env.clear();
            env.extend(step.inputs.iter().map(|&n| nets[n]));
            nets[step.output] = eval_compiled(&step.func, &env);
        }
        nets
    }

    /// Evaluate with free-source values given by symbol.
    pub fn run_map(&self, values: &HashMap<String, bool>) -> Result<Vec<bool>, SimError> {
        let bits = self
            .free
            .iter()
            .map(|(sym, _)| {
                values
                    .get(sym)
                    .copied()
                    .ok_or_else(|| SimError::MissingSource { symbol: sym.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.run_bits(&bits))
    }
}

/// Observable-behavior equivalence check: both netlists must expose the
/// same free-source symbols, and over `vectors` random assignments agree
/// on every primary output and every register's next state. Exhaustive
/// instead when there are <= 12 sources.
pub fn netlists_equivalent(
    a: &Netlist,
    b: &Netlist,
    lib: &CellLibrary,
    vectors: usize,
    seed: u64,
) -> bool {
    use rand::prelude::*;
    let sim_a = CompiledNetlist::new(a, lib);
    let sim_b = CompiledNetlist::new(b, lib);
    let mut syms_a: Vec<&str> = sim_a.free().iter().map(|(s, _)| s.as_str()).collect();
    let mut syms_b: Vec<&str> = sim_b.free().iter().map(|(s, _)| s.as_str()).collect();
    syms_a.sort_unstable();
    syms_b.sort_unstable();
    if syms_a != syms_b {
        return false;
    }
    let observed = |n: &Netlist, nets: &[bool]| -> Vec<(String, bool)> {
        let mut out: Vec<(String, bool)> = n
            .primary_outputs()
            .iter()
            .map(|&net| (n.net(net).name.clone(), nets[net]))
            .collect();
        for &r in n.registers() {
            let g = n.gate(r);
            out.push((format!("next:{}", g.instance_name), nets[g.input_nets[0]]));
        }
        out.sort();
        out
    };
    let k = syms_a.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<Vec<bool>> = if k <= 12 {
        (0..1usize << k)
            .map(|v| (0..k).map(|i| v >> i & 1 == 1).collect())
            .collect()
    } else {
        (0..vectors).map(|_| (0..k).map(|_| rng.gen()).collect()).collect()
    };
    for bits in cases {
        let vals: HashMap<String, bool> =
            syms_a.iter().zip(&bits).map(|(s, &v)| (s.to_string(), v)).collect();
        let na = sim_a.run_map(&vals).expect("symbols checked above");
        let nb = sim_b.run_map(&vals).expect("symbols checked above");
        if observed(a, &na) != observed(b, &nb) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::cell::demo_library;
    use super::super::ir::NetlistBuilder;
    use super::super::parse::parse_netlist;
    use super::*;

    #[test]
    fn nor_gate_truth_rows() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let c = b.add_input("b").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g", "NOR2", &[a, c], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let sim = CompiledNetlist::new(&n, &lib);
        assert_eq!(sim.free().len(), 2);
        for (av, bv, want) in [(false, false, true), (true, false, false), (true, true, false)] {
            let nets = sim.run_bits(&[av, bv]);
            assert_eq!(nets[y], want, "a={av} b={bv}");
        }
    }

    #[test]
    fn register_fragment_as_function_of_state() {
        let lib = demo_library();
        let text = include_str!("../../../../fixtures/fig3b.net");
        let n = parse_netlist(text, &lib).unwrap();
        let sim = CompiledNetlist::new(&n, &lib);
        let out = n.net_by_name("out").unwrap();
        // out = !((R1 ^ R2) | !R2); free sources are d1, clk, R1, R2.
        let syms: Vec<&str> = sim.free().iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(syms, ["d1", "clk", "R1", "R2"]);
        // !((R1 ^ R2) | !R2) simplifies to R1 & R2.
        for (r1, r2, want) in [
            (false, false, false),
            (true, false, false),
            (false, true, false),
            (true, true, true),
        ] {
            let nets = sim.run_bits(&[false, false, r1, r2]);
            assert_eq!(nets[out], want, "R1={r1} R2={r2}");
        }
    }

    #[test]
    fn tie_cells_drive_constants() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let y = b.add_output("y").unwrap();
        let w = b.add_wire("w").unwrap();
        b.add_gate("t1", "TIE1", &[], w).unwrap();
        b.add_gate("g", "INV", &[w], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let sim = CompiledNetlist::new(&n, &lib);
        assert!(sim.free().is_empty());
        let nets = sim.run_bits(&[]);
        assert!(nets[w]);
        assert!(!nets[y]);
    }

    #[test]
    fn missing_symbol_is_reported() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g", "BUF", &[a], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let sim = CompiledNetlist::new(&n, &lib);
        let err = sim.run_map(&HashMap::new()).unwrap_err();
        assert_eq!(err, SimError::MissingSource { symbol: "a".into() });
        let mut vals = HashMap::new();
        vals.insert("a".to_string(), true);
        assert!(sim.run_map(&vals).unwrap()[y]);
    }
}
