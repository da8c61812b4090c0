//! Fan-in-cone expression extraction.
//!
//! A combinational gate's surroundings are summarized as a Boolean
//! expression by inlining the functions of its combinational drivers up to
//! `k` gate levels deep. The leaves (frontier) are named by where the
//! signal comes from:
//!
//! * primary input → the net name,
//! * register output → the register's instance name,
//! * combinational gate at the depth limit → that gate's instance name,
//! * tie cell → its constant, at any depth.
//!
//! Naming registers and limit-depth gates by instance keeps every leaf a
//! well-defined signal in the circuit, so the expression can be checked
//! against simulation: evaluating it with each leaf bound to the value on
//! the corresponding net must reproduce the gate's output value.

use super::ast::BoolExpr;
use crate::netlist::{CellKind, CellLibrary, GateId, NetDriver, NetId, Netlist};
use std::collections::HashMap;
use thiserror::Error;

/// Node-count guard: past this, extraction logs a warning and falls back
/// to one level.
pub const EXPR_NODE_GUARD: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("gate `{name}` is a register; expressions describe combinational gates")]
    RegisterGate { name: String },
}

#[derive(Debug)]
struct Overflow;

/// Extract the `k`-level fan-in expression of combinational gate `g`.
pub fn expr_of_gate(
    n: &Netlist,
    lib: &CellLibrary,
    g: GateId,
    k: usize,
) -> Result<BoolExpr, ExtractError> {
    assert!(k >= 1, "extraction depth starts at the gate itself");
    let gate = n.gate(g);
    if gate.kind == CellKind::Register {
        return Err(ExtractError::RegisterGate { name: gate.instance_name.clone() });
    }
    match expand_gate(n, lib, g, k, EXPR_NODE_GUARD) {
        Ok((e, _)) => Ok(e),
        Err(Overflow) => {
            log::warn!(
                "expression for gate `{}` exceeds {EXPR_NODE_GUARD} nodes at depth {k}; \
                 falling back to depth 1",
                gate.instance_name
            );
            let (e, _) = expand_gate(n, lib, g, 1, usize::MAX).expect("depth 1 is unguarded");
            Ok(e)
        }
    }
}

fn expand_net(
    n: &Netlist,
    lib: &CellLibrary,
    net: NetId,
    levels_left: usize,
    guard: usize,
) -> Result<(BoolExpr, usize), Overflow> {
    match n.net(net).driver {
        NetDriver::PrimaryInput => Ok((BoolExpr::var(&n.net(net).name), 1)),
        NetDriver::Gate(d) => {
            let gate = n.gate(d);
            if gate.kind == CellKind::Register {
                return Ok((BoolExpr::var(&gate.instance_name), 1));
            }
            // Zero-input cells are constants; naming one after its instance
            // would turn a known value into a free variable, so they are
            // always inlined.
            if gate.input_nets.is_empty() {
                let cell = lib.get(&gate.cell).expect("netlist validated against this library");
                let f = cell.function.clone().expect("combinational cell has a function");
                let size = f.node_count();
                return Ok((f, size));
            }
            if levels_left == 0 {
                return Ok((BoolExpr::var(&gate.instance_name), 1));
            }
            expand_gate(n, lib, d, levels_left, guard)
        }
    }
}

fn expand_gate(
    n: &Netlist,
    lib: &CellLibrary,
    g: GateId,
    levels_left: usize,
    guard: usize,
) -> Result<(BoolExpr, usize), Overflow> {
    debug_assert!(levels_left >= 1);
    let gate = n.gate(g);
    let cell = lib.get(&gate.cell).expect("netlist validated against this library");
    let template = cell.function.as_ref().expect("combinational cell has a function");
    let mut by_pin: HashMap<&str, (BoolExpr, usize)> = HashMap::new();
    for (pin, &net) in cell.inputs.iter().zip(&gate.input_nets) {
        let sub = expand_net(n, lib, net, levels_left - 1, guard)?;
        by_pin.insert(pin.as_str(), sub);
    }
    let (e, size) = subst(template, &by_pin);
    if size > guard {
        return Err(Overflow);
    }
    Ok((e, size))
}

/// Replace template pins with their expansions, tracking node count.
fn subst(t: &BoolExpr, by_pin: &HashMap<&str, (BoolExpr, usize)>) -> (BoolExpr, usize) {
    match t {
        BoolExpr::Var(p) => by_pin[p.as_str()].clone(),
        BoolExpr::Const(b) => (BoolExpr::Const(*b), 1),
        BoolExpr::Not(x) => {
            let (e, s) = subst(x, by_pin);
            (BoolExpr::not(e), s + 1)
        }
        BoolExpr::And(xs) | BoolExpr::Or(xs) => {
            let mut size = 1;
            let subbed: Vec<BoolExpr> = xs
                .iter()
                .map(|x| {
                    let (e, s) = subst(x, by_pin);
                    size += s;
                    e
                })
                .collect();
            let e = match t {
                BoolExpr::And(_) => BoolExpr::and(subbed),
                _ => BoolExpr::or(subbed),
            };
            (e, size)
        }
        BoolExpr::Xor(a, b) => {
            let (ea, sa) = subst(a, by_pin);
            let (eb, sb) = subst(b, by_pin);
            (BoolExpr::xor(ea, eb), sa + sb + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::to_text;
    use crate::netlist::{
        demo_library, parse_netlist, random_netlist, CompiledNetlist, NetlistBuilder,
        RandomNetlistCfg,
    };
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const FIG_NETLIST: &str = include_str!("../../../../fixtures/fig3b.net");

    #[test]
    fn two_level_expression_of_the_fragment_output_gate() {
        let lib = demo_library();
        let n = parse_netlist(FIG_NETLIST, &lib).unwrap();
        let u3 = n.gate_by_name("U3").unwrap();
        let e = expr_of_gate(&n, &lib, u3, 2).unwrap();
        assert_eq!(to_text(&e), "!(((R1 ^ R2)) | (!R2))");
    }

    #[test]
    fn one_level_stops_at_driving_gate_names() {
        let lib = demo_library();
        let n = parse_netlist(FIG_NETLIST, &lib).unwrap();
        let u3 = n.gate_by_name("U3").unwrap();
        let e = expr_of_gate(&n, &lib, u3, 1).unwrap();
        assert_eq!(to_text(&e), "!(i1 | x1)");
    }

    #[test]
    fn primary_inputs_stay_named_at_any_depth() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        b.add_gate("g", "INV", &[a], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let e = expr_of_gate(&n, &lib, 0, 2).unwrap();
        assert_eq!(to_text(&e), "!a");
    }

    #[test]
    fn registers_are_not_extractable() {
        let lib = demo_library();
        let n = parse_netlist(FIG_NETLIST, &lib).unwrap();
        let r1 = n.gate_by_name("R1").unwrap();
        assert_eq!(
            expr_of_gate(&n, &lib, r1, 2).unwrap_err(),
            ExtractError::RegisterGate { name: "R1".into() }
        );
    }

    #[test]
    fn tie_cells_inline_as_constants_even_at_the_frontier() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        let w = b.add_wire("w").unwrap();
        b.add_gate("t1", "TIE1", &[], w).unwrap();
        b.add_gate("g", "AND2", &[a, w], y).unwrap();
        let n = b.finish(&lib).unwrap();
        let g = n.gate_by_name("g").unwrap();
        let e = expr_of_gate(&n, &lib, g, 1).unwrap();
        assert_eq!(to_text(&e), "(1 & a)");
    }

    #[test]
    fn oversized_expressions_fall_back_to_one_level() {
        let lib = demo_library();
        let mut b = NetlistBuilder::new("t");
        let a = b.add_input("a").unwrap();
        let y = b.add_output("y").unwrap();
        // Each gate reads its predecessor twice, so full inlining doubles
        // per level: depth 20 would need ~2^21 nodes.
        let mut prev = a;
        for j in 0..20 {
            let out = if j == 19 { y } else { b.add_wire(&format!("w{j}")).unwrap() };
            b.add_gate(&format!("g{j}"), "XOR2", &[prev, prev], out).unwrap();
            prev = out;
        }
        let n = b.finish(&lib).unwrap();
        let last = n.gate_by_name("g19").unwrap();
        let e = expr_of_gate(&n, &lib, last, 20).unwrap();
        assert_eq!(to_text(&e), "(g18 ^ g18)");
    }

    #[test]
    fn expressions_match_simulation_on_random_circuits() {
        let lib = demo_library();
        let mut rng = ChaCha8Rng::seed_from_u64(0xace);
        for seed in 0..4 {
            let cfg = RandomNetlistCfg {
                seed,
                num_inputs: 4,
                num_outputs: 2,
                comb_gates: 40,
                registers: 5,
            };
            let n = random_netlist(&lib, &cfg);
            let sim = CompiledNetlist::new(&n, &lib);
            let exprs: Vec<(usize, BoolExpr)> = n
                .comb_gates()
                .map(|g| (g.id, expr_of_gate(&n, &lib, g.id, 2).unwrap()))
                .collect();
            for _ in 0..32 {
                let bits: Vec<bool> = (0..sim.free().len()).map(|_| rng.gen()).collect();
                let nets = sim.run_bits(&bits);
                for (gid, e) in &exprs {
                    let got = e.eval(&|sym: &str| {
                        nets[n.symbol_net(sym).expect("leaf symbols are circuit signals")]
                    });
                    assert_eq!(
                        got,
                        nets[n.gate(*gid).output_net],
                        "gate {} seed {seed}",
                        n.gate(*gid).instance_name
                    );
                }
            }
        }
    }
}
