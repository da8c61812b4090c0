//! Seeded random netlist construction.
//!
//! Circuits are built source-to-sink: a gate may only read nets that
//! already have a driver (primary inputs, register outputs, earlier gate
//! outputs), so the result is acyclic by construction and always passes
//! validation. Register data inputs are wired last and may tap any net,
//! which is what produces sequential feedback.

use super::cell::{CellKind, CellLibrary};
use super::ir::{Netlist, NetlistBuilder};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomNetlistCfg {
    pub seed: u64,
    pub num_inputs: usize,
    pub num_outputs: usize,
    /// Combinational gate count; the last `num_outputs` of them drive the
    /// primary outputs.
    pub comb_gates: usize,
    pub registers: usize,
}

impl Default for RandomNetlistCfg {
    fn default() -> Self {
        RandomNetlistCfg { seed: 1, num_inputs: 4, num_outputs: 2, comb_gates: 24, registers: 3 }
    }
}

/// Probability that a gate slot becomes a constant tie cell.
const TIE_PROB: f64 = 0.02;

pub fn random_netlist(lib: &CellLibrary, cfg: &RandomNetlistCfg) -> Netlist {
    assert!(cfg.num_inputs >= 1, "need at least one primary input");
    assert!(
        cfg.comb_gates >= cfg.num_outputs,
        "need one combinational gate per primary output"
    );
    let comb_cells: Vec<&str> = lib
        .cells()
        .iter()
        .filter(|c| c.kind == CellKind::Combinational && !c.inputs.is_empty())
        .map(|c| c.name.as_str())
        .collect();
    assert!(!comb_cells.is_empty(), "library has no multi-input combinational cells");
    let reg_cell = lib
        .cells()
        .iter()
        .find(|c| c.kind == CellKind::Register)
        .map(|c| c.name.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = NetlistBuilder::new(format!("rand_{}", cfg.seed));
    let mut pool: Vec<usize> = (0..cfg.num_inputs)
        .map(|i| b.add_input(&format!("i{i}")).expect("fresh input name"))
        .collect();
    let outputs: Vec<usize> = (0..cfg.num_outputs)
        .map(|i| b.add_output(&format!("o{i}")).expect("fresh output name"))
        .collect();
    let reg_outs: Vec<usize> = (0..cfg.registers)
        .map(|i| {
            let q = b.add_wire(&format!("rq{i}")).expect("fresh register output");
            pool.push(q);
            q
        })
        .collect();

    // Half the picks come from the most recent nets, which stretches the
    // circuit into chains instead of a two-level fanout from the inputs.
    let pick = |rng: &mut ChaCha8Rng, pool: &[usize]| -> usize {
        if rng.gen_bool(0.5) {
            let recent = pool.len().min(8);
            pool[pool.len() - recent + rng.gen_range(0..recent)]
        } else {
            pool[rng.gen_range(0..pool.len())]
        }
    };

    for j in 0..cfg.comb_gates {
        let cell_name = if rng.gen_bool(TIE_PROB) {
            if rng.gen_bool(0.5) { "TIE1" } else { "TIE0" }
        } else {
            comb_cells[rng.gen_range(0..comb_cells.len())]
        };
        let cell = lib.get(cell_name).expect("chosen from this library");
        let inputs: Vec<usize> = (0..cell.inputs.len()).map(|_| pick(&mut rng, &pool)).collect();
        let first_driver = cfg.comb_gates - cfg.num_outputs;
        let out = if j >= first_driver {
            outputs[j - first_driver]
        } else {
            b.add_wire(&format!("w{j}")).expect("fresh wire name")
        };
        b.add_gate(&format!("g{j}"), cell_name, &inputs, out).expect("fresh instance name");
        pool.push(out);
    }

    if cfg.registers > 0 {
        let reg_cell = reg_cell.expect("library has no register cell but registers requested");
        for (i, &q) in reg_outs.iter().enumerate() {
            let d = pick(&mut rng, &pool);
            b.add_gate(&format!("r{i}"), &reg_cell, &[d], q).expect("fresh instance name");
        }
    }

    b.finish(lib).expect("generated netlists are valid by construction")
}

#[cfg(test)]
mod tests {
    use super::super::cell::demo_library;
    use super::super::parse::{emit_netlist, parse_netlist};
    use super::*;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let lib = demo_library();
        let cfg = RandomNetlistCfg { seed: 7, ..Default::default() };
        let a = random_netlist(&lib, &cfg);
        let b = random_netlist(&lib, &cfg);
        assert_eq!(a, b);
        let c = random_netlist(&lib, &RandomNetlistCfg { seed: 8, ..cfg });
        assert_ne!(a, c);
    }

    #[test]
    fn generated_netlists_round_trip_through_text() {
        let lib = demo_library();
        for seed in 0..6 {
            let cfg = RandomNetlistCfg {
                seed,
                num_inputs: 3,
                num_outputs: 2,
                comb_gates: 30,
                registers: 4,
            };
            let n = random_netlist(&lib, &cfg);
            assert_eq!(n.registers().len(), 4);
            assert_eq!(n.num_comb_gates(), 30);
            let text = emit_netlist(&n, &lib);
            assert_eq!(parse_netlist(&text, &lib).unwrap(), n);
        }
    }

    #[test]
    fn zero_registers_is_fine() {
        let lib = demo_library();
        let cfg = RandomNetlistCfg { registers: 0, ..Default::default() };
        let n = random_netlist(&lib, &cfg);
        assert!(n.registers().is_empty());
    }
}
