//! Gate-level netlists: cell libraries, the validated circuit IR, a
//! structural-subset parser/emitter, a combinational simulator, and a
//! random netlist generator for tests and toy corpora.

mod cell;
mod gen;
mod ir;
mod parse;
mod sim;

pub use cell::{
    demo_library, dump_library, load_library, CellDef, CellKind, CellLibrary, LibraryError,
    PhysAttrs, PHYS_DIMS, TIE_CELLS,
};
pub use gen::{random_netlist, RandomNetlistCfg};
pub use ir::{
    topo_order, GateId, GateInst, Net, NetDriver, NetId, Netlist, NetlistBuilder, NetlistError,
};
pub use parse::{describe, emit_netlist, parse_netlist};
pub use sim::{netlists_equivalent, CompiledNetlist, SimError};
