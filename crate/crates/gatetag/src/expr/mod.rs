//! Symbolic Boolean expressions.
//!
//! The building block for gate text attributes: an expression AST with a
//! canonical printed form, a parser for the same grammar, truth-table and
//! sampled equivalence checking, random equivalence-preserving rewrites,
//! and extraction of a gate's k-hop fan-in-cone expression from a netlist.

mod ast;
mod extract;
mod gen;
mod parse;
mod print;
mod rewrite;
mod table;

pub use ast::BoolExpr;
pub use extract::{expr_of_gate, ExtractError, EXPR_NODE_GUARD};
pub use gen::random_expr;
pub use parse::{parse_expr, ParseError};
pub use print::to_text;
pub use rewrite::{rewrite_equiv, MAX_REWRITE_NODES};
pub(crate) use table::{compile, eval_compiled, Compiled};
pub use table::{
    check_equivalent, equivalent, truth_table, truth_table_over, EquivVerdict, TableError,
    TruthTable, MAX_TABLE_VARS,
};
