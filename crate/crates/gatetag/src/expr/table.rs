//! Exhaustive truth tables and the equivalence oracle.
//!
//! Tables cover at most 16 variables; above that `check_equivalent` falls
//! back to 4096 uniformly random vectors and reports the verdict as
//! probable (a found counterexample is still definitive).

use super::ast::BoolExpr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

pub const MAX_TABLE_VARS: usize = 16;
const SAMPLE_VECTORS: usize = 4096;
const SAMPLE_SEED: u64 = 0x7ab1e;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("expression has {count} variables, exhaustive limit is {MAX_TABLE_VARS}")]
    VariableLimitExceeded { count: usize },
}

/// Exhaustive function table. Row `i` is the expression evaluated at the
/// binary expansion of `i` with `vars[0]` as the least significant bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    vars: Vec<String>,
    bits: Vec<u64>,
}

impl TruthTable {
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn num_rows(&self) -> usize {
        1usize << self.vars.len()
    }

    pub fn bit(&self, row: usize) -> bool {
        assert!(row < self.num_rows());
        (self.bits[row / 64] >> (row % 64)) & 1 == 1
    }

    /// Rows as a `0`/`1` string, row 0 first. Only sensible for small tables.
    pub fn bits_string(&self) -> String {
        (0..self.num_rows())
            .map(|r| if self.bit(r) { '1' } else { '0' })
            .collect()
    }
}

/// Expression with variables resolved to indices, for tight evaluation loops.
pub(crate) enum Compiled {
    Var(usize),
    Const(bool),
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    Xor(Box<Compiled>, Box<Compiled>),
}

pub(crate) fn compile(e: &BoolExpr, index: &HashMap<&str, usize>) -> Compiled {
    match e {
        BoolExpr::Var(s) => Compiled::Var(index[s.as_str()]),
        BoolExpr::Const(b) => Compiled::Const(*b),
        BoolExpr::Not(c) => Compiled::Not(Box::new(compile(c, index))),
        BoolExpr::And(cs) => Compiled::And(cs.iter().map(|c| compile(c, index)).collect()),
        BoolExpr::Or(cs) => Compiled::Or(cs.iter().map(|c| compile(c, index)).collect()),
        BoolExpr::Xor(a, b) => {
            Compiled::Xor(Box::new(compile(a, index)), Box::new(compile(b, index)))
        }
    }
}

pub(crate) fn eval_compiled(c: &Compiled, env: &[bool]) -> bool {
    match c {
        Compiled::Var(i) => env[*i],
        Compiled::Const(b) => *b,
        Compiled::Not(x) => !eval_compiled(x, env),
        Compiled::And(xs) => xs.iter().all(|x| eval_compiled(x, env)),
        Compiled::Or(xs) => xs.iter().any(|x| eval_compiled(x, env)),
        Compiled::Xor(a, b) => eval_compiled(a, env) ^ eval_compiled(b, env),
    }
}

fn index_of(vars: &[String]) -> HashMap<&str, usize> {
    vars.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Table of `e` over an explicit variable list (a superset of `e.vars()` is
/// allowed, which is how two expressions are compared over their union).
pub fn truth_table_over(e: &BoolExpr, vars: &[String]) -> Result<TruthTable, TableError> {
    if vars.len() > MAX_TABLE_VARS {
        return Err(TableError::VariableLimitExceeded { count: vars.len() });
    }
    let compiled = compile(e, &index_of(vars));
    let rows = 1usize << vars.len();
    let mut bits = vec![0u64; rows.div_ceil(64)];
    let mut env = vec![false; vars.len()];
    for row in 0..rows {
        for (i, slot) in env.iter_mut().enumerate() {
            *slot = (row >> i) & 1 == 1;
        }
        if eval_compiled(&compiled, &env) {
            bits[row / 64] |= 1 << (row % 64);
        }
    }
    Ok(TruthTable { vars: vars.to_vec(), bits })
}

pub fn truth_table(e: &BoolExpr) -> Result<TruthTable, TableError> {
    truth_table_over(e, &e.vars())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivVerdict {
    /// Agree on every assignment (exhaustive).
    Equivalent,
    /// A distinguishing assignment exists (found exhaustively or by sampling).
    NotEquivalent,
    /// Agreed on all 4096 sampled vectors; too many variables for an
    /// exhaustive check.
    ProbablyEquivalent,
}

pub fn check_equivalent(e1: &BoolExpr, e2: &BoolExpr) -> EquivVerdict {
    let mut vars = e1.vars();
    vars.extend(e2.vars());
    vars.sort();
    vars.dedup();

    if vars.len() <= MAX_TABLE_VARS {
        let t1 = truth_table_over(e1, &vars).expect("within limit");
        let t2 = truth_table_over(e2, &vars).expect("within limit");
        return if t1 == t2 {
            EquivVerdict::Equivalent
        } else {
            EquivVerdict::NotEquivalent
        };
    }

    let idx = index_of(&vars);
    let c1 = compile(e1, &idx);
    let c2 = compile(e2, &idx);
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut env = vec![false; vars.len()];
    for _ in 0..SAMPLE_VECTORS {
        for slot in env.iter_mut() {
            *slot = rng.gen();
        }
        if eval_compiled(&c1, &env) != eval_compiled(&c2, &env) {
            return EquivVerdict::NotEquivalent;
        }
    }
    EquivVerdict::ProbablyEquivalent
}

/// True unless a distinguishing assignment was found. Exact for unions of
/// up to 16 variables, probabilistic beyond that.
pub fn equivalent(e1: &BoolExpr, e2: &BoolExpr) -> bool {
    check_equivalent(e1, e2) != EquivVerdict::NotEquivalent
}

#[cfg(test)]
mod tests {
    use super::super::parse_expr;
    use super::*;

    fn e(s: &str) -> BoolExpr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn xor_table_rows_lsb_first() {
        let t = truth_table(&e("a ^ b")).unwrap();
        assert_eq!(t.vars(), ["a", "b"]);
        assert_eq!(t.bits_string(), "0110");
    }

    #[test]
    fn contradiction_is_all_zero() {
        let t = truth_table(&e("a & !a")).unwrap();
        assert_eq!(t.bits_string(), "00");
    }

    #[test]
    fn next_state_example_rows() {
        // (R1,R2): (0,0)->0, (1,0)->0, (0,1)->0, (1,1)->1
        let t = truth_table(&e("!(((R1 ^ R2)) | (!R2))")).unwrap();
        assert_eq!(t.vars(), ["R1", "R2"]);
        assert_eq!(t.bits_string(), "0001");
    }

    #[test]
    fn de_morgan_and_xor_expansion_equivalences() {
        assert_eq!(
            check_equivalent(&e("!(a | b)"), &e("!a & !b")),
            EquivVerdict::Equivalent
        );
        assert_eq!(
            check_equivalent(&e("a ^ b"), &e("(a & !b) | (!a & b)")),
            EquivVerdict::Equivalent
        );
        assert_eq!(
            check_equivalent(&e("a | b"), &e("a & b")),
            EquivVerdict::NotEquivalent
        );
        assert!(equivalent(&e("a"), &e("a | (a & b)")));
    }

    #[test]
    fn disjoint_variable_sets_use_the_union() {
        // Same function over {a}, but compared over {a, b}.
        assert_eq!(check_equivalent(&e("a"), &e("a & (b | !b)")), EquivVerdict::Equivalent);
        assert_eq!(check_equivalent(&e("a"), &e("b")), EquivVerdict::NotEquivalent);
    }

    #[test]
    fn wide_expressions_fall_back_to_sampling() {
        let vars: Vec<String> = (0..20).map(|i| format!("v{i:02}")).collect();
        let ors = BoolExpr::Or(vars.iter().map(|v| BoolExpr::var(v.clone())).collect());
        let doubled = BoolExpr::not(BoolExpr::not(ors.clone()));
        assert_eq!(check_equivalent(&ors, &doubled), EquivVerdict::ProbablyEquivalent);

        assert_eq!(
            check_equivalent(&ors, &BoolExpr::not(ors.clone())),
            EquivVerdict::NotEquivalent
        );
        assert!(truth_table(&ors).is_err());
    }
}
