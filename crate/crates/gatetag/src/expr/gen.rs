//! Random expression sampling for oracles, benchmarks, and corpora.

use super::ast::BoolExpr;
use rand::Rng;

/// Draw a random expression over `vars` with roughly `budget` nodes
/// (always at least one). Constants appear with small probability so the
/// degenerate cases stay covered.
pub fn random_expr<R: Rng>(rng: &mut R, vars: &[String], budget: usize) -> BoolExpr {
    assert!(!vars.is_empty(), "need at least one variable symbol");
    if budget <= 1 {
        return leaf(rng, vars);
    }
    match rng.gen_range(0..10u32) {
        0 | 1 => BoolExpr::not(random_expr(rng, vars, budget - 1)),
        2..=4 => nary(rng, vars, budget, true),
        5..=7 => nary(rng, vars, budget, false),
        _ => {
            let half = (budget - 1) / 2;
            BoolExpr::xor(
                random_expr(rng, vars, half.max(1)),
                random_expr(rng, vars, half.max(1)),
            )
        }
    }
}

fn leaf<R: Rng>(rng: &mut R, vars: &[String]) -> BoolExpr {
    if rng.gen_range(0..16u32) == 0 {
        BoolExpr::Const(rng.gen())
    } else {
        BoolExpr::var(vars[rng.gen_range(0..vars.len())].clone())
    }
}

fn nary<R: Rng>(rng: &mut R, vars: &[String], budget: usize, is_and: bool) -> BoolExpr {
    let arity = if budget >= 7 && rng.gen_bool(0.3) { 3 } else { 2 };
    let per_child = ((budget - 1) / arity).max(1);
    let children: Vec<BoolExpr> = (0..arity)
        .map(|_| random_expr(rng, vars, per_child))
        .collect();
    if is_and {
        BoolExpr::And(children)
    } else {
        BoolExpr::Or(children)
    }
}
