//! Random equivalence-preserving rewrites.
//!
//! Each step draws a rule, then a uniformly random subterm where the rule
//! applies, and rewrites in place. The rule set: De Morgan both directions,
//! distribution of `&` over `|` and `|` over `&` both directions (the
//! reverse is factoring a term common to every branch), commutative
//! reorder, associative regroup/flatten, double-negation insert/remove, and
//! Xor <-> sum-of-products. If the drawn rule applies nowhere the draw
//! cycles to the next rule; double-negation insertion applies everywhere,
//! so every step succeeds and a bare `Var`/`Const` comes back double
//! negated.
//!
//! Growth-prone rules (distribution, Xor expansion) are skipped at sites
//! where the result would exceed [`MAX_REWRITE_NODES`] total nodes, keeping
//! repeated rewriting of the same expression bounded.

use super::ast::BoolExpr;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_REWRITE_NODES: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    DeMorganFwd,
    DeMorganRev,
    DistribFwd,
    DistribRev,
    Commute,
    AssocGroup,
    AssocFlatten,
    DoubleNegInsert,
    DoubleNegRemove,
    XorExpand,
    XorContract,
}

const ALL_RULES: [Rule; 11] = [
    Rule::DeMorganFwd,
    Rule::DeMorganRev,
    Rule::DistribFwd,
    Rule::DistribRev,
    Rule::Commute,
    Rule::AssocGroup,
    Rule::AssocFlatten,
    Rule::DoubleNegInsert,
    Rule::DoubleNegRemove,
    Rule::XorExpand,
    Rule::XorContract,
];

/// Apply `steps` random rewrites. Deterministic in `seed`; the result is
/// always equivalent to `e`.
pub fn rewrite_equiv(e: &BoolExpr, seed: u64, steps: usize) -> BoolExpr {
    assert!(steps >= 1, "at least one rewrite step");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = e.clone();
    for _ in 0..steps {
        cur = rewrite_step(cur, &mut rng);
    }
    cur
}

fn rewrite_step(e: BoolExpr, rng: &mut ChaCha8Rng) -> BoolExpr {
    let total = e.node_count();
    let start = rng.gen_range(0..ALL_RULES.len());
    for off in 0..ALL_RULES.len() {
        let rule = ALL_RULES[(start + off) % ALL_RULES.len()];
        let mut sites = Vec::new();
        collect_sites(&e, rule, total, &mut Vec::new(), &mut sites);
        if sites.is_empty() {
            continue;
        }
        let path = &sites[rng.gen_range(0..sites.len())];
        return replace_at(&e, path, rule, total, rng);
    }
    unreachable!("double-negation insertion applies at any root");
}

/// Walk the tree, record paths where `rule` applies, return subtree size.
fn collect_sites(
    e: &BoolExpr,
    rule: Rule,
    total: usize,
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) -> usize {
    let mut child_sizes = Vec::new();
    let mut size = 1usize;
    let children: Vec<&BoolExpr> = match e {
        BoolExpr::Var(_) | BoolExpr::Const(_) => Vec::new(),
        BoolExpr::Not(c) => vec![c.as_ref()],
        BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().collect(),
        BoolExpr::Xor(a, b) => vec![a.as_ref(), b.as_ref()],
    };
    for (i, c) in children.iter().enumerate() {
        path.push(i);
        let s = collect_sites(c, rule, total, path, out);
        path.pop();
        child_sizes.push(s);
        size += s;
    }
    if applicable(rule, e, &child_sizes, size, total) {
        out.push(path.clone());
    }
    size
}

fn dual_child_indices(e: &BoolExpr) -> Vec<usize> {
    match e {
        BoolExpr::And(cs) => cs
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, BoolExpr::Or(_)))
            .map(|(i, _)| i)
            .collect(),
        BoolExpr::Or(cs) => cs
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, BoolExpr::And(_)))
            .map(|(i, _)| i)
            .collect(),
        _ => Vec::new(),
    }
}

fn op_children(e: &BoolExpr) -> Option<&Vec<BoolExpr>> {
    match e {
        BoolExpr::And(cs) | BoolExpr::Or(cs) => Some(cs),
        _ => None,
    }
}

fn arity(e: &BoolExpr) -> usize {
    match e {
        BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.len(),
        BoolExpr::Xor(..) => 2,
        _ => 0,
    }
}

/// Projected total node count after distributing `e` over its dual child
/// `j`: the other children are cloned once per branch of that child.
fn distrib_projected(e: &BoolExpr, child_sizes: &[usize], size: usize, total: usize, j: usize) -> usize {
    let cs = op_children(e).expect("distribution site");
    let m = arity(&cs[j]);
    let branch = size - child_sizes[j];
    total - size + m * branch + child_sizes[j]
}

fn distrib_eligible(e: &BoolExpr, child_sizes: &[usize], size: usize, total: usize) -> Vec<usize> {
    dual_child_indices(e)
        .into_iter()
        .filter(|&j| distrib_projected(e, child_sizes, size, total, j) <= MAX_REWRITE_NODES)
        .collect()
}

/// Terms that appear (structurally) in every branch of an all-`And` Or or
/// all-`Or` And — the candidates for factoring.
fn common_factor_candidates(e: &BoolExpr) -> Vec<BoolExpr> {
    let (cs, inner_is_and) = match e {
        BoolExpr::Or(cs) => (cs, true),
        BoolExpr::And(cs) => (cs, false),
        _ => return Vec::new(),
    };
    let branches: Option<Vec<&Vec<BoolExpr>>> = cs
        .iter()
        .map(|c| match (c, inner_is_and) {
            (BoolExpr::And(xs), true) | (BoolExpr::Or(xs), false) => Some(xs),
            _ => None,
        })
        .collect();
    let Some(branches) = branches else {
        return Vec::new();
    };
    let mut seen: Vec<BoolExpr> = Vec::new();
    for term in branches[0].iter() {
        if seen.contains(term) {
            continue;
        }
        if branches.iter().all(|b| b.contains(term)) {
            seen.push(term.clone());
        }
    }
    seen
}

/// Match `(x & !y) | (!x & y)` (children in any order) and return `(x, y)`.
fn match_sop(e: &BoolExpr) -> Option<(BoolExpr, BoolExpr)> {
    let BoolExpr::Or(cs) = e else { return None };
    if cs.len() != 2 {
        return None;
    }
    let (BoolExpr::And(a), BoolExpr::And(b)) = (&cs[0], &cs[1]) else {
        return None;
    };
    if a.len() != 2 || b.len() != 2 {
        return None;
    }
    let is_not_of =
        |x: &BoolExpr, y: &BoolExpr| matches!(x, BoolExpr::Not(inner) if inner.as_ref() == y);
    for (u, v) in [(0, 1), (1, 0)] {
        for (w, z) in [(0, 1), (1, 0)] {
            if is_not_of(&b[w], &a[u]) && is_not_of(&a[v], &b[z]) {
                return Some((a[u].clone(), b[z].clone()));
            }
        }
    }
    None
}

fn applicable(rule: Rule, e: &BoolExpr, child_sizes: &[usize], size: usize, total: usize) -> bool {
    match rule {
        Rule::DeMorganFwd => {
            matches!(e, BoolExpr::Not(c) if matches!(c.as_ref(), BoolExpr::And(_) | BoolExpr::Or(_)))
        }
        Rule::DeMorganRev => matches!(e, BoolExpr::And(_) | BoolExpr::Or(_)),
        Rule::DistribFwd => !distrib_eligible(e, child_sizes, size, total).is_empty(),
        Rule::DistribRev => !common_factor_candidates(e).is_empty(),
        Rule::Commute => matches!(e, BoolExpr::And(_) | BoolExpr::Or(_) | BoolExpr::Xor(..)),
        Rule::AssocGroup => op_children(e).map_or(false, |cs| cs.len() >= 3),
        Rule::AssocFlatten => match e {
            BoolExpr::And(cs) => cs.iter().any(|c| matches!(c, BoolExpr::And(_))),
            BoolExpr::Or(cs) => cs.iter().any(|c| matches!(c, BoolExpr::Or(_))),
            _ => false,
        },
        Rule::DoubleNegInsert => true,
        Rule::DoubleNegRemove => {
            matches!(e, BoolExpr::Not(c) if matches!(c.as_ref(), BoolExpr::Not(_)))
        }
        Rule::XorExpand => {
            matches!(e, BoolExpr::Xor(..)) && total + size + 3 <= MAX_REWRITE_NODES
        }
        Rule::XorContract => match_sop(e).is_some(),
    }
}

fn replace_at(
    e: &BoolExpr,
    path: &[usize],
    rule: Rule,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> BoolExpr {
    let Some((&step, rest)) = path.split_first() else {
        return apply_rule(rule, e, total, rng);
    };
    match e {
        BoolExpr::Not(c) => BoolExpr::not(replace_at(c, rest, rule, total, rng)),
        BoolExpr::And(cs) | BoolExpr::Or(cs) => {
            let mut cs = cs.clone();
            cs[step] = replace_at(&cs[step], rest, rule, total, rng);
            if matches!(e, BoolExpr::And(_)) {
                BoolExpr::And(cs)
            } else {
                BoolExpr::Or(cs)
            }
        }
        BoolExpr::Xor(a, b) => {
            if step == 0 {
                BoolExpr::xor(replace_at(a, rest, rule, total, rng), b.as_ref().clone())
            } else {
                BoolExpr::xor(a.as_ref().clone(), replace_at(b, rest, rule, total, rng))
            }
        }
        BoolExpr::Var(_) | BoolExpr::Const(_) => unreachable!("path into a leaf"),
    }
}

fn apply_rule(rule: Rule, e: &BoolExpr, total: usize, rng: &mut ChaCha8Rng) -> BoolExpr {
    match rule {
        Rule::DeMorganFwd => {
            let BoolExpr::Not(c) = e else { unreachable!() };
            match c.as_ref() {
                BoolExpr::And(cs) => {
                    BoolExpr::Or(cs.iter().map(|x| BoolExpr::not(x.clone())).collect())
                }
                BoolExpr::Or(cs) => {
                    BoolExpr::And(cs.iter().map(|x| BoolExpr::not(x.clone())).collect())
                }
                _ => unreachable!(),
            }
        }
        Rule::DeMorganRev => match e {
            BoolExpr::And(cs) => BoolExpr::not(BoolExpr::Or(
                cs.iter().map(|x| BoolExpr::not(x.clone())).collect(),
            )),
            BoolExpr::Or(cs) => BoolExpr::not(BoolExpr::And(
                cs.iter().map(|x| BoolExpr::not(x.clone())).collect(),
            )),
            _ => unreachable!(),
        },
        Rule::DistribFwd => {
            let mut child_sizes = Vec::new();
            let mut size = 1usize;
            for c in op_children(e).expect("distribution site") {
                let s = c.node_count();
                child_sizes.push(s);
                size += s;
            }
            let eligible = distrib_eligible(e, &child_sizes, size, total);
            let j = eligible[rng.gen_range(0..eligible.len())];
            let cs = op_children(e).expect("distribution site");
            let inner = op_children(&cs[j]).expect("dual child");
            let branches: Vec<BoolExpr> = inner
                .iter()
                .map(|y| {
                    let mut kids = cs.clone();
                    kids[j] = y.clone();
                    match e {
                        BoolExpr::And(_) => BoolExpr::And(kids),
                        _ => BoolExpr::Or(kids),
                    }
                })
                .collect();
            match e {
                BoolExpr::And(_) => BoolExpr::Or(branches),
                _ => BoolExpr::And(branches),
            }
        }
        Rule::DistribRev => {
            let candidates = common_factor_candidates(e);
            let t = candidates[rng.gen_range(0..candidates.len())].clone();
            let cs = op_children(e).expect("factoring site");
            let stripped: Vec<BoolExpr> = cs
                .iter()
                .map(|c| {
                    let inner = op_children(c).expect("factorable branch");
                    let mut rest = inner.clone();
                    let at = rest.iter().position(|x| *x == t).expect("common term");
                    rest.remove(at);
                    if rest.len() == 1 {
                        rest.pop().expect("non-empty")
                    } else {
                        match c {
                            BoolExpr::And(_) => BoolExpr::And(rest),
                            _ => BoolExpr::Or(rest),
                        }
                    }
                })
                .collect();
            match e {
                // (t & b1) | (t & b2) | …  ->  t & (b1 | b2 | …)
                BoolExpr::Or(_) => BoolExpr::And(vec![t, BoolExpr::Or(stripped)]),
                // (t | b1) & (t | b2) & …  ->  t | (b1 & b2 & …)
                _ => BoolExpr::Or(vec![t, BoolExpr::And(stripped)]),
            }
        }
        Rule::Commute => match e {
            BoolExpr::And(cs) => {
                let mut cs = cs.clone();
                cs.shuffle(rng);
                BoolExpr::And(cs)
            }
            BoolExpr::Or(cs) => {
                let mut cs = cs.clone();
                cs.shuffle(rng);
                BoolExpr::Or(cs)
            }
            BoolExpr::Xor(a, b) => BoolExpr::xor(b.as_ref().clone(), a.as_ref().clone()),
            _ => unreachable!(),
        },
        Rule::AssocGroup => {
            let cs = op_children(e).expect("regroup site");
            let n = cs.len();
            let len = rng.gen_range(2..n);
            let start = rng.gen_range(0..=n - len);
            let mut kids = cs.clone();
            let grouped: Vec<BoolExpr> = kids.splice(start..start + len, None).collect();
            let group = match e {
                BoolExpr::And(_) => BoolExpr::And(grouped),
                _ => BoolExpr::Or(grouped),
            };
            kids.insert(start, group);
            match e {
                BoolExpr::And(_) => BoolExpr::And(kids),
                _ => BoolExpr::Or(kids),
            }
        }
        Rule::AssocFlatten => {
            let cs = op_children(e).expect("flatten site");
            let same: Vec<usize> = cs
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    matches!(
                        (e, c),
                        (BoolExpr::And(_), BoolExpr::And(_)) | (BoolExpr::Or(_), BoolExpr::Or(_))
                    )
                })
                .map(|(i, _)| i)
                .collect();
            let j = same[rng.gen_range(0..same.len())];
            let mut kids = cs.clone();
            let inner = op_children(&kids[j]).expect("same-op child").clone();
            kids.splice(j..j + 1, inner);
            match e {
                BoolExpr::And(_) => BoolExpr::And(kids),
                _ => BoolExpr::Or(kids),
            }
        }
        Rule::DoubleNegInsert => BoolExpr::not(BoolExpr::not(e.clone())),
        Rule::DoubleNegRemove => {
            let BoolExpr::Not(c) = e else { unreachable!() };
            let BoolExpr::Not(inner) = c.as_ref() else {
                unreachable!()
            };
            inner.as_ref().clone()
        }
        Rule::XorExpand => {
            let BoolExpr::Xor(a, b) = e else { unreachable!() };
            let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
            BoolExpr::Or(vec![
                BoolExpr::And(vec![a.clone(), BoolExpr::not(b.clone())]),
                BoolExpr::And(vec![BoolExpr::not(a), b]),
            ])
        }
        Rule::XorContract => {
            let (x, y) = match_sop(e).expect("matched site");
            BoolExpr::xor(x, y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_equivalent, parse_expr, EquivVerdict};
    use super::*;

    fn e(s: &str) -> BoolExpr {
        parse_expr(s).unwrap()
    }

    fn apply_at_root(rule: Rule, input: &BoolExpr) -> BoolExpr {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        apply_rule(rule, input, input.node_count(), &mut rng)
    }

    #[test]
    fn de_morgan_step() {
        assert_eq!(apply_at_root(Rule::DeMorganFwd, &e("!(a | b)")), e("!a & !b"));
        assert_eq!(apply_at_root(Rule::DeMorganRev, &e("a & b")), e("!(!a | !b)"));
    }

    #[test]
    fn distribution_and_factoring() {
        let dist = apply_at_root(Rule::DistribFwd, &e("a & (b | c)"));
        assert_eq!(dist, e("(a & b) | (a & c)"));
        let fact = apply_at_root(Rule::DistribRev, &e("(a & b) | (a & c)"));
        assert_eq!(fact, e("a & (b | c)"));
        let dual = apply_at_root(Rule::DistribRev, &e("(a | b) & (a | c)"));
        assert_eq!(dual, e("a | (b & c)"));
    }

    #[test]
    fn xor_both_directions() {
        let sop = apply_at_root(Rule::XorExpand, &e("a ^ b"));
        assert_eq!(sop, e("(a & !b) | (!a & b)"));
        assert_eq!(apply_at_root(Rule::XorContract, &sop), e("a ^ b"));
        assert_eq!(apply_at_root(Rule::XorContract, &e("(!a & b) | (a & !b)")), e("b ^ a"));
    }

    #[test]
    fn assoc_flatten_inlines_nested_children() {
        assert_eq!(apply_at_root(Rule::AssocFlatten, &e("(a & b) & c")), e("a & b & c"));
    }

    #[test]
    fn leaf_fallback_is_double_negation() {
        for seed in 0..25 {
            assert_eq!(rewrite_equiv(&e("a"), seed, 1), e("!!a"));
            assert_eq!(rewrite_equiv(&BoolExpr::Const(true), seed, 1), e("!!1"));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let x = e("!(a | b ^ c) & (d | a)");
        assert_eq!(rewrite_equiv(&x, 7, 6), rewrite_equiv(&x, 7, 6));
    }

    #[test]
    fn rewrites_preserve_function() {
        let samples = [
            "a",
            "!a & b",
            "!(a | b ^ c) & (d | a)",
            "(a & b) | (a & c) | (a & d)",
            "(x ^ y) ^ (x & !z)",
            "!(!(a & b) | !(c | 0)) ^ 1",
        ];
        for (i, s) in samples.iter().enumerate() {
            let orig = e(s);
            for steps in [1, 4, 10] {
                let rw = rewrite_equiv(&orig, 1000 + i as u64, steps);
                assert_eq!(
                    check_equivalent(&orig, &rw),
                    EquivVerdict::Equivalent,
                    "{s} broke after {steps} steps: {:?}",
                    rw
                );
            }
        }
    }
}
