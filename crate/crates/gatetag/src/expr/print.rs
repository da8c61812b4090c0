//! Canonical text form.
//!
//! The printed form is fully parenthesized infix: `And`/`Or`/`Xor` print as
//! `(c1 op c2 op …)` with every composite child wrapped in one extra layer
//! of parentheses, `Not` prefixes `!`, atoms print bare. Children of
//! commutative operators are ordered by printed form — longest first, ties
//! broken lexicographically — so structurally distinct but
//! permutation-equal trees print identically and tokenization is
//! reproducible.

use super::ast::BoolExpr;
use std::cmp::Ordering;

/// Canonical printed form of `e`. Inverse of [`super::parse_expr`] up to
/// child ordering: parsing the result yields `e.canonical()`.
pub fn to_text(e: &BoolExpr) -> String {
    canon(e).1
}

pub(crate) fn canonicalize(e: &BoolExpr) -> BoolExpr {
    canon(e).0
}

fn child_order(a: &str, b: &str) -> Ordering {
    b.len().cmp(&a.len()).then_with(|| a.cmp(b))
}

fn is_atom(e: &BoolExpr) -> bool {
    matches!(e, BoolExpr::Var(_) | BoolExpr::Const(_))
}

/// Wrap a child's printed form for use inside an n-ary operator. Composite
/// children get one extra paren layer; `(a & b)` stays readable while
/// `!x` becomes `(!x)` so the child boundary is explicit.
fn wrap(child: &BoolExpr, text: &str) -> String {
    if is_atom(child) {
        text.to_string()
    } else {
        format!("({text})")
    }
}

fn join(children: Vec<(BoolExpr, String)>, sep: &str) -> (Vec<BoolExpr>, String) {
    let mut out = String::from("(");
    for (i, (c, t)) in children.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(&wrap(c, t));
    }
    out.push(')');
    (children.into_iter().map(|(c, _)| c).collect(), out)
}

/// Returns the canonical tree together with its printed form; child keys are
/// reused when printing the parent so the whole pass is a single walk.
fn canon(e: &BoolExpr) -> (BoolExpr, String) {
    match e {
        BoolExpr::Var(s) => (e.clone(), s.clone()),
        BoolExpr::Const(b) => (e.clone(), if *b { "1" } else { "0" }.to_string()),
        BoolExpr::Not(c) => {
            // Composite children self-parenthesize, so `!` always binds to
            // the whole printed child without an extra layer.
            let (cc, ct) = canon(c);
            (BoolExpr::Not(Box::new(cc)), format!("!{ct}"))
        }
        BoolExpr::And(cs) | BoolExpr::Or(cs) => {
            let mut kids: Vec<(BoolExpr, String)> = cs.iter().map(canon).collect();
            kids.sort_by(|(_, ka), (_, kb)| child_order(ka, kb));
            let sep = if matches!(e, BoolExpr::And(_)) { " & " } else { " | " };
            let (kids, text) = join(kids, sep);
            let node = if matches!(e, BoolExpr::And(_)) {
                BoolExpr::And(kids)
            } else {
                BoolExpr::Or(kids)
            };
            (node, text)
        }
        BoolExpr::Xor(a, b) => {
            let mut kids = vec![canon(a), canon(b)];
            kids.sort_by(|(_, ka), (_, kb)| child_order(ka, kb));
            let (mut kids, text) = join(kids, " ^ ");
            let rhs = kids.pop().expect("xor arity");
            let lhs = kids.pop().expect("xor arity");
            (BoolExpr::xor(lhs, rhs), text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> BoolExpr {
        BoolExpr::var(s)
    }

    #[test]
    fn commutative_children_print_in_canonical_order() {
        assert_eq!(to_text(&BoolExpr::and(vec![v("b"), v("a")])), "(a & b)");
        assert_eq!(to_text(&BoolExpr::and(vec![v("a"), v("b")])), "(a & b)");
        assert_eq!(to_text(&BoolExpr::xor(v("R2"), v("R1"))), "(R1 ^ R2)");
    }

    #[test]
    fn longer_children_come_first() {
        let e = BoolExpr::or(vec![BoolExpr::not(v("R2")), BoolExpr::xor(v("R1"), v("R2"))]);
        assert_eq!(to_text(&e), "(((R1 ^ R2)) | (!R2))");
    }

    #[test]
    fn next_state_golden_string() {
        // NOR of an XOR and an inverted register feedback, the stock
        // two-hop example used across the fixtures.
        let e = BoolExpr::not(BoolExpr::or(vec![
            BoolExpr::xor(v("R1"), v("R2")),
            BoolExpr::not(v("R2")),
        ]));
        assert_eq!(to_text(&e), "!(((R1 ^ R2)) | (!R2))");
    }

    #[test]
    fn atoms_and_negations() {
        assert_eq!(to_text(&v("a")), "a");
        assert_eq!(to_text(&BoolExpr::Const(true)), "1");
        assert_eq!(to_text(&BoolExpr::not(BoolExpr::not(v("a")))), "!!a");
        assert_eq!(
            to_text(&BoolExpr::not(BoolExpr::or(vec![v("a"), v("b")]))),
            "!(a | b)"
        );
    }

    #[test]
    fn nested_same_op_is_not_flattened() {
        let e = BoolExpr::and(vec![BoolExpr::and(vec![v("a"), v("b")]), v("c")]);
        assert_eq!(to_text(&e), "(((a & b)) & c)");
    }

    #[test]
    fn print_is_invariant_under_child_permutation() {
        let a = BoolExpr::or(vec![v("x"), BoolExpr::not(v("y")), BoolExpr::Const(false)]);
        let b = BoolExpr::or(vec![BoolExpr::Const(false), BoolExpr::not(v("y")), v("x")]);
        assert_eq!(to_text(&a), to_text(&b));
        assert_eq!(a.canonical(), b.canonical());
    }
}
