use std::collections::BTreeSet;

/// Symbolic Boolean expression tree.
///
/// `And`/`Or` are n-ary with at least two children; `Xor` is strictly
/// binary, matching how cell functions compose. Variables are named by the
/// driving symbol (register instance, primary input net, or frontier gate).
/// Trees are plain values — no sharing, no interning.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Var(String),
    Const(bool),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Xor(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn var(name: impl Into<String>) -> Self {
        let name = name.into();
        debug_assert!(!name.is_empty(), "variable symbols must be non-empty");
        BoolExpr::Var(name)
    }

    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(children: Vec<BoolExpr>) -> Self {
        assert!(children.len() >= 2, "And needs >= 2 children");
        BoolExpr::And(children)
    }

    pub fn or(children: Vec<BoolExpr>) -> Self {
        assert!(children.len() >= 2, "Or needs >= 2 children");
        BoolExpr::Or(children)
    }

    pub fn xor(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Xor(Box::new(a), Box::new(b))
    }

    /// Distinct variable symbols, sorted lexicographically.
    pub fn vars(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set.into_iter().collect()
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BoolExpr::Var(s) => {
                out.insert(s.clone());
            }
            BoolExpr::Const(_) => {}
            BoolExpr::Not(c) => c.collect_vars(out),
            BoolExpr::And(cs) | BoolExpr::Or(cs) => {
                for c in cs {
                    c.collect_vars(out);
                }
            }
            BoolExpr::Xor(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            BoolExpr::Var(_) | BoolExpr::Const(_) => 1,
            BoolExpr::Not(c) => 1 + c.node_count(),
            BoolExpr::And(cs) | BoolExpr::Or(cs) => {
                1 + cs.iter().map(BoolExpr::node_count).sum::<usize>()
            }
            BoolExpr::Xor(a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Evaluate under an assignment of variables to bits.
    pub fn eval<F: Fn(&str) -> bool>(&self, assign: &F) -> bool {
        match self {
            BoolExpr::Var(s) => assign(s),
            BoolExpr::Const(b) => *b,
            BoolExpr::Not(c) => !c.eval(assign),
            BoolExpr::And(cs) => cs.iter().all(|c| c.eval(assign)),
            BoolExpr::Or(cs) => cs.iter().any(|c| c.eval(assign)),
            BoolExpr::Xor(a, b) => a.eval(assign) ^ b.eval(assign),
        }
    }

    /// Normal form: children of commutative operators sorted by their
    /// printed form (longest first, ties lexicographic). `to_text` prints
    /// this form, so `parse_expr(to_text(e)) == e.canonical()`.
    pub fn canonical(&self) -> BoolExpr {
        super::print::canonicalize(self)
    }
}
