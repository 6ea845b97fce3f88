//! Normal form used to detect distinct trees that denote the same
//! expression.
//!
//! The rewrite pass is deliberately bounded: associative chains of `+` and
//! `*` are flattened, operands of commutative operations are sorted,
//! subtraction and division are rewritten as `a + (-1)*b` and `a * b^-1`,
//! and numeric literals introduced by those rewrites are folded. Parameter
//! symbols stay distinct; nothing is collapsed into a fresh constant.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ops::{OpKind, OperationSet};
use crate::expr::tree::{ExpressionTree, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(pub String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Normalized expression. Construct through the `make_*` functions so that
/// every node is already in normal form.
#[derive(Clone, Debug, PartialEq)]
pub enum Canon {
    Num(f64),
    Var(u8),
    Param(u8),
    Sum(Vec<Canon>),
    Prod(Vec<Canon>),
    Pow(Box<Canon>, Box<Canon>),
    Call(OpKind, Box<Canon>),
}

pub fn canonical_key(tree: &ExpressionTree, opset: &OperationSet) -> CanonicalKey {
    CanonicalKey(canonicalize(tree, opset).render())
}

pub fn canonicalize(tree: &ExpressionTree, opset: &OperationSet) -> Canon {
    build(tree.nodes(), &mut 0, opset)
}

fn build(nodes: &[Symbol], pos: &mut usize, opset: &OperationSet) -> Canon {
    let s = nodes[*pos];
    *pos += 1;
    match s {
        Symbol::Var(i) => Canon::Var(i),
        Symbol::Param(i) => Canon::Param(i),
        Symbol::Unary(o) => {
            let a = build(nodes, pos, opset);
            apply_unary(opset.op(o as usize), a)
        }
        Symbol::Binary(o) => {
            let a = build(nodes, pos, opset);
            let b = build(nodes, pos, opset);
            apply_binary(opset.op(o as usize), a, b)
        }
    }
}

fn apply_unary(op: OpKind, a: Canon) -> Canon {
    match op {
        OpKind::Neg => make_prod(vec![Canon::Num(-1.0), a]),
        OpKind::Inv => make_pow(a, Canon::Num(-1.0)),
        OpKind::Square => make_pow(a, Canon::Num(2.0)),
        OpKind::Cube => make_pow(a, Canon::Num(3.0)),
        _ => make_call(op, a),
    }
}

fn apply_binary(op: OpKind, a: Canon, b: Canon) -> Canon {
    match op {
        OpKind::Add => make_sum(vec![a, b]),
        OpKind::Sub => make_sum(vec![a, make_prod(vec![Canon::Num(-1.0), b])]),
        OpKind::Mul => make_prod(vec![a, b]),
        OpKind::Div => make_prod(vec![a, make_pow(b, Canon::Num(-1.0))]),
        OpKind::Pow => make_pow(a, b),
        _ => unreachable!("unary op {op} applied to two operands"),
    }
}

fn clean(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

fn sort_operands(items: &mut [Canon]) {
    let mut keyed: Vec<(String, Canon)> = items.iter().map(|c| (c.render(), c.clone())).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    for (slot, (_, c)) in items.iter_mut().zip(keyed) {
        *slot = c;
    }
}

pub fn make_sum(terms: Vec<Canon>) -> Canon {
    let mut flat = Vec::with_capacity(terms.len());
    let mut constant = 0.0;
    let mut has_constant = false;
    for t in terms {
        match t {
            Canon::Sum(inner) => {
                for u in inner {
                    match u {
                        Canon::Num(v) => {
                            constant += v;
                            has_constant = true;
                        }
                        other => flat.push(other),
                    }
                }
            }
            Canon::Num(v) => {
                constant += v;
                has_constant = true;
            }
            other => flat.push(other),
        }
    }
    if has_constant && (constant != 0.0 || flat.is_empty()) {
        flat.push(Canon::Num(clean(constant)));
    }
    match flat.len() {
        0 => Canon::Num(0.0),
        1 => flat.pop().unwrap(),
        _ => {
            sort_operands(&mut flat);
            Canon::Sum(flat)
        }
    }
}

pub fn make_prod(factors: Vec<Canon>) -> Canon {
    let mut flat = Vec::with_capacity(factors.len());
    let mut coefficient = 1.0;
    for f in factors {
        match f {
            Canon::Prod(inner) => {
                for u in inner {
                    match u {
                        Canon::Num(v) => coefficient *= v,
                        other => flat.push(other),
                    }
                }
            }
            Canon::Num(v) => coefficient *= v,
            other => flat.push(other),
        }
    }
    if coefficient == 0.0 {
        return Canon::Num(0.0);
    }
    if coefficient != 1.0 || flat.is_empty() {
        flat.push(Canon::Num(clean(coefficient)));
    }
    match flat.len() {
        1 => flat.pop().unwrap(),
        _ => {
            sort_operands(&mut flat);
            Canon::Prod(flat)
        }
    }
}

pub fn make_pow(base: Canon, exponent: Canon) -> Canon {
    match (&base, &exponent) {
        (Canon::Num(b), Canon::Num(e)) => {
            let v = b.powf(*e);
            if v.is_finite() {
                return Canon::Num(clean(v));
            }
        }
        (_, Canon::Num(e)) if *e == 1.0 => return base,
        // (a^-1)^-1 = a; other exponent products are not valid over the reals.
        (Canon::Pow(inner, e1), Canon::Num(e2)) if **e1 == Canon::Num(-1.0) && *e2 == -1.0 => {
            return (**inner).clone();
        }
        _ => {}
    }
    Canon::Pow(Box::new(base), Box::new(exponent))
}

pub fn make_call(op: OpKind, arg: Canon) -> Canon {
    if let Canon::Num(v) = arg {
        let r = op.apply_unary(v);
        if r.is_finite() {
            return Canon::Num(clean(r));
        }
    }
    Canon::Call(op, Box::new(arg))
}

impl Canon {
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.render_into(&mut s);
        s
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Canon::Num(v) => out.push_str(&format!("{}", clean(*v))),
            Canon::Var(i) => out.push_str(&format!("x{}", i + 1)),
            Canon::Param(i) => out.push_str(&format!("p{}", i + 1)),
            Canon::Sum(items) | Canon::Prod(items) => {
                out.push_str(if matches!(self, Canon::Sum(_)) {
                    "(+"
                } else {
                    "(*"
                });
                for it in items {
                    out.push(' ');
                    it.render_into(out);
                }
                out.push(')');
            }
            Canon::Pow(b, e) => {
                out.push_str("(pow ");
                b.render_into(out);
                out.push(' ');
                e.render_into(out);
                out.push(')');
            }
            Canon::Call(op, a) => {
                out.push('(');
                out.push_str(op.name());
                out.push(' ');
                a.render_into(out);
                out.push(')');
            }
        }
    }

    /// Parses a rendered key back into a normalized expression. Every
    /// constructor re-applies the rewrite rules, so for any key `k`,
    /// `Canon::parse(k).render() == k`.
    pub fn parse(key: &str) -> Result<Canon> {
        let tokens: Vec<&str> = key.split_whitespace().flat_map(split_parens).collect();
        let mut pos = 0;
        let c = parse_canon(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Syntax {
                pos,
                msg: "trailing tokens in canonical key".into(),
            });
        }
        Ok(c)
    }
}

impl Eq for Canon {}

impl PartialOrd for Canon {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Canon {
    fn cmp(&self, other: &Self) -> Ordering {
        self.render().cmp(&other.render())
    }
}

fn split_parens(word: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in word.char_indices() {
        if c == '(' || c == ')' {
            if start < i {
                out.push(&word[start..i]);
            }
            out.push(&word[i..i + 1]);
            start = i + 1;
        }
    }
    if start < word.len() {
        out.push(&word[start..]);
    }
    out
}

fn parse_canon(tokens: &[&str], pos: &mut usize) -> Result<Canon> {
    let err = |p: usize, m: &str| Error::Syntax {
        pos: p,
        msg: m.to_string(),
    };
    let tok = *tokens
        .get(*pos)
        .ok_or_else(|| err(*pos, "unexpected end"))?;
    *pos += 1;
    if tok == "(" {
        let head = *tokens.get(*pos).ok_or_else(|| err(*pos, "missing head"))?;
        *pos += 1;
        let mut args = Vec::new();
        while tokens.get(*pos) != Some(&")") {
            if *pos >= tokens.len() {
                return Err(err(*pos, "missing `)`"));
            }
            args.push(parse_canon(tokens, pos)?);
        }
        *pos += 1;
        return match head {
            "+" if args.len() >= 2 => Ok(make_sum(args)),
            "*" if args.len() >= 2 => Ok(make_prod(args)),
            "pow" if args.len() == 2 => {
                let e = args.pop().unwrap();
                let b = args.pop().unwrap();
                Ok(make_pow(b, e))
            }
            name => match OpKind::from_name(name) {
                Some(op) if op.arity() == 1 && args.len() == 1 => {
                    Ok(make_call(op, args.pop().unwrap()))
                }
                _ => Err(Error::UnknownSymbol(name.to_string())),
            },
        };
    }
    if let Some(rest) = tok.strip_prefix('x') {
        if let Ok(i) = rest.parse::<u8>() {
            if i >= 1 {
                return Ok(Canon::Var(i - 1));
            }
        }
    }
    if let Some(rest) = tok.strip_prefix('p') {
        if let Ok(i) = rest.parse::<u8>() {
            if i >= 1 {
                return Ok(Canon::Param(i - 1));
            }
        }
    }
    tok.parse::<f64>()
        .map(Canon::Num)
        .map_err(|_| Error::UnknownSymbol(tok.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::tree::parse_expression;

    fn key(text: &str, set: &OperationSet) -> CanonicalKey {
        canonical_key(&parse_expression(text, set).unwrap(), set)
    }

    fn set() -> OperationSet {
        let mut names: Vec<&str> = crate::expr::ops::DEFAULT_OPS.to_vec();
        names.extend(["neg", "inv", "pow2"]);
        OperationSet::from_names(&names, 3, 2).unwrap()
    }

    #[test]
    fn commutative_operands() {
        let s = set();
        assert_eq!(key("(+ x1 p1)", &s), key("(+ p1 x1)", &s));
        assert_eq!(key("(* x1 (sin x2))", &s), key("(* (sin x2) x1)", &s));
        assert_ne!(key("(sin x1)", &s), key("(cos x1)", &s));
        assert_ne!(key("(- x1 p1)", &s), key("(- p1 x1)", &s));
    }

    #[test]
    fn associative_flattening() {
        let s = set();
        assert_eq!(key("(+ (+ x1 x1) p1)", &s), key("(+ x1 (+ p1 x1))", &s));
        assert_eq!(key("(* (* x1 x2) x3)", &s), key("(* x3 (* x2 x1))", &s));
    }

    #[test]
    fn subtraction_and_division_forms() {
        let s = set();
        assert_eq!(key("(- x1 x2)", &s), key("(+ x1 (neg x2))", &s));
        assert_eq!(key("(/ x1 x2)", &s), key("(* x1 (inv x2))", &s));
        assert_eq!(key("(neg (neg x1))", &s), key("x1", &s));
        assert_eq!(key("(inv (inv x1))", &s), key("x1", &s));
        assert_eq!(key("(pow2 x1)", &s).as_str(), "(pow x1 2)");
    }

    #[test]
    fn idempotent_on_reparse() {
        let s = set();
        for text in [
            "(/ (* (* x1 (+ p1 x2)) (cos x1)) (* p2 (log p2)))",
            "(- (neg x2) x3)",
            "(pow (- x1 p1) (inv x2))",
            "(neg (- x1 x1))",
        ] {
            let k = key(text, &s);
            let again = Canon::parse(k.as_str()).unwrap().render();
            assert_eq!(again, k.0, "{text}");
        }
    }
}
