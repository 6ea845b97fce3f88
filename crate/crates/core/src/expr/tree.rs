use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::expr::ops::{OpKind, OperationSet};

pub const DEFAULT_MAX_TREE_SIZE: usize = 50;

/// One node of a prefix-encoded tree. Operation payloads index into the
/// owning [`OperationSet`]; arity is carried by the variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Var(u8),
    Param(u8),
    Unary(u8),
    Binary(u8),
}

impl Symbol {
    #[inline]
    pub fn arity(self) -> usize {
        match self {
            Symbol::Var(_) | Symbol::Param(_) => 0,
            Symbol::Unary(_) => 1,
            Symbol::Binary(_) => 2,
        }
    }

    #[inline]
    pub fn is_leaf(self) -> bool {
        self.arity() == 0
    }

    pub fn op_index(self) -> Option<usize> {
        match self {
            Symbol::Unary(i) | Symbol::Binary(i) => Some(i as usize),
            _ => None,
        }
    }

    pub fn op(opset: &OperationSet, index: usize) -> Symbol {
        match opset.op(index).arity() {
            1 => Symbol::Unary(index as u8),
            _ => Symbol::Binary(index as u8),
        }
    }

    /// The `i`-th leaf symbol: variables first, then parameters.
    pub fn leaf(opset: &OperationSet, i: usize) -> Symbol {
        if i < opset.n_vars() {
            Symbol::Var(i as u8)
        } else {
            Symbol::Param((i - opset.n_vars()) as u8)
        }
    }
}

/// An expression tree stored in prefix order.
///
/// Every subtree occupies a contiguous range of `nodes`, so positions are
/// plain indices and replacing a subtree is a splice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExpressionTree {
    nodes: Vec<Symbol>,
}

impl ExpressionTree {
    /// Builds a tree from prefix symbols, checking that they form exactly
    /// one complete expression.
    pub fn from_prefix(nodes: Vec<Symbol>) -> Result<Self> {
        let mut need = 1usize;
        for (i, s) in nodes.iter().enumerate() {
            if need == 0 {
                return Err(Error::Syntax {
                    pos: i,
                    msg: "trailing symbols after complete expression".into(),
                });
            }
            need = need - 1 + s.arity();
        }
        if need != 0 || nodes.is_empty() {
            return Err(Error::Syntax {
                pos: nodes.len(),
                msg: "incomplete expression".into(),
            });
        }
        Ok(ExpressionTree { nodes })
    }

    pub fn leaf(symbol: Symbol) -> Self {
        debug_assert!(symbol.is_leaf());
        ExpressionTree {
            nodes: vec![symbol],
        }
    }

    pub fn nodes(&self) -> &[Symbol] {
        &self.nodes
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> Symbol {
        self.nodes[0]
    }

    /// Exclusive end of the subtree rooted at `pos`.
    pub fn subtree_end(&self, pos: usize) -> usize {
        let mut need = 1usize;
        let mut i = pos;
        while need > 0 {
            need = need - 1 + self.nodes[i].arity();
            i += 1;
        }
        i
    }

    pub fn subtree(&self, pos: usize) -> &[Symbol] {
        &self.nodes[pos..self.subtree_end(pos)]
    }

    /// Start positions of the children of the node at `pos`.
    pub fn children(&self, pos: usize) -> Vec<usize> {
        let arity = self.nodes[pos].arity();
        let mut out = Vec::with_capacity(arity);
        let mut c = pos + 1;
        for _ in 0..arity {
            out.push(c);
            c = self.subtree_end(c);
        }
        out
    }

    /// Returns a copy with the subtree at `pos` replaced by `replacement`,
    /// which must itself be a complete prefix expression.
    pub fn replace_subtree(&self, pos: usize, replacement: &[Symbol]) -> ExpressionTree {
        let end = self.subtree_end(pos);
        let mut nodes = Vec::with_capacity(self.nodes.len() - (end - pos) + replacement.len());
        nodes.extend_from_slice(&self.nodes[..pos]);
        nodes.extend_from_slice(replacement);
        nodes.extend_from_slice(&self.nodes[end..]);
        ExpressionTree { nodes }
    }

    pub fn replace_symbol(&self, pos: usize, symbol: Symbol) -> ExpressionTree {
        debug_assert_eq!(self.nodes[pos].arity(), symbol.arity());
        let mut nodes = self.nodes.clone();
        nodes[pos] = symbol;
        ExpressionTree { nodes }
    }

    /// Puts `self` under a new root: `prefix_root` is the new root symbol,
    /// `self` fills the leftmost slot and `rest` the remaining slots.
    pub fn with_new_root(&self, root: Symbol, rest: &[Symbol]) -> ExpressionTree {
        let mut nodes = Vec::with_capacity(1 + self.nodes.len() + rest.len());
        nodes.push(root);
        nodes.extend_from_slice(&self.nodes);
        nodes.extend_from_slice(rest);
        ExpressionTree { nodes }
    }

    pub fn n_operations(&self) -> usize {
        self.nodes.iter().filter(|s| !s.is_leaf()).count()
    }

    /// Sorted distinct parameter indices occurring in the tree.
    pub fn params_used(&self) -> Vec<usize> {
        let mut seen: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|s| match s {
                Symbol::Param(p) => Some(*p as usize),
                _ => None,
            })
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|s| match s {
                Symbol::Var(v) => Some(*v as usize),
                _ => None,
            })
            .max()
    }

    /// Checks symbol indices against `opset` and the size limit.
    pub fn validate(&self, opset: &OperationSet, max_size: usize) -> Result<()> {
        if self.size() > max_size {
            return Err(Error::TooLarge {
                size: self.size(),
                limit: max_size,
            });
        }
        for s in &self.nodes {
            match *s {
                Symbol::Var(v) if v as usize >= opset.n_vars() => {
                    return Err(Error::UnknownSymbol(format!("x{}", v + 1)))
                }
                Symbol::Param(p) if p as usize >= opset.n_params() => {
                    return Err(Error::UnknownSymbol(format!("p{}", p + 1)))
                }
                Symbol::Unary(o) | Symbol::Binary(o) => {
                    if o as usize >= opset.n_ops() || opset.op(o as usize).arity() != s.arity() {
                        return Err(Error::UnknownSymbol(format!("op#{o}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Per-operation occurrence counts, indexed like `opset.ops()`.
    pub fn count_operations(&self, opset: &OperationSet) -> OpCounts {
        let mut counts = vec![0u32; opset.n_ops()];
        for s in &self.nodes {
            if let Some(i) = s.op_index() {
                counts[i] += 1;
            }
        }
        OpCounts(counts)
    }

    /// Scalar evaluation. Domain violations propagate as NaN or infinity;
    /// this never panics for vectors of the right length.
    pub fn evaluate(&self, opset: &OperationSet, x: &[f64], theta: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for s in self.nodes.iter().rev() {
            let v = match *s {
                Symbol::Var(i) => x[i as usize],
                Symbol::Param(i) => theta[i as usize],
                Symbol::Unary(o) => {
                    let a = stack.pop().unwrap();
                    opset.op(o as usize).apply_unary(a)
                }
                Symbol::Binary(o) => {
                    let a = stack.pop().unwrap();
                    let b = stack.pop().unwrap();
                    opset.op(o as usize).apply_binary(a, b)
                }
            };
            stack.push(v);
        }
        stack.pop().unwrap()
    }

    /// Column-wise evaluation over a dataset stored as one column per
    /// variable. `out` receives one value per row.
    pub fn evaluate_columns(
        &self,
        opset: &OperationSet,
        columns: &[Vec<f64>],
        theta: &[f64],
        scratch: &mut EvalScratch,
        out: &mut Vec<f64>,
    ) {
        let n = columns.first().map_or(0, Vec::len);
        let stack = &mut scratch.stack;
        let pool = &mut scratch.pool;
        for s in self.nodes.iter().rev() {
            match *s {
                Symbol::Var(i) => {
                    let mut buf = pool.pop().unwrap_or_default();
                    buf.clear();
                    buf.extend_from_slice(&columns[i as usize]);
                    stack.push(buf);
                }
                Symbol::Param(i) => {
                    let mut buf = pool.pop().unwrap_or_default();
                    buf.clear();
                    buf.resize(n, theta[i as usize]);
                    stack.push(buf);
                }
                Symbol::Unary(o) => {
                    let op = opset.op(o as usize);
                    let top = stack.last_mut().unwrap();
                    for v in top.iter_mut() {
                        *v = op.apply_unary(*v);
                    }
                }
                Symbol::Binary(o) => {
                    let op = opset.op(o as usize);
                    let mut a = stack.pop().unwrap();
                    let b = stack.pop().unwrap();
                    match op {
                        OpKind::Add => a.iter_mut().zip(&b).for_each(|(x, y)| *x += y),
                        OpKind::Sub => a.iter_mut().zip(&b).for_each(|(x, y)| *x -= y),
                        OpKind::Mul => a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y),
                        OpKind::Div => a.iter_mut().zip(&b).for_each(|(x, y)| *x /= y),
                        _ => a
                            .iter_mut()
                            .zip(&b)
                            .for_each(|(x, y)| *x = op.apply_binary(*x, *y)),
                    }
                    pool.push(b);
                    stack.push(a);
                }
            }
        }
        let result = stack.pop().unwrap();
        out.clear();
        out.extend_from_slice(&result);
        pool.push(result);
    }

    /// Renders the tree in the prefix grammar, e.g. `(+ x1 p1)`.
    pub fn render(&self, opset: &OperationSet) -> String {
        let mut out = String::new();
        self.render_at(opset, 0, &mut out);
        out
    }

    fn render_at(&self, opset: &OperationSet, pos: usize, out: &mut String) -> usize {
        match self.nodes[pos] {
            Symbol::Var(i) => {
                let _ = write!(out, "x{}", i + 1);
                pos + 1
            }
            Symbol::Param(i) => {
                let _ = write!(out, "p{}", i + 1);
                pos + 1
            }
            s => {
                out.push('(');
                out.push_str(opset.op(s.op_index().unwrap()).name());
                let mut next = pos + 1;
                for _ in 0..s.arity() {
                    out.push(' ');
                    next = self.render_at(opset, next, out);
                }
                out.push(')');
                next
            }
        }
    }
}

/// Reusable buffers for [`ExpressionTree::evaluate_columns`].
#[derive(Default, Debug)]
pub struct EvalScratch {
    stack: Vec<Vec<f64>>,
    pool: Vec<Vec<f64>>,
}

/// Occurrence count of each operation, indexed like the operation set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct OpCounts(pub Vec<u32>);

impl OpCounts {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn get(&self, op: usize) -> u32 {
        self.0[op]
    }
}

/// Parses one expression in the prefix grammar.
pub fn parse_expression(text: &str, opset: &OperationSet) -> Result<ExpressionTree> {
    parse_expression_with_limit(text, opset, DEFAULT_MAX_TREE_SIZE)
}

pub fn parse_expression_with_limit(
    text: &str,
    opset: &OperationSet,
    max_size: usize,
) -> Result<ExpressionTree> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut nodes = Vec::new();
    let mut cursor = 0;
    parse_form(&tokens, &mut cursor, opset, &mut nodes)?;
    if cursor != tokens.len() {
        return Err(Error::Syntax {
            pos: tokens[cursor].pos,
            msg: "unexpected input after expression".into(),
        });
    }
    if nodes.len() > max_size {
        return Err(Error::TooLarge {
            size: nodes.len(),
            limit: max_size,
        });
    }
    Ok(ExpressionTree { nodes })
}

#[derive(Debug)]
struct Token<'a> {
    text: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' || c == b')' {
            tokens.push(Token {
                text: &text[i..i + 1],
                pos: i,
            });
            i += 1;
        } else {
            let start = i;
            while i < bytes.len()
                && !bytes[i].is_ascii_whitespace()
                && !matches!(bytes[i], b'(' | b')' | b'#')
            {
                i += 1;
            }
            tokens.push(Token {
                text: &text[start..i],
                pos: start,
            });
        }
    }
    Ok(tokens)
}

fn parse_form(
    tokens: &[Token<'_>],
    cursor: &mut usize,
    opset: &OperationSet,
    nodes: &mut Vec<Symbol>,
) -> Result<()> {
    let Some(tok) = tokens.get(*cursor) else {
        let pos = tokens.last().map_or(0, |t| t.pos + t.text.len());
        return Err(Error::Syntax {
            pos,
            msg: "unbalanced form: missing `)`".into(),
        });
    };
    *cursor += 1;
    match tok.text {
        "(" => {
            let Some(op_tok) = tokens.get(*cursor) else {
                return Err(Error::Syntax {
                    pos: tok.pos,
                    msg: "unbalanced form: missing operation".into(),
                });
            };
            *cursor += 1;
            let op = OpKind::from_name(op_tok.text)
                .and_then(|op| opset.index_of(op))
                .ok_or_else(|| Error::UnknownSymbol(op_tok.text.to_string()))?;
            nodes.push(Symbol::op(opset, op));
            let mut found = 0;
            loop {
                match tokens.get(*cursor) {
                    Some(t) if t.text == ")" => {
                        *cursor += 1;
                        break;
                    }
                    Some(_) => {
                        parse_form(tokens, cursor, opset, nodes)?;
                        found += 1;
                    }
                    None => {
                        return Err(Error::Syntax {
                            pos: tok.pos,
                            msg: "unbalanced form: missing `)`".into(),
                        })
                    }
                }
            }
            let expected = opset.op(op).arity();
            if found != expected {
                return Err(Error::Arity {
                    op: op_tok.text.to_string(),
                    expected,
                    found,
                });
            }
            Ok(())
        }
        ")" => Err(Error::Syntax {
            pos: tok.pos,
            msg: "unexpected `)`".into(),
        }),
        atom => {
            nodes.push(parse_atom(atom, opset)?);
            Ok(())
        }
    }
}

fn parse_atom(atom: &str, opset: &OperationSet) -> Result<Symbol> {
    let unknown = || Error::UnknownSymbol(atom.to_string());
    let (kind, digits) = atom.split_at(1.min(atom.len()));
    let index: usize = digits.parse().map_err(|_| unknown())?;
    if index == 0 {
        return Err(unknown());
    }
    match kind {
        "x" if index <= opset.n_vars() => Ok(Symbol::Var((index - 1) as u8)),
        "p" if index <= opset.n_params() => Ok(Symbol::Param((index - 1) as u8)),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(vars: usize, params: usize) -> OperationSet {
        OperationSet::default_ops(vars, params).unwrap()
    }

    #[test]
    fn parse_simple_sum() {
        let s = set(1, 1);
        let t = parse_expression("(+ x1 p1)", &s).unwrap();
        let add = s.index_of(OpKind::Add).unwrap() as u8;
        assert_eq!(
            t.nodes(),
            &[Symbol::Binary(add), Symbol::Var(0), Symbol::Param(0)]
        );
        assert_eq!(t.render(&s), "(+ x1 p1)");
    }

    #[test]
    fn parse_counts_ops() {
        let s = set(1, 1);
        let t = parse_expression("(* (* p1 x1) (cos x1))", &s).unwrap();
        assert_eq!(t.size(), 6);
        let c = t.count_operations(&s);
        assert_eq!(c.get(s.index_of(OpKind::Mul).unwrap()), 2);
        assert_eq!(c.get(s.index_of(OpKind::Cos).unwrap()), 1);
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn parse_errors() {
        let s = set(1, 1);
        assert!(matches!(
            parse_expression("(+ x1", &s),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression("(+ x1 x2)", &s),
            Err(Error::UnknownSymbol(_))
        ));
        assert!(matches!(
            parse_expression("(frob x1)", &s),
            Err(Error::UnknownSymbol(_))
        ));
        assert!(matches!(
            parse_expression("(sin x1 x1)", &s),
            Err(Error::Arity { .. })
        ));
        assert!(matches!(
            parse_expression("x1 x1", &s),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression("x0", &s),
            Err(Error::UnknownSymbol(_))
        ));
        let deep = "(sin ".repeat(60) + "x1" + &")".repeat(60);
        assert!(matches!(
            parse_expression(&deep, &s),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn comments_and_whitespace() {
        let s = set(2, 1);
        let t = parse_expression("  (+ x1 # trailing\n  x2) # done", &s).unwrap();
        assert_eq!(t.render(&s), "(+ x1 x2)");
    }

    #[test]
    fn evaluate_basic() {
        let s = set(1, 1);
        let t = parse_expression("(+ x1 p1)", &s).unwrap();
        assert_eq!(t.evaluate(&s, &[2.0], &[3.0]), 5.0);
        let t = parse_expression("(log x1)", &s).unwrap();
        assert!(!t.evaluate(&s, &[-1.0], &[0.0]).is_finite());
        let t = parse_expression("(/ x1 p1)", &s).unwrap();
        assert!(!t.evaluate(&s, &[1.0], &[0.0]).is_finite());
    }

    #[test]
    fn column_evaluation_matches_scalar() {
        let s = set(2, 2);
        let t = parse_expression("(/ (* (* x1 (+ p1 x2)) (cos x1)) (* p2 (log p2)))", &s).unwrap();
        let cols = vec![vec![0.5, -1.0, 1.5], vec![0.2, 1.0, -2.0]];
        let theta = [-1.19, 0.29];
        let mut scratch = EvalScratch::default();
        let mut out = Vec::new();
        t.evaluate_columns(&s, &cols, &theta, &mut scratch, &mut out);
        for k in 0..3 {
            let v = t.evaluate(&s, &[cols[0][k], cols[1][k]], &theta);
            assert_eq!(v.to_bits(), out[k].to_bits());
        }
    }

    #[test]
    fn subtree_navigation() {
        let s = set(1, 1);
        let t = parse_expression("(+ (sin x1) x1)", &s).unwrap();
        assert_eq!(t.children(0), vec![1, 3]);
        assert_eq!(t.subtree_end(1), 3);
        let r = t.replace_subtree(1, &[Symbol::Param(0)]);
        assert_eq!(r.render(&s), "(+ p1 x1)");
    }
}
