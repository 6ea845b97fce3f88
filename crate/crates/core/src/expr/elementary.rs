//! Elementary trees (ETs): expression trees with at most one operation.
//! A k-ET has an operation of arity k whose children are all leaves; a
//! 0-ET is a bare leaf.

use crate::expr::ops::OperationSet;
use crate::expr::tree::{ExpressionTree, Symbol};

pub const MAX_ORDER: usize = 2;

/// Number of distinct k-ETs that can be built from `opset`.
pub fn elementary_tree_count(opset: &OperationSet, order: usize) -> usize {
    let leaves = opset.n_leaves();
    match order {
        0 => leaves,
        1 => opset.count_of_arity(1) * leaves,
        2 => opset.count_of_arity(2) * leaves * leaves,
        _ => 0,
    }
}

/// The `index`-th k-ET in a fixed enumeration order: operations in
/// opset order, then leaves (variables before parameters) left to right.
pub fn elementary_tree(opset: &OperationSet, order: usize, index: usize) -> Vec<Symbol> {
    let leaves = opset.n_leaves();
    match order {
        0 => vec![Symbol::leaf(opset, index)],
        1 => {
            let op = opset.ops_of_arity(1).nth(index / leaves).expect("ET index");
            vec![Symbol::op(opset, op), Symbol::leaf(opset, index % leaves)]
        }
        2 => {
            let per_op = leaves * leaves;
            let op = opset.ops_of_arity(2).nth(index / per_op).expect("ET index");
            let rem = index % per_op;
            vec![
                Symbol::op(opset, op),
                Symbol::leaf(opset, rem / leaves),
                Symbol::leaf(opset, rem % leaves),
            ]
        }
        _ => panic!("elementary trees have order at most {MAX_ORDER}"),
    }
}

/// All k-ETs in enumeration order.
pub fn enumerate_elementary_trees(opset: &OperationSet, order: usize) -> Vec<Vec<Symbol>> {
    (0..elementary_tree_count(opset, order))
        .map(|i| elementary_tree(opset, order, i))
        .collect()
}

/// Order of the subtree at `pos` if it is an ET.
pub fn et_order_at(tree: &ExpressionTree, pos: usize) -> Option<usize> {
    let nodes = tree.nodes();
    let arity = nodes[pos].arity();
    if nodes[pos + 1..pos + 1 + arity].iter().all(|s| s.is_leaf()) {
        Some(arity)
    } else {
        None
    }
}

/// Positions whose subtree is exactly a k-ET. Every leaf counts as a 0-ET
/// site, including leaves that are children of another ET.
pub fn list_elementary_subtrees(tree: &ExpressionTree, order: usize) -> Vec<usize> {
    let nodes = tree.nodes();
    (0..nodes.len())
        .filter(|&p| nodes[p].arity() == order && et_order_at(tree, p) == Some(order))
        .collect()
}

/// Site counts for orders 0, 1, 2.
pub fn site_counts(tree: &ExpressionTree) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for p in 0..tree.size() {
        if let Some(k) = et_order_at(tree, p) {
            counts[k] += 1;
        }
    }
    counts
}

/// New roots available to root addition: every operation, with the old
/// tree in the leftmost slot and every combination of leaves elsewhere.
#[derive(Clone, Debug)]
pub struct RootCatalog {
    entries: Vec<(Symbol, Vec<Symbol>)>,
}

impl RootCatalog {
    pub fn new(opset: &OperationSet) -> Self {
        let leaves: Vec<Symbol> = (0..opset.n_leaves())
            .map(|i| Symbol::leaf(opset, i))
            .collect();
        let mut entries = Vec::new();
        for op in 0..opset.n_ops() {
            let root = Symbol::op(opset, op);
            match root.arity() {
                1 => entries.push((root, Vec::new())),
                _ => {
                    for &l in &leaves {
                        entries.push((root, vec![l]));
                    }
                }
            }
        }
        RootCatalog { entries }
    }

    /// `N_root`, the number of catalog entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> (Symbol, &[Symbol]) {
        let (root, rest) = &self.entries[i];
        (*root, rest)
    }

    /// Number of nodes root addition adds.
    pub fn added_size(&self, i: usize) -> usize {
        1 + self.entries[i].1.len()
    }
}

/// Whether root removal applies: the root is an operation and all of its
/// children except the leftmost are leaves.
pub fn root_removable(tree: &ExpressionTree) -> bool {
    if tree.root().is_leaf() {
        return false;
    }
    let kids = tree.children(0);
    kids[1..].iter().all(|&c| tree.nodes()[c].is_leaf())
}

/// The leftmost branch of the root, i.e. the result of root removal.
pub fn remove_root(tree: &ExpressionTree) -> ExpressionTree {
    let end = tree.subtree_end(1);
    ExpressionTree::from_prefix(tree.nodes()[1..end].to_vec()).expect("subtree is complete")
}
