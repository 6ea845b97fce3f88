//! Expression trees: representation, the prefix grammar, evaluation,
//! canonical keys and elementary subtrees.

pub mod canonical;
pub mod elementary;
pub mod ops;
pub mod tree;

pub use canonical::{canonical_key, CanonicalKey};
pub use elementary::{
    elementary_tree_count, enumerate_elementary_trees, list_elementary_subtrees, RootCatalog,
};
pub use ops::{OpKind, OperationSet};
pub use tree::{
    parse_expression, parse_expression_with_limit, EvalScratch, ExpressionTree, OpCounts, Symbol,
    DEFAULT_MAX_TREE_SIZE,
};
