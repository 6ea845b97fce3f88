//! Proposal distributions for the three move types.
//!
//! Every random proposal here has an exhaustive counterpart in
//! [`MoveSet::enumerate`] that lists each reachable tree with the exact
//! probability of proposing it, so the transition matrix of the chain can
//! be assembled and checked.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::elementary::{
    elementary_tree, elementary_tree_count, list_elementary_subtrees, remove_root, root_removable,
    site_counts, RootCatalog,
};
use crate::expr::ops::OperationSet;
use crate::expr::tree::{ExpressionTree, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MoveKind {
    /// Node replacement.
    Nr,
    /// Root addition.
    Ra,
    /// Root removal.
    Rr,
    /// Elementary tree replacement.
    Etr,
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MoveKind::Nr => "NR",
            MoveKind::Ra => "RA",
            MoveKind::Rr => "RR",
            MoveKind::Etr => "ETR",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: ExpressionTree,
    /// `ln[g(old | new) / g(new | old)]`.
    pub log_g_ratio: f64,
}

/// Probabilities of the three move classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveFrequencies {
    pub root: f64,
    pub node: f64,
    pub etr: f64,
}

impl Default for MoveFrequencies {
    fn default() -> Self {
        MoveFrequencies {
            root: 0.05,
            node: 0.45,
            etr: 0.50,
        }
    }
}

impl MoveFrequencies {
    pub fn validate(&self) -> Result<()> {
        let all = [self.root, self.node, self.etr];
        if all.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("move frequencies must be >= 0".into()));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("move frequencies must sum to 1".into()));
        }
        Ok(())
    }
}

/// Precomputed move tables for one operation set and size limit.
#[derive(Clone, Debug)]
pub struct MoveSet {
    opset: OperationSet,
    max_size: usize,
    catalog: RootCatalog,
    et_counts: [usize; 3],
}

impl MoveSet {
    pub fn new(opset: &OperationSet, max_size: usize) -> Self {
        MoveSet {
            opset: opset.clone(),
            max_size,
            catalog: RootCatalog::new(opset),
            et_counts: [0, 1, 2].map(|k| elementary_tree_count(opset, k)),
        }
    }

    pub fn opset(&self) -> &OperationSet {
        &self.opset
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// `N_root`.
    pub fn n_root(&self) -> usize {
        self.catalog.len()
    }

    /// Same-arity alternatives to the symbol, in a fixed order.
    fn alternatives(&self, symbol: Symbol) -> Vec<Symbol> {
        match symbol.arity() {
            0 => (0..self.opset.n_leaves())
                .map(|i| Symbol::leaf(&self.opset, i))
                .filter(|&s| s != symbol)
                .collect(),
            k => self
                .opset
                .ops_of_arity(k)
                .map(|i| Symbol::op(&self.opset, i))
                .filter(|&s| s != symbol)
                .collect(),
        }
    }

    /// Order pairs `(o_i, o_f)` an ETR may use on `tree`: the tree has an
    /// `o_i`-ET, `o_f`-ETs exist, and the result fits the size limit.
    pub fn etr_pairs(&self, tree: &ExpressionTree) -> Vec<(usize, usize)> {
        let sites = site_counts(tree);
        let mut pairs = Vec::with_capacity(9);
        for oi in 0..3 {
            if sites[oi] == 0 {
                continue;
            }
            for of in 0..3 {
                if self.et_counts[of] > 0 && tree.size() - oi + of <= self.max_size {
                    pairs.push((oi, of));
                }
            }
        }
        pairs
    }

    fn etr_log_g(&self, old: &ExpressionTree, new: &ExpressionTree, oi: usize, of: usize) -> f64 {
        let n_if = self.etr_pairs(old).len() as f64;
        let n_fi = self.etr_pairs(new).len() as f64;
        let omega_i = site_counts(old)[oi] as f64;
        let omega_f = site_counts(new)[of] as f64;
        let s_i = self.et_counts[oi] as f64;
        let s_f = self.et_counts[of] as f64;
        ((n_if * omega_i * s_f) / (n_fi * omega_f * s_i)).ln()
    }

    pub fn propose_node_replacement<R: Rng + ?Sized>(
        &self,
        tree: &ExpressionTree,
        rng: &mut R,
    ) -> Option<Proposal> {
        let pos = rng.random_range(0..tree.size());
        let alts = self.alternatives(tree.nodes()[pos]);
        if alts.is_empty() {
            return None;
        }
        let pick = alts[rng.random_range(0..alts.len())];
        Some(Proposal {
            kind: MoveKind::Nr,
            tree: tree.replace_symbol(pos, pick),
            log_g_ratio: 0.0,
        })
    }

    /// Root addition or removal, chosen by a fair coin.
    pub fn propose_root_move<R: Rng + ?Sized>(
        &self,
        tree: &ExpressionTree,
        rng: &mut R,
    ) -> Option<Proposal> {
        if rng.random_bool(0.5) {
            if self.catalog.is_empty() {
                return None;
            }
            let i = rng.random_range(0..self.catalog.len());
            self.root_addition(tree, i)
        } else {
            self.root_removal(tree)
        }
    }

    fn root_addition(&self, tree: &ExpressionTree, entry: usize) -> Option<Proposal> {
        if tree.size() + self.catalog.added_size(entry) > self.max_size {
            return None;
        }
        let (root, rest) = self.catalog.entry(entry);
        Some(Proposal {
            kind: MoveKind::Ra,
            tree: tree.with_new_root(root, rest),
            log_g_ratio: (self.catalog.len() as f64).ln(),
        })
    }

    fn root_removal(&self, tree: &ExpressionTree) -> Option<Proposal> {
        if !root_removable(tree) {
            return None;
        }
        Some(Proposal {
            kind: MoveKind::Rr,
            tree: remove_root(tree),
            log_g_ratio: -(self.catalog.len() as f64).ln(),
        })
    }

    pub fn propose_etr<R: Rng + ?Sized>(
        &self,
        tree: &ExpressionTree,
        rng: &mut R,
    ) -> Option<Proposal> {
        let pairs = self.etr_pairs(tree);
        if pairs.is_empty() {
            return None;
        }
        let (oi, of) = pairs[rng.random_range(0..pairs.len())];
        let sites = list_elementary_subtrees(tree, oi);
        let pos = sites[rng.random_range(0..sites.len())];
        let et = elementary_tree(&self.opset, of, rng.random_range(0..self.et_counts[of]));
        Some(self.etr_apply(tree, oi, of, pos, &et))
    }

    fn etr_apply(
        &self,
        tree: &ExpressionTree,
        oi: usize,
        of: usize,
        pos: usize,
        et: &[Symbol],
    ) -> Proposal {
        let new = tree.replace_subtree(pos, et);
        let log_g_ratio = self.etr_log_g(tree, &new, oi, of);
        Proposal {
            kind: MoveKind::Etr,
            tree: new,
            log_g_ratio,
        }
    }

    /// Draws a move class by `freqs`, then a proposal of that class.
    /// `None` is a null proposal: the chain stays put.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        tree: &ExpressionTree,
        freqs: &MoveFrequencies,
        rng: &mut R,
    ) -> Option<Proposal> {
        let u: f64 = rng.random();
        if u < freqs.root {
            self.propose_root_move(tree, rng)
        } else if u < freqs.root + freqs.node {
            self.propose_node_replacement(tree, rng)
        } else {
            self.propose_etr(tree, rng)
        }
    }

    /// Every proposal reachable from `tree` in one step, with the exact
    /// probability that [`MoveSet::propose`] generates it. Probabilities
    /// sum to one minus the null-proposal mass. The same target tree may
    /// appear several times (different moves or positions).
    pub fn enumerate(
        &self,
        tree: &ExpressionTree,
        freqs: &MoveFrequencies,
    ) -> Vec<(f64, Proposal)> {
        let mut out = Vec::new();

        let n = tree.size() as f64;
        for pos in 0..tree.size() {
            let alts = self.alternatives(tree.nodes()[pos]);
            for &s in &alts {
                out.push((
                    freqs.node / n / alts.len() as f64,
                    Proposal {
                        kind: MoveKind::Nr,
                        tree: tree.replace_symbol(pos, s),
                        log_g_ratio: 0.0,
                    },
                ));
            }
        }

        let n_root = self.catalog.len() as f64;
        for i in 0..self.catalog.len() {
            if let Some(p) = self.root_addition(tree, i) {
                out.push((freqs.root * 0.5 / n_root, p));
            }
        }
        if let Some(p) = self.root_removal(tree) {
            out.push((freqs.root * 0.5, p));
        }

        let pairs = self.etr_pairs(tree);
        for &(oi, of) in &pairs {
            let sites = list_elementary_subtrees(tree, oi);
            for &pos in &sites {
                for e in 0..self.et_counts[of] {
                    let et = elementary_tree(&self.opset, of, e);
                    let p = freqs.etr
                        / pairs.len() as f64
                        / sites.len() as f64
                        / self.et_counts[of] as f64;
                    out.push((p, self.etr_apply(tree, oi, of, pos, &et)));
                }
            }
        }
        out
    }
}
