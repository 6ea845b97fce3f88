//! Exhaustive checks of the sampler on a small expression space: every
//! tree up to a size limit is enumerated, its exact posterior weight
//! computed, and compared with visit frequencies or with the stationary
//! vector of the explicitly assembled transition matrix.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::canonical::canonical_key;
use crate::expr::ops::OperationSet;
use crate::expr::tree::{ExpressionTree, Symbol};
use crate::fit::{FitConfig, Scorer};
use crate::prior::PriorParams;
use crate::sampler::{
    acceptance_probability, tempered_delta, LadderConfig, MoveFrequencies, MoveSet, Sampler,
    SamplerConfig,
};
use crate::synth::ExpressionSpec;

/// All trees with at most `max_size` nodes, ordered by size and then by
/// prefix symbol sequence.
pub fn enumerate_trees(opset: &OperationSet, max_size: usize) -> Vec<ExpressionTree> {
    let mut by_size: Vec<Vec<Vec<Symbol>>> = vec![Vec::new(); max_size + 1];
    for n in 1..=max_size {
        let mut out = Vec::new();
        if n == 1 {
            for i in 0..opset.n_leaves() {
                out.push(vec![Symbol::leaf(opset, i)]);
            }
        }
        if n >= 2 {
            for o in opset.ops_of_arity(1) {
                for child in &by_size[n - 1] {
                    let mut t = vec![Symbol::op(opset, o)];
                    t.extend_from_slice(child);
                    out.push(t);
                }
            }
        }
        if n >= 3 {
            for o in opset.ops_of_arity(2) {
                for left in 1..n - 1 {
                    let right = n - 1 - left;
                    for l in &by_size[left] {
                        for r in &by_size[right] {
                            let mut t = vec![Symbol::op(opset, o)];
                            t.extend_from_slice(l);
                            t.extend_from_slice(r);
                            out.push(t);
                        }
                    }
                }
            }
        }
        out.sort();
        by_size[n] = out;
    }
    by_size
        .into_iter()
        .flatten()
        .map(|nodes| ExpressionTree::from_prefix(nodes).expect("enumerated trees are valid"))
        .collect()
}

/// A finite expression space with the description length of every tree.
pub struct ExactSpace {
    pub trees: Vec<ExpressionTree>,
    pub description_lengths: Vec<f64>,
    pub bics: Vec<f64>,
    pub energies: Vec<f64>,
    index: HashMap<ExpressionTree, usize>,
}

impl ExactSpace {
    pub fn new(scorer: &Scorer, max_size: usize) -> Self {
        let trees = enumerate_trees(scorer.opset(), max_size);
        let models: Vec<_> = trees.iter().map(|t| scorer.score(t)).collect();
        let index = trees
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        ExactSpace {
            description_lengths: models.iter().map(|m| m.description_length).collect(),
            bics: models.iter().map(|m| m.bic).collect(),
            energies: models.iter().map(|m| m.prior_energy).collect(),
            trees,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn index_of(&self, tree: &ExpressionTree) -> Option<usize> {
        self.index.get(tree).copied()
    }

    /// `exp(-L) / Z` over trees. Trees with infinite description length get
    /// zero weight.
    pub fn posterior(&self) -> Vec<f64> {
        boltzmann(&self.description_lengths)
    }

    /// Row-stochastic transition matrix of one sampler step at temperature
    /// `temperature`, built from the exact proposal probabilities.
    pub fn transition_matrix(
        &self,
        moves: &MoveSet,
        freqs: &MoveFrequencies,
        temperature: f64,
        scorer: &Scorer,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let mut p = vec![vec![0.0; n]; n];
        let models: Vec<_> = self.trees.iter().map(|t| scorer.score(t)).collect();
        for i in 0..n {
            let mut stay = 1.0;
            for (prob, prop) in moves.enumerate(&self.trees[i], freqs) {
                let j = self.index_of(&prop.tree).ok_or_else(|| {
                    Error::Config(format!(
                        "proposal {} leaves the enumerated space",
                        prop.tree.render(scorer.opset())
                    ))
                })?;
                let delta = tempered_delta(&models[i], &models[j], temperature);
                let moved = prob * acceptance_probability(delta, prop.log_g_ratio);
                p[i][j] += moved;
                stay -= moved;
            }
            p[i][i] += stay;
        }
        Ok(p)
    }
}

/// Normalized `exp(-e)`.
pub fn boltzmann(energies: &[f64]) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - min)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Half the L1 distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Stationary vector of a row-stochastic matrix by power iteration.
pub fn stationary_distribution(p: &[Vec<f64>], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = p.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in p.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (j, pij) in row.iter().enumerate() {
                next[j] += vi * pij;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let diff: f64 = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if diff < tol {
            break;
        }
    }
    v
}

/// `sum_j |(pi P)_j - pi_j|`.
pub fn stationarity_residual(pi: &[f64], p: &[Vec<f64>]) -> f64 {
    let mut next = vec![0.0; pi.len()];
    for (i, row) in p.iter().enumerate() {
        for (j, pij) in row.iter().enumerate() {
            next[j] += pi[i] * pij;
        }
    }
    next.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Largest `|pi_i P_ij - pi_j P_ji|` over all pairs.
pub fn detailed_balance_violation(pi: &[f64], p: &[Vec<f64>]) -> f64 {
    let n = pi.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((pi[i] * p[i][j] - pi[j] * p[j][i]).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub ops: String,
    pub max_size: usize,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Without data every tree has the same weight.
    pub with_data: bool,
    pub n_points: usize,
    /// Offset `a` in `y = a + x + sin x + noise`.
    pub offset: f64,
    pub noise: f64,
    pub x_range: (f64, f64),
    pub temperatures: Vec<f64>,
    pub threshold: f64,
    /// Whether `passed` compares trees or canonical expressions.
    pub level: Level,
    pub seed: u64,
    pub fit: FitConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Tree,
    Expression,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            ops: "+,sin".into(),
            max_size: 7,
            n_steps: 1_000_000,
            burn_in: 10_000,
            with_data: true,
            n_points: 25,
            offset: 1.0,
            noise: 0.5,
            x_range: (-4.0, 4.0),
            temperatures: vec![1.0],
            threshold: 0.05,
            level: Level::Expression,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

impl EquilibriumConfig {
    pub fn opset(&self) -> Result<OperationSet> {
        OperationSet::from_spec(&self.ops, 1, 1)
    }

    pub fn dataset(&self) -> Result<Option<Dataset>> {
        if !self.with_data {
            return Ok(None);
        }
        let spec = ExpressionSpec {
            expr: "(+ (+ p1 x1) (sin x1))".into(),
            theta: vec![self.offset],
            ranges: vec![self.x_range],
            n: self.n_points,
            noise: self.noise,
        };
        spec.generate(self.seed).map(Some)
    }

    pub fn scorer(&self) -> Result<Scorer> {
        let opset = self.opset()?;
        let prior = PriorParams::uniform(&opset);
        Ok(Scorer::new(opset, self.dataset()?, prior, self.fit.clone()))
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.n_steps,
            ladder: LadderConfig {
                temperatures: Some(self.temperatures.clone()),
                ..Default::default()
            },
            max_tree_size: self.max_size,
            burn_in: Some(self.burn_in),
            forbid_duplicates: false,
            seed: self.seed,
            fit: self.fit.clone(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub key: String,
    pub n_trees: usize,
    pub exact: f64,
    pub sampled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub n_trees: usize,
    pub n_expressions: usize,
    pub steps: usize,
    pub recorded: usize,
    /// Distance between sampled and exact distributions over trees.
    pub tv_trees: f64,
    /// The same, after merging trees with equal canonical keys.
    pub tv_expressions: f64,
    pub threshold: f64,
    pub passed: bool,
    pub acceptance_rate: f64,
    /// Per-expression weights, most probable first.
    pub table: Vec<FrequencyRow>,
}

/// Visit counts per enumerated tree of the `T = 1` replica, after
/// `burn_in` sweeps.
pub fn visit_counts(
    space: &ExactSpace,
    scorer: &Scorer,
    config: &SamplerConfig,
) -> Result<(Vec<u64>, f64)> {
    let mut sampler = Sampler::new(scorer, config, config.seed)?;
    let burn_in = config.effective_burn_in();
    let mut counts = vec![0u64; space.len()];
    for step in 0..config.n_steps {
        sampler.sweep();
        if step >= burn_in {
            let t = &sampler.chains()[0].model.tree;
            let i = space.index_of(t).ok_or_else(|| {
                Error::Config(format!(
                    "sampler left the space: {}",
                    t.render(scorer.opset())
                ))
            })?;
            counts[i] += 1;
        }
    }
    Ok((counts, sampler.chains()[0].acceptance_rate()))
}

pub fn run_equilibrium(config: &EquilibriumConfig) -> Result<EquilibriumReport> {
    let scorer = config.scorer()?;
    let opset = scorer.opset().clone();
    let space = ExactSpace::new(&scorer, config.max_size);
    let exact = space.posterior();
    let sampler_config = config.sampler_config();
    let (counts, acceptance_rate) = visit_counts(&space, &scorer, &sampler_config)?;
    let recorded: u64 = counts.iter().sum();
    if recorded == 0 {
        return Err(Error::Config(
            "no steps recorded; n_steps must exceed burn_in".into(),
        ));
    }
    let sampled: Vec<f64> = counts.iter().map(|&c| c as f64 / recorded as f64).collect();
    let tv_trees = total_variation(&exact, &sampled);

    let mut merged: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for (i, t) in space.trees.iter().enumerate() {
        let e = merged.entry(canonical_key(t, &opset).0).or_default();
        e.0 += 1;
        e.1 += exact[i];
        e.2 += sampled[i];
    }
    let tv_expressions = 0.5 * merged.values().map(|(_, a, b)| (a - b).abs()).sum::<f64>();
    let mut table: Vec<FrequencyRow> = merged
        .into_iter()
        .map(|(key, (n_trees, exact, sampled))| FrequencyRow {
            key,
            n_trees,
            exact,
            sampled,
        })
        .collect();
    table.sort_by(|a, b| b.exact.total_cmp(&a.exact).then_with(|| a.key.cmp(&b.key)));
    Ok(EquilibriumReport {
        n_trees: space.len(),
        n_expressions: table.len(),
        steps: config.n_steps,
        recorded: recorded as usize,
        tv_trees,
        tv_expressions,
        threshold: config.threshold,
        passed: match config.level {
            Level::Tree => tv_trees,
            Level::Expression => tv_expressions,
        } < config.threshold,
        acceptance_rate,
        table,
    })
}
