//! Maximum-likelihood parameter fitting, BIC and description length.

pub mod simplex;

use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::expr::ops::OperationSet;
use crate::expr::tree::{EvalScratch, ExpressionTree, Symbol};
use crate::prior::PriorParams;
use simplex::{minimize, SimplexOptions};

/// Settings of the multistart simplex fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Total number of starting points, including the fixed first start.
    pub n_starts: usize,
    /// Random starts are drawn uniformly in `[-start_range, start_range]`.
    pub start_range: f64,
    /// Evaluation budget per start is `evals_base + evals_per_param * L`.
    pub evals_base: usize,
    pub evals_per_param: usize,
    /// Value of every parameter at the first start when no warm start is
    /// given.
    pub default_start: f64,
    /// Mixed into the per-tree seed of the random starts.
    pub seed: u64,
    /// `sigma^2` is floored at `variance_floor * var(y)`.
    pub variance_floor: f64,
    pub cache_size: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_starts: 3,
            start_range: 10.0,
            evals_base: 200,
            evals_per_param: 150,
            default_start: 1.0,
            seed: 0,
            variance_floor: 1e-12,
            cache_size: 100_000,
        }
    }
}

/// An expression with its maximum-likelihood parameters and scores.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub tree: ExpressionTree,
    /// One value per parameter symbol of the operation set; symbols absent
    /// from the tree hold 0.
    pub theta: Vec<f64>,
    pub sse: f64,
    pub n_active_params: usize,
    pub bic: f64,
    pub prior_energy: f64,
    pub description_length: f64,
}

impl FittedModel {
    pub fn is_finite(&self) -> bool {
        self.description_length.is_finite()
    }

    pub fn forbidden(mut self) -> Self {
        self.description_length = f64::INFINITY;
        self
    }
}

/// `B = N ln(2 pi s2) + N + (L + 1) ln N` with `s2 = max(sse / N, floor)`.
/// The noise variance counts as one extra parameter.
pub fn bic(sse: f64, n: usize, n_params: usize, variance_floor: f64) -> f64 {
    if !sse.is_finite() {
        return f64::INFINITY;
    }
    let n = n as f64;
    let s2 = (sse / n).max(variance_floor).max(1e-300);
    n * (2.0 * std::f64::consts::PI * s2).ln() + n + (n_params as f64 + 1.0) * n.ln()
}

/// Sum of squared residuals; `+inf` if any prediction is non-finite.
pub fn sse(
    tree: &ExpressionTree,
    opset: &OperationSet,
    data: &Dataset,
    theta: &[f64],
    scratch: &mut EvalScratch,
    buf: &mut Vec<f64>,
) -> f64 {
    tree.evaluate_columns(opset, data.columns(), theta, scratch, buf);
    let mut total = 0.0;
    for (p, y) in buf.iter().zip(data.y()) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        let r = y - p;
        total += r * r;
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Parameter values minimizing SSE and the resulting SSE.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamFit {
    pub theta: Vec<f64>,
    pub sse: f64,
    /// SSE at each starting point, in start order.
    pub start_sse: Vec<f64>,
}

fn fnv1a(tree: &ExpressionTree, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for s in tree.nodes() {
        let (tag, v) = match *s {
            Symbol::Var(i) => (1u8, i),
            Symbol::Param(i) => (2, i),
            Symbol::Unary(i) => (3, i),
            Symbol::Binary(i) => (4, i),
        };
        for b in [tag, v] {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Least-squares fit of the tree's parameters. Starting points are the
/// warm start (or `default_start` everywhere) followed by random draws
/// seeded from the tree structure and `config.seed`, so the result is a
/// pure function of its inputs.
pub fn fit_parameters(
    tree: &ExpressionTree,
    opset: &OperationSet,
    data: &Dataset,
    config: &FitConfig,
    warm_start: Option<&[f64]>,
) -> ParamFit {
    let active = tree.params_used();
    let mut scratch = EvalScratch::default();
    let mut buf = Vec::with_capacity(data.len());
    let mut theta = vec![0.0; opset.n_params()];

    if active.is_empty() {
        let s = sse(tree, opset, data, &theta, &mut scratch, &mut buf);
        return ParamFit {
            theta,
            sse: s,
            start_sse: vec![s],
        };
    }

    let l = active.len();
    let opts = SimplexOptions {
        max_evals: config.evals_base + config.evals_per_param * l,
        ..SimplexOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(tree, config.seed));
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.n_starts.max(1));
    starts.push(match warm_start {
        Some(w) => active
            .iter()
            .map(|&p| w.get(p).copied().unwrap_or(config.default_start))
            .collect(),
        None => vec![config.default_start; l],
    });
    while starts.len() < config.n_starts.max(1) {
        starts.push(
            (0..l)
                .map(|_| rng.random_range(-config.start_range..=config.start_range))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut start_sse = Vec::with_capacity(starts.len());
    for start in &starts {
        let mut objective = |x: &[f64]| {
            for (&p, &v) in active.iter().zip(x) {
                theta[p] = v;
            }
            sse(tree, opset, data, &theta, &mut scratch, &mut buf)
        };
        start_sse.push(objective(start));
        let r = minimize(&mut objective, start, &opts);
        if best.as_ref().is_none_or(|(_, f)| r.fx < *f) {
            best = Some((r.x, r.fx));
        }
    }
    let (x, fx) = best.unwrap();
    let mut theta = vec![0.0; opset.n_params()];
    for (&p, &v) in active.iter().zip(&x) {
        theta[p] = v;
    }
    ParamFit {
        theta,
        sse: fx,
        start_sse,
    }
}

/// Scores trees against a fixed dataset and prior, memoizing parameter
/// fits by tree structure.
///
/// Without data every tree gets `sse = bic = 0`, so the description length
/// reduces to the prior energy; this is the data-free chain used to sample
/// the prior.
pub struct Scorer {
    opset: OperationSet,
    data: Option<Dataset>,
    prior: PriorParams,
    config: FitConfig,
    variance_floor: f64,
    cache: Option<Mutex<LruCache<ExpressionTree, (Vec<f64>, f64)>>>,
}

impl Scorer {
    pub fn new(
        opset: OperationSet,
        data: Option<Dataset>,
        prior: PriorParams,
        config: FitConfig,
    ) -> Self {
        let variance_floor = data
            .as_ref()
            .map_or(0.0, |d| config.variance_floor * d.y_variance());
        let cache = NonZeroUsize::new(config.cache_size).map(|n| Mutex::new(LruCache::new(n)));
        Scorer {
            opset,
            data,
            prior,
            config,
            variance_floor,
            cache,
        }
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn opset(&self) -> &OperationSet {
        &self.opset
    }

    pub fn data(&self) -> Option<&Dataset> {
        self.data.as_ref()
    }

    pub fn prior(&self) -> &PriorParams {
        &self.prior
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }

    fn fit(&self, tree: &ExpressionTree) -> (Vec<f64>, f64) {
        let Some(data) = &self.data else {
            return (vec![0.0; self.opset.n_params()], 0.0);
        };
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().get(tree) {
                return hit.clone();
            }
        }
        let r = fit_parameters(tree, &self.opset, data, &self.config, None);
        let out = (r.theta, r.sse);
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().put(tree.clone(), out.clone());
        }
        out
    }

    /// Fits the tree and returns its BIC, prior energy and description
    /// length `bic / 2 + energy`.
    pub fn score(&self, tree: &ExpressionTree) -> FittedModel {
        let (theta, sse) = self.fit(tree);
        let n_active = tree.params_used().len();
        let bic = match &self.data {
            Some(d) => bic(sse, d.len(), n_active, self.variance_floor),
            None => 0.0,
        };
        let energy = self.prior.energy(&tree.count_operations(&self.opset));
        FittedModel {
            tree: tree.clone(),
            theta,
            sse,
            n_active_params: n_active,
            bic,
            prior_energy: energy,
            description_length: bic / 2.0 + energy,
        }
    }

    /// Re-scores a model with known parameters, e.g. one read back from a
    /// trace.
    pub fn score_with_theta(&self, tree: &ExpressionTree, theta: &[f64]) -> FittedModel {
        let n_active = tree.params_used().len();
        let (sse_v, bic_v) = match &self.data {
            Some(d) => {
                let mut scratch = EvalScratch::default();
                let mut buf = Vec::new();
                let s = sse(tree, &self.opset, d, theta, &mut scratch, &mut buf);
                (s, bic(s, d.len(), n_active, self.variance_floor))
            }
            None => (0.0, 0.0),
        };
        let energy = self.prior.energy(&tree.count_operations(&self.opset));
        FittedModel {
            tree: tree.clone(),
            theta: theta.to_vec(),
            sse: sse_v,
            n_active_params: n_active,
            bic: bic_v,
            prior_energy: energy,
            description_length: bic_v / 2.0 + energy,
        }
    }
}
