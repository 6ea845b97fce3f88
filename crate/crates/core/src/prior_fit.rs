//! Fitting prior hyperparameters so that sampled expressions match target
//! operation statistics.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ops::OperationSet;
use crate::expr::tree::{ExpressionTree, DEFAULT_MAX_TREE_SIZE};
use crate::fit::{FitConfig, Scorer};
use crate::prior::{CorpusStats, PriorParams};
use crate::sampler::{LadderConfig, MoveFrequencies, Sampler, SamplerConfig};

/// How expressions are drawn from the prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSamplingConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    /// Steps between recorded expressions.
    pub thinning: usize,
    pub max_tree_size: usize,
    pub moves: MoveFrequencies,
}

impl Default for PriorSamplingConfig {
    fn default() -> Self {
        PriorSamplingConfig {
            n_chains: 4,
            burn_in: 2000,
            thinning: 10,
            max_tree_size: DEFAULT_MAX_TREE_SIZE,
            moves: MoveFrequencies::default(),
        }
    }
}

impl PriorSamplingConfig {
    fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            moves: self.moves.clone(),
            ladder: LadderConfig::single(),
            max_tree_size: self.max_tree_size,
            forbid_duplicates: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.thinning == 0 {
            return Err(Error::Config(
                "n_chains and thinning must be positive".into(),
            ));
        }
        self.sampler_config().validate()
    }
}

/// Persistent prior chains. Successive batches continue where the previous
/// batch stopped, which keeps chains near equilibrium while the
/// hyperparameters drift slowly during fitting.
pub struct PriorSampler {
    opset: OperationSet,
    config: PriorSamplingConfig,
    states: Vec<ExpressionTree>,
    seed: u64,
    batches: u64,
}

impl PriorSampler {
    pub fn new(opset: &OperationSet, config: &PriorSamplingConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(PriorSampler {
            opset: opset.clone(),
            config: config.clone(),
            states: Vec::new(),
            seed,
            batches: 0,
        })
    }

    /// Draws `n` expressions under `params`, split across the chains.
    pub fn sample(&mut self, params: &PriorParams, n: usize) -> Result<Vec<ExpressionTree>> {
        params.check_opset(&self.opset)?;
        let scorer = Scorer::new(
            self.opset.clone(),
            None,
            params.clone(),
            FitConfig::default(),
        );
        let sampler_config = self.config.sampler_config();
        let n_chains = self.config.n_chains;
        let fresh = self.states.is_empty();
        let batch = self.batches;
        self.batches += 1;
        let seed = self.seed;
        let thinning = self.config.thinning;
        let burn_in = if fresh { self.config.burn_in } else { 0 };
        let starts: Vec<Option<ExpressionTree>> = if fresh {
            vec![None; n_chains]
        } else {
            self.states.iter().cloned().map(Some).collect()
        };
        let results: Vec<Result<(Vec<ExpressionTree>, ExpressionTree)>> = starts
            .into_par_iter()
            .enumerate()
            .map(|(c, start)| {
                let quota = n / n_chains + usize::from(c < n % n_chains);
                let chain_seed = seed
                    .wrapping_add((c as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
                    .wrapping_add(batch.wrapping_mul(0xd1b5_4a32_d192_ed03));
                let mut s = Sampler::new(&scorer, &sampler_config, chain_seed)?;
                if let Some(t) = start {
                    s.reset_chain(0, &t);
                }
                for _ in 0..burn_in {
                    s.sweep();
                }
                let mut out = Vec::with_capacity(quota);
                for _ in 0..quota {
                    for _ in 0..thinning {
                        s.sweep();
                    }
                    out.push(s.chains()[0].model.tree.clone());
                }
                let last = s.chains()[0].model.tree.clone();
                Ok((out, last))
            })
            .collect();
        let mut all = Vec::with_capacity(n);
        self.states.clear();
        for r in results {
            let (trees, last) = r?;
            all.extend(trees);
            self.states.push(last);
        }
        Ok(all)
    }
}

/// Draws `n` expressions from the prior with a data-free sampler.
pub fn sample_from_prior(
    params: &PriorParams,
    opset: &OperationSet,
    n: usize,
    config: &PriorSamplingConfig,
    seed: u64,
) -> Result<Vec<ExpressionTree>> {
    PriorSampler::new(opset, config, seed)?.sample(params, n)
}

/// Operation statistics of a set of trees.
pub fn measure(trees: &[ExpressionTree], opset: &OperationSet) -> CorpusStats {
    let counts: Vec<_> = trees.iter().map(|t| t.count_operations(opset)).collect();
    CorpusStats::from_counts(&counts, opset.n_ops())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperFitConfig {
    /// Expressions sampled per sweep.
    pub batch_size: usize,
    /// Step size of the stochastic updates.
    pub learning_rate: f64,
    pub tolerance: f64,
    /// Consecutive sweeps below `tolerance` needed to stop.
    pub patience: usize,
    /// Largest allowed relative error of any statistic, averaged over the
    /// last `averaging` sweeps, at convergence.
    pub stat_tolerance: f64,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    /// The returned parameters, and the convergence check on the
    /// statistics, average this many final sweeps.
    pub averaging: usize,
    /// `alpha` given to operations that never occur in the targets.
    pub absent_penalty: f64,
    pub seed: u64,
    pub sampling: PriorSamplingConfig,
}

impl Default for HyperFitConfig {
    fn default() -> Self {
        HyperFitConfig {
            batch_size: 100_000,
            learning_rate: 0.05,
            tolerance: 1e-2,
            patience: 5,
            stat_tolerance: 0.03,
            min_sweeps: 100,
            max_sweeps: 3000,
            averaging: 50,
            absent_penalty: 10.0,
            seed: 0,
            sampling: PriorSamplingConfig::default(),
        }
    }
}

impl HyperFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_sweeps == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_sweeps and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.tolerance > 0.0) || !(self.stat_tolerance > 0.0) {
            return Err(Error::Config(
                "learning_rate and tolerances must be positive".into(),
            ));
        }
        self.sampling.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Largest `|change| / max(|value|, 1)` over all fitted parameters.
    pub max_relative_change: f64,
    /// Largest `|measured - target| / target` over fitted statistics.
    pub max_relative_error: f64,
    /// The same with signed errors averaged over the recent sweeps.
    pub window_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub sweeps: usize,
    pub history: Vec<SweepRecord>,
    /// The statistics measured in the final sweep.
    pub final_mean_count: Vec<f64>,
    pub final_mean_sq_count: Vec<f64>,
}

/// Signed relative errors of the fitted statistics, means then squares.
fn relative_errors(measured: &CorpusStats, targets: &CorpusStats, fitted: &[bool]) -> Vec<f64> {
    let rel = |m: f64, t: f64| (m - t) / t;
    let idx = (0..fitted.len()).filter(|&o| fitted[o]);
    idx.clone()
        .map(|o| rel(measured.mean_count[o], targets.mean_count[o]))
        .chain(idx.map(|o| rel(measured.mean_sq_count[o], targets.mean_sq_count[o])))
        .collect()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One stochastic-approximation update. `alpha_o` and `beta_o` move by
/// `eps * rate * (measured - target) / target` with independent `eps`
/// uniform in `[0, 1)`; the relative error is clipped to `[-1, 1]` and
/// `beta` is clamped at 0. Returns the largest relative parameter change.
pub fn update_params<R: Rng + ?Sized>(
    params: &mut PriorParams,
    measured: &CorpusStats,
    targets: &CorpusStats,
    fitted: &[bool],
    rate: f64,
    rng: &mut R,
) -> f64 {
    let mut worst: f64 = 0.0;
    for o in 0..params.n_ops() {
        if !fitted[o] {
            continue;
        }
        let e1: f64 = rng.random();
        let e2: f64 = rng.random();
        let rel = |m: f64, t: f64| ((m - t) / t).clamp(-1.0, 1.0);
        let da = e1 * rate * rel(measured.mean_count[o], targets.mean_count[o]);
        let old_b = params.beta[o];
        params.alpha[o] += da;
        params.beta[o] =
            (old_b + e2 * rate * rel(measured.mean_sq_count[o], targets.mean_sq_count[o])).max(0.0);
        let rel_a = da.abs() / params.alpha[o].abs().max(1.0);
        let rel_b = (params.beta[o] - old_b).abs() / params.beta[o].abs().max(1.0);
        worst = worst.max(rel_a).max(rel_b);
    }
    worst
}

/// Fits `alpha` and `beta` so that the prior reproduces the target means
/// of `n_o` and `n_o^2`. Returns the parameters averaged over the final
/// `averaging` sweeps, converged or not.
pub fn fit_hyperparameters(
    targets: &CorpusStats,
    opset: &OperationSet,
    config: &HyperFitConfig,
    initial: Option<PriorParams>,
    mut on_sweep: Option<&mut dyn FnMut(&SweepRecord, &PriorParams)>,
) -> Result<(PriorParams, ConvergenceReport)> {
    config.validate()?;
    targets.validate()?;
    if targets.mean_count.len() != opset.n_ops() {
        return Err(Error::Config(format!(
            "targets cover {} operations, operation set has {}",
            targets.mean_count.len(),
            opset.n_ops()
        )));
    }
    let fitted: Vec<bool> = targets.mean_count.iter().map(|m| *m > 0.0).collect();
    let mut params = match initial {
        Some(p) => {
            p.check_opset(opset)?;
            p
        }
        None => PriorParams::uniform(opset),
    };
    for o in 0..opset.n_ops() {
        if !fitted[o] {
            params.alpha[o] = config.absent_penalty;
            params.beta[o] = 0.0;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampler = PriorSampler::new(opset, &config.sampling, config.seed)?;
    let mut history = Vec::new();
    let mut calm = 0usize;
    let mut last = None;
    let span = config.averaging.max(1);
    let mut window: VecDeque<PriorParams> = VecDeque::with_capacity(span + 1);
    let mut errors: VecDeque<Vec<f64>> = VecDeque::with_capacity(span + 1);
    let mut converged = false;
    for sweep in 1..=config.max_sweeps {
        let trees = sampler.sample(&params, config.batch_size)?;
        let measured = measure(&trees, opset);
        let err = relative_errors(&measured, targets, &fitted);
        let change = update_params(
            &mut params,
            &measured,
            targets,
            &fitted,
            config.learning_rate,
            &mut rng,
        );
        window.push_back(params.clone());
        errors.push_back(err.clone());
        if window.len() > span {
            window.pop_front();
            errors.pop_front();
        }
        let window_error = max_abs(
            (0..err.len()).map(|i| errors.iter().map(|e| e[i]).sum::<f64>() / errors.len() as f64),
        );
        let record = SweepRecord {
            sweep,
            max_relative_change: change,
            max_relative_error: max_abs(err),
            window_error,
        };
        if let Some(cb) = on_sweep.as_mut() {
            cb(&record, &params);
        }
        history.push(record);
        last = Some(measured);
        calm = if change < config.tolerance {
            calm + 1
        } else {
            0
        };
        if calm >= config.patience
            && sweep >= config.min_sweeps
            && errors.len() == span
            && window_error < config.stat_tolerance
        {
            converged = true;
            break;
        }
    }
    let k = window.len() as f64;
    for o in 0..params.n_ops() {
        params.alpha[o] = window.iter().map(|p| p.alpha[o]).sum::<f64>() / k;
        params.beta[o] = window.iter().map(|p| p.beta[o]).sum::<f64>() / k;
    }
    let last = last.expect("at least one sweep");
    let report = ConvergenceReport {
        converged,
        sweeps: history.len(),
        history,
        final_mean_count: last.mean_count,
        final_mean_sq_count: last.mean_sq_count,
    };
    Ok((params, report))
}
