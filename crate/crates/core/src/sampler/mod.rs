//! Metropolis-Hastings over expression trees with parallel tempering.
//!
//! Each replica samples `p(f, T) ∝ exp(-B(f) / 2T - E(f))`, where `B` is the
//! BIC and `E` the prior energy. Only the BIC term is tempered, so the
//! `T = 1` replica samples the posterior and `T → ∞` the prior.

pub mod moves;
pub mod trace;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::canonical::{canonical_key, CanonicalKey};
use crate::expr::tree::{ExpressionTree, Symbol, DEFAULT_MAX_TREE_SIZE};
use crate::fit::{FitConfig, FittedModel, Scorer};
pub use moves::{MoveFrequencies, MoveKind, MoveSet, Proposal};
pub use trace::{ModelTrace, TraceMetadata, TraceRow};

/// Geometric ladder `T_k = base^k`, or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub base: f64,
    pub count: usize,
    pub temperatures: Option<Vec<f64>>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            base: 1.05,
            count: 40,
            temperatures: None,
        }
    }
}

impl LadderConfig {
    pub fn single() -> Self {
        LadderConfig {
            count: 1,
            ..Default::default()
        }
    }

    pub fn build(&self) -> Result<TemperatureLadder> {
        match &self.temperatures {
            Some(t) => TemperatureLadder::new(t.clone()),
            None => TemperatureLadder::geometric(self.base, self.count),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureLadder {
    temps: Vec<f64>,
}

impl TemperatureLadder {
    pub fn new(temps: Vec<f64>) -> Result<Self> {
        if temps.first() != Some(&1.0) {
            return Err(Error::Config("the ladder must start at T = 1".into()));
        }
        if temps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "temperatures must be strictly increasing".into(),
            ));
        }
        Ok(TemperatureLadder { temps })
    }

    pub fn geometric(base: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config(
                "the ladder needs at least one temperature".into(),
            ));
        }
        if count > 1 && !(base > 1.0) {
            return Err(Error::Config("ladder base must exceed 1".into()));
        }
        Self::new((0..count).map(|k| base.powi(k as i32)).collect())
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }
}

/// Everything that controls a sampling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of sweeps. A sweep steps every replica once and then
    /// attempts one swap.
    pub n_steps: usize,
    pub moves: MoveFrequencies,
    pub ladder: LadderConfig,
    pub max_tree_size: usize,
    /// Sweeps discarded before recording; defaults to 40% of `n_steps`.
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub restarts: usize,
    pub seed: u64,
    pub forbid_duplicates: bool,
    pub record_all_temperatures: bool,
    pub fit: FitConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_steps: 2500,
            moves: MoveFrequencies::default(),
            ladder: LadderConfig::default(),
            max_tree_size: DEFAULT_MAX_TREE_SIZE,
            burn_in: None,
            thinning: 1,
            restarts: 1,
            seed: 0,
            forbid_duplicates: true,
            record_all_temperatures: false,
            fit: FitConfig::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.moves.validate()?;
        self.ladder.build()?;
        if self.max_tree_size == 0 {
            return Err(Error::Config("max_tree_size must be positive".into()));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if self.fit.n_starts == 0 {
            return Err(Error::Config("fit.n_starts must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_steps * 2 / 5)
    }

    /// Hex SHA-256 of the configuration's JSON form.
    pub fn hash(&self) -> String {
        crate::config::config_hash(self)
    }

    /// Seed of restart `r`.
    pub fn restart_seed(&self, r: usize) -> u64 {
        self.seed
            .wrapping_add((r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// How a replica reached its current state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Init,
    Swap,
    Move(MoveKind),
}

impl Origin {
    pub fn label(self) -> String {
        match self {
            Origin::Init => "init".into(),
            Origin::Swap => "swap".into(),
            Origin::Move(k) => k.to_string(),
        }
    }
}

/// One tempered replica.
#[derive(Clone, Debug)]
pub struct Chain {
    pub model: FittedModel,
    pub temperature: f64,
    pub origin: Origin,
    pub proposed: u64,
    pub accepted: u64,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Tempered description-length difference `ΔB / 2T + ΔE`; `+inf` when the
/// proposed model is invalid or forbidden.
pub fn tempered_delta(old: &FittedModel, new: &FittedModel, temperature: f64) -> f64 {
    if !new.description_length.is_finite() {
        return f64::INFINITY;
    }
    let data_term = if temperature.is_infinite() {
        0.0
    } else {
        (new.bic - old.bic) / (2.0 * temperature)
    };
    data_term + (new.prior_energy - old.prior_energy)
}

/// Metropolis-Hastings acceptance probability `min(1, exp(-Δ + ln g))`.
pub fn acceptance_probability(delta: f64, log_g_ratio: f64) -> f64 {
    let a = -delta + log_g_ratio;
    if a.is_nan() {
        0.0
    } else if a >= 0.0 {
        1.0
    } else {
        a.exp()
    }
}

pub fn accept<R: Rng + ?Sized>(delta: f64, log_g_ratio: f64, rng: &mut R) -> bool {
    let p = acceptance_probability(delta, log_g_ratio);
    p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
}

/// Probability of exchanging the states of replicas at `t_low < t_high`
/// holding models with BICs `b_low` and `b_high`. Prior terms cancel.
pub fn swap_probability(b_low: f64, b_high: f64, t_low: f64, t_high: f64) -> f64 {
    let inv_high = if t_high.is_infinite() {
        0.0
    } else {
        1.0 / t_high
    };
    let exponent = (b_low - b_high) / 2.0 * (1.0 / t_low - inv_high);
    if exponent.is_nan() {
        0.0
    } else if exponent >= 0.0 {
        1.0
    } else {
        exponent.exp()
    }
}

/// First-visited tree for each canonical key. Later trees with the same
/// key but a different shape are forbidden.
#[derive(Clone, Debug, Default)]
pub struct DuplicateRegistry {
    first_seen: HashMap<CanonicalKey, ExpressionTree>,
}

impl DuplicateRegistry {
    /// Registers the tree on first sight; returns whether it is allowed.
    pub fn admit(&mut self, key: CanonicalKey, tree: &ExpressionTree) -> bool {
        match self.first_seen.get(&key) {
            Some(t) => t == tree,
            None => {
                self.first_seen.insert(key, tree.clone());
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }
}

/// The replicas of one restart and the machinery to advance them.
pub struct Sampler<'a> {
    scorer: &'a Scorer,
    moves: MoveSet,
    freqs: MoveFrequencies,
    chains: Vec<Chain>,
    swap_rng: ChaCha8Rng,
    registry: Option<DuplicateRegistry>,
    step: usize,
    swaps_proposed: u64,
    swaps_accepted: u64,
}

impl<'a> Sampler<'a> {
    /// Starts every replica at a uniformly chosen variable leaf. Chain `k`
    /// draws from stream `k + 1` of a generator seeded with `seed`; swaps
    /// use stream 0.
    pub fn new(scorer: &'a Scorer, config: &SamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ladder = config.ladder.build()?;
        let opset = scorer.opset();
        if let Some(d) = scorer.data() {
            if d.n_vars() != opset.n_vars() {
                return Err(Error::Config(format!(
                    "dataset has {} input columns, operation set has {} variables",
                    d.n_vars(),
                    opset.n_vars()
                )));
            }
        }
        let moves = MoveSet::new(opset, config.max_tree_size);
        let mut registry = config.forbid_duplicates.then(DuplicateRegistry::default);
        let mut chains = Vec::with_capacity(ladder.len());
        for (k, &t) in ladder.temps().iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let v = rng.random_range(0..opset.n_vars());
            let tree = ExpressionTree::leaf(Symbol::Var(v as u8));
            if let Some(reg) = registry.as_mut() {
                reg.admit(canonical_key(&tree, opset), &tree);
            }
            chains.push(Chain {
                model: scorer.score(&tree),
                temperature: t,
                origin: Origin::Init,
                proposed: 0,
                accepted: 0,
                rng,
            });
        }
        let mut swap_rng = ChaCha8Rng::seed_from_u64(seed);
        swap_rng.set_stream(0);
        Ok(Sampler {
            scorer,
            moves,
            freqs: config.moves.clone(),
            chains,
            swap_rng,
            registry,
            step: 0,
            swaps_proposed: 0,
            swaps_accepted: 0,
        })
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn moves(&self) -> &MoveSet {
        &self.moves
    }

    /// Moves replica `k` to `tree`, as if it had started there.
    pub fn reset_chain(&mut self, k: usize, tree: &ExpressionTree) {
        if let Some(reg) = self.registry.as_mut() {
            reg.admit(canonical_key(tree, self.scorer.opset()), tree);
        }
        let c = &mut self.chains[k];
        c.model = self.scorer.score(tree);
        c.origin = Origin::Init;
    }

    pub fn swap_acceptance_rate(&self) -> f64 {
        if self.swaps_proposed == 0 {
            0.0
        } else {
            self.swaps_accepted as f64 / self.swaps_proposed as f64
        }
    }

    /// Proposes and scores a move for every replica (in parallel; scoring
    /// is pure), then applies duplicate bookkeeping and acceptance in
    /// replica order, then attempts one swap.
    pub fn sweep(&mut self) {
        let scorer = self.scorer;
        let moves = &self.moves;
        let freqs = &self.freqs;
        let proposals: Vec<Option<(Proposal, FittedModel)>> = self
            .chains
            .par_iter_mut()
            .map(|c| {
                let p = moves.propose(&c.model.tree, freqs, &mut c.rng)?;
                let m = scorer.score(&p.tree);
                Some((p, m))
            })
            .collect();

        let opset = scorer.opset();
        for (chain, proposal) in self.chains.iter_mut().zip(proposals) {
            chain.proposed += 1;
            let Some((p, mut m)) = proposal else {
                continue;
            };
            if let Some(reg) = self.registry.as_mut() {
                if !reg.admit(canonical_key(&p.tree, opset), &p.tree) {
                    m = m.forbidden();
                }
            }
            let delta = tempered_delta(&chain.model, &m, chain.temperature);
            if accept(delta, p.log_g_ratio, &mut chain.rng) {
                chain.model = m;
                chain.origin = Origin::Move(p.kind);
                chain.accepted += 1;
            }
        }
        self.swap_attempt();
        self.step += 1;
    }

    fn swap_attempt(&mut self) {
        if self.chains.len() < 2 {
            return;
        }
        let k = self.swap_rng.random_range(0..self.chains.len() - 1);
        let (lo, hi) = (&self.chains[k], &self.chains[k + 1]);
        let p = swap_probability(lo.model.bic, hi.model.bic, lo.temperature, hi.temperature);
        self.swaps_proposed += 1;
        let u: f64 = self.swap_rng.random();
        if p >= 1.0 || u < p {
            let (a, b) = self.chains.split_at_mut(k + 1);
            std::mem::swap(&mut a[k].model, &mut b[0].model);
            a[k].origin = Origin::Swap;
            b[0].origin = Origin::Swap;
            self.swaps_accepted += 1;
        }
    }
}

/// Periodic status of a run.
#[derive(Clone, Debug)]
pub struct Progress {
    pub restart: usize,
    pub step: usize,
    pub best_description_length: f64,
    pub t0_acceptance: f64,
    pub swap_acceptance: f64,
}

/// Runs every restart and records the post-burn-in states.
pub fn run(
    scorer: &Scorer,
    config: &SamplerConfig,
    mut progress: Option<&mut dyn FnMut(&Progress)>,
) -> Result<ModelTrace> {
    config.validate()?;
    let opset = scorer.opset();
    let burn_in = config.effective_burn_in();
    let mut trace = ModelTrace::new(TraceMetadata::new(scorer, config)?);
    for r in 0..config.restarts {
        let mut sampler = Sampler::new(scorer, config, config.restart_seed(r))?;
        let mut best = f64::INFINITY;
        let record = |s: &Sampler, trace: &mut ModelTrace| {
            let chains = if config.record_all_temperatures {
                s.chains()
            } else {
                &s.chains()[..1]
            };
            for c in chains {
                trace.rows.push(TraceRow::from_model(
                    r,
                    s.step(),
                    c.temperature,
                    &c.model,
                    c.origin,
                    opset,
                ));
            }
        };
        if burn_in == 0 {
            record(&sampler, &mut trace);
        }
        for _ in 0..config.n_steps {
            sampler.sweep();
            let step = sampler.step();
            best = best.min(sampler.chains()[0].model.description_length);
            if step > burn_in && (step - burn_in) % config.thinning == 0 {
                record(&sampler, &mut trace);
            }
            if let Some(cb) = progress.as_mut() {
                cb(&Progress {
                    restart: r,
                    step,
                    best_description_length: best,
                    t0_acceptance: sampler.chains()[0].acceptance_rate(),
                    swap_acceptance: sampler.swap_acceptance_rate(),
                });
            }
        }
    }
    Ok(trace)
}
