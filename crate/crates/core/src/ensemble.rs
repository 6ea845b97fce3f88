//! Point selections and predictions from a posterior sample of models.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::canonical::canonical_key;
use crate::expr::ops::OperationSet;
use crate::expr::tree::{EvalScratch, ExpressionTree};
use crate::fit::FittedModel;
use crate::sampler::ModelTrace;

/// Models sampled at `T = 1`, repeats included: the sampling frequency is
/// the posterior weight.
#[derive(Clone, Debug)]
pub struct PredictiveEnsemble {
    opset: OperationSet,
    models: Vec<FittedModel>,
    keys: Vec<String>,
}

impl PredictiveEnsemble {
    pub fn new(opset: OperationSet, models: Vec<FittedModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        if let Some(m) = models.iter().find(|m| !m.description_length.is_finite()) {
            return Err(Error::Config(format!(
                "ensemble member {} has a non-finite description length",
                m.tree.render(&opset)
            )));
        }
        let keys = models
            .iter()
            .map(|m| canonical_key(&m.tree, &opset).0)
            .collect();
        Ok(PredictiveEnsemble {
            opset,
            models,
            keys,
        })
    }

    /// Builds the ensemble from the `T = 1` rows of a trace.
    pub fn from_trace(trace: &ModelTrace) -> Result<Self> {
        let opset = trace.metadata.opset()?;
        let mut models = Vec::new();
        for row in trace.posterior_rows() {
            let tree = row.tree(&opset)?;
            models.push(FittedModel {
                n_active_params: tree.params_used().len(),
                tree,
                theta: row.theta.clone(),
                sse: row.sse,
                bic: row.bic,
                prior_energy: row.dl - row.bic / 2.0,
                description_length: row.dl,
            });
        }
        Self::new(opset, models)
    }

    pub fn opset(&self) -> &OperationSet {
        &self.opset
    }

    pub fn models(&self) -> &[FittedModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Orders members by the selection tie-break: size, then canonical key.
    fn tie_break(&self, a: usize, b: usize) -> Ordering {
        self.models[a]
            .tree
            .size()
            .cmp(&self.models[b].tree.size())
            .then_with(|| self.keys[a].cmp(&self.keys[b]))
    }

    /// Index of the member with minimum description length.
    pub fn mdl_index(&self) -> usize {
        (0..self.models.len())
            .min_by(|&a, &b| {
                self.models[a]
                    .description_length
                    .total_cmp(&self.models[b].description_length)
                    .then_with(|| self.tie_break(a, b))
            })
            .expect("ensemble is nonempty")
    }

    pub fn mdl_model(&self) -> &FittedModel {
        &self.models[self.mdl_index()]
    }

    /// Member predictions at `x`; non-finite values are dropped.
    pub fn posterior_predictive(&self, x: &[f64]) -> Result<PointPrediction> {
        if x.len() != self.opset.n_vars() {
            return Err(Error::Dataset(format!(
                "query point has {} coordinates, models take {}",
                x.len(),
                self.opset.n_vars()
            )));
        }
        let mut values = Vec::with_capacity(self.models.len());
        let mut dropped = 0;
        for m in &self.models {
            let v = m.tree.evaluate(&self.opset, x, &m.theta);
            if v.is_finite() {
                values.push(v);
            } else {
                dropped += 1;
            }
        }
        if values.is_empty() {
            return Err(Error::NoPrediction);
        }
        Ok(PointPrediction { values, dropped })
    }

    pub fn median_prediction(&self, x: &[f64]) -> Result<f64> {
        Ok(median(&self.posterior_predictive(x)?.values))
    }

    /// Predictions of every member on every grid point (given as input
    /// columns), computed once per distinct `(tree, theta)`.
    fn grid_predictions(&self, columns: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut index: HashMap<(&ExpressionTree, Vec<u64>), usize> = HashMap::new();
        let mut distinct = Vec::new();
        let mut member = Vec::with_capacity(self.models.len());
        let mut scratch = EvalScratch::default();
        for m in &self.models {
            let bits = m.theta.iter().map(|t| t.to_bits()).collect();
            let next = distinct.len();
            let i = *index.entry((&m.tree, bits)).or_insert(next);
            if i == next {
                let mut out = Vec::new();
                m.tree
                    .evaluate_columns(&self.opset, columns, &m.theta, &mut scratch, &mut out);
                distinct.push(out);
            }
            member.push(i);
        }
        (distinct, member)
    }

    /// Pointwise median, quantiles and finite-member counts over a grid.
    pub fn predict_grid(
        &self,
        columns: &[Vec<f64>],
        quantiles: &[f64],
    ) -> Result<Vec<GridPrediction>> {
        self.check_columns(columns)?;
        let (distinct, member) = self.grid_predictions(columns);
        let n_points = columns.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(n_points);
        let mut values = Vec::with_capacity(member.len());
        for k in 0..n_points {
            values.clear();
            values.extend(
                member
                    .iter()
                    .map(|&i| distinct[i][k])
                    .filter(|v| v.is_finite()),
            );
            if values.is_empty() {
                out.push(GridPrediction {
                    median: None,
                    quantiles: vec![None; quantiles.len()],
                    n_finite: 0,
                });
                continue;
            }
            values.sort_by(f64::total_cmp);
            out.push(GridPrediction {
                median: Some(median_sorted(&values)),
                quantiles: quantiles
                    .iter()
                    .map(|&q| Some(quantile_sorted(&values, q)))
                    .collect(),
                n_finite: values.len(),
            });
        }
        Ok(out)
    }

    /// The member closest, in mean absolute distance over the grid, to the
    /// pointwise ensemble median. Points where either side is non-finite
    /// are skipped. Returns the member index and its distance.
    pub fn median_predictive_index(&self, columns: &[Vec<f64>]) -> Result<(usize, f64)> {
        self.check_columns(columns)?;
        let (distinct, member) = self.grid_predictions(columns);
        let n_points = columns.first().map_or(0, Vec::len);
        let mut medians = Vec::with_capacity(n_points);
        let mut values = Vec::with_capacity(member.len());
        for k in 0..n_points {
            values.clear();
            values.extend(
                member
                    .iter()
                    .map(|&i| distinct[i][k])
                    .filter(|v| v.is_finite()),
            );
            medians.push(if values.is_empty() {
                None
            } else {
                Some(median(&values))
            });
        }
        if medians.iter().all(Option::is_none) {
            return Err(Error::NoPrediction);
        }
        let distance: Vec<f64> = distinct
            .iter()
            .map(|pred| {
                let (mut sum, mut n) = (0.0, 0usize);
                for (p, m) in pred.iter().zip(&medians) {
                    if let (true, Some(m)) = (p.is_finite(), m) {
                        sum += (p - m).abs();
                        n += 1;
                    }
                }
                if n == 0 {
                    f64::INFINITY
                } else {
                    sum / n as f64
                }
            })
            .collect();
        let best = (0..self.models.len())
            .min_by(|&a, &b| {
                distance[member[a]]
                    .total_cmp(&distance[member[b]])
                    .then_with(|| self.tie_break(a, b))
            })
            .expect("ensemble is nonempty");
        let d = distance[member[best]];
        if !d.is_finite() {
            return Err(Error::NoPrediction);
        }
        Ok((best, d))
    }

    pub fn median_predictive_model(&self, columns: &[Vec<f64>]) -> Result<(&FittedModel, f64)> {
        let (i, d) = self.median_predictive_index(columns)?;
        Ok((&self.models[i], d))
    }

    fn check_columns(&self, columns: &[Vec<f64>]) -> Result<()> {
        if columns.len() != self.opset.n_vars() {
            return Err(Error::Dataset(format!(
                "grid has {} columns, models take {}",
                columns.len(),
                self.opset.n_vars()
            )));
        }
        if columns.first().is_none_or(Vec::is_empty)
            || columns.iter().any(|c| c.len() != columns[0].len())
        {
            return Err(Error::Dataset(
                "grid columns must be nonempty and of equal length".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointPrediction {
    pub values: Vec<f64>,
    /// Members whose prediction was not finite.
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPrediction {
    pub median: Option<f64>,
    pub quantiles: Vec<Option<f64>>,
    pub n_finite: usize,
}

/// Sample median; the mean of the two central values for even counts.
/// Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of an empty sample");
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
