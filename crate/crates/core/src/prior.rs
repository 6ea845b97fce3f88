//! Maximum-entropy prior over expressions.
//!
//! The prior energy of a tree is `E = sum_o alpha_o n_o + beta_o n_o^2`
//! where `n_o` counts occurrences of operation `o`; the unnormalized log
//! prior is `-E`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::ops::{OpKind, OpSetSignature, OperationSet};
use crate::expr::tree::{parse_expression_with_limit, OpCounts};

/// Hyperparameters of the prior, one `(alpha, beta)` pair per operation of
/// the bound operation set.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub signature: OpSetSignature,
}

impl PriorParams {
    /// The flat prior: every tree has zero energy.
    pub fn uniform(opset: &OperationSet) -> Self {
        PriorParams {
            alpha: vec![0.0; opset.n_ops()],
            beta: vec![0.0; opset.n_ops()],
            signature: opset.signature(),
        }
    }

    pub fn new(opset: &OperationSet, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != opset.n_ops() || beta.len() != opset.n_ops() {
            return Err(Error::PriorTable(format!(
                "expected {} operations, got {} alphas and {} betas",
                opset.n_ops(),
                alpha.len(),
                beta.len()
            )));
        }
        if let Some(b) = beta.iter().find(|b| **b < 0.0 || !b.is_finite()) {
            return Err(Error::PriorTable(format!(
                "beta must be finite and >= 0, got {b}"
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::PriorTable(format!("alpha must be finite, got {a}")));
        }
        Ok(PriorParams {
            alpha,
            beta,
            signature: opset.signature(),
        })
    }

    pub fn n_ops(&self) -> usize {
        self.alpha.len()
    }

    /// Checks that the table was built for exactly the operations of `opset`.
    pub fn check_opset(&self, opset: &OperationSet) -> Result<()> {
        let names: Vec<String> = opset.names().iter().map(|s| s.to_string()).collect();
        if names != self.signature.ops {
            return Err(Error::PriorTable(format!(
                "prior is for operations [{}], run uses [{}]",
                self.signature.ops.join(","),
                names.join(",")
            )));
        }
        Ok(())
    }

    /// Prior energy of a count vector.
    pub fn energy(&self, counts: &OpCounts) -> f64 {
        prior_energy(counts, self)
    }

    /// Reads a parameter table. Rows are matched to `opset` by op name.
    pub fn read_tsv(path: &Path, opset: &OperationSet) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, opset).map_err(|e| match e {
            Error::AtLine { .. } => e,
            other => Error::PriorTable(format!("{}: {other}", path.display())),
        })
    }

    pub fn parse_tsv(text: &str, opset: &OperationSet) -> Result<Self> {
        let mut alpha = vec![None; opset.n_ops()];
        let mut beta = vec![None; opset.n_ops()];
        let mut header_seen = false;
        let mut counts: Option<(usize, usize)> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                counts = counts.or_else(|| parse_counts_comment(meta));
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !header_seen {
                if cols.first() != Some(&"op") {
                    return Err(Error::PriorTable(format!(
                        "line {}: expected header `op\\talpha\\tbeta`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            if cols.len() < 3 {
                return Err(Error::PriorTable(format!(
                    "line {}: expected 3 columns",
                    lineno + 1
                )));
            }
            let op = OpKind::from_name(cols[0])
                .ok_or_else(|| Error::UnknownSymbol(cols[0].to_string()))?;
            let Some(i) = opset.index_of(op) else {
                return Err(Error::PriorTable(format!(
                    "operation `{}` is not in the operation set",
                    cols[0]
                )));
            };
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::PriorTable(format!("line {}: bad number `{s}`", lineno + 1))
                })
            };
            alpha[i] = Some(num(cols[1])?);
            beta[i] = Some(num(cols[2])?);
        }
        if let Some((nv, np)) = counts {
            if nv != opset.n_vars() || np != opset.n_params() {
                return Err(Error::PriorTable(format!(
                    "table is for n_vars={nv}, n_params={np}; run uses n_vars={}, n_params={}",
                    opset.n_vars(),
                    opset.n_params()
                )));
            }
        }
        let missing: Vec<&str> = opset
            .names()
            .into_iter()
            .zip(&alpha)
            .filter(|(_, a)| a.is_none())
            .map(|(n, _)| n)
            .collect();
        if !missing.is_empty() {
            return Err(Error::PriorTable(format!(
                "missing operations: {}",
                missing.join(",")
            )));
        }
        PriorParams::new(
            opset,
            alpha.into_iter().map(Option::unwrap).collect(),
            beta.into_iter().map(Option::unwrap).collect(),
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# n_vars={}\tn_params={}\nop\talpha\tbeta\n",
            self.signature.n_vars, self.signature.n_params
        );
        for (i, name) in self.signature.ops.iter().enumerate() {
            let _ = writeln!(out, "{name}\t{}\t{}", self.alpha[i], self.beta[i]);
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn parse_counts_comment(meta: &str) -> Option<(usize, usize)> {
    let mut nv = None;
    let mut np = None;
    for field in meta.split(|c: char| c.is_whitespace() || c == ',') {
        if let Some(v) = field.strip_prefix("n_vars=") {
            nv = v.parse().ok();
        } else if let Some(v) = field.strip_prefix("n_params=") {
            np = v.parse().ok();
        }
    }
    Some((nv?, np?))
}

/// `E(f) = sum_o alpha_o n_o + beta_o n_o^2`.
pub fn prior_energy(counts: &OpCounts, params: &PriorParams) -> f64 {
    counts
        .0
        .iter()
        .zip(params.alpha.iter().zip(&params.beta))
        .map(|(&n, (&a, &b))| {
            let n = n as f64;
            a * n + b * n * n
        })
        .sum()
}

/// Per-operation first and second moments of operation counts over a
/// corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub mean_count: Vec<f64>,
    pub mean_sq_count: Vec<f64>,
    pub n_expressions: usize,
}

impl CorpusStats {
    pub fn from_counts<'a>(counts: impl IntoIterator<Item = &'a OpCounts>, n_ops: usize) -> Self {
        let mut sum = vec![0.0; n_ops];
        let mut sum_sq = vec![0.0; n_ops];
        let mut n = 0usize;
        for c in counts {
            for (i, &k) in c.0.iter().enumerate() {
                let k = k as f64;
                sum[i] += k;
                sum_sq[i] += k * k;
            }
            n += 1;
        }
        let denom = n.max(1) as f64;
        CorpusStats {
            mean_count: sum.into_iter().map(|s| s / denom).collect(),
            mean_sq_count: sum_sq.into_iter().map(|s| s / denom).collect(),
            n_expressions: n,
        }
    }

    /// Reads a stats table with columns `op, mean_count, mean_sq_count`.
    /// Operations of `opset` missing from the table get zero targets.
    pub fn parse_tsv(text: &str, opset: &OperationSet) -> Result<Self> {
        let mut mean = vec![0.0; opset.n_ops()];
        let mut mean_sq = vec![0.0; opset.n_ops()];
        let mut n_expressions = 0;
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for field in meta.split_whitespace() {
                    if let Some(v) = field.strip_prefix("n_expressions=") {
                        n_expressions = v.parse().unwrap_or(0);
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !header_seen {
                if cols.first() != Some(&"op") {
                    return Err(Error::PriorTable(format!(
                        "line {}: expected header `op\\tmean_count\\tmean_sq_count`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            if cols.len() < 3 {
                return Err(Error::PriorTable(format!(
                    "line {}: expected 3 columns",
                    lineno + 1
                )));
            }
            let op = OpKind::from_name(cols[0])
                .ok_or_else(|| Error::UnknownSymbol(cols[0].to_string()))?;
            let Some(i) = opset.index_of(op) else {
                continue;
            };
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::PriorTable(format!("line {}: bad number `{s}`", lineno + 1))
                })
            };
            mean[i] = num(cols[1])?;
            mean_sq[i] = num(cols[2])?;
        }
        let stats = CorpusStats {
            mean_count: mean,
            mean_sq_count: mean_sq,
            n_expressions,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for (m, s) in self.mean_count.iter().zip(&self.mean_sq_count) {
            if *m < 0.0 || *s < 0.0 || !m.is_finite() || !s.is_finite() {
                return Err(Error::PriorTable(
                    "statistics must be finite and >= 0".into(),
                ));
            }
            // allow rounding slack in tables written with few digits
            if *s < m * m * (1.0 - 1e-6) - 1e-12 {
                return Err(Error::PriorTable(format!(
                    "mean_sq_count {s} is below mean_count^2 = {}",
                    m * m
                )));
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self, opset: &OperationSet) -> String {
        let mut out = format!(
            "# n_expressions={}\nop\tmean_count\tmean_sq_count\n",
            self.n_expressions
        );
        for (i, name) in opset.names().iter().enumerate() {
            let _ = writeln!(
                out,
                "{name}\t{}\t{}",
                self.mean_count[i], self.mean_sq_count[i]
            );
        }
        out
    }
}

/// What to do with corpus lines that fail to parse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParsePolicy {
    Strict,
    SkipAndWarn,
}

/// A corpus line that was skipped under [`ParsePolicy::SkipAndWarn`].
#[derive(Debug)]
pub struct SkippedLine {
    pub line: usize,
    pub error: Error,
}

/// Operation statistics of a corpus file in the prefix grammar, one
/// expression per line. Variables and parameters in the corpus are not
/// checked against the run's counts; only operations matter here.
pub fn corpus_stats(
    path: &Path,
    opset: &OperationSet,
    policy: ParsePolicy,
) -> Result<(CorpusStats, Vec<SkippedLine>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    corpus_stats_from_str(&text, opset, policy).map_err(|e| match e {
        Error::AtLine { source, line, .. } => source.at_line(path, line),
        other => other,
    })
}

pub fn corpus_stats_from_str(
    text: &str,
    opset: &OperationSet,
    policy: ParsePolicy,
) -> Result<(CorpusStats, Vec<SkippedLine>)> {
    let wide = opset.with_counts(u8::MAX as usize / 2, u8::MAX as usize / 2)?;
    let mut counts = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        match parse_expression_with_limit(body, &wide, usize::MAX) {
            Ok(t) => counts.push(t.count_operations(&wide)),
            Err(e) => match policy {
                ParsePolicy::Strict => return Err(e.at_line("<corpus>", i + 1)),
                ParsePolicy::SkipAndWarn => skipped.push(SkippedLine {
                    line: i + 1,
                    error: e,
                }),
            },
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("corpus has no parseable expressions"));
    }
    Ok((CorpusStats::from_counts(&counts, opset.n_ops()), skipped))
}

/// Loads targets from either a corpus or a stats table. Files whose first
/// non-comment line starts with `op<TAB>` are read as stats tables.
pub fn load_targets(
    path: &Path,
    opset: &OperationSet,
    policy: ParsePolicy,
) -> Result<(CorpusStats, Vec<SkippedLine>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    if first.is_some_and(|l| l.starts_with("op\t")) {
        Ok((CorpusStats::parse_tsv(&text, opset)?, Vec::new()))
    } else {
        corpus_stats_from_str(&text, opset, policy).map_err(|e| match e {
            Error::AtLine { source, line, .. } => source.at_line(path, line),
            other => other,
        })
    }
}
