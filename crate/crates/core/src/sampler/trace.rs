//! JSON-lines trace: one metadata object, then one object per recorded
//! state.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Origin, SamplerConfig};
use crate::error::{Error, Result};
use crate::expr::canonical::canonical_key;
use crate::expr::ops::OperationSet;
use crate::expr::tree::{parse_expression_with_limit, ExpressionTree};
use crate::fit::{FittedModel, Scorer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub rows: usize,
    pub inputs: Vec<String>,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(rename = "type")]
    pub kind: String,
    pub seed: u64,
    pub config: SamplerConfig,
    pub config_hash: String,
    pub ops: Vec<String>,
    pub n_vars: usize,
    pub n_params: usize,
    pub temperatures: Vec<f64>,
    pub prior_alpha: Vec<f64>,
    pub prior_beta: Vec<f64>,
    pub dataset: Option<DatasetInfo>,
    pub created_unix: u64,
}

impl TraceMetadata {
    pub fn new(scorer: &Scorer, config: &SamplerConfig) -> Result<Self> {
        let opset = scorer.opset();
        let prior = scorer.prior();
        Ok(TraceMetadata {
            kind: "metadata".into(),
            seed: config.seed,
            config: config.clone(),
            config_hash: config.hash(),
            ops: opset.names().iter().map(|s| s.to_string()).collect(),
            n_vars: opset.n_vars(),
            n_params: opset.n_params(),
            temperatures: config.ladder.build()?.temps().to_vec(),
            prior_alpha: prior.alpha.clone(),
            prior_beta: prior.beta.clone(),
            dataset: scorer.data().map(|d| DatasetInfo {
                rows: d.len(),
                inputs: d.names().to_vec(),
                target: d.target_name().to_string(),
            }),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }

    pub fn opset(&self) -> Result<OperationSet> {
        OperationSet::from_names(&self.ops, self.n_vars, self.n_params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub step: usize,
    pub temperature: f64,
    pub key: String,
    pub expr: String,
    pub theta: Vec<f64>,
    pub sse: f64,
    pub bic: f64,
    pub dl: f64,
    #[serde(rename = "move")]
    pub origin: String,
}

impl TraceRow {
    pub fn from_model(
        restart: usize,
        step: usize,
        temperature: f64,
        model: &FittedModel,
        origin: Origin,
        opset: &OperationSet,
    ) -> Self {
        TraceRow {
            restart,
            step,
            temperature,
            key: canonical_key(&model.tree, opset).0,
            expr: model.tree.render(opset),
            theta: model.theta.clone(),
            sse: model.sse,
            bic: model.bic,
            dl: model.description_length,
            origin: origin.label(),
        }
    }

    pub fn tree(&self, opset: &OperationSet) -> Result<ExpressionTree> {
        parse_expression_with_limit(&self.expr, opset, usize::MAX)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelTrace {
    pub metadata: TraceMetadata,
    pub rows: Vec<TraceRow>,
}

impl ModelTrace {
    pub fn new(metadata: TraceMetadata) -> Self {
        ModelTrace {
            metadata,
            rows: Vec::new(),
        }
    }

    /// Rows sampled at `T = 1`.
    pub fn posterior_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.temperature == 1.0)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.metadata)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(Path::new("<trace>"), e))?;
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")
                .map_err(|e| Error::io(Path::new("<trace>"), e))?;
        }
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl<R: BufRead>(reader: R, name: &Path) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let metadata = loop {
            match lines.next() {
                None => return Err(Error::Empty("trace")),
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io(name, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let m: TraceMetadata = serde_json::from_str(&line)
                        .map_err(|e| Error::from(e).at_line(name, i + 1))?;
                    break m;
                }
            }
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(&line).map_err(|e| Error::from(e).at_line(name, i + 1))?,
            );
        }
        Ok(ModelTrace { metadata, rows })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(f), path)
    }
}
