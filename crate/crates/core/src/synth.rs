//! Synthetic datasets: noisy samples of a closed-form expression, and
//! derivatives along a Rössler trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::ops::{OpKind, OperationSet};
use crate::expr::tree::{parse_expression_with_limit, ExpressionTree};

/// `y = F(x; theta) + N(0, noise^2)` with inputs uniform in `ranges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionSpec {
    pub expr: String,
    pub theta: Vec<f64>,
    pub ranges: Vec<(f64, f64)>,
    pub n: usize,
    pub noise: f64,
}

impl ExpressionSpec {
    /// Operation set with every built-in operation, sized for this spec.
    pub fn opset(&self) -> Result<OperationSet> {
        OperationSet::new(OpKind::ALL.to_vec(), self.ranges.len(), self.theta.len())
    }

    pub fn tree(&self) -> Result<(ExpressionTree, OperationSet)> {
        let opset = self.opset()?;
        let tree = parse_expression_with_limit(&self.expr, &opset, usize::MAX)?;
        Ok((tree, opset))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if self.ranges.is_empty() {
            return Err(Error::Config("at least one input range is required".into()));
        }
        if let Some((lo, hi)) = self
            .ranges
            .iter()
            .find(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::Config(format!("bad input range [{lo}, {hi}]")));
        }
        self.tree().map(|_| ())
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let (tree, opset) = self.tree()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::Config(e.to_string()))?;
        let mut rows = Vec::with_capacity(self.n);
        let mut y = Vec::with_capacity(self.n);
        while rows.len() < self.n {
            let x: Vec<f64> = self
                .ranges
                .iter()
                .map(|&(lo, hi)| {
                    if lo == hi {
                        lo
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect();
            let f = tree.evaluate(&opset, &x, &self.theta);
            if !f.is_finite() {
                return Err(Error::Dataset(format!(
                    "{} is not finite at {x:?}",
                    self.expr
                )));
            }
            let eps = if self.noise > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            rows.push(x);
            y.push(f + eps);
        }
        Dataset::from_rows(&rows, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Derivative {
    X,
    Y,
    Z,
}

impl Derivative {
    pub fn index(self) -> usize {
        match self {
            Derivative::X => 0,
            Derivative::Y => 1,
            Derivative::Z => 2,
        }
    }

    pub fn column_name(self) -> &'static str {
        ["dx", "dy", "dz"][self.index()]
    }
}

/// `x' = -y - z`, `y' = x + a y`, `z' = b + z (x - c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RosslerSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub dt: f64,
    pub transient: f64,
    pub span: f64,
    pub initial: [f64; 3],
    pub n: usize,
    pub noise: f64,
    pub target: Derivative,
}

impl Default for RosslerSpec {
    fn default() -> Self {
        RosslerSpec {
            a: 0.2,
            b: 0.2,
            c: 5.7,
            dt: 0.01,
            transient: 100.0,
            span: 500.0,
            initial: [1.0, 1.0, 1.0],
            n: 200,
            noise: 1.0,
            target: Derivative::X,
        }
    }
}

impl RosslerSpec {
    pub fn rhs(&self, s: [f64; 3]) -> [f64; 3] {
        [
            -s[1] - s[2],
            s[0] + self.a * s[1],
            self.b + s[2] * (s[0] - self.c),
        ]
    }

    fn rk4(&self, s: [f64; 3]) -> [f64; 3] {
        let h = self.dt;
        let add =
            |s: [f64; 3], k: [f64; 3], f: f64| [s[0] + f * k[0], s[1] + f * k[1], s[2] + f * k[2]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(add(s, k1, h / 2.0));
        let k3 = self.rhs(add(s, k2, h / 2.0));
        let k4 = self.rhs(add(s, k3, h));
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("integration step must be positive".into()));
        }
        if !(self.noise >= 0.0) || !(self.transient >= 0.0) || !(self.span > 0.0) {
            return Err(Error::Config(
                "noise and transient must be >= 0, span > 0".into(),
            ));
        }
        Ok(())
    }

    /// States at `n` equally spaced times after the transient.
    pub fn trajectory(&self) -> Result<Vec<[f64; 3]>> {
        self.validate()?;
        let transient_steps = (self.transient / self.dt).round() as usize;
        let total = ((self.span / self.dt).round() as usize).max(1);
        let stride = (total / self.n).max(1);
        let mut s = self.initial;
        let mut out = Vec::with_capacity(self.n);
        let mut step = 0usize;
        let check = |s: &[f64; 3], step: usize| {
            if s.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Diverged(step as f64 * self.dt))
            }
        };
        for _ in 0..transient_steps {
            s = self.rk4(s);
            step += 1;
            check(&s, step)?;
        }
        while out.len() < self.n {
            out.push(s);
            for _ in 0..stride {
                s = self.rk4(s);
                step += 1;
                check(&s, step)?;
            }
        }
        Ok(out)
    }

    /// Columns `x, y, z` and the chosen derivative plus Gaussian noise.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let states = self.trajectory()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::Config(e.to_string()))?;
        let k = self.target.index();
        let y = states
            .iter()
            .map(|s| {
                self.rhs(*s)[k]
                    + if self.noise > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    }
            })
            .collect();
        let columns = (0..3)
            .map(|j| states.iter().map(|s| s[j]).collect())
            .collect();
        Dataset::new(
            columns,
            y,
            vec!["x".into(), "y".into(), "z".into()],
            self.target.column_name().into(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_targets_equal_evaluation() {
        let spec = ExpressionSpec {
            expr: "(/ (* (* x1 (+ p1 x2)) (cos x1)) (* p2 (log p2)))".into(),
            theta: vec![-1.19, 0.29],
            ranges: vec![(-2.0, 2.0), (-2.0, 2.0)],
            n: 5,
            noise: 0.0,
        };
        let d = spec.generate(3).unwrap();
        let (tree, opset) = spec.tree().unwrap();
        for k in 0..d.len() {
            assert_eq!(d.y()[k], tree.evaluate(&opset, &d.row(k), &spec.theta));
        }
        assert_eq!(spec.generate(3).unwrap(), d);
    }

    #[test]
    fn rossler_stays_on_attractor() {
        let spec = RosslerSpec {
            n: 300,
            noise: 0.0,
            ..Default::default()
        };
        let d = spec.generate(0).unwrap();
        assert_eq!(d.len(), 300);
        let max_abs = d
            .columns()
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs < 30.0, "{max_abs}");
        for k in 0..d.len() {
            let r = d.row(k);
            assert!((d.y()[k] - (-r[1] - r[2])).abs() < 1e-12);
        }
    }

    #[test]
    fn rossler_divergence_reported() {
        let spec = RosslerSpec {
            c: -50.0,
            transient: 50.0,
            ..Default::default()
        };
        assert!(matches!(spec.generate(0), Err(Error::Diverged(_))));
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = ExpressionSpec {
            expr: "(+ x1 p1)".into(),
            theta: vec![1.0],
            ranges: vec![(0.0, 1.0)],
            n: 0,
            noise: 0.0,
        };
        assert!(spec.generate(0).is_err());
        let bad_step = RosslerSpec {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad_step.generate(0).is_err());
    }
}
