use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in operations. Binary ops take their operands in (left, right)
/// order, e.g. `Sub` computes `left - right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Sinh,
    Cosh,
    Tanh,
    Neg,
    Inv,
    Square,
    Cube,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Pow,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Sqrt,
        OpKind::Abs,
        OpKind::Sinh,
        OpKind::Cosh,
        OpKind::Tanh,
        OpKind::Neg,
        OpKind::Inv,
        OpKind::Square,
        OpKind::Cube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "+",
            OpKind::Sub => "-",
            OpKind::Mul => "*",
            OpKind::Div => "/",
            OpKind::Pow => "pow",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::Sqrt => "sqrt",
            OpKind::Abs => "abs",
            OpKind::Sinh => "sinh",
            OpKind::Cosh => "cosh",
            OpKind::Tanh => "tanh",
            OpKind::Neg => "neg",
            OpKind::Inv => "inv",
            OpKind::Square => "pow2",
            OpKind::Cube => "pow3",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.iter().copied().find(|op| op.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Pow => 2,
            _ => 1,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Mul)
    }

    #[inline]
    pub fn apply_unary(self, a: f64) -> f64 {
        match self {
            OpKind::Exp => a.exp(),
            OpKind::Log => a.ln(),
            OpKind::Sin => a.sin(),
            OpKind::Cos => a.cos(),
            OpKind::Sqrt => a.sqrt(),
            OpKind::Abs => a.abs(),
            OpKind::Sinh => a.sinh(),
            OpKind::Cosh => a.cosh(),
            OpKind::Tanh => a.tanh(),
            OpKind::Neg => -a,
            OpKind::Inv => 1.0 / a,
            OpKind::Square => a * a,
            OpKind::Cube => a * a * a,
            _ => f64::NAN,
        }
    }

    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            OpKind::Add => a + b,
            OpKind::Sub => a - b,
            OpKind::Mul => a * b,
            OpKind::Div => a / b,
            OpKind::Pow => a.powf(b),
            _ => f64::NAN,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operations, variables and parameters available to expressions.
///
/// Operations are addressed by their position in `ops`; variables are
/// `x1..xK` and parameters `p1..pP` in the textual grammar.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperationSet {
    ops: Vec<OpKind>,
    n_vars: usize,
    n_params: usize,
}

pub const DEFAULT_OPS: [&str; 14] = [
    "+", "-", "*", "/", "pow", "exp", "log", "sin", "cos", "sqrt", "abs", "sinh", "cosh", "tanh",
];

impl OperationSet {
    pub fn new(ops: Vec<OpKind>, n_vars: usize, n_params: usize) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::OpSet("at least one variable is required".into()));
        }
        if n_vars + n_params > u8::MAX as usize {
            return Err(Error::OpSet("too many variables and parameters".into()));
        }
        if ops.len() > u8::MAX as usize {
            return Err(Error::OpSet("too many operations".into()));
        }
        for (i, op) in ops.iter().enumerate() {
            if ops[..i].contains(op) {
                return Err(Error::OpSet(format!("duplicate operation `{op}`")));
            }
        }
        Ok(OperationSet {
            ops,
            n_vars,
            n_params,
        })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], n_vars: usize, n_params: usize) -> Result<Self> {
        let ops = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                OpKind::from_name(n).ok_or_else(|| Error::OpSet(format!("unknown operation `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops, n_vars, n_params)
    }

    /// Parses a comma-separated list such as `"+,*,sin"`; `default` expands
    /// to the standard operations.
    pub fn from_spec(spec: &str, n_vars: usize, n_params: usize) -> Result<Self> {
        let mut names: Vec<&str> = Vec::new();
        for s in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if s == "default" {
                names.extend(DEFAULT_OPS);
            } else {
                names.push(s);
            }
        }
        Self::from_names(&names, n_vars, n_params)
    }

    pub fn default_ops(n_vars: usize, n_params: usize) -> Result<Self> {
        Self::from_names(&DEFAULT_OPS, n_vars, n_params)
    }

    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    pub fn op(&self, index: usize) -> OpKind {
        self.ops[index]
    }

    pub fn index_of(&self, op: OpKind) -> Option<usize> {
        self.ops.iter().position(|&o| o == op)
    }

    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Number of distinct leaf symbols (0-ETs).
    pub fn n_leaves(&self) -> usize {
        self.n_vars + self.n_params
    }

    pub fn ops_of_arity(&self, arity: usize) -> impl Iterator<Item = usize> + '_ {
        self.ops
            .iter()
            .enumerate()
            .filter(move |(_, op)| op.arity() == arity)
            .map(|(i, _)| i)
    }

    pub fn count_of_arity(&self, arity: usize) -> usize {
        self.ops_of_arity(arity).count()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ops.iter().map(|o| o.name()).collect()
    }

    /// Comma-separated op names, the inverse of [`OperationSet::from_spec`].
    pub fn spec(&self) -> String {
        self.names().join(",")
    }

    pub fn signature(&self) -> OpSetSignature {
        OpSetSignature {
            n_vars: self.n_vars,
            n_params: self.n_params,
            ops: self.names().iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_counts(&self, n_vars: usize, n_params: usize) -> Result<Self> {
        Self::new(self.ops.clone(), n_vars, n_params)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSetSignature {
    pub n_vars: usize,
    pub n_params: usize,
    pub ops: Vec<String>,
}
