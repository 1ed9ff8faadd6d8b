//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s in execution
//! order, so node ids are topologically sorted by construction. Calling
//! [`Tape::backward`] on a scalar node replays the tape in reverse and
//! returns the adjoint of every node reachable from the root.
//!
//! Subgradient conventions:
//!
//! * `relu` at exactly zero takes the inactive branch (adjoint 0).
//! * extrema route the whole adjoint to the first attaining element of each
//!   group, in row-major order of the input.
//! * `sqrt` at exactly zero has adjoint 0.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradCheckReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which extremum [`Tape::reduce_extrema`] computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Affine { x: Var, scale: f64 },
    Relu(Var),
    Extrema { x: Var, source: Vec<usize> },
    Sum(Var),
    SumSquares(Var),
    Sqrt(Var),
    Reshape(Var),
    Conv2dSame { x: Var, kernel: Var, bias: Var },
    MaxAvgPool { x: Var, argmax: Vec<usize> },
    SoftmaxCrossEntropy { logits: Var, probs: Vec<f64>, labels: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    branch_signature: u64,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            branch_signature: FNV_OFFSET,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        value.ensure_finite("leaf")?;
        Ok(self.push(value, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Ids of the inputs of `v`, in argument order.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::AddRowBias(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::Transpose(x)
            | Op::Affine { x, .. }
            | Op::Relu(x)
            | Op::Extrema { x, .. }
            | Op::Sum(x)
            | Op::SumSquares(x)
            | Op::Sqrt(x)
            | Op::Reshape(x)
            | Op::MaxAvgPool { x, .. } => vec![*x],
            Op::Conv2dSame { x, kernel, bias } => vec![*x, *kernel, *bias],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }

    /// Hash of every branch decision taken so far: relu activity pattern and
    /// the elements selected by extrema. Two evaluations of the same program
    /// with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        self.branch_signature
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn record_branch(&mut self, decision: u64) {
        self.branch_signature = (self.branch_signature ^ decision).wrapping_mul(FNV_PRIME);
    }

    /// Propagates adjoints from the scalar `root` back to every node it depends on.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adjoints: Vec<Option<Tensor>> = Vec::new();
        adjoints.resize_with(root.0 + 1, || None);
        adjoints[root.0] = Some(Tensor::ones(root_value.shape()));

        for i in (0..=root.0).rev() {
            let Some(adj) = adjoints[i].take() else {
                continue;
            };
            ops::propagate(self, &self.nodes[i].op, &self.nodes[i].value, &adj, &mut adjoints);
            adjoints[i] = Some(adj);
        }
        Ok(Gradients { adjoints })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` if `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, with unreachable nodes reported as exact zeros.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Adds `contribution` into the adjoint slot of `v`, allocating zeros on first use.
pub(crate) fn adjoint_slot<'a>(
    adjoints: &'a mut [Option<Tensor>],
    v: Var,
    shape: &[usize],
) -> &'a mut [f64] {
    adjoints[v.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}
