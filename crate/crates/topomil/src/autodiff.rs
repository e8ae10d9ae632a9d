//! Reverse-mode differentiation on a per-forward-pass tape.
//!
//! A [`Tape`] records every operation of one forward pass; [`Node`] is a
//! cheap copyable handle into it. Calling [`Node::backward`] on a scalar
//! root propagates gradients to every recorded node with
//! `requires_grad = true`, accumulating (summing) along shared
//! subexpressions. The tape is dropped after the step; parameters live
//! outside it and are re-leased as leaves each pass.
//!
//! Everything is `f64`: the topological loss compares small distance
//! differences and 32-bit noise would contaminate gradient checks.
//! Broadcasting is limited to scalar-with-array; anything else needs an
//! explicit [`Node::reshape`].

use std::cell::RefCell;

use crate::tensor::Tensor;

/// Errors produced by tape operations.
#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank-{expected} operand, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: axis {axis} invalid for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: cannot reduce over zero elements")]
    EmptyReduce { op: &'static str },
    #[error("{op}: index ({i}, {j}) out of range for shape {shape:?}")]
    IndexOutOfRange {
        op: &'static str,
        i: usize,
        j: usize,
        shape: Vec<usize>,
    },
    #[error("cross_entropy: target class {target} out of range for {classes} classes")]
    ClassOutOfRange { target: usize, classes: usize },
    #[error("backward: root must be a single scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnKind {
    Relu,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Square,
    Neg,
}

/// How a binary op pairs its operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pairing {
    /// Equal shapes, elementwise.
    Elementwise,
    /// Left operand is a single element broadcast over the right.
    ScalarLeft,
    /// Right operand is a single element broadcast over the left.
    ScalarRight,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul {
        a: usize,
        b: usize,
    },
    Binary {
        kind: BinKind,
        pairing: Pairing,
        a: usize,
        b: usize,
    },
    Unary {
        kind: UnKind,
        a: usize,
    },
    Scale {
        a: usize,
        c: f64,
    },
    Shift {
        a: usize,
    },
    Sum {
        a: usize,
        axis: Option<usize>,
    },
    Mean {
        a: usize,
        axis: Option<usize>,
        count: usize,
    },
    Max {
        a: usize,
        argmax: Vec<usize>,
    },
    Softmax {
        a: usize,
    },
    CrossEntropy {
        logits: usize,
        target: usize,
    },
    PairwiseSqDist {
        points: usize,
    },
    Gather {
        matrix: usize,
        pairs: Vec<(usize, usize)>,
    },
    Reshape {
        a: usize,
    },
}

struct Cell {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records one forward pass. Confined to a single thread by construction.
pub struct Tape {
    cells: RefCell<Vec<Cell>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Node<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Node<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            cells: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Node<'_> {
        let mut cells = self.cells.borrow_mut();
        let id = cells.len();
        let grad = vec![0.0; data.len()];
        cells.push(Cell {
            shape,
            data,
            grad,
            requires_grad,
            op,
        });
        Node { tape: self, id }
    }

    /// A leaf that accumulates gradient (a leased parameter).
    pub fn leaf(&self, value: &Tensor) -> Node<'_> {
        self.push(value.shape().to_vec(), value.data().to_vec(), true, Op::Leaf)
    }

    /// A leaf that never accumulates gradient (data, targets, detached values).
    pub fn constant(&self, value: &Tensor) -> Node<'_> {
        self.push(value.shape().to_vec(), value.data().to_vec(), false, Op::Leaf)
    }

    /// A rank-0 constant.
    pub fn scalar(&self, value: f64) -> Node<'_> {
        self.constant(&Tensor::scalar(value))
    }

    /// Number of recorded nodes (diagnostic).
    pub fn len(&self) -> usize {
        self.cells.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn requires(&self, id: usize) -> bool {
        self.cells.borrow()[id].requires_grad
    }
}

/// Numerically stable softmax of a slice (max-subtraction).
fn softmax_raw(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// Squared pairwise Euclidean distances of `n` row vectors of width `d`.
///
/// Upper triangle is computed and mirrored, so the result is symmetric
/// bit-for-bit with an exactly zero diagonal. This kernel is shared with the
/// persistence module so both sides of the topological loss see identical
/// floating-point values.
pub(crate) fn pairwise_sq(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..d {
                let diff = data[i * d + k] - data[j * d + k];
                s += diff * diff;
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// out += g · bᵀ where g is m×n and b is k×n; out is m×k.
fn accum_matmul_nt(out: &mut [f64], g: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let mut s = 0.0;
            for j in 0..n {
                s += g[i * n + j] * b[p * n + j];
            }
            out[i * k + p] += s;
        }
    }
}

/// out += aᵀ · g where a is m×k and g is m×n; out is k×n.
fn accum_matmul_tn(out: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let grow = &g[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * grow[j];
            }
        }
    }
}

impl<'t> Node<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.cells.borrow()[self.id].shape.clone()
    }

    pub fn len(&self) -> usize {
        self.tape.cells.borrow()[self.id].data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    /// The forward value, detached.
    pub fn value(&self) -> Tensor {
        let cells = self.tape.cells.borrow();
        let c = &cells[self.id];
        Tensor::new(c.shape.clone(), c.data.clone())
    }

    /// The single element of a scalar node.
    pub fn item(&self) -> f64 {
        let cells = self.tape.cells.borrow();
        let c = &cells[self.id];
        assert_eq!(c.data.len(), 1, "item() on node of shape {:?}", c.shape);
        c.data[0]
    }

    /// The accumulated gradient, detached.
    pub fn grad(&self) -> Tensor {
        let cells = self.tape.cells.borrow();
        let c = &cells[self.id];
        Tensor::new(c.shape.clone(), c.grad.clone())
    }

    fn same_tape(&self, other: &Node<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "nodes belong to different tapes"
        );
    }

    pub fn matmul(self, rhs: Node<'t>) -> Result<Node<'t>> {
        self.same_tape(&rhs);
        let (ls, rs) = (self.shape(), rhs.shape());
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ls,
                rhs: rs,
            });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let out = {
            let cells = self.tape.cells.borrow();
            matmul_raw(&cells[self.id].data, &cells[rhs.id].data, m, k, n)
        };
        let rg = self.requires_grad() || rhs.requires_grad();
        Ok(self.tape.push(
            vec![m, n],
            out,
            rg,
            Op::Matmul {
                a: self.id,
                b: rhs.id,
            },
        ))
    }

    fn binary(self, rhs: Node<'t>, kind: BinKind, name: &'static str) -> Result<Node<'t>> {
        self.same_tape(&rhs);
        let (ls, rs) = (self.shape(), rhs.shape());
        let (ll, rl) = (self.len(), rhs.len());
        let pairing = if ls == rs {
            Pairing::Elementwise
        } else if rl == 1 {
            Pairing::ScalarRight
        } else if ll == 1 {
            Pairing::ScalarLeft
        } else {
            return Err(AutodiffError::ShapeMismatch {
                op: name,
                lhs: ls,
                rhs: rs,
            });
        };
        let (shape, data) = {
            let cells = self.tape.cells.borrow();
            let a = &cells[self.id].data;
            let b = &cells[rhs.id].data;
            let apply = |x: f64, y: f64| match kind {
                BinKind::Add => x + y,
                BinKind::Sub => x - y,
                BinKind::Mul => x * y,
                BinKind::Div => x / y,
            };
            match pairing {
                Pairing::Elementwise => (
                    ls.clone(),
                    a.iter().zip(b.iter()).map(|(&x, &y)| apply(x, y)).collect(),
                ),
                Pairing::ScalarRight => (ls.clone(), a.iter().map(|&x| apply(x, b[0])).collect()),
                Pairing::ScalarLeft => (rs.clone(), b.iter().map(|&y| apply(a[0], y)).collect()),
            }
        };
        let rg = self.requires_grad() || rhs.requires_grad();
        Ok(self.tape.push(
            shape,
            data,
            rg,
            Op::Binary {
                kind,
                pairing,
                a: self.id,
                b: rhs.id,
            },
        ))
    }

    pub fn add(self, rhs: Node<'t>) -> Result<Node<'t>> {
        self.binary(rhs, BinKind::Add, "add")
    }

    pub fn sub(self, rhs: Node<'t>) -> Result<Node<'t>> {
        self.binary(rhs, BinKind::Sub, "sub")
    }

    pub fn mul(self, rhs: Node<'t>) -> Result<Node<'t>> {
        self.binary(rhs, BinKind::Mul, "mul")
    }

    pub fn div(self, rhs: Node<'t>) -> Result<Node<'t>> {
        self.binary(rhs, BinKind::Div, "div")
    }

    fn unary(self, kind: UnKind, name: &'static str) -> Result<Node<'t>> {
        let (shape, data) = {
            let cells = self.tape.cells.borrow();
            let a = &cells[self.id].data;
            if matches!(kind, UnKind::Log | UnKind::Sqrt) {
                if let Some(v) = a.iter().find(|v| **v < 0.0) {
                    return Err(AutodiffError::Domain {
                        op: name,
                        detail: format!("negative input {v}"),
                    });
                }
            }
            let out = a
                .iter()
                .map(|&x| match kind {
                    UnKind::Relu => {
                        if x > 0.0 {
                            x
                        } else {
                            0.0
                        }
                    }
                    UnKind::Tanh => x.tanh(),
                    UnKind::Exp => x.exp(),
                    UnKind::Log => x.ln(),
                    UnKind::Sqrt => x.sqrt(),
                    UnKind::Square => x * x,
                    UnKind::Neg => -x,
                })
                .collect();
            (cells[self.id].shape.clone(), out)
        };
        let rg = self.requires_grad();
        Ok(self
            .tape
            .push(shape, data, rg, Op::Unary { kind, a: self.id }))
    }

    pub fn relu(self) -> Node<'t> {
        self.unary(UnKind::Relu, "relu").expect("relu is total")
    }

    pub fn tanh(self) -> Node<'t> {
        self.unary(UnKind::Tanh, "tanh").expect("tanh is total")
    }

    pub fn exp(self) -> Node<'t> {
        self.unary(UnKind::Exp, "exp").expect("exp is total")
    }

    pub fn log(self) -> Result<Node<'t>> {
        self.unary(UnKind::Log, "log")
    }

    pub fn sqrt(self) -> Result<Node<'t>> {
        self.unary(UnKind::Sqrt, "sqrt")
    }

    pub fn square(self) -> Node<'t> {
        self.unary(UnKind::Square, "square").expect("square is total")
    }

    pub fn neg(self) -> Node<'t> {
        self.unary(UnKind::Neg, "negate").expect("negate is total")
    }

    /// Multiply every element by a compile-time constant.
    pub fn scale(self, c: f64) -> Node<'t> {
        let (shape, data) = {
            let cells = self.tape.cells.borrow();
            let cell = &cells[self.id];
            (cell.shape.clone(), cell.data.iter().map(|&x| c * x).collect())
        };
        let rg = self.requires_grad();
        self.tape.push(shape, data, rg, Op::Scale { a: self.id, c })
    }

    /// Add a constant to every element.
    pub fn shift(self, c: f64) -> Node<'t> {
        let (shape, data) = {
            let cells = self.tape.cells.borrow();
            let cell = &cells[self.id];
            (cell.shape.clone(), cell.data.iter().map(|&x| x + c).collect())
        };
        let rg = self.requires_grad();
        self.tape.push(shape, data, rg, Op::Shift { a: self.id })
    }

    fn reduce_layout(&self, axis: Option<usize>, op: &'static str) -> Result<ReduceLayout> {
        let shape = self.shape();
        match axis {
            None => {
                if self.len() == 0 {
                    return Err(AutodiffError::EmptyReduce { op });
                }
                Ok(ReduceLayout {
                    out_shape: Vec::new(),
                    groups: 1,
                    group_len: self.len(),
                    stride: 1,
                    outer: 1,
                })
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(AutodiffError::InvalidAxis { op, axis: ax, shape });
                }
                if shape[ax] == 0 {
                    return Err(AutodiffError::EmptyReduce { op });
                }
                match shape.len() {
                    1 => Ok(ReduceLayout {
                        out_shape: Vec::new(),
                        groups: 1,
                        group_len: shape[0],
                        stride: 1,
                        outer: 1,
                    }),
                    2 => {
                        let (r, c) = (shape[0], shape[1]);
                        if ax == 0 {
                            // reduce over rows: one group per column
                            Ok(ReduceLayout {
                                out_shape: vec![c],
                                groups: c,
                                group_len: r,
                                stride: c,
                                outer: 1,
                            })
                        } else {
                            // reduce over columns: one group per row
                            Ok(ReduceLayout {
                                out_shape: vec![r],
                                groups: r,
                                group_len: c,
                                stride: 1,
                                outer: c,
                            })
                        }
                    }
                    _ => Err(AutodiffError::RankMismatch {
                        op,
                        expected: 2,
                        shape,
                    }),
                }
            }
        }
    }

    /// Flat input indices of reduction group `g`, in deterministic order.
    fn group_indices(layout: &ReduceLayout, g: usize) -> impl Iterator<Item = usize> + '_ {
        let base = if layout.outer == 1 { g } else { g * layout.outer };
        (0..layout.group_len).map(move |e| base + e * layout.stride)
    }

    pub fn sum(self, axis: Option<usize>) -> Result<Node<'t>> {
        let layout = self.reduce_layout(axis, "sum")?;
        let data = {
            let cells = self.tape.cells.borrow();
            let a = &cells[self.id].data;
            (0..layout.groups)
                .map(|g| Self::group_indices(&layout, g).map(|i| a[i]).sum())
                .collect()
        };
        let rg = self.requires_grad();
        Ok(self
            .tape
            .push(layout.out_shape, data, rg, Op::Sum { a: self.id, axis }))
    }

    pub fn mean(self, axis: Option<usize>) -> Result<Node<'t>> {
        let layout = self.reduce_layout(axis, "mean")?;
        let count = layout.group_len;
        let data = {
            let cells = self.tape.cells.borrow();
            let a = &cells[self.id].data;
            (0..layout.groups)
                .map(|g| Self::group_indices(&layout, g).map(|i| a[i]).sum::<f64>() / count as f64)
                .collect()
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(
            layout.out_shape,
            data,
            rg,
            Op::Mean {
                a: self.id,
                axis,
                count,
            },
        ))
    }

    /// Max reduction. Returns the reduced node together with the flat input
    /// index of each selected element; ties break toward the lowest index.
    /// Backward routes the whole gradient to the selected elements only.
    pub fn max(self, axis: Option<usize>) -> Result<(Node<'t>, Vec<usize>)> {
        let layout = self.reduce_layout(axis, "max")?;
        let (data, argmax) = {
            let cells = self.tape.cells.borrow();
            let a = &cells[self.id].data;
            let mut vals = Vec::with_capacity(layout.groups);
            let mut args = Vec::with_capacity(layout.groups);
            for g in 0..layout.groups {
                let mut it = Self::group_indices(&layout, g);
                let first = it.next().expect("group_len >= 1");
                let mut best = a[first];
                let mut best_i = first;
                for i in it {
                    if a[i] > best {
                        best = a[i];
                        best_i = i;
                    }
                }
                vals.push(best);
                args.push(best_i);
            }
            (vals, args)
        };
        let rg = self.requires_grad();
        let node = self.tape.push(
            layout.out_shape,
            data,
            rg,
            Op::Max {
                a: self.id,
                argmax: argmax.clone(),
            },
        );
        Ok((node, argmax))
    }

    /// Softmax of a rank-1 node, computed with max-subtraction.
    pub fn softmax(self) -> Result<Node<'t>> {
        let shape = self.shape();
        if shape.len() != 1 {
            return Err(AutodiffError::RankMismatch {
                op: "softmax",
                expected: 1,
                shape,
            });
        }
        let data = {
            let cells = self.tape.cells.borrow();
            softmax_raw(&cells[self.id].data)
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(shape, data, rg, Op::Softmax { a: self.id }))
    }

    /// `-log softmax(logits)[target]` for a rank-1 logits node.
    pub fn cross_entropy(self, target: usize) -> Result<Node<'t>> {
        let shape = self.shape();
        if shape.len() != 1 {
            return Err(AutodiffError::RankMismatch {
                op: "cross_entropy",
                expected: 1,
                shape,
            });
        }
        if target >= shape[0] {
            return Err(AutodiffError::ClassOutOfRange {
                target,
                classes: shape[0],
            });
        }
        let loss = {
            let cells = self.tape.cells.borrow();
            let x = &cells[self.id].data;
            let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - x[target]
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(
            Vec::new(),
            vec![loss],
            rg,
            Op::CrossEntropy {
                logits: self.id,
                target,
            },
        ))
    }

    /// Squared pairwise Euclidean distances of the rows of a rank-2 node.
    /// Symmetric with an exactly zero diagonal.
    pub fn pairwise_sq_dist(self) -> Result<Node<'t>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(AutodiffError::RankMismatch {
                op: "pairwise_sq_dist",
                expected: 2,
                shape,
            });
        }
        let (n, d) = (shape[0], shape[1]);
        let data = {
            let cells = self.tape.cells.borrow();
            pairwise_sq(&cells[self.id].data, n, d)
        };
        let rg = self.requires_grad();
        Ok(self
            .tape
            .push(vec![n, n], data, rg, Op::PairwiseSqDist { points: self.id }))
    }

    /// Selects matrix entries at the given (row, col) pairs as a vector.
    /// Backward scatters the gradient back to exactly those entries.
    pub fn gather(self, pairs: &[(usize, usize)]) -> Result<Node<'t>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(AutodiffError::RankMismatch {
                op: "gather",
                expected: 2,
                shape,
            });
        }
        let (r, c) = (shape[0], shape[1]);
        for &(i, j) in pairs {
            if i >= r || j >= c {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather",
                    i,
                    j,
                    shape,
                });
            }
        }
        let data = {
            let cells = self.tape.cells.borrow();
            let m = &cells[self.id].data;
            pairs.iter().map(|&(i, j)| m[i * c + j]).collect()
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(
            vec![pairs.len()],
            data,
            rg,
            Op::Gather {
                matrix: self.id,
                pairs: pairs.to_vec(),
            },
        ))
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Node<'t>> {
        let new_len: usize = shape.iter().product();
        if new_len != self.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(),
                rhs: shape.to_vec(),
            });
        }
        let data = {
            let cells = self.tape.cells.borrow();
            cells[self.id].data.clone()
        };
        let rg = self.requires_grad();
        Ok(self
            .tape
            .push(shape.to_vec(), data, rg, Op::Reshape { a: self.id }))
    }

    /// Backpropagates from this scalar root, accumulating gradients into
    /// every node with `requires_grad = true`. The root's own gradient is
    /// exactly 1.0 afterwards.
    pub fn backward(self) -> Result<()> {
        {
            let cells = self.tape.cells.borrow();
            if cells[self.id].data.len() != 1 {
                return Err(AutodiffError::NonScalarRoot {
                    shape: cells[self.id].shape.clone(),
                });
            }
        }
        let mut cells = self.tape.cells.borrow_mut();
        cells[self.id].grad[0] = 1.0;
        for id in (0..=self.id).rev() {
            if !cells[id].requires_grad {
                continue;
            }
            // Clone the small pieces we need so parent grads can be mutated
            // freely (parents may alias, e.g. x.mul(x)).
            let op = cells[id].op.clone();
            let g = cells[id].grad.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = (cells[id].shape[0], cells[a].shape[1]);
                    let n = cells[id].shape[1];
                    let a_data = cells[a].data.clone();
                    let b_data = cells[b].data.clone();
                    if cells[a].requires_grad {
                        accum_matmul_nt(&mut cells[a].grad, &g, &b_data, m, k, n);
                    }
                    if cells[b].requires_grad {
                        accum_matmul_tn(&mut cells[b].grad, &a_data, &g, m, k, n);
                    }
                }
                Op::Binary {
                    kind,
                    pairing,
                    a,
                    b,
                } => {
                    let a_data = cells[a].data.clone();
                    let b_data = cells[b].data.clone();
                    let aval = |i: usize| match pairing {
                        Pairing::ScalarLeft => a_data[0],
                        _ => a_data[i],
                    };
                    let bval = |i: usize| match pairing {
                        Pairing::ScalarRight => b_data[0],
                        _ => b_data[i],
                    };
                    if cells[a].requires_grad {
                        let ga = &mut cells[a].grad;
                        for i in 0..g.len() {
                            let contrib = match kind {
                                BinKind::Add => g[i],
                                BinKind::Sub => g[i],
                                BinKind::Mul => g[i] * bval(i),
                                BinKind::Div => g[i] / bval(i),
                            };
                            match pairing {
                                Pairing::ScalarLeft => ga[0] += contrib,
                                _ => ga[i] += contrib,
                            }
                        }
                    }
                    if cells[b].requires_grad {
                        let gb = &mut cells[b].grad;
                        for i in 0..g.len() {
                            let contrib = match kind {
                                BinKind::Add => g[i],
                                BinKind::Sub => -g[i],
                                BinKind::Mul => g[i] * aval(i),
                                BinKind::Div => -g[i] * aval(i) / (bval(i) * bval(i)),
                            };
                            match pairing {
                                Pairing::ScalarRight => gb[0] += contrib,
                                _ => gb[i] += contrib,
                            }
                        }
                    }
                }
                Op::Unary { kind, a } => {
                    if cells[a].requires_grad {
                        let x = cells[a].data.clone();
                        let y = cells[id].data.clone();
                        let ga = &mut cells[a].grad;
                        for i in 0..g.len() {
                            ga[i] += g[i]
                                * match kind {
                                    UnKind::Relu => {
                                        if x[i] > 0.0 {
                                            1.0
                                        } else {
                                            0.0
                                        }
                                    }
                                    UnKind::Tanh => 1.0 - y[i] * y[i],
                                    UnKind::Exp => y[i],
                                    UnKind::Log => 1.0 / x[i],
                                    UnKind::Sqrt => 0.5 / y[i],
                                    UnKind::Square => 2.0 * x[i],
                                    UnKind::Neg => -1.0,
                                };
                        }
                    }
                }
                Op::Scale { a, c } => {
                    if cells[a].requires_grad {
                        let ga = &mut cells[a].grad;
                        for i in 0..g.len() {
                            ga[i] += c * g[i];
                        }
                    }
                }
                Op::Shift { a } | Op::Reshape { a } => {
                    if cells[a].requires_grad {
                        let ga = &mut cells[a].grad;
                        for i in 0..g.len() {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Sum { a, axis } | Op::Mean { a, axis, .. } => {
                    if cells[a].requires_grad {
                        let scale = match cells[id].op {
                            Op::Mean { count, .. } => 1.0 / count as f64,
                            _ => 1.0,
                        };
                        let shape = cells[a].shape.clone();
                        let ga = &mut cells[a].grad;
                        match (axis, shape.len()) {
                            (None, _) | (Some(_), 1) => {
                                for v in ga.iter_mut() {
                                    *v += scale * g[0];
                                }
                            }
                            (Some(0), 2) => {
                                let c = shape[1];
                                for (i, v) in ga.iter_mut().enumerate() {
                                    *v += scale * g[i % c];
                                }
                            }
                            (Some(_), 2) => {
                                let c = shape[1];
                                for (i, v) in ga.iter_mut().enumerate() {
                                    *v += scale * g[i / c];
                                }
                            }
                            _ => unreachable!("validated at forward"),
                        }
                    }
                }
                Op::Max { a, argmax } => {
                    if cells[a].requires_grad {
                        let ga = &mut cells[a].grad;
                        for (out_i, &in_i) in argmax.iter().enumerate() {
                            ga[in_i] += g[out_i];
                        }
                    }
                }
                Op::Softmax { a } => {
                    if cells[a].requires_grad {
                        let y = cells[id].data.clone();
                        let dot: f64 = g.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
                        let ga = &mut cells[a].grad;
                        for i in 0..g.len() {
                            ga[i] += y[i] * (g[i] - dot);
                        }
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    if cells[logits].requires_grad {
                        let probs = softmax_raw(&cells[logits].data);
                        let ga = &mut cells[logits].grad;
                        for i in 0..probs.len() {
                            let one_hot = if i == target { 1.0 } else { 0.0 };
                            ga[i] += g[0] * (probs[i] - one_hot);
                        }
                    }
                }
                Op::PairwiseSqDist { points } => {
                    if cells[points].requires_grad {
                        let x = cells[points].data.clone();
                        let n = cells[id].shape[0];
                        let d = cells[points].shape[1];
                        let gx = &mut cells[points].grad;
                        for i in 0..n {
                            for j in (i + 1)..n {
                                let go = g[i * n + j] + g[j * n + i];
                                if go == 0.0 {
                                    continue;
                                }
                                for k in 0..d {
                                    let diff = x[i * d + k] - x[j * d + k];
                                    gx[i * d + k] += 2.0 * go * diff;
                                    gx[j * d + k] -= 2.0 * go * diff;
                                }
                            }
                        }
                    }
                }
                Op::Gather { matrix, pairs } => {
                    if cells[matrix].requires_grad {
                        let c = cells[matrix].shape[1];
                        let gm = &mut cells[matrix].grad;
                        for (e, &(i, j)) in pairs.iter().enumerate() {
                            gm[i * c + j] += g[e];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

struct ReduceLayout {
    out_shape: Vec<usize>,
    groups: usize,
    group_len: usize,
    stride: usize,
    outer: usize,
}
