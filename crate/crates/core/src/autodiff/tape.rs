//! Define-by-run reverse-mode differentiation tape.
//!
//! Every forward op appends a node holding its output values, shape and the
//! record needed for the backward rule. The tape is rebuilt each step; nodes
//! are created in topological order by construction, so the backward pass is
//! a single reverse sweep.
//!
//! Shape rules are strict: the only broadcasts are scalar * tensor ([`Tape::scale`]),
//! row-wise bias add, and per-row division by a rank-1 divisor. Everything
//! else is a shape error.

use crate::error::TapeError;

use super::kernels;

pub type NodeId = usize;

/// Handle to a node on a [`Tape`]. Values and shape live in the tape arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    pub(crate) id: NodeId,
}

impl Tensor {
    pub fn id(&self) -> NodeId {
        self.id
    }
}

/// Forward op kinds accepted by [`Tape::forward_op`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Matmul,
    Add,
    Sub,
    ElementwiseMul,
    Div,
    Scale,
    Sin,
    Cos,
    Exp,
    Relu,
    Square,
    Abs,
    Sqrt,
    Powf,
    SoftmaxRows,
    ConcatLastAxis,
    GatherRows,
    Transpose,
    Reshape,
    ReduceSum,
    ReduceMean,
    ReduceMaxAxis,
    L2NormRows,
}

impl OpKind {
    /// Every kind, for gradient-check sweeps.
    pub const ALL: [OpKind; 23] = [
        OpKind::Matmul,
        OpKind::Add,
        OpKind::Sub,
        OpKind::ElementwiseMul,
        OpKind::Div,
        OpKind::Scale,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Exp,
        OpKind::Relu,
        OpKind::Square,
        OpKind::Abs,
        OpKind::Sqrt,
        OpKind::Powf,
        OpKind::SoftmaxRows,
        OpKind::ConcatLastAxis,
        OpKind::GatherRows,
        OpKind::Transpose,
        OpKind::Reshape,
        OpKind::ReduceSum,
        OpKind::ReduceMean,
        OpKind::ReduceMaxAxis,
        OpKind::L2NormRows,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::ElementwiseMul => "elementwise_mul",
            OpKind::Div => "div",
            OpKind::Scale => "scale",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::Exp => "exp",
            OpKind::Relu => "relu",
            OpKind::Square => "square",
            OpKind::Abs => "abs",
            OpKind::Sqrt => "sqrt",
            OpKind::Powf => "powf",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::ConcatLastAxis => "concat_last_axis",
            OpKind::GatherRows => "gather_rows",
            OpKind::Transpose => "transpose",
            OpKind::Reshape => "reshape",
            OpKind::ReduceSum => "reduce_sum",
            OpKind::ReduceMean => "reduce_mean",
            OpKind::ReduceMaxAxis => "reduce_max_axis",
            OpKind::L2NormRows => "l2_norm_rows",
        }
    }
}

/// Optional attributes for [`Tape::forward_op`].
#[derive(Clone, Debug, Default)]
pub struct OpAttrs {
    pub scalar: Option<f64>,
    pub axis: Option<usize>,
    pub rows: Option<Vec<usize>>,
    pub shape: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
enum Record {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Add { a: NodeId, b: NodeId, row_bias: bool },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Div { a: NodeId, b: NodeId, per_row: bool },
    Scale { a: NodeId, c: f64 },
    Sin { a: NodeId },
    Cos { a: NodeId },
    Exp { a: NodeId },
    Relu { a: NodeId },
    Square { a: NodeId },
    Abs { a: NodeId },
    Sqrt { a: NodeId },
    Powf { a: NodeId, exponent: f64 },
    SoftmaxRows { a: NodeId },
    Concat { inputs: Vec<NodeId>, axis: usize },
    GatherRows { a: NodeId, rows: Vec<usize> },
    Reshape { a: NodeId },
    ReduceSum { a: NodeId, axis: Option<usize> },
    ReduceMean { a: NodeId, axis: Option<usize> },
    ReduceMaxAxis { a: NodeId, argmax: Vec<usize> },
    L2NormRows { a: NodeId },
}

struct Node {
    record: Record,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Per-leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `t`, if any path reached it.
    pub fn get(&self, t: Tensor) -> Option<&[f64]> {
        self.grads.get(t.id).and_then(|g| g.as_deref())
    }

    /// Gradient of the loss w.r.t. `t`; zeros when no path reached it.
    pub fn get_or_zeros(&self, t: Tensor, tape: &Tape) -> Vec<f64> {
        match self.get(t) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.len(t)],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.id].shape
    }

    pub fn values(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].values
    }

    pub fn len(&self, t: Tensor) -> usize {
        self.nodes[t.id].values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self, t: Tensor) -> f64 {
        debug_assert_eq!(self.len(t), 1);
        self.nodes[t.id].values[0]
    }

    // Op outputs may be non-finite during a diverging step; only leaves
    // reject non-finite values. The training loop guards on the loss.
    fn push(&mut self, record: Record, shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape_len(&shape), values.len());
        let id = self.nodes.len();
        self.nodes.push(Node {
            record,
            shape,
            values,
        });
        Tensor { id }
    }

    /// Register an input or parameter tensor. Values must be finite.
    pub fn leaf(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor, TapeError> {
        if shape_len(shape) != values.len() {
            return Err(TapeError::BadShape {
                shape: shape.to_vec(),
                len: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(TapeError::Domain {
                op: "leaf",
                detail: format!("non-finite input value {bad}"),
            });
        }
        Ok(self.push(Record::Leaf, shape.to_vec(), values))
    }

    pub fn scalar(&mut self, v: f64) -> Result<Tensor, TapeError> {
        self.leaf(vec![v], &[1])
    }

    fn rows_cols(&self, t: Tensor, op: &'static str) -> Result<(usize, usize), TapeError> {
        let s = self.shape(t);
        if s.len() != 2 {
            return Err(TapeError::ShapeMismatch {
                op,
                lhs: s.to_vec(),
                rhs: vec![],
            });
        }
        Ok((s[0], s[1]))
    }

    // ---- binary ops ----

    /// `[m,k] @ [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        let (m, k) = self.rows_cols(a, "matmul")?;
        let (k2, n) = self.rows_cols(b, "matmul")?;
        if k != k2 {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let values = kernels::matmul(self.values(a), self.values(b), m, k, n);
        Ok(self.push(Record::Matmul { a: a.id, b: b.id }, vec![m, n], values))
    }

    /// Rank-2 transpose.
    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        let (r, c) = self.rows_cols(a, "transpose")?;
        let values = kernels::transpose(self.values(a), r, c);
        Ok(self.push(Record::Transpose { a: a.id }, vec![c, r], values))
    }

    /// Elementwise add, or row-wise bias add when `b` is rank-1 with
    /// `b.len == a.cols`.
    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        if self.shape(a) == self.shape(b) {
            let values = kernels::add(self.values(a), self.values(b));
            let shape = self.shape(a).to_vec();
            return Ok(self.push(
                Record::Add {
                    a: a.id,
                    b: b.id,
                    row_bias: false,
                },
                shape,
                values,
            ));
        }
        // row-wise bias: [r, c] + [c]
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() == 2 && sb.len() == 1 && sb[0] == sa[1] {
            let values = kernels::add_rowwise(self.values(a), self.values(b), sa[0], sa[1]);
            return Ok(self.push(
                Record::Add {
                    a: a.id,
                    b: b.id,
                    row_bias: true,
                },
                sa,
                values,
            ));
        }
        Err(TapeError::ShapeMismatch {
            op: "add",
            lhs: sa,
            rhs: sb,
        })
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        if self.shape(a) != self.shape(b) {
            return Err(TapeError::ShapeMismatch {
                op: "sub",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let values = kernels::sub(self.values(a), self.values(b));
        let shape = self.shape(a).to_vec();
        Ok(self.push(Record::Sub { a: a.id, b: b.id }, shape, values))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        if self.shape(a) != self.shape(b) {
            return Err(TapeError::ShapeMismatch {
                op: "elementwise_mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let values = kernels::mul(self.values(a), self.values(b));
        let shape = self.shape(a).to_vec();
        Ok(self.push(Record::Mul { a: a.id, b: b.id }, shape, values))
    }

    /// Elementwise division, or per-row division when `b` is rank-1 with
    /// `b.len == a.rows`. Zero divisors are a domain violation.
    pub fn div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        if self.values(b).iter().any(|&v| v == 0.0) {
            return Err(TapeError::Domain {
                op: "div",
                detail: "zero divisor".into(),
            });
        }
        if self.shape(a) == self.shape(b) {
            let values: Vec<f64> = self
                .values(a)
                .iter()
                .zip(self.values(b))
                .map(|(x, y)| x / y)
                .collect();
            let shape = self.shape(a).to_vec();
            return Ok(self.push(
                Record::Div {
                    a: a.id,
                    b: b.id,
                    per_row: false,
                },
                shape,
                values,
            ));
        }
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() == 2 && sb.len() == 1 && sb[0] == sa[0] {
            let values = kernels::div_per_row(self.values(a), self.values(b), sa[0], sa[1]);
            return Ok(self.push(
                Record::Div {
                    a: a.id,
                    b: b.id,
                    per_row: true,
                },
                sa,
                values,
            ));
        }
        Err(TapeError::ShapeMismatch {
            op: "div",
            lhs: sa,
            rhs: sb,
        })
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Result<Tensor, TapeError> {
        if !c.is_finite() {
            return Err(TapeError::Domain {
                op: "scale",
                detail: format!("non-finite scalar {c}"),
            });
        }
        let values = kernels::scale(self.values(a), c);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Record::Scale { a: a.id, c }, shape, values))
    }

    // ---- unary maps ----

    fn unary(
        &mut self,
        a: Tensor,
        f: impl Fn(f64) -> f64,
        rec: impl Fn(NodeId) -> Record,
    ) -> Tensor {
        let values = kernels::map(self.values(a), f);
        let shape = self.shape(a).to_vec();
        self.push(rec(a.id), shape, values)
    }

    pub fn sin(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        Ok(self.unary(a, f64::sin, |a| Record::Sin { a }))
    }

    pub fn cos(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        Ok(self.unary(a, f64::cos, |a| Record::Cos { a }))
    }

    pub fn exp(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        if let Some(&bad) = self.values(a).iter().find(|&&v| v > 700.0) {
            return Err(TapeError::Domain {
                op: "exp",
                detail: format!("argument {bad} would overflow"),
            });
        }
        Ok(self.unary(a, f64::exp, |a| Record::Exp { a }))
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        Ok(self.unary(a, |x| x.max(0.0), |a| Record::Relu { a }))
    }

    pub fn square(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        Ok(self.unary(a, |x| x * x, |a| Record::Square { a }))
    }

    pub fn abs(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        Ok(self.unary(a, f64::abs, |a| Record::Abs { a }))
    }

    /// Domain: `x >= 0`. The derivative at exactly 0 is taken as 0.
    pub fn sqrt(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        if let Some(&bad) = self.values(a).iter().find(|&&v| v < 0.0) {
            return Err(TapeError::Domain {
                op: "sqrt",
                detail: format!("negative argument {bad}"),
            });
        }
        Ok(self.unary(a, f64::sqrt, |a| Record::Sqrt { a }))
    }

    /// `x^p` for `x >= 0` (`x > 0` when `p < 1`).
    pub fn powf(&mut self, a: Tensor, exponent: f64) -> Result<Tensor, TapeError> {
        for &v in self.values(a) {
            if v < 0.0 || (v == 0.0 && exponent < 1.0) {
                return Err(TapeError::Domain {
                    op: "powf",
                    detail: format!("argument {v} outside domain for exponent {exponent}"),
                });
            }
        }
        Ok(self.unary(a, |x| x.powf(exponent), |a| Record::Powf { a, exponent }))
    }

    pub fn softmax_rows(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        let (r, c) = self.rows_cols(a, "softmax_rows")?;
        let values = kernels::softmax_rows(self.values(a), r, c);
        Ok(self.push(Record::SoftmaxRows { a: a.id }, vec![r, c], values))
    }

    // ---- structure ops ----

    /// Concatenate rank-2 tensors along `axis` (0 = stack rows, 1 = widen rows).
    pub fn concat(&mut self, inputs: &[Tensor], axis: usize) -> Result<Tensor, TapeError> {
        if inputs.is_empty() {
            return Err(TapeError::Arity {
                op: "concat",
                expected: 1,
                got: 0,
            });
        }
        if axis > 1 {
            return Err(TapeError::BadAxis { axis, rank: 2 });
        }
        let (r0, c0) = self.rows_cols(inputs[0], "concat")?;
        let mut rows = r0;
        let mut cols = c0;
        for &t in &inputs[1..] {
            let (r, c) = self.rows_cols(t, "concat")?;
            if axis == 0 {
                if c != c0 {
                    return Err(TapeError::ShapeMismatch {
                        op: "concat",
                        lhs: vec![r0, c0],
                        rhs: vec![r, c],
                    });
                }
                rows += r;
            } else {
                if r != r0 {
                    return Err(TapeError::ShapeMismatch {
                        op: "concat",
                        lhs: vec![r0, c0],
                        rhs: vec![r, c],
                    });
                }
                cols += c;
            }
        }
        let mut values = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &t in inputs {
                values.extend_from_slice(self.values(t));
            }
        } else {
            for i in 0..rows {
                for &t in inputs {
                    let c = self.shape(t)[1];
                    values.extend_from_slice(&self.values(t)[i * c..(i + 1) * c]);
                }
            }
        }
        let ids = inputs.iter().map(|t| t.id).collect();
        Ok(self.push(
            Record::Concat { inputs: ids, axis },
            vec![rows, cols],
            values,
        ))
    }

    /// Concatenate along the last axis (axis 1 for rank-2 inputs).
    pub fn concat_last_axis(&mut self, inputs: &[Tensor]) -> Result<Tensor, TapeError> {
        self.concat(inputs, 1)
    }

    /// Select rows of a rank-2 tensor; indices may repeat.
    pub fn gather_rows(&mut self, a: Tensor, rows: Vec<usize>) -> Result<Tensor, TapeError> {
        let (r, c) = self.rows_cols(a, "gather_rows")?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(TapeError::RowOutOfRange {
                index: bad,
                rows: r,
            });
        }
        let src = self.values(a);
        let mut values = Vec::with_capacity(rows.len() * c);
        for &i in &rows {
            values.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let n = rows.len();
        Ok(self.push(Record::GatherRows { a: a.id, rows }, vec![n, c], values))
    }

    /// Relabel the shape without touching values.
    pub fn reshape(&mut self, a: Tensor, shape: &[usize]) -> Result<Tensor, TapeError> {
        if shape_len(shape) != self.len(a) {
            return Err(TapeError::BadShape {
                shape: shape.to_vec(),
                len: self.len(a),
            });
        }
        let values = self.values(a).to_vec();
        Ok(self.push(Record::Reshape { a: a.id }, shape.to_vec(), values))
    }

    // ---- reductions ----

    fn reduce_axis_shape(&self, t: Tensor, axis: usize) -> Result<Vec<usize>, TapeError> {
        let s = self.shape(t);
        if axis >= s.len() {
            return Err(TapeError::BadAxis {
                axis,
                rank: s.len(),
            });
        }
        let mut out: Vec<usize> = s.to_vec();
        out.remove(axis);
        if out.is_empty() {
            out.push(1);
        }
        Ok(out)
    }

    fn reduce_sum_values(&self, t: Tensor, axis: Option<usize>) -> Result<Vec<f64>, TapeError> {
        let v = self.values(t);
        match axis {
            None => Ok(vec![kernels::sum(v)]),
            Some(ax) => {
                let s = self.shape(t);
                if s.len() != 2 {
                    return Err(TapeError::BadAxis {
                        axis: ax,
                        rank: s.len(),
                    });
                }
                let (r, c) = (s[0], s[1]);
                match ax {
                    0 => {
                        let mut out = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                out[j] += v[i * c + j];
                            }
                        }
                        Ok(out)
                    }
                    1 => {
                        let mut out = vec![0.0; r];
                        for i in 0..r {
                            out[i] = kernels::sum(&v[i * c..(i + 1) * c]);
                        }
                        Ok(out)
                    }
                    _ => Err(TapeError::BadAxis { axis: ax, rank: 2 }),
                }
            }
        }
    }

    /// Sum over the whole tensor (`axis = None`, shape `[1]`) or over one
    /// axis of a rank-2 tensor (the axis is removed).
    pub fn reduce_sum(&mut self, a: Tensor, axis: Option<usize>) -> Result<Tensor, TapeError> {
        let values = self.reduce_sum_values(a, axis)?;
        let shape = match axis {
            None => vec![1],
            Some(ax) => self.reduce_axis_shape(a, ax)?,
        };
        Ok(self.push(Record::ReduceSum { a: a.id, axis }, shape, values))
    }

    /// Mean counterpart of [`Tape::reduce_sum`].
    pub fn reduce_mean(&mut self, a: Tensor, axis: Option<usize>) -> Result<Tensor, TapeError> {
        let mut values = self.reduce_sum_values(a, axis)?;
        let denom = match axis {
            None => self.len(a) as f64,
            Some(ax) => self.shape(a)[ax] as f64,
        };
        for v in &mut values {
            *v /= denom;
        }
        let shape = match axis {
            None => vec![1],
            Some(ax) => self.reduce_axis_shape(a, ax)?,
        };
        Ok(self.push(Record::ReduceMean { a: a.id, axis }, shape, values))
    }

    /// Max over one axis of a rank-2 or rank-3 tensor; the axis is removed.
    /// Ties route the gradient to the first maximal element.
    pub fn reduce_max_axis(&mut self, a: Tensor, axis: usize) -> Result<Tensor, TapeError> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s.len() > 3 || s.len() < 2 {
            return Err(TapeError::BadAxis {
                axis,
                rank: s.len(),
            });
        }
        let v = self.values(a);
        // Treat the tensor as [pre, red, post]: `red` is the reduced extent.
        let red = s[axis];
        let pre: usize = s[..axis].iter().product();
        let post: usize = s[axis + 1..].iter().product();
        let mut values = Vec::with_capacity(pre * post);
        let mut argmax = Vec::with_capacity(pre * post);
        for p in 0..pre {
            for q in 0..post {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for r in 0..red {
                    let idx = (p * red + r) * post + q;
                    if v[idx] > best {
                        best = v[idx];
                        best_idx = idx;
                    }
                }
                values.push(best);
                argmax.push(best_idx);
            }
        }
        let shape = self.reduce_axis_shape(a, axis)?;
        Ok(self.push(Record::ReduceMaxAxis { a: a.id, argmax }, shape, values))
    }

    /// Euclidean norm of each row: `[r, c] -> [r]`.
    pub fn l2_norm_rows(&mut self, a: Tensor) -> Result<Tensor, TapeError> {
        let (r, c) = self.rows_cols(a, "l2_norm_rows")?;
        let values = kernels::l2_norm_rows(self.values(a), r, c);
        Ok(self.push(Record::L2NormRows { a: a.id }, vec![r], values))
    }

    // ---- generic dispatch ----

    /// Uniform entry point over [`OpKind`]; thin shim over the typed methods.
    ///
    /// Attribute conventions: `Scale`/`Powf` read `attrs.scalar`;
    /// `GatherRows` reads `attrs.rows`; `Reshape` reads `attrs.shape`;
    /// reductions read `attrs.axis` (required for `ReduceMaxAxis`).
    pub fn forward_op(
        &mut self,
        kind: OpKind,
        inputs: &[Tensor],
        attrs: &OpAttrs,
    ) -> Result<Tensor, TapeError> {
        let need = |n: usize| -> Result<(), TapeError> {
            if inputs.len() != n {
                Err(TapeError::Arity {
                    op: kind.name(),
                    expected: n,
                    got: inputs.len(),
                })
            } else {
                Ok(())
            }
        };
        match kind {
            OpKind::Matmul => {
                need(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Add => {
                need(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Sub => {
                need(2)?;
                self.sub(inputs[0], inputs[1])
            }
            OpKind::ElementwiseMul => {
                need(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Div => {
                need(2)?;
                self.div(inputs[0], inputs[1])
            }
            OpKind::Scale => {
                need(1)?;
                let c = attrs.scalar.ok_or(TapeError::MissingAttr {
                    op: "scale",
                    attr: "scalar",
                })?;
                self.scale(inputs[0], c)
            }
            OpKind::Sin => {
                need(1)?;
                self.sin(inputs[0])
            }
            OpKind::Cos => {
                need(1)?;
                self.cos(inputs[0])
            }
            OpKind::Exp => {
                need(1)?;
                self.exp(inputs[0])
            }
            OpKind::Relu => {
                need(1)?;
                self.relu(inputs[0])
            }
            OpKind::Square => {
                need(1)?;
                self.square(inputs[0])
            }
            OpKind::Abs => {
                need(1)?;
                self.abs(inputs[0])
            }
            OpKind::Sqrt => {
                need(1)?;
                self.sqrt(inputs[0])
            }
            OpKind::Powf => {
                need(1)?;
                let c = attrs.scalar.ok_or(TapeError::MissingAttr {
                    op: "powf",
                    attr: "scalar",
                })?;
                self.powf(inputs[0], c)
            }
            OpKind::SoftmaxRows => {
                need(1)?;
                self.softmax_rows(inputs[0])
            }
            OpKind::ConcatLastAxis => self.concat_last_axis(inputs),
            OpKind::GatherRows => {
                need(1)?;
                let rows = attrs.rows.clone().ok_or(TapeError::MissingAttr {
                    op: "gather_rows",
                    attr: "rows",
                })?;
                self.gather_rows(inputs[0], rows)
            }
            OpKind::Transpose => {
                need(1)?;
                self.transpose(inputs[0])
            }
            OpKind::Reshape => {
                need(1)?;
                let shape = attrs.shape.clone().ok_or(TapeError::MissingAttr {
                    op: "reshape",
                    attr: "shape",
                })?;
                self.reshape(inputs[0], &shape)
            }
            OpKind::ReduceSum => {
                need(1)?;
                self.reduce_sum(inputs[0], attrs.axis)
            }
            OpKind::ReduceMean => {
                need(1)?;
                self.reduce_mean(inputs[0], attrs.axis)
            }
            OpKind::ReduceMaxAxis => {
                need(1)?;
                let axis = attrs.axis.ok_or(TapeError::MissingAttr {
                    op: "reduce_max_axis",
                    attr: "axis",
                })?;
                self.reduce_max_axis(inputs[0], axis)
            }
            OpKind::L2NormRows => {
                need(1)?;
                self.l2_norm_rows(inputs[0])
            }
        }
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Leaves the tape intact; gradients of
    /// leaves not reachable from the loss read back as zeros.
    pub fn backward(&self, loss: Tensor) -> Result<Gradients, TapeError> {
        if self.len(loss) != 1 {
            return Err(TapeError::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let acc = |grads: &mut [Option<Vec<f64>>], target: NodeId, contrib: &[f64]| {
            match &mut grads[target] {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                None => grads[target] = Some(contrib.to_vec()),
            }
        };
        let node = &self.nodes[id];
        match &node.record {
            Record::Leaf => {}
            Record::Matmul { a, b } => {
                let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let n = self.nodes[*b].shape[1];
                // dA = G @ B^T
                let bt = kernels::transpose(&self.nodes[*b].values, k, n);
                let da = kernels::matmul(g, &bt, m, n, k);
                acc(grads, *a, &da);
                // dB = A^T @ G
                let at = kernels::transpose(&self.nodes[*a].values, m, k);
                let db = kernels::matmul(&at, g, k, m, n);
                acc(grads, *b, &db);
            }
            Record::Transpose { a } => {
                let (r, c) = (node.shape[0], node.shape[1]);
                let gt = kernels::transpose(g, r, c);
                acc(grads, *a, &gt);
            }
            Record::Add { a, b, row_bias } => {
                acc(grads, *a, g);
                if *row_bias {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let mut gb = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] += g[i * c + j];
                        }
                    }
                    acc(grads, *b, &gb);
                } else {
                    acc(grads, *b, g);
                }
            }
            Record::Sub { a, b } => {
                acc(grads, *a, g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                acc(grads, *b, &neg);
            }
            Record::Mul { a, b } => {
                let da = kernels::mul(g, &self.nodes[*b].values);
                acc(grads, *a, &da);
                let db = kernels::mul(g, &self.nodes[*a].values);
                acc(grads, *b, &db);
            }
            Record::Div { a, b, per_row } => {
                let av = &self.nodes[*a].values;
                let bv = &self.nodes[*b].values;
                if *per_row {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let da = kernels::div_per_row(g, bv, r, c);
                    acc(grads, *a, &da);
                    let mut db = vec![0.0; r];
                    for i in 0..r {
                        let mut s = 0.0;
                        for j in 0..c {
                            s += g[i * c + j] * av[i * c + j];
                        }
                        db[i] = -s / (bv[i] * bv[i]);
                    }
                    acc(grads, *b, &db);
                } else {
                    let da: Vec<f64> = g.iter().zip(bv).map(|(gi, bi)| gi / bi).collect();
                    acc(grads, *a, &da);
                    let db: Vec<f64> = g
                        .iter()
                        .zip(av.iter().zip(bv))
                        .map(|(gi, (ai, bi))| -gi * ai / (bi * bi))
                        .collect();
                    acc(grads, *b, &db);
                }
            }
            Record::Scale { a, c } => {
                let da = kernels::scale(g, *c);
                acc(grads, *a, &da);
            }
            Record::Sin { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| gi * xi.cos())
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Cos { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| -gi * xi.sin())
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Exp { a } => {
                let da = kernels::mul(g, &node.values);
                acc(grads, *a, &da);
            }
            Record::Relu { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Square { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| 2.0 * gi * xi)
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Abs { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| gi * xi.signum() * if *xi == 0.0 { 0.0 } else { 1.0 })
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Sqrt { a } => {
                // d/dx sqrt(x) = 1/(2 sqrt(x)); subgradient 0 at x = 0
                let da: Vec<f64> = g
                    .iter()
                    .zip(&node.values)
                    .map(|(gi, yi)| if *yi > 0.0 { gi / (2.0 * yi) } else { 0.0 })
                    .collect();
                acc(grads, *a, &da);
            }
            Record::Powf { a, exponent } => {
                let p = *exponent;
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].values)
                    .map(|(gi, xi)| {
                        if *xi == 0.0 {
                            if p == 1.0 {
                                *gi
                            } else {
                                0.0
                            }
                        } else {
                            gi * p * xi.powf(p - 1.0)
                        }
                    })
                    .collect();
                acc(grads, *a, &da);
            }
            Record::SoftmaxRows { a } => {
                // dx = y * (g - sum_j g_j y_j) per row
                let (r, c) = (node.shape[0], node.shape[1]);
                let y = &node.values;
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let dot: f64 = g[row.clone()]
                        .iter()
                        .zip(&y[row.clone()])
                        .map(|(gi, yi)| gi * yi)
                        .sum();
                    for j in i * c..(i + 1) * c {
                        da[j] = y[j] * (g[j] - dot);
                    }
                }
                acc(grads, *a, &da);
            }
            Record::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &inp in inputs {
                        let n = self.nodes[inp].values.len();
                        acc(grads, inp, &g[offset..offset + n]);
                        offset += n;
                    }
                } else {
                    let rows = node.shape[0];
                    let total_c = node.shape[1];
                    let mut col_off = 0;
                    for &inp in inputs {
                        let c = self.nodes[inp].shape[1];
                        let mut slice = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            slice.extend_from_slice(
                                &g[i * total_c + col_off..i * total_c + col_off + c],
                            );
                        }
                        acc(grads, inp, &slice);
                        col_off += c;
                    }
                }
            }
            Record::GatherRows { a, rows } => {
                let c = node.shape[1];
                let mut da = vec![0.0; self.nodes[*a].values.len()];
                for (out_i, &src_i) in rows.iter().enumerate() {
                    for j in 0..c {
                        da[src_i * c + j] += g[out_i * c + j];
                    }
                }
                acc(grads, *a, &da);
            }
            Record::Reshape { a } => {
                acc(grads, *a, g);
            }
            Record::ReduceSum { a, axis } => {
                let sa = &self.nodes[*a].shape;
                let da = broadcast_reduction_grad(g, sa, *axis, 1.0);
                acc(grads, *a, &da);
            }
            Record::ReduceMean { a, axis } => {
                let sa = &self.nodes[*a].shape;
                let denom = match axis {
                    None => self.nodes[*a].values.len() as f64,
                    Some(ax) => sa[*ax] as f64,
                };
                let da = broadcast_reduction_grad(g, sa, *axis, 1.0 / denom);
                acc(grads, *a, &da);
            }
            Record::ReduceMaxAxis { a, argmax, .. } => {
                let mut da = vec![0.0; self.nodes[*a].values.len()];
                for (gi, &idx) in g.iter().zip(argmax) {
                    da[idx] += gi;
                }
                acc(grads, *a, &da);
            }
            Record::L2NormRows { a } => {
                let (r, c) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let x = &self.nodes[*a].values;
                let y = &node.values;
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    if y[i] > 0.0 {
                        for j in 0..c {
                            da[i * c + j] = g[i] * x[i * c + j] / y[i];
                        }
                    }
                }
                acc(grads, *a, &da);
            }
        }
    }

    /// Recompute every non-leaf node from its inputs with the same kernels.
    /// Used by tests to pin replay determinism.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |id: NodeId| -> &[f64] { &out[id] };
            let values = match &node.record {
                Record::Leaf => node.values.clone(),
                Record::Matmul { a, b } => {
                    let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let n = self.nodes[*b].shape[1];
                    kernels::matmul(v(*a), v(*b), m, k, n)
                }
                Record::Transpose { a } => {
                    let (r, c) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    kernels::transpose(v(*a), r, c)
                }
                Record::Add { a, b, row_bias } => {
                    if *row_bias {
                        kernels::add_rowwise(v(*a), v(*b), node.shape[0], node.shape[1])
                    } else {
                        kernels::add(v(*a), v(*b))
                    }
                }
                Record::Sub { a, b } => kernels::sub(v(*a), v(*b)),
                Record::Mul { a, b } => kernels::mul(v(*a), v(*b)),
                Record::Div { a, b, per_row } => {
                    if *per_row {
                        kernels::div_per_row(v(*a), v(*b), node.shape[0], node.shape[1])
                    } else {
                        v(*a).iter().zip(v(*b)).map(|(x, y)| x / y).collect()
                    }
                }
                Record::Scale { a, c } => kernels::scale(v(*a), *c),
                Record::Sin { a } => kernels::map(v(*a), f64::sin),
                Record::Cos { a } => kernels::map(v(*a), f64::cos),
                Record::Exp { a } => kernels::map(v(*a), f64::exp),
                Record::Relu { a } => kernels::map(v(*a), |x| x.max(0.0)),
                Record::Square { a } => kernels::map(v(*a), |x| x * x),
                Record::Abs { a } => kernels::map(v(*a), f64::abs),
                Record::Sqrt { a } => kernels::map(v(*a), f64::sqrt),
                Record::Powf { a, exponent } => {
                    let p = *exponent;
                    kernels::map(v(*a), |x| x.powf(p))
                }
                Record::SoftmaxRows { a } => {
                    kernels::softmax_rows(v(*a), node.shape[0], node.shape[1])
                }
                _ => node.values.clone(),
            };
            out.push(values);
        }
        out
    }
}

fn broadcast_reduction_grad(
    g: &[f64],
    input_shape: &[usize],
    axis: Option<usize>,
    factor: f64,
) -> Vec<f64> {
    let total: usize = input_shape.iter().product();
    match axis {
        None => vec![g[0] * factor; total],
        Some(ax) => {
            let (r, c) = (input_shape[0], input_shape[1]);
            let mut da = vec![0.0; total];
            match ax {
                0 => {
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = g[j] * factor;
                        }
                    }
                }
                _ => {
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = g[i] * factor;
                        }
                    }
                }
            }
            da
        }
    }
}
