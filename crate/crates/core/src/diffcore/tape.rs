//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Tape`] records every operation of one forward evaluation as a node
//! holding its value. Nodes are appended in evaluation order, so the tape
//! index order is already a topological order and [`Tape::backward`] only
//! has to walk it in reverse.
//!
//! Leaves are either constants or variables. Gradients are propagated only
//! through nodes that depend on at least one variable, which keeps frozen
//! networks (inverse problems) and data inputs (training) cheap.
//!
//! Shape errors inside the tape are programming errors and panic with a
//! descriptive message; public model entry points validate shapes before
//! recording anything.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Constant,
    Variable,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Sqrt(Var),
    RowSum(Var),
    ColSum(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    Clamp(Var, f64, f64),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph for one forward evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Variable, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.dim(), (1, 1), "scalar() on a non-scalar node");
        value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul: {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let out = va.dot(vb);
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::MatMul(a, b), flag)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.ncols(),
            "matmul_t: {:?} x {:?}ᵀ",
            va.dim(),
            vb.dim()
        );
        let out = va.dot(&vb.t());
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::MatMulT(a, b), flag)
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (vx, vr) = (self.value(x), self.value(row));
        assert!(
            vr.nrows() == 1 && vr.ncols() == vx.ncols(),
            "add_row: {:?} + {:?}",
            vx.dim(),
            vr.dim()
        );
        let out = vx + vr;
        let flag = self.grad_flag(&[x, row]);
        self.push(out, Op::AddRow(x, row), flag)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: shape mismatch"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let out = self.value(a) + self.value(b);
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::Add(a, b), flag)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let out = self.value(a) - self.value(b);
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::Sub(a, b), flag)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let out = self.value(a) * self.value(b);
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::Mul(a, b), flag)
    }

    /// Scales row `i` of an `m x n` matrix by entry `i` of an `m x 1` column.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (vx, vc) = (self.value(x), self.value(col));
        assert!(
            vc.ncols() == 1 && vc.nrows() == vx.nrows(),
            "mul_col: {:?} * {:?}",
            vx.dim(),
            vc.dim()
        );
        let out = vx * vc;
        let flag = self.grad_flag(&[x, col]);
        self.push(out, Op::MulCol(x, col), flag)
    }

    /// Scales column `j` of an `m x n` matrix by entry `j` of a `1 x n` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (vx, vr) = (self.value(x), self.value(row));
        assert!(
            vr.nrows() == 1 && vr.ncols() == vx.ncols(),
            "mul_row: {:?} * {:?}",
            vx.dim(),
            vr.dim()
        );
        let out = vx * vr;
        let flag = self.grad_flag(&[x, row]);
        self.push(out, Op::MulRow(x, row), flag)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Scale(a, factor), flag)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { 0.0 });
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Relu(a), flag)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self
            .value(a)
            .mapv(|x| if x > 0.0 { x } else { slope * x });
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::LeakyRelu(a, slope), flag)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Square(a), flag)
    }

    /// Element-wise square root. The derivative at zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::sqrt);
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Sqrt(a), flag)
    }

    /// `m x n -> m x 1`
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::RowSum(a), flag)
    }

    /// `m x n -> 1 x n`
    pub fn col_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::ColSum(a), flag)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Sum(a), flag)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Array2::from_elem((1, 1), v.sum() / v.len() as f64);
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Mean(a), flag)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.nrows(), vb.nrows(), "concat_cols: row mismatch");
        let out = ndarray::concatenate(Axis(1), &[va.view(), vb.view()])
            .expect("row counts checked above");
        let flag = self.grad_flag(&[a, b]);
        self.push(out, Op::ConcatCols(a, b), flag)
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input was
    /// inside the closed interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).mapv(|x| x.clamp(lo, hi));
        let flag = self.grad_flag(&[a]);
        self.push(out, Op::Clamp(a, lo, hi), flag)
    }

    /// Reverse sweep from a `1 x 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).dim();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match node.op {
            Op::Constant | Op::Variable => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    let vb = self.value(b);
                    let acc = slot(grads, a, self.value(a).dim());
                    general_mat_mul(1.0, g, &vb.t(), 1.0, acc);
                }
                if wants(b) {
                    let va = self.value(a);
                    let acc = slot(grads, b, self.value(b).dim());
                    general_mat_mul(1.0, &va.t(), g, 1.0, acc);
                }
            }
            Op::MatMulT(a, b) => {
                if wants(a) {
                    let vb = self.value(b);
                    let acc = slot(grads, a, self.value(a).dim());
                    general_mat_mul(1.0, g, vb, 1.0, acc);
                }
                if wants(b) {
                    let va = self.value(a);
                    let acc = slot(grads, b, self.value(b).dim());
                    general_mat_mul(1.0, &g.t(), va, 1.0, acc);
                }
            }
            Op::AddRow(x, row) => {
                if wants(x) {
                    *slot(grads, x, g.dim()) += g;
                }
                if wants(row) {
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    *slot(grads, row, summed.dim()) += &summed;
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    *slot(grads, a, g.dim()) += g;
                }
                if wants(b) {
                    *slot(grads, b, g.dim()) += g;
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    *slot(grads, a, g.dim()) += g;
                }
                if wants(b) {
                    *slot(grads, b, g.dim()) -= g;
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let acc = slot(grads, a, g.dim());
                    Zip::from(acc)
                        .and(g)
                        .and(self.value(b))
                        .for_each(|acc, &g, &y| *acc += g * y);
                }
                if wants(b) {
                    let acc = slot(grads, b, g.dim());
                    Zip::from(acc)
                        .and(g)
                        .and(self.value(a))
                        .for_each(|acc, &g, &x| *acc += g * x);
                }
            }
            Op::MulCol(x, col) => {
                if wants(x) {
                    *slot(grads, x, g.dim()) += &(g * self.value(col));
                }
                if wants(col) {
                    let prod = (g * self.value(x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    *slot(grads, col, prod.dim()) += &prod;
                }
            }
            Op::MulRow(x, row) => {
                if wants(x) {
                    *slot(grads, x, g.dim()) += &(g * self.value(row));
                }
                if wants(row) {
                    let prod = (g * self.value(x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    *slot(grads, row, prod.dim()) += &prod;
                }
            }
            Op::Scale(a, factor) => {
                slot(grads, a, g.dim()).scaled_add(factor, g);
            }
            Op::Relu(a) => {
                let acc = slot(grads, a, g.dim());
                Zip::from(acc)
                    .and(g)
                    .and(self.value(a))
                    .for_each(|acc, &g, &x| {
                        if x > 0.0 {
                            *acc += g
                        }
                    });
            }
            Op::LeakyRelu(a, slope) => {
                let acc = slot(grads, a, g.dim());
                Zip::from(acc)
                    .and(g)
                    .and(self.value(a))
                    .for_each(|acc, &g, &x| *acc += if x > 0.0 { g } else { slope * g });
            }
            Op::Square(a) => {
                let acc = slot(grads, a, g.dim());
                Zip::from(acc)
                    .and(g)
                    .and(self.value(a))
                    .for_each(|acc, &g, &x| *acc += 2.0 * x * g);
            }
            Op::Sqrt(a) => {
                let acc = slot(grads, a, g.dim());
                Zip::from(acc)
                    .and(g)
                    .and(&node.value)
                    .for_each(|acc, &g, &s| {
                        if s > 0.0 {
                            *acc += g / (2.0 * s)
                        }
                    });
            }
            Op::RowSum(a) => {
                *slot(grads, a, self.value(a).dim()) += g;
            }
            Op::ColSum(a) => {
                *slot(grads, a, self.value(a).dim()) += g;
            }
            Op::Sum(a) => {
                let g0 = g[[0, 0]];
                slot(grads, a, self.value(a).dim()).mapv_inplace(|x| x + g0);
            }
            Op::Mean(a) => {
                let dim = self.value(a).dim();
                let g0 = g[[0, 0]] / (dim.0 * dim.1) as f64;
                slot(grads, a, dim).mapv_inplace(|x| x + g0);
            }
            Op::ConcatCols(a, b) => {
                let split = self.value(a).ncols();
                if wants(a) {
                    let part = g.slice(ndarray::s![.., ..split]);
                    *slot(grads, a, part.dim()) += &part;
                }
                if wants(b) {
                    let part = g.slice(ndarray::s![.., split..]);
                    *slot(grads, b, part.dim()) += &part;
                }
            }
            Op::Clamp(a, lo, hi) => {
                let acc = slot(grads, a, g.dim());
                Zip::from(acc)
                    .and(g)
                    .and(self.value(a))
                    .for_each(|acc, &g, &x| {
                        if x >= lo && x <= hi {
                            *acc += g
                        }
                    });
            }
        }
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, dim: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Array2::zeros(dim))
}

/// Gradients of one scalar loss with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; nodes the loss does not depend on get zeros.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
