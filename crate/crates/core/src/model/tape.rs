//! A minimal reverse-mode automatic differentiation tape over [`Matrix`].
//!
//! Operations are evaluated eagerly as they are recorded; node indices are
//! therefore a topological order, and [`Tape::backward`] walks them in
//! reverse. Only the operations the encoders and losses need are provided.

use super::tensor::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Floor applied to student probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

enum Op {
    Leaf,
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    Scatter {
        src: Var,
        index: Vec<usize>,
        weight: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    RowAbsSum(Var),
    RowNorm2(Var),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    KlRows {
        logits: Var,
        teacher: Matrix,
        student: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    /// A differentiable input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Rows `index[i]` of `src`, stacked.
    pub fn gather(&mut self, src: Var, index: Vec<usize>) -> Var {
        let s = self.value(src);
        let cols = s.cols();
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in &index {
            out.extend_from_slice(s.row(i));
        }
        let value = Matrix::from_vec(index.len(), cols, out);
        self.push(value, Op::Gather { src, index })
    }

    /// `out[index[i]] += weight[i] * src[i]` into `rows` zero rows, in order of `i`.
    pub fn scatter(&mut self, src: Var, index: Vec<usize>, weight: Vec<f64>, rows: usize) -> Var {
        let s = self.value(src);
        assert_eq!(s.rows(), index.len());
        assert_eq!(index.len(), weight.len());
        let mut out = Matrix::zeros(rows, s.cols());
        for (i, (&dst, &w)) in index.iter().zip(&weight).enumerate() {
            for (o, &x) in out.row_mut(dst).iter_mut().zip(s.row(i)) {
                *o += w * x;
            }
        }
        self.push(out, Op::Scatter { src, index, weight })
    }

    /// `x · wᵀ`: every row of `x` transformed by the square-or-rectangular `w`.
    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let (xm, wm) = (self.value(x), self.value(w));
        assert_eq!(xm.cols(), wm.cols(), "linear: inner dimension mismatch");
        let mut out = Matrix::zeros(xm.rows(), wm.rows());
        for i in 0..xm.rows() {
            let xr = xm.row(i);
            for (o, y) in out.row_mut(i).iter_mut().enumerate() {
                *y = dot(xr, wm.row(o));
            }
        }
        self.push(out, Op::Linear { x, w })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.shape(), bm.shape(), "elementwise shape mismatch");
        let data = am.data().iter().zip(bm.data()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(am.rows(), am.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let am = self.value(a);
        Matrix::from_vec(am.rows(), am.cols(), am.data().iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.map(a, |x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.map(a, |x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Per-row L1 norm, as a column.
    pub fn row_abs_sum(&mut self, a: Var) -> Var {
        let v = self.row_reduce(a, |r| r.iter().map(|x| x.abs()).sum());
        self.push(v, Op::RowAbsSum(a))
    }

    /// Per-row L2 norm, as a column.
    pub fn row_norm2(&mut self, a: Var) -> Var {
        let v = self.row_reduce(a, |r| r.iter().map(|x| x * x).sum::<f64>().sqrt());
        self.push(v, Op::RowNorm2(a))
    }

    /// Per-row sum, as a column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.row_reduce(a, |r| r.iter().sum());
        self.push(v, Op::RowSum(a))
    }

    fn row_reduce(&self, a: Var, f: impl Fn(&[f64]) -> f64) -> Matrix {
        let am = self.value(a);
        Matrix::from_vec(am.rows(), 1, (0..am.rows()).map(|i| f(am.row(i))).collect())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    /// Mean over all elements; zero for an empty input.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let s = if m.is_empty() {
            0.0
        } else {
            m.data().iter().sum::<f64>() / m.len() as f64
        };
        self.push(Matrix::scalar(s), Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a).clone().reshaped(rows, cols);
        self.push(v, Op::Reshape(a))
    }

    /// Row-wise `KL(teacher ‖ softmax(logits))` as a column.
    ///
    /// `teacher` rows are probability vectors treated as constants. Student
    /// probabilities are floored at [`PROB_FLOOR`] before the logarithm;
    /// terms with zero teacher mass contribute nothing.
    pub fn kl_rows(&mut self, logits: Var, teacher: Matrix) -> Var {
        let z = self.value(logits);
        assert_eq!(z.shape(), teacher.shape(), "kl_rows: shape mismatch");
        let mut student = Matrix::zeros(z.rows(), z.cols());
        let mut out = Vec::with_capacity(z.rows());
        for i in 0..z.rows() {
            softmax_into(z.row(i), student.row_mut(i));
            out.push(kl_divergence(teacher.row(i), student.row(i)));
        }
        let value = Matrix::from_vec(z.rows(), 1, out);
        self.push(
            value,
            Op::KlRows {
                logits,
                teacher,
                student,
            },
        )
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut acc = |v: Var, m: Matrix| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Gather { src, index } => {
                    let s = self.value(*src);
                    let mut d = Matrix::zeros(s.rows(), s.cols());
                    for (i, &r) in index.iter().enumerate() {
                        for (o, &x) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(*src, d);
                }
                Op::Scatter { src, index, weight } => {
                    let s = self.value(*src);
                    let mut d = Matrix::zeros(s.rows(), s.cols());
                    for (i, (&dst, &w)) in index.iter().zip(weight).enumerate() {
                        for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(dst)) {
                            *o = w * x;
                        }
                    }
                    acc(*src, d);
                }
                Op::Linear { x, w } => {
                    let (xm, wm) = (self.value(*x), self.value(*w));
                    let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                    let mut dw = Matrix::zeros(wm.rows(), wm.cols());
                    for i in 0..xm.rows() {
                        let gi = g.row(i);
                        let xi = xm.row(i);
                        let dxi = dx.row_mut(i);
                        for (o, &go) in gi.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            for (d, &wv) in dxi.iter_mut().zip(wm.row(o)) {
                                *d += go * wv;
                            }
                            for (d, &xv) in dw.row_mut(o).iter_mut().zip(xi) {
                                *d += go * xv;
                            }
                        }
                    }
                    acc(*x, dx);
                    acc(*w, dw);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    let neg = negate(&g);
                    acc(*a, g);
                    acc(*b, neg);
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    acc(*a, elementwise(&g, bm, |x, y| x * y));
                    acc(*b, elementwise(&g, am, |x, y| x * y));
                }
                Op::Scale(a, c) => acc(*a, map(&g, |x| c * x)),
                Op::AddScalar(a) => acc(*a, g),
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, elementwise(&g, y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(*a, elementwise(&g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::RowAbsSum(a) => {
                    let x = self.value(*a);
                    acc(*a, row_broadcast(x, &g, |xv, gv| gv * sign(xv)));
                }
                Op::RowNorm2(a) => {
                    let x = self.value(*a);
                    let norms = &node.value;
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let n = norms.get(i, 0);
                        if n > 0.0 {
                            let gn = g.get(i, 0) / n;
                            for (o, &xv) in d.row_mut(i).iter_mut().zip(x.row(i)) {
                                *o = gn * xv;
                            }
                        }
                    }
                    acc(*a, d);
                }
                Op::RowSum(a) => {
                    let x = self.value(*a);
                    acc(*a, row_broadcast(x, &g, |_, gv| gv));
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    let gv = g.get(0, 0);
                    acc(*a, Matrix::from_vec(x.rows(), x.cols(), vec![gv; x.len()]));
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    if !x.is_empty() {
                        let gv = g.get(0, 0) / x.len() as f64;
                        acc(*a, Matrix::from_vec(x.rows(), x.cols(), vec![gv; x.len()]));
                    }
                }
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(*a, g.reshaped(r, c));
                }
                Op::KlRows {
                    logits,
                    teacher,
                    student,
                } => {
                    let mut d = Matrix::zeros(student.rows(), student.cols());
                    for i in 0..student.rows() {
                        let (p, q) = (teacher.row(i), student.row(i));
                        let upstream = g.get(i, 0);
                        // dL/dq_j, zero where the floor is active or p_j = 0.
                        let dq: Vec<f64> = p
                            .iter()
                            .zip(q)
                            .map(|(&pj, &qj)| if pj > 0.0 && qj > PROB_FLOOR { -pj / qj } else { 0.0 })
                            .collect();
                        let inner: f64 = q.iter().zip(&dq).map(|(a, b)| a * b).sum();
                        for (j, o) in d.row_mut(i).iter_mut().enumerate() {
                            *o = upstream * q[j] * (dq[j] - inner);
                        }
                    }
                    acc(*logits, d);
                }
            }
        }
        Gradients { grads }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn negate(m: &Matrix) -> Matrix {
    map(m, |x| -x)
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.data().iter().map(|&x| f(x)).collect())
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

/// `out[i][j] = f(x[i][j], g[i][0])`.
fn row_broadcast(x: &Matrix, g: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let gv = g.get(i, 0);
        for (o, &xv) in out.row_mut(i).iter_mut().zip(x.row(i)) {
            *o = f(xv, gv);
        }
    }
    out
}

/// Numerically stable softmax of `z` into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    out
}

/// `Σ_j p_j ln(p_j / max(q_j, PROB_FLOOR))`, skipping `p_j = 0` terms.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pj, _)| pj > 0.0)
        .map(|(&pj, &qj)| pj * (pj.ln() - qj.max(PROB_FLOOR).ln()))
        .sum()
}
