//! Minimal reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! Every value on the tape is a matrix; vectors are `1×n` rows and scalars
//! are `1×1`. A [`Tape`] records operations in creation order, so a single
//! reverse sweep in [`Tape::backward`] visits each node after all of its
//! consumers.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{s, ArcArray2, Array2, Axis, Zip};

pub type Tensor = ArcArray2<f64>;

const LAYER_NORM_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    OuterSum(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    DivScalar(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ShiftRows(Var, isize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Norm(Var),
    CosineDistance(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of a computation, replayed backwards for gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when `v` did not influence the root.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.push_shared(value.into_shared(), op)
    }

    fn push_shared(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_shared(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) + self.value(row);
        self.push(out, Op::AddRow(a, row))
    }

    /// `out[i][j] = col[i] + row[j]` for a `m×1` column and a `1×n` row.
    pub fn outer_sum(&mut self, col: Var, row: Var) -> Var {
        let out = self.value(col) + self.value(row);
        self.push(out, Op::OuterSum(col, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    /// Divides every entry of `a` by the `1×1` node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let d = self.scalar(s);
        let out = self.value(a) / d;
        self.push(out, Op::DivScalar(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self
            .value(a)
            .mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_owned();
        for mut row in out.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous row"));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_owned();
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.mapv(|x| (x - max).exp()).sum().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// Row-wise layer normalization with learned `1×n` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (m, n) = xv.dim();
        let mut xhat = Array2::zeros((m, n));
        let mut inv_std = Vec::with_capacity(m);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start))
    }

    /// `out[t] = a[t + offset]`, zero where `t + offset` falls outside the rows of `a`.
    pub fn shift_rows(&mut self, a: Var, offset: isize) -> Var {
        let av = self.value(a);
        let (m, n) = av.dim();
        let mut out = Array2::zeros((m, n));
        for t in 0..m {
            let src = t as isize + offset;
            if src >= 0 && (src as usize) < m {
                out.row_mut(t).assign(&av.row(src as usize));
            }
        }
        self.push(out, Op::ShiftRows(a, offset))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.len(), rows * cols, "reshape: element count differs");
        let flat: Vec<f64> = av.iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), flat).expect("reshape");
        self.push(out, Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Array2::from_elem((1, 1), av.sum() / av.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Frobenius norm as a `1×1` node.
    pub fn norm(&mut self, a: Var) -> Var {
        let n = self.value(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Array2::from_elem((1, 1), n), Op::Norm(a))
    }

    /// Adjusted cosine distance `(1 - cos(u, v)) / 2` between two equally shaped nodes.
    pub fn cosine_distance(&mut self, u: Var, v: Var) -> Var {
        let (dot, nu, nv) = dot_norms(self.value(u), self.value(v));
        let cos = dot / (nu.max(NORM_FLOOR) * nv.max(NORM_FLOOR));
        self.push(
            Array2::from_elem((1, 1), (1.0 - cos) / 2.0),
            Op::CosineDistance(u, v),
        )
    }

    /// Sum of nodes, folded left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Var {
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// Hash of the on/off pattern of every piecewise-linear unit on the tape.
    ///
    /// Two evaluations with equal signatures lie on the same linear piece, so a
    /// central difference between them is a valid derivative estimate.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(a) | Op::LeakyRelu(a, _) = node.op {
                for &x in self.nodes[a.0].value.iter() {
                    (x > 0.0).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Reverse sweep from a `1×1` root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward root must be a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.dot(&val(*b).t()));
                accumulate(grads, *b, val(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::OuterSum(col, row) => {
                accumulate(grads, *col, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g * val(*b));
                accumulate(grads, *b, g * val(*a));
            }
            Op::Scale(a, c) => accumulate(grads, *a, g * *c),
            Op::DivScalar(a, s) => {
                let d = val(*s)[[0, 0]];
                accumulate(grads, *a, g / d);
                let num = (g * val(*a)).sum();
                accumulate(grads, *s, Array2::from_elem((1, 1), -num / (d * d)));
            }
            Op::Relu(a) => {
                let mut out = g.clone();
                Zip::from(&mut out)
                    .and(val(*a))
                    .for_each(|o, &x| if x <= 0.0 { *o = 0.0 });
                accumulate(grads, *a, out);
            }
            Op::LeakyRelu(a, slope) => {
                let mut out = g.clone();
                Zip::from(&mut out)
                    .and(val(*a))
                    .for_each(|o, &x| if x <= 0.0 { *o *= slope });
                accumulate(grads, *a, out);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut out = g.clone();
                Zip::from(&mut out).and(y).for_each(|o, &y| *o *= y * (1.0 - y));
                accumulate(grads, *a, out);
            }
            Op::Exp(a) => accumulate(grads, *a, g * &node.value),
            Op::Log(a) => accumulate(grads, *a, g / val(*a)),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Array2::zeros(y.dim());
                for ((mut o, gr), yr) in out.rows_mut().into_iter().zip(g.rows()).zip(y.rows()) {
                    let dot: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut o)
                        .and(&gr)
                        .and(&yr)
                        .for_each(|o, &gv, &yv| *o = yv * (gv - dot));
                }
                accumulate(grads, *a, out);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Array2::zeros(y.dim());
                for ((mut o, gr), yr) in out.rows_mut().into_iter().zip(g.rows()).zip(y.rows()) {
                    let total = gr.sum();
                    Zip::from(&mut o)
                        .and(&gr)
                        .and(&yr)
                        .for_each(|o, &gv, &yv| *o = gv - yv.exp() * total);
                }
                accumulate(grads, *a, out);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = val(*gamma);
                accumulate(grads, *gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dxhat = g * gam;
                let n = xhat.ncols() as f64;
                let mut dx = Array2::zeros(xhat.dim());
                for i in 0..xhat.nrows() {
                    let dr = dxhat.row(i);
                    let xr = xhat.row(i);
                    let sum_d = dr.sum();
                    let sum_dx: f64 = dr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
                    for j in 0..xhat.ncols() {
                        dx[[i, j]] = inv_std[i] / n * (n * dr[j] - sum_d - xr[j] * sum_dx);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.t().to_owned()),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    accumulate(grads, p, g.slice(s![.., off..off + w]).to_owned());
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let mut out = Array2::zeros(val(*a).dim());
                out.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                accumulate(grads, *a, out);
            }
            Op::SliceRows(a, start) => {
                let mut out = Array2::zeros(val(*a).dim());
                out.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                accumulate(grads, *a, out);
            }
            Op::ShiftRows(a, offset) => {
                let m = g.nrows();
                let mut out = Array2::zeros(g.dim());
                for t in 0..m {
                    let src = t as isize + offset;
                    if src >= 0 && (src as usize) < m {
                        let mut row = out.row_mut(src as usize);
                        row += &g.row(t);
                    }
                }
                accumulate(grads, *a, out);
            }
            Op::Reshape(a) => {
                let flat: Vec<f64> = g.iter().copied().collect();
                let out = Array2::from_shape_vec(val(*a).dim(), flat).expect("reshape grad");
                accumulate(grads, *a, out);
            }
            Op::Sum(a) => accumulate(grads, *a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let av = val(*a);
                accumulate(
                    grads,
                    *a,
                    Array2::from_elem(av.dim(), g[[0, 0]] / av.len() as f64),
                );
            }
            Op::Norm(a) => {
                let n = node.value[[0, 0]];
                if n > 0.0 {
                    accumulate(grads, *a, val(*a) * (g[[0, 0]] / n));
                }
            }
            Op::CosineDistance(u, v) => {
                let (uv, vv) = (val(*u), val(*v));
                let (dot, nu, nv) = dot_norms(uv, vv);
                let (nu, nv) = (nu.max(NORM_FLOOR), nv.max(NORM_FLOOR));
                let cos = dot / (nu * nv);
                // d dist = -1/2 d cos
                let c = -0.5 * g[[0, 0]];
                let du = (vv / (nu * nv) - uv * (cos / (nu * nu))) * c;
                let dv = (uv / (nu * nv) - vv * (cos / (nv * nv))) * c;
                accumulate(grads, *u, du);
                accumulate(grads, *v, dv);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

fn dot_norms(u: &Tensor, v: &Tensor) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    (dot, uu.sqrt(), vv.sqrt())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
