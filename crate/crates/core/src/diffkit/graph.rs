use super::special::{digamma_unchecked, lgamma_unchecked, trigamma_unchecked};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation that produced a node.
///
/// Binary elementwise ops accept equal shapes or a single-element operand on
/// either side; no other broadcasting is performed.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var, f64),
    MulScalar(Var, f64),
    Neg(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    /// `x^p` for a constant real exponent.
    Powf(Var, f64),
    /// `base^exponent` with both operands recorded.
    Pow(Var, Var),
    Relu(Var),
    Softplus(Var),
    Lgamma(Var),
    Digamma(Var),
    MatMul(Var, Var),
    Transpose(Var),
    /// `[B × n] + [n]` row-wise bias.
    AddBias(Var, Var),
    /// `x · wᵀ + b`
    Linear(Var, Var, Var),
    /// Cosine similarity of each input row with each weight row.
    Cosine(Var, Var),
    Sum(Var),
    Mean(Var),
    /// Row sums of a matrix, giving `[B × 1]`.
    SumRows(Var),
    /// One column of a matrix, giving `[B × 1]`.
    Column(Var, usize),
    /// Identity in the forward pass, blocks gradients in the backward pass.
    Detach(Var),
}

/// Recorded node: the op, its cached forward value, and whether any
/// trainable leaf feeds into it.
#[derive(Debug, Clone)]
pub struct GradNode {
    pub op: OpKind,
    pub value: Tensor,
    pub requires_grad: bool,
}

/// Norm guard used by the cosine-similarity op.
pub const COSINE_EPS: f64 = 1e-8;

/// Append-only computation record.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<GradNode>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` if `v` does not influence the root or does
    /// not require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, or zeros of the given shape.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

enum Operand {
    Same,
    LeftScalar,
    RightScalar,
}

fn binary_layout(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Operand> {
    if a.same_shape(b) {
        Ok(Operand::Same)
    } else if a.is_scalar() {
        Ok(Operand::LeftScalar)
    } else if b.is_scalar() {
        Ok(Operand::RightScalar)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, layout: &Operand, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (shape, data) = match layout {
        Operand::Same => (
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Operand::LeftScalar => {
            let x = a.item();
            (b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
        }
        Operand::RightScalar => {
            let y = b.item();
            (a.shape().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
        }
    };
    Tensor::new(shape, data).expect("broadcast preserves element count")
}

fn as_matrix_dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

/// `C = op(A) · op(B)` with optional transposes, via strided dgemm.
fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = as_matrix_dims(a);
    let (br, bc) = as_matrix_dims(b);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, k2);
    let mut out = vec![0.0; m * n];
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: the pointers cover `m*k`, `k*n` and `m*n` elements with the
        // given strides, which are derived from the tensors' own dimensions.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::matrix(m, n, out).expect("gemm output size")
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    (0..t.rows())
        .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn domain_check(op: &'static str, t: &Tensor, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    match t.data().iter().position(|&v| !ok(v)) {
        None => Ok(()),
        Some(i) => Err(Error::domain(
            op,
            format!("{what}; element {i} is {}", t.data()[i]),
        )),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &GradNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: OpKind, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(GradNode {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(OpKind::Leaf, t, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(OpKind::Leaf, t, false)
    }

    fn unary(&mut self, x: Var, op: OpKind, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(op, value, rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: OpKind,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let layout = binary_layout(name, self.value(a), self.value(b))?;
        let value = zip_broadcast(self.value(a), self.value(b), &layout, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, OpKind::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, OpKind::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, OpKind::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        domain_check("div", self.value(b), |v| v != 0.0, "division by zero")?;
        self.binary("div", a, b, OpKind::Div(a, b), |x, y| x / y)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, OpKind::AddScalar(x, c), |v| v + c)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, OpKind::MulScalar(x, c), |v| v * c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, OpKind::Neg(x), |v| -v)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, OpKind::Abs(x), f64::abs)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, OpKind::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        domain_check("log", self.value(x), |v| v > 0.0, "log of non-positive value")?;
        Ok(self.unary(x, OpKind::Log(x), f64::ln))
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Result<Var> {
        if p.fract() != 0.0 {
            domain_check("powf", self.value(x), |v| v >= 0.0, "fractional power of negative value")?;
        }
        if p < 0.0 {
            domain_check("powf", self.value(x), |v| v != 0.0, "negative power of zero")?;
        }
        Ok(self.unary(x, OpKind::Powf(x, p), |v| v.powf(p)))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.powf(x, 0.5)
    }

    /// `base^exponent`, elementwise; `base` must be non-negative.
    pub fn pow(&mut self, base: Var, exponent: Var) -> Result<Var> {
        domain_check("pow", self.value(base), |v| v >= 0.0, "negative base")?;
        self.binary("pow", base, exponent, OpKind::Pow(base, exponent), f64::powf)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, OpKind::Relu(x), |v| v.max(0.0))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, OpKind::Softplus(x), softplus)
    }

    pub fn lgamma(&mut self, x: Var) -> Result<Var> {
        domain_check("lgamma", self.value(x), |v| v > 0.0, "lgamma of non-positive value")?;
        Ok(self.unary(x, OpKind::Lgamma(x), lgamma_unchecked))
    }

    pub fn digamma(&mut self, x: Var) -> Result<Var> {
        domain_check("digamma", self.value(x), |v| v > 0.0, "digamma of non-positive value")?;
        Ok(self.unary(x, OpKind::Digamma(x), digamma_unchecked))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let value = gemm(av, false, bv, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(OpKind::MatMul(a, b), value, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 2 {
            return Err(Error::Contract(format!("transpose needs a matrix, got {:?}", v.shape())));
        }
        let (r, c) = (v.rows(), v.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = v.data()[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, data)?;
        let rg = self.rg(x);
        Ok(self.push(OpKind::Transpose(x), value, rg))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.shape().len() != 2 || bv.len() != xv.cols() {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let c = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[i % c])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(OpKind::AddBias(x, bias), value, rg))
    }

    /// `x · wᵀ + b` for a `[B × in]` batch, `[out × in]` weights and `[out]` bias.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.cols() != wv.cols() {
            return Err(Error::shape("linear", xv.shape(), wv.shape()));
        }
        if bv.len() != wv.rows() {
            return Err(Error::shape("linear bias", bv.shape(), &[wv.rows()]));
        }
        let mut value = gemm(xv, false, wv, true);
        let n = wv.rows();
        for row in value.data_mut().chunks_mut(n) {
            for (v, c) in row.iter_mut().zip(bv.data()) {
                *v += c;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(OpKind::Linear(x, w, b), value, rg))
    }

    /// `out[b, j] = (x_b · w_j) / (max(|x_b|, ε) · max(|w_j|, ε))`.
    pub fn cosine(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.cols() != wv.cols() {
            return Err(Error::shape("cosine", xv.shape(), wv.shape()));
        }
        let mut value = gemm(xv, false, wv, true);
        let nx = row_norms(xv);
        let nw = row_norms(wv);
        let n = wv.rows();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v /= nx[i / n].max(COSINE_EPS) * nw[i % n].max(COSINE_EPS);
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(OpKind::Cosine(x, w), value, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(OpKind::Sum(x), value, rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.rg(x);
        Ok(self.push(OpKind::Mean(x), value, rg))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows()).map(|i| v.row(i).iter().sum()).collect();
        let value = Tensor::column(data);
        let rg = self.rg(x);
        self.push(OpKind::SumRows(x), value, rg)
    }

    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let v = self.value(x);
        if j >= v.cols() {
            return Err(Error::Contract(format!(
                "column {j} out of range for shape {:?}",
                v.shape()
            )));
        }
        let data = (0..v.rows()).map(|i| v.row(i)[j]).collect();
        let value = Tensor::column(data);
        let rg = self.rg(x);
        Ok(self.push(OpKind::Column(x, j), value, rg))
    }

    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(OpKind::Detach(x), value, false)
    }

    /// Reverse-mode sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::new(rv.shape().to_vec(), vec![1.0])?);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, node: &GradNode, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let out = &node.value;
        match node.op {
            OpKind::Leaf | OpKind::Detach(_) => {}
            OpKind::Add(a, b) => {
                self.accum_broadcast(adj, a, g.clone());
                self.accum_broadcast(adj, b, g.clone());
            }
            OpKind::Sub(a, b) => {
                self.accum_broadcast(adj, a, g.clone());
                self.accum_broadcast(adj, b, g.map(|v| -v));
            }
            OpKind::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.rg(a) {
                    let ga = self.elementwise_grad(g, bv, |gi, y| gi * y);
                    self.accum_broadcast(adj, a, ga);
                }
                if self.rg(b) {
                    let gb = self.elementwise_grad(g, av, |gi, x| gi * x);
                    self.accum_broadcast(adj, b, gb);
                }
            }
            OpKind::Div(a, b) => {
                let bv = self.value(b);
                if self.rg(a) {
                    let ga = self.elementwise_grad(g, bv, |gi, y| gi / y);
                    self.accum_broadcast(adj, a, ga);
                }
                if self.rg(b) {
                    // d(a/b)/db = -out / b
                    let q = zip_same_or_broadcast(out, bv, |o, y| -o / y);
                    let gb = zip_same(g, &q, |gi, d| gi * d);
                    self.accum_broadcast(adj, b, gb);
                }
            }
            OpKind::AddScalar(x, _) | OpKind::Neg(x) | OpKind::MulScalar(x, _) => {
                let gx = match node.op {
                    OpKind::Neg(_) => g.map(|v| -v),
                    OpKind::MulScalar(_, c) => g.map(|v| v * c),
                    _ => g.clone(),
                };
                self.accum(adj, x, gx);
            }
            OpKind::Abs(x) => {
                let d = self.value(x).map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::Exp(x) => self.accum(adj, x, zip_same(g, out, |a, b| a * b)),
            OpKind::Log(x) => self.accum(adj, x, zip_same(g, self.value(x), |a, b| a / b)),
            OpKind::Powf(x, p) => {
                let d = self.value(x).map(|v| if p == 0.0 { 0.0 } else { p * v.powf(p - 1.0) });
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::Pow(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                // At base 0 both partials are taken as their limits for exponent > 1
                // (0 and 0); exponent == 1 keeps d/dbase = 1.
                if self.rg(a) {
                    let d = zip_same_or_broadcast(av, bv, |x, y| {
                        if x == 0.0 {
                            if y == 1.0 { 1.0 } else { 0.0 }
                        } else {
                            y * x.powf(y - 1.0)
                        }
                    });
                    let d = broadcast_to(&d, g);
                    self.accum_broadcast(adj, a, zip_same(g, &d, |p, q| p * q));
                }
                if self.rg(b) {
                    let lx = av.map(|x| if x == 0.0 { 0.0 } else { x.ln() });
                    let d = zip_same_or_broadcast(out, &broadcast_to(&lx, out), |o, l| o * l);
                    self.accum_broadcast(adj, b, zip_same(g, &d, |p, q| p * q));
                }
            }
            OpKind::Relu(x) => {
                let d = self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::Softplus(x) => {
                let d = self.value(x).map(sigmoid);
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::Lgamma(x) => {
                let d = self.value(x).map(digamma_unchecked);
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::Digamma(x) => {
                let d = self.value(x).map(trigamma_unchecked);
                self.accum(adj, x, zip_same(g, &d, |a, b| a * b));
            }
            OpKind::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.rg(a) {
                    self.accum(adj, a, gemm(g, false, bv, true));
                }
                if self.rg(b) {
                    self.accum(adj, b, gemm(av, true, g, false));
                }
            }
            OpKind::Transpose(x) => {
                let (r, c) = (g.rows(), g.cols());
                let mut data = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        data[j * r + i] = g.data()[i * c + j];
                    }
                }
                self.accum(adj, x, Tensor::matrix(c, r, data).expect("transpose"));
            }
            OpKind::AddBias(x, b) => {
                if self.rg(x) {
                    self.accum(adj, x, g.clone());
                }
                if self.rg(b) {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for (i, &v) in g.data().iter().enumerate() {
                        gb[i % c] += v;
                    }
                    let shape = self.value(b).shape().to_vec();
                    self.accum(adj, b, Tensor::new(shape, gb).expect("bias grad"));
                }
            }
            OpKind::Linear(x, w, b) => {
                if self.rg(x) {
                    self.accum(adj, x, gemm(g, false, self.value(w), false));
                }
                if self.rg(w) {
                    self.accum(adj, w, gemm(g, true, self.value(x), false));
                }
                if self.rg(b) {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    let shape = self.value(b).shape().to_vec();
                    self.accum(adj, b, Tensor::new(shape, gb).expect("bias grad"));
                }
            }
            OpKind::Cosine(x, w) => self.cosine_backward(x, w, out, g, adj),
            OpKind::Sum(x) => {
                let shape = self.value(x).shape().to_vec();
                self.accum(adj, x, Tensor::full(&shape, g.item()));
            }
            OpKind::Mean(x) => {
                let v = self.value(x);
                let scale = g.item() / v.len() as f64;
                self.accum(adj, x, Tensor::full(v.shape(), scale));
            }
            OpKind::SumRows(x) => {
                let v = self.value(x);
                let c = v.cols();
                let data = (0..v.len()).map(|i| g.data()[i / c]).collect();
                self.accum(adj, x, Tensor::new(v.shape().to_vec(), data).expect("sum_rows"));
            }
            OpKind::Column(x, j) => {
                let v = self.value(x);
                let c = v.cols();
                let mut data = vec![0.0; v.len()];
                for i in 0..v.rows() {
                    data[i * c + j] = g.data()[i];
                }
                self.accum(adj, x, Tensor::new(v.shape().to_vec(), data).expect("column"));
            }
        }
    }

    fn cosine_backward(&self, x: Var, w: Var, out: &Tensor, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let (xv, wv) = (self.value(x), self.value(w));
        let nx = row_norms(xv);
        let nw = row_norms(wv);
        let (b, n) = (xv.rows(), wv.rows());
        // G'[i, j] = g / (max(|x_i|,ε) max(|w_j|,ε))
        let mut gs = g.clone();
        for (k, v) in gs.data_mut().iter_mut().enumerate() {
            *v /= nx[k / n].max(COSINE_EPS) * nw[k % n].max(COSINE_EPS);
        }
        let go: Vec<f64> = g.data().iter().zip(out.data()).map(|(a, c)| a * c).collect();
        if self.rg(x) {
            let mut gx = gemm(&gs, false, wv, false);
            let d = xv.cols();
            for i in 0..b {
                if nx[i] > COSINE_EPS {
                    let s: f64 = go[i * n..(i + 1) * n].iter().sum::<f64>() / (nx[i] * nx[i]);
                    for c in 0..d {
                        gx.data_mut()[i * d + c] -= s * xv.data()[i * d + c];
                    }
                }
            }
            self.accum(adj, x, gx);
        }
        if self.rg(w) {
            let mut gw = gemm(&gs, true, xv, false);
            let d = wv.cols();
            for j in 0..n {
                if nw[j] > COSINE_EPS {
                    let s: f64 = (0..b).map(|i| go[i * n + j]).sum::<f64>() / (nw[j] * nw[j]);
                    for c in 0..d {
                        gw.data_mut()[j * d + c] -= s * wv.data()[j * d + c];
                    }
                }
            }
            self.accum(adj, w, gw);
        }
    }

    fn elementwise_grad(&self, g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let other = broadcast_to(other, g);
        zip_same(g, &other, f)
    }

    fn accum(&self, adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Accumulates `g` into `v`, summing it down if `v` is a broadcast scalar.
    fn accum_broadcast(&self, adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
        let target = self.value(v);
        if target.same_shape(&g) {
            self.accum(adj, v, g);
        } else {
            let shape = target.shape().to_vec();
            self.accum(adj, v, Tensor::new(shape, vec![g.sum()]).expect("scalar grad"));
        }
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn zip_same_or_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let layout = binary_layout("broadcast", a, b).expect("validated in forward pass");
    zip_broadcast(a, b, &layout, f)
}

/// Expands a single-element tensor to the shape of `like`; returns a copy of
/// `t` otherwise.
fn broadcast_to(t: &Tensor, like: &Tensor) -> Tensor {
    if t.same_shape(like) || !t.is_scalar() {
        t.clone()
    } else {
        Tensor::full(like.shape(), t.item())
    }
}
