//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! The tape is an append-only arena of nodes; reverse insertion order is a
//! valid reverse topological order, so backpropagation is a single backward
//! sweep. Values are `Array2<f64>`: column vectors are `(n, 1)` and scalars
//! are `(1, 1)`.
//!
//! Besides the usual primitives there are a few fused operations
//! (`sq_dist_accum`, `mask_sq_accum`, `scaled_sum`, `bce_mean`) that keep
//! the per-candidate intermediate arrays off the tape; their backward rules
//! recompute the cheap differences from the stored inputs.

use ndarray::Array2;

#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    MatMul(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    /// array scaled by a (1,1) scalar node
    ScaleBy(Var, Var),
    /// elementwise division by a (1,1) scalar node
    DivScalar(Var, Var),
    Sum(Var),
    Exp(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Abs(Var),
    ConcatRows(Var, Var),
    /// column vector assembled from (1,1) scalars
    Gather(Vec<Var>),
    /// softmax over a column vector
    Softmax(Var),
    /// scalar extracted from row `i` of a column vector
    Row(Var, usize),
    /// cosine similarity of two column vectors, 0 when either is zero
    Cosine(Var, Var),
    /// Σ_k ‖a_k − b_k‖² over pairs of equally shaped arrays → scalar
    SqDistAccum(Vec<(Var, Var)>),
    /// sqrt(x + eps), elementwise
    SqrtGuard(Var),
    /// out_t = Σ_k c_k (a_kt − b_kt)² with scalar nodes c_k → column vector
    MaskSqAccum(Vec<(Var, Var, Var)>),
    /// Σ_k s_k · v_k with scalar nodes s_k → array
    ScaledSum(Vec<(Var, Var)>),
    /// mean binary cross-entropy over (1,1) predictions → scalar
    BceMean { preds: Vec<Var>, labels: Vec<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// number of predictions clamped away from {0, 1} inside `bce_mean`
    pub clamp_events: usize,
}

pub const BCE_CLAMP: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn leaf_col(&mut self, values: &[f64]) -> Var {
        self.leaf(Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap())
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(Array2::zeros((rows, cols)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::MulElem(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn scale_const(&mut self, a: Var, k: f64) -> Var {
        let v = &self.nodes[a.0].value * k;
        self.push(v, Op::ScaleConst(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = &self.nodes[a.0].value + k;
        self.push(v, Op::AddConst(a))
    }

    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = &self.nodes[a.0].value * k;
        self.push(v, Op::ScaleBy(a, s))
    }

    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = &self.nodes[a.0].value / k;
        self.push(v, Op::DivScalar(a, s))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(v, Op::Sum(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| if x > 0.0 { x } else { alpha * x });
        self.push(v, Op::LeakyRelu(a, alpha))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        assert_eq!(va.ncols(), vb.ncols(), "concat_rows: column mismatch");
        let mut v = Array2::zeros((va.nrows() + vb.nrows(), va.ncols()));
        v.slice_mut(ndarray::s![..va.nrows(), ..]).assign(va);
        v.slice_mut(ndarray::s![va.nrows().., ..]).assign(vb);
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn gather(&mut self, scalars: &[Var]) -> Var {
        let v = Array2::from_shape_vec(
            (scalars.len(), 1),
            scalars.iter().map(|&s| self.scalar(s)).collect(),
        )
        .unwrap();
        self.push(v, Op::Gather(scalars.to_vec()))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = x.mapv(|v| (v - max).exp());
        let total = e.sum();
        self.push(e / total, Op::Softmax(a))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let v = Array2::from_elem((1, 1), self.nodes[a.0].value[(i, 0)]);
        self.push(v, Op::Row(a, i))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let u = &self.nodes[a.0].value;
        let w = &self.nodes[b.0].value;
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = if nu == 0.0 || nw == 0.0 {
            0.0
        } else {
            u.iter().zip(w.iter()).map(|(x, y)| x * y).sum::<f64>() / (nu * nw)
        };
        self.push(Array2::from_elem((1, 1), c), Op::Cosine(a, b))
    }

    pub fn sq_dist_accum(&mut self, pairs: &[(Var, Var)]) -> Var {
        let mut total = 0.0;
        for &(a, b) in pairs {
            let va = &self.nodes[a.0].value;
            let vb = &self.nodes[b.0].value;
            total += va
                .iter()
                .zip(vb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        self.push(
            Array2::from_elem((1, 1), total),
            Op::SqDistAccum(pairs.to_vec()),
        )
    }

    pub fn sqrt_guard(&mut self, a: Var, eps: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| (x + eps).sqrt());
        self.push(v, Op::SqrtGuard(a))
    }

    pub fn mask_sq_accum(&mut self, terms: &[(Var, Var, Var)]) -> Var {
        assert!(!terms.is_empty());
        let rows = self.nodes[terms[0].0 .0].value.nrows();
        let mut out = Array2::zeros((rows, 1));
        for &(a, b, c) in terms {
            let ck = self.scalar(c);
            let va = &self.nodes[a.0].value;
            let vb = &self.nodes[b.0].value;
            for t in 0..rows {
                let d = va[(t, 0)] - vb[(t, 0)];
                out[(t, 0)] += ck * d * d;
            }
        }
        self.push(out, Op::MaskSqAccum(terms.to_vec()))
    }

    pub fn scaled_sum(&mut self, terms: &[(Var, Var)]) -> Var {
        assert!(!terms.is_empty());
        let shape = self.nodes[terms[0].1 .0].value.raw_dim();
        let mut out = Array2::zeros(shape);
        for &(s, v) in terms {
            out = out + &self.nodes[v.0].value * self.scalar(s);
        }
        self.push(out, Op::ScaledSum(terms.to_vec()))
    }

    pub fn bce_mean(&mut self, preds: &[Var], labels: &[f64]) -> Var {
        assert_eq!(preds.len(), labels.len());
        assert!(!preds.is_empty());
        let n = preds.len() as f64;
        let mut total = 0.0;
        for (&p, &y) in preds.iter().zip(labels) {
            let raw = self.scalar(p);
            let clamped = raw.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if clamped != raw {
                self.clamp_events += 1;
            }
            total -= y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln();
        }
        self.push(
            Array2::from_elem((1, 1), total / n),
            Op::BceMean {
                preds: preds.to_vec(),
                labels: labels.to_vec(),
            },
        )
    }

    /// Convenience: mean of a list of equally shaped arrays.
    pub fn mean_of(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        self.scale_const(acc, 1.0 / vars.len() as f64)
    }

    /// Backpropagates from scalar `root`; returns per-node gradients.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::from_elem(self.nodes[root.0].value.raw_dim(), 1.0));
        for idx in (0..=root.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let add_to = |grads: &mut [Option<Array2<f64>>], v: Var, delta: Array2<f64>| {
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot => *slot = Some(delta),
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, -g.clone());
            }
            Op::MulElem(a, b) => {
                add_to(grads, *a, g * &self.nodes[b.0].value);
                add_to(grads, *b, g * &self.nodes[a.0].value);
            }
            Op::MatMul(a, b) => {
                add_to(grads, *a, g.dot(&self.nodes[b.0].value.t()));
                add_to(grads, *b, self.nodes[a.0].value.t().dot(g));
            }
            Op::ScaleConst(a, k) => add_to(grads, *a, g * *k),
            Op::AddConst(a) => add_to(grads, *a, g.clone()),
            Op::ScaleBy(a, s) => {
                add_to(grads, *a, g * self.scalar(*s));
                let ds = (g * &self.nodes[a.0].value).sum();
                add_to(grads, *s, Array2::from_elem((1, 1), ds));
            }
            Op::DivScalar(a, s) => {
                let k = self.scalar(*s);
                add_to(grads, *a, g / k);
                let ds = -(g * &self.nodes[a.0].value).sum() / (k * k);
                add_to(grads, *s, Array2::from_elem((1, 1), ds));
            }
            Op::Sum(a) => {
                let shape = self.nodes[a.0].value.raw_dim();
                add_to(grads, *a, Array2::from_elem(shape, g[(0, 0)]));
            }
            Op::Exp(a) => add_to(grads, *a, g * &self.nodes[idx].value),
            Op::Relu(a) => {
                let mask = self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                add_to(grads, *a, g * &mask);
            }
            Op::LeakyRelu(a, alpha) => {
                let al = *alpha;
                let mask = self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { al });
                add_to(grads, *a, g * &mask);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                add_to(grads, *a, g * &(y * &(1.0 - y)));
            }
            Op::Abs(a) => {
                let sign = self.nodes[a.0].value.mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                add_to(grads, *a, g * &sign);
            }
            Op::ConcatRows(a, b) => {
                let ra = self.nodes[a.0].value.nrows();
                add_to(grads, *a, g.slice(ndarray::s![..ra, ..]).to_owned());
                add_to(grads, *b, g.slice(ndarray::s![ra.., ..]).to_owned());
            }
            Op::Gather(scalars) => {
                for (i, &s) in scalars.iter().enumerate() {
                    add_to(grads, s, Array2::from_elem((1, 1), g[(i, 0)]));
                }
            }
            Op::Softmax(a) => {
                let y = &self.nodes[idx].value;
                let dot = (g * y).sum();
                add_to(grads, *a, y * &(g - dot));
            }
            Op::Row(a, i) => {
                let mut d = Array2::zeros(self.nodes[a.0].value.raw_dim());
                d[(*i, 0)] = g[(0, 0)];
                add_to(grads, *a, d);
            }
            Op::Cosine(a, b) => {
                let u = &self.nodes[a.0].value;
                let w = &self.nodes[b.0].value;
                let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nu == 0.0 || nw == 0.0 {
                    return;
                }
                let c = self.nodes[idx].value[(0, 0)];
                let gs = g[(0, 0)];
                add_to(grads, *a, (w / (nu * nw) - &(u * (c / (nu * nu)))) * gs);
                add_to(grads, *b, (u / (nu * nw) - &(w * (c / (nw * nw)))) * gs);
            }
            Op::SqDistAccum(pairs) => {
                let gs = g[(0, 0)];
                for &(a, b) in pairs {
                    let diff = &self.nodes[a.0].value - &self.nodes[b.0].value;
                    add_to(grads, a, &diff * (2.0 * gs));
                    add_to(grads, b, &diff * (-2.0 * gs));
                }
            }
            Op::SqrtGuard(a) => {
                let y = &self.nodes[idx].value;
                add_to(grads, *a, g / &(y * 2.0));
            }
            Op::MaskSqAccum(terms) => {
                for &(a, b, c) in terms {
                    let ck = self.scalar(c);
                    let diff = &self.nodes[a.0].value - &self.nodes[b.0].value;
                    add_to(grads, a, g * &diff * (2.0 * ck));
                    add_to(grads, b, g * &diff * (-2.0 * ck));
                    let dc = (g * &diff * &diff).sum();
                    add_to(grads, c, Array2::from_elem((1, 1), dc));
                }
            }
            Op::ScaledSum(terms) => {
                for &(s, v) in terms {
                    add_to(grads, v, g * self.scalar(s));
                    let ds = (g * &self.nodes[v.0].value).sum();
                    add_to(grads, s, Array2::from_elem((1, 1), ds));
                }
            }
            Op::BceMean { preds, labels } => {
                let n = preds.len() as f64;
                let gs = g[(0, 0)];
                for (&p, &y) in preds.iter().zip(labels) {
                    let clamped = self.scalar(p).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    let dp = -(y / clamped - (1.0 - y) / (1.0 - clamped)) / n * gs;
                    add_to(grads, p, Array2::from_elem((1, 1), dp));
                }
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zero-filled when the node is unreachable from the root.
    pub fn get_or_zero(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(shape),
        }
    }
}
