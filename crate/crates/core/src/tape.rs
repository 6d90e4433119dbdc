//! Tape-based reverse-mode automatic differentiation.
//!
//! An episode records a Wengert list of tensor operations; `backward`
//! replays it in reverse, accumulating adjoints. Ops are an enum rather
//! than boxed closures so a full BPTT episode stays allocation-light.
//!
//! Forward values are produced by the kernels in [`crate::math`] — the same
//! kernels the plain inference path calls — so both paths agree bitwise.
//!
//! Two deliberate non-smooth points, matching the model's semantics:
//! * `Allocation` treats the usage sort order as a constant
//!   (straight-through on the permutation); gradients flow through the
//!   allocation product only.
//! * Answer feedback enters as fresh leaves, so no gradient flows through
//!   argmax decoding.

use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    MulScalar { v: Var, s: Var },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    MatVec { a: Var, x: Var },
    MatVecT { a: Var, x: Var },
    Affine { w: Var, x: Var, b: Var },
    Sigmoid(Var),
    Tanh(Var),
    Oneplus(Var),
    Softmax(Var),
    ScaledSoftmax { x: Var, s: Var, k: f64 },
    ContentScores { m: Var, key: Var },
    WriteMemory { m: Var, w: Var, e: Var, v: Var },
    Retention { read_ws: Vec<Var>, free: Var },
    UsageUpdate { u: Var, w: Var, psi: Var },
    Allocation { u: Var, order: Vec<usize> },
    PrecedenceUpdate { pr: Var, w: Var },
    LinkUpdate { l: Var, pr: Var, w: Var },
    Nll { logits: Var, target: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = math::add(self.value(a), self.value(b));
        self.push(t, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = math::mul(self.value(a), self.value(b));
        self.push(t, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let t = math::one_minus(self.value(a));
        self.push(t, Op::OneMinus(a))
    }

    pub fn mul_scalar(&mut self, v: Var, s: Var) -> Var {
        debug_assert_eq!(self.value(s).len(), 1);
        let t = math::scale(self.value(v), self.value(s).item());
        self.push(t, Op::MulScalar { v, s })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let t = math::concat(&tensors);
        self.push(t, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = math::slice(self.value(x), start, len);
        self.push(t, Op::Slice { x, start })
    }

    pub fn matvec(&mut self, a: Var, x: Var) -> Var {
        let t = math::matvec(self.value(a), self.value(x));
        self.push(t, Op::MatVec { a, x })
    }

    pub fn matvec_t(&mut self, a: Var, x: Var) -> Var {
        let t = math::matvec_t(self.value(a), self.value(x));
        self.push(t, Op::MatVecT { a, x })
    }

    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Var {
        let t = math::affine(self.value(w), self.value(x), self.value(b));
        self.push(t, Op::Affine { w, x, b })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = math::sigmoid(self.value(x));
        self.push(t, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = math::tanh(self.value(x));
        self.push(t, Op::Tanh(x))
    }

    pub fn oneplus(&mut self, x: Var) -> Var {
        let t = math::oneplus(self.value(x));
        self.push(t, Op::Oneplus(x))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let t = math::softmax(self.value(x));
        self.push(t, Op::Softmax(x))
    }

    /// `softmax(x · s · k)` where `s` is a 1x1 variable and `k` a constant.
    pub fn scaled_softmax(&mut self, x: Var, s: Var, k: f64) -> Var {
        debug_assert_eq!(self.value(s).len(), 1);
        let t = math::softmax_scaled(self.value(x), self.value(s).item() * k);
        self.push(t, Op::ScaledSoftmax { x, s, k })
    }

    pub fn content_scores(&mut self, m: Var, key: Var) -> Var {
        let t = math::content_scores(self.value(m), self.value(key));
        self.push(t, Op::ContentScores { m, key })
    }

    pub fn write_memory(&mut self, m: Var, w: Var, e: Var, v: Var) -> Var {
        let t = math::write_memory(self.value(m), self.value(w), self.value(e), self.value(v));
        self.push(t, Op::WriteMemory { m, w, e, v })
    }

    pub fn retention(&mut self, read_ws: &[Var], free: Var) -> Var {
        let ws: Vec<&Tensor> = read_ws.iter().map(|w| self.value(*w)).collect();
        let t = math::retention(&ws, self.value(free));
        self.push(
            t,
            Op::Retention {
                read_ws: read_ws.to_vec(),
                free,
            },
        )
    }

    pub fn usage_update(&mut self, u: Var, w: Var, psi: Var) -> Var {
        let t = math::usage_update(self.value(u), self.value(w), self.value(psi));
        self.push(t, Op::UsageUpdate { u, w, psi })
    }

    pub fn allocation(&mut self, u: Var) -> Var {
        let order = math::free_list(self.value(u));
        let t = math::allocation_from_order(self.value(u), &order);
        self.push(t, Op::Allocation { u, order })
    }

    pub fn precedence_update(&mut self, pr: Var, w: Var) -> Var {
        let t = math::precedence_update(self.value(pr), self.value(w));
        self.push(t, Op::PrecedenceUpdate { pr, w })
    }

    pub fn link_update(&mut self, l: Var, pr: Var, w: Var) -> Var {
        let t = math::link_update(self.value(l), self.value(pr), self.value(w));
        self.push(t, Op::LinkUpdate { l, pr, w })
    }

    pub fn nll(&mut self, logits: Var, target: usize) -> Var {
        let t = Tensor::scalar(math::nll(self.value(logits), target));
        self.push(t, Op::Nll { logits, target })
    }

    /// Reverse pass from a scalar root. Returns one adjoint per node that
    /// participates in the root's history.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = self.value(root);
        debug_assert_eq!(seed.len(), 1, "backward roots must be scalar");
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_grad(grads, *a, self.shape_of(*a), |dst| add_into(dst, &g.data, 1.0));
                add_grad(grads, *b, self.shape_of(*b), |dst| add_into(dst, &g.data, 1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_grad(grads, *a, av.shape(), |dst| {
                    for ((d, gv), bvv) in dst.iter_mut().zip(&g.data).zip(&bv.data) {
                        *d += gv * bvv;
                    }
                });
                add_grad(grads, *b, bv.shape(), |dst| {
                    for ((d, gv), avv) in dst.iter_mut().zip(&g.data).zip(&av.data) {
                        *d += gv * avv;
                    }
                });
            }
            Op::OneMinus(a) => {
                add_grad(grads, *a, self.shape_of(*a), |dst| add_into(dst, &g.data, -1.0));
            }
            Op::MulScalar { v, s } => {
                let (vv, sv) = (self.value(*v), self.value(*s).item());
                add_grad(grads, *v, vv.shape(), |dst| add_into(dst, &g.data, sv));
                let dot: f64 = vv.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
                add_grad(grads, *s, (1, 1), |dst| dst[0] += dot);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let seg = &g.data[off..off + len];
                    add_grad(grads, *p, self.shape_of(*p), |dst| add_into(dst, seg, 1.0));
                    off += len;
                }
            }
            Op::Slice { x, start } => {
                let start = *start;
                add_grad(grads, *x, self.shape_of(*x), |dst| {
                    for (d, gv) in dst[start..start + g.data.len()].iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                });
            }
            Op::MatVec { a, x } => self.back_matvec(*a, *x, g, grads, false),
            Op::MatVecT { a, x } => self.back_matvec(*a, *x, g, grads, true),
            Op::Affine { w, x, b } => {
                self.back_matvec(*w, *x, g, grads, false);
                add_grad(grads, *b, self.shape_of(*b), |dst| add_into(dst, &g.data, 1.0));
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                add_grad(grads, *x, y.shape(), |dst| {
                    for ((d, gv), yv) in dst.iter_mut().zip(&g.data).zip(&y.data) {
                        *d += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                add_grad(grads, *x, y.shape(), |dst| {
                    for ((d, gv), yv) in dst.iter_mut().zip(&g.data).zip(&y.data) {
                        *d += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Oneplus(x) => {
                let xv = self.value(*x);
                add_grad(grads, *x, xv.shape(), |dst| {
                    for ((d, gv), xvv) in dst.iter_mut().zip(&g.data).zip(&xv.data) {
                        *d += gv * math::sigmoid_scalar(*xvv);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let dot: f64 = g.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
                add_grad(grads, *x, y.shape(), |dst| {
                    for ((d, gv), yv) in dst.iter_mut().zip(&g.data).zip(&y.data) {
                        *d += yv * (gv - dot);
                    }
                });
            }
            Op::ScaledSoftmax { x, s, k } => {
                let y = &node.value;
                let xv = self.value(*x);
                let sv = self.value(*s).item();
                let dot: f64 = g.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
                // z̄ = y ∘ (ḡ − ⟨ḡ, y⟩) is the adjoint of the scaled logits.
                let zbar: Vec<f64> = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(gv, yv)| yv * (gv - dot))
                    .collect();
                let c = sv * k;
                add_grad(grads, *x, xv.shape(), |dst| add_into(dst, &zbar, c));
                let sdot: f64 = xv.data.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                add_grad(grads, *s, (1, 1), |dst| dst[0] += k * sdot);
            }
            Op::ContentScores { m, key } => self.back_content(*m, *key, g, grads),
            Op::WriteMemory { m, w, e, v } => self.back_write(*m, *w, *e, *v, g, grads),
            Op::Retention { read_ws, free } => self.back_retention(read_ws, *free, g, grads),
            Op::UsageUpdate { u, w, psi } => {
                let (uv, wv, pv) = (self.value(*u), self.value(*w), self.value(*psi));
                add_grad(grads, *u, uv.shape(), |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g.data[i] * (1.0 - wv.data[i]) * pv.data[i];
                    }
                });
                add_grad(grads, *w, wv.shape(), |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g.data[i] * (1.0 - uv.data[i]) * pv.data[i];
                    }
                });
                add_grad(grads, *psi, pv.shape(), |dst| {
                    for i in 0..dst.len() {
                        let occ = uv.data[i] + wv.data[i] - uv.data[i] * wv.data[i];
                        dst[i] += g.data[i] * occ;
                    }
                });
            }
            Op::Allocation { u, order } => self.back_allocation(*u, order, g, grads),
            Op::PrecedenceUpdate { pr, w } => {
                let (prv, wv) = (self.value(*pr), self.value(*w));
                let s: f64 = wv.data.iter().sum();
                let gp: f64 = g.data.iter().zip(&prv.data).map(|(a, b)| a * b).sum();
                add_grad(grads, *pr, prv.shape(), |dst| add_into(dst, &g.data, 1.0 - s));
                add_grad(grads, *w, wv.shape(), |dst| {
                    for (d, gv) in dst.iter_mut().zip(&g.data) {
                        *d += gv - gp;
                    }
                });
            }
            Op::LinkUpdate { l, pr, w } => self.back_link(*l, *pr, *w, g, grads),
            Op::Nll { logits, target } => {
                let p = math::softmax(self.value(*logits));
                let gs = g.item();
                let target = *target;
                add_grad(grads, *logits, p.shape(), |dst| {
                    for (i, (d, pv)) in dst.iter_mut().zip(&p.data).enumerate() {
                        let ind = if i == target { 1.0 } else { 0.0 };
                        *d += gs * (pv - ind);
                    }
                });
            }
        }
    }

    fn shape_of(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn back_matvec(&self, a: Var, x: Var, g: &Tensor, grads: &mut [Option<Tensor>], transposed: bool) {
        let (av, xv) = (self.value(a), self.value(x));
        if !transposed {
            // y = A x:   Ā += ḡ xᵀ,   x̄ += Aᵀ ḡ
            add_grad(grads, a, av.shape(), |dst| {
                for r in 0..av.rows {
                    let gv = g.data[r];
                    let row = &mut dst[r * av.cols..(r + 1) * av.cols];
                    for (d, xvv) in row.iter_mut().zip(&xv.data) {
                        *d += gv * xvv;
                    }
                }
            });
            add_grad(grads, x, xv.shape(), |dst| {
                for r in 0..av.rows {
                    let gv = g.data[r];
                    let row = av.row(r);
                    for (d, w) in dst.iter_mut().zip(row.iter()) {
                        *d += gv * w;
                    }
                }
            });
        } else {
            // y = Aᵀ x:  Ā += x ḡᵀ,   x̄ += A ḡ
            add_grad(grads, a, av.shape(), |dst| {
                for r in 0..av.rows {
                    let xr = xv.data[r];
                    let row = &mut dst[r * av.cols..(r + 1) * av.cols];
                    for (d, gv) in row.iter_mut().zip(&g.data) {
                        *d += xr * gv;
                    }
                }
            });
            add_grad(grads, x, xv.shape(), |dst| {
                for r in 0..av.rows {
                    let row = av.row(r);
                    let mut acc = 0.0;
                    for (w, gv) in row.iter().zip(&g.data) {
                        acc += w * gv;
                    }
                    dst[r] += acc;
                }
            });
        }
    }

    fn back_content(&self, m: Var, key: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (mv, kv) = (self.value(m), self.value(key));
        let b = math::norm(&kv.data);
        let mut m_grad = vec![0.0; mv.len()];
        let mut k_grad = vec![0.0; kv.len()];
        for j in 0..mv.rows {
            let row = mv.row(j);
            let mut dot = 0.0;
            for (a, x) in row.iter().zip(&kv.data) {
                dot += a * x;
            }
            let a = math::norm(row);
            let gj = 1.0 / (a * b + math::COSINE_EPS);
            let gbar = g.data[j];
            let common = gbar * gj;
            let m_coef = if a > 1e-12 { gbar * dot * gj * gj * b / a } else { 0.0 };
            let k_coef = if b > 1e-12 { gbar * dot * gj * gj * a / b } else { 0.0 };
            let mrow = &mut m_grad[j * mv.cols..(j + 1) * mv.cols];
            for c in 0..mv.cols {
                mrow[c] += common * kv.data[c] - m_coef * row[c];
                k_grad[c] += common * row[c] - k_coef * kv.data[c];
            }
        }
        add_grad(grads, m, mv.shape(), |dst| add_into(dst, &m_grad, 1.0));
        add_grad(grads, key, kv.shape(), |dst| add_into(dst, &k_grad, 1.0));
    }

    fn back_write(&self, m: Var, w: Var, e: Var, v: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (mv, wv, ev, vv) = (self.value(m), self.value(w), self.value(e), self.value(v));
        let cols = mv.cols;
        add_grad(grads, m, mv.shape(), |dst| {
            for j in 0..mv.rows {
                let wj = wv.data[j];
                let row = &mut dst[j * cols..(j + 1) * cols];
                let grow = &g.data[j * cols..(j + 1) * cols];
                for c in 0..cols {
                    row[c] += grow[c] * (1.0 - wj * ev.data[c]);
                }
            }
        });
        add_grad(grads, w, wv.shape(), |dst| {
            for j in 0..mv.rows {
                let mrow = mv.row(j);
                let grow = &g.data[j * cols..(j + 1) * cols];
                let mut acc = 0.0;
                for c in 0..cols {
                    acc += grow[c] * (vv.data[c] - mrow[c] * ev.data[c]);
                }
                dst[j] += acc;
            }
        });
        add_grad(grads, e, ev.shape(), |dst| {
            for j in 0..mv.rows {
                let wj = wv.data[j];
                let mrow = mv.row(j);
                let grow = &g.data[j * cols..(j + 1) * cols];
                for c in 0..cols {
                    dst[c] -= grow[c] * mrow[c] * wj;
                }
            }
        });
        add_grad(grads, v, vv.shape(), |dst| {
            for j in 0..mv.rows {
                let wj = wv.data[j];
                let grow = &g.data[j * cols..(j + 1) * cols];
                for c in 0..cols {
                    dst[c] += grow[c] * wj;
                }
            }
        });
    }

    fn back_retention(&self, read_ws: &[Var], free: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let fv = self.value(free);
        let ws: Vec<&Tensor> = read_ws.iter().map(|w| self.value(*w)).collect();
        let n = g.len();
        let heads = read_ws.len();
        // Leave-one-out products, recomputed per head (head count is tiny).
        for (i, wi) in read_ws.iter().enumerate() {
            let fi = fv.data[i];
            let mut w_grad = vec![0.0; n];
            let mut f_grad = 0.0;
            for j in 0..n {
                let mut loo = 1.0;
                for (i2, w2) in ws.iter().enumerate() {
                    if i2 != i {
                        loo *= 1.0 - fv.data[i2] * w2.data[j];
                    }
                }
                w_grad[j] = -g.data[j] * fi * loo;
                f_grad -= g.data[j] * ws[i].data[j] * loo;
            }
            add_grad(grads, *wi, (n, 1), |dst| add_into(dst, &w_grad, 1.0));
            add_grad(grads, free, fv.shape(), |dst| dst[i] += f_grad);
        }
        if heads == 0 {
            add_grad(grads, free, fv.shape(), |_| {});
        }
    }

    fn back_allocation(&self, u: Var, order: &[usize], g: &Tensor, grads: &mut [Option<Tensor>]) {
        let uv = self.value(u);
        let n = order.len();
        let vals: Vec<f64> = order.iter().map(|&j| uv.data[j]).collect();
        // Prefix products with explicit zero bookkeeping so leave-one-out
        // terms stay exact when some usage entries are exactly zero.
        let mut grad_sorted = vec![0.0; n];
        let mut zc = 0usize; // zeros among vals[0..k]
        let mut pnz = 1.0; // product of nonzero vals[0..k]
        for k in 0..n {
            let p_k = if zc > 0 { 0.0 } else { pnz };
            // d a[φ_k] / d u[φ_k] via the (1 − u) factor.
            grad_sorted[k] += -g.data[order[k]] * p_k;
            // d a[φ_k] / d u[φ_l] for l < k via the prefix product.
            let coef = g.data[order[k]] * (1.0 - vals[k]);
            if coef != 0.0 {
                for l in 0..k {
                    let excl = if vals[l] == 0.0 {
                        if zc == 1 {
                            pnz
                        } else {
                            0.0
                        }
                    } else if zc > 0 {
                        0.0
                    } else {
                        pnz / vals[l]
                    };
                    grad_sorted[l] += coef * excl;
                }
            }
            if vals[k] == 0.0 {
                zc += 1;
            } else {
                pnz *= vals[k];
            }
        }
        add_grad(grads, u, uv.shape(), |dst| {
            for (k, &j) in order.iter().enumerate() {
                dst[j] += grad_sorted[k];
            }
        });
    }

    fn back_link(&self, l: Var, pr: Var, w: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (lv, prv, wv) = (self.value(l), self.value(pr), self.value(w));
        let n = lv.rows;
        let mut l_grad = vec![0.0; lv.len()];
        let mut pr_grad = vec![0.0; n];
        let mut w_grad = vec![0.0; n];
        for i in 0..n {
            let wi = wv.data[i];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let gij = g.data[i * n + j];
                if gij == 0.0 {
                    continue;
                }
                let lij = lv.at(i, j);
                l_grad[i * n + j] += gij * (1.0 - wi - wv.data[j]);
                w_grad[i] += gij * (prv.data[j] - lij);
                w_grad[j] -= gij * lij;
                pr_grad[j] += gij * wi;
            }
        }
        add_grad(grads, l, lv.shape(), |dst| add_into(dst, &l_grad, 1.0));
        add_grad(grads, pr, prv.shape(), |dst| add_into(dst, &pr_grad, 1.0));
        add_grad(grads, w, wv.shape(), |dst| add_into(dst, &w_grad, 1.0));
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn add_grad<F: FnOnce(&mut [f64])>(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize), f: F) {
    let slot = &mut grads[v.0];
    if slot.is_none() {
        *slot = Some(Tensor::zeros(shape.0, shape.1));
    }
    f(&mut slot.as_mut().unwrap().data);
}
