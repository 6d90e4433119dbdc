//! The DNC model: parameters, state, and the single-timestep update.
//!
//! The timestep is written once, generically over an [`Engine`]. Two engines
//! exist: [`PlainEngine`] evaluates eagerly (inference), and [`crate::tape::Tape`]
//! records for backpropagation (training). Both delegate their forward math
//! to [`crate::math`], so the two paths produce bit-identical values; a test
//! pins that equality.

use std::rc::Rc;

use crate::controller::InterfaceLayout;
use crate::error::{DncError, Result};
use crate::math;
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Execution backend for one DNC timestep.
pub trait Engine {
    type V: Clone;

    fn constant(&mut self, t: Tensor) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor;

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn one_minus(&mut self, a: &Self::V) -> Self::V;
    fn mul_scalar(&mut self, v: &Self::V, s: &Self::V) -> Self::V;
    fn concat(&mut self, parts: &[Self::V]) -> Self::V;
    fn slice(&mut self, x: &Self::V, start: usize, len: usize) -> Self::V;
    fn matvec(&mut self, a: &Self::V, x: &Self::V) -> Self::V;
    fn matvec_t(&mut self, a: &Self::V, x: &Self::V) -> Self::V;
    fn affine(&mut self, w: &Self::V, x: &Self::V, b: &Self::V) -> Self::V;
    fn sigmoid(&mut self, x: &Self::V) -> Self::V;
    fn tanh(&mut self, x: &Self::V) -> Self::V;
    fn oneplus(&mut self, x: &Self::V) -> Self::V;
    fn softmax(&mut self, x: &Self::V) -> Self::V;
    fn scaled_softmax(&mut self, x: &Self::V, s: &Self::V, k: f64) -> Self::V;
    fn content_scores(&mut self, m: &Self::V, key: &Self::V) -> Self::V;
    fn write_memory(&mut self, m: &Self::V, w: &Self::V, e: &Self::V, v: &Self::V) -> Self::V;
    fn retention(&mut self, read_ws: &[Self::V], free: &Self::V) -> Self::V;
    fn usage_update(&mut self, u: &Self::V, w: &Self::V, psi: &Self::V) -> Self::V;
    fn allocation(&mut self, u: &Self::V) -> Self::V;
    fn precedence_update(&mut self, pr: &Self::V, w: &Self::V) -> Self::V;
    fn link_update(&mut self, l: &Self::V, pr: &Self::V, w: &Self::V) -> Self::V;
}

/// Eager engine: every op evaluates immediately, nothing is retained.
#[derive(Default)]
pub struct PlainEngine;

impl Engine for PlainEngine {
    type V = Rc<Tensor>;

    fn constant(&mut self, t: Tensor) -> Self::V {
        Rc::new(t)
    }
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor {
        v
    }
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(math::add(a, b))
    }
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(math::mul(a, b))
    }
    fn one_minus(&mut self, a: &Self::V) -> Self::V {
        Rc::new(math::one_minus(a))
    }
    fn mul_scalar(&mut self, v: &Self::V, s: &Self::V) -> Self::V {
        Rc::new(math::scale(v, s.item()))
    }
    fn concat(&mut self, parts: &[Self::V]) -> Self::V {
        let refs: Vec<&Tensor> = parts.iter().map(|p| p.as_ref()).collect();
        Rc::new(math::concat(&refs))
    }
    fn slice(&mut self, x: &Self::V, start: usize, len: usize) -> Self::V {
        Rc::new(math::slice(x, start, len))
    }
    fn matvec(&mut self, a: &Self::V, x: &Self::V) -> Self::V {
        Rc::new(math::matvec(a, x))
    }
    fn matvec_t(&mut self, a: &Self::V, x: &Self::V) -> Self::V {
        Rc::new(math::matvec_t(a, x))
    }
    fn affine(&mut self, w: &Self::V, x: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(math::affine(w, x, b))
    }
    fn sigmoid(&mut self, x: &Self::V) -> Self::V {
        Rc::new(math::sigmoid(x))
    }
    fn tanh(&mut self, x: &Self::V) -> Self::V {
        Rc::new(math::tanh(x))
    }
    fn oneplus(&mut self, x: &Self::V) -> Self::V {
        Rc::new(math::oneplus(x))
    }
    fn softmax(&mut self, x: &Self::V) -> Self::V {
        Rc::new(math::softmax(x))
    }
    fn scaled_softmax(&mut self, x: &Self::V, s: &Self::V, k: f64) -> Self::V {
        Rc::new(math::softmax_scaled(x, s.item() * k))
    }
    fn content_scores(&mut self, m: &Self::V, key: &Self::V) -> Self::V {
        Rc::new(math::content_scores(m, key))
    }
    fn write_memory(&mut self, m: &Self::V, w: &Self::V, e: &Self::V, v: &Self::V) -> Self::V {
        Rc::new(math::write_memory(m, w, e, v))
    }
    fn retention(&mut self, read_ws: &[Self::V], free: &Self::V) -> Self::V {
        let refs: Vec<&Tensor> = read_ws.iter().map(|p| p.as_ref()).collect();
        Rc::new(math::retention(&refs, free))
    }
    fn usage_update(&mut self, u: &Self::V, w: &Self::V, psi: &Self::V) -> Self::V {
        Rc::new(math::usage_update(u, w, psi))
    }
    fn allocation(&mut self, u: &Self::V) -> Self::V {
        let order = math::free_list(u);
        Rc::new(math::allocation_from_order(u, &order))
    }
    fn precedence_update(&mut self, pr: &Self::V, w: &Self::V) -> Self::V {
        Rc::new(math::precedence_update(pr, w))
    }
    fn link_update(&mut self, l: &Self::V, pr: &Self::V, w: &Self::V) -> Self::V {
        Rc::new(math::link_update(l, pr, w))
    }
}

impl Engine for Tape {
    type V = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        Tape::value(self, *v)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        Tape::add(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        Tape::mul(self, *a, *b)
    }
    fn one_minus(&mut self, a: &Var) -> Var {
        Tape::one_minus(self, *a)
    }
    fn mul_scalar(&mut self, v: &Var, s: &Var) -> Var {
        Tape::mul_scalar(self, *v, *s)
    }
    fn concat(&mut self, parts: &[Var]) -> Var {
        Tape::concat(self, parts)
    }
    fn slice(&mut self, x: &Var, start: usize, len: usize) -> Var {
        Tape::slice(self, *x, start, len)
    }
    fn matvec(&mut self, a: &Var, x: &Var) -> Var {
        Tape::matvec(self, *a, *x)
    }
    fn matvec_t(&mut self, a: &Var, x: &Var) -> Var {
        Tape::matvec_t(self, *a, *x)
    }
    fn affine(&mut self, w: &Var, x: &Var, b: &Var) -> Var {
        Tape::affine(self, *w, *x, *b)
    }
    fn sigmoid(&mut self, x: &Var) -> Var {
        Tape::sigmoid(self, *x)
    }
    fn tanh(&mut self, x: &Var) -> Var {
        Tape::tanh(self, *x)
    }
    fn oneplus(&mut self, x: &Var) -> Var {
        Tape::oneplus(self, *x)
    }
    fn softmax(&mut self, x: &Var) -> Var {
        Tape::softmax(self, *x)
    }
    fn scaled_softmax(&mut self, x: &Var, s: &Var, k: f64) -> Var {
        Tape::scaled_softmax(self, *x, *s, k)
    }
    fn content_scores(&mut self, m: &Var, key: &Var) -> Var {
        Tape::content_scores(self, *m, *key)
    }
    fn write_memory(&mut self, m: &Var, w: &Var, e: &Var, v: &Var) -> Var {
        Tape::write_memory(self, *m, *w, *e, *v)
    }
    fn retention(&mut self, read_ws: &[Var], free: &Var) -> Var {
        Tape::retention(self, read_ws, *free)
    }
    fn usage_update(&mut self, u: &Var, w: &Var, psi: &Var) -> Var {
        Tape::usage_update(self, *u, *w, *psi)
    }
    fn allocation(&mut self, u: &Var) -> Var {
        Tape::allocation(self, *u)
    }
    fn precedence_update(&mut self, pr: &Var, w: &Var) -> Var {
        Tape::precedence_update(self, *pr, *w)
    }
    fn link_update(&mut self, l: &Var, pr: &Var, w: &Var) -> Var {
        Tape::link_update(self, *l, *pr, *w)
    }
}

/// Model dimensions. `input_width`/`output_width` come from the task
/// encoder; the rest are configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DncDims {
    pub input_width: usize,
    pub output_width: usize,
    /// Memory cells N.
    pub cells: usize,
    /// Word size C.
    pub word: usize,
    /// Controller hidden width H.
    pub hidden: usize,
    /// Read heads m.
    pub read_heads: usize,
}

impl DncDims {
    /// Width of the control vector ξ: C·m + 3C + 5m + 3.
    pub fn interface_len(&self) -> usize {
        self.word * self.read_heads + 3 * self.word + 5 * self.read_heads + 3
    }

    /// Controller input: task vector plus previous read values.
    pub fn controller_input(&self) -> usize {
        self.input_width + self.read_heads * self.word
    }

    pub fn layout(&self) -> InterfaceLayout {
        InterfaceLayout::new(self.word, self.read_heads)
    }
}

/// Learnable parameters. LSTM gate blocks are ordered
/// [input, forget, candidate, output]; the forget block of the bias is
/// initialized to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DncParams {
    pub dims: DncDims,
    pub lstm_w: Tensor,
    pub lstm_b: Tensor,
    pub iface_w: Tensor,
    pub iface_b: Tensor,
    pub output_w: Tensor,
    pub output_b: Tensor,
    pub readout_w: Tensor,
    pub readout_b: Tensor,
}

pub const PARAM_NAMES: [&str; 8] = [
    "lstm_w", "lstm_b", "iface_w", "iface_b", "output_w", "output_b", "readout_w", "readout_b",
];

impl DncParams {
    /// Uniform fan-in initialization, deterministic for the given stream.
    pub fn init(dims: DncDims, rng: &mut ChaCha8Rng) -> Self {
        let h = dims.hidden;
        let ctrl_in = dims.controller_input();
        let xi = dims.interface_len();
        let o = dims.output_width;
        let ro_in = o + dims.read_heads * dims.word;

        let mut uniform_mat = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng::uniform_in(rng, -bound, bound))
                .collect();
            Tensor { rows, cols, data }
        };

        let lstm_w = uniform_mat(4 * h, ctrl_in + h, ctrl_in + h);
        let mut lstm_b = Tensor::zeros(4 * h, 1);
        for j in h..2 * h {
            lstm_b.data[j] = 1.0;
        }
        let iface_w = uniform_mat(xi, h, h);
        let iface_b = Tensor::zeros(xi, 1);
        let output_w = uniform_mat(o, h, h);
        let output_b = Tensor::zeros(o, 1);
        let readout_w = uniform_mat(o, ro_in, ro_in);
        let readout_b = Tensor::zeros(o, 1);

        DncParams {
            dims,
            lstm_w,
            lstm_b,
            iface_w,
            iface_b,
            output_w,
            output_b,
            readout_w,
            readout_b,
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.lstm_w,
            &self.lstm_b,
            &self.iface_w,
            &self.iface_b,
            &self.output_w,
            &self.output_b,
            &self.readout_w,
            &self.readout_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.lstm_w,
            &mut self.lstm_b,
            &mut self.iface_w,
            &mut self.iface_b,
            &mut self.output_w,
            &mut self.output_b,
            &mut self.readout_w,
            &mut self.readout_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let checks = [
            ("lstm_w", self.lstm_w.shape(), (4 * d.hidden, d.controller_input() + d.hidden)),
            ("lstm_b", self.lstm_b.shape(), (4 * d.hidden, 1)),
            ("iface_w", self.iface_w.shape(), (d.interface_len(), d.hidden)),
            ("iface_b", self.iface_b.shape(), (d.interface_len(), 1)),
            ("output_w", self.output_w.shape(), (d.output_width, d.hidden)),
            ("output_b", self.output_b.shape(), (d.output_width, 1)),
            (
                "readout_w",
                self.readout_w.shape(),
                (d.output_width, d.output_width + d.read_heads * d.word),
            ),
            ("readout_b", self.readout_b.shape(), (d.output_width, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(DncError::shape(
                    "params",
                    format!("{name} {want:?}"),
                    format!("{got:?}"),
                ));
            }
        }
        Ok(())
    }
}

/// Parameter handles inside an engine.
pub struct ParamVars<V> {
    pub lstm_w: V,
    pub lstm_b: V,
    pub iface_w: V,
    pub iface_b: V,
    pub output_w: V,
    pub output_b: V,
    pub readout_w: V,
    pub readout_b: V,
}

impl<V: Clone> ParamVars<V> {
    pub fn vars(&self) -> [V; 8] {
        [
            self.lstm_w.clone(),
            self.lstm_b.clone(),
            self.iface_w.clone(),
            self.iface_b.clone(),
            self.output_w.clone(),
            self.output_b.clone(),
            self.readout_w.clone(),
            self.readout_b.clone(),
        ]
    }
}

pub fn inject_params<E: Engine>(eng: &mut E, p: &DncParams) -> ParamVars<E::V> {
    ParamVars {
        lstm_w: eng.constant(p.lstm_w.clone()),
        lstm_b: eng.constant(p.lstm_b.clone()),
        iface_w: eng.constant(p.iface_w.clone()),
        iface_b: eng.constant(p.iface_b.clone()),
        output_w: eng.constant(p.output_w.clone()),
        output_b: eng.constant(p.output_b.clone()),
        readout_w: eng.constant(p.readout_w.clone()),
        readout_b: eng.constant(p.readout_b.clone()),
    }
}

/// Full machine state threaded between timesteps.
pub struct DncState<V> {
    pub h: V,
    pub c: V,
    pub mem: V,
    pub usage: V,
    pub precedence: V,
    pub link: V,
    pub write_w: V,
    pub read_ws: Vec<V>,
    pub reads: Vec<V>,
}

impl<V: Clone> Clone for DncState<V> {
    fn clone(&self) -> Self {
        DncState {
            h: self.h.clone(),
            c: self.c.clone(),
            mem: self.mem.clone(),
            usage: self.usage.clone(),
            precedence: self.precedence.clone(),
            link: self.link.clone(),
            write_w: self.write_w.clone(),
            read_ws: self.read_ws.clone(),
            reads: self.reads.clone(),
        }
    }
}

/// Zero state with `cells` memory rows.
pub fn init_state<E: Engine>(eng: &mut E, dims: &DncDims, cells: usize) -> DncState<E::V> {
    let n = cells;
    DncState {
        h: eng.constant(Tensor::zeros(dims.hidden, 1)),
        c: eng.constant(Tensor::zeros(dims.hidden, 1)),
        mem: eng.constant(Tensor::zeros(n, dims.word)),
        usage: eng.constant(Tensor::zeros(n, 1)),
        precedence: eng.constant(Tensor::zeros(n, 1)),
        link: eng.constant(Tensor::zeros(n, n)),
        write_w: eng.constant(Tensor::zeros(n, 1)),
        read_ws: (0..dims.read_heads)
            .map(|_| eng.constant(Tensor::zeros(n, 1)))
            .collect(),
        reads: (0..dims.read_heads)
            .map(|_| eng.constant(Tensor::zeros(dims.word, 1)))
            .collect(),
    }
}

/// Temperatures applied to content lookups. Training runs at 1; memory
/// extension at inference recalibrates (write-side optionally pinned to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperatures {
    pub read: f64,
    pub write: f64,
}

impl Temperatures {
    pub fn unit() -> Self {
        Temperatures { read: 1.0, write: 1.0 }
    }

    /// τ applied to both heads, or reads only when restricted.
    pub fn from_tau(tau: f64, restrict_to_reads: bool) -> Self {
        Temperatures {
            read: tau,
            write: if restrict_to_reads { 1.0 } else { tau },
        }
    }
}

/// Interface signal handles produced during a step, exposed for tracing.
pub struct StepSignals<V> {
    pub beta_write: V,
    pub beta_read: Vec<V>,
}

pub struct StepOutput<V> {
    pub logits: V,
    pub state: DncState<V>,
    pub signals: StepSignals<V>,
}

/// One full DNC timestep: controller, interface parse, write addressing,
/// memory update, temporal links, read addressing, and output readout.
pub fn dnc_step<E: Engine>(
    eng: &mut E,
    params: &ParamVars<E::V>,
    dims: &DncDims,
    state: &DncState<E::V>,
    x: &E::V,
    taus: Temperatures,
) -> StepOutput<E::V> {
    let lay = dims.layout();
    let m_heads = dims.read_heads;

    // Controller: input is [x_t; r_{t-1}^1; ..; r_{t-1}^m].
    let mut ctrl_in_parts = vec![x.clone()];
    ctrl_in_parts.extend(state.reads.iter().cloned());
    let ctrl_in = eng.concat(&ctrl_in_parts);
    let (h, c) = lstm_step(eng, &params.lstm_w, &params.lstm_b, dims.hidden, &ctrl_in, &state.h, &state.c);

    // Control vector ξ and its typed fields.
    let xi = eng.affine(&params.iface_w, &h, &params.iface_b);
    let read_keys: Vec<E::V> = (0..m_heads)
        .map(|i| eng.slice(&xi, lay.read_key(i), dims.word))
        .collect();
    let read_strengths: Vec<E::V> = (0..m_heads)
        .map(|i| {
            let raw = eng.slice(&xi, lay.read_strength(i), 1);
            eng.oneplus(&raw)
        })
        .collect();
    let write_key = eng.slice(&xi, lay.write_key(), dims.word);
    let write_strength = {
        let raw = eng.slice(&xi, lay.write_strength(), 1);
        eng.oneplus(&raw)
    };
    let erase = {
        let raw = eng.slice(&xi, lay.erase(), dims.word);
        eng.sigmoid(&raw)
    };
    let write_vec = eng.slice(&xi, lay.write_vec(), dims.word);
    let free_gates = {
        let raw = eng.slice(&xi, lay.free_gates(), m_heads);
        eng.sigmoid(&raw)
    };
    let alloc_gate = {
        let raw = eng.slice(&xi, lay.alloc_gate(), 1);
        eng.sigmoid(&raw)
    };
    let write_gate = {
        let raw = eng.slice(&xi, lay.write_gate(), 1);
        eng.sigmoid(&raw)
    };
    let read_modes: Vec<E::V> = (0..m_heads)
        .map(|i| {
            let raw = eng.slice(&xi, lay.read_modes(i), 3);
            eng.softmax(&raw)
        })
        .collect();

    // Dynamic allocation from retention and usage.
    let psi = eng.retention(&state.read_ws, &free_gates);
    let usage = eng.usage_update(&state.usage, &state.write_w, &psi);
    let alloc_w = eng.allocation(&usage);

    // Write weighting: gated blend of allocation and content lookup.
    let write_scores = eng.content_scores(&state.mem, &write_key);
    let write_content = eng.scaled_softmax(&write_scores, &write_strength, 1.0 / taus.write);
    let ga_alloc = eng.mul_scalar(&alloc_w, &alloc_gate);
    let inv_gate = eng.one_minus(&alloc_gate);
    let ga_content = eng.mul_scalar(&write_content, &inv_gate);
    let blended = eng.add(&ga_alloc, &ga_content);
    let write_w = eng.mul_scalar(&blended, &write_gate);

    // Memory write, then temporal link bookkeeping.
    let mem = eng.write_memory(&state.mem, &write_w, &erase, &write_vec);
    let link = eng.link_update(&state.link, &state.precedence, &write_w);
    let precedence = eng.precedence_update(&state.precedence, &write_w);

    // Read addressing: directional + content, mixed per head.
    let mut read_ws = Vec::with_capacity(m_heads);
    let mut reads = Vec::with_capacity(m_heads);
    for i in 0..m_heads {
        let fwd = eng.matvec(&link, &state.read_ws[i]);
        let bwd = eng.matvec_t(&link, &state.read_ws[i]);
        let scores = eng.content_scores(&mem, &read_keys[i]);
        let content = eng.scaled_softmax(&scores, &read_strengths[i], 1.0 / taus.read);

        let pi_b = eng.slice(&read_modes[i], 0, 1);
        let pi_c = eng.slice(&read_modes[i], 1, 1);
        let pi_f = eng.slice(&read_modes[i], 2, 1);
        let part_b = eng.mul_scalar(&bwd, &pi_b);
        let part_c = eng.mul_scalar(&content, &pi_c);
        let part_f = eng.mul_scalar(&fwd, &pi_f);
        let bc = eng.add(&part_b, &part_c);
        let w_r = eng.add(&bc, &part_f);

        let r = eng.matvec_t(&mem, &w_r);
        read_ws.push(w_r);
        reads.push(r);
    }

    // Output: ν from the controller, refined by the fresh reads.
    let nu = eng.affine(&params.output_w, &h, &params.output_b);
    let mut ro_parts = vec![nu];
    ro_parts.extend(reads.iter().cloned());
    let ro_in = eng.concat(&ro_parts);
    let logits = eng.affine(&params.readout_w, &ro_in, &params.readout_b);

    StepOutput {
        logits,
        state: DncState {
            h,
            c,
            mem,
            usage,
            precedence,
            link,
            write_w,
            read_ws,
            reads,
        },
        signals: StepSignals {
            beta_write: write_strength,
            beta_read: read_strengths,
        },
    }
}

/// Single-layer LSTM cell update. Gate blocks: [input, forget, candidate, output].
pub fn lstm_step<E: Engine>(
    eng: &mut E,
    w: &E::V,
    b: &E::V,
    hidden: usize,
    x: &E::V,
    h_prev: &E::V,
    c_prev: &E::V,
) -> (E::V, E::V) {
    let joined = eng.concat(&[x.clone(), h_prev.clone()]);
    let gates = eng.affine(w, &joined, b);
    let i_raw = eng.slice(&gates, 0, hidden);
    let f_raw = eng.slice(&gates, hidden, hidden);
    let g_raw = eng.slice(&gates, 2 * hidden, hidden);
    let o_raw = eng.slice(&gates, 3 * hidden, hidden);
    let i = eng.sigmoid(&i_raw);
    let f = eng.sigmoid(&f_raw);
    let g = eng.tanh(&g_raw);
    let o = eng.sigmoid(&o_raw);
    let fc = eng.mul(&f, c_prev);
    let ig = eng.mul(&i, &g);
    let c = eng.add(&fc, &ig);
    let ct = eng.tanh(&c);
    let h = eng.mul(&o, &ct);
    (h, c)
}
