//! Controller surface: the recurrent state machine that emits the output
//! vector ν_t and the control vector ξ_t, plus the typed view of ξ_t.

use crate::error::{DncError, Result};
use crate::math;
use crate::model::{lstm_step, DncParams, Engine, PlainEngine};
use crate::tensor::Tensor;

/// Field offsets inside the control vector ξ.
///
/// Layout, for word size C and m read heads (total C·m + 3C + 5m + 3):
/// read keys (m·C), read strengths (m), write key (C), write strength (1),
/// erase (C), write vector (C), free gates (m), allocation gate (1),
/// write gate (1), read modes (3·m).
#[derive(Debug, Clone, Copy)]
pub struct InterfaceLayout {
    word: usize,
    heads: usize,
}

impl InterfaceLayout {
    pub fn new(word: usize, heads: usize) -> Self {
        InterfaceLayout { word, heads }
    }

    pub fn len(&self) -> usize {
        self.word * self.heads + 3 * self.word + 5 * self.heads + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn read_key(&self, i: usize) -> usize {
        i * self.word
    }
    pub fn read_strength(&self, i: usize) -> usize {
        self.heads * self.word + i
    }
    pub fn write_key(&self) -> usize {
        self.heads * self.word + self.heads
    }
    pub fn write_strength(&self) -> usize {
        self.write_key() + self.word
    }
    pub fn erase(&self) -> usize {
        self.write_strength() + 1
    }
    pub fn write_vec(&self) -> usize {
        self.erase() + self.word
    }
    pub fn free_gates(&self) -> usize {
        self.write_vec() + self.word
    }
    pub fn alloc_gate(&self) -> usize {
        self.free_gates() + self.heads
    }
    pub fn write_gate(&self) -> usize {
        self.alloc_gate() + 1
    }
    pub fn read_modes(&self, i: usize) -> usize {
        self.write_gate() + 1 + 3 * i
    }
}

/// Hidden/cell activations of the single-layer recurrent unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ControllerState {
    pub fn zero(hidden: usize) -> Self {
        ControllerState {
            h: Tensor::zeros(hidden, 1),
            c: Tensor::zeros(hidden, 1),
        }
    }
}

/// Parsed control vector: all fields activated into their documented ranges.
#[derive(Debug, Clone)]
pub struct InterfaceSignals {
    pub read_keys: Vec<Tensor>,
    /// `oneplus`-activated, each ≥ 1.
    pub read_strengths: Vec<f64>,
    /// Per head, a 3-simplex (backward, content, forward).
    pub read_modes: Vec<Tensor>,
    pub free_gates: Vec<f64>,
    pub write_key: Tensor,
    pub write_strength: f64,
    pub erase: Tensor,
    pub write_vec: Tensor,
    pub alloc_gate: f64,
    pub write_gate: f64,
}

/// Split a raw ξ_t into typed signals: strengths via `oneplus`, gates and
/// erase via the logistic, modes via softmax, keys and write values raw.
pub fn parse_interface(xi: &Tensor, word: usize, heads: usize) -> Result<InterfaceSignals> {
    let lay = InterfaceLayout::new(word, heads);
    if xi.len() != lay.len() {
        return Err(DncError::shape(
            "parse_interface",
            format!("xi of length {}", lay.len()),
            format!("{}", xi.len()),
        ));
    }
    let grab = |start: usize, len: usize| math::slice(xi, start, len);
    Ok(InterfaceSignals {
        read_keys: (0..heads).map(|i| grab(lay.read_key(i), word)).collect(),
        read_strengths: (0..heads)
            .map(|i| math::oneplus_scalar(xi.data[lay.read_strength(i)]))
            .collect(),
        read_modes: (0..heads)
            .map(|i| math::softmax(&grab(lay.read_modes(i), 3)))
            .collect(),
        free_gates: (0..heads)
            .map(|i| math::sigmoid_scalar(xi.data[lay.free_gates() + i]))
            .collect(),
        write_key: grab(lay.write_key(), word),
        write_strength: math::oneplus_scalar(xi.data[lay.write_strength()]),
        erase: math::sigmoid(&grab(lay.erase(), word)),
        write_vec: grab(lay.write_vec(), word),
        alloc_gate: math::sigmoid_scalar(xi.data[lay.alloc_gate()]),
        write_gate: math::sigmoid_scalar(xi.data[lay.write_gate()]),
    })
}

/// One controller step: consumes the task input and previous read values,
/// emits (ν_t, ξ_t) and the next recurrent state. Pure in its arguments.
pub fn step(
    params: &DncParams,
    x: &Tensor,
    prev_reads: &[Tensor],
    state: &ControllerState,
) -> Result<(Tensor, Tensor, ControllerState)> {
    let dims = &params.dims;
    if x.len() != dims.input_width {
        return Err(DncError::shape(
            "controller::step",
            format!("input width {}", dims.input_width),
            format!("{}", x.len()),
        ));
    }
    if prev_reads.len() != dims.read_heads || prev_reads.iter().any(|r| r.len() != dims.word) {
        return Err(DncError::shape(
            "controller::step",
            format!("{} read values of length {}", dims.read_heads, dims.word),
            format!(
                "{} values of lengths {:?}",
                prev_reads.len(),
                prev_reads.iter().map(|r| r.len()).collect::<Vec<_>>()
            ),
        ));
    }

    let mut eng = PlainEngine;
    let w = eng.constant(params.lstm_w.clone());
    let b = eng.constant(params.lstm_b.clone());
    let mut parts = vec![eng.constant(x.clone())];
    for r in prev_reads {
        parts.push(eng.constant(r.clone()));
    }
    let ctrl_in = eng.concat(&parts);
    let h_prev = eng.constant(state.h.clone());
    let c_prev = eng.constant(state.c.clone());
    let (h, c) = lstm_step(&mut eng, &w, &b, dims.hidden, &ctrl_in, &h_prev, &c_prev);

    let nu = math::affine(&params.output_w, &h, &params.output_b);
    let xi = math::affine(&params.iface_w, &h, &params.iface_b);
    Ok((
        nu,
        xi,
        ControllerState {
            h: (*h).clone(),
            c: (*c).clone(),
        },
    ))
}

/// Final output logits: an affine map of [ν_t; r_t¹..r_tᵐ].
pub fn emit_output(params: &DncParams, nu: &Tensor, reads: &[Tensor]) -> Result<Tensor> {
    let dims = &params.dims;
    if nu.len() != dims.output_width || reads.len() != dims.read_heads {
        return Err(DncError::shape(
            "emit_output",
            format!("nu width {}, {} reads", dims.output_width, dims.read_heads),
            format!("nu width {}, {} reads", nu.len(), reads.len()),
        ));
    }
    let mut parts: Vec<&Tensor> = vec![nu];
    for r in reads {
        parts.push(r);
    }
    let joined = math::concat(&parts);
    Ok(math::affine(&params.readout_w, &joined, &params.readout_b))
}
