//! Episode execution: the description / query / planning / answer phase
//! state machine, token channels, answer feedback, and teacher forcing.
//!
//! Phase layout: the ⟨eoi⟩ bit rides on the first query step (for tasks
//! without a query it moves to the first step of the next phase); planning
//! inputs are zero vectors apart from channel bits; the ⟨ans⟩ bit is active
//! on every answer step. The answer phase starts at
//! `t_a = description_len + query_len + p`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::BudgetPolicy;
use crate::error::{DncError, Result};
use crate::memory::{self, AdaptiveMemoryConfig, ExtendMode, MemoryState};
use crate::model::{
    dnc_step, init_state, inject_params, DncParams, DncState, Engine, ParamVars, PlainEngine,
    StepOutput, Temperatures,
};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tasks::{AnswerStep, Encoding, TaskInstance};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Description,
    Query,
    Planning,
    Answer,
}

/// Phase boundaries and channel plan for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSchedule {
    pub description_len: usize,
    pub query_len: usize,
    pub planning_steps: usize,
    /// Answer steps executed in training (target length, terminator
    /// included); inference decodes up to `max_answer_len`.
    pub answer_len: usize,
    /// Answer-phase start: description_len + query_len + planning_steps.
    pub t_a: usize,
    pub max_answer_len: usize,
}

impl EpisodeSchedule {
    /// Timesteps executed in training mode.
    pub fn total_steps(&self) -> usize {
        self.t_a + self.answer_len
    }

    pub fn phase_of(&self, t: usize) -> Phase {
        if t < self.description_len {
            Phase::Description
        } else if t < self.description_len + self.query_len {
            Phase::Query
        } else if t < self.t_a {
            Phase::Planning
        } else {
            Phase::Answer
        }
    }

    /// Step index carrying the ⟨eoi⟩ bit: query onset, or the next phase's
    /// first step when the task has no query.
    pub fn eoi_step(&self) -> usize {
        self.description_len
    }
}

/// Build the schedule for an instance under a budget policy. Stochastic
/// extra planning steps (when the policy enables them) are drawn once per
/// episode from `budget_rng`.
pub fn build_schedule(
    instance: &TaskInstance,
    enc: &Encoding,
    policy: &BudgetPolicy,
    budget_rng: &mut ChaCha8Rng,
    max_answer_len: usize,
) -> Result<EpisodeSchedule> {
    let meta = instance.budget_meta();
    let base = policy.planning_steps(&meta)?;
    let extra = policy.extra_steps(base, budget_rng)?;
    let p = (base + extra) as usize;

    let description_len = enc.description_steps(instance)?.len();
    let query_len = enc.query_steps(instance)?.len();
    let answer_len = instance.target.len();
    Ok(EpisodeSchedule {
        description_len,
        query_len,
        planning_steps: p,
        answer_len,
        t_a: description_len + query_len + p,
        max_answer_len: max_answer_len.max(answer_len),
    })
}

/// Teacher-forcing mixed policy: in training, return the ground-truth token
/// with probability `mix_ratio`, otherwise the model's own argmax decode;
/// inference always decodes the prediction. One draw per answer step.
pub fn mixed_feedback(
    prev_logits: &Tensor,
    prev_target: Option<&AnswerStep>,
    mix_ratio: f64,
    mode: RunMode,
    rng: &mut ChaCha8Rng,
    enc: &Encoding,
) -> Result<AnswerStep> {
    match mode {
        RunMode::Infer => enc.decode_logits(prev_logits),
        RunMode::Train => {
            let coin = rng::uniform(rng);
            let target = prev_target
                .ok_or_else(|| DncError::Data("training feedback requires a target".into()))?;
            if coin < mix_ratio {
                Ok(*target)
            } else {
                enc.decode_logits(prev_logits)
            }
        }
    }
}

/// One traced timestep. Weightings are full distributions; β values are the
/// activated strengths (write head first).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub phase: Phase,
    pub write_w: Vec<f64>,
    pub read_ws: Vec<Vec<f64>>,
    pub beta_write: f64,
    pub beta_read: Vec<f64>,
    pub tau: f64,
    pub alloc_frac: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
}

/// Per-phase β accumulators (mergeable).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseStats {
    pub beta_sum: f64,
    pub beta_sumsq: f64,
    pub beta_count: u64,
}

impl PhaseStats {
    fn push(&mut self, beta: f64) {
        self.beta_sum += beta;
        self.beta_sumsq += beta * beta;
        self.beta_count += 1;
    }

    pub fn merge(&mut self, other: &PhaseStats) {
        self.beta_sum += other.beta_sum;
        self.beta_sumsq += other.beta_sumsq;
        self.beta_count += other.beta_count;
    }

    pub fn mean(&self) -> f64 {
        if self.beta_count == 0 {
            return 0.0;
        }
        self.beta_sum / self.beta_count as f64
    }

    pub fn std(&self) -> f64 {
        if self.beta_count == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.beta_sumsq / self.beta_count as f64 - m * m).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub description: PhaseStats,
    pub planning: PhaseStats,
    pub answer: PhaseStats,
    pub alloc_frac_sum: f64,
    pub alloc_frac_steps: u64,
    pub final_cells: usize,
    pub final_tau: f64,
    pub extensions: usize,
}

impl EpisodeStats {
    fn phase_slot(&mut self, phase: Phase) -> &mut PhaseStats {
        match phase {
            Phase::Description | Phase::Query => &mut self.description,
            Phase::Planning => &mut self.planning,
            Phase::Answer => &mut self.answer,
        }
    }

    pub fn alloc_frac_mean(&self) -> f64 {
        if self.alloc_frac_steps == 0 {
            return 0.0;
        }
        self.alloc_frac_sum / self.alloc_frac_steps as f64
    }
}

/// Memory-size policy at inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryStrategy {
    /// Training-shape memory, τ = 1.
    Fixed,
    /// One up-front extension by `factor`, running at `tau`.
    FixedExtended { factor: usize, tau: f64 },
    /// Grow on allocation pressure per the adaptive rule.
    Adaptive(AdaptiveMemoryConfig),
}

#[derive(Debug, Clone)]
pub struct InferOptions {
    pub strategy: MemoryStrategy,
    /// Apply τ to read-head lookups only, leaving the write lookup at 1.
    pub restrict_tau_to_reads: bool,
    pub record_trace: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            strategy: MemoryStrategy::Fixed,
            restrict_tau_to_reads: false,
            record_trace: false,
        }
    }
}

/// Result of a free-running inference episode.
#[derive(Debug, Clone)]
pub struct InferRun {
    /// Decoded answer tokens; includes the terminator when one was emitted.
    pub prediction: Vec<AnswerStep>,
    pub stats: EpisodeStats,
    pub trace: Option<EpisodeTrace>,
    pub steps_executed: usize,
}

/// Result of a taped training episode: the answer-phase logit vars and
/// their per-head targets, ready for the loss.
pub struct TrainRun {
    pub answer_logits: Vec<Var>,
    pub targets: Vec<Vec<usize>>,
    pub trace: Option<EpisodeTrace>,
}

fn assemble_input(enc: &Encoding, schedule: &EpisodeSchedule, t: usize, data: Option<&Tensor>) -> Tensor {
    let mut x = data.cloned().unwrap_or_else(|| Tensor::zeros(enc.input_width(), 1));
    if t == schedule.eoi_step() {
        x.data[enc.eoi_channel()] = 1.0;
    }
    if schedule.phase_of(t) == Phase::Answer {
        x.data[enc.ans_channel()] = 1.0;
    }
    x
}

#[allow(clippy::too_many_arguments)]
fn record_step<E: Engine>(
    eng: &E,
    out: &StepOutput<E::V>,
    t: usize,
    phase: Phase,
    tau: f64,
    cutoff: f64,
    stats: &mut EpisodeStats,
    trace: Option<&mut EpisodeTrace>,
    output_logits: Option<Vec<f64>>,
) {
    let beta_w = eng.value(&out.signals.beta_write).item();
    let betas_r: Vec<f64> = out.signals.beta_read.iter().map(|b| eng.value(b).item()).collect();
    let usage = eng.value(&out.state.usage);
    let hot = usage.iter().filter(|&&u| u > cutoff).count();
    let alloc_frac = hot as f64 / usage.len() as f64;

    let slot = stats.phase_slot(phase);
    slot.push(beta_w);
    for b in &betas_r {
        slot.push(*b);
    }
    stats.alloc_frac_sum += alloc_frac;
    stats.alloc_frac_steps += 1;

    if let Some(trace) = trace {
        trace.steps.push(TraceStep {
            t,
            phase,
            write_w: eng.value(&out.state.write_w).data.clone(),
            read_ws: out.state.read_ws.iter().map(|w| eng.value(w).data.clone()).collect(),
            beta_write: beta_w,
            beta_read: betas_r,
            tau,
            alloc_frac,
            output: output_logits,
        });
    }
}

fn capacity_preflight(schedule: &EpisodeSchedule, cells: usize, adaptive: bool) -> Result<()> {
    let stored = schedule.description_len + schedule.query_len;
    if !adaptive && stored > cells {
        return Err(DncError::Capacity(format!(
            "{stored} input steps exceed {cells} memory cells and extension is not enabled"
        )));
    }
    Ok(())
}

/// Execute a training episode on the tape with teacher-forcing feedback.
/// Memory shape is fixed at `dims.cells`; exactly `schedule.answer_len`
/// answer outputs are produced.
#[allow(clippy::too_many_arguments)]
pub fn run_training_episode(
    tape: &mut Tape,
    pvars: &ParamVars<Var>,
    params: &DncParams,
    enc: &Encoding,
    instance: &TaskInstance,
    schedule: &EpisodeSchedule,
    mix_ratio: f64,
    feedback_rng: &mut ChaCha8Rng,
    record_trace: bool,
) -> Result<TrainRun> {
    capacity_preflight(schedule, params.dims.cells, false)?;
    let dims = &params.dims;
    let description = enc.description_steps(instance)?;
    let query = enc.query_steps(instance)?;
    let taus = Temperatures::unit();
    let cutoff = AdaptiveMemoryConfig::default().usage_cell_cutoff;

    let mut state: DncState<Var> = init_state(tape, dims, dims.cells);
    let mut stats = EpisodeStats {
        final_cells: dims.cells,
        final_tau: 1.0,
        ..Default::default()
    };
    let mut trace = record_trace.then(EpisodeTrace::default);
    let mut answer_logits: Vec<Var> = Vec::with_capacity(schedule.answer_len);
    let mut targets = Vec::with_capacity(schedule.answer_len);

    for t in 0..schedule.total_steps() {
        let phase = schedule.phase_of(t);
        let data: Option<Tensor> = match phase {
            Phase::Description => Some(description[t].clone()),
            Phase::Query => Some(query[t - schedule.description_len].clone()),
            Phase::Planning => None,
            Phase::Answer => {
                let a = t - schedule.t_a;
                if a == 0 {
                    None // answer cue step
                } else {
                    let prev_logits = tape.value(*answer_logits.last().unwrap()).clone();
                    let token = mixed_feedback(
                        &prev_logits,
                        Some(&instance.target[a - 1]),
                        mix_ratio,
                        RunMode::Train,
                        feedback_rng,
                        enc,
                    )?;
                    Some(enc.feedback(instance, &token)?)
                }
            }
        };
        let x = assemble_input(enc, schedule, t, data.as_ref());
        let x = tape.leaf(x);
        let out = dnc_step(tape, pvars, dims, &state, &x, taus);

        let output_logits = if phase == Phase::Answer {
            let a = t - schedule.t_a;
            answer_logits.push(out.logits);
            targets.push(enc.target_indices(&instance.target[a])?);
            record_trace.then(|| tape.value(out.logits).data.clone())
        } else {
            None
        };
        record_step(tape, &out, t, phase, 1.0, cutoff, &mut stats, trace.as_mut(), output_logits);
        state = out.state;
    }
    debug_assert_eq!(answer_logits.len(), schedule.answer_len);
    Ok(TrainRun {
        answer_logits,
        targets,
        trace,
    })
}

/// Execute a free-running inference episode: answer decoding stops at the
/// terminator or after `max_answer_len` steps. Memory may grow per the
/// strategy; τ recalibrates on extension.
pub fn run_inference_episode(
    params: &DncParams,
    enc: &Encoding,
    instance: &TaskInstance,
    schedule: &EpisodeSchedule,
    opts: &InferOptions,
) -> Result<InferRun> {
    let dims = &params.dims;
    let mut eng = PlainEngine;
    let pvars = inject_params(&mut eng, params);

    let (mut cells, mut tau, adaptive_cfg) = match opts.strategy {
        MemoryStrategy::Fixed => (dims.cells, 1.0, None),
        MemoryStrategy::FixedExtended { factor, tau } => {
            if factor < 2 {
                return Err(DncError::Config(format!("extension factor must be >= 2, got {factor}")));
            }
            (dims.cells * factor, tau, None)
        }
        MemoryStrategy::Adaptive(cfg) => {
            cfg.validate()?;
            (dims.cells, 1.0, Some(cfg))
        }
    };
    capacity_preflight(schedule, cells, adaptive_cfg.is_some())?;
    let cutoff = adaptive_cfg
        .map(|c| c.usage_cell_cutoff)
        .unwrap_or(AdaptiveMemoryConfig::default().usage_cell_cutoff);

    let mut state: DncState<std::rc::Rc<Tensor>> = init_state(&mut eng, dims, cells);
    let mut stats = EpisodeStats::default();
    let mut trace = opts.record_trace.then(EpisodeTrace::default);
    let mut extensions = 0usize;

    let description = enc.description_steps(instance)?;
    let query = enc.query_steps(instance)?;
    let mut prediction: Vec<AnswerStep> = Vec::new();
    let mut t = 0usize;

    loop {
        let phase = schedule.phase_of(t);
        let data: Option<Tensor> = match phase {
            Phase::Description => Some(description[t].clone()),
            Phase::Query => Some(query[t - schedule.description_len].clone()),
            Phase::Planning => None,
            Phase::Answer => {
                if t == schedule.t_a {
                    None
                } else {
                    let token = *prediction.last().unwrap();
                    Some(enc.feedback(instance, &token)?)
                }
            }
        };
        let x = assemble_input(enc, schedule, t, data.as_ref());
        let xv = eng.constant(x);
        let taus = Temperatures::from_tau(tau, opts.restrict_tau_to_reads);
        let out = dnc_step(&mut eng, &pvars, dims, &state, &xv, taus);

        let output_logits =
            (phase == Phase::Answer && opts.record_trace).then(|| eng.value(&out.logits).data.clone());
        record_step(&eng, &out, t, phase, tau, cutoff, &mut stats, trace.as_mut(), output_logits);

        if phase == Phase::Answer {
            let logits = eng.value(&out.logits).clone();
            let token = enc.decode_logits(&logits)?;
            prediction.push(token);
            if token == AnswerStep::Stop || prediction.len() >= schedule.max_answer_len {
                t += 1;
                break;
            }
        }
        state = out.state;
        t += 1;

        // Adaptive growth check after each step.
        if let Some(cfg) = adaptive_cfg {
            let frac = {
                let usage = eng.value(&state.usage);
                let hot = usage.iter().filter(|&&u| u > cfg.usage_cell_cutoff).count();
                hot as f64 / usage.len() as f64
            };
            if frac > cfg.alloc_threshold {
                let mut mem_state = to_memory_state(&eng, &state);
                let outcome =
                    memory::adaptive_extend(&mut mem_state, tau, &cfg, ExtendMode::Auto, &mut extensions)?;
                if outcome.extended {
                    tau = outcome.tau;
                    cells = mem_state.cells();
                    state = from_memory_state(&mut eng, mem_state, &state);
                }
            }
        }
    }

    stats.final_cells = cells;
    stats.final_tau = tau;
    stats.extensions = extensions;
    Ok(InferRun {
        prediction,
        stats,
        trace,
        steps_executed: t,
    })
}

fn to_memory_state(eng: &PlainEngine, s: &DncState<std::rc::Rc<Tensor>>) -> MemoryState {
    MemoryState {
        mem: eng.value(&s.mem).clone(),
        usage: eng.value(&s.usage).clone(),
        precedence: eng.value(&s.precedence).clone(),
        link: eng.value(&s.link).clone(),
        write_w: eng.value(&s.write_w).clone(),
        read_ws: s.read_ws.iter().map(|w| eng.value(w).clone()).collect(),
        read_values: s.reads.iter().map(|r| eng.value(r).clone()).collect(),
    }
}

fn from_memory_state(
    eng: &mut PlainEngine,
    m: MemoryState,
    prev: &DncState<std::rc::Rc<Tensor>>,
) -> DncState<std::rc::Rc<Tensor>> {
    DncState {
        h: prev.h.clone(),
        c: prev.c.clone(),
        mem: eng.constant(m.mem),
        usage: eng.constant(m.usage),
        precedence: eng.constant(m.precedence),
        link: eng.constant(m.link),
        write_w: eng.constant(m.write_w),
        read_ws: m.read_ws.into_iter().map(|w| eng.constant(w)).collect(),
        reads: m.read_values.into_iter().map(|r| eng.constant(r)).collect(),
    }
}

/// Validate every traced weighting against the memory invariants.
pub fn validate_trace(trace: &EpisodeTrace, tol: f64) -> Result<()> {
    for step in &trace.steps {
        for (name, w) in
            std::iter::once(("write", &step.write_w)).chain(step.read_ws.iter().map(|w| ("read", w)))
        {
            let mut sum = 0.0;
            for &v in w {
                if !(-tol..=1.0 + tol).contains(&v) {
                    return Err(DncError::rejected(
                        "trace",
                        format!("{name} weighting entry {v} at t={}", step.t),
                    ));
                }
                sum += v;
            }
            if sum > 1.0 + tol {
                return Err(DncError::rejected(
                    "trace",
                    format!("{name} weighting sums to {sum} at t={}", step.t),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{BudgetKind, StochasticExtra};
    use crate::model::DncDims;
    use crate::rng::{RootSeed, Stream};
    use crate::tasks::{self, LessonSpec, TaskKind};

    fn small_params(enc: &Encoding, cells: usize) -> DncParams {
        let dims = DncDims {
            input_width: enc.input_width(),
            output_width: enc.output_width(),
            cells,
            word: 8,
            hidden: 12,
            read_heads: 2,
        };
        let mut rng = RootSeed(77).stream(Stream::Init);
        DncParams::init(dims, &mut rng)
    }

    fn sp_instance(seed: u64) -> TaskInstance {
        let lesson = LessonSpec::ShortestPath {
            nodes: (5, 8),
            avg_degree: (1.0, 2.0),
            path_len: (2, 2),
        };
        let mut rng = RootSeed(seed).stream(Stream::Dataset(0));
        tasks::generate(&lesson, 1, seed, &mut rng, true).unwrap()
    }

    #[test]
    fn schedule_identity_for_shortest_path() {
        // m description steps, one query step, p planning steps.
        let inst = sp_instance(3);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let policy = BudgetPolicy::constant(10);
        let mut rng = RootSeed(0).stream(Stream::Budget);
        let s = build_schedule(&inst, &enc, &policy, &mut rng, 20).unwrap();
        let m = inst.meta.edges.unwrap();
        assert_eq!(s.description_len, m);
        assert_eq!(s.query_len, 1);
        assert_eq!(s.t_a, m + 1 + 10);
        assert_eq!(s.total_steps(), s.t_a + inst.target.len());
    }

    #[test]
    fn zero_planning_starts_answer_after_query() {
        let inst = sp_instance(4);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let policy = BudgetPolicy::constant(0);
        let mut rng = RootSeed(0).stream(Stream::Budget);
        let s = build_schedule(&inst, &enc, &policy, &mut rng, 20).unwrap();
        assert_eq!(s.t_a, s.description_len + s.query_len);
        assert_eq!(s.phase_of(s.t_a), Phase::Answer);
        assert_eq!(s.phase_of(s.t_a - 1), Phase::Query);
    }

    #[test]
    fn eoi_once_and_ans_throughout() {
        let inst = sp_instance(5);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let policy = BudgetPolicy::constant(4);
        let mut rng = RootSeed(0).stream(Stream::Budget);
        let s = build_schedule(&inst, &enc, &policy, &mut rng, 20).unwrap();
        let mut eoi_count = 0;
        for t in 0..s.total_steps() {
            let x = assemble_input(&enc, &s, t, None);
            if x.data[enc.eoi_channel()] != 0.0 {
                eoi_count += 1;
                assert_eq!(t, s.description_len, "eoi rides on the query step");
            }
            let in_answer = t >= s.t_a;
            assert_eq!(x.data[enc.ans_channel()] != 0.0, in_answer);
            if s.phase_of(t) == Phase::Planning {
                for (i, &v) in x.data.iter().enumerate() {
                    if i != enc.eoi_channel() && i != enc.ans_channel() {
                        assert_eq!(v, 0.0, "planning data channels must be zero");
                    }
                }
            }
        }
        assert_eq!(eoi_count, 1);
    }

    #[test]
    fn mincut_eoi_moves_to_first_planning_step() {
        let lesson = LessonSpec::MinCut {
            nodes: (10, 12),
            clusters: (2, 2),
            cut: (1, 1),
            max_degree: 3,
        };
        let mut grng = RootSeed(1).stream(Stream::Dataset(1));
        let inst = tasks::generate(&lesson, 1, 1, &mut grng, false).unwrap();
        let enc = Encoding::default_for(TaskKind::MinCut);
        let policy = BudgetPolicy::constant(6);
        let mut rng = RootSeed(0).stream(Stream::Budget);
        let s = build_schedule(&inst, &enc, &policy, &mut rng, 20).unwrap();
        assert_eq!(s.query_len, 0);
        assert_eq!(s.eoi_step(), s.description_len);
        assert_eq!(s.phase_of(s.eoi_step()), Phase::Planning);
    }

    #[test]
    fn mixed_feedback_boundaries_and_frequency() {
        let enc = Encoding::default_for(TaskKind::AssociativeRecall);
        let mut logits = Tensor::zeros(enc.output_width(), 1);
        logits.data[3] = 9.0; // decodes to Digit(2)
        let target = AnswerStep::Digit(7);
        let mut rng = RootSeed(2).stream(Stream::Feedback);

        for _ in 0..50 {
            let t = mixed_feedback(&logits, Some(&target), 1.0, RunMode::Train, &mut rng, &enc).unwrap();
            assert_eq!(t, target, "rho = 1 is pure teacher forcing");
            let m = mixed_feedback(&logits, Some(&target), 0.0, RunMode::Train, &mut rng, &enc).unwrap();
            assert_eq!(m, AnswerStep::Digit(2), "rho = 0 always uses the model");
            let inf = mixed_feedback(&logits, None, 0.9, RunMode::Infer, &mut rng, &enc).unwrap();
            assert_eq!(inf, AnswerStep::Digit(2));
        }

        let n = 10_000;
        let mut truth = 0;
        for _ in 0..n {
            let t = mixed_feedback(&logits, Some(&target), 0.5, RunMode::Train, &mut rng, &enc).unwrap();
            if t == target {
                truth += 1;
            }
        }
        let freq = truth as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "ground-truth frequency {freq}");
    }

    #[test]
    fn training_episode_emits_target_len_outputs_and_valid_trace() {
        let inst = sp_instance(6);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let params = small_params(&enc, 24);
        let policy = BudgetPolicy {
            kind: BudgetKind::Constant { c: 3 },
            stochastic: StochasticExtra::Off,
            confidence: 0.95,
        };
        let mut brng = RootSeed(1).stream(Stream::Budget);
        let schedule = build_schedule(&inst, &enc, &policy, &mut brng, 20).unwrap();

        let mut tape = Tape::new();
        let pvars = inject_params(&mut tape, &params);
        let mut frng = RootSeed(1).stream(Stream::Feedback);
        let run =
            run_training_episode(&mut tape, &pvars, &params, &enc, &inst, &schedule, 0.9, &mut frng, true)
                .unwrap();
        assert_eq!(run.answer_logits.len(), inst.target.len());
        let trace = run.trace.unwrap();
        assert_eq!(trace.steps.len(), schedule.total_steps());
        validate_trace(&trace, 1e-6).unwrap();
    }

    #[test]
    fn inference_is_deterministic_and_bounded() {
        let inst = sp_instance(7);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let params = small_params(&enc, 24);
        let policy = BudgetPolicy::constant(5);
        let mut brng = RootSeed(1).stream(Stream::Budget);
        let schedule = build_schedule(&inst, &enc, &policy, &mut brng, 12).unwrap();
        let opts = InferOptions::default();
        let a = run_inference_episode(&params, &enc, &inst, &schedule, &opts).unwrap();
        let b = run_inference_episode(&params, &enc, &inst, &schedule, &opts).unwrap();
        assert_eq!(a.prediction, b.prediction);
        assert!(a.prediction.len() <= 12);
        assert!(
            a.prediction.last() == Some(&AnswerStep::Stop) || a.prediction.len() == 12,
            "stops at terminator or the cap"
        );
    }

    #[test]
    fn fixed_memory_overflow_is_a_capacity_error() {
        let inst = sp_instance(8);
        let enc = Encoding::default_for(TaskKind::ShortestPath);
        let params = small_params(&enc, 4); // fewer cells than description steps
        let policy = BudgetPolicy::constant(2);
        let mut brng = RootSeed(1).stream(Stream::Budget);
        let schedule = build_schedule(&inst, &enc, &policy, &mut brng, 12).unwrap();
        let err =
            run_inference_episode(&params, &enc, &inst, &schedule, &InferOptions::default()).unwrap_err();
        assert!(matches!(err, DncError::Capacity(_)));
    }
}
