//! Curriculum training: answer-phase loss, teacher-forcing mix, lesson
//! advancement gated on held-out accuracy, stochastic-budget fine-tuning,
//! FLOP accounting, and checkpointing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::budget::{BudgetPolicy, StochasticExtra};
use crate::episode::{build_schedule, run_training_episode, InferOptions};
use crate::error::{DncError, Result};
use crate::eval::evaluate_accuracy;
use crate::model::{inject_params, DncDims, DncParams};
use crate::rng::{RootSeed, Stream};
use crate::tape::{Tape, Var};
use crate::tasks::{generate, Encoding, LessonSpec, TaskKind};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything a training run needs. Defaults follow the task tables; see
/// `docs/formats.md` for the file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub encoding: Encoding,
    pub cells: usize,
    pub word: usize,
    pub hidden: usize,
    pub read_heads: usize,
    pub curriculum: Vec<LessonSpec>,
    pub budget: BudgetPolicy,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub mix_ratio: f64,
    pub eval_cadence: u64,
    pub advance_threshold: f64,
    pub eval_set_size: usize,
    pub final_lesson_steps: u64,
    pub grad_accum: usize,
    pub seed: u64,
    /// Stop once held-out accuracy on the final lesson reaches this value.
    pub early_stop_accuracy: Option<f64>,
    /// Hard cap on total training steps (safety net).
    pub max_steps: Option<u64>,
}

impl TrainConfig {
    /// Per-task defaults: memory shapes 200x128 (graphs), 100x32 (recall),
    /// 50x64 (hull); controller width 256 for graphs, 64 otherwise.
    pub fn defaults_for(task: TaskKind, seed: u64) -> Self {
        let encoding = Encoding::default_for(task);
        let (cells, word, hidden) = match task {
            TaskKind::ShortestPath | TaskKind::MinCut => (200, 128, 256),
            TaskKind::AssociativeRecall => (100, 32, 64),
            TaskKind::ConvexHull => (50, 64, 64),
        };
        TrainConfig {
            task,
            encoding,
            cells,
            word,
            hidden,
            read_heads: 2,
            curriculum: crate::tasks::default_curriculum(task),
            budget: BudgetPolicy::constant(10),
            learning_rate: 1e-4,
            grad_clip_norm: 10.0,
            mix_ratio: 0.9,
            eval_cadence: 1000,
            advance_threshold: 0.80,
            eval_set_size: 200,
            final_lesson_steps: 100_000,
            grad_accum: 1,
            seed,
            early_stop_accuracy: None,
            max_steps: None,
        }
    }

    pub fn dims(&self) -> DncDims {
        DncDims {
            input_width: self.encoding.input_width(),
            output_width: self.encoding.output_width(),
            cells: self.cells,
            word: self.word,
            hidden: self.hidden,
            read_heads: self.read_heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_cadence == 0 {
            return Err(DncError::Config("eval_cadence must be positive".into()));
        }
        if !(0.0 < self.advance_threshold && self.advance_threshold < 1.0) {
            return Err(DncError::Config(format!(
                "advance_threshold must be in (0,1), got {}",
                self.advance_threshold
            )));
        }
        if self.curriculum.is_empty() {
            return Err(DncError::Config("curriculum has no lessons".into()));
        }
        for lesson in &self.curriculum {
            if lesson.kind() != self.task {
                return Err(DncError::Config("curriculum lesson task mismatch".into()));
            }
            lesson.validate()?;
        }
        if self.grad_accum == 0 {
            return Err(DncError::Config("grad_accum must be >= 1".into()));
        }
        self.budget.validate()
    }

    /// Free-decoding cap: twice the longest target of the largest lesson.
    pub fn max_answer_len(&self) -> usize {
        self.curriculum
            .iter()
            .map(|l| self.encoding.max_answer_len(l))
            .max()
            .unwrap_or(4)
    }
}

/// Timestep counter with a documented per-step FLOP constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopCounter {
    pub total_timesteps: u64,
    pub per_step_flops: f64,
}

impl FlopCounter {
    pub fn new(dims: &DncDims) -> Self {
        FlopCounter {
            total_timesteps: 0,
            per_step_flops: per_step_flops(dims),
        }
    }

    pub fn add_episode(&mut self, timesteps: usize) {
        self.total_timesteps += timesteps as u64;
    }

    pub fn estimate(&self) -> f64 {
        self.total_timesteps as f64 * self.per_step_flops
    }
}

/// Closed-form per-timestep FLOP estimate (multiply+add counted as 2):
/// LSTM 2·4H·(W+mC+H); interface/output heads 2H·|ξ| + 2HO + 2O(O+mC);
/// content scores (m+1)·(2NC+5N); write 4NC; reads 2mNC; temporal links
/// 3N² + 4mN²; plus ~12N of vector bookkeeping.
pub fn per_step_flops(d: &DncDims) -> f64 {
    let (n, c, h, m) = (d.cells as f64, d.word as f64, d.hidden as f64, d.read_heads as f64);
    let w_in = d.input_width as f64;
    let o = d.output_width as f64;
    let xi = d.interface_len() as f64;
    let ctrl = 2.0 * 4.0 * h * (w_in + m * c + h) + 2.0 * h * xi + 2.0 * h * o + 2.0 * o * (o + m * c);
    let content = (m + 1.0) * (2.0 * n * c + 5.0 * n);
    let mem = 4.0 * n * c + 2.0 * m * n * c;
    let temporal = 3.0 * n * n + 4.0 * m * n * n;
    ctrl + content + mem + temporal + 12.0 * n
}

/// Sum over answer steps of per-head negative log-likelihood, recorded on
/// the tape.
pub fn episode_loss(tape: &mut Tape, logits: &[Var], targets: &[Vec<usize>], head_widths: &[usize]) -> Var {
    debug_assert_eq!(logits.len(), targets.len());
    let mut total: Option<Var> = None;
    for (step_logits, step_targets) in logits.iter().zip(targets) {
        let mut off = 0;
        for (h, &w) in head_widths.iter().enumerate() {
            let head = tape.slice(*step_logits, off, w);
            let l = tape.nll(head, step_targets[h]);
            total = Some(match total {
                Some(t) => tape.add(t, l),
                None => l,
            });
            off += w;
        }
    }
    total.expect("loss over an empty answer sequence")
}

/// Plain-path loss over an answer-logit sequence; the lengths must match.
pub fn sequence_loss(logits: &[Tensor], targets: &[Vec<usize>], head_widths: &[usize]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(DncError::shape(
            "sequence_loss",
            format!("{} target steps", logits.len()),
            format!("{}", targets.len()),
        ));
    }
    let mut total = 0.0;
    for (step_logits, step_targets) in logits.iter().zip(targets) {
        let mut off = 0;
        for (h, &w) in head_widths.iter().enumerate() {
            let head = crate::math::slice(step_logits, off, w);
            total += crate::math::nll(&head, step_targets[h]);
            off += w;
        }
    }
    Ok(total)
}

/// Adam with global-norm gradient clipping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &DncParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut DncParams, grads: &[Tensor], clip_norm: f64) {
        debug_assert_eq!(grads.len(), self.m.len());
        let mut sq = 0.0;
        for g in grads {
            for v in &g.data {
                sq += v * v;
            }
        }
        let norm = sq.sqrt();
        let scale = if norm > clip_norm && norm > 0.0 { clip_norm / norm } else { 1.0 };

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g.data[i] * scale;
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// One metrics line, emitted at every evaluation boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub lesson: usize,
    pub train_loss: f64,
    pub eval_accuracy: f64,
    pub total_timesteps: u64,
    pub flops_estimate: f64,
}

/// Live training state; checkpoints capture all of it so runs resume
/// bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub params: DncParams,
    pub adam: Adam,
    pub step: u64,
    /// 0-based index into the curriculum.
    pub lesson_idx: usize,
    pub steps_on_final_lesson: u64,
    pub counter: FlopCounter,
    pub feedback_pos: u128,
    pub budget_pos: u128,
}

impl TrainState {
    pub fn fresh(config: &TrainConfig) -> Self {
        let seed = RootSeed(config.seed);
        let mut init_rng = seed.stream(Stream::Init);
        let params = DncParams::init(config.dims(), &mut init_rng);
        let adam = Adam::new(&params, config.learning_rate);
        let counter = FlopCounter::new(&config.dims());
        TrainState {
            params,
            adam,
            step: 0,
            lesson_idx: 0,
            steps_on_final_lesson: 0,
            counter,
            feedback_pos: 0,
            budget_pos: 0,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricsRecord>,
    /// Step at which a non-finite loss appeared; the state holds the last
    /// finite parameters.
    pub diverged_at: Option<u64>,
}

/// Train from scratch.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let state = TrainState::fresh(config);
    run_loop(config, state, None)
}

/// Continue training from a checkpointed state for `extra_steps` more
/// steps. With the stochastic budget enabled in `config` this is the
/// fine-tuning mode; with it off the run is bit-identical to never having
/// stopped.
pub fn finetune(config: &TrainConfig, state: TrainState, extra_steps: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let stop_at = state.step + extra_steps;
    run_loop(config, state, Some(stop_at))
}

fn run_loop(config: &TrainConfig, mut state: TrainState, stop_at: Option<u64>) -> Result<TrainOutcome> {
    let seed = RootSeed(config.seed);
    let enc = config.encoding;
    let head_widths = enc.head_widths();
    let max_ans = config.max_answer_len();

    let mut feedback_rng = seed.stream(Stream::Feedback);
    feedback_rng.set_word_pos(state.feedback_pos);
    let mut budget_rng = seed.stream(Stream::Budget);
    budget_rng.set_word_pos(state.budget_pos);

    let mut metrics = Vec::new();
    let mut grad_accum: Vec<Tensor> = state
        .params
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.rows, t.cols))
        .collect();
    let mut accum_count = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_n = 0u64;
    let final_idx = config.curriculum.len() - 1;
    let hard_cap = config.max_steps.unwrap_or(u64::MAX);

    loop {
        if let Some(stop) = stop_at {
            if state.step >= stop {
                break;
            }
        }
        if state.step >= hard_cap {
            break;
        }
        if stop_at.is_none() && state.lesson_idx == final_idx && state.steps_on_final_lesson >= config.final_lesson_steps
        {
            break;
        }

        state.step += 1;
        if state.lesson_idx == final_idx {
            state.steps_on_final_lesson += 1;
        }
        let lesson = config.curriculum[state.lesson_idx];
        let mut gen_rng = seed.stream(Stream::TrainData(state.step));
        let instance = generate(&lesson, state.lesson_idx + 1, config.seed, &mut gen_rng, true)?;
        let schedule = build_schedule(&instance, &enc, &config.budget, &mut budget_rng, max_ans)?;
        state.counter.add_episode(schedule.total_steps());

        let mut tape = Tape::new();
        let pvars = inject_params(&mut tape, &state.params);
        let run = run_training_episode(
            &mut tape,
            &pvars,
            &state.params,
            &enc,
            &instance,
            &schedule,
            config.mix_ratio,
            &mut feedback_rng,
            false,
        )?;
        let loss_var = episode_loss(&mut tape, &run.answer_logits, &run.targets, &head_widths);
        let loss_val = tape.value(loss_var).item();
        if !loss_val.is_finite() {
            // Roll back this step's bookkeeping: the state still holds the
            // last finite parameters.
            state.feedback_pos = feedback_rng.get_word_pos();
            state.budget_pos = budget_rng.get_word_pos();
            return Ok(TrainOutcome {
                diverged_at: Some(state.step),
                state,
                metrics,
            });
        }
        loss_sum += loss_val;
        loss_n += 1;

        let grads = tape.backward(loss_var);
        for (acc, var) in grad_accum.iter_mut().zip(pvars.vars()) {
            if let Some(g) = grads.get(var) {
                for (a, gv) in acc.data.iter_mut().zip(&g.data) {
                    *a += gv;
                }
            }
        }
        accum_count += 1;
        if accum_count == config.grad_accum {
            if config.grad_accum > 1 {
                let inv = 1.0 / config.grad_accum as f64;
                for g in grad_accum.iter_mut() {
                    for v in g.data.iter_mut() {
                        *v *= inv;
                    }
                }
            }
            state.adam.step(&mut state.params, &grad_accum, config.grad_clip_norm);
            for g in grad_accum.iter_mut() {
                g.data.fill(0.0);
            }
            accum_count = 0;
        }

        if state.step % config.eval_cadence == 0 {
            let accuracy = eval_current_lesson(config, &state.params, state.lesson_idx)?;
            metrics.push(MetricsRecord {
                step: state.step,
                lesson: state.lesson_idx + 1,
                train_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
                eval_accuracy: accuracy,
                total_timesteps: state.counter.total_timesteps,
                flops_estimate: state.counter.estimate(),
            });
            loss_sum = 0.0;
            loss_n = 0;

            if state.lesson_idx == final_idx {
                if let Some(target) = config.early_stop_accuracy {
                    if accuracy >= target {
                        break;
                    }
                }
            }
            if accuracy > config.advance_threshold && state.lesson_idx < final_idx {
                state.lesson_idx += 1;
            }
        }
    }

    state.feedback_pos = feedback_rng.get_word_pos();
    state.budget_pos = budget_rng.get_word_pos();
    Ok(TrainOutcome {
        state,
        metrics,
        diverged_at: None,
    })
}

/// Held-out accuracy on the current lesson: `eval_set_size` fresh instances
/// from the evaluation seed stream, free decoding, answers checked against
/// the oracle ("matched any valid answer"). The stochastic budget extra is
/// a training regularizer and stays off here.
pub fn eval_current_lesson(config: &TrainConfig, params: &DncParams, lesson_idx: usize) -> Result<f64> {
    let lesson = config.curriculum[lesson_idx];
    let mut eval_policy = config.budget;
    eval_policy.stochastic = StochasticExtra::Off;
    let instances: Vec<_> = (0..config.eval_set_size)
        .map(|i| {
            let mut rng = RootSeed(config.seed).stream(Stream::EvalData(lesson_idx as u64 + 1, i as u64));
            generate(&lesson, lesson_idx + 1, config.seed, &mut rng, false)
        })
        .collect::<Result<_>>()?;
    evaluate_accuracy(
        params,
        &config.encoding,
        &instances,
        &eval_policy,
        &InferOptions::default(),
        config.max_answer_len(),
    )
}

/// Serialize the full training state with a format-versioned manifest.
pub fn checkpoint_save(state: &TrainState, config: &TrainConfig, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Checkpoint<'a> {
        format_version: u32,
        task: TaskKind,
        encoding: Encoding,
        dims: DncDims,
        state: &'a TrainState,
    }
    let doc = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        task: config.task,
        encoding: config.encoding,
        dims: config.dims(),
        state,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &doc)?;
    file.flush()?;
    Ok(())
}

/// Load a checkpoint and validate it against the active configuration.
pub fn checkpoint_load(path: &Path, config: &TrainConfig) -> Result<TrainState> {
    #[derive(Deserialize)]
    struct Checkpoint {
        format_version: u32,
        task: TaskKind,
        encoding: Encoding,
        dims: DncDims,
        state: TrainState,
    }
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let doc: Checkpoint = serde_json::from_reader(file)?;
    if doc.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(DncError::Version {
            found: doc.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    if doc.task != config.task {
        return Err(DncError::Config(format!(
            "checkpoint task {:?} does not match config task {:?}",
            doc.task, config.task
        )));
    }
    if doc.dims != config.dims() || doc.encoding != config.encoding {
        return Err(DncError::Config(format!(
            "checkpoint dims {:?} do not match config dims {:?}",
            doc.dims,
            config.dims()
        )));
    }
    doc.state.params.validate()?;
    Ok(doc.state)
}

/// Render metrics as JSON lines.
pub fn metrics_to_jsonl(metrics: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform;

    fn tiny_recall_config(seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::defaults_for(TaskKind::AssociativeRecall, seed);
        cfg.cells = 12;
        cfg.word = 8;
        cfg.hidden = 16;
        cfg.curriculum = vec![LessonSpec::AssociativeRecall {
            items: (2, 3),
            digits: (1, 1),
        }];
        cfg.eval_cadence = 25;
        cfg.eval_set_size = 8;
        cfg.final_lesson_steps = 50;
        cfg
    }

    #[test]
    fn loss_closed_forms() {
        // Uniform logits over two 25-way heads: 2·ln 25.
        let logits = vec![Tensor::zeros(50, 1)];
        let targets = vec![vec![3, 7]];
        let l = sequence_loss(&logits, &targets, &[25, 25]).unwrap();
        assert!((l - 2.0 * 25f64.ln()).abs() < 1e-12);
        assert!((l - 6.4378).abs() < 1e-4);

        // Confident correct prediction: loss near zero.
        let mut sharp = Tensor::zeros(50, 1);
        sharp.data[3] = 60.0;
        sharp.data[25 + 7] = 60.0;
        let l0 = sequence_loss(&[sharp.clone()], &targets, &[25, 25]).unwrap();
        assert!(l0 < 1e-12);

        // Additivity over steps.
        let two = sequence_loss(&[sharp.clone(), Tensor::zeros(50, 1)], &[vec![3, 7], vec![3, 7]], &[25, 25])
            .unwrap();
        assert!((two - (l0 + l)).abs() < 1e-12);

        // Length mismatch is a shape error.
        assert!(sequence_loss(&[sharp], &[vec![3, 7], vec![0, 0]], &[25, 25]).is_err());
    }

    #[test]
    fn taped_loss_matches_plain() {
        let mut tape = Tape::new();
        let mut rng = RootSeed(3).stream(Stream::Init);
        let raw: Vec<f64> = (0..22).map(|_| uniform(&mut rng) * 4.0 - 2.0).collect();
        let t1 = Tensor::from_vec(raw[..11].to_vec());
        let t2 = Tensor::from_vec(raw[11..].to_vec());
        let l1 = tape.leaf(t1.clone());
        let l2 = tape.leaf(t2.clone());
        let widths = [5, 6];
        let targets = vec![vec![2, 1], vec![4, 5]];
        let var = episode_loss(&mut tape, &[l1, l2], &targets, &widths);
        let plain = sequence_loss(&[t1, t2], &targets, &widths).unwrap();
        assert_eq!(tape.value(var).item(), plain);
    }

    #[test]
    fn flop_counter_sums_episode_lengths() {
        let dims = DncDims {
            input_width: 13,
            output_width: 11,
            cells: 16,
            word: 8,
            hidden: 16,
            read_heads: 2,
        };
        let mut counter = FlopCounter::new(&dims);
        // Shortest-path episode: 5 edges + 1 query + 10 planning + 3 answers.
        counter.add_episode(5 + 1 + 10 + 3);
        assert_eq!(counter.total_timesteps, 19);
        counter.add_episode(7);
        assert_eq!(counter.total_timesteps, 26);
        let est = counter.estimate();
        assert!((est - 26.0 * per_step_flops(&dims)).abs() < 1e-9);
        // Doubling planning steps doubles that phase's contribution.
        let mut a = FlopCounter::new(&dims);
        a.add_episode(10);
        let mut b = FlopCounter::new(&dims);
        b.add_episode(20);
        assert_eq!(b.total_timesteps, 2 * a.total_timesteps);
    }

    #[test]
    fn short_training_run_is_deterministic() {
        let cfg = tiny_recall_config(11);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(metrics_to_jsonl(&a.metrics), metrics_to_jsonl(&b.metrics));
        assert_eq!(a.state.params, b.state.params);
        assert!(a.diverged_at.is_none());
        // Lesson index never decreases.
        let mut prev = 0;
        for m in &a.metrics {
            assert!(m.lesson >= prev);
            prev = m.lesson;
        }
    }

    #[test]
    fn finetune_with_extras_off_continues_bit_for_bit() {
        let mut cfg = tiny_recall_config(13);
        cfg.final_lesson_steps = 60;
        let full = train(&cfg).unwrap();

        let mut cfg_half = cfg.clone();
        cfg_half.final_lesson_steps = 30;
        let half = train(&cfg_half).unwrap();
        assert_eq!(half.state.step, 30);
        let resumed = finetune(&cfg, half.state, 30).unwrap();
        assert_eq!(resumed.state.step, 60);
        assert_eq!(resumed.state.params, full.state.params);
        assert_eq!(resumed.state.counter, full.state.counter);
    }

    #[test]
    fn stochastic_finetune_changes_schedules() {
        let mut cfg = tiny_recall_config(17);
        cfg.final_lesson_steps = 10;
        let base = train(&cfg).unwrap();

        let mut stoch_cfg = cfg.clone();
        stoch_cfg.budget.stochastic = StochasticExtra::Geometric;
        let tuned = finetune(&stoch_cfg, base.state.clone(), 10).unwrap();
        // More planning steps happened than the deterministic counterpart.
        let det = finetune(&cfg, base.state, 10).unwrap();
        assert!(tuned.state.counter.total_timesteps > det.state.counter.total_timesteps);
    }

    #[test]
    fn checkpoint_roundtrip_and_validation() {
        let cfg = tiny_recall_config(19);
        let mut out = train(&cfg).unwrap();
        out.state.counter.add_episode(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        checkpoint_save(&out.state, &cfg, &path).unwrap();
        let loaded = checkpoint_load(&path, &cfg).unwrap();
        assert_eq!(loaded.params, out.state.params);
        assert_eq!(loaded.counter, out.state.counter);
        assert_eq!(loaded.step, out.state.step);

        // Width mismatch rejected.
        let mut other = cfg.clone();
        other.hidden += 1;
        assert!(matches!(checkpoint_load(&path, &other), Err(DncError::Config(_))));
    }

    #[test]
    fn resume_keeps_eval_cadence_boundaries() {
        let mut cfg = tiny_recall_config(23);
        cfg.eval_cadence = 20;
        cfg.final_lesson_steps = 80;
        let full = train(&cfg).unwrap();

        let mut cfg_half = cfg.clone();
        cfg_half.final_lesson_steps = 30; // stops mid-cadence at step 30
        let half = train(&cfg_half).unwrap();
        let resumed = finetune(&cfg, half.state, 50).unwrap();
        let full_steps: Vec<u64> = full.metrics.iter().map(|m| m.step).collect();
        let resumed_steps: Vec<u64> = half
            .metrics
            .iter()
            .chain(resumed.metrics.iter())
            .map(|m| m.step)
            .collect();
        assert_eq!(full_steps, resumed_steps);
        for s in resumed_steps {
            assert_eq!(s % 20, 0, "eval stays on the original cadence");
        }
    }

    #[test]
    fn gradients_only_flow_from_answer_loss() {
        // Scaling the answer loss by zero kills every parameter gradient.
        let cfg = tiny_recall_config(29);
        let state = TrainState::fresh(&cfg);
        let enc = cfg.encoding;
        let lesson = cfg.curriculum[0];
        let mut gen_rng = RootSeed(cfg.seed).stream(Stream::TrainData(1));
        let inst = generate(&lesson, 1, cfg.seed, &mut gen_rng, true).unwrap();
        let mut budget_rng = RootSeed(cfg.seed).stream(Stream::Budget);
        let schedule = build_schedule(&inst, &enc, &cfg.budget, &mut budget_rng, 8).unwrap();
        let mut tape = Tape::new();
        let pvars = inject_params(&mut tape, &state.params);
        let mut frng = RootSeed(cfg.seed).stream(Stream::Feedback);
        let run = run_training_episode(
            &mut tape, &pvars, &state.params, &enc, &inst, &schedule, 0.9, &mut frng, false,
        )
        .unwrap();
        let loss = episode_loss(&mut tape, &run.answer_logits, &run.targets, &enc.head_widths());
        let zero = tape.leaf(Tensor::scalar(0.0));
        let zeroed = tape.mul(loss, zero);
        let grads = tape.backward(zeroed);
        for var in pvars.vars() {
            if let Some(g) = grads.get(var) {
                assert!(g.data.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn frozen_batch_loss_descends() {
        // 100 optimizer steps on one fixed episode: strictly decreasing loss.
        let cfg = tiny_recall_config(31);
        let mut state = TrainState::fresh(&cfg);
        let enc = cfg.encoding;
        let lesson = cfg.curriculum[0];
        let mut gen_rng = RootSeed(cfg.seed).stream(Stream::TrainData(7));
        let inst = generate(&lesson, 1, cfg.seed, &mut gen_rng, true).unwrap();
        let mut budget_rng = RootSeed(cfg.seed).stream(Stream::Budget);
        let schedule = build_schedule(&inst, &enc, &cfg.budget, &mut budget_rng, 8).unwrap();
        let widths = enc.head_widths();

        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let mut tape = Tape::new();
            let pvars = inject_params(&mut tape, &state.params);
            // Pure teacher forcing keeps the frozen batch fixed.
            let mut frng = RootSeed(cfg.seed).stream(Stream::Feedback);
            let run = run_training_episode(
                &mut tape, &pvars, &state.params, &enc, &inst, &schedule, 1.0, &mut frng, false,
            )
            .unwrap();
            let loss_var = episode_loss(&mut tape, &run.answer_logits, &run.targets, &widths);
            let loss = tape.value(loss_var).item();
            assert!(loss < prev, "loss {loss} did not decrease below {prev}");
            prev = loss;
            let grads = tape.backward(loss_var);
            let gvec: Vec<Tensor> = pvars
                .vars()
                .iter()
                .map(|v| grads.get(*v).cloned().unwrap())
                .collect();
            state.adam.step(&mut state.params, &gvec, cfg.grad_clip_norm);
        }
    }
}
