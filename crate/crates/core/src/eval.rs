//! Evaluation harness: accuracy-vs-planning curves A_n(p), the empirical
//! planning budget p*(n), size-generalization sweeps with memory-extension
//! strategies, and trace statistics.
//!
//! "Input size n" is per task: edge count for shortest path, node count for
//! mincut, item count for recall, point count for convex hull.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{BudgetPolicy, StochasticExtra};
use crate::episode::{build_schedule, run_inference_episode, EpisodeStats, InferOptions};
use crate::error::{DncError, Result};
use crate::model::DncParams;
use crate::rng::{RootSeed, Stream};
use crate::tasks::{check_answer, generate, Encoding, LessonSpec, TaskInstance, TaskKind};

/// Accuracy as a function of the inference planning budget, at a fixed
/// input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub task: TaskKind,
    pub n: usize,
    /// (p, accuracy) pairs with strictly increasing p.
    pub points: Vec<(u32, f64)>,
    pub episodes_per_point: usize,
    pub seed: u64,
}

impl AccuracyCurve {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(DncError::Data("curve p values must be strictly increasing".into()));
            }
        }
        if self.points.iter().any(|&(_, a)| !(0.0..=1.0).contains(&a)) {
            return Err(DncError::Data("curve accuracies must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// The empirically determined planning budget: the smallest p whose
/// accuracy exceeds 90% of the curve's maximum. An all-zero curve has no
/// qualifying p (nothing exceeds 0.9·0 = 0) and yields `None`.
pub fn p_star(curve: &AccuracyCurve) -> Option<u32> {
    let max = curve.points.iter().map(|&(_, a)| a).fold(0.0, f64::max);
    let threshold = 0.9 * max;
    curve
        .points
        .iter()
        .find(|&&(_, a)| a > threshold)
        .map(|&(p, _)| p)
}

/// Options for an A_n(p) sweep. The default range is p ∈ [0, 300] with a
/// stride of 5 and 100 episodes per point.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub p_lo: u32,
    pub p_hi: u32,
    pub stride: u32,
    pub episodes_per_point: usize,
    pub infer: InferOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            p_lo: 0,
            p_hi: 300,
            stride: 5,
            episodes_per_point: 100,
            infer: InferOptions::default(),
        }
    }
}

/// Run one inference episode and score it against the oracle.
pub fn run_and_check(
    params: &DncParams,
    enc: &Encoding,
    instance: &TaskInstance,
    policy: &BudgetPolicy,
    opts: &InferOptions,
    max_answer_len: usize,
) -> Result<(bool, EpisodeStats, u32)> {
    let mut budget_rng = RootSeed(instance.seed).stream(Stream::Budget);
    let schedule = build_schedule(instance, enc, policy, &mut budget_rng, max_answer_len)?;
    let run = run_inference_episode(params, enc, instance, &schedule, opts)?;
    let ok = check_answer(instance, &run.prediction)?;
    Ok((ok, run.stats, schedule.planning_steps as u32))
}

/// Mean accuracy over a fixed instance set (deterministic under any
/// parallelism degree: per-instance outcomes are independent and summed as
/// integers).
pub fn evaluate_accuracy(
    params: &DncParams,
    enc: &Encoding,
    instances: &[TaskInstance],
    policy: &BudgetPolicy,
    opts: &InferOptions,
    max_answer_len: usize,
) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let correct: Result<usize> = instances
        .par_iter()
        .map(|inst| run_and_check(params, enc, inst, policy, opts, max_answer_len).map(|(ok, _, _)| ok as usize))
        .try_reduce(|| 0, |a, b| Ok(a + b));
    Ok(correct? as f64 / instances.len() as f64)
}

/// Lesson pinned to one input size, used by the evaluation sweeps.
pub fn lesson_for_size(task: TaskKind, n: usize) -> Result<LessonSpec> {
    match task {
        TaskKind::ShortestPath => {
            // n is the edge count; pick a node range that keeps the average
            // degree within the final lesson's bracket and the labels within
            // the supported space.
            let label_max = crate::tasks::encoding::GRAPH_LABEL_MAX;
            let lo = (5usize).max(n.div_ceil(3)); // average degree <= 6
            let lo = lo.max(smallest_nodes_for_edges(n));
            if lo > label_max {
                return Err(DncError::Config(format!(
                    "{n} edges need more than {label_max} nodes at degree <= 6"
                )));
            }
            Ok(LessonSpec::ShortestPath {
                nodes: (lo, label_max),
                avg_degree: (2.0, 6.0),
                path_len: (2, 5),
            })
        }
        TaskKind::MinCut => {
            let cut = if n >= 18 {
                (2, 4)
            } else if n >= 9 {
                (1, 3)
            } else {
                (1, 1)
            };
            let cut = (cut.0, cut.1.min(n / 3 - 1).max(1));
            Ok(LessonSpec::MinCut {
                nodes: (n, n),
                clusters: (2, 3),
                cut,
                max_degree: 6,
            })
        }
        TaskKind::AssociativeRecall => Ok(LessonSpec::AssociativeRecall {
            items: (n, n),
            digits: (1, 5),
        }),
        TaskKind::ConvexHull => Ok(LessonSpec::ConvexHull { points: (n, n) }),
    }
}

fn smallest_nodes_for_edges(m: usize) -> usize {
    let mut k = 2;
    while k * (k - 1) / 2 < m {
        k += 1;
    }
    k
}

/// Generate an evaluation instance of exact size `n` (see module docs for
/// the per-task meaning). Shortest-path instances get exactly `n` edges.
pub fn generate_sized(task: TaskKind, n: usize, seed: RootSeed, episode: u64) -> Result<TaskInstance> {
    let lesson = lesson_for_size(task, n)?;
    let mut rng = seed.stream(Stream::Sweep(episode));
    match lesson {
        LessonSpec::ShortestPath { nodes, path_len, .. } => {
            // Fix the edge count by pinning the degree bracket per draw.
            for _ in 0..crate::tasks::GENERATION_RETRIES {
                let n_v = crate::rng::uniform_range(&mut rng, nodes.0, nodes.1);
                if n_v * (n_v - 1) / 2 < n {
                    continue;
                }
                // Degree chosen so the generator's ⌊n_v·d/2⌋ bracket pins the
                // edge count to exactly n (the +1 offset absorbs float error).
                let d = (2.0 * n as f64 + 1.0) / n_v as f64;
                let pinned = LessonSpec::ShortestPath {
                    nodes: (n_v, n_v),
                    avg_degree: (d, d),
                    path_len,
                };
                match generate(&pinned, 0, seed.0, &mut rng, false) {
                    Ok(inst) => {
                        debug_assert_eq!(inst.meta.edges, Some(n));
                        return Ok(inst);
                    }
                    Err(DncError::Generation { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(DncError::Generation {
                retries: crate::tasks::GENERATION_RETRIES,
                reason: format!("no shortest-path instance with exactly {n} edges"),
            })
        }
        other => generate(&other, 0, seed.0, &mut rng, false),
    }
}

/// Evaluate A_n(p) over the requested p range. The same instance set is
/// reused for every p, so curves differ only in the planning budget;
/// results are merged by (p, episode) and invariant to parallelism.
pub fn sweep_an(
    params: &DncParams,
    enc: &Encoding,
    task: TaskKind,
    n: usize,
    opts: &SweepOptions,
    seed: RootSeed,
) -> Result<AccuracyCurve> {
    if opts.stride == 0 || opts.p_hi < opts.p_lo {
        return Err(DncError::Config("sweep needs stride >= 1 and p_hi >= p_lo".into()));
    }
    let instances: Vec<TaskInstance> = (0..opts.episodes_per_point)
        .map(|e| generate_sized(task, n, seed, e as u64))
        .collect::<Result<_>>()?;
    let max_ans = instances.iter().map(|i| 2 * i.target_len()).max().unwrap_or(4);

    let ps: Vec<u32> = (opts.p_lo..=opts.p_hi).step_by(opts.stride as usize).collect();
    let points: Result<Vec<(u32, f64)>> = ps
        .par_iter()
        .map(|&p| {
            let policy = BudgetPolicy::constant(p);
            let correct: Result<usize> = instances
                .par_iter()
                .map(|inst| {
                    run_and_check(params, enc, inst, &policy, &opts.infer, max_ans).map(|(ok, _, _)| ok as usize)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b));
            Ok((p, correct? as f64 / instances.len() as f64))
        })
        .collect();
    let curve = AccuracyCurve {
        task,
        n,
        points: points?,
        episodes_per_point: opts.episodes_per_point,
        seed: seed.0,
    };
    curve.validate()?;
    Ok(curve)
}

/// One row of a generalization sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub task: TaskKind,
    pub n: usize,
    /// Mean planning steps granted at inference.
    pub p_mean: f64,
    pub accuracy: f64,
    pub episodes: usize,
    /// Final memory cells (mean over episodes; grows under adaptive mode).
    pub memory_cells_mean: f64,
    /// Final temperature (mean over episodes).
    pub tau_mean: f64,
    pub beta_mean: f64,
    pub beta_std: f64,
    pub alloc_frac_mean: f64,
    /// Per-phase β statistics: (mean, std) for description, planning, answer.
    pub beta_by_phase: [(f64, f64); 3],
}

/// Accuracy and trace statistics across input sizes, under a memory
/// strategy and an inference budget policy (the training policy by
/// default; stochastic extras are disabled).
pub fn generalization_sweep(
    params: &DncParams,
    enc: &Encoding,
    task: TaskKind,
    sizes: &[usize],
    policy: &BudgetPolicy,
    opts: &InferOptions,
    episodes_per_size: usize,
    seed: RootSeed,
) -> Result<Vec<GeneralizationRow>> {
    let mut eval_policy = *policy;
    eval_policy.stochastic = StochasticExtra::Off;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let instances: Vec<TaskInstance> = (0..episodes_per_size)
            .map(|e| generate_sized(task, n, seed, (n as u64) << 20 | e as u64))
            .collect::<Result<_>>()?;
        let max_ans = instances.iter().map(|i| 2 * i.target_len()).max().unwrap_or(4);
        let results: Result<Vec<(bool, EpisodeStats, u32)>> = instances
            .par_iter()
            .map(|inst| run_and_check(params, enc, inst, &eval_policy, opts, max_ans))
            .collect();
        let results = results?;

        let episodes = results.len();
        let correct = results.iter().filter(|(ok, _, _)| *ok).count();
        let mut desc = crate::episode::PhaseStats::default();
        let mut plan = crate::episode::PhaseStats::default();
        let mut answer = crate::episode::PhaseStats::default();
        let mut alloc_sum = 0.0;
        let mut cells_sum = 0.0;
        let mut tau_sum = 0.0;
        let mut p_sum = 0.0;
        for (_, stats, p) in &results {
            desc.merge(&stats.description);
            plan.merge(&stats.planning);
            answer.merge(&stats.answer);
            alloc_sum += stats.alloc_frac_mean();
            cells_sum += stats.final_cells as f64;
            tau_sum += stats.final_tau;
            p_sum += *p as f64;
        }
        let mut all = crate::episode::PhaseStats::default();
        all.merge(&desc);
        all.merge(&plan);
        all.merge(&answer);
        rows.push(GeneralizationRow {
            task,
            n,
            p_mean: p_sum / episodes as f64,
            accuracy: correct as f64 / episodes as f64,
            episodes,
            memory_cells_mean: cells_sum / episodes as f64,
            tau_mean: tau_sum / episodes as f64,
            beta_mean: all.mean(),
            beta_std: all.std(),
            alloc_frac_mean: alloc_sum / episodes as f64,
            beta_by_phase: [
                (desc.mean(), desc.std()),
                (plan.mean(), plan.std()),
                (answer.mean(), answer.std()),
            ],
        });
    }
    Ok(rows)
}

pub const RESULT_CSV_HEADER: &str = "task,n,p,accuracy,episodes,memory_N,tau,beta_mean,beta_std,alloc_frac_mean";

/// Render an accuracy curve in the shared CSV layout.
pub fn curve_to_csv(curve: &AccuracyCurve, memory_cells: usize, tau: f64) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    for &(p, acc) in &curve.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},,,\n",
            curve.task.name(),
            curve.n,
            p,
            acc,
            curve.episodes_per_point,
            memory_cells,
            tau
        ));
    }
    out
}

/// Render generalization rows in the shared CSV layout.
pub fn rows_to_csv(rows: &[GeneralizationRow]) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.task.name(),
            r.n,
            r.p_mean,
            r.accuracy,
            r.episodes,
            r.memory_cells_mean,
            r.tau_mean,
            r.beta_mean,
            r.beta_std,
            r.alloc_frac_mean
        ));
    }
    out
}

/// Parse (p, accuracy) pairs from a curve CSV (columns `p` and `accuracy`).
pub fn curve_from_csv(text: &str) -> Result<AccuracyCurve> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| DncError::Data("empty curve file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let p_col = cols.iter().position(|c| *c == "p");
    let a_col = cols.iter().position(|c| *c == "accuracy");
    let (Some(p_col), Some(a_col)) = (p_col, a_col) else {
        return Err(DncError::Data("curve CSV needs 'p' and 'accuracy' columns".into()));
    };
    let n_col = cols.iter().position(|c| *c == "n");
    let task_col = cols.iter().position(|c| *c == "task");

    let mut points = Vec::new();
    let mut n = 0;
    let mut task = TaskKind::ShortestPath;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |col: usize| -> Result<f64> {
            fields
                .get(col)
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| DncError::Data(format!("bad curve CSV field at line {}", lineno + 2)))
        };
        points.push((parse(p_col)? as u32, parse(a_col)?));
        if let Some(c) = n_col {
            n = parse(c)? as usize;
        }
        if let Some(c) = task_col {
            if let Ok(k) = fields[c].parse::<TaskKind>() {
                task = k;
            }
        }
    }
    let curve = AccuracyCurve {
        task,
        n,
        episodes_per_point: 0,
        seed: 0,
        points,
    };
    curve.validate()?;
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: Vec<(u32, f64)>) -> AccuracyCurve {
        AccuracyCurve {
            task: TaskKind::ShortestPath,
            n: 10,
            points,
            episodes_per_point: 1,
            seed: 0,
        }
    }

    /// Exhaustive-scan oracle for the p* definition.
    fn p_star_scan(c: &AccuracyCurve) -> Option<u32> {
        let max = c.points.iter().map(|&(_, a)| a).fold(0.0, f64::max);
        for &(p, a) in &c.points {
            if a > 0.9 * max {
                return Some(p);
            }
        }
        None
    }

    #[test]
    fn p_star_hand_example() {
        // Max 0.96, threshold 0.864, first exceeding p is 3.
        let c = curve(vec![(0, 0.0), (1, 0.0), (2, 0.5), (3, 0.92), (4, 0.95), (5, 0.96)]);
        assert_eq!(p_star(&c), Some(3));
        assert_eq!(p_star(&c), p_star_scan(&c));
    }

    #[test]
    fn p_star_constant_and_zero_curves() {
        let c = curve(vec![(0, 0.7), (5, 0.7), (10, 0.7)]);
        assert_eq!(p_star(&c), Some(0), "constant positive curve starts immediately");
        let z = curve(vec![(0, 0.0), (5, 0.0)]);
        assert_eq!(p_star(&z), None, "all-zero curve has no qualifying p");
    }

    #[test]
    fn p_star_matches_scan_on_many_shapes() {
        let mut rng = RootSeed(5).stream(Stream::Sweep(0));
        for case in 0..200 {
            let len = 1 + crate::rng::uniform_range(&mut rng, 0, 40);
            let mut points = Vec::with_capacity(len);
            for i in 0..len {
                let acc = match case % 4 {
                    0 => crate::rng::uniform(&mut rng),
                    1 => (i as f64 / len as f64).min(0.9),                  // monotone
                    2 => if i > len / 2 { 0.8 } else { 0.0 },               // plateau
                    _ => 0.0,                                              // all-zero
                };
                points.push((i as u32 * 5, acc));
            }
            let c = curve(points);
            assert_eq!(p_star(&c), p_star_scan(&c), "case {case}");
        }
    }

    #[test]
    fn curve_csv_roundtrip() {
        let c = curve(vec![(0, 0.0), (5, 0.25), (10, 1.0)]);
        let csv = curve_to_csv(&c, 200, 1.0);
        let parsed = curve_from_csv(&csv).unwrap();
        assert_eq!(parsed.points, c.points);
        assert_eq!(parsed.n, c.n);
        assert_eq!(parsed.task, c.task);
    }

    #[test]
    fn sized_generation_pins_sizes() {
        for (task, n, field) in [
            (TaskKind::ShortestPath, 30usize, "edges"),
            (TaskKind::AssociativeRecall, 7, "items"),
            (TaskKind::ConvexHull, 12, "points"),
            (TaskKind::MinCut, 14, "nodes"),
        ] {
            for e in 0..5 {
                let inst = generate_sized(task, n, RootSeed(3), e).unwrap();
                match task {
                    TaskKind::ShortestPath => assert_eq!(inst.meta.edges, Some(n), "{field}"),
                    TaskKind::MinCut => assert_eq!(inst.meta.nodes, Some(n), "{field}"),
                    _ => assert_eq!(inst.meta.n, n, "{field}"),
                }
            }
        }
    }
}
