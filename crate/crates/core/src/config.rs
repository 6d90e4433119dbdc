//! Run configuration: a flat TOML file with typed sections. Unknown keys
//! are hard errors — silent hyperparameter typos are the main
//! reproducibility hazard. Schema reference lives in `docs/formats.md`.

use serde::Deserialize;

use crate::budget::{BudgetKind, BudgetPolicy, StochasticExtra};
use crate::episode::{InferOptions, MemoryStrategy};
use crate::error::{DncError, Result};
use crate::memory::AdaptiveMemoryConfig;
use crate::tasks::{Encoding, LessonSpec, TaskKind};
use crate::trainer::TrainConfig;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    run: RunSection,
    task: TaskSection,
    #[serde(default)]
    model: ModelSection,
    budget: Option<RawBudget>,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    lesson: Vec<RawLesson>,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    kind: Option<String>,
    n_max: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    memory_cells: Option<usize>,
    word_size: Option<usize>,
    hidden: Option<usize>,
    read_heads: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    kind: String,
    c: Option<u32>,
    k: Option<f64>,
    stochastic: Option<String>,
    confidence: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    learning_rate: Option<f64>,
    grad_clip_norm: Option<f64>,
    mix_ratio: Option<f64>,
    eval_cadence: Option<u64>,
    advance_threshold: Option<f64>,
    eval_set_size: Option<usize>,
    final_lesson_steps: Option<u64>,
    grad_accum: Option<usize>,
    early_stop_accuracy: Option<f64>,
    max_steps: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLesson {
    nodes: Option<[usize; 2]>,
    avg_degree: Option<[f64; 2]>,
    path_len: Option<[usize; 2]>,
    clusters: Option<[usize; 2]>,
    cut: Option<[usize; 2]>,
    max_degree: Option<usize>,
    items: Option<[usize; 2]>,
    digits: Option<[usize; 2]>,
    points: Option<[usize; 2]>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    episodes_per_point: Option<usize>,
    p_lo: Option<u32>,
    p_hi: Option<u32>,
    stride: Option<u32>,
    sizes: Option<Vec<usize>>,
    memory: Option<String>,
    extend_factor: Option<usize>,
    tau: Option<f64>,
    restrict_tau_to_reads: Option<bool>,
    alloc_threshold: Option<f64>,
    growth_factor: Option<usize>,
    temp_factor: Option<f64>,
    usage_cell_cutoff: Option<f64>,
    max_extensions: Option<usize>,
}

/// Evaluation knobs for the sweep subcommands; defaults match the
/// documented desk-scale settings (p ∈ [0,300], stride 5, 100 episodes).
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub episodes_per_point: usize,
    pub p_lo: u32,
    pub p_hi: u32,
    pub stride: u32,
    pub sizes: Vec<usize>,
    pub infer: InferOptions,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            episodes_per_point: 100,
            p_lo: 0,
            p_hi: 300,
            stride: 5,
            sizes: Vec::new(),
            infer: InferOptions::default(),
        }
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalSettings,
    /// Raw config file bytes, hashed into the run manifest.
    pub raw: Vec<u8>,
}

pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<RunConfig> {
    let file: FileConfig =
        toml::from_str(text).map_err(|e| DncError::Config(format!("config parse error: {e}")))?;

    let kind: TaskKind = file
        .task
        .kind
        .as_deref()
        .ok_or_else(|| DncError::Config("missing task.kind".into()))?
        .parse()?;
    let seed = seed_override.or(file.run.seed).unwrap_or(0);
    let mut cfg = TrainConfig::defaults_for(kind, seed);

    if let Some(n_max) = file.task.n_max {
        cfg.encoding = Encoding::new(kind, n_max);
    }
    if let Some(v) = file.model.memory_cells {
        cfg.cells = v;
    }
    if let Some(v) = file.model.word_size {
        cfg.word = v;
    }
    if let Some(v) = file.model.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = file.model.read_heads {
        cfg.read_heads = v;
    }
    if let Some(raw) = &file.budget {
        cfg.budget = parse_budget(raw)?;
    }

    let t = &file.train;
    if let Some(v) = t.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = t.grad_clip_norm {
        cfg.grad_clip_norm = v;
    }
    if let Some(v) = t.mix_ratio {
        cfg.mix_ratio = v;
    }
    if let Some(v) = t.eval_cadence {
        cfg.eval_cadence = v;
    }
    if let Some(v) = t.advance_threshold {
        cfg.advance_threshold = v;
    }
    if let Some(v) = t.eval_set_size {
        cfg.eval_set_size = v;
    }
    if let Some(v) = t.final_lesson_steps {
        cfg.final_lesson_steps = v;
    }
    if let Some(v) = t.grad_accum {
        cfg.grad_accum = v;
    }
    cfg.early_stop_accuracy = t.early_stop_accuracy;
    cfg.max_steps = t.max_steps;

    if !file.lesson.is_empty() {
        cfg.curriculum = file
            .lesson
            .iter()
            .map(|raw| parse_lesson(kind, raw))
            .collect::<Result<_>>()?;
    }
    cfg.validate()?;

    let eval = parse_eval(&file.eval)?;
    Ok(RunConfig {
        train: cfg,
        eval,
        raw: text.as_bytes().to_vec(),
    })
}

pub fn load_config(path: &std::path::Path, seed_override: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, seed_override)
}

fn parse_budget(raw: &RawBudget) -> Result<BudgetPolicy> {
    let kind = match raw.kind.as_str() {
        "constant" => BudgetKind::Constant {
            c: raw.c.ok_or_else(|| DncError::Config("constant budget needs `c`".into()))?,
        },
        "linear" => BudgetKind::Linear {
            k: raw.k.ok_or_else(|| DncError::Config("linear budget needs `k`".into()))?,
        },
        "quadratic" => BudgetKind::Quadratic,
        "edges-times-nodes" => BudgetKind::EdgesTimesNodes,
        other => return Err(DncError::Config(format!("unknown budget kind '{other}'"))),
    };
    let stochastic = match raw.stochastic.as_deref() {
        None | Some("off") => StochasticExtra::Off,
        Some("geometric") => StochasticExtra::Geometric,
        Some("deterministic-expected") => StochasticExtra::DeterministicExpected,
        Some(other) => return Err(DncError::Config(format!("unknown stochastic mode '{other}'"))),
    };
    let policy = BudgetPolicy {
        kind,
        stochastic,
        confidence: raw.confidence.unwrap_or(0.95),
    };
    policy.validate()?;
    Ok(policy)
}

fn parse_lesson(kind: TaskKind, raw: &RawLesson) -> Result<LessonSpec> {
    let pair = |v: Option<[usize; 2]>| v.map(|[a, b]| (a, b));
    let need = |name: &str| DncError::Config(format!("lesson for {} needs `{name}`", kind.name()));
    let spec = match kind {
        TaskKind::ShortestPath => LessonSpec::ShortestPath {
            nodes: pair(raw.nodes).ok_or_else(|| need("nodes"))?,
            avg_degree: raw.avg_degree.map(|[a, b]| (a, b)).ok_or_else(|| need("avg_degree"))?,
            path_len: pair(raw.path_len).ok_or_else(|| need("path_len"))?,
        },
        TaskKind::MinCut => LessonSpec::MinCut {
            nodes: pair(raw.nodes).ok_or_else(|| need("nodes"))?,
            clusters: pair(raw.clusters).unwrap_or((2, 3)),
            cut: pair(raw.cut).ok_or_else(|| need("cut"))?,
            max_degree: raw.max_degree.ok_or_else(|| need("max_degree"))?,
        },
        TaskKind::AssociativeRecall => LessonSpec::AssociativeRecall {
            items: pair(raw.items).ok_or_else(|| need("items"))?,
            digits: pair(raw.digits).unwrap_or((1, 5)),
        },
        TaskKind::ConvexHull => LessonSpec::ConvexHull {
            points: pair(raw.points).ok_or_else(|| need("points"))?,
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_eval(raw: &EvalSection) -> Result<EvalSettings> {
    let mut out = EvalSettings::default();
    if let Some(v) = raw.episodes_per_point {
        out.episodes_per_point = v;
    }
    if let Some(v) = raw.p_lo {
        out.p_lo = v;
    }
    if let Some(v) = raw.p_hi {
        out.p_hi = v;
    }
    if let Some(v) = raw.stride {
        out.stride = v;
    }
    if let Some(v) = &raw.sizes {
        out.sizes = v.clone();
    }
    let mut adaptive = AdaptiveMemoryConfig::default();
    if let Some(v) = raw.alloc_threshold {
        adaptive.alloc_threshold = v;
    }
    if let Some(v) = raw.growth_factor {
        adaptive.growth_factor = v;
    }
    if let Some(v) = raw.temp_factor {
        adaptive.temp_factor = v;
    }
    if let Some(v) = raw.usage_cell_cutoff {
        adaptive.usage_cell_cutoff = v;
    }
    if let Some(v) = raw.max_extensions {
        adaptive.max_extensions = v;
    }
    out.infer.strategy = match raw.memory.as_deref() {
        None | Some("fixed") => MemoryStrategy::Fixed,
        Some("fixed-extended") => MemoryStrategy::FixedExtended {
            factor: raw.extend_factor.unwrap_or(2),
            tau: raw.tau.unwrap_or(0.85),
        },
        Some("adaptive") => MemoryStrategy::Adaptive(adaptive),
        Some(other) => return Err(DncError::Config(format!("unknown memory strategy '{other}'"))),
    };
    if let Some(v) = raw.restrict_tau_to_reads {
        out.infer.restrict_tau_to_reads = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_task_defaults() {
        let cfg = parse_config("[task]\nkind = \"shortest-path\"\n", None).unwrap();
        assert_eq!(cfg.train.task, TaskKind::ShortestPath);
        assert_eq!(cfg.train.cells, 200);
        assert_eq!(cfg.train.word, 128);
        assert_eq!(cfg.train.curriculum.len(), 14);
        assert_eq!(cfg.train.eval_cadence, 1000);
        assert_eq!(cfg.train.advance_threshold, 0.80);
    }

    #[test]
    fn budget_inline_table_matches_documented_form() {
        // Top-level inline form (must precede section headers in TOML).
        let text = r#"
budget = { kind = "linear", k = 1.0, stochastic = "geometric", confidence = 0.95 }

[task]
kind = "shortest-path"
"#;
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(cfg.train.budget.kind, BudgetKind::Linear { k: 1.0 });
        assert_eq!(cfg.train.budget.stochastic, StochasticExtra::Geometric);
        assert_eq!(cfg.train.budget.confidence, 0.95);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let bad = "[task]\nkind = \"mincut\"\n\n[train]\nlearning_rte = 0.001\n";
        assert!(matches!(parse_config(bad, None), Err(DncError::Config(_))));
        let bad2 = "[task]\nkind = \"mincut\"\n\n[typo_section]\nx = 1\n";
        assert!(matches!(parse_config(bad2, None), Err(DncError::Config(_))));
    }

    #[test]
    fn custom_lessons_and_seed_override() {
        let text = r#"
[run]
seed = 5

[task]
kind = "associative-recall"

[model]
memory_cells = 100
word_size = 32
hidden = 64

[[lesson]]
items = [2, 6]
digits = [1, 2]
"#;
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(cfg.train.seed, 5);
        assert_eq!(
            cfg.train.curriculum,
            vec![LessonSpec::AssociativeRecall { items: (2, 6), digits: (1, 2) }]
        );
        let overridden = parse_config(text, Some(9)).unwrap();
        assert_eq!(overridden.train.seed, 9);
    }

    #[test]
    fn eval_strategy_parsing() {
        let text = r#"
[task]
kind = "shortest-path"

[eval]
memory = "fixed-extended"
extend_factor = 5
tau = 0.65
sizes = [10, 50, 100]
"#;
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(
            cfg.eval.infer.strategy,
            MemoryStrategy::FixedExtended { factor: 5, tau: 0.65 }
        );
        assert_eq!(cfg.eval.sizes, vec![10, 50, 100]);
    }
}
