//! Task generators, encoders, oracle solvers, and answer checkers for the
//! four algorithmic tasks: Graph Shortest Path, MinCut, Associative Recall,
//! and Convex Hull.

pub mod encoding;
pub mod graph;
mod hull;
mod mincut;
mod recall;
mod shortest_path;

use serde::{Deserialize, Serialize};

use crate::budget::InstanceMeta;
use crate::error::{DncError, Result};
use crate::rng::{self};
use graph::Graph;
use rand_chacha::ChaCha8Rng;

pub use encoding::Encoding;
pub use hull::convex_hull_positions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ShortestPath,
    MinCut,
    AssociativeRecall,
    ConvexHull,
}

impl TaskKind {
    pub fn all() -> [TaskKind; 4] {
        [
            TaskKind::ShortestPath,
            TaskKind::MinCut,
            TaskKind::AssociativeRecall,
            TaskKind::ConvexHull,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::ShortestPath => "shortest-path",
            TaskKind::MinCut => "mincut",
            TaskKind::AssociativeRecall => "associative-recall",
            TaskKind::ConvexHull => "convex-hull",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = DncError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortest-path" => Ok(TaskKind::ShortestPath),
            "mincut" => Ok(TaskKind::MinCut),
            "associative-recall" => Ok(TaskKind::AssociativeRecall),
            "convex-hull" => Ok(TaskKind::ConvexHull),
            other => Err(DncError::Config(format!("unknown task kind '{other}'"))),
        }
    }
}

/// Per-task lesson parameter ranges (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum LessonSpec {
    ShortestPath {
        nodes: (usize, usize),
        avg_degree: (f64, f64),
        path_len: (usize, usize),
    },
    MinCut {
        nodes: (usize, usize),
        clusters: (usize, usize),
        cut: (usize, usize),
        max_degree: usize,
    },
    AssociativeRecall {
        items: (usize, usize),
        digits: (usize, usize),
    },
    ConvexHull {
        points: (usize, usize),
    },
}

impl LessonSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            LessonSpec::ShortestPath { .. } => TaskKind::ShortestPath,
            LessonSpec::MinCut { .. } => TaskKind::MinCut,
            LessonSpec::AssociativeRecall { .. } => TaskKind::AssociativeRecall,
            LessonSpec::ConvexHull { .. } => TaskKind::ConvexHull,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges: Vec<(f64, f64)> = match *self {
            LessonSpec::ShortestPath { nodes, avg_degree, path_len } => vec![
                (nodes.0 as f64, nodes.1 as f64),
                avg_degree,
                (path_len.0 as f64, path_len.1 as f64),
            ],
            LessonSpec::MinCut { nodes, clusters, cut, max_degree } => vec![
                (nodes.0 as f64, nodes.1 as f64),
                (clusters.0 as f64, clusters.1 as f64),
                (cut.0 as f64, cut.1 as f64),
                (1.0, max_degree as f64),
            ],
            LessonSpec::AssociativeRecall { items, digits } => vec![
                (items.0 as f64, items.1 as f64),
                (digits.0 as f64, digits.1 as f64),
            ],
            LessonSpec::ConvexHull { points } => vec![(points.0 as f64, points.1 as f64)],
        };
        for (lo, hi) in ranges {
            if lo > hi || lo <= 0.0 {
                return Err(DncError::Config(format!("lesson range ({lo}, {hi}) is empty or nonpositive")));
            }
        }
        if let LessonSpec::AssociativeRecall { items, .. } = self {
            if items.0 < 2 {
                return Err(DncError::Config("recall lessons need at least 2 items (query has a successor)".into()));
            }
        }
        if let LessonSpec::ConvexHull { points } = self {
            if points.0 < 3 {
                return Err(DncError::Config("hull lessons need at least 3 points".into()));
            }
        }
        Ok(())
    }
}

/// One answer-sequence element. Targets always end with `Stop`; the model
/// signals it by predicting index 0 on its first output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerStep {
    Edge(u16, u16),
    Digit(u8),
    /// 1-based position in the x-sorted point list.
    Point(u16),
    Stop,
}

/// Raw problem payload, stored in presentation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawProblem {
    /// Edge list exactly as presented (order and endpoint orientation).
    Graph { edges: Vec<(u16, u16)> },
    Items { items: Vec<Vec<u8>> },
    /// Points sorted ascending by (x, y), coordinates quantized to 1e-3.
    Points { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Query {
    None,
    SourceTarget { s: u16, t: u16 },
    Item { digits: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceInfo {
    /// Input size n: edges for graph tasks, items for recall, points for hull.
    pub n: usize,
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
    pub seed: u64,
    pub lesson: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub seed: u64,
    pub lesson: usize,
    pub raw: RawProblem,
    pub query: Query,
    /// Target answer sequence, terminator included.
    pub target: Vec<AnswerStep>,
    pub meta: InstanceInfo,
}

impl TaskInstance {
    pub fn budget_meta(&self) -> InstanceMeta {
        InstanceMeta {
            n: self.meta.n,
            nodes: self.meta.nodes,
            edges: self.meta.edges,
        }
    }

    pub fn graph(&self) -> Option<Graph> {
        match &self.raw {
            RawProblem::Graph { edges } => Some(Graph::from_edges(edges)),
            _ => None,
        }
    }

    /// Answer length T (terminator included).
    pub fn target_len(&self) -> usize {
        self.target.len()
    }
}

pub const GENERATION_RETRIES: usize = 512;

/// Generate one instance for a lesson. With `unique_target` set, shortest
/// path and mincut instances are post-processed so exactly one valid answer
/// exists (training mode); evaluation leaves instances as sampled.
pub fn generate(
    lesson: &LessonSpec,
    lesson_id: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    unique_target: bool,
) -> Result<TaskInstance> {
    lesson.validate()?;
    match lesson {
        LessonSpec::ShortestPath { nodes, avg_degree, path_len } => shortest_path::generate(
            *nodes,
            *avg_degree,
            *path_len,
            lesson_id,
            seed,
            rng,
            unique_target,
        ),
        LessonSpec::MinCut { nodes, clusters, cut, max_degree } => {
            mincut::generate(*nodes, *clusters, *cut, *max_degree, lesson_id, seed, rng, unique_target)
        }
        LessonSpec::AssociativeRecall { items, digits } => {
            recall::generate(*items, *digits, lesson_id, seed, rng)
        }
        LessonSpec::ConvexHull { points } => hull::generate(*points, lesson_id, seed, rng),
    }
}

/// Convenience: derive the instance from (root seed, stream) then generate.
pub fn generate_seeded(
    lesson: &LessonSpec,
    lesson_id: usize,
    root: crate::rng::RootSeed,
    stream: crate::rng::Stream,
    unique_target: bool,
) -> Result<TaskInstance> {
    let mut rng = root.stream(stream);
    generate(lesson, lesson_id, root.0, &mut rng, unique_target)
}

const MINCUT_ENUM_CAP: u128 = 2_000_000;

/// All valid answer sequences for an instance (terminators included).
pub fn oracle_answers(instance: &TaskInstance) -> Result<Vec<Vec<AnswerStep>>> {
    match instance.kind {
        TaskKind::ShortestPath => {
            let g = instance.graph().unwrap();
            let Query::SourceTarget { s, t } = instance.query else {
                return Err(DncError::Data("shortest-path instance without (s,t) query".into()));
            };
            let paths = graph::enumerate_shortest_paths(&g, s, t, 1 << 20);
            if paths.is_empty() {
                return Err(DncError::Data(format!("query pair ({s},{t}) is disconnected")));
            }
            Ok(paths
                .into_iter()
                .map(|p| {
                    let mut steps: Vec<AnswerStep> =
                        p.windows(2).map(|w| AnswerStep::Edge(w[0], w[1])).collect();
                    steps.push(AnswerStep::Stop);
                    steps
                })
                .collect())
        }
        TaskKind::MinCut => {
            let g = instance.graph().unwrap();
            let cuts = graph::enumerate_min_cuts(&g, MINCUT_ENUM_CAP)?;
            Ok(cuts.into_iter().map(|c| cut_to_steps(&c)).collect())
        }
        TaskKind::AssociativeRecall | TaskKind::ConvexHull => Ok(vec![instance.target.clone()]),
    }
}

fn cut_to_steps(cut: &[(u16, u16)]) -> Vec<AnswerStep> {
    let mut steps: Vec<AnswerStep> = cut.iter().map(|&(u, v)| AnswerStep::Edge(u, v)).collect();
    steps.push(AnswerStep::Stop);
    steps
}

/// Is `prediction` (terminator-stripped or not) a correct answer?
///
/// Shortest path: exact match against any valid shortest path. MinCut: the
/// predicted edges, as an unordered set with unordered endpoints, must be
/// distinct edges of the graph whose count equals the global min-cut value
/// and whose removal disconnects it. Recall and hull: exact sequence match.
pub fn check_answer(instance: &TaskInstance, prediction: &[AnswerStep]) -> Result<bool> {
    let stripped = strip_stop(prediction);
    match instance.kind {
        TaskKind::MinCut => {
            let g = instance.graph().unwrap();
            let mut set = std::collections::BTreeSet::new();
            for step in stripped {
                let AnswerStep::Edge(u, v) = *step else { return Ok(false) };
                if u == v || !g.has_edge(u, v) {
                    return Ok(false);
                }
                if !set.insert((u.min(v), u.max(v))) {
                    return Ok(false);
                }
            }
            let value = graph::stoer_wagner(&g) as usize;
            if set.len() != value {
                return Ok(false);
            }
            let removed: Vec<(u16, u16)> = set.into_iter().collect();
            let nodes: Vec<u16> = g.nodes().collect();
            Ok(graph::disconnects(&nodes, &g.edges(), &removed))
        }
        TaskKind::ShortestPath => {
            for answer in oracle_answers(instance)? {
                if strip_stop(&answer) == stripped {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        TaskKind::AssociativeRecall | TaskKind::ConvexHull => {
            Ok(strip_stop(&instance.target) == stripped)
        }
    }
}

fn strip_stop(steps: &[AnswerStep]) -> &[AnswerStep] {
    match steps.last() {
        Some(AnswerStep::Stop) => &steps[..steps.len() - 1],
        _ => steps,
    }
}

/// Default curricula (lesson tables).
pub fn default_curriculum(kind: TaskKind) -> Vec<LessonSpec> {
    match kind {
        TaskKind::ShortestPath => {
            let rows: [(usize, usize, f64, f64, usize, usize); 14] = [
                (5, 10, 1.0, 2.0, 2, 2),
                (5, 20, 1.0, 2.0, 2, 2),
                (10, 20, 1.0, 2.0, 2, 2),
                (10, 20, 1.0, 2.0, 2, 3),
                (10, 20, 1.0, 2.0, 2, 3),
                (10, 20, 1.0, 3.0, 2, 3),
                (10, 20, 2.0, 3.0, 2, 4),
                (10, 20, 2.0, 3.0, 2, 4),
                (10, 25, 2.0, 4.0, 2, 4),
                (10, 25, 2.0, 4.0, 2, 5),
                (15, 25, 2.0, 4.0, 2, 5),
                (15, 25, 2.0, 5.0, 2, 5),
                (20, 25, 2.0, 5.0, 2, 5),
                (20, 25, 2.0, 6.0, 2, 5),
            ];
            rows.iter()
                .map(|&(n1, n2, d1, d2, p1, p2)| LessonSpec::ShortestPath {
                    nodes: (n1, n2),
                    avg_degree: (d1, d2),
                    path_len: (p1, p2),
                })
                .collect()
        }
        TaskKind::MinCut => {
            let rows: [(usize, usize, usize, usize, usize); 5] = [
                (10, 15, 1, 1, 3),
                (10, 15, 2, 3, 5),
                (15, 20, 2, 3, 5),
                (15, 20, 2, 4, 6),
                (20, 25, 2, 4, 6),
            ];
            rows.iter()
                .map(|&(n1, n2, c1, c2, dmax)| LessonSpec::MinCut {
                    nodes: (n1, n2),
                    clusters: (2, 3),
                    cut: (c1, c2),
                    max_degree: dmax,
                })
                .collect()
        }
        TaskKind::AssociativeRecall => [(5, 10), (5, 15), (10, 20), (15, 25), (20, 25)]
            .iter()
            .map(|&(a, b)| LessonSpec::AssociativeRecall {
                items: (a, b),
                digits: (1, 5),
            })
            .collect(),
        TaskKind::ConvexHull => [(5, 20), (10, 20), (15, 25), (20, 35)]
            .iter()
            .map(|&(a, b)| LessonSpec::ConvexHull { points: (a, b) })
            .collect(),
    }
}

/// Shuffle edges into presentation order with random endpoint orientation.
pub(crate) fn present_edges(edges: Vec<(u16, u16)>, rng: &mut ChaCha8Rng) -> Vec<(u16, u16)> {
    let mut out = edges;
    rng::shuffle(rng, &mut out);
    for e in out.iter_mut() {
        if rng::uniform(rng) < 0.5 {
            *e = (e.1, e.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RootSeed, Stream};

    #[test]
    fn curricula_match_published_tables() {
        assert_eq!(default_curriculum(TaskKind::ShortestPath).len(), 14);
        assert_eq!(default_curriculum(TaskKind::MinCut).len(), 5);
        assert_eq!(default_curriculum(TaskKind::AssociativeRecall).len(), 5);
        assert_eq!(default_curriculum(TaskKind::ConvexHull).len(), 4);
        let last = default_curriculum(TaskKind::ShortestPath)[13];
        assert_eq!(
            last,
            LessonSpec::ShortestPath {
                nodes: (20, 25),
                avg_degree: (2.0, 6.0),
                path_len: (2, 5)
            }
        );
    }

    #[test]
    fn mincut_check_accepts_any_orientation_and_order() {
        let instance = TaskInstance {
            kind: TaskKind::MinCut,
            seed: 0,
            lesson: 1,
            raw: RawProblem::Graph {
                edges: vec![(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6), (3, 4)],
            },
            query: Query::None,
            target: vec![AnswerStep::Edge(3, 4), AnswerStep::Stop],
            meta: InstanceInfo {
                n: 7,
                nodes: Some(6),
                edges: Some(7),
                seed: 0,
                lesson: 1,
            },
        };
        assert!(check_answer(&instance, &[AnswerStep::Edge(4, 3), AnswerStep::Stop]).unwrap());
        assert!(!check_answer(&instance, &[AnswerStep::Edge(1, 2), AnswerStep::Stop]).unwrap());
        assert!(!check_answer(&instance, &[AnswerStep::Stop]).unwrap());
        // Wrong length fails even with a valid member.
        assert!(!check_answer(
            &instance,
            &[AnswerStep::Edge(3, 4), AnswerStep::Edge(1, 2), AnswerStep::Stop]
        )
        .unwrap());
        let oracle = oracle_answers(&instance).unwrap();
        assert_eq!(oracle, vec![vec![AnswerStep::Edge(3, 4), AnswerStep::Stop]]);
    }

    #[test]
    fn shortest_path_accepts_any_valid_path() {
        // Diamond: two shortest paths 1-2-4 and 1-3-4.
        let instance = TaskInstance {
            kind: TaskKind::ShortestPath,
            seed: 0,
            lesson: 1,
            raw: RawProblem::Graph {
                edges: vec![(1, 2), (2, 4), (1, 3), (3, 4)],
            },
            query: Query::SourceTarget { s: 1, t: 4 },
            target: vec![AnswerStep::Edge(1, 2), AnswerStep::Edge(2, 4), AnswerStep::Stop],
            meta: InstanceInfo {
                n: 4,
                nodes: Some(4),
                edges: Some(4),
                seed: 0,
                lesson: 1,
            },
        };
        let a = [AnswerStep::Edge(1, 2), AnswerStep::Edge(2, 4), AnswerStep::Stop];
        let b = [AnswerStep::Edge(1, 3), AnswerStep::Edge(3, 4), AnswerStep::Stop];
        let wrong = [AnswerStep::Edge(1, 2), AnswerStep::Stop];
        assert!(check_answer(&instance, &a).unwrap());
        assert!(check_answer(&instance, &b).unwrap());
        assert!(!check_answer(&instance, &wrong).unwrap());
        assert_eq!(oracle_answers(&instance).unwrap().len(), 2);
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_lesson() {
        for kind in TaskKind::all() {
            let lesson = default_curriculum(kind)[0];
            let a = generate_seeded(&lesson, 1, RootSeed(7), Stream::Dataset(3), true).unwrap();
            let b = generate_seeded(&lesson, 1, RootSeed(7), Stream::Dataset(3), true).unwrap();
            assert_eq!(a, b, "{kind:?} generation must be deterministic");
            let c = generate_seeded(&lesson, 1, RootSeed(8), Stream::Dataset(3), true).unwrap();
            assert_ne!(a, c, "{kind:?} should vary with the seed");
        }
    }
}
