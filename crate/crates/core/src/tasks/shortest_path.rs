//! Graph Shortest Path instance generation.
//!
//! A lesson is parameterized by node count, average degree, and path-length
//! ranges. Graphs are sampled uniformly over (n nodes, m edges) with
//! m ~ U[⌊n·d₁/2⌋, ⌊n·d₂/2⌋]; the (s,t) query is drawn uniformly among
//! pairs whose BFS distance lies in the path-length range. In unique-target
//! mode competing shortest paths are pruned away before the target is read.

use super::graph::{self, Graph};
use super::{AnswerStep, InstanceInfo, Query, RawProblem, TaskInstance, TaskKind, GENERATION_RETRIES};
use crate::error::{DncError, Result};
use crate::rng;
use crate::tasks::encoding;
use rand_chacha::ChaCha8Rng;

#[allow(clippy::too_many_arguments)]
pub(super) fn generate(
    nodes: (usize, usize),
    avg_degree: (f64, f64),
    path_len: (usize, usize),
    lesson_id: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    unique_target: bool,
) -> Result<TaskInstance> {
    let label_space = encoding::GRAPH_LABEL_MAX;
    if nodes.1 > label_space {
        return Err(DncError::Config(format!(
            "lesson asks for {} nodes but only {label_space} labels exist",
            nodes.1
        )));
    }

    for _attempt in 0..GENERATION_RETRIES {
        let n = rng::uniform_range(rng, nodes.0, nodes.1);
        let m_lo = ((n as f64) * avg_degree.0 / 2.0).floor() as usize;
        let m_hi = ((n as f64) * avg_degree.1 / 2.0).floor() as usize;
        let max_edges = n * (n - 1) / 2;
        let m_lo = m_lo.clamp(1, max_edges);
        let m_hi = m_hi.clamp(m_lo, max_edges);
        let m = rng::uniform_range(rng, m_lo, m_hi);

        // Unique labels for the nodes, then m distinct pairs.
        let labels: Vec<u16> = rng::sample_distinct(rng, label_space, n)
            .into_iter()
            .map(|i| (i + 1) as u16)
            .collect();
        let pair_idx = rng::sample_distinct(rng, max_edges, m);
        let mut g = Graph::new();
        for &l in &labels {
            g.add_node(l);
        }
        for idx in pair_idx {
            let (a, b) = unrank_pair(idx, n);
            g.add_edge(labels[a], labels[b]);
        }

        // Candidate queries with in-range distance.
        let mut candidates: Vec<(u16, u16)> = Vec::new();
        for &s in &labels {
            let dist = graph::bfs_distances(&g, s);
            for (&t, &d) in &dist {
                if t != s && (path_len.0..=path_len.1).contains(&d) {
                    candidates.push((s, t));
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let (s, t) = candidates[rng::uniform_range(rng, 0, candidates.len() - 1)];

        if unique_target {
            graph::enforce_unique_shortest_path(&mut g, s, t)?;
        }

        let paths = graph::enumerate_shortest_paths(&g, s, t, 4096);
        let best = &paths[0]; // lexicographically smallest
        let mut target: Vec<AnswerStep> = best.windows(2).map(|w| AnswerStep::Edge(w[0], w[1])).collect();
        target.push(AnswerStep::Stop);

        let edges = super::present_edges(g.edges(), rng);
        let meta = InstanceInfo {
            n: edges.len(),
            nodes: Some(n),
            edges: Some(edges.len()),
            seed,
            lesson: lesson_id,
        };
        return Ok(TaskInstance {
            kind: TaskKind::ShortestPath,
            seed,
            lesson: lesson_id,
            raw: RawProblem::Graph { edges },
            query: Query::SourceTarget { s, t },
            target,
            meta,
        });
    }
    Err(DncError::Generation {
        retries: GENERATION_RETRIES,
        reason: format!(
            "no graph with an s-t pair at distance in {path_len:?} (nodes {nodes:?}, degree {avg_degree:?})"
        ),
    })
}

/// Map a combination index in [0, C(n,2)) to an (i, j) pair with i < j.
fn unrank_pair(mut idx: usize, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index out of range");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RootSeed, Stream};
    use crate::tasks::{check_answer, oracle_answers, LessonSpec};

    #[test]
    fn unrank_covers_all_pairs() {
        let n = 7;
        let mut seen = std::collections::BTreeSet::new();
        for idx in 0..n * (n - 1) / 2 {
            let (i, j) = unrank_pair(idx, n);
            assert!(i < j && j < n);
            assert!(seen.insert((i, j)));
        }
    }

    #[test]
    fn lesson_one_instances_are_consistent() {
        let lesson = LessonSpec::ShortestPath {
            nodes: (5, 10),
            avg_degree: (1.0, 2.0),
            path_len: (2, 2),
        };
        let mut rng = RootSeed(21).stream(Stream::Dataset(0));
        for i in 0..50 {
            let inst = crate::tasks::generate(&lesson, 1, i, &mut rng, true).unwrap();
            // Path length matches the lesson.
            assert_eq!(inst.target.len(), 2 + 1, "2 edges plus terminator");
            // The emitted target is one of the oracle answers, and unique.
            let oracle = oracle_answers(&inst).unwrap();
            assert_eq!(oracle.len(), 1, "unique-target mode left {} paths", oracle.len());
            assert!(oracle.contains(&inst.target));
            assert!(check_answer(&inst, &inst.target).unwrap());
        }
    }

    #[test]
    fn edge_count_respects_degree_bracket() {
        // Final-lesson bracket: N=20..25, degree (2,6) -> m in [N, 3N].
        let lesson = LessonSpec::ShortestPath {
            nodes: (20, 25),
            avg_degree: (2.0, 6.0),
            path_len: (2, 5),
        };
        let mut rng = RootSeed(5).stream(Stream::Dataset(1));
        for i in 0..30 {
            let inst = crate::tasks::generate(&lesson, 14, i, &mut rng, false).unwrap();
            let n = inst.meta.nodes.unwrap();
            let m = inst.meta.edges.unwrap();
            assert!(m >= n * 2 / 2 && m <= n * 6 / 2, "m={m} outside bracket for n={n}");
        }
    }
}
