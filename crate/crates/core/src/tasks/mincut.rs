//! MinCut instance generation: the clustered construction.
//!
//! Nodes are split into k groups of at least c+2 nodes; each group gets an
//! internal graph with minimum degree ≥ c+1 (verified to be (c+1)-edge-
//! connected so no accidental cut beats the planted one); group 1 is joined
//! to the rest by exactly c edges; with more than two groups the remaining
//! clusters are wired to at least c cross edges (c+1 when a unique minimum
//! cut is required). The planted boundary of group 1 is then the global
//! minimum cut, which the generator re-verifies with Stoer–Wagner.

use std::collections::BTreeSet;

use super::graph::{self, Graph};
use super::{AnswerStep, InstanceInfo, Query, RawProblem, TaskInstance, TaskKind, GENERATION_RETRIES};
use crate::error::{DncError, Result};
use crate::rng;
use crate::tasks::encoding;
use rand_chacha::ChaCha8Rng;

#[allow(clippy::too_many_arguments)]
pub(super) fn generate(
    nodes: (usize, usize),
    clusters: (usize, usize),
    cut: (usize, usize),
    max_degree: usize,
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

    'outer: for _attempt in 0..GENERATION_RETRIES {
        let n = rng::uniform_range(rng, nodes.0, nodes.1);
        let c = rng::uniform_range(rng, cut.0, cut.1);
        if max_degree < c + 1 {
            return Err(DncError::Config(format!(
                "max_degree {max_degree} cannot support minimum degree {}",
                c + 1
            )));
        }
        let k_hi = clusters.1.min(n / (c + 2));
        if k_hi < clusters.0 || k_hi < 2 {
            continue; // this (n, c) draw is infeasible, try again
        }
        let k = rng::uniform_range(rng, clusters.0.max(2), k_hi);

        // Partition labels into k groups of >= c+2 nodes.
        let labels: Vec<u16> = rng::sample_distinct(rng, label_space, n)
            .into_iter()
            .map(|i| (i + 1) as u16)
            .collect();
        let mut sizes = vec![c + 2; k];
        for _ in 0..n - k * (c + 2) {
            let g = rng::uniform_range(rng, 0, k - 1);
            sizes[g] += 1;
        }
        let mut groups: Vec<Vec<u16>> = Vec::with_capacity(k);
        let mut offset = 0;
        for &s in &sizes {
            groups.push(labels[offset..offset + s].to_vec());
            offset += s;
        }

        // Internal graphs.
        let mut g = Graph::new();
        for &l in &labels {
            g.add_node(l);
        }
        for group in &groups {
            match sample_cluster(group, c, max_degree, rng) {
                Some(sub) => {
                    for (u, v) in sub.edges() {
                        g.add_edge(u, v);
                    }
                }
                None => continue 'outer,
            }
        }

        // Exactly c edges from group 1 to everything else.
        let rest: Vec<u16> = groups[1..].iter().flatten().copied().collect();
        let mut planted: BTreeSet<(u16, u16)> = BTreeSet::new();
        let mut guard = 0;
        while planted.len() < c {
            let u = groups[0][rng::uniform_range(rng, 0, groups[0].len() - 1)];
            let v = rest[rng::uniform_range(rng, 0, rest.len() - 1)];
            planted.insert((u.min(v), u.max(v)));
            guard += 1;
            if guard > 1000 {
                continue 'outer;
            }
        }
        for &(u, v) in &planted {
            g.add_edge(u, v);
        }

        // Wire the non-planted clusters up to their cross-degree floor.
        let needed = if unique_target { c + 1 } else { c };
        if k > 2 {
            let mut guard = 0;
            loop {
                let cross: Vec<usize> = (1..k).map(|i| cross_degree(&g, &groups, i)).collect();
                let Some(deficit) = cross.iter().position(|&x| x < needed) else {
                    break;
                };
                let i = deficit + 1;
                // Pair the deficient cluster with another non-planted cluster.
                let j = loop {
                    let j = rng::uniform_range(rng, 1, k - 1);
                    if j != i {
                        break j;
                    }
                };
                let u = groups[i][rng::uniform_range(rng, 0, groups[i].len() - 1)];
                let v = groups[j][rng::uniform_range(rng, 0, groups[j].len() - 1)];
                if !g.has_edge(u, v) {
                    g.add_edge(u, v);
                }
                guard += 1;
                if guard > 2000 {
                    continue 'outer;
                }
            }
        }

        // Final verification: connected and min cut exactly c. Uniqueness in
        // unique mode follows from the construction: clusters are (c+1)-edge-
        // connected, so any cut splitting a cluster costs ≥ c+1, and every
        // whole-cluster boundary other than the planted one has ≥ c+1 cross
        // edges.
        if !g.is_connected() || graph::stoer_wagner(&g) as usize != c {
            continue 'outer;
        }

        let mut target: Vec<AnswerStep> = planted.iter().map(|&(u, v)| AnswerStep::Edge(u, v)).collect();
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
            kind: TaskKind::MinCut,
            seed,
            lesson: lesson_id,
            raw: RawProblem::Graph { edges },
            query: Query::None,
            target,
            meta,
        });
    }
    Err(DncError::Generation {
        retries: GENERATION_RETRIES,
        reason: format!("could not build a mincut instance (nodes {nodes:?}, cut {cut:?}, max degree {max_degree})"),
    })
}

/// Cross-degree of cluster `i`: edges with exactly one endpoint inside it.
fn cross_degree(g: &Graph, groups: &[Vec<u16>], i: usize) -> usize {
    let inside: BTreeSet<u16> = groups[i].iter().copied().collect();
    g.edges()
        .iter()
        .filter(|(u, v)| inside.contains(u) != inside.contains(v))
        .count()
}

const CLUSTER_TRIES: usize = 300;

/// Sample an internal cluster graph: minimum degree ≥ c+1, maximum degree
/// ≤ d_max, and (c+1)-edge-connected. Uniform m-edge rejection first, then
/// a degree-capped greedy fallback.
fn sample_cluster(group: &[u16], c: usize, d_max: usize, rng: &mut ChaCha8Rng) -> Option<Graph> {
    let gsize = group.len();
    let min_deg = c + 1;
    let pairs = all_pairs(group);
    let m_lo = (gsize * min_deg).div_ceil(2);
    let m_hi = (gsize * d_max / 2).min(pairs.len());
    if m_lo > m_hi {
        return None;
    }
    for attempt in 0..CLUSTER_TRIES {
        let m = rng::uniform_range(rng, m_lo, m_hi);
        let sub = if attempt < CLUSTER_TRIES / 2 {
            let chosen = rng::sample_distinct(rng, pairs.len(), m);
            let mut sub = Graph::new();
            for &l in group {
                sub.add_node(l);
            }
            for idx in chosen {
                let (u, v) = pairs[idx];
                sub.add_edge(u, v);
            }
            sub
        } else {
            // Greedy fallback: shuffled pairs, capped degrees.
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            rng::shuffle(rng, &mut order);
            let mut sub = Graph::new();
            for &l in group {
                sub.add_node(l);
            }
            for idx in order {
                if sub.edge_count() >= m {
                    break;
                }
                let (u, v) = pairs[idx];
                if sub.degree(u) < d_max && sub.degree(v) < d_max {
                    sub.add_edge(u, v);
                }
            }
            sub
        };
        let degrees_ok = group
            .iter()
            .all(|&v| (min_deg..=d_max).contains(&sub.degree(v)));
        if degrees_ok && graph::stoer_wagner(&sub) as usize >= min_deg {
            return Some(sub);
        }
    }
    None
}

fn all_pairs(group: &[u16]) -> Vec<(u16, u16)> {
    let mut out = Vec::with_capacity(group.len() * (group.len() - 1) / 2);
    for i in 0..group.len() {
        for j in i + 1..group.len() {
            out.push((group[i], group[j]));
        }
    }
    out
}
