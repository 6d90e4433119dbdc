//! Undirected graph utilities backing the graph tasks: BFS distances,
//! exhaustive shortest-path enumeration, unique-shortest-path pruning,
//! Stoer–Wagner global min cut, and exhaustive min-cut enumeration.
//!
//! Nodes are labels (`u16`), not dense indices; containers are ordered so
//! every traversal is deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{DncError, Result};

/// Undirected simple graph over arbitrary `u16` labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    adj: BTreeMap<u16, BTreeSet<u16>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn add_node(&mut self, v: u16) {
        self.adj.entry(v).or_default();
    }

    pub fn add_edge(&mut self, u: u16, v: u16) {
        debug_assert_ne!(u, v);
        self.adj.entry(u).or_default().insert(v);
        self.adj.entry(v).or_default().insert(u);
    }

    pub fn remove_edge(&mut self, u: u16, v: u16) {
        if let Some(s) = self.adj.get_mut(&u) {
            s.remove(&v);
        }
        if let Some(s) = self.adj.get_mut(&v) {
            s.remove(&u);
        }
    }

    pub fn has_edge(&self, u: u16, v: u16) -> bool {
        self.adj.get(&u).is_some_and(|s| s.contains(&v))
    }

    pub fn nodes(&self) -> impl Iterator<Item = u16> + '_ {
        self.adj.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn degree(&self, v: u16) -> usize {
        self.adj.get(&v).map_or(0, |s| s.len())
    }

    pub fn neighbors(&self, v: u16) -> impl Iterator<Item = u16> + '_ {
        self.adj.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Normalized (min,max) edge list in sorted order.
    pub fn edges(&self) -> Vec<(u16, u16)> {
        let mut out = Vec::new();
        for (&u, nbrs) in &self.adj {
            for &v in nbrs {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|s| s.len()).sum::<usize>() / 2
    }

    pub fn from_edges(edges: &[(u16, u16)]) -> Self {
        let mut g = Graph::new();
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.adj.keys().next().copied() else {
            return true;
        };
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.len() == self.node_count()
    }

    /// Induced subgraph over `keep`.
    pub fn induced(&self, keep: &BTreeSet<u16>) -> Graph {
        let mut g = Graph::new();
        for &v in keep {
            g.add_node(v);
        }
        for (u, v) in self.edges() {
            if keep.contains(&u) && keep.contains(&v) {
                g.add_edge(u, v);
            }
        }
        g
    }
}

/// BFS hop distances from `s`.
pub fn bfs_distances(g: &Graph, s: u16) -> BTreeMap<u16, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(s, 0);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for v in g.neighbors(u) {
            if !dist.contains_key(&v) {
                dist.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Enumerate every shortest s–t path as a node sequence, in lexicographic
/// order, stopping after `cap` paths. Returns empty when t is unreachable.
pub fn enumerate_shortest_paths(g: &Graph, s: u16, t: u16, cap: usize) -> Vec<Vec<u16>> {
    let d_s = bfs_distances(g, s);
    let Some(&total) = d_s.get(&t) else {
        return Vec::new();
    };
    let d_t = bfs_distances(g, t);
    let mut out = Vec::new();
    let mut path = vec![s];
    // Walk the layered shortest-path DAG; sorted neighbor order makes the
    // output lexicographic by node sequence.
    fn dfs(
        g: &Graph,
        d_s: &BTreeMap<u16, usize>,
        d_t: &BTreeMap<u16, usize>,
        total: usize,
        t: u16,
        path: &mut Vec<u16>,
        out: &mut Vec<Vec<u16>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        let du = d_s[&u];
        for v in g.neighbors(u) {
            let on_dag = d_s.get(&v) == Some(&(du + 1))
                && d_t.get(&v).is_some_and(|dv| du + 1 + dv == total);
            if on_dag {
                path.push(v);
                dfs(g, d_s, d_t, total, t, path, out, cap);
                path.pop();
            }
        }
    }
    dfs(g, &d_s, &d_t, total, t, &mut path, &mut out, cap);
    out
}

const PATH_ENUM_CAP: usize = 4096;

/// Prune edges until exactly one shortest s–t path remains.
///
/// Keeps the lexicographically smallest path and repeatedly removes, from
/// the first competing path, its first edge that does not lie on the kept
/// path. Only edges on non-surviving shortest paths are removed and the
/// s–t distance never changes.
pub fn enforce_unique_shortest_path(g: &mut Graph, s: u16, t: u16) -> Result<()> {
    let initial = enumerate_shortest_paths(g, s, t, 2);
    if initial.is_empty() {
        return Err(DncError::Data(format!("no path between {s} and {t}")));
    }
    loop {
        let paths = enumerate_shortest_paths(g, s, t, PATH_ENUM_CAP);
        if paths.len() <= 1 {
            return Ok(());
        }
        let kept: BTreeSet<(u16, u16)> = path_edges(&paths[0]).into_iter().collect();
        let competitor = &paths[1];
        let victim = path_edges(competitor)
            .into_iter()
            .find(|e| !kept.contains(e))
            .ok_or_else(|| DncError::Data("competing shortest path shares every edge".into()))?;
        g.remove_edge(victim.0, victim.1);
    }
}

/// Normalized edges of a node path.
pub fn path_edges(path: &[u16]) -> Vec<(u16, u16)> {
    path.windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect()
}

/// Stoer–Wagner global minimum cut value for a connected graph with unit
/// edge weights (contracted weights accumulate).
pub fn stoer_wagner(g: &Graph) -> u32 {
    let labels: Vec<u16> = g.nodes().collect();
    let n = labels.len();
    if n < 2 {
        return u32::MAX;
    }
    let idx: BTreeMap<u16, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut w = vec![vec![0u32; n]; n];
    for (u, v) in g.edges() {
        let (i, j) = (idx[&u], idx[&v]);
        w[i][j] += 1;
        w[j][i] += 1;
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut best = u32::MAX;
    while active.len() > 1 {
        // Maximum adjacency search.
        let mut in_a = vec![false; n];
        let mut weight_to_a = vec![0u32; n];
        let mut order = Vec::with_capacity(active.len());
        for _ in 0..active.len() {
            let mut pick = None;
            for &v in &active {
                if !in_a[v] && pick.map_or(true, |p: usize| weight_to_a[v] > weight_to_a[p]) {
                    pick = Some(v);
                }
            }
            let v = pick.unwrap();
            in_a[v] = true;
            order.push(v);
            for &u in &active {
                if !in_a[u] {
                    weight_to_a[u] += w[v][u];
                }
            }
        }
        let t = *order.last().unwrap();
        let s = order[order.len() - 2];
        best = best.min(weight_to_a[t]);
        // Contract t into s.
        for &u in &active {
            if u != s && u != t {
                w[s][u] += w[t][u];
                w[u][s] = w[s][u];
            }
        }
        active.retain(|&u| u != t);
    }
    best
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All global minimum cuts, each as a sorted normalized edge set, by
/// exhaustive scan over edge subsets of the min-cut size. Errors when the
/// scan would exceed `cap` subsets.
pub fn enumerate_min_cuts(g: &Graph, cap: u128) -> Result<Vec<Vec<(u16, u16)>>> {
    let value = stoer_wagner(g);
    if value == u32::MAX {
        return Err(DncError::Data("min cut undefined for graphs with < 2 nodes".into()));
    }
    let value = value as usize;
    let edges = g.edges();
    if binomial(edges.len(), value) > cap {
        return Err(DncError::Data(format!(
            "min-cut enumeration too large: C({}, {value}) exceeds cap {cap}",
            edges.len()
        )));
    }
    let nodes: Vec<u16> = g.nodes().collect();
    let mut cuts = Vec::new();
    let mut chosen = Vec::with_capacity(value);
    enumerate_subsets(&edges, value, 0, &mut chosen, &mut |subset| {
        if disconnects(&nodes, &edges, subset) {
            cuts.push(subset.to_vec());
        }
    });
    Ok(cuts)
}

fn enumerate_subsets(
    edges: &[(u16, u16)],
    k: usize,
    start: usize,
    chosen: &mut Vec<(u16, u16)>,
    visit: &mut impl FnMut(&[(u16, u16)]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let need = k - chosen.len();
    for i in start..=edges.len().saturating_sub(need) {
        chosen.push(edges[i]);
        enumerate_subsets(edges, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Does removing `removed` disconnect the node set? Union-find over the
/// surviving edges.
pub fn disconnects(nodes: &[u16], edges: &[(u16, u16)], removed: &[(u16, u16)]) -> bool {
    let idx: BTreeMap<u16, usize> = nodes.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = nodes.len();
    for e in edges {
        if removed.contains(e) {
            continue;
        }
        let (a, b) = (find(&mut parent, idx[&e.0]), find(&mut parent, idx[&e.1]));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components > 1
}
