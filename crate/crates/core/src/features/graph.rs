//! Follower-graph features: pagerank, triangles, k-core and degrees.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Directed follower graph. Node order is lexicographic by user id; adjacency
/// lists are sorted and free of self-loops and duplicates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FollowerGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl FollowerGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, user: &str) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out_adj[from].binary_search(&to).is_ok()
    }

    /// Sorted neighbor lists of the undirected projection.
    pub fn undirected(&self) -> Vec<Vec<usize>> {
        (0..self.n_nodes())
            .map(|v| {
                let mut nb: Vec<usize> = self.out_adj[v].iter().chain(&self.in_adj[v]).copied().collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }
}

/// Every user mentioned in `follows` becomes a node, including users whose
/// only edge is a dropped self-loop.
pub fn build_follower_graph(follows: &[(String, String)]) -> FollowerGraph {
    let users: BTreeSet<&str> = follows
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let nodes: Vec<String> = users.into_iter().map(str::to_string).collect();
    let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut out_adj = vec![Vec::new(); nodes.len()];
    let mut in_adj = vec![Vec::new(); nodes.len()];
    for (a, b) in follows {
        let (x, y) = (index[a], index[b]);
        if x != y {
            out_adj[x].push(y);
            in_adj[y].push(x);
        }
    }
    for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
        adj.sort_unstable();
        adj.dedup();
    }
    FollowerGraph {
        nodes,
        index,
        out_adj,
        in_adj,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageRank {
    /// Aligned with `FollowerGraph::nodes`.
    pub scores: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
///
/// Stops once the L1 distance to the fixed point is provably below `tol`,
/// i.e. when `damping / (1 - damping) * |x_k - x_{k-1}|_1 < tol`.
pub fn pagerank(g: &FollowerGraph, damping: f64, tol: f64, max_iter: usize) -> PageRank {
    let n = g.n_nodes();
    if n == 0 {
        return PageRank {
            scores: Vec::new(),
            converged: true,
            iterations: 0,
        };
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let bound = if damping < 1.0 {
        damping / (1.0 - damping)
    } else {
        f64::INFINITY
    };
    for it in 1..=max_iter {
        let dangling: f64 = (0..n).filter(|&v| g.out_adj[v].is_empty()).map(|v| x[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g.in_adj[v]
                .iter()
                .map(|&u| x[u] / g.out_adj[u].len() as f64)
                .sum();
            *slot = base + damping * inflow;
        }
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if delta * bound < tol {
            return PageRank {
                scores: x,
                converged: true,
                iterations: it,
            };
        }
    }
    PageRank {
        scores: x,
        converged: false,
        iterations: max_iter,
    }
}

/// Triangles through each node in the undirected projection.
pub fn triangle_count(g: &FollowerGraph) -> Vec<u64> {
    let adj = g.undirected();
    let mut counts = vec![0u64; g.n_nodes()];
    for u in 0..adj.len() {
        for &v in adj[u].iter().filter(|&&v| v > u) {
            // common neighbours w > v, by sorted merge
            let (a, b) = (&adj[u], &adj[v]);
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let w = a[i];
                        if w > v {
                            counts[u] += 1;
                            counts[v] += 1;
                            counts[w] += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    counts
}

/// Core number of each node in the undirected projection (bucket peeling).
pub fn k_core(g: &FollowerGraph) -> Vec<u32> {
    let adj = g.undirected();
    let n = adj.len();
    let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let max_deg = deg.iter().copied().max().unwrap_or(0);
    let mut bins = vec![0usize; max_deg + 1];
    for &d in &deg {
        bins[d] += 1;
    }
    let mut start = 0;
    for b in bins.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut order = vec![0usize; n];
    let mut pos = vec![0usize; n];
    for v in 0..n {
        pos[v] = bins[deg[v]];
        order[pos[v]] = v;
        bins[deg[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bins[d] = bins[d - 1];
    }
    bins[0] = 0;
    for i in 0..n {
        let v = order[i];
        for &u in &adj[v] {
            if deg[u] > deg[v] {
                let du = deg[u];
                let pu = pos[u];
                let pw = bins[du];
                let w = order[pw];
                if u != w {
                    order[pu] = w;
                    order[pw] = u;
                    pos[u] = pw;
                    pos[w] = pu;
                }
                bins[du] += 1;
                deg[u] -= 1;
            }
        }
    }
    deg.into_iter().map(|d| d as u32).collect()
}

/// (in-degree, out-degree) on the directed graph.
pub fn degrees(g: &FollowerGraph) -> Vec<(usize, usize)> {
    (0..g.n_nodes())
        .map(|v| (g.in_adj[v].len(), g.out_adj[v].len()))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    pub pagerank: f64,
    pub triangles: f64,
    pub core: f64,
    pub in_degree: f64,
    pub out_degree: f64,
}

impl GraphFeatures {
    pub fn values(&self) -> [f64; 5] {
        [
            self.pagerank,
            self.triangles,
            self.core,
            self.in_degree,
            self.out_degree,
        ]
    }
}

/// Graph features per user; users outside the graph read as all zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatureTable {
    pub pagerank_converged: bool,
    pub users: BTreeMap<String, GraphFeatures>,
}

impl GraphFeatureTable {
    pub fn compute(g: &FollowerGraph) -> GraphFeatureTable {
        let pr = pagerank(g, 0.85, 1e-8, 200);
        let tri = triangle_count(g);
        let core = k_core(g);
        let deg = degrees(g);
        let users = g
            .nodes()
            .iter()
            .enumerate()
            .map(|(v, id)| {
                (
                    id.clone(),
                    GraphFeatures {
                        pagerank: pr.scores[v],
                        triangles: tri[v] as f64,
                        core: core[v] as f64,
                        in_degree: deg[v].0 as f64,
                        out_degree: deg[v].1 as f64,
                    },
                )
            })
            .collect();
        GraphFeatureTable {
            pagerank_converged: pr.converged,
            users,
        }
    }

    pub fn get(&self, user: &str) -> GraphFeatures {
        self.users.get(user).copied().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(list: &[(&str, &str)]) -> Vec<(String, String)> {
        list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn parallel_edges_collapse() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("a", "b")]));
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn self_loops_dropped() {
        let g = build_follower_graph(&edges(&[("a", "a")]));
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn reciprocal_edges_kept() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("b", "a")]));
        assert_eq!(g.n_edges(), 2);
    }

    #[test]
    fn pagerank_on_symmetric_graphs() {
        let cycle = build_follower_graph(&edges(&[("a", "b"), ("b", "c"), ("c", "a")]));
        let pr = pagerank(&cycle, 0.85, 1e-12, 500);
        assert!(pr.converged);
        for s in pr.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-10);
        }
        let pair = build_follower_graph(&edges(&[("a", "b"), ("b", "a")]));
        for s in pagerank(&pair, 0.85, 1e-12, 500).scores {
            assert!((s - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn pagerank_reports_non_convergence() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("c", "b"), ("d", "b")]));
        let pr = pagerank(&g, 0.85, 1e-15, 2);
        assert!(!pr.converged);
        assert_eq!(pr.iterations, 2);
        assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_and_core_on_triangle() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("b", "c"), ("c", "a")]));
        assert_eq!(triangle_count(&g), vec![1, 1, 1]);
        assert_eq!(k_core(&g), vec![2, 2, 2]);
    }

    #[test]
    fn triangle_and_core_on_path() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("b", "c")]));
        assert_eq!(triangle_count(&g), vec![0, 0, 0]);
        assert_eq!(k_core(&g), vec![1, 1, 1]);
    }

    #[test]
    fn isolated_node_has_core_zero() {
        let g = build_follower_graph(&edges(&[("a", "a"), ("b", "c")]));
        assert_eq!(k_core(&g), vec![0, 1, 1]);
    }

    #[test]
    fn degrees_are_directed() {
        let g = build_follower_graph(&edges(&[("a", "b"), ("c", "b"), ("b", "a")]));
        assert_eq!(degrees(&g), vec![(1, 1), (2, 1), (0, 1)]);
    }

    #[test]
    fn absent_user_reads_zero() {
        let t = GraphFeatureTable::compute(&build_follower_graph(&edges(&[("a", "b")])));
        assert_eq!(t.get("zz"), GraphFeatures::default());
        assert!(t.get("b").in_degree == 1.0);
    }
}
