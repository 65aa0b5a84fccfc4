//! Two-phase Louvain modularity optimization (local moves, then aggregation).
//!
//! Nodes are visited in index order and ties in modularity gain go to the
//! lowest community index, so the result is deterministic.

/// Undirected weighted graph as adjacency lists. Self-loops are stored once
/// in the owning node's list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn with_nodes(n: usize) -> Self {
        WeightedGraph { adj: vec![Vec::new(); n] }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        self.adj[a].push((b, w));
        if a != b {
            self.adj[b].push((a, w));
        }
    }

    /// Weighted degree; a self-loop contributes twice.
    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(j, w)| if j == i { 2.0 * w } else { w }).sum()
    }

    /// Total edge weight `m`.
    pub fn total_weight(&self) -> f64 {
        (0..self.node_count()).map(|i| self.degree(i)).sum::<f64>() / 2.0
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().enumerate().map(|(i, l)| l.iter().filter(|&&(j, _)| j >= i).count()).sum()
    }
}

/// Newman modularity of a node→community assignment.
pub fn modularity(g: &WeightedGraph, community: &[usize]) -> f64 {
    let m = g.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let n = g.node_count();
    let k: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let groups = community.iter().copied().max().map_or(0, |c| c + 1);
    let mut tot = vec![0.0; groups];
    let mut inside = vec![0.0; groups];
    for i in 0..n {
        tot[community[i]] += k[i];
        for &(j, w) in &g.adj[i] {
            if community[i] == community[j] {
                // each non-loop edge is seen from both endpoints
                inside[community[i]] += if i == j { 2.0 * w } else { w };
            }
        }
    }
    (0..groups).map(|c| inside[c] / (2.0 * m) - (tot[c] / (2.0 * m)).powi(2)).sum()
}

/// Phase 1: returns the community of each node, renumbered by first
/// appearance, and whether any node moved.
fn local_moves(g: &WeightedGraph) -> (Vec<usize>, bool) {
    let n = g.node_count();
    let m = g.total_weight();
    if m == 0.0 {
        return ((0..n).collect(), false);
    }
    let k: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut community: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = community[i];
            tot[own] -= k[i];
            for &(j, w) in &g.adj[i] {
                if j == i {
                    continue;
                }
                let c = community[j];
                if link[c] == 0.0 && !touched.contains(&c) {
                    touched.push(c);
                }
                link[c] += w;
            }
            let gain = |c: usize, l: f64| l - tot[c] * k[i] / (2.0 * m);
            let mut best = own;
            let mut best_gain = gain(own, link[own]);
            touched.sort_unstable();
            for &c in &touched {
                let g_c = gain(c, link[c]);
                if g_c > best_gain + 1e-12 || ((g_c - best_gain).abs() <= 1e-12 && c < best) {
                    best = c;
                    best_gain = g_c;
                }
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            link[own] = 0.0;
            touched.clear();
            tot[best] += k[i];
            if best != own {
                community[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (renumber(&community), moved_any)
}

fn renumber(community: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    community
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn aggregate(g: &WeightedGraph, community: &[usize]) -> WeightedGraph {
    let groups = community.iter().copied().max().map_or(0, |c| c + 1);
    let mut weights: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for i in 0..g.node_count() {
        for &(j, w) in &g.adj[i] {
            let (a, b) = (community[i], community[j]);
            if i == j {
                *weights.entry((a, a)).or_default() += w;
            } else if i < j {
                *weights.entry((a.min(b), a.max(b))).or_default() += w;
            }
        }
    }
    let mut out = WeightedGraph::with_nodes(groups);
    for ((a, b), w) in weights {
        out.add_edge(a, b, w);
    }
    out
}

/// Partition of the nodes into communities; each list is sorted and the lists
/// are ordered by their smallest member.
pub fn louvain(g: &WeightedGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut level = g.clone();
    loop {
        let (community, moved) = local_moves(&level);
        if !moved {
            break;
        }
        for a in assignment.iter_mut() {
            *a = community[*a];
        }
        level = aggregate(&level, &community);
    }
    let assignment = renumber(&assignment);
    let groups = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut out = vec![Vec::new(); groups];
    for (i, &c) in assignment.iter().enumerate() {
        out[c].push(i);
    }
    out
}

/// Node→community vector for a partition.
pub fn assignment_of(n: usize, parts: &[Vec<usize>]) -> Vec<usize> {
    let mut a = vec![0; n];
    for (c, part) in parts.iter().enumerate() {
        for &i in part {
            a[i] = c;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cliques() -> WeightedGraph {
        let mut g = WeightedGraph::with_nodes(10);
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    g.add_edge(base + i, base + j, 1.0);
                }
            }
        }
        g.add_edge(4, 5, 0.1);
        g
    }

    /// Best modularity over all set partitions (restricted growth strings).
    fn exhaustive_best(g: &WeightedGraph) -> f64 {
        fn rec(g: &WeightedGraph, a: &mut Vec<usize>, max: usize, best: &mut f64) {
            if a.len() == g.node_count() {
                *best = best.max(modularity(g, a));
                return;
            }
            for c in 0..=max + 1 {
                a.push(c);
                rec(g, a, max.max(c), best);
                a.pop();
            }
        }
        let mut best = f64::NEG_INFINITY;
        if g.node_count() == 0 {
            return 0.0;
        }
        let mut a = vec![0];
        rec(g, &mut a, 0, &mut best);
        best
    }

    #[test]
    fn two_cliques_split_in_two() {
        let g = two_cliques();
        let parts = louvain(&g);
        assert_eq!(parts, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]]);
        let q = modularity(&g, &assignment_of(10, &parts));
        assert!((q - exhaustive_best(&g)).abs() < 1e-9);
    }

    #[test]
    fn trivial_graphs() {
        assert!(louvain(&WeightedGraph::default()).is_empty());
        assert_eq!(louvain(&WeightedGraph::with_nodes(1)), vec![vec![0]]);
        assert_eq!(louvain(&WeightedGraph::with_nodes(3)), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn isolated_nodes_stay_singletons() {
        let mut g = WeightedGraph::with_nodes(4);
        g.add_edge(0, 1, 1.0);
        let parts = louvain(&g);
        assert_eq!(parts, vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn random_graphs_within_band_of_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            // planted partition: dense inside groups, sparse and weak across
            let n = rng.random_range(4..=10);
            let groups = rng.random_range(2..=3);
            let group: Vec<usize> = (0..n).map(|i| if i < groups { i } else { rng.random_range(0..groups) }).collect();
            let mut g = WeightedGraph::with_nodes(n);
            for i in 0..n {
                for j in i + 1..n {
                    let (p, w) = if group[i] == group[j] { (0.8, 0.5..1.0) } else { (0.15, 0.05..0.3) };
                    if rng.random_bool(p) {
                        g.add_edge(i, j, rng.random_range(w));
                    }
                }
            }
            let parts = louvain(&g);
            let a = assignment_of(n, &parts);
            let q = modularity(&g, &a);
            let singletons: Vec<usize> = (0..n).collect();
            assert!(q >= modularity(&g, &singletons) - 1e-12);
            let best = exhaustive_best(&g);
            if best > 0.0 {
                assert!(q >= 0.9 * best, "q = {q}, best = {best}, groups {group:?}");
            }
            assert_eq!(louvain(&g), parts);
        }
    }

    #[test]
    fn aggregation_preserves_modularity() {
        let g = two_cliques();
        let a = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let agg = aggregate(&g, &a);
        assert!((modularity(&g, &a) - modularity(&agg, &[0, 1])).abs() < 1e-12);
        assert!((agg.total_weight() - g.total_weight()).abs() < 1e-12);
    }
}
