use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{haversine, GeoPoint, LocalFrame};

/// Origin/destination anchors of one region pair and the intermediate nodes
/// an anomalous walk may be forced through.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPair {
    pub origin: usize,
    pub destination: usize,
    pub detour_candidates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct WaypointGraph {
    pub nodes: Vec<GeoPoint>,
    /// `(a, b, length_m)` with `a < b`.
    pub edges: Vec<(usize, usize, f64)>,
    pub pairs: Vec<RegionPair>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WaypointGraph {
    pub fn new(nodes: Vec<GeoPoint>) -> Self {
        let adj = vec![Vec::new(); nodes.len()];
        WaypointGraph { nodes, edges: Vec::new(), pairs: Vec::new(), adj }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, n: usize) -> &[(usize, f64)] {
        &self.adj[n]
    }

    /// Add an undirected edge whose length is the haversine distance of its
    /// endpoints. Duplicates and self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        for n in [a, b] {
            if n >= self.nodes.len() {
                return Err(Error::UnknownNode(n));
            }
        }
        let (a, b) = (a.min(b), a.max(b));
        if a == b || self.adj[a].iter().any(|&(m, _)| m == b) {
            return Ok(());
        }
        let len = haversine(&self.nodes[a], &self.nodes[b]);
        self.edges.push((a, b, len));
        self.adj[a].push((b, len));
        self.adj[b].push((a, len));
        Ok(())
    }

    fn remove_edge(&mut self, a: usize, b: usize) {
        self.edges.retain(|&(x, y, _)| !((x, y) == (a, b) || (x, y) == (b, a)));
        self.adj[a].retain(|&(m, _)| m != b);
        self.adj[b].retain(|&(m, _)| m != a);
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(n) = queue.pop_front() {
            for &(m, _) in &self.adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    count += 1;
                    queue.push_back(m);
                }
            }
        }
        count == self.nodes.len()
    }

    pub fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| haversine(&self.nodes[w[0]], &self.nodes[w[1]])).sum()
    }

    /// The bundled pseudo-street network: a jittered 14 x 14 grid (150 m
    /// blocks) with a few streets closed and a few diagonal shortcuts, plus
    /// 14 anchor nodes set inside blocks on one-edge spurs, forming 7 pairs.
    pub fn bundled() -> Self {
        const N: usize = 14;
        const SPACING: f64 = 150.0;
        let frame = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        let mut rng = ChaCha8Rng::seed_from_u64(0x57EE7);
        let idx = |i: usize, j: usize| i * N + j;
        let mut nodes = Vec::with_capacity(N * N + 14);
        for i in 0..N {
            for j in 0..N {
                let x = i as f64 * SPACING + rng.random_range(-20.0..20.0);
                let y = j as f64 * SPACING + rng.random_range(-20.0..20.0);
                nodes.push(frame.to_geo(x, y));
            }
        }
        // anchors sit at block (i, j) centres, hung off the block's south-west corner
        let blocks: [((usize, usize), (usize, usize)); 7] = [
            ((1, 1), (11, 9)),
            ((2, 11), (10, 2)),
            ((6, 0), (5, 12)),
            ((0, 6), (12, 7)),
            ((3, 4), (9, 11)),
            ((12, 1), (7, 8)),
            ((1, 9), (8, 4)),
        ];
        let anchor_block = |i: usize, j: usize| blocks.iter().any(|&(o, d)| o == (i, j) || d == (i, j));
        let mut g = WaypointGraph::new(nodes);
        for i in 0..N {
            for j in 0..N {
                if i + 1 < N {
                    g.add_edge(idx(i, j), idx(i + 1, j)).expect("grid node");
                }
                if j + 1 < N {
                    g.add_edge(idx(i, j), idx(i, j + 1)).expect("grid node");
                }
            }
        }
        // closed streets, kept only while the grid stays connected
        let candidates: Vec<(usize, usize)> = g.edges.iter().map(|&(a, b, _)| (a, b)).collect();
        for (a, b) in candidates {
            if rng.random_bool(0.1) {
                g.remove_edge(a, b);
                if !g.is_connected() {
                    g.add_edge(a, b).expect("grid node");
                }
            }
        }
        for i in 0..N - 1 {
            for j in 0..N - 1 {
                if rng.random_bool(0.06) && !anchor_block(i, j) {
                    if rng.random_bool(0.5) {
                        g.add_edge(idx(i, j), idx(i + 1, j + 1)).expect("grid node");
                    } else {
                        g.add_edge(idx(i + 1, j), idx(i, j + 1)).expect("grid node");
                    }
                }
            }
        }
        let add_anchor = |g: &mut WaypointGraph, (i, j): (usize, usize)| {
            let corner = frame.to_xy(&g.nodes[idx(i, j)]);
            let id = g.nodes.len();
            g.nodes.push(frame.to_geo(corner.0 + SPACING / 2.0, corner.1 + SPACING / 2.0));
            g.adj.push(Vec::new());
            g.add_edge(idx(i, j), id).expect("anchor node");
            id
        };
        let mut pairs = Vec::new();
        for (o, d) in blocks {
            let origin = add_anchor(&mut g, o);
            let destination = add_anchor(&mut g, d);
            pairs.push((origin, destination));
        }
        let anchors: Vec<usize> = pairs.iter().flat_map(|&(o, d)| [o, d]).collect();
        g.pairs = pairs
            .into_iter()
            .map(|(origin, destination)| {
                let detour_candidates = pick_detours(&g, &frame, origin, destination, &anchors);
                RegionPair { origin, destination, detour_candidates }
            })
            .collect();
        g
    }
}

/// Up to 4 grid nodes 200-600 m off the normal route, spread along it.
fn pick_detours(g: &WaypointGraph, frame: &LocalFrame, origin: usize, destination: usize, anchors: &[usize]) -> Vec<usize> {
    const SLOTS: usize = 5;
    let route = shortest_path(g, origin, destination).expect("bundled graph is connected");
    let line: Vec<(f64, f64)> = route.iter().map(|&n| frame.to_xy(&g.nodes[n])).collect();
    let total = super::polyline_length(&line);
    // SLOTS stretches along the route on either side; keep the node closest
    // to each stretch's centre
    let mut slots: [[Option<(f64, usize)>; 2]; SLOTS] = [[None; 2]; SLOTS];
    for n in 0..g.len() {
        if anchors.contains(&n) {
            continue;
        }
        let p = frame.to_xy(&g.nodes[n]);
        let (d, along) = super::project_onto_polyline(&line, p);
        if !(250.0..=550.0).contains(&d) || along <= 0.0 || along >= total {
            continue;
        }
        let q = super::point_at(&line, along);
        let ahead = super::point_at(&line, (along + 1.0).min(total));
        let cross = (ahead.0 - q.0) * (p.1 - q.1) - (ahead.1 - q.1) * (p.0 - q.0);
        let side = usize::from(cross < 0.0);
        let frac = along / total * SLOTS as f64;
        let slot = (frac as usize).min(SLOTS - 1);
        let centre_gap = (frac - slot as f64 - 0.5).abs();
        if slots[slot][side].is_none_or(|(gap, _)| centre_gap < gap) {
            slots[slot][side] = Some((centre_gap, n));
        }
    }
    slots.iter().flatten().flatten().map(|&(_, n)| n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const LEN_TIE: f64 = 1e-9;

/// Dijkstra shortest path. Among equal-length paths the predecessor with the
/// lower node id wins.
pub fn shortest_path(g: &WaypointGraph, from: usize, to: usize) -> Result<Vec<usize>> {
    for n in [from, to] {
        if n >= g.len() {
            return Err(Error::UnknownNode(n));
        }
    }
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut pred: Vec<Option<usize>> = vec![None; g.len()];
    let mut done = vec![false; g.len()];
    let mut heap = BinaryHeap::from([Entry { dist: 0.0, node: from }]);
    dist[from] = 0.0;
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == to {
            break;
        }
        for &(m, len) in g.neighbors(node) {
            if done[m] {
                continue;
            }
            let nd = d + len;
            let better = nd < dist[m] - LEN_TIE;
            let tie = (nd - dist[m]).abs() <= LEN_TIE && pred[m].is_some_and(|p| node < p);
            if better || tie {
                dist[m] = dist[m].min(nd);
                pred[m] = Some(node);
                heap.push(Entry { dist: nd, node: m });
            }
        }
    }
    if !dist[to].is_finite() {
        return Err(Error::Unreachable { from, to });
    }
    let mut path = vec![to];
    while let Some(p) = pred[*path.last().expect("non-empty")] {
        path.push(p);
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph(n: usize) -> WaypointGraph {
        let frame = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        WaypointGraph::new((0..n).map(|i| frame.to_geo(i as f64 * 100.0, 0.0)).collect())
    }

    #[test]
    fn trivial_paths() {
        let mut g = line_graph(2);
        assert_eq!(shortest_path(&g, 1, 1).unwrap(), vec![1]);
        assert!(matches!(shortest_path(&g, 0, 1), Err(Error::Unreachable { .. })));
        g.add_edge(0, 1).unwrap();
        assert_eq!(shortest_path(&g, 0, 1).unwrap(), vec![0, 1]);
        assert!(matches!(shortest_path(&g, 0, 5), Err(Error::UnknownNode(5))));
    }

    fn all_simple_paths(g: &WaypointGraph, from: usize, to: usize) -> Vec<Vec<usize>> {
        fn rec(g: &WaypointGraph, cur: &mut Vec<usize>, to: usize, out: &mut Vec<Vec<usize>>) {
            let n = *cur.last().unwrap();
            if n == to {
                out.push(cur.clone());
                return;
            }
            for &(m, _) in g.neighbors(n) {
                if !cur.contains(&m) {
                    cur.push(m);
                    rec(g, cur, to, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(g, &mut vec![from], to, &mut out);
        out
    }

    #[test]
    fn matches_exhaustive_paths_on_small_graphs() {
        let frame = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(2..=8);
            let nodes = (0..n)
                .map(|_| frame.to_geo(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
                .collect();
            let mut g = WaypointGraph::new(nodes);
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random_bool(0.4) {
                        g.add_edge(a, b).unwrap();
                    }
                }
            }
            let (from, to) = (rng.random_range(0..n), rng.random_range(0..n));
            let paths = all_simple_paths(&g, from, to);
            match shortest_path(&g, from, to) {
                Ok(p) => {
                    let best = paths.iter().map(|q| g.path_length(q)).fold(f64::INFINITY, f64::min);
                    assert!((g.path_length(&p) - best).abs() < 1e-6);
                    assert!(paths.contains(&p));
                }
                Err(_) => assert!(paths.is_empty()),
            }
        }
    }

    #[test]
    fn grid_shortcut_is_taken() {
        // 3x3 grid, 100 m spacing, with one diagonal across the centre
        let frame = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        let nodes = (0..9).map(|k| frame.to_geo((k / 3) as f64 * 100.0, (k % 3) as f64 * 100.0)).collect();
        let mut g = WaypointGraph::new(nodes);
        for k in 0..9 {
            if k % 3 < 2 {
                g.add_edge(k, k + 1).unwrap();
            }
            if k < 6 {
                g.add_edge(k, k + 3).unwrap();
            }
        }
        g.add_edge(0, 4).unwrap();
        g.add_edge(4, 8).unwrap();
        assert_eq!(shortest_path(&g, 0, 8).unwrap(), vec![0, 4, 8]);
    }

    #[test]
    fn equal_length_ties_prefer_low_ids() {
        // square 0-1-3, 0-2-3 of equal length
        let frame = LocalFrame::new(GeoPoint::at(0.0, 0.0));
        let nodes = vec![frame.to_geo(0.0, 0.0), frame.to_geo(100.0, 0.0), frame.to_geo(0.0, 100.0), frame.to_geo(100.0, 100.0)];
        let mut g = WaypointGraph::new(nodes);
        for (a, b) in [(0, 2), (2, 3), (0, 1), (1, 3)] {
            g.add_edge(a, b).unwrap();
        }
        let p = shortest_path(&g, 0, 3).unwrap();
        assert_eq!(p, shortest_path(&g.clone(), 0, 3).unwrap());
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn bundled_graph_shape() {
        let g = WaypointGraph::bundled();
        assert!((190..=220).contains(&g.len()));
        assert!(g.is_connected());
        assert_eq!(g.pairs.len(), 7);
        for &(a, b, len) in &g.edges {
            assert!((haversine(&g.nodes[a], &g.nodes[b]) - len).abs() < 1e-9);
        }
        for p in &g.pairs {
            assert!((6..=10).contains(&p.detour_candidates.len()), "{p:?}");
            assert!(haversine(&g.nodes[p.origin], &g.nodes[p.destination]) > 1000.0);
        }
    }

    #[test]
    fn bundled_routes_keep_clear_of_other_anchors() {
        let g = WaypointGraph::bundled();
        let frame = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        let anchors: Vec<usize> = g.pairs.iter().flat_map(|p| [p.origin, p.destination]).collect();
        for p in &g.pairs {
            let route = shortest_path(&g, p.origin, p.destination).unwrap();
            assert_eq!(route.iter().filter(|n| anchors.contains(n)).count(), 2);
            let line: Vec<_> = route.iter().map(|&n| frame.to_xy(&g.nodes[n])).collect();
            for &a in anchors.iter().filter(|&&a| a != p.origin && a != p.destination) {
                let (d, _) = crate::synth::project_onto_polyline(&line, frame.to_xy(&g.nodes[a]));
                assert!(d > 60.0, "route of {p:?} passes {d} m from anchor {a}");
            }
        }
    }
}
