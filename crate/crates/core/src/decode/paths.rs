use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::dem::DecodingGraph;

/// Fixed-point resolution of edge weights: one unit is 2⁻²⁰.
pub const WEIGHT_SCALE: f64 = (1u64 << 20) as f64;

/// Distance of unreachable nodes.
pub const INF: i64 = i64::MAX / 8;

pub fn quantize(w: f64) -> i64 {
    (w * WEIGHT_SCALE).round().max(0.0) as i64
}

/// Graph in integer weights with sorted adjacency, ready for repeated searches.
#[derive(Debug, Clone)]
pub struct PathGraph {
    /// Per node: (neighbour, quantized weight, logical flag).
    adj: Vec<Vec<(usize, i64, bool)>>,
}

impl PathGraph {
    pub fn new(graph: &DecodingGraph) -> Self {
        let mut adj = vec![Vec::new(); graph.n_nodes()];
        for e in &graph.edges {
            let w = quantize(e.weight);
            adj[e.a].push((e.b, w, e.logical));
            adj[e.b].push((e.a, w, e.logical));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, w, _)| (v, w));
        }
        PathGraph { adj }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Single-source shortest paths. Nodes are settled in (distance, index)
    /// order; among equal-length paths the one through the lowest-index
    /// predecessor is kept. Returns distances and path logical parities.
    pub fn search(&self, source: usize) -> (Vec<i64>, Vec<bool>) {
        let n = self.adj.len();
        let mut dist = vec![INF; n];
        let mut parity = vec![false; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0;
        heap.push(Reverse((0i64, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            for &(v, w, flag) in &self.adj[u] {
                if done[v] {
                    continue;
                }
                let nd = d + w;
                if nd < dist[v] || (nd == dist[v] && u < pred[v]) {
                    let improved = nd < dist[v];
                    dist[v] = nd;
                    pred[v] = u;
                    parity[v] = parity[u] ^ flag;
                    if improved {
                        heap.push(Reverse((nd, v)));
                    }
                }
            }
        }
        (dist, parity)
    }
}

/// All-pairs table over every node of a small graph.
#[derive(Debug, Clone)]
pub struct AllPairs {
    n: usize,
    dist: Vec<i64>,
    parity: Vec<bool>,
}

impl AllPairs {
    pub fn new(paths: &PathGraph) -> Self {
        let n = paths.n_nodes();
        let mut dist = Vec::with_capacity(n * n);
        let mut parity = Vec::with_capacity(n * n);
        for s in 0..n {
            let (d, p) = paths.search(s);
            dist.extend(d);
            parity.extend(p);
        }
        AllPairs { n, dist, parity }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> (i64, bool) {
        let k = a * self.n + b;
        (self.dist[k], self.parity[k])
    }
}
