use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::DistanceMatrix;
use crate::error::{Error, Result};

/// Directed or symmetrized k-nearest-neighbor graph weighted by Euclidean
/// distance. Edge weights are nonnegative; a zero weight only occurs between
/// duplicated rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    symmetrized: bool,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// All edges as `(from, to, weight)`, ordered by source then target list order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().map(move |&(j, w)| (i, j, w)))
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].iter().any(|&(t, _)| t == j)
    }

    /// Union rule: every edge gains its reverse. Neighbor lists end up sorted
    /// by target index.
    pub fn symmetrize(&self) -> NeighborGraph {
        let mut adjacency = self.adjacency.clone();
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &(j, w) in nbrs {
                if !adjacency[j].iter().any(|&(t, _)| t == i) {
                    adjacency[j].push((i, w));
                }
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|&(j, _)| j);
        }
        NeighborGraph {
            adjacency,
            symmetrized: true,
        }
    }

    /// Builds a symmetric graph from explicit undirected edges.
    pub fn from_undirected(n: usize, edges: &[(usize, usize, f64)]) -> Result<NeighborGraph> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i == j || i >= n || j >= n || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("bad edge ({i}, {j}, {w})")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|&(j, _)| j);
        }
        Ok(NeighborGraph {
            adjacency,
            symmetrized: true,
        })
    }
}

/// Each node keeps edges to its `k` nearest peers; distance ties go to the
/// smaller index.
pub fn knn(d: &DistanceMatrix, k: usize) -> Result<NeighborGraph> {
    let n = d.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} out of range 1..={} for {n} points",
            n.saturating_sub(1)
        )));
    }
    let adjacency = (0..n)
        .map(|i| {
            let row = d.row(i);
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            order.truncate(k);
            order.into_iter().map(|j| (j, row[j])).collect()
        })
        .collect();
    Ok(NeighborGraph {
        adjacency,
        symmetrized: false,
    })
}

#[derive(Copy, Clone, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dijkstra(g: &NeighborGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(du), u))) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, w) in g.neighbors(u) {
            let cand = du + w;
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Reverse((Dist(cand), v)));
            }
        }
    }
    dist
}

/// Shortest-path lengths between every pair of nodes (one Dijkstra per source).
pub fn all_pairs_shortest(g: &NeighborGraph) -> Result<DistanceMatrix> {
    if !g.is_symmetrized() {
        return Err(Error::InvalidInput(
            "all_pairs_shortest expects a symmetrized graph".into(),
        ));
    }
    let n = g.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(g, s)).collect();
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| v.is_infinite()) {
            return Err(Error::DisconnectedGraph { from: i, to: j });
        }
    }
    // Path sums can differ by an ulp between directions; take the smaller so
    // the result is exactly symmetric.
    Ok(DistanceMatrix::from_upper(n, |i, j| rows[i][j].min(rows[j][i])))
}

/// Returns the first unreachable `(from, to)` pair, if any.
pub fn first_disconnected_pair(g: &NeighborGraph) -> Option<(usize, usize)> {
    let n = g.len();
    if n == 0 {
        return None;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &(v, _) in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().position(|s| !s).map(|j| (0, j))
}
