//! Approximate-geodesic assignment of surface points to joints.
//!
//! Points are joined into a k-nearest-neighbour graph, bridged into a single
//! component, and labelled by a multi-source Dijkstra sweep started from one
//! proxy surface point per joint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{HipError, Result};
use crate::kdtree::KdTree;
use crate::skeleton::Pose;

pub const DEFAULT_NEIGHBORS: usize = 8;

/// Keeps edge weights strictly positive when the cloud has duplicate points.
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct NeighborGraph {
    adj: Vec<Vec<(u32, f64)>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.len() as f64
    }

    pub fn is_connected(&self) -> bool {
        if self.adj.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adj[i] {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.len()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] || (self.size[a] == self.size[b] && b < a) {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// kNN graph plus bridging edges. While more than one component remains, the
/// smallest one is joined to the rest by its shortest outgoing edge, which is
/// an edge of the Euclidean minimum spanning tree of the cloud.
pub fn build_graph(points: &[[f64; 3]], k: usize) -> Result<NeighborGraph> {
    let m = points.len();
    if m <= k {
        return Err(HipError::Input(format!(
            "need more points than neighbours (points {m}, k {k})"
        )));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(HipError::DegenerateCloud("all points coincide".into()));
    }
    let tree = KdTree::new(points);
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(m * k);
    for (i, p) in points.iter().enumerate() {
        for (j, _) in tree.knn(p, k + 1) {
            if j != i {
                edges.push((i.min(j) as u32, i.max(j) as u32));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut uf = UnionFind::new(m);
    for &(a, b) in &edges {
        uf.union(a as usize, b as usize);
    }
    loop {
        let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..m {
            members.entry(uf.find(i)).or_default().push(i);
        }
        if members.len() <= 1 {
            break;
        }
        let small = members
            .values()
            .min_by(|a, b| a.len().cmp(&b.len()).then(a[0].cmp(&b[0])))
            .unwrap()
            .clone();
        let root = uf.find(small[0]);
        let mut best = (f64::INFINITY, 0, 0);
        for &i in &small {
            for j in 0..m {
                if uf.find(j) == root {
                    continue;
                }
                let d = dist(&points[i], &points[j]);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        edges.push((i.min(j) as u32, i.max(j) as u32));
        uf.union(i, j);
    }

    let mut adj = vec![Vec::new(); m];
    for &(a, b) in &edges {
        let w = dist(&points[a as usize], &points[b as usize]).max(MIN_WEIGHT);
        adj[a as usize].push((b, w));
        adj[b as usize].push((a, w));
    }
    for list in &mut adj {
        list.sort_unstable_by_key(|e| e.0);
    }
    Ok(NeighborGraph { adj })
}

/// For each joint, the cloud point nearest its posed position; ties go to
/// the lower point index.
pub fn proxy_points(points: &[[f64; 3]], pose: &Pose) -> Vec<usize> {
    pose.transforms
        .iter()
        .map(|t| {
            let q = [t.translation.x, t.translation.y, t.translation.z];
            let mut best = (f64::INFINITY, 0);
            for (i, p) in points.iter().enumerate() {
                let d = dist(&q, p);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    joint: u16,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // reversed for a min-heap on (dist, joint, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.joint.cmp(&self.joint))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra. Returns the settled distance and source label of
/// every node; equal distances go to the lower label.
pub fn multi_source_dijkstra(graph: &NeighborGraph, sources: &[usize]) -> (Vec<f64>, Vec<u16>) {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut label = vec![u16::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (j, &s) in sources.iter().enumerate() {
        heap.push(Entry {
            dist: 0.0,
            joint: j as u16,
            node: s as u32,
        });
    }
    while let Some(Entry { dist: d, joint, node }) = heap.pop() {
        let i = node as usize;
        if done[i] {
            continue;
        }
        done[i] = true;
        dist[i] = d;
        label[i] = joint;
        for &(nb, w) in graph.neighbors(i) {
            let nb_i = nb as usize;
            if !done[nb_i] && d + w <= dist[nb_i] {
                dist[nb_i] = d + w;
                heap.push(Entry {
                    dist: d + w,
                    joint,
                    node: nb,
                });
            }
        }
    }
    (dist, label)
}

/// Graph distance from `source` to every node.
pub fn geodesic_distances(graph: &NeighborGraph, source: usize) -> Vec<f64> {
    multi_source_dijkstra(graph, &[source]).0
}

/// Label every point with the joint whose proxy is geodesically closest.
pub fn assign(points: &[[f64; 3]], pose: &Pose, k: usize) -> Result<Vec<u16>> {
    if pose.len() == 1 {
        return Ok(vec![0; points.len()]);
    }
    if pose.len() > u16::MAX as usize {
        return Err(HipError::Input("too many joints for u16 labels".into()));
    }
    let graph = build_graph(points, k)?;
    let proxies = proxy_points(points, pose);
    Ok(multi_source_dijkstra(&graph, &proxies).1)
}
