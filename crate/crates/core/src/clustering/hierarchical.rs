use std::cmp::Ordering;

use super::{cluster_ring, segment_distance, Cluster, ClusterParams, Segment};
use crate::par;
use crate::scene_sim::RingScan;

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn canonical_order(a: &Segment, b: &Segment) -> Ordering {
    a.ring_index
        .cmp(&b.ring_index)
        .then(a.azimuth_start.total_cmp(&b.azimuth_start))
        .then(a.azimuth_end.total_cmp(&b.azimuth_end))
        .then(a.centroid.x.total_cmp(&b.centroid.x))
        .then(a.centroid.y.total_cmp(&b.centroid.y))
        .then(a.centroid.z.total_cmp(&b.centroid.z))
        .then(a.points.len().cmp(&b.points.len()))
}

/// Single-linkage grouping of segments whose pairwise distance is below
/// `epsilon_custom`. The result does not depend on input order.
pub fn cluster_segments(segments: &[Segment], params: &ClusterParams) -> Vec<Cluster> {
    let mut sorted: Vec<&Segment> = segments.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));
    let n = sorted.len();

    // sorted by ring, so candidates for i are a contiguous run after it
    let edges = par::flat_map_range(n, |i| {
        let a = sorted[i];
        sorted[i + 1..]
            .iter()
            .enumerate()
            .take_while(|(_, b)| b.ring_index - a.ring_index <= params.max_ring_gap)
            .filter(|(_, b)| segment_distance(a, b, params) < params.epsilon_custom)
            .map(|(k, _)| (i, i + 1 + k))
            .collect::<Vec<_>>()
    });

    let mut uf = UnionFind::new(n);
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
        .into_iter()
        .map(|g| Cluster::from_segments(g.into_iter().map(|i| sorted[i].clone()).collect()))
        .collect()
}

/// Full two-stage pipeline over one scan.
pub fn hierarchical_clustering(scan: &RingScan, params: &ClusterParams) -> Vec<Cluster> {
    let per_ring = par::map(&scan.rings, |ring| cluster_ring(ring, params));
    let segments: Vec<Segment> = per_ring.into_iter().flatten().collect();
    cluster_segments(&segments, params)
}
