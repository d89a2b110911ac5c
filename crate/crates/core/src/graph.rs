//! Finite graphs carrying the Hamiltonians: open-boundary boxes in `Z^d` and
//! Bethe trees truncated at a fixed depth.
//!
//! Vertex order is part of the contract because disorder realizations are
//! drawn vertex by vertex:
//!
//! * boxes are enumerated row-major, the last coordinate varying fastest, with
//!   coordinates running over `0..L` (the origin sits at `(L-1)/2` in every
//!   direction);
//! * trees are enumerated breadth-first from the root, children of a vertex
//!   stored contiguously in the order they were attached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of vertices a graph may have.
pub const DEFAULT_VERTEX_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    ZdBox { dim: usize, side: usize },
    Bethe { connectivity: usize, depth: usize },
}

impl GraphKind {
    /// Coordination number of the infinite lattice (`2d` or `K+1`).
    pub fn coordination(&self) -> usize {
        match *self {
            GraphKind::ZdBox { dim, .. } => 2 * dim,
            GraphKind::Bethe { connectivity, .. } => connectivity + 1,
        }
    }

    /// Half-width of the spectrum of the infinite-lattice adjacency operator:
    /// `2d` on `Z^d`, `2 sqrt(K)` on the Bethe lattice.
    pub fn infinite_laplacian_radius(&self) -> f64 {
        match *self {
            GraphKind::ZdBox { dim, .. } => 2.0 * dim as f64,
            GraphKind::Bethe { connectivity, .. } => 2.0 * (connectivity as f64).sqrt(),
        }
    }

    /// Radius used for spectral containment on the finite graph. Equal to the
    /// infinite-lattice value for boxes; the degree bound `K+1` for trees,
    /// whose truncations can exceed `2 sqrt(K)`.
    pub fn finite_laplacian_radius(&self) -> f64 {
        match *self {
            GraphKind::ZdBox { dim, .. } => 2.0 * dim as f64,
            GraphKind::Bethe { connectivity, .. } => (connectivity + 1) as f64,
        }
    }

    /// Lattice dimension `d` entering `|J|` and `1 + 4d + ...`; for trees the
    /// coordination number plays the role of `2d`.
    pub fn effective_dim(&self) -> f64 {
        self.coordination() as f64 / 2.0
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Grid { dim: usize, side: usize },
    Tree { parent: Vec<usize>, depth: Vec<usize> },
}

/// An immutable finite graph with a distinguished origin.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    kind: GraphKind,
    origin: usize,
    adjacency: Vec<Vec<usize>>,
    layout: Layout,
}

impl GraphSpec {
    pub fn build_box(dim: usize, side: usize) -> Result<Self> {
        Self::build_box_within(dim, side, DEFAULT_VERTEX_BUDGET)
    }

    pub fn build_box_within(dim: usize, side: usize, budget: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("box dimension must be >= 1".into()));
        }
        if side == 0 || side % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "box side must be odd and positive, got {side}"
            )));
        }
        let count = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .filter(|&n| n <= budget)
            .ok_or(Error::OverBudget {
                requested: side.checked_pow(dim as u32).unwrap_or(usize::MAX),
                budget,
            })?;

        let mut strides = vec![1usize; dim];
        for axis in (0..dim.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * side;
        }

        let mut adjacency = Vec::with_capacity(count);
        for v in 0..count {
            let mut nbrs = Vec::with_capacity(2 * dim);
            for (axis, &stride) in strides.iter().enumerate() {
                let c = (v / stride) % side;
                if c > 0 {
                    nbrs.push(v - stride);
                }
                if c + 1 < side {
                    nbrs.push(v + stride);
                }
                let _ = axis;
            }
            nbrs.sort_unstable();
            adjacency.push(nbrs);
        }

        let half = (side - 1) / 2;
        let origin = strides.iter().map(|s| s * half).sum();

        Ok(Self {
            kind: GraphKind::ZdBox { dim, side },
            origin,
            adjacency,
            layout: Layout::Grid { dim, side },
        })
    }

    pub fn build_bethe(connectivity: usize, depth: usize) -> Result<Self> {
        Self::build_bethe_within(connectivity, depth, DEFAULT_VERTEX_BUDGET)
    }

    pub fn build_bethe_within(connectivity: usize, depth: usize, budget: usize) -> Result<Self> {
        if connectivity < 2 {
            return Err(Error::InvalidParameter(format!(
                "Bethe connectivity must be >= 2, got {connectivity}"
            )));
        }
        if depth == 0 {
            return Err(Error::InvalidParameter("Bethe depth must be >= 1".into()));
        }
        let count = bethe_vertex_count(connectivity, depth)
            .filter(|&n| n <= budget)
            .ok_or(Error::OverBudget {
                requested: bethe_vertex_count(connectivity, depth).unwrap_or(usize::MAX),
                budget,
            })?;

        let mut adjacency: Vec<Vec<usize>> = Vec::with_capacity(count);
        let mut parent = Vec::with_capacity(count);
        let mut depth_of = Vec::with_capacity(count);
        adjacency.push(Vec::new());
        parent.push(usize::MAX);
        depth_of.push(0);

        let mut frontier = vec![0usize];
        for level in 1..=depth {
            let mut next = Vec::new();
            for &v in &frontier {
                let children = if v == 0 { connectivity + 1 } else { connectivity };
                for _ in 0..children {
                    let c = adjacency.len();
                    adjacency.push(vec![v]);
                    adjacency[v].push(c);
                    parent.push(v);
                    depth_of.push(level);
                    next.push(c);
                }
            }
            frontier = next;
        }
        debug_assert_eq!(adjacency.len(), count);
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }

        Ok(Self {
            kind: GraphKind::Bethe { connectivity, depth },
            origin: 0,
            adjacency,
            layout: Layout::Tree { parent, depth: depth_of },
        })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn check(&self, v: usize) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                index: v,
                count: self.vertex_count(),
            })
        }
    }

    /// Box coordinates of `v` in `0..L` per axis; `None` for trees.
    pub fn coordinates(&self, v: usize) -> Option<Vec<usize>> {
        match self.layout {
            Layout::Grid { dim, side } => {
                let mut out = vec![0; dim];
                let mut rest = v;
                for axis in (0..dim).rev() {
                    out[axis] = rest % side;
                    rest /= side;
                }
                Some(out)
            }
            Layout::Tree { .. } => None,
        }
    }

    /// Shortest-path distance: `l1` distance on boxes, tree path length on
    /// Bethe trees.
    pub fn distance(&self, u: usize, v: usize) -> Result<usize> {
        self.check(u)?;
        self.check(v)?;
        Ok(match &self.layout {
            Layout::Grid { dim, side } => {
                let (mut a, mut b, mut sum) = (u, v, 0usize);
                for _ in 0..*dim {
                    sum += (a % side).abs_diff(b % side);
                    a /= side;
                    b /= side;
                }
                sum
            }
            Layout::Tree { parent, depth } => {
                let (mut a, mut b, mut sum) = (u, v, 0usize);
                while depth[a] > depth[b] {
                    a = parent[a];
                    sum += 1;
                }
                while depth[b] > depth[a] {
                    b = parent[b];
                    sum += 1;
                }
                while a != b {
                    a = parent[a];
                    b = parent[b];
                    sum += 2;
                }
                sum
            }
        })
    }

    /// Distances from `source` to every vertex (breadth-first search).
    pub fn distances_from(&self, source: usize) -> Result<Vec<usize>> {
        self.check(source)?;
        let mut dist = vec![usize::MAX; self.vertex_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Largest distance from the origin to any vertex.
    pub fn origin_radius(&self) -> usize {
        match self.kind {
            GraphKind::ZdBox { dim, side } => dim * (side - 1) / 2,
            GraphKind::Bethe { depth, .. } => depth,
        }
    }

    /// True when every edge joins consecutive indices, i.e. the adjacency
    /// matrix is tridiagonal in vertex order.
    pub fn is_path_ordered(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .all(|(v, nbrs)| nbrs.iter().all(|&w| w + 1 == v || v + 1 == w))
    }

    /// Elimination order for sparse factorizations. Trees are eliminated
    /// leaves-first (no fill-in); boxes in natural order (fill confined to
    /// the band of width `L^(d-1)`).
    pub fn elimination_order(&self) -> Vec<usize> {
        match &self.layout {
            Layout::Grid { .. } => (0..self.vertex_count()).collect(),
            Layout::Tree { .. } => (0..self.vertex_count()).rev().collect(),
        }
    }
}

fn bethe_vertex_count(connectivity: usize, depth: usize) -> Option<usize> {
    // 1 + (K+1)(K^R - 1)/(K - 1)
    let kr = connectivity.checked_pow(depth as u32)?;
    let shell = (kr - 1) / (connectivity - 1);
    shell.checked_mul(connectivity + 1)?.checked_add(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_symmetric_simple(g: &GraphSpec) {
        for (u, nbrs) in g.adjacency().iter().enumerate() {
            for &v in nbrs {
                assert_ne!(u, v, "self-loop at {u}");
                assert!(g.neighbors(v).contains(&u), "asymmetric edge {u}-{v}");
            }
        }
    }

    #[test]
    fn path_graph() {
        let g = GraphSpec::build_box(1, 5).unwrap();
        assert_eq!(g.vertex_count(), 5);
        assert_eq!(g.origin(), 2);
        assert_eq!(g.neighbors(2), &[1, 3]);
        assert!(g.is_path_ordered());
    }

    #[test]
    fn square_grid_degrees() {
        let g = GraphSpec::build_box(2, 3).unwrap();
        assert_eq!(g.vertex_count(), 9);
        assert_eq!(g.neighbors(g.origin()).len(), 4);
        for corner in [0, 2, 6, 8] {
            assert_eq!(g.neighbors(corner).len(), 2);
        }
        assert!(!g.is_path_ordered());
    }

    #[test]
    fn cube_interior_degree() {
        let g = GraphSpec::build_box(3, 5).unwrap();
        assert_eq!(g.vertex_count(), 125);
        for v in 0..g.vertex_count() {
            let c = g.coordinates(v).unwrap();
            let interior = c.iter().all(|&x| x > 0 && x < 4);
            if interior {
                assert_eq!(g.neighbors(v).len(), 6);
            } else {
                assert!(g.neighbors(v).len() < 6);
            }
        }
        assert_symmetric_simple(&g);
    }

    #[test]
    fn box_rejects_even_side_and_budget() {
        assert!(matches!(
            GraphSpec::build_box(2, 4),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            GraphSpec::build_box_within(3, 101, 1000),
            Err(Error::OverBudget { .. })
        ));
        assert!(GraphSpec::build_box(0, 3).is_err());
    }

    #[test]
    fn bethe_counts() {
        let g = GraphSpec::build_bethe(2, 2).unwrap();
        assert_eq!(g.vertex_count(), 10);
        let g = GraphSpec::build_bethe(2, 1).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.neighbors(0).len(), 3);
        let g = GraphSpec::build_bethe(3, 3).unwrap();
        assert_eq!(g.vertex_count(), 53);
        assert!(GraphSpec::build_bethe(1, 3).is_err());
        assert!(matches!(
            GraphSpec::build_bethe_within(3, 12, 10_000),
            Err(Error::OverBudget { .. })
        ));
    }

    #[test]
    fn bethe_structure() {
        for (k, r) in [(2, 1), (2, 4), (3, 3), (4, 2)] {
            let g = GraphSpec::build_bethe(k, r).unwrap();
            assert_symmetric_simple(&g);
            assert_eq!(g.edge_count(), g.vertex_count() - 1);
            let dist = g.distances_from(0).unwrap();
            for v in 0..g.vertex_count() {
                let deg = g.neighbors(v).len();
                if v == 0 {
                    assert_eq!(deg, k + 1);
                } else if dist[v] == r {
                    assert_eq!(deg, 1);
                } else {
                    assert_eq!(deg, k + 1);
                }
            }
        }
    }

    #[test]
    fn distance_examples() {
        let g = GraphSpec::build_box(2, 5).unwrap();
        // (0,0) -> (1,2) relative to the center (2,2)
        let a = 2 * 5 + 2;
        let b = 3 * 5 + 4;
        assert_eq!(g.distance(a, b).unwrap(), 3);
        assert!(g.distance(0, 25).is_err());

        let t = GraphSpec::build_bethe(2, 2).unwrap();
        let dist = t.distances_from(0).unwrap();
        for v in 0..t.vertex_count() {
            if t.neighbors(v).len() == 1 {
                assert_eq!(t.distance(0, v).unwrap(), 2);
            }
            assert_eq!(t.distance(v, v).unwrap(), 0);
            assert_eq!(t.distance(0, v).unwrap(), dist[v]);
        }
    }

    #[test]
    fn distance_matches_bfs_and_metric_axioms() {
        let graphs = [
            GraphSpec::build_box(1, 31).unwrap(),
            GraphSpec::build_box(2, 9).unwrap(),
            GraphSpec::build_box(3, 5).unwrap(),
            GraphSpec::build_bethe(2, 5).unwrap(),
            GraphSpec::build_bethe(3, 3).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in &graphs {
            let n = g.vertex_count();
            for _ in 0..20 {
                let s = rng.gen_range(0..n);
                let bfs = g.distances_from(s).unwrap();
                for (v, &d) in bfs.iter().enumerate() {
                    assert_eq!(g.distance(s, v).unwrap(), d);
                }
            }
            for _ in 0..1000 {
                let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
                let ab = g.distance(a, b).unwrap();
                assert_eq!(ab, g.distance(b, a).unwrap());
                assert_eq!(ab == 0, a == b);
                assert!(g.distance(a, c).unwrap() <= ab + g.distance(b, c).unwrap());
            }
        }
    }

    #[test]
    fn origin_radius_matches_bfs() {
        for g in [
            GraphSpec::build_box(2, 7).unwrap(),
            GraphSpec::build_bethe(2, 4).unwrap(),
        ] {
            let max = *g.distances_from(g.origin()).unwrap().iter().max().unwrap();
            assert_eq!(max, g.origin_radius());
        }
    }
}
