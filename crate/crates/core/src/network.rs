//! Regular bipartite graphs stored as perfect matchings, and the rewiring
//! dynamic (a uniform permutation of node states).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One perfect matching: `N / 2` disjoint node pairs covering every node.
pub type Matching = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularBipartiteGraph {
    n: usize,
    d: usize,
    matchings: Vec<Matching>,
}

impl RegularBipartiteGraph {
    /// Circulant construction on parts `A`, `B` of size `N / 2`: matching `j`
    /// pairs `A[i]` with `B[(i + j) mod N/2]`; all node ids are then relabeled
    /// by a permutation drawn from `seed`.
    pub fn generate(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "number of nodes must be even and positive, got {n}"
            )));
        }
        let half = n / 2;
        if d == 0 || d > half {
            return Err(Error::InvalidArgument(format!(
                "degree must be in 1..={half} for N = {n}, got {d}"
            )));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("N = {n} too large")));
        }
        let mut relabel: Vec<u32> = (0..n as u32).collect();
        let mut rng = SimRng::new(seed);
        shuffle_slice(&mut relabel, &mut rng);
        let matchings = (0..d)
            .map(|j| {
                (0..half)
                    .map(|i| (relabel[i], relabel[half + (i + j) % half]))
                    .collect()
            })
            .collect();
        Ok(Self { n, d, matchings })
    }

    /// Wraps an arbitrary matching list without checking it; use
    /// [`RegularBipartiteGraph::validate`] or [`decompose_matchings`].
    pub fn from_matchings_unchecked(n: usize, matchings: Vec<Matching>) -> Self {
        Self {
            n,
            d: matchings.len(),
            matchings,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn matchings(&self) -> &[Matching] {
        &self.matchings
    }

    /// Number of directed edges, `N * d`; each undirected edge carries one
    /// clock in each direction.
    pub fn num_directed_edges(&self) -> usize {
        self.n * self.d
    }

    /// Directed edge `e` in canonical order: matching `j`, pair `p`, then
    /// `(a, b)` before `(b, a)`.
    #[inline]
    pub fn directed_edge(&self, e: usize) -> (usize, usize) {
        let (j, r) = (e / self.n, e % self.n);
        let (a, b) = self.matchings[j][r / 2];
        if r % 2 == 0 {
            (a as usize, b as usize)
        } else {
            (b as usize, a as usize)
        }
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matchings.iter().flat_map(|m| {
            m.iter().flat_map(|&(a, b)| {
                [(a as usize, b as usize), (b as usize, a as usize)]
            })
        })
    }

    /// Undirected edges with the smaller endpoint first.
    pub fn edge_set(&self) -> BTreeSet<(u32, u32)> {
        self.matchings
            .iter()
            .flatten()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in self.matchings.iter().flatten() {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    /// Checks every structural invariant: perfect matchings, edge-disjointness,
    /// `N d / 2` edges, degree `d`, and a proper two-coloring.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvariantViolation(format!("N = {n} is not even")));
        }
        if self.d != self.matchings.len() {
            return Err(Error::InvariantViolation(format!(
                "degree {} but {} matchings",
                self.d,
                self.matchings.len()
            )));
        }
        for (j, m) in self.matchings.iter().enumerate() {
            if m.len() != n / 2 {
                return Err(Error::InvariantViolation(format!(
                    "matching {j} has {} pairs, expected {}",
                    m.len(),
                    n / 2
                )));
            }
            let mut seen = vec![false; n];
            for &(a, b) in m {
                for v in [a, b] {
                    let v = v as usize;
                    if v >= n {
                        return Err(Error::InvariantViolation(format!(
                            "matching {j} references node {v} >= N"
                        )));
                    }
                    if seen[v] {
                        return Err(Error::InvariantViolation(format!(
                            "node {} appears twice in matching {j}",
                            v + 1
                        )));
                    }
                    seen[v] = true;
                }
            }
        }
        let edges = self.edge_set();
        if edges.len() != n * self.d / 2 {
            return Err(Error::InvariantViolation(format!(
                "matchings are not edge-disjoint: {} distinct edges, expected {}",
                edges.len(),
                n * self.d / 2
            )));
        }
        if let Some(v) = self.degrees().iter().position(|&g| g != self.d) {
            return Err(Error::InvariantViolation(format!(
                "node {} does not have degree {}",
                v + 1,
                self.d
            )));
        }
        self.check_bipartite()
    }

    fn check_bipartite(&self) -> Result<()> {
        let n = self.n;
        let mut adj = vec![Vec::with_capacity(self.d); n];
        for &(a, b) in self.matchings.iter().flatten() {
            adj[a as usize].push(b as usize);
            adj[b as usize].push(a as usize);
        }
        let mut color = vec![u8::MAX; n];
        let mut stack = Vec::new();
        for root in 0..n {
            if color[root] != u8::MAX {
                continue;
            }
            color[root] = 0;
            stack.push(root);
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        stack.push(v);
                    } else if color[v] == color[u] {
                        return Err(Error::InvariantViolation(format!(
                            "edge ({}, {}) closes an odd cycle",
                            u + 1,
                            v + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Debug dump: one `u v` pair per line, 1-based, matchings in order.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b) in self.matchings.iter().flatten() {
            let _ = writeln!(out, "{} {}", a + 1, b + 1);
        }
        out
    }
}

/// Returns the perfect-matching decomposition after verifying it.
pub fn decompose_matchings(graph: &RegularBipartiteGraph) -> Result<Vec<Matching>> {
    graph.validate()?;
    Ok(graph.matchings.clone())
}

/// Fisher–Yates: for `i = N-1` down to `1`, swap `i` with a uniform index in `0..=i`.
pub fn shuffle_slice<T>(values: &mut [T], rng: &mut SimRng) {
    for i in (1..values.len()).rev() {
        let j = rng.index(i + 1);
        values.swap(i, j);
    }
}

/// Rewiring: permutes node states uniformly at random. Counts are unchanged.
pub fn shuffle_states(states: &mut [u8], rng: &mut SimRng) {
    shuffle_slice(states, rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_cycle() {
        for seed in 0..5 {
            let g = RegularBipartiteGraph::generate(4, 2, seed).unwrap();
            assert_eq!(g.edge_set().len(), 4);
            assert_eq!(g.degrees(), vec![2; 4]);
            let ms = decompose_matchings(&g).unwrap();
            assert_eq!(ms.len(), 2);
            assert!(ms.iter().all(|m| m.len() == 2));
        }
    }

    #[test]
    fn single_matching() {
        let g = RegularBipartiteGraph::generate(6, 1, 3).unwrap();
        assert_eq!(g.edge_set().len(), 3);
        assert_eq!(g.degrees(), vec![1; 6]);
    }

    #[test]
    fn complete_bipartite_k33() {
        let g = RegularBipartiteGraph::generate(6, 3, 11).unwrap();
        let ms = decompose_matchings(&g).unwrap();
        assert_eq!(ms.len(), 3);
        assert!(ms.iter().all(|m| m.len() == 3));
        assert_eq!(g.edge_set().len(), 9);
    }

    #[test]
    fn hundred_nodes_degree_two() {
        let g = RegularBipartiteGraph::generate(100, 2, 7).unwrap();
        assert_eq!(g.edge_set().len(), 100);
        assert!(g.degrees().iter().all(|&d| d == 2));
        assert_eq!(
            g,
            RegularBipartiteGraph::generate(100, 2, 7).unwrap(),
            "generation is deterministic in the seed"
        );
    }

    #[test]
    fn bad_arguments() {
        assert!(matches!(
            RegularBipartiteGraph::generate(5, 1, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(RegularBipartiteGraph::generate(6, 4, 0).is_err());
        assert!(RegularBipartiteGraph::generate(6, 0, 0).is_err());
        assert!(RegularBipartiteGraph::generate(0, 1, 0).is_err());
    }

    #[test]
    fn corrupted_graph_is_rejected() {
        // node 1 twice in one matching
        let g = RegularBipartiteGraph::from_matchings_unchecked(4, vec![vec![(0, 1), (0, 2)]]);
        assert!(matches!(decompose_matchings(&g), Err(Error::InvariantViolation(_))));
        // repeated edge across matchings
        let g = RegularBipartiteGraph::from_matchings_unchecked(
            4,
            vec![vec![(0, 1), (2, 3)], vec![(1, 0), (3, 2)]],
        );
        assert!(decompose_matchings(&g).is_err());
        // K4 decomposes into three perfect matchings but contains triangles
        let g = RegularBipartiteGraph::from_matchings_unchecked(
            4,
            vec![vec![(0, 1), (2, 3)], vec![(0, 2), (1, 3)], vec![(0, 3), (1, 2)]],
        );
        let err = decompose_matchings(&g).unwrap_err();
        assert!(err.to_string().contains("odd cycle"), "{err}");
    }

    #[test]
    fn matchings_reassemble_to_edge_set_exhaustively() {
        // Oracle: the edge set is rebuilt from the directed-edge enumerator and
        // compared against the union of the returned matchings.
        for n in (2..=12).step_by(2) {
            for d in 1..=n / 2 {
                for seed in 0..4 {
                    let g = RegularBipartiteGraph::generate(n, d, seed).unwrap();
                    let ms = decompose_matchings(&g).unwrap();
                    let union: BTreeSet<(u32, u32)> = ms
                        .iter()
                        .flatten()
                        .map(|&(a, b)| (a.min(b), a.max(b)))
                        .collect();
                    let from_directed: BTreeSet<(u32, u32)> = g
                        .directed_edges()
                        .map(|(a, b)| (a.min(b) as u32, a.max(b) as u32))
                        .collect();
                    assert_eq!(union, from_directed);
                    assert_eq!(union.len(), n * d / 2);
                    assert_eq!(g.num_directed_edges(), g.directed_edges().count());
                    for e in 0..g.num_directed_edges() {
                        assert_eq!(g.directed_edge(e), g.directed_edges().nth(e).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn edge_list_is_one_based() {
        let g = RegularBipartiteGraph::generate(4, 2, 0).unwrap();
        let dump = g.edge_list();
        assert_eq!(dump.lines().count(), 4);
        for line in dump.lines() {
            let v: Vec<usize> = line.split(' ').map(|s| s.parse().unwrap()).collect();
            assert!(v.iter().all(|&x| (1..=4).contains(&x)));
        }
    }

    #[test]
    fn shuffle_of_constant_vector_is_identity() {
        let mut rng = SimRng::new(3);
        let mut s = vec![2u8; 17];
        shuffle_states(&mut s, &mut rng);
        assert_eq!(s, vec![2u8; 17]);
    }

    #[test]
    fn shuffle_position_frequency() {
        let mut rng = SimRng::new(99);
        let trials = 24_000;
        let mut hits = [0usize; 4];
        for _ in 0..trials {
            let mut s = [0u8, 1, 1, 1];
            shuffle_states(&mut s, &mut rng);
            hits[s.iter().position(|&x| x == 0).unwrap()] += 1;
        }
        for h in hits {
            let f = h as f64 / trials as f64;
            assert!((f - 0.25).abs() <= 0.01, "frequency {f}");
        }
    }

    proptest! {
        #[test]
        fn shuffle_preserves_counts(states in proptest::collection::vec(0u8..4, 0..64), seed: u64) {
            let mut rng = SimRng::new(seed);
            let mut s = states.clone();
            shuffle_states(&mut s, &mut rng);
            let mut a = states;
            a.sort_unstable();
            s.sort_unstable();
            prop_assert_eq!(a, s);
        }

        #[test]
        fn generated_graphs_are_valid(half in 1usize..40, dfrac in 0.0f64..1.0, seed: u64) {
            let n = 2 * half;
            let d = 1 + ((half - 1) as f64 * dfrac) as usize;
            let g = RegularBipartiteGraph::generate(n, d, seed).unwrap();
            prop_assert!(g.validate().is_ok());
        }
    }
}
