//! Seeded ensembles of independent runs over an `N` grid.
//!
//! Runs are keyed by `(N, seed_index)`; each gets its own stream seeded with
//! `hash64(base_seed, N, seed_index)` and its initial arrangement from a
//! separate substream, so results do not depend on worker count or order.

use rayon::prelude::*;

use crate::microsim::{counts_from_fractions, MicroState, ShuffleOn};
use crate::model::ModelSpec;
use crate::rng::{hash64, substream, SimRng};

const INITIAL_ARRANGEMENT_TAG: u64 = 0x1A17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub n: usize,
    pub seed_index: u64,
    pub run_seed: u64,
}

impl RunKey {
    pub fn new(base_seed: u64, n: usize, seed_index: u64) -> Self {
        Self {
            n,
            seed_index,
            run_seed: hash64(base_seed, n as u64, seed_index),
        }
    }

    /// Uniformly arranged initial microstate with counts rounded from `fractions`.
    pub fn initial_state(&self, fractions: &[f64]) -> MicroState {
        let counts = counts_from_fractions(fractions, self.n);
        let mut rng = SimRng::new(substream(self.run_seed, INITIAL_ARRANGEMENT_TAG));
        MicroState::arranged(&counts, &mut rng)
    }
}

/// Everything a Monte Carlo driver needs besides the `N` grid.
#[derive(Debug, Clone)]
pub struct EnsembleConfig<'a> {
    pub spec: &'a ModelSpec,
    pub degree: usize,
    pub graph_seed: u64,
    /// Initial fractions per state.
    pub initial: &'a [f64],
    pub horizon: f64,
    pub base_seed: u64,
    pub seed_indices: &'a [u64],
    pub shuffle_on: ShuffleOn,
}

/// Keys in `(N, seed_index)` order.
pub fn run_keys(base_seed: u64, ns: &[usize], seed_indices: &[u64]) -> Vec<RunKey> {
    let mut keys: Vec<RunKey> = ns
        .iter()
        .flat_map(|&n| seed_indices.iter().map(move |&s| RunKey::new(base_seed, n, s)))
        .collect();
    keys.sort();
    keys
}

/// Maps `f` over runs in parallel; output order follows `keys`.
pub fn par_map<T, F>(keys: &[RunKey], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&RunKey) -> T + Sync + Send,
{
    keys.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adding_seeds_keeps_existing_runs() {
        let a = run_keys(9, &[100, 400], &[0, 1]);
        let b = run_keys(9, &[100, 400], &[0, 1, 2]);
        for k in &a {
            assert!(b.contains(k));
        }
        assert_eq!(a[0].initial_state(&[0.1, 0.9]).counts(), vec![10, 90]);
    }

    #[test]
    fn par_map_preserves_order() {
        let keys = run_keys(1, &[10, 20, 30], &(0..50).collect::<Vec<_>>());
        let out = par_map(&keys, |k| (k.n, k.seed_index));
        let expected: Vec<_> = keys.iter().map(|k| (k.n, k.seed_index)).collect();
        assert_eq!(out, expected);
    }
}
