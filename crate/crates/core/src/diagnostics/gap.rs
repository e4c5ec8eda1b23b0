//! The gap process `R_{ml} = X_mᵀ A X_l / N - d Ȳ_m Ȳ_l`.

use crate::error::{Error, Result};
use crate::microsim::{counts_of, fill_type_counts, Snapshots};
use crate::network::RegularBipartiteGraph;

/// `out[m * K + l] = X_mᵀ A X_l`, summed matching by matching.
pub fn pair_counts(states: &[u8], graph: &RegularBipartiteGraph, k: usize) -> Vec<u64> {
    let mut out = vec![0u64; k * k];
    let mut buf = vec![0u64; k * k];
    for matching in graph.matchings() {
        fill_type_counts(matching, states, k, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    for m in 0..k {
        for l in 0..m {
            assert_eq!(
                out[m * k + l],
                out[l * k + m],
                "quadratic form is not symmetric for an undirected graph"
            );
        }
    }
    out
}

/// `R_{ml}` for every ordered pair at one microstate.
pub fn gap_values(states: &[u8], graph: &RegularBipartiteGraph, k: usize, d: f64) -> Vec<f64> {
    let n = states.len() as f64;
    let pc = pair_counts(states, graph, k);
    let y: Vec<f64> = counts_of(k, states).iter().map(|&c| c as f64 / n).collect();
    let mut r = vec![0.0; k * k];
    for m in 0..k {
        for l in 0..k {
            let v = pc[m * k + l] as f64 / n - d * (y[m] * y[l]);
            assert!(v.abs() <= d + 1e-12, "|R_{}{}| = {} exceeds d", m + 1, l + 1, v.abs());
            r[m * k + l] = v;
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub num_states: usize,
    pub times: Vec<f64>,
    pub event_indices: Vec<usize>,
    /// Row-major `K * K` values per sample.
    pub values: Vec<f64>,
}

impl GapSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, row: usize, m: usize, l: usize) -> f64 {
        let k = self.num_states;
        self.values[row * k * k + m * k + l]
    }

    /// `sup_t |R_{ml}(t)|` over the samples.
    pub fn sup_abs(&self, m: usize, l: usize) -> f64 {
        (0..self.len())
            .map(|r| self.value(r, m, l).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|R|` over the samples and all pairs.
    pub fn sup_abs_all(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Exact gap values at each snapshot.
pub fn gap_series(snapshots: &Snapshots, graph: &RegularBipartiteGraph, d: f64) -> Result<GapSeries> {
    let k = snapshots.num_states;
    let mut values = Vec::with_capacity(snapshots.states.len() * k * k);
    for (i, s) in snapshots.states.iter().enumerate() {
        if s.len() != graph.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "snapshot {i} has {} nodes, graph has {}",
                s.len(),
                graph.num_nodes()
            )));
        }
        values.extend(gap_values(s, graph, k, d));
    }
    Ok(GapSeries {
        num_states: k,
        times: snapshots.times.clone(),
        event_indices: snapshots.event_indices.clone(),
        values,
    })
}
