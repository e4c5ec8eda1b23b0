//! Martingale residual `M̄_k(t) = Ȳ_k(t) - Ȳ_k(0) - (1/N) ∫₀ᵗ F_k ds` with exact
//! piecewise-constant quadrature of the compensator between events.

use crate::diagnostics::gap::pair_counts;
use crate::diagnostics::stats::mean_and_se;
use crate::ensemble::{par_map, run_keys, EnsembleConfig};
use crate::error::{Error, Result};
use crate::microsim::{simulate_optimized, ShuffleOn, SimOptions, SimOutput};
use crate::model::ModelSpec;
use crate::network::RegularBipartiteGraph;

/// Samples at every event time and at the horizon (last row).
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleResidualSeries {
    pub num_states: usize,
    pub times: Vec<f64>,
    /// Row-major `K` values per sample.
    pub residual: Vec<f64>,
    /// Accumulated drift `(1/N) ∫₀ᵗ F_k ds`, same layout.
    pub drift: Vec<f64>,
}

impl MartingaleResidualSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn residual_at(&self, row: usize) -> &[f64] {
        let k = self.num_states;
        &self.residual[row * k..(row + 1) * k]
    }

    pub fn drift_at(&self, row: usize) -> &[f64] {
        let k = self.num_states;
        &self.drift[row * k..(row + 1) * k]
    }

    /// `M̄(T)`.
    pub fn terminal(&self) -> &[f64] {
        self.residual_at(self.len() - 1)
    }
}

/// `F_k(X) = Σ_{m,l} γ_{ml} c_{ml}(k) X_mᵀ A X_l`.
pub fn compensator_rate(spec: &ModelSpec, pairs: &[u64]) -> Vec<f64> {
    let k = spec.num_states();
    let mut f = vec![0.0; k];
    for m in 0..k {
        for l in 0..k {
            let w = spec.gamma(m, l) * pairs[m * k + l] as f64;
            if w == 0.0 {
                continue;
            }
            for (s, &c) in spec.increments().pair(m, l).iter().enumerate() {
                f[s] += c as f64 * w;
            }
        }
    }
    f
}

fn drift_increments(out: &SimOutput, spec: &ModelSpec, graph: &RegularBipartiteGraph) -> Result<Vec<f64>> {
    let snaps = out.snapshots.as_ref().ok_or_else(|| {
        Error::InsufficientResolution("martingale residual needs microstate snapshots".into())
    })?;
    if snaps.stride != 1 || snaps.states.len() != out.trajectory.len() {
        return Err(Error::InsufficientResolution(format!(
            "martingale residual needs a snapshot at every event (stride 1), got stride {}",
            snaps.stride
        )));
    }
    let k = spec.num_states();
    let n = graph.num_nodes() as f64;
    let traj = &out.trajectory;
    let times = traj.times();
    let mut drift = vec![0.0; (traj.len() + 1) * k];
    for e in 0..traj.len() {
        let end = times.get(e + 1).copied().unwrap_or(traj.horizon());
        let dt = end - times[e];
        let rate = compensator_rate(spec, &pair_counts(&snaps.states[e], graph, k));
        for s in 0..k {
            drift[(e + 1) * k + s] = drift[e * k + s] + rate[s] / n * dt;
        }
    }
    Ok(drift)
}

/// Residual at each event time and at the horizon. Requires stride-1 snapshots.
pub fn martingale_residual(
    out: &SimOutput,
    spec: &ModelSpec,
    graph: &RegularBipartiteGraph,
) -> Result<MartingaleResidualSeries> {
    let k = spec.num_states();
    let traj = &out.trajectory;
    let drift = drift_increments(out, spec, graph)?;
    let rows = traj.len();
    let mut times = traj.times().to_vec();
    times.push(traj.horizon());
    let mut residual = vec![0.0; (rows + 1) * k];
    for row in 0..=rows {
        let at = row.min(rows - 1);
        for s in 0..k {
            residual[row * k + s] = traj.fraction(at, s) - traj.fraction(0, s) - drift[row * k + s];
        }
    }
    Ok(MartingaleResidualSeries {
        num_states: k,
        times,
        residual,
        drift: drift[..(rows + 1) * k].to_vec(),
    })
}

/// Largest `|Ȳ_k(0) + M̄_k(t) + drift_k(t) - Ȳ_k(t)|` over events, where `M̄`
/// is built from the event log's fired pairs (jumps `c_{ml}(k) / N`) rather
/// than from the trajectory itself.
pub fn pathwise_identity_error(
    out: &SimOutput,
    spec: &ModelSpec,
    graph: &RegularBipartiteGraph,
) -> Result<f64> {
    let events = out.events.as_ref().ok_or_else(|| {
        Error::InsufficientResolution("pathwise identity needs the event log".into())
    })?;
    let k = spec.num_states();
    let n = graph.num_nodes() as f64;
    let traj = &out.trajectory;
    let drift = drift_increments(out, spec, graph)?;
    let mut jumps = vec![0.0; k];
    let mut worst: f64 = 0.0;
    for row in 0..traj.len() {
        if row > 0 {
            let ev = &events[row - 1];
            for (s, &c) in spec.increments().pair(ev.pre.0 as usize, ev.pre.1 as usize).iter().enumerate() {
                jumps[s] += c as f64 / n;
            }
        }
        for s in 0..k {
            let mart = jumps[s] - drift[row * k + s];
            let rebuilt = traj.fraction(0, s) + mart + drift[row * k + s];
            worst = worst.max((rebuilt - traj.fraction(row, s)).abs());
        }
    }
    Ok(worst)
}

/// `4 K² γ d T / N` with `γ = max γ_{ml}`.
pub fn martingale_ceiling(spec: &ModelSpec, d: f64, horizon: f64, n: usize) -> f64 {
    let k = spec.num_states() as f64;
    4.0 * k * k * spec.max_gamma() * d * horizon / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleMoments {
    pub n: usize,
    pub runs: usize,
    /// Per-run `M̄(T)`, in seed order.
    pub terminal: Vec<Vec<f64>>,
    /// Sample `E[M̄_k(T)²]` per state.
    pub second_moment: Vec<f64>,
    pub std_err: Vec<f64>,
    pub ceiling: f64,
}

impl MartingaleMoments {
    /// Upper end of the one-sided interval `mean + z · se` for state `s`.
    pub fn upper(&self, s: usize, z: f64) -> f64 {
        self.second_moment[s] + z * self.std_err[s]
    }
}

impl MartingaleMoments {
    /// Summary of per-run terminal residuals at one `N`.
    pub fn from_terminal(spec: &ModelSpec, d: f64, horizon: f64, n: usize, terminal: Vec<Vec<f64>>) -> Self {
        let (second_moment, std_err) = (0..spec.num_states())
            .map(|s| {
                let sq: Vec<f64> = terminal.iter().map(|m| m[s] * m[s]).collect();
                mean_and_se(&sq)
            })
            .unzip();
        Self {
            n,
            runs: terminal.len(),
            terminal,
            second_moment,
            std_err,
            ceiling: martingale_ceiling(spec, d, horizon, n),
        }
    }
}

/// Runs every `(N, seed)` and summarises `M̄(T)` per `N`.
pub fn martingale_second_moments(sweep: &EnsembleConfig<'_>, ns: &[usize]) -> Result<Vec<MartingaleMoments>> {
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let graph = RegularBipartiteGraph::generate(n, sweep.degree, sweep.graph_seed)?;
        let keys = run_keys(sweep.base_seed, &[n], sweep.seed_indices);
        let terminal = par_map(&keys, |key| -> Result<Vec<f64>> {
            let init = key.initial_state(sweep.initial);
            let run = simulate_optimized(sweep.spec, &graph, &init, sweep.horizon, key.run_seed, residual_options(sweep.shuffle_on))?;
            Ok(martingale_residual(&run, sweep.spec, &graph)?.terminal().to_vec())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        out.push(MartingaleMoments::from_terminal(sweep.spec, sweep.degree as f64, sweep.horizon, n, terminal));
    }
    Ok(out)
}

/// Options giving the stride-1 snapshots the residual needs.
pub fn residual_options(shuffle_on: ShuffleOn) -> SimOptions {
    SimOptions {
        shuffle_on,
        record_events: false,
        snapshot_stride: Some(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::{simulate, MicroState};

    #[test]
    fn zero_rate_model_has_zero_residual() {
        let spec = ModelSpec::voter(2, 0.0).unwrap();
        let g = RegularBipartiteGraph::generate(8, 2, 0).unwrap();
        let init = MicroState::from_counts(&[3, 5]);
        let out = simulate(&spec, &g, &init, 4.0, 0, SimOptions::full()).unwrap();
        let m = martingale_residual(&out, &spec, &g).unwrap();
        assert!(m.residual.iter().all(|&v| v == 0.0));
        assert_eq!(m.times, vec![0.0, 4.0]);
    }

    #[test]
    fn voter_single_event_jump_is_one_quarter() {
        let spec = ModelSpec::voter(2, 1.0).unwrap();
        let g = RegularBipartiteGraph::generate(4, 2, 0).unwrap();
        let init = MicroState::from_counts(&[2, 2]);
        for seed in 0..20 {
            let out = simulate(&spec, &g, &init, 50.0, seed, SimOptions::full()).unwrap();
            let m = martingale_residual(&out, &spec, &g).unwrap();
            if m.len() < 3 {
                continue;
            }
            let t1 = m.times[1];
            // drift right before the event is the drift accumulated to t1
            let before = m.residual_at(0)[0] - (m.drift_at(1)[0] - m.drift_at(0)[0]);
            let jump = m.residual_at(1)[0] - before;
            assert!((jump.abs() - 0.25).abs() < 1e-12, "seed {seed} t1 {t1} jump {jump}");
        }
    }

    #[test]
    fn stride_above_one_is_rejected() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let g = RegularBipartiteGraph::generate(20, 2, 0).unwrap();
        let init = MicroState::from_counts(&[2, 18]);
        let opts = SimOptions {
            snapshot_stride: Some(2),
            ..SimOptions::full()
        };
        let out = simulate(&spec, &g, &init, 4.0, 0, opts).unwrap();
        assert!(matches!(
            martingale_residual(&out, &spec, &g),
            Err(Error::InsufficientResolution(_))
        ));
        let out = simulate(&spec, &g, &init, 4.0, 0, SimOptions::default()).unwrap();
        assert!(martingale_residual(&out, &spec, &g).is_err());
    }

    #[test]
    fn identity_holds_on_sis() {
        let spec = ModelSpec::sis(1.0).unwrap();
        let g = RegularBipartiteGraph::generate(40, 2, 2).unwrap();
        let init = MicroState::from_counts(&[4, 36]);
        let out = simulate(&spec, &g, &init, 10.0, 7, SimOptions::full()).unwrap();
        assert!(pathwise_identity_error(&out, &spec, &g).unwrap() < 1e-12);
    }
}
