//! Exact event-driven simulation of the microstate chain, plus the auxiliary
//! Bernoulli process and the count-matching coupling.
//!
//! # Event loop
//!
//! Every directed edge `(i, j)` carries a clock of rate
//! `gamma[state(i)][state(j)]`. Let `n[m][l]` be the number of directed edges
//! from an `m` node to an `l` node. Each step:
//!
//! 1. `Λ = Σ gamma[m][l] · n[m][l]` over `(m, l)` in lexicographic order; stop if `Λ = 0`.
//! 2. Waiting time `-ln(1 - u₁) / Λ`; stop if the clock passes the horizon.
//! 3. Edge selection on the cumulative ordering that groups directed edges by
//!    `(m, l)` lexicographically and, within a type, follows the graph's
//!    canonical directed-edge order. `u₂ · Λ` picks the type and the rank `r`
//!    within it.
//! 4. Apply `G(state(i), state(j))` with `i` the initiator.
//! 5. Shuffle all node states (Fisher–Yates, `N - 1` uniforms).
//!
//! [`simulate`] recomputes everything from scratch each step; [`simulate_optimized`]
//! keeps type counts in preallocated buffers and skips recomputation when
//! nothing moved. Both consume the stream identically and produce
//! bit-identical output for equal seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::network::{shuffle_states, RegularBipartiteGraph};
use crate::rng::SimRng;

/// When the rewiring shuffle is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleOn {
    /// After every clock ring, including rings whose update is a no-op.
    #[default]
    EveryEvent,
    /// Only after rings that change at least one node state.
    StateChange,
}

/// Per-node states (0-based), the compact form of the one-hot microstate matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroState {
    k: usize,
    states: Vec<u8>,
}

impl MicroState {
    pub fn new(k: usize, states: Vec<u8>) -> Result<Self> {
        if let Some(i) = states.iter().position(|&s| s as usize >= k) {
            return Err(Error::InvalidArgument(format!(
                "node {} has state {} outside 1..={k}",
                i + 1,
                states[i] as usize + 1
            )));
        }
        Ok(Self { k, states })
    }

    /// From 1-based labels.
    pub fn from_labels(k: usize, labels: &[usize]) -> Result<Self> {
        let states = labels
            .iter()
            .map(|&s| {
                if s == 0 || s > k {
                    Err(Error::InvalidArgument(format!("state label {s} outside 1..={k}")))
                } else {
                    Ok((s - 1) as u8)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, states })
    }

    /// Block arrangement: the first `counts[0]` nodes in state 1, and so on.
    pub fn from_counts(counts: &[usize]) -> Self {
        let states = counts
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(s as u8, c))
            .collect();
        Self {
            k: counts.len(),
            states,
        }
    }

    /// Uniformly random arrangement with the given counts.
    pub fn arranged(counts: &[usize], rng: &mut SimRng) -> Self {
        let mut s = Self::from_counts(counts);
        shuffle_states(&mut s.states, rng);
        s
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn counts(&self) -> Vec<usize> {
        counts_of(self.k, &self.states)
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.counts().into_iter().map(|c| c as f64 / n).collect()
    }
}

pub(crate) fn counts_of(k: usize, states: &[u8]) -> Vec<usize> {
    let mut c = vec![0; k];
    for &s in states {
        c[s as usize] += 1;
    }
    c
}

/// Largest-remainder rounding of fractions to integer counts summing to `n`.
pub fn counts_from_fractions(fractions: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = fractions.iter().sum();
    let exact: Vec<f64> = fractions.iter().map(|f| f / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// One clock ring. Node ids and states are 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub initiator: usize,
    pub target: usize,
    pub pre: (u8, u8),
    pub post: (u8, u8),
}

impl EventRecord {
    pub fn changes_state(&self) -> bool {
        self.pre != self.post
    }
}

/// Event-stamped count vectors. Row 0 is `t = 0`; row `e` holds the counts just
/// after event `e`. The path is constant from the last row to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroTrajectory {
    k: usize,
    n: usize,
    horizon: f64,
    times: Vec<f64>,
    counts: Vec<u32>,
}

impl MacroTrajectory {
    pub(crate) fn new(k: usize, n: usize, horizon: f64) -> Self {
        Self {
            k,
            n,
            horizon,
            times: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, counts: &[usize]) {
        self.times.push(t);
        self.counts.extend(counts.iter().map(|&c| c as u32));
    }

    /// Builds a trajectory from explicit rows; used for tests and file readers.
    pub fn from_rows(n: usize, horizon: f64, rows: &[(f64, Vec<usize>)]) -> Result<Self> {
        let k = rows.first().map(|r| r.1.len()).unwrap_or(0);
        let mut traj = Self::new(k, n, horizon);
        let mut last = f64::NEG_INFINITY;
        for (t, c) in rows {
            if c.len() != k || c.iter().sum::<usize>() != n {
                return Err(Error::InvalidArgument(format!(
                    "row at t = {t} does not have {k} counts summing to {n}"
                )));
            }
            if *t < last || *t > horizon {
                return Err(Error::InvalidArgument(format!(
                    "row time {t} out of order or past the horizon"
                )));
            }
            last = *t;
            traj.push(*t, c);
        }
        Ok(traj)
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts_at(&self, row: usize) -> &[u32] {
        &self.counts[row * self.k..(row + 1) * self.k]
    }

    pub fn fraction(&self, row: usize, state: usize) -> f64 {
        self.counts[row * self.k + state] as f64 / self.n as f64
    }

    pub fn fractions_at(&self, row: usize) -> Vec<f64> {
        (0..self.k).map(|s| self.fraction(row, s)).collect()
    }

    /// Index of the row in force at time `t` (last row with time `<= t`).
    pub fn row_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }
}

/// Microstates recorded after selected events (post-shuffle), event 0 being
/// the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub num_states: usize,
    pub stride: usize,
    pub event_indices: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub shuffle_on: ShuffleOn,
    pub record_events: bool,
    /// `None` disables microstate snapshots.
    pub snapshot_stride: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            shuffle_on: ShuffleOn::EveryEvent,
            record_events: false,
            snapshot_stride: None,
        }
    }
}

impl SimOptions {
    /// Events and every-event snapshots, as needed by the exact diagnostics.
    pub fn full() -> Self {
        Self {
            shuffle_on: ShuffleOn::EveryEvent,
            record_events: true,
            snapshot_stride: Some(1),
        }
    }
}

/// Stride 1 up to `N = 1000`, then every `ceil(N / 1000)` events.
pub fn default_snapshot_stride(n: usize) -> usize {
    if n <= 1000 {
        1
    } else {
        n.div_ceil(1000)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trajectory: MacroTrajectory,
    pub events: Option<Vec<EventRecord>>,
    pub snapshots: Option<Snapshots>,
}

/// `Λ` accumulated in `(m, l)` lexicographic order.
#[inline]
pub(crate) fn total_rate(type_counts: &[u64], gamma: &[f64]) -> f64 {
    let mut total = 0.0;
    for (c, g) in type_counts.iter().zip(gamma) {
        if *c > 0 && *g > 0.0 {
            total += *g * *c as f64;
        }
    }
    total
}

/// Maps `u ∈ [0, 1)` to `(pair type, rank within type)` on the grouped
/// cumulative ordering.
#[inline]
pub(crate) fn select_pair_type(type_counts: &[u64], gamma: &[f64], total: f64, u: f64) -> (usize, u64) {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (t, (c, g)) in type_counts.iter().zip(gamma).enumerate() {
        if *c == 0 || *g <= 0.0 {
            continue;
        }
        let w = *g * *c as f64;
        if target < acc + w {
            let r = ((target - acc) / *g).floor().max(0.0) as u64;
            return (t, r.min(*c - 1));
        }
        acc += w;
        last = Some(t);
    }
    // roundoff pushed the target past the last bucket
    let t = last.expect("select_pair_type called with zero total rate");
    (t, type_counts[t] - 1)
}

fn check_inputs(spec: &ModelSpec, graph: &RegularBipartiteGraph, initial: &MicroState, horizon: f64) -> Result<()> {
    if graph.num_nodes() == 0 || graph.num_directed_edges() == 0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    if initial.len() != graph.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} nodes, graph has {}",
            initial.len(),
            graph.num_nodes()
        )));
    }
    if initial.num_states() != spec.num_states() {
        return Err(Error::InvalidArgument(format!(
            "initial state uses K = {}, model has K = {}",
            initial.num_states(),
            spec.num_states()
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(())
}

struct Recorder {
    trajectory: MacroTrajectory,
    counts: Vec<usize>,
    events: Option<Vec<EventRecord>>,
    snapshots: Option<Snapshots>,
    event_index: usize,
}

impl Recorder {
    fn new(spec: &ModelSpec, initial: &MicroState, horizon: f64, options: SimOptions) -> Result<Self> {
        let counts = initial.counts();
        let mut trajectory = MacroTrajectory::new(spec.num_states(), initial.len(), horizon);
        trajectory.push(0.0, &counts);
        let snapshots = match options.snapshot_stride {
            Some(0) => {
                return Err(Error::InvalidArgument("snapshot stride must be positive".into()))
            }
            Some(stride) => Some(Snapshots {
                num_states: spec.num_states(),
                stride,
                event_indices: vec![0],
                times: vec![0.0],
                states: vec![initial.states().to_vec()],
            }),
            None => None,
        };
        Ok(Self {
            trajectory,
            counts,
            events: options.record_events.then(Vec::new),
            snapshots,
            event_index: 0,
        })
    }

    fn record(&mut self, ev: EventRecord, states: &[u8]) {
        self.event_index += 1;
        let (a, b) = ev.pre;
        let (c, d) = ev.post;
        self.counts[a as usize] -= 1;
        self.counts[b as usize] -= 1;
        self.counts[c as usize] += 1;
        self.counts[d as usize] += 1;
        self.trajectory.push(ev.time, &self.counts);
        if let Some(events) = &mut self.events {
            events.push(ev);
        }
        if let Some(snaps) = &mut self.snapshots {
            if self.event_index.is_multiple_of(snaps.stride) {
                snaps.event_indices.push(self.event_index);
                snaps.times.push(ev.time);
                snaps.states.push(states.to_vec());
            }
        }
    }

    fn finish(self) -> SimOutput {
        debug_assert_eq!(self.counts.iter().sum::<usize>(), self.trajectory.num_nodes());
        SimOutput {
            trajectory: self.trajectory,
            events: self.events,
            snapshots: self.snapshots,
        }
    }
}

#[inline]
fn apply_and_rewire(
    spec: &ModelSpec,
    states: &mut [u8],
    initiator: usize,
    target: usize,
    time: f64,
    shuffle_on: ShuffleOn,
    rng: &mut SimRng,
) -> EventRecord {
    let pre = (states[initiator], states[target]);
    let (a, b) = spec.update().apply(pre.0 as usize, pre.1 as usize);
    let post = (a as u8, b as u8);
    states[initiator] = post.0;
    states[target] = post.1;
    let ev = EventRecord {
        time,
        initiator,
        target,
        pre,
        post,
    };
    if shuffle_on == ShuffleOn::EveryEvent || ev.changes_state() {
        shuffle_states(states, rng);
    }
    ev
}

/// Reference simulator: recomputes every directed edge's type, the type counts
/// and the total rate from scratch before each event, and locates the chosen
/// edge by a full re-scan.
pub fn simulate(
    spec: &ModelSpec,
    graph: &RegularBipartiteGraph,
    initial: &MicroState,
    horizon: f64,
    seed: u64,
    options: SimOptions,
) -> Result<SimOutput> {
    check_inputs(spec, graph, initial, horizon)?;
    let k = spec.num_states();
    let gamma = spec.gamma_flat();
    let mut rng = SimRng::new(seed);
    let mut states = initial.states().to_vec();
    let mut rec = Recorder::new(spec, initial, horizon, options)?;
    let mut t = 0.0;
    loop {
        let typed: Vec<(usize, usize, usize)> = (0..graph.num_directed_edges())
            .map(|e| {
                let (i, j) = graph.directed_edge(e);
                (i, j, states[i] as usize * k + states[j] as usize)
            })
            .collect();
        let mut type_counts = vec![0u64; k * k];
        for &(_, _, ty) in &typed {
            type_counts[ty] += 1;
        }
        let total = total_rate(&type_counts, gamma);
        if total <= 0.0 {
            break;
        }
        t += rng.exponential(total);
        if t > horizon {
            break;
        }
        let (ty, rank) = select_pair_type(&type_counts, gamma, total, rng.uniform());
        let &(i, j, _) = typed
            .iter()
            .filter(|e| e.2 == ty)
            .nth(rank as usize)
            .expect("rank within type count");
        let ev = apply_and_rewire(spec, &mut states, i, j, t, options.shuffle_on, &mut rng);
        rec.record(ev, &states);
    }
    Ok(rec.finish())
}

/// Same law, same random stream and same output as [`simulate`]; type counts
/// are kept in a reused buffer filled by one pass over the matchings, edge
/// location stops at the selected rank, and nothing is recomputed after an
/// event that left the microstate untouched.
pub fn simulate_optimized(
    spec: &ModelSpec,
    graph: &RegularBipartiteGraph,
    initial: &MicroState,
    horizon: f64,
    seed: u64,
    options: SimOptions,
) -> Result<SimOutput> {
    check_inputs(spec, graph, initial, horizon)?;
    let k = spec.num_states();
    let gamma = spec.gamma_flat();
    let pairs: Vec<(u32, u32)> = graph.matchings().iter().flatten().copied().collect();
    let mut rng = SimRng::new(seed);
    let mut states = initial.states().to_vec();
    let mut rec = Recorder::new(spec, initial, horizon, options)?;
    let mut type_counts = vec![0u64; k * k];
    let mut stale = true;
    let mut total = 0.0;
    let mut t = 0.0;
    loop {
        if stale {
            fill_type_counts(&pairs, &states, k, &mut type_counts);
            total = total_rate(&type_counts, gamma);
        }
        if total <= 0.0 {
            break;
        }
        t += rng.exponential(total);
        if t > horizon {
            break;
        }
        let (ty, rank) = select_pair_type(&type_counts, gamma, total, rng.uniform());
        let (i, j) = locate(&pairs, &states, k, ty, rank);
        let ev = apply_and_rewire(spec, &mut states, i, j, t, options.shuffle_on, &mut rng);
        stale = options.shuffle_on == ShuffleOn::EveryEvent || ev.changes_state();
        rec.record(ev, &states);
    }
    Ok(rec.finish())
}

/// `out[m * K + l]` = number of directed edges from an `m` node to an `l` node,
/// i.e. the quadratic form `X_mᵀ A X_l`.
pub(crate) fn fill_type_counts(pairs: &[(u32, u32)], states: &[u8], k: usize, out: &mut [u64]) {
    out.fill(0);
    for &(a, b) in pairs {
        let sa = states[a as usize] as usize;
        let sb = states[b as usize] as usize;
        out[sa * k + sb] += 1;
        out[sb * k + sa] += 1;
    }
}

#[inline]
fn locate(pairs: &[(u32, u32)], states: &[u8], k: usize, ty: usize, rank: u64) -> (usize, usize) {
    let mut seen = 0u64;
    for &(a, b) in pairs {
        let (a, b) = (a as usize, b as usize);
        let sa = states[a] as usize;
        let sb = states[b] as usize;
        if sa * k + sb == ty {
            if seen == rank {
                return (a, b);
            }
            seen += 1;
        }
        if sb * k + sa == ty {
            if seen == rank {
                return (b, a);
            }
            seen += 1;
        }
    }
    unreachable!("rank {rank} beyond type count")
}

/// The auxiliary process: for each state `m`, `N` i.i.d. Bernoulli(`counts[m] / N`)
/// entries. Column `m` is drawn entirely before column `m + 1`.
pub fn sample_auxiliary(counts: &[usize], rng: &mut SimRng) -> Vec<Vec<bool>> {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| sample_auxiliary_column(c, n, rng))
        .collect()
}

pub fn sample_auxiliary_column(count: usize, n: usize, rng: &mut SimRng) -> Vec<bool> {
    let p = if n == 0 { 0.0 } else { count as f64 / n as f64 };
    (0..n).map(|_| rng.bernoulli(p)).collect()
}

/// Flips a uniformly random subset of surplus ones (or missing zeros) so the
/// column has exactly `target` ones.
pub fn couple_to_counts(column: &[bool], target: usize, rng: &mut SimRng) -> Vec<bool> {
    assert!(target <= column.len(), "target {target} exceeds column length");
    let mut out = column.to_vec();
    let ones = out.iter().filter(|&&x| x).count();
    if ones != target {
        let surplus = ones > target;
        let mut candidates: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == surplus)
            .map(|(i, _)| i)
            .collect();
        let flips = ones.abs_diff(target);
        for i in 0..flips {
            let j = i + rng.index(candidates.len() - i);
            candidates.swap(i, j);
            out[candidates[i]] = !surplus;
        }
    }
    assert_eq!(out.iter().filter(|&&x| x).count(), target);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sis_setup(n: usize, d: usize, infected: usize) -> (ModelSpec, RegularBipartiteGraph, MicroState) {
        let spec = ModelSpec::sis(1.0).unwrap();
        let g = RegularBipartiteGraph::generate(n, d, 5).unwrap();
        let init = MicroState::from_counts(&[infected, n - infected]);
        (spec, g, init)
    }

    #[test]
    fn voter_consensus_is_constant() {
        let spec = ModelSpec::voter(2, 1.0).unwrap();
        let g = RegularBipartiteGraph::generate(10, 2, 1).unwrap();
        let init = MicroState::from_counts(&[10, 0]);
        let out = simulate(&spec, &g, &init, 5.0, 3, SimOptions::full()).unwrap();
        assert_eq!(out.trajectory.num_events(), 0);
        assert_eq!(out.trajectory.counts_at(0), &[10, 0]);
    }

    #[test]
    fn no_op_clocks_fire_but_keep_counts() {
        // voter with gamma_11 > 0: G(1,1) = (1,1) rings but changes nothing
        let spec = ModelSpec::new(
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            crate::model::UpdateRule::voter(2).unwrap(),
        )
        .unwrap();
        let g = RegularBipartiteGraph::generate(10, 2, 1).unwrap();
        let init = MicroState::from_counts(&[10, 0]);
        let out = simulate_optimized(&spec, &g, &init, 2.0, 3, SimOptions::full()).unwrap();
        assert!(out.trajectory.num_events() > 0);
        for r in 0..out.trajectory.len() {
            assert_eq!(out.trajectory.counts_at(r), &[10, 0]);
        }
    }

    #[test]
    fn four_cycle_first_event_infects_one() {
        let (spec, g, init) = sis_setup(4, 2, 1);
        for seed in 0..50 {
            let out = simulate(&spec, &g, &init, 100.0, seed, SimOptions::default()).unwrap();
            assert!(out.trajectory.num_events() >= 1);
            assert_eq!(out.trajectory.counts_at(1)[0], 2);
        }
    }

    #[test]
    fn two_node_absorption_time_is_exponential() {
        let (spec, g, init) = sis_setup(2, 1, 1);
        let runs = 10_000;
        let mut total = 0.0;
        for seed in 0..runs {
            let out = simulate_optimized(&spec, &g, &init, 1e9, seed, SimOptions::default()).unwrap();
            assert_eq!(out.trajectory.num_events(), 1);
            total += out.trajectory.times()[1];
        }
        let mean = total / runs as f64;
        assert!((mean - 1.0).abs() <= 0.03, "mean {mean}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (spec, g, init) = sis_setup(4, 2, 1);
        assert!(simulate(&spec, &g, &init, 0.0, 0, SimOptions::default()).is_err());
        assert!(simulate(&spec, &g, &MicroState::from_counts(&[1, 1]), 1.0, 0, SimOptions::default()).is_err());
        let empty = RegularBipartiteGraph::from_matchings_unchecked(0, vec![]);
        assert!(simulate_optimized(&spec, &empty, &MicroState::from_counts(&[0, 0]), 1.0, 0, SimOptions::default()).is_err());
    }

    #[test]
    fn increments_match_tensor_event_by_event() {
        let spec = ModelSpec::voter(3, 0.7).unwrap();
        let g = RegularBipartiteGraph::generate(30, 3, 2).unwrap();
        let mut rng = SimRng::new(8);
        let init = MicroState::arranged(&[10, 10, 10], &mut rng);
        let out = simulate_optimized(&spec, &g, &init, 3.0, 4, SimOptions::full()).unwrap();
        let events = out.events.unwrap();
        let traj = &out.trajectory;
        assert_eq!(events.len(), traj.num_events());
        for (e, ev) in events.iter().enumerate() {
            let before = traj.counts_at(e);
            let after = traj.counts_at(e + 1);
            let c = spec.increments().pair(ev.pre.0 as usize, ev.pre.1 as usize);
            for s in 0..3 {
                assert_eq!(after[s] as i64 - before[s] as i64, c[s] as i64);
            }
            assert_eq!(after.iter().sum::<u32>(), 30);
            assert!(traj.times()[e + 1] > traj.times()[e]);
        }
    }

    #[test]
    fn naive_and_optimized_agree_on_sis_four_cycle() {
        let (spec, g, init) = sis_setup(4, 2, 1);
        let a = simulate(&spec, &g, &init, 10.0, 1, SimOptions::full()).unwrap();
        let b = simulate_optimized(&spec, &g, &init, 10.0, 1, SimOptions::full()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_change_mode_agrees_too() {
        let spec = ModelSpec::new(
            vec![vec![0.5, 1.0], vec![0.3, 0.2]],
            crate::model::UpdateRule::voter(2).unwrap(),
        )
        .unwrap();
        let g = RegularBipartiteGraph::generate(20, 2, 9).unwrap();
        let init = MicroState::from_counts(&[7, 13]);
        let opts = SimOptions {
            shuffle_on: ShuffleOn::StateChange,
            ..SimOptions::full()
        };
        let a = simulate(&spec, &g, &init, 4.0, 12, opts).unwrap();
        let b = simulate_optimized(&spec, &g, &init, 4.0, 12, opts).unwrap();
        assert_eq!(a, b);
        assert!(a.events.unwrap().iter().any(|e| !e.changes_state()));
    }

    #[test]
    fn snapshot_stride_is_respected() {
        let (spec, g, init) = sis_setup(40, 2, 4);
        let opts = SimOptions {
            snapshot_stride: Some(5),
            ..SimOptions::default()
        };
        let out = simulate_optimized(&spec, &g, &init, 10.0, 2, opts).unwrap();
        let snaps = out.snapshots.unwrap();
        assert!(snaps.event_indices.iter().all(|e| e % 5 == 0));
        assert_eq!(snaps.event_indices.len(), out.trajectory.num_events() / 5 + 1);
        assert_eq!(default_snapshot_stride(1000), 1);
        assert_eq!(default_snapshot_stride(4000), 4);
        assert_eq!(default_snapshot_stride(4001), 5);
    }

    #[test]
    fn counts_from_fractions_rounds_to_total() {
        assert_eq!(counts_from_fractions(&[0.1, 0.9], 100), vec![10, 90]);
        assert_eq!(counts_from_fractions(&[1.0 / 3.0; 3], 10).iter().sum::<usize>(), 10);
        assert_eq!(counts_from_fractions(&[0.5, 0.5], 5), vec![3, 2]);
    }

    #[test]
    fn auxiliary_degenerate_columns() {
        let mut rng = SimRng::new(0);
        let cols = sample_auxiliary(&[8, 0, 0], &mut rng);
        assert!(cols[0].iter().all(|&x| x));
        assert!(cols[1].iter().all(|&x| !x));
        assert!(cols[2].iter().all(|&x| !x));
    }

    #[test]
    fn auxiliary_column_sum_is_binomial_mean() {
        let mut rng = SimRng::new(1);
        let trials = 4000;
        let mut total = 0usize;
        for _ in 0..trials {
            let cols = sample_auxiliary(&[500, 500], &mut rng);
            total += cols[0].iter().filter(|&&x| x).count();
        }
        let mean = total as f64 / trials as f64;
        // se = sqrt(250 / 4000) = 0.25
        assert!((mean - 500.0).abs() <= 1.0, "mean {mean}");
    }

    #[test]
    fn coupling_edge_cases() {
        let mut rng = SimRng::new(2);
        let col = vec![true, false, true, false];
        assert_eq!(couple_to_counts(&col, 2, &mut rng), col);
        assert_eq!(couple_to_counts(&[false; 5], 5, &mut rng), vec![true; 5]);
        assert_eq!(couple_to_counts(&[true; 5], 0, &mut rng), vec![false; 5]);
        for target in 0..=6 {
            let col = sample_auxiliary_column(3, 6, &mut rng);
            let out = couple_to_counts(&col, target, &mut rng);
            assert_eq!(out.iter().filter(|&&x| x).count(), target);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn simulators_agree_and_conserve_counts(
                half in 2usize..16,
                d in 1usize..4,
                beta in 0.0f64..3.0,
                infected in 0usize..32,
                seed: u64,
                every in any::<bool>(),
            ) {
                let n = 2 * half;
                let d = d.min(half);
                let spec = ModelSpec::sis(beta).unwrap();
                let graph = RegularBipartiteGraph::generate(n, d, seed).unwrap();
                let init = MicroState::from_counts(&[infected.min(n), n - infected.min(n)]);
                let shuffle_on = if every { ShuffleOn::EveryEvent } else { ShuffleOn::StateChange };
                let opts = SimOptions { shuffle_on, ..SimOptions::full() };
                let a = simulate(&spec, &graph, &init, 2.0, seed, opts).unwrap();
                let b = simulate_optimized(&spec, &graph, &init, 2.0, seed, opts).unwrap();
                prop_assert_eq!(&a, &b);
                let traj = &a.trajectory;
                for row in 0..traj.len() {
                    prop_assert_eq!(traj.counts_at(row).iter().sum::<u32>() as usize, n);
                }
                prop_assert!(traj.times().windows(2).all(|w| w[0] < w[1]));
            }

            #[test]
            fn coupling_hits_target(col in proptest::collection::vec(any::<bool>(), 1..40), t in 0usize..40, seed: u64) {
                let target = t % (col.len() + 1);
                let mut rng = SimRng::new(seed);
                let out = couple_to_counts(&col, target, &mut rng);
                prop_assert_eq!(out.iter().filter(|&&x| x).count(), target);
                // only entries on the surplus side are flipped
                let ones = col.iter().filter(|&&x| x).count();
                for (x, y) in col.iter().zip(&out) {
                    if x != y {
                        prop_assert_eq!(*x, ones > target);
                    }
                }
            }
        }
    }
}
