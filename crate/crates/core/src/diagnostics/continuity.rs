//! Modulus of continuity of step paths and sup-distance to the fluid solution.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fluid::FluidPath;
use crate::microsim::MacroTrajectory;

/// Right-continuous step function: `values[i]` on `[times[i], times[i+1])`,
/// the last value held to `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub horizon: f64,
}

impl StepPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "step path needs matching times and values starting at 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] < w[0]) || *times.last().unwrap() > horizon {
            return Err(Error::InvalidArgument("step times must be nondecreasing within the horizon".into()));
        }
        Ok(Self { times, values, horizon })
    }

    /// `Ȳ_s` of a trajectory.
    pub fn from_fraction(traj: &MacroTrajectory, s: usize) -> Self {
        Self {
            times: traj.times().to_vec(),
            values: (0..traj.len()).map(|r| traj.fraction(r, s)).collect(),
            horizon: traj.horizon(),
        }
    }
}

/// `ω(x, δ, T) = sup { |x(u) - x(v)| : |u - v| ≤ δ, u, v ∈ [0, T] }`.
///
/// Piece `j > i` is reachable from piece `i` within `δ` iff `t_j < t_{i+1} + δ`
/// (the right end of piece `i` is open), and the reachable windows move
/// monotonically, so a pair of monotone deques gives the exact value.
pub fn modulus_of_continuity(path: &StepPath, delta: f64, horizon: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let pieces = path.times.partition_point(|&t| t <= horizon);
    let times = &path.times[..pieces];
    let values = &path.values[..pieces];
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut end = 0usize;
    let mut best: f64 = 0.0;
    for i in 0..pieces {
        let right = times.get(i + 1).copied().unwrap_or(f64::INFINITY);
        while end < pieces && (end <= i + 1 || times[end] < right + delta) {
            while maxq.back().is_some_and(|&b| values[b] <= values[end]) {
                maxq.pop_back();
            }
            maxq.push_back(end);
            while minq.back().is_some_and(|&b| values[b] >= values[end]) {
                minq.pop_back();
            }
            minq.push_back(end);
            end += 1;
        }
        while maxq.front().is_some_and(|&f| f < i) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&f| f < i) {
            minq.pop_front();
        }
        if let (Some(&hi), Some(&lo)) = (maxq.front(), minq.front()) {
            best = best.max(values[hi] - values[lo]);
        }
    }
    Ok(best)
}

/// `sup_{t ∈ [0, T]} max_k |Ȳ_k(t) - y_k(t)|`, evaluated on both sides of every
/// event and at every fluid sample time.
pub fn compare_to_fluid(traj: &MacroTrajectory, fluid: &FluidPath) -> Result<f64> {
    let k = traj.num_states();
    (0..k)
        .map(|s| sup_distance(traj, fluid, s))
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
}

/// Sup-distance for a single state.
pub fn sup_distance(traj: &MacroTrajectory, fluid: &FluidPath, s: usize) -> Result<f64> {
    if (traj.horizon() - fluid.horizon()).abs() > 1e-9 * traj.horizon().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "trajectory horizon {} does not match fluid horizon {}",
            traj.horizon(),
            fluid.horizon()
        )));
    }
    if traj.num_states() != fluid.num_states() {
        return Err(Error::InvalidArgument("state counts differ".into()));
    }
    let times = traj.times();
    let mut best: f64 = 0.0;
    for (row, &t) in times.iter().enumerate() {
        let y = fluid.eval(t, s);
        best = best.max((traj.fraction(row, s) - y).abs());
        if row > 0 {
            best = best.max((traj.fraction(row - 1, s) - y).abs());
        }
    }
    for (i, &t) in fluid.times().iter().enumerate() {
        let row = traj.row_at(t);
        best = best.max((traj.fraction(row, s) - fluid.state(i)[s]).abs());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_modulus(path: &StepPath, delta: f64, horizon: f64) -> f64 {
        // Dense grid plus points hugging each jump from both sides.
        let mut pts: Vec<f64> = (0..=2000).map(|i| horizon * i as f64 / 2000.0).collect();
        for &t in &path.times {
            for off in [-1e-9, 0.0, 1e-9] {
                let p = t + off;
                if (0.0..=horizon).contains(&p) {
                    pts.push(p);
                }
                let q = t + off - delta;
                if (0.0..=horizon).contains(&q) {
                    pts.push(q);
                }
                let r = t + off + delta;
                if (0.0..=horizon).contains(&r) {
                    pts.push(r);
                }
            }
        }
        let value = |t: f64| path.values[path.times.partition_point(|&x| x <= t) - 1];
        let mut best: f64 = 0.0;
        for &u in &pts {
            for &v in &pts {
                if (u - v).abs() <= delta {
                    best = best.max((value(u) - value(v)).abs());
                }
            }
        }
        best
    }

    #[test]
    fn constant_path() {
        let p = StepPath::new(vec![0.0], vec![0.3], 5.0).unwrap();
        for delta in [1e-6, 0.1, 10.0] {
            assert_eq!(modulus_of_continuity(&p, delta, 5.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_jump() {
        let p = StepPath::new(vec![0.0, 2.0], vec![0.1, 0.35], 5.0).unwrap();
        for delta in [1e-9, 0.5, 7.0] {
            let w = modulus_of_continuity(&p, delta, 5.0).unwrap();
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!(modulus_of_continuity(&p, 0.0, 5.0).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let p = StepPath::new(
            vec![0.0, 0.5, 0.7, 1.5, 1.6, 3.0, 3.05],
            vec![0.0, 0.2, 0.1, 0.5, 0.45, 0.9, 0.2],
            4.0,
        )
        .unwrap();
        for delta in [0.05, 0.1, 0.25, 0.9, 1.0, 1.45, 2.0] {
            let w = modulus_of_continuity(&p, delta, 4.0).unwrap();
            let b = brute_modulus(&p, delta, 4.0);
            assert!((w - b).abs() < 1e-12, "delta {delta}: {w} vs {b}");
        }
    }

    #[test]
    fn sampled_fluid_path_has_zero_distance() {
        let times = vec![0.0, 1.0, 2.0];
        let fluid = FluidPath::from_samples(
            times.clone(),
            vec![vec![0.25, 0.75], vec![0.5, 0.5], vec![0.75, 0.25]],
        )
        .unwrap();
        let traj = MacroTrajectory::from_rows(
            4,
            2.0,
            &[(0.0, vec![1, 3]), (1.0, vec![2, 2]), (2.0, vec![3, 1])],
        )
        .unwrap();
        // left limits at jumps differ by 1/4; compare the post-jump samples only
        let mut best: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            best = best.max((traj.fraction(traj.row_at(t), 0) - fluid.state(i)[0]).abs());
        }
        assert_eq!(best, 0.0);
    }

    #[test]
    fn constant_offset() {
        let fluid = FluidPath::from_samples(vec![0.0, 3.0], vec![vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        let traj = MacroTrajectory::from_rows(10, 3.0, &[(0.0, vec![5, 5])]).unwrap();
        let d = compare_to_fluid(&traj, &fluid).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        let short = FluidPath::from_samples(vec![0.0, 2.0], vec![vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        assert!(compare_to_fluid(&traj, &short).is_err());
    }
}
