//! Tail probabilities of the concentration statements, estimated by Monte
//! Carlo with Wilson intervals, and the analytic bounds they are compared to.

use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::diagnostics::gap::gap_series;
use crate::diagnostics::stats::{linear_fit, wilson_interval, LinearFit};
use crate::ensemble::{par_map, run_keys, EnsembleConfig};
use crate::error::{Error, Result};
use crate::microsim::{sample_auxiliary_column, simulate_optimized, SimOptions};
use crate::network::RegularBipartiteGraph;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub epsilon: f64,
    pub n: usize,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

impl TailEstimate {
    pub fn from_counts(epsilon: f64, n: usize, hits: u64, trials: u64, confidence: f64) -> Self {
        let (ci_low, ci_high) = wilson_interval(hits, trials, confidence);
        Self {
            epsilon,
            n,
            trials,
            hits,
            p_hat: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
            ci_low,
            ci_high,
            confidence,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        (self.ci_low..=self.ci_high).contains(&p)
    }
}

/// Bounded-variance Bernstein bound `2 exp(-N ε² / (2 v² + 2 c ε / 3))`.
/// Not capped; callers using it as a probability take `min(1, ·)`.
pub fn bernstein_bound(epsilon: f64, c: f64, v: f64, n: usize) -> f64 {
    2.0 * (-(n as f64) * epsilon * epsilon / (2.0 * v * v + 2.0 * c * epsilon / 3.0)).exp()
}

/// Ceiling for the auxiliary quadratic form: a union over the `d` matchings,
/// each a mean of `N` independent products bounded by `c = 1` with variance
/// at most `v = 1/4`, at deviation `ε / d`. Capped at 1.
pub fn auxiliary_tail_ceiling(epsilon: f64, d: usize, n: usize) -> f64 {
    (d as f64 * bernstein_bound(epsilon / d as f64, 1.0, 0.25, n)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonBernoulliCheck {
    pub alpha: f64,
    pub estimate: TailEstimate,
    /// `1 - exp(-N^{1-α})`.
    pub analytic: f64,
    pub within_ci: bool,
}

/// `1 - exp(-N^{1-α})`.
pub fn poisson_bernoulli_analytic(n: f64, alpha: f64) -> f64 {
    -(-(n.powf(1.0 - alpha))).exp_m1()
}

pub const MIN_POISSON_TRIALS: u64 = 10_000;

/// Monte Carlo of `P(Σ_{i ≤ M} Z_i ≥ 1)` with `M ~ Poisson(N)` and
/// `Z_i ~ Bernoulli(N^{-α})`. Given `M`, the number of successes is drawn as
/// `Binomial(M, N^{-α})`, which is the same law as `M` Bernoulli draws.
pub fn poisson_bernoulli_tail(
    n: usize,
    alpha: f64,
    trials: u64,
    confidence: f64,
    rng: &mut SimRng,
) -> Result<PoissonBernoulliCheck> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    if trials < MIN_POISSON_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_POISSON_TRIALS} trials, got {trials}"
        )));
    }
    let nf = n as f64;
    let p = nf.powf(-alpha);
    let poisson = Poisson::new(nf).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut hits = 0u64;
    for _ in 0..trials {
        let m = poisson.sample(rng) as u64;
        if m == 0 {
            continue;
        }
        let successes = Binomial::new(m, p)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        hits += (successes > 0) as u64;
    }
    let estimate = TailEstimate::from_counts(0.0, n, hits, trials, confidence);
    let analytic = poisson_bernoulli_analytic(nf, alpha);
    Ok(PoissonBernoulliCheck {
        alpha,
        estimate,
        analytic,
        within_ci: estimate.contains(analytic),
    })
}

/// `X̃_mᵀ A X̃_l / N` for one auxiliary draw.
pub fn auxiliary_quadratic_form(col_m: &[bool], col_l: &[bool], graph: &RegularBipartiteGraph) -> f64 {
    let mut total = 0u64;
    for &(a, b) in graph.matchings().iter().flatten() {
        let (a, b) = (a as usize, b as usize);
        total += (col_m[a] && col_l[b]) as u64 + (col_m[b] && col_l[a]) as u64;
    }
    total as f64 / graph.num_nodes() as f64
}

/// Monte Carlo of `P(|X̃_mᵀ A X̃_l / N - d α_m α_l| > ε)` where `α = counts / N`.
/// Only columns `m` and `l` are drawn (column `m` first).
pub fn auxiliary_tail_estimate(
    counts: &[usize],
    graph: &RegularBipartiteGraph,
    pair: (usize, usize),
    epsilon: f64,
    trials: u64,
    confidence: f64,
    rng: &mut SimRng,
) -> Result<TailEstimate> {
    let n = graph.num_nodes();
    if counts.iter().sum::<usize>() != n {
        return Err(Error::InvalidArgument(format!(
            "counts {counts:?} do not sum to N = {n}"
        )));
    }
    let (m, l) = pair;
    if m >= counts.len() || l >= counts.len() {
        return Err(Error::InvalidArgument(format!("pair {pair:?} outside the state space")));
    }
    let mean = graph.degree() as f64 * counts[m] as f64 * counts[l] as f64 / (n * n) as f64;
    let mut hits = 0u64;
    for _ in 0..trials {
        let cm = sample_auxiliary_column(counts[m], n, rng);
        let q = if m == l {
            auxiliary_quadratic_form(&cm, &cm, graph)
        } else {
            let cl = sample_auxiliary_column(counts[l], n, rng);
            auxiliary_quadratic_form(&cm, &cl, graph)
        };
        hits += ((q - mean).abs() > epsilon) as u64;
    }
    Ok(TailEstimate::from_counts(epsilon, n, hits, trials, confidence))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailDecay {
    pub estimates: Vec<TailEstimate>,
    pub ceilings: Vec<f64>,
    /// Least squares of `ln p̂` on `N`; `None` if some estimate is zero.
    pub fit: Option<LinearFit>,
}

impl TailDecay {
    pub fn strictly_decreasing(&self) -> bool {
        self.estimates.windows(2).all(|w| w[1].p_hat < w[0].p_hat)
    }
}

/// Auxiliary tail over an `N` grid at fixed fractions; fits the log-tail slope.
#[allow(clippy::too_many_arguments)]
pub fn auxiliary_tail_decay(
    fractions: &[f64],
    pair: (usize, usize),
    degree: usize,
    graph_seed: u64,
    epsilon: f64,
    ns: &[usize],
    trials: u64,
    confidence: f64,
    seed: u64,
) -> Result<TailDecay> {
    let results = ns
        .par_iter()
        .map(|&n| -> Result<(TailEstimate, f64)> {
            let graph = RegularBipartiteGraph::generate(n, degree, graph_seed)?;
            let counts = crate::microsim::counts_from_fractions(fractions, n);
            let mut rng = SimRng::new(crate::rng::hash64(seed, n as u64, 0));
            let est = auxiliary_tail_estimate(&counts, &graph, pair, epsilon, trials, confidence, &mut rng)?;
            Ok((est, auxiliary_tail_ceiling(epsilon, degree, n)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (estimates, ceilings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let fit = if estimates.iter().all(|e| e.p_hat > 0.0) {
        let xs: Vec<f64> = estimates.iter().map(|e| e.n as f64).collect();
        let ys: Vec<f64> = estimates.iter().map(|e| e.p_hat.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    Ok(TailDecay {
        estimates,
        ceilings,
        fit,
    })
}

/// `sup_{[0,T]} |R_{ml}|` for one run, or the max over all pairs when `pair` is `None`.
/// The gap changes only at events, so the sup over every post-event snapshot is exact.
pub fn sup_gap(
    config: &EnsembleConfig<'_>,
    graph: &RegularBipartiteGraph,
    key: &crate::ensemble::RunKey,
    pair: Option<(usize, usize)>,
) -> Result<f64> {
    let opts = SimOptions {
        shuffle_on: config.shuffle_on,
        record_events: false,
        snapshot_stride: Some(1),
    };
    let init = key.initial_state(config.initial);
    let run = simulate_optimized(config.spec, graph, &init, config.horizon, key.run_seed, opts)?;
    let series = gap_series(run.snapshots.as_ref().expect("snapshots requested"), graph, config.degree as f64)?;
    Ok(match pair {
        Some((m, l)) => series.sup_abs(m, l),
        None => series.sup_abs_all(),
    })
}

/// For each `N`, the fraction of seeds whose trajectory has `sup |R| > ε`.
pub fn sup_gap_concentration(
    config: &EnsembleConfig<'_>,
    ns: &[usize],
    epsilon: f64,
    pair: Option<(usize, usize)>,
    confidence: f64,
) -> Result<Vec<TailEstimate>> {
    sup_gap_concentration_multi(config, ns, &[epsilon], pair, confidence)
}

/// As [`sup_gap_concentration`] for several thresholds from the same runs;
/// results are ordered by `N`, then by threshold.
pub fn sup_gap_concentration_multi(
    config: &EnsembleConfig<'_>,
    ns: &[usize],
    epsilons: &[f64],
    pair: Option<(usize, usize)>,
    confidence: f64,
) -> Result<Vec<TailEstimate>> {
    let mut out = Vec::new();
    for &n in ns {
        let graph = RegularBipartiteGraph::generate(n, config.degree, config.graph_seed)?;
        let keys = run_keys(config.base_seed, &[n], config.seed_indices);
        let sups = par_map(&keys, |key| sup_gap(config, &graph, key, pair))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for &eps in epsilons {
            let hits = sups.iter().filter(|&&s| s > eps).count() as u64;
            out.push(TailEstimate::from_counts(eps, n, hits, sups.len() as u64, confidence));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::ShuffleOn;
    use crate::model::ModelSpec;

    #[test]
    fn bernstein_limits_and_value() {
        assert!(bernstein_bound(1e6, 1.0, 0.25, 10) < 1e-300);
        assert_eq!(bernstein_bound(0.1, 1.0, 0.25, 0), 2.0);
        let expected = 2.0 * (-1000.0 * 0.01 / (0.125 + 0.2 / 3.0f64)).exp();
        assert!((bernstein_bound(0.1, 1.0, 0.25, 1000) - expected).abs() <= 1e-15 * expected);
        // exponent ≈ 52.17
        assert!(((expected / 2.0).ln() + 52.1739).abs() < 1e-3);
        assert_eq!(auxiliary_tail_ceiling(0.05, 2, 0), 1.0);
    }

    #[test]
    fn poisson_analytic_values() {
        assert!((poisson_bernoulli_analytic(100.0, 2.0) - 0.009_950_166).abs() < 1e-9);
        assert!((poisson_bernoulli_analytic(1e6, 1.5) - 0.000_999_500_2).abs() < 1e-10);
        assert!(poisson_bernoulli_analytic(10.0, 80.0) < 1e-70);
    }

    #[test]
    fn poisson_rejects_alpha_at_most_one() {
        let mut rng = SimRng::new(0);
        assert!(poisson_bernoulli_tail(100, 1.0, 20_000, 0.99, &mut rng).is_err());
        assert!(poisson_bernoulli_tail(100, 2.0, 10, 0.99, &mut rng).is_err());
    }

    #[test]
    fn poisson_mc_matches_closed_form() {
        let mut rng = SimRng::new(11);
        let check = poisson_bernoulli_tail(100, 2.0, 50_000, 0.99, &mut rng).unwrap();
        assert!(check.within_ci, "{check:?}");
    }

    #[test]
    fn large_epsilon_tails_are_zero() {
        let g = RegularBipartiteGraph::generate(20, 2, 1).unwrap();
        let mut rng = SimRng::new(2);
        let est = auxiliary_tail_estimate(&[10, 10], &g, (0, 1), 2.5, 500, 0.99, &mut rng).unwrap();
        assert_eq!(est.hits, 0);

        let spec = ModelSpec::sis(1.0).unwrap();
        let seeds: Vec<u64> = (0..20).collect();
        let cfg = EnsembleConfig {
            spec: &spec,
            degree: 2,
            graph_seed: 1,
            initial: &[0.1, 0.9],
            horizon: 5.0,
            base_seed: 3,
            seed_indices: &seeds,
            shuffle_on: ShuffleOn::EveryEvent,
        };
        let est = sup_gap_concentration(&cfg, &[20, 40], 2.01, None, 0.99).unwrap();
        assert!(est.iter().all(|e| e.hits == 0 && e.p_hat == 0.0));
    }
}
