//! The invariant suite behind `rewire verify`, at desk scale.
//!
//! Each check records pass/fail and the measured value. Checks that need a
//! valid model are skipped (and the suite fails) when the configured model
//! violates an invariant.

use std::path::Path;

use rayon::prelude::*;

use crate::diagnostics::continuity::{modulus_of_continuity, StepPath};
use crate::diagnostics::gap::{gap_values, pair_counts};
use crate::diagnostics::martingale::{martingale_residual, pathwise_identity_error, MartingaleMoments};
use crate::diagnostics::stats::{chi_square_uniform, z_score};
use crate::diagnostics::tails::{auxiliary_tail_estimate, poisson_bernoulli_tail, MIN_POISSON_TRIALS};
use crate::ensemble::{par_map, run_keys, RunKey};
use crate::error::Result;
use crate::fluid::{integrate, logistic_oracle, vector_field, BOUNDARY_TOL};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::{create_dir, write_csv, CheckRecord, CheckStatus, RunManifest, Schema};
use crate::harness::runs::in_pool;
use crate::microsim::{
    couple_to_counts, simulate, simulate_optimized, MicroState, SimOptions, SimOutput,
};
use crate::model::{derive_increment_tensor, validate_model, ModelSpec, UpdateRule};
use crate::network::{decompose_matchings, shuffle_states, RegularBipartiteGraph};
use crate::rng::{hash64, substream, SimRng};

const SIGNIFICANCE: f64 = 1e-3;
/// Largest `N` used by the martingale check.
const MARTINGALE_MAX_N: usize = 1000;

fn attempt<F>(name: &str, f: F) -> CheckRecord
where
    F: FnOnce() -> Result<(bool, String)>,
{
    match f() {
        Ok((passed, detail)) => CheckRecord::new(name, passed, detail),
        Err(e) => CheckRecord::new(name, false, format!("error: {e}")),
    }
}

/// Runs the suite, writes `verify.csv` and the manifest under `<root>/verify/`.
/// The manifest's status is `check_failed` when any check fails.
pub fn run_verify(config: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let spec = config.model_spec_unchecked()?;
    let dir = root.join("verify");
    create_dir(&dir)?;
    let mut manifest = RunManifest::new("verify", config.config_hash()?);
    let mut checks = model_checks(&spec, config.run.base_seed);
    let model_ok = checks[0].status == CheckStatus::Pass;
    checks.extend(network_checks(config));
    if model_ok {
        let samples = in_pool(config, || Ok(sample_runs(config, &spec)))?;
        checks.extend(microsim_checks(config, &spec, &samples));
        checks.extend(fluid_checks(config, &spec));
        checks.extend(diagnostics_checks(config, &spec, &samples));
    } else {
        for name in ["microsim", "fluid", "diagnostics"] {
            checks.push(CheckRecord::skip(name, "model invariants violated"));
        }
    }
    checks.extend(in_pool(config, || Ok(poisson_checks(config)))?);
    checks.extend(harness_checks(config, &spec));
    checks.extend(in_pool(config, || Ok(martingale_checks(config, &spec, model_ok)))?);
    if checks.iter().any(|c| c.status == CheckStatus::Skip) {
        checks.push(CheckRecord::new("verify.complete", false, "some checks could not run"));
    }

    let rows = checks.iter().map(|c| {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skip => "skip",
        };
        vec![c.name.clone(), status.to_string(), c.detail.clone()]
    });
    manifest
        .files
        .push(write_csv(&dir, "verify.csv", Schema::Verify, spec.num_states(), rows)?);
    manifest.checks = checks;
    manifest.finish(&dir)
}

fn random_rule(k: usize, rng: &mut SimRng) -> UpdateRule {
    UpdateRule::from_fn(k, |_, _| (rng.index(k), rng.index(k))).expect("outputs in range")
}

fn random_spec(rng: &mut SimRng) -> ModelSpec {
    let k = 1 + rng.index(4);
    let rule = random_rule(k, rng);
    let gamma = (0..k).map(|_| (0..k).map(|_| rng.uniform()).collect()).collect();
    ModelSpec::new(gamma, rule).expect("random spec is valid")
}

fn model_checks(spec: &ModelSpec, seed: u64) -> Vec<CheckRecord> {
    let report = validate_model(spec);
    let invariants = CheckRecord::new(
        "model.invariants",
        report.is_pass(),
        if report.is_pass() {
            format!("K = {}, increments in -2..=2, c_kk(k) <= 0, conserving, rates >= 0", spec.num_states())
        } else {
            report.violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
        },
    );
    let idempotent = attempt("model.derivation_idempotent", || {
        let k = spec.num_states();
        let a = derive_increment_tensor(k, |m, l| spec.update().apply(m, l))?;
        let b = derive_increment_tensor(k, |m, l| spec.update().apply(m, l))?;
        Ok((a == b, "re-derivation from G gives the same tensor".into()))
    });
    let random = attempt("model.random_rules", || {
        let mut rng = SimRng::new(substream(seed, 0x30DE1));
        let trials = 500;
        let mut bad = 0;
        for _ in 0..trials {
            let k = 1 + rng.index(4);
            let rule = random_rule(k, &mut rng);
            let c = derive_increment_tensor(k, |m, l| rule.apply(m, l))?;
            for m in 0..k {
                for l in 0..k {
                    let sum: i32 = c.pair(m, l).iter().map(|&v| v as i32).sum();
                    if sum != 0 {
                        bad += 1;
                    }
                }
                if c.get(m, m, m) > 0 {
                    bad += 1;
                }
            }
        }
        Ok((bad == 0, format!("{trials} random rules with K <= 4, {bad} violations")))
    });
    vec![invariants, idempotent, random]
}

fn permutation_rank(p: &[u8]) -> usize {
    // Lehmer code.
    let mut rank = 0;
    for i in 0..p.len() {
        let smaller = p[i + 1..].iter().filter(|&&x| x < p[i]).count();
        rank = rank * (p.len() - i) + smaller;
    }
    rank
}

fn network_checks(config: &ExperimentConfig) -> Vec<CheckRecord> {
    let mut out: Vec<CheckRecord> = config
        .sizes()
        .into_iter()
        .map(|n| {
            attempt(&format!("network.graph N={n}"), || {
                let g = RegularBipartiteGraph::generate(n, config.graph.d, config.graph.graph_seed)?;
                g.validate()?;
                let back = RegularBipartiteGraph::from_matchings_unchecked(n, decompose_matchings(&g)?);
                let same = back.edge_set() == g.edge_set();
                Ok((
                    same && g.edge_set().len() == n * config.graph.d / 2,
                    format!("{} undirected edges, d = {}, decomposition round-trips: {same}", g.edge_set().len(), g.degree()),
                ))
            })
        })
        .collect();
    out.push(attempt("network.shuffle_uniform", || {
        let mut rng = SimRng::new(substream(config.run.base_seed, 0x5AFF));
        let mut counts = vec![0u64; 24];
        for _ in 0..48_000 {
            let mut p = [0u8, 1, 2, 3];
            shuffle_states(&mut p, &mut rng);
            counts[permutation_rank(&p)] += 1;
        }
        let chi = chi_square_uniform(&counts);
        Ok((chi.passes(SIGNIFICANCE), format!("24 permutations of 4, chi2 = {:.2}, p = {:.4}", chi.statistic, chi.p_value)))
    }));
    out
}

struct Sample {
    graph: RegularBipartiteGraph,
    runs: Vec<SimOutput>,
}

/// Full-resolution runs at the smallest configured `N`.
fn sample_runs(config: &ExperimentConfig, spec: &ModelSpec) -> Result<Sample> {
    let n = config.sizes()[0];
    let graph = RegularBipartiteGraph::generate(n, config.graph.d, config.graph.graph_seed)?;
    let seeds: Vec<u64> = config.seed_indices().into_iter().take(5).collect();
    let keys = run_keys(config.run.base_seed, &[n], &seeds);
    let options = SimOptions {
        shuffle_on: config.run.shuffle_on,
        ..SimOptions::full()
    };
    let runs = par_map(&keys, |key: &RunKey| {
        let init = key.initial_state(&config.run.initial);
        simulate_optimized(spec, &graph, &init, config.run.horizon, key.run_seed, options)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Sample { graph, runs })
}

fn with_samples<F>(name: &str, samples: &Result<Sample>, f: F) -> CheckRecord
where
    F: FnOnce(&Sample) -> Result<(bool, String)>,
{
    match samples {
        Ok(s) => attempt(name, || f(s)),
        Err(e) => CheckRecord::new(name, false, format!("error: {e}")),
    }
}

fn microsim_checks(config: &ExperimentConfig, spec: &ModelSpec, samples: &Result<Sample>) -> Vec<CheckRecord> {
    let k = spec.num_states();
    let mut out = Vec::new();
    out.push(with_samples("microsim.count_conservation", samples, |s| {
        let n = s.graph.num_nodes() as u64;
        let mut rows = 0;
        let mut bad = 0;
        for run in &s.runs {
            for r in 0..run.trajectory.len() {
                rows += 1;
                let total: u64 = run.trajectory.counts_at(r).iter().map(|&c| c as u64).sum();
                bad += (total != n) as usize;
            }
        }
        Ok((bad == 0, format!("{rows} rows at N = {n}, {bad} with sum != N")))
    }));
    out.push(with_samples("microsim.increments_match_tensor", samples, |s| {
        let mut events = 0;
        let mut bad = 0;
        for run in &s.runs {
            let log = run.events.as_ref().expect("events recorded");
            for (e, ev) in log.iter().enumerate() {
                events += 1;
                let before = run.trajectory.counts_at(e);
                let after = run.trajectory.counts_at(e + 1);
                let c = spec.increments().pair(ev.pre.0 as usize, ev.pre.1 as usize);
                bad += (0..k).any(|j| after[j] as i64 - before[j] as i64 != c[j] as i64) as usize;
            }
        }
        Ok((bad == 0, format!("{events} events, {bad} mismatches")))
    }));
    out.push(attempt("microsim.naive_equals_optimized", || {
        let mut rng = SimRng::new(substream(config.run.base_seed, 0xEE01));
        let instances = 20;
        let mut differ = 0;
        for i in 0..instances {
            let n = 2 * (2 + rng.index(24));
            let d = 1 + rng.index(n / 2);
            let g = RegularBipartiteGraph::generate(n, d, i)?;
            let labels: Vec<usize> = (0..n).map(|_| 1 + rng.index(k)).collect();
            let init = MicroState::from_labels(k, &labels)?;
            let seed = hash64(config.run.base_seed, n as u64, i);
            let options = SimOptions {
                shuffle_on: config.run.shuffle_on,
                ..SimOptions::full()
            };
            let horizon = config.run.horizon.min(5.0);
            let a = simulate(spec, &g, &init, horizon, seed, options)?;
            let b = simulate_optimized(spec, &g, &init, horizon, seed, options)?;
            differ += (a != b) as usize;
        }
        Ok((differ == 0, format!("{instances} instances with N <= 50, {differ} differ")))
    }));
    out.push(attempt("microsim.post_shuffle_uniform", || {
        // SIS on the 4-cycle from one infected node: after the first event
        // two nodes are infected and all C(4, 2) arrangements are equally likely.
        let sis = ModelSpec::sis(1.0)?;
        let g = RegularBipartiteGraph::generate(4, 2, config.graph.graph_seed)?;
        let init = MicroState::from_counts(&[1, 3]);
        let mut counts = [0u64; 16];
        for seed in 0..12_000u64 {
            let run = simulate_optimized(
                &sis,
                &g,
                &init,
                1e3,
                hash64(config.run.base_seed, 4, seed),
                SimOptions {
                    snapshot_stride: Some(1),
                    ..SimOptions::default()
                },
            )?;
            let snap = &run.snapshots.as_ref().expect("snapshots").states[1];
            let mask = snap.iter().enumerate().fold(0, |acc, (i, &s)| acc | (((s == 0) as usize) << i));
            counts[mask] += 1;
        }
        let observed: Vec<u64> = (0..16usize)
            .filter(|m| m.count_ones() == 2)
            .map(|m| counts[m])
            .collect();
        let chi = chi_square_uniform(&observed);
        Ok((chi.passes(SIGNIFICANCE), format!("6 arrangements, chi2 = {:.2}, p = {:.4}", chi.statistic, chi.p_value)))
    }));
    out.push(attempt("microsim.coupling_exact", || {
        let mut rng = SimRng::new(substream(config.run.base_seed, 0xC0DE));
        let mut bad = 0;
        for _ in 0..1000 {
            let n = 1 + rng.index(60);
            let col: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            let target = rng.index(n + 1);
            bad += (couple_to_counts(&col, target, &mut rng).iter().filter(|&&x| x).count() != target) as usize;
        }
        Ok((bad == 0, format!("1000 random columns, {bad} off target")))
    }));
    out
}

fn path_within_bounds(path: &crate::fluid::FluidPath) -> (f64, f64) {
    let mut worst_sum: f64 = 0.0;
    let mut worst_out: f64 = 0.0;
    for i in 0..path.len() {
        let y = path.state(i);
        worst_sum = worst_sum.max((y.iter().sum::<f64>() - 1.0).abs());
        for &v in y {
            worst_out = worst_out.max(-v).max(v - 1.0);
        }
    }
    (worst_sum, worst_out)
}

fn fluid_checks(config: &ExperimentConfig, spec: &ModelSpec) -> Vec<CheckRecord> {
    let d = config.fluid_degree();
    let horizon = config.run.horizon;
    let step = config.fluid_step();
    let mut out = Vec::new();
    out.push(attempt("fluid.simplex_hypercube", || {
        let path = integrate(spec, d, &config.run.initial, horizon, step)?;
        let (sum, outside) = path_within_bounds(&path);
        Ok((
            sum <= BOUNDARY_TOL && outside <= BOUNDARY_TOL,
            format!("configured model: max |sum - 1| = {sum:.2e}, max excursion {outside:.2e}"),
        ))
    }));
    out.push(attempt("fluid.random_models", || {
        let mut rng = SimRng::new(substream(config.run.base_seed, 0xF1D));
        let mut worst_sum: f64 = 0.0;
        let mut worst_out: f64 = 0.0;
        for _ in 0..30 {
            let s = random_spec(&mut rng);
            let mut y0: Vec<f64> = (0..s.num_states()).map(|_| rng.uniform() + 1e-3).collect();
            let total: f64 = y0.iter().sum();
            y0.iter_mut().for_each(|v| *v /= total);
            let path = integrate(&s, 2.0, &y0, 10.0, 1e-2)?;
            let (a, b) = path_within_bounds(&path);
            worst_sum = worst_sum.max(a);
            worst_out = worst_out.max(b);
        }
        Ok((
            worst_sum <= BOUNDARY_TOL && worst_out <= BOUNDARY_TOL,
            format!("30 random models, T = 10: max |sum - 1| = {worst_sum:.2e}, max excursion {worst_out:.2e}"),
        ))
    }));
    let logistic_error = |h: f64| -> Result<f64> {
        let sis = ModelSpec::sis(1.0)?;
        let path = integrate(&sis, 2.0, &[0.1, 0.9], 10.0, h)?;
        Ok((0..path.len())
            .map(|i| (path.state(i)[0] - logistic_oracle(0.1, 2.0, 1.0, path.times()[i])).abs())
            .fold(0.0, f64::max))
    };
    out.push(attempt("fluid.logistic_oracle", || {
        let e = logistic_error(1e-3)?;
        Ok((e <= 1e-8, format!("SIS d = 2, step 1e-3, T = 10: max error {e:.2e}")))
    }));
    out.push(attempt("fluid.rk4_order", || {
        let (e1, e2) = (logistic_error(0.04)?, logistic_error(0.02)?);
        let order = (e1 / e2).log2();
        Ok((order >= 3.7, format!("errors {e1:.3e} -> {e2:.3e}, order {order:.3}")))
    }));
    out.push(attempt("fluid.vector_field_consistency", || {
        let path = integrate(spec, d, &config.run.initial, horizon, step)?;
        let mut worst: f64 = 0.0;
        for i in (1..path.len() - 1).step_by((path.len() / 50).max(1)) {
            let f = vector_field(spec, d, path.state(i));
            let h = path.times()[i + 1] - path.times()[i - 1];
            for (s, fs) in f.iter().enumerate() {
                let fd = (path.state(i + 1)[s] - path.state(i - 1)[s]) / h;
                worst = worst.max((fd - fs).abs());
            }
        }
        let tol = (10.0 * step * step).max(1e-4);
        Ok((worst <= tol, format!("max |central difference - f| = {worst:.2e} (tol {tol:.1e})")))
    }));
    out
}

fn diagnostics_checks(config: &ExperimentConfig, spec: &ModelSpec, samples: &Result<Sample>) -> Vec<CheckRecord> {
    let k = spec.num_states();
    let d = config.graph.d as f64;
    let mut out = Vec::new();
    out.push(with_samples("diagnostics.gap_bound_symmetry", samples, |s| {
        let mut snaps = 0;
        let mut asym = 0;
        let mut worst: f64 = 0.0;
        for run in &s.runs {
            for st in &run.snapshots.as_ref().expect("snapshots").states {
                snaps += 1;
                let pc = pair_counts(st, &s.graph, k);
                asym += (0..k).any(|m| (0..k).any(|l| pc[m * k + l] != pc[l * k + m])) as usize;
                worst = worst.max(gap_values(st, &s.graph, k, d).iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
        }
        Ok((
            asym == 0 && worst <= d,
            format!("{snaps} snapshots, {asym} asymmetric, max |R| = {worst:.4} <= d = {d}"),
        ))
    }));
    out.push(with_samples("diagnostics.pathwise_identity", samples, |s| {
        let mut worst: f64 = 0.0;
        let mut start: f64 = 0.0;
        for run in &s.runs {
            worst = worst.max(pathwise_identity_error(run, spec, &s.graph)?);
            start = start.max(martingale_residual(run, spec, &s.graph)?.residual_at(0).iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        Ok((
            worst <= 1e-12 && start == 0.0,
            format!("max reconstruction error {worst:.2e}, |M(0)| = {start}"),
        ))
    }));
    out.push(with_samples("diagnostics.modulus_monotone", samples, |s| {
        let deltas = [2.0f64, 1.0, 0.5, 0.25, 0.1, 0.05, 0.01];
        let horizon = config.run.horizon;
        let mut ok = true;
        let mut last = Vec::new();
        for run in &s.runs {
            let path = StepPath::from_fraction(&run.trajectory, 0);
            let w: Vec<f64> = deltas
                .iter()
                .map(|&dl| modulus_of_continuity(&path, dl.min(horizon), horizon))
                .collect::<Result<_>>()?;
            ok &= w.windows(2).all(|p| p[1] <= p[0]);
            last = w;
        }
        Ok((ok, format!("omega(Ybar_1, delta) on delta = {deltas:?}: {last:.4?}")))
    }));
    out.push(with_samples("diagnostics.tail_beyond_d", samples, |s| {
        let n = s.graph.num_nodes();
        let counts = crate::microsim::counts_from_fractions(&config.run.initial, n);
        let mut rng = SimRng::new(substream(config.run.base_seed, 0x7A11));
        let pair = config.pair().unwrap_or((0, 1.min(k - 1)));
        let est = auxiliary_tail_estimate(&counts, &s.graph, pair, d + 1e-9, 2000, config.diagnostics.confidence, &mut rng)?;
        let gap_sup = s
            .runs
            .iter()
            .flat_map(|r| r.snapshots.as_ref().expect("snapshots").states.iter())
            .map(|st| gap_values(st, &s.graph, k, d).iter().map(|v| v.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        Ok((
            est.hits == 0 && gap_sup <= d,
            format!("epsilon > d: auxiliary hits {} of {}, gap sup {gap_sup:.4}", est.hits, est.trials),
        ))
    }));
    out
}

fn poisson_checks(config: &ExperimentConfig) -> Vec<CheckRecord> {
    let trials = config.diagnostics.trials.max(MIN_POISSON_TRIALS);
    config
        .diagnostics
        .poisson
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            attempt(&format!("diagnostics.poisson N={} alpha={}", case.n, case.alpha), || {
                let mut rng = SimRng::new(hash64(config.run.base_seed, case.n as u64, i as u64));
                let c = poisson_bernoulli_tail(case.n, case.alpha, trials, config.diagnostics.confidence, &mut rng)?;
                Ok((
                    c.within_ci,
                    format!(
                        "{trials} trials: p_hat {:.4e}, CI [{:.4e}, {:.4e}], analytic {:.4e}",
                        c.estimate.p_hat, c.estimate.ci_low, c.estimate.ci_high, c.analytic
                    ),
                ))
            })
        })
        .collect()
}

fn harness_checks(config: &ExperimentConfig, spec: &ModelSpec) -> Vec<CheckRecord> {
    let round_trip = attempt("harness.config_round_trip", || {
        let text = config.to_toml_string()?;
        let back = ExperimentConfig::from_toml_str(&text, &[])?;
        Ok((&back == config, format!("{} bytes of TOML", text.len())))
    });
    // An invalid tensor does not affect the simulator, but use SIS to keep
    // this check independent of the model check.
    let workers = attempt("harness.worker_independence", || {
        if validate_model(spec).is_pass() {
            worker_runs_match(config, spec)
        } else {
            worker_runs_match(config, &ModelSpec::sis(1.0)?)
        }
    });
    vec![round_trip, workers]
}

fn worker_runs_match(config: &ExperimentConfig, spec: &ModelSpec) -> Result<(bool, String)> {
    let n = config.sizes()[0];
    let k = spec.num_states();
    let graph = RegularBipartiteGraph::generate(n, config.graph.d, config.graph.graph_seed)?;
    let seeds: Vec<u64> = config.seed_indices().into_iter().take(8).collect();
    let keys = run_keys(config.run.base_seed, &[n], &seeds);
    let initial = if config.run.initial.len() == k {
        config.run.initial.clone()
    } else {
        std::iter::once(1.0).chain(std::iter::repeat(0.0)).take(k).collect()
    };
    let go = |workers: usize| -> Result<Vec<SimOutput>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
        pool.install(|| {
            par_map(&keys, |key| {
                let init = key.initial_state(&initial);
                simulate_optimized(spec, &graph, &init, config.run.horizon, key.run_seed, SimOptions::default())
            })
            .into_iter()
            .collect()
        })
    };
    let (one, four) = (go(1)?, go(4)?);
    Ok((one == four, format!("{} runs at N = {n}, 1 vs 4 workers identical: {}", keys.len(), one == four)))
}

fn martingale_checks(config: &ExperimentConfig, spec: &ModelSpec, model_ok: bool) -> Vec<CheckRecord> {
    if !model_ok {
        return vec![CheckRecord::skip("diagnostics.martingale_ceiling", "model invariants violated")];
    }
    let mut ns: Vec<usize> = config.sizes().into_iter().filter(|&n| n <= MARTINGALE_MAX_N).collect();
    if ns.is_empty() {
        ns.push(config.sizes()[0]);
    }
    let z = z_score(config.diagnostics.confidence);
    let d = config.graph.d as f64;
    ns.into_iter()
        .map(|n| {
            attempt(&format!("diagnostics.martingale_ceiling N={n}"), || {
                let graph = RegularBipartiteGraph::generate(n, d as usize, config.graph.graph_seed)?;
                let keys = run_keys(config.run.base_seed, &[n], &config.seed_indices());
                let terminal = par_map(&keys, |key| -> Result<Vec<f64>> {
                    let init = key.initial_state(&config.run.initial);
                    let run = simulate_optimized(
                        spec,
                        &graph,
                        &init,
                        config.run.horizon,
                        key.run_seed,
                        crate::diagnostics::martingale::residual_options(config.run.shuffle_on),
                    )?;
                    Ok(martingale_residual(&run, spec, &graph)?.terminal().to_vec())
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                let m = MartingaleMoments::from_terminal(spec, d, config.run.horizon, n, terminal);
                let worst = (0..spec.num_states()).map(|s| m.upper(s, z)).fold(0.0, f64::max);
                Ok((
                    worst <= m.ceiling,
                    format!("{} runs: max_k E[M_k^2] + z*se = {worst:.3e}, ceiling {:.3e}", m.runs, m.ceiling),
                ))
            })
        })
        .collect()
}
