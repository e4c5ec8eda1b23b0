//! One driver per CLI subcommand. Each writes its CSVs and a manifest into
//! `<root>/<command>/` and returns the manifest.
//!
//! Runs over `(N, seed)` go through a worker pool; every run owns its RNG
//! stream and output file, and results are gathered in `(N, seed)` order, so
//! output does not depend on the number of workers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::gap::gap_series;
use crate::diagnostics::martingale::{martingale_residual, residual_options, MartingaleMoments};
use crate::diagnostics::stats::{median, z_score};
use crate::diagnostics::tails::{auxiliary_tail_decay, poisson_bernoulli_tail, TailEstimate, MIN_POISSON_TRIALS};
use crate::diagnostics::continuity::compare_to_fluid;
use crate::ensemble::{par_map, run_keys, RunKey};
use crate::error::{Error, Result};
use crate::fluid::{integrate, FluidPath};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::{create_dir, fmt_f64, write_csv, CheckRecord, FileRecord, RunManifest, RunRecord, Schema};
use crate::microsim::{default_snapshot_stride, simulate_optimized, MacroTrajectory, SimOptions, SimOutput};
use crate::model::ModelSpec;
use crate::network::RegularBipartiteGraph;
use crate::rng::{hash64, SimRng};

/// Runs `f` on a pool of `run.workers` threads (rayon's default when unset).
pub fn in_pool<T, F>(config: &ExperimentConfig, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.run.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

struct Job {
    spec: ModelSpec,
    dir: PathBuf,
    manifest: RunManifest,
}

impl Job {
    fn start(config: &ExperimentConfig, root: &Path, command: &str) -> Result<Self> {
        let spec = config.model_spec()?;
        let dir = root.join(command);
        create_dir(&dir)?;
        Ok(Self {
            spec,
            dir,
            manifest: RunManifest::new(command, config.config_hash()?),
        })
    }

    fn add_runs(&mut self, runs: Vec<(RunRecord, Vec<FileRecord>)>) {
        for (run, files) in runs {
            self.manifest.runs.push(run);
            self.manifest.files.extend(files);
        }
    }

    fn finish(self) -> Result<RunManifest> {
        self.manifest.finish(&self.dir)
    }
}

fn graphs(config: &ExperimentConfig) -> Result<BTreeMap<usize, RegularBipartiteGraph>> {
    config
        .sizes()
        .into_iter()
        .map(|n| Ok((n, RegularBipartiteGraph::generate(n, config.graph.d, config.graph.graph_seed)?)))
        .collect()
}

fn keys(config: &ExperimentConfig) -> Vec<RunKey> {
    run_keys(config.run.base_seed, &config.sizes(), &config.seed_indices())
}

/// Simulates one run and reports `(output, wall seconds)`.
fn simulate_run(
    config: &ExperimentConfig,
    spec: &ModelSpec,
    graph: &RegularBipartiteGraph,
    key: &RunKey,
    options: SimOptions,
) -> Result<(SimOutput, f64)> {
    let clock = Instant::now();
    let init = key.initial_state(&config.run.initial);
    let out = simulate_optimized(spec, graph, &init, config.run.horizon, key.run_seed, options)?;
    Ok((out, clock.elapsed().as_secs_f64()))
}

fn run_record(key: &RunKey, out: &SimOutput, wall: f64, files: &[&FileRecord]) -> RunRecord {
    RunRecord {
        n: key.n,
        seed: key.seed_index,
        run_seed: key.run_seed,
        events: out.trajectory.num_events(),
        wall_time_s: wall,
        files: files.iter().map(|f| f.path.clone()).collect(),
    }
}

pub fn trajectory_rows(traj: &MacroTrajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    let k = traj.num_states();
    (0..traj.len()).map(move |row| {
        let mut r = Vec::with_capacity(2 + 2 * k);
        r.push(fmt_f64(traj.times()[row]));
        r.push(row.to_string());
        r.extend(traj.counts_at(row).iter().map(|c| c.to_string()));
        r.extend((0..k).map(|s| fmt_f64(traj.fraction(row, s))));
        r
    })
}

pub fn fluid_rows(path: &FluidPath) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..path.len()).map(move |i| {
        std::iter::once(fmt_f64(path.times()[i]))
            .chain(path.state(i).iter().map(|&y| fmt_f64(y)))
            .collect()
    })
}

/// One trajectory CSV per `(N, seed)`. With `dump_graph`, also writes each
/// graph's 1-based edge list as `graph_N<N>.txt` (not part of the manifest).
pub fn run_simulate(config: &ExperimentConfig, root: &Path, dump_graph: bool) -> Result<RunManifest> {
    let mut job = Job::start(config, root, "simulate")?;
    let graphs = graphs(config)?;
    if dump_graph {
        for (n, g) in &graphs {
            let path = job.dir.join(format!("graph_N{n}.txt"));
            fs::write(&path, g.edge_list()).map_err(|e| Error::io(&path, e))?;
        }
    }
    let k = job.spec.num_states();
    let options = SimOptions {
        shuffle_on: config.run.shuffle_on,
        ..SimOptions::default()
    };
    let (spec, dir) = (&job.spec, &job.dir);
    let runs = in_pool(config, || {
        par_map(&keys(config), |key| {
            let (out, wall) = simulate_run(config, spec, &graphs[&key.n], key, options)?;
            let name = format!("traj_N{}_seed{}.csv", key.n, key.seed_index);
            let file = write_csv(dir, &name, Schema::Trajectory, k, trajectory_rows(&out.trajectory))?;
            Ok((run_record(key, &out, wall, &[&file]), vec![file]))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()
    })?;
    job.add_runs(runs);
    job.finish()
}

fn fluid_path(config: &ExperimentConfig, spec: &ModelSpec) -> Result<FluidPath> {
    integrate(
        spec,
        config.fluid_degree(),
        &config.run.initial,
        config.run.horizon,
        config.fluid_step(),
    )
}

/// `fluid.csv` with the RK4 solution from `run.initial` at every step.
pub fn run_fluid(config: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let mut job = Job::start(config, root, "fluid")?;
    let path = fluid_path(config, &job.spec)?;
    let k = job.spec.num_states();
    let file = write_csv(&job.dir, "fluid.csv", Schema::Fluid, k, fluid_rows(&path))?;
    job.manifest.files.push(file);
    job.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub n: usize,
    pub runs: usize,
    pub median: f64,
}

/// Sup-distance of every run to the fluid solution, plus medians by `N`.
pub fn run_compare(config: &ExperimentConfig, root: &Path) -> Result<(RunManifest, Vec<MedianRow>)> {
    let mut job = Job::start(config, root, "compare")?;
    let k = job.spec.num_states();
    let fluid = fluid_path(config, &job.spec)?;
    job.manifest
        .files
        .push(write_csv(&job.dir, "fluid.csv", Schema::Fluid, k, fluid_rows(&fluid))?);
    let graphs = graphs(config)?;
    let options = SimOptions {
        shuffle_on: config.run.shuffle_on,
        ..SimOptions::default()
    };
    let spec = &job.spec;
    let keys = keys(config);
    let results = in_pool(config, || {
        par_map(&keys, |key| {
            let (out, wall) = simulate_run(config, spec, &graphs[&key.n], key, options)?;
            let sup = compare_to_fluid(&out.trajectory, &fluid)?;
            Ok((run_record(key, &out, wall, &[]), sup))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<Vec<String>> = keys
        .iter()
        .zip(&results)
        .map(|(key, (_, sup))| vec![key.n.to_string(), key.seed_index.to_string(), fmt_f64(*sup)])
        .collect();
    job.manifest
        .files
        .push(write_csv(&job.dir, "compare.csv", Schema::Compare, k, rows)?);
    let medians: Vec<MedianRow> = config
        .sizes()
        .into_iter()
        .map(|n| {
            let sups: Vec<f64> = keys
                .iter()
                .zip(&results)
                .filter(|(key, _)| key.n == n)
                .map(|(_, (_, s))| *s)
                .collect();
            MedianRow {
                n,
                runs: sups.len(),
                median: median(&sups),
            }
        })
        .collect();
    let table = medians
        .iter()
        .map(|m| vec![m.n.to_string(), m.runs.to_string(), fmt_f64(m.median)]);
    job.manifest
        .files
        .push(write_csv(&job.dir, "compare_medians.csv", Schema::CompareMedians, k, table)?);
    job.add_runs(results.into_iter().map(|(r, _)| (r, Vec::new())).collect());
    Ok((job.finish()?, medians))
}

fn snapshot_options(config: &ExperimentConfig, n: usize) -> SimOptions {
    SimOptions {
        shuffle_on: config.run.shuffle_on,
        record_events: false,
        snapshot_stride: Some(config.run.snapshot_stride.unwrap_or_else(|| default_snapshot_stride(n))),
    }
}

/// One gap-process CSV per `(N, seed)`, sampled at the snapshot stride.
pub fn run_gap(config: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let mut job = Job::start(config, root, "gap")?;
    let k = job.spec.num_states();
    let graphs = graphs(config)?;
    let d = config.graph.d as f64;
    let (spec, dir) = (&job.spec, &job.dir);
    let runs = in_pool(config, || {
        par_map(&keys(config), |key| {
            let graph = &graphs[&key.n];
            let (out, wall) = simulate_run(config, spec, graph, key, snapshot_options(config, key.n))?;
            let series = gap_series(out.snapshots.as_ref().expect("snapshots requested"), graph, d)?;
            let rows = (0..series.len()).map(|r| {
                let mut row = vec![fmt_f64(series.times[r]), series.event_indices[r].to_string()];
                row.extend(series.values[r * k * k..(r + 1) * k * k].iter().map(|&v| fmt_f64(v)));
                row
            });
            let name = format!("gap_N{}_seed{}.csv", key.n, key.seed_index);
            let file = write_csv(dir, &name, Schema::Gap, k, rows)?;
            Ok((run_record(key, &out, wall, &[&file]), vec![file]))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()
    })?;
    job.add_runs(runs);
    job.finish()
}

/// Terminal martingale residuals per run, their second moments per `N`, and
/// checks against the `4 K² γ d T / N` ceiling and for decrease in `N`.
pub fn run_martingale(config: &ExperimentConfig, root: &Path) -> Result<(RunManifest, Vec<MartingaleMoments>)> {
    let mut job = Job::start(config, root, "martingale")?;
    let k = job.spec.num_states();
    let graphs = graphs(config)?;
    let spec = &job.spec;
    let keys = keys(config);
    let results = in_pool(config, || {
        par_map(&keys, |key| {
            let graph = &graphs[&key.n];
            let (out, wall) = simulate_run(config, spec, graph, key, residual_options(config.run.shuffle_on))?;
            let terminal = martingale_residual(&out, spec, graph)?.terminal().to_vec();
            Ok((run_record(key, &out, wall, &[]), terminal))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<Vec<String>> = keys
        .iter()
        .zip(&results)
        .map(|(key, (_, m))| {
            let mut row = vec![key.n.to_string(), key.seed_index.to_string()];
            row.extend(m.iter().map(|&v| fmt_f64(v)));
            row
        })
        .collect();
    job.manifest
        .files
        .push(write_csv(&job.dir, "martingale_runs.csv", Schema::MartingaleRuns, k, rows)?);

    let z = z_score(config.diagnostics.confidence);
    let d = config.graph.d as f64;
    let moments: Vec<MartingaleMoments> = config
        .sizes()
        .into_iter()
        .map(|n| {
            let terminal = keys
                .iter()
                .zip(&results)
                .filter(|(key, _)| key.n == n)
                .map(|(_, (_, m))| m.clone())
                .collect();
            MartingaleMoments::from_terminal(spec, d, config.run.horizon, n, terminal)
        })
        .collect();
    let mut summary = Vec::new();
    for m in &moments {
        for s in 0..k {
            let upper = m.upper(s, z);
            summary.push(vec![
                m.n.to_string(),
                (s + 1).to_string(),
                m.runs.to_string(),
                fmt_f64(m.second_moment[s]),
                fmt_f64(m.std_err[s]),
                fmt_f64(upper),
                fmt_f64(m.ceiling),
            ]);
            job.manifest.checks.push(CheckRecord::new(
                format!("martingale.ceiling N={} state={}", m.n, s + 1),
                upper <= m.ceiling,
                format!("E[M^2] + z*se = {upper:.3e}, ceiling {:.3e}", m.ceiling),
            ));
        }
    }
    if moments.len() > 1 {
        for s in 0..k {
            let series: Vec<f64> = moments.iter().map(|m| m.second_moment[s]).collect();
            job.manifest.checks.push(CheckRecord::new(
                format!("martingale.decreasing state={}", s + 1),
                series.windows(2).all(|w| w[1] < w[0]),
                format!(
                    "E[M^2] by N: {}",
                    series.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
                ),
            ));
        }
    }
    job.manifest.files.push(write_csv(
        &job.dir,
        "martingale_summary.csv",
        Schema::MartingaleSummary,
        k,
        summary,
    )?);
    job.add_runs(results.into_iter().map(|(r, _)| (r, Vec::new())).collect());
    Ok((job.finish()?, moments))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub sup_gap: Vec<TailEstimate>,
    pub auxiliary: Vec<(TailEstimate, f64)>,
}

/// Concentration sweep over the `N` grid: the fraction of runs whose gap
/// process exceeds each `ε` somewhere on `[0, T]`, and the auxiliary-process
/// tail at the initial fractions against its Bernstein ceiling, with the
/// log-tail regression on `N`.
pub fn run_sweep(config: &ExperimentConfig, root: &Path) -> Result<(RunManifest, SweepSummary)> {
    let mut job = Job::start(config, root, "sweep")?;
    let k = job.spec.num_states();
    let graphs = graphs(config)?;
    let d = config.graph.d as f64;
    let pair = config.pair();
    let spec = &job.spec;
    let keys = keys(config);
    let results = in_pool(config, || {
        par_map(&keys, |key| {
            let graph = &graphs[&key.n];
            let (out, wall) = simulate_run(config, spec, graph, key, snapshot_options(config, key.n))?;
            let series = gap_series(out.snapshots.as_ref().expect("snapshots requested"), graph, d)?;
            let sup = match pair {
                Some((m, l)) => series.sup_abs(m, l),
                None => series.sup_abs_all(),
            };
            Ok((run_record(key, &out, wall, &[]), sup))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()
    })?;
    let conf = config.diagnostics.confidence;
    let mut sup_gap = Vec::new();
    for n in config.sizes() {
        let sups: Vec<f64> = keys
            .iter()
            .zip(&results)
            .filter(|(key, _)| key.n == n)
            .map(|(_, (_, s))| *s)
            .collect();
        for &eps in &config.diagnostics.epsilon {
            let hits = sups.iter().filter(|&&s| s > eps).count() as u64;
            sup_gap.push(TailEstimate::from_counts(eps, n, hits, sups.len() as u64, conf));
        }
    }
    let rows = sup_gap.iter().map(|e| {
        vec![
            e.n.to_string(),
            fmt_f64(e.epsilon),
            e.trials.to_string(),
            e.hits.to_string(),
            fmt_f64(e.p_hat),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
        ]
    });
    job.manifest
        .files
        .push(write_csv(&job.dir, "sweep.csv", Schema::Sweep, k, rows)?);

    let aux_pair = pair.unwrap_or((0, 1.min(k - 1)));
    let mut auxiliary = Vec::new();
    let mut fits = Vec::new();
    for &eps in &config.diagnostics.epsilon {
        let decay = in_pool(config, || {
            auxiliary_tail_decay(
                &config.run.initial,
                aux_pair,
                config.graph.d,
                config.graph.graph_seed,
                eps,
                &config.sizes(),
                config.diagnostics.trials,
                conf,
                config.run.base_seed,
            )
        })?;
        if let Some(fit) = decay.fit {
            fits.push(vec![fmt_f64(eps), fmt_f64(fit.slope), fmt_f64(fit.intercept), fmt_f64(fit.r_squared)]);
        }
        auxiliary.extend(decay.estimates.into_iter().zip(decay.ceilings));
    }
    let rows = auxiliary.iter().map(|(e, ceiling)| {
        vec![
            e.n.to_string(),
            fmt_f64(e.epsilon),
            e.trials.to_string(),
            e.hits.to_string(),
            fmt_f64(e.p_hat),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            fmt_f64(*ceiling),
        ]
    });
    job.manifest
        .files
        .push(write_csv(&job.dir, "auxiliary_tail.csv", Schema::AuxiliaryTail, k, rows)?);
    job.manifest
        .files
        .push(write_csv(&job.dir, "auxiliary_fit.csv", Schema::AuxiliaryFit, k, fits)?);
    job.add_runs(results.into_iter().map(|(r, _)| (r, Vec::new())).collect());
    Ok((job.finish()?, SweepSummary { sup_gap, auxiliary }))
}

/// Monte Carlo of the Poisson–Bernoulli tail for every configured `(N, α)`
/// against its closed form; a case fails when the closed form falls outside
/// the Wilson interval.
pub fn run_poisson_check(config: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let trials = config.diagnostics.trials;
    if trials < MIN_POISSON_TRIALS {
        return Err(Error::config(
            "diagnostics.trials",
            format!("the Poisson check needs at least {MIN_POISSON_TRIALS} trials, got {trials}"),
        ));
    }
    if config.diagnostics.poisson.is_empty() {
        return Err(Error::config("diagnostics.poisson", "no (N, alpha) cases configured"));
    }
    let mut job = Job::start(config, root, "poisson-check")?;
    let cases = &config.diagnostics.poisson;
    let conf = config.diagnostics.confidence;
    let checks = in_pool(config, || {
        cases
            .par_iter()
            .enumerate()
            .map(|(i, case)| {
                let mut rng = SimRng::new(hash64(config.run.base_seed, case.n as u64, i as u64));
                poisson_bernoulli_tail(case.n, case.alpha, trials, conf, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows = checks.iter().map(|c| {
        let e = &c.estimate;
        vec![
            e.n.to_string(),
            fmt_f64(c.alpha),
            e.trials.to_string(),
            e.hits.to_string(),
            fmt_f64(e.p_hat),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            fmt_f64(c.analytic),
            c.within_ci.to_string(),
        ]
    });
    job.manifest
        .files
        .push(write_csv(&job.dir, "poisson.csv", Schema::Poisson, 0, rows)?);
    for c in &checks {
        job.manifest.checks.push(CheckRecord::new(
            format!("poisson N={} alpha={}", c.estimate.n, c.alpha),
            c.within_ci,
            format!(
                "p_hat = {:.6e}, CI [{:.6e}, {:.6e}], analytic {:.6e}",
                c.estimate.p_hat, c.estimate.ci_low, c.estimate.ci_high, c.analytic
            ),
        ));
    }
    job.finish()
}
