//! The five harness commands. Each returns the CSV text plus optional
//! side outputs; writing them is the caller's job.

use thiserror::Error;

use super::format::{fnv1a64, g6, g6_opt, metadata_row, Csv};
use super::spec::ExperimentSpec;
use super::svg::{LineChart, Series};
use crate::agent::{PolicyState, RewardKind};
use crate::bench::{benchmark_scheme_a, benchmark_scheme_b, BenchmarkPoint, SeedSearch};
use crate::error::{ConfigError, SimError};
use crate::phy::{calibrate_bandwidth, outcome_distribution};
use crate::rng::{substream, Domain};
use crate::sim::{run_experiment, AccessMode, ExperimentResult, Scheme};
use crate::snapshot;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(SimError),
    #[error("{0}")]
    Io(String),
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => HarnessError::Config(c),
            other => HarnessError::Sim(other),
        }
    }
}

impl HarnessError {
    /// 2 for configuration problems, 3 for capacity errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Sim(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandOutput {
    pub csv: String,
    pub svg: Option<String>,
    /// Extra files as (file name, contents), e.g. policy snapshots.
    pub files: Vec<(String, String)>,
}

pub fn spec_hash(spec: &ExperimentSpec) -> u64 {
    fnv1a64(spec.to_toml().as_bytes())
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: Vec<T>, _workers: usize, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

fn reward_label(r: RewardKind) -> &'static str {
    match r {
        RewardKind::R1 => "r1",
        RewardKind::R2 => "r2",
    }
}

/// Reads the warm-start snapshot named in the spec, if any.
pub fn load_warm_start(spec: &ExperimentSpec) -> Result<Option<PolicyState>, HarnessError> {
    let Some(path) = &spec.run.warm_start else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("run.warm_start", format!("cannot read {path}: {e}")))?;
    let policy = snapshot::from_csv(&text).map_err(|e| ConfigError::new("run.warm_start", e.to_string()))?;
    Ok(Some(policy))
}

fn run_grid(
    spec: &ExperimentSpec,
    workers: usize,
    trace_window: Option<u64>,
) -> Result<Vec<(f64, usize, u64, ExperimentResult)>, HarnessError> {
    let warm = load_warm_start(spec)?;
    let mut jobs = Vec::new();
    for lambda in spec.sorted_lambdas() {
        for (r, seed) in spec.replication_seeds().into_iter().enumerate() {
            let mut cfg = spec.sim_config(lambda, seed)?;
            cfg.initial_policy = warm.clone();
            cfg.trace_window = trace_window;
            cfg.validate()?;
            jobs.push((lambda, r, seed, cfg));
        }
    }
    let results = parallel_map(jobs, workers, |(lambda, r, seed, cfg)| {
        run_experiment(cfg).map(|res| (*lambda, *r, *seed, res))
    });
    results.into_iter().map(|r| r.map_err(HarnessError::from)).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One row per (λ, replication) with the run's metrics.
pub fn cmd_simulate(spec: &ExperimentSpec, workers: usize) -> Result<CommandOutput, HarnessError> {
    let runs = run_grid(spec, workers, None)?;
    let clusters = spec.network.devices.len();
    let mut header = vec!["lambda", "scheme", "reward", "gamma_s"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((1..=clusters).map(|i| format!("gamma_{i}")));
    header.push("jain_hat".into());
    header.extend((1..=clusters).map(|i| format!("delay_{i}")));
    header.extend((1..=clusters).map(|i| format!("energy_{i}_mJ")));
    header.push("frames".into());
    header.push("master_seed".into());

    let mut csv = Csv::new(
        &metadata_row("simulate", spec_hash(spec), &spec.replication_seeds()),
        &header,
    );
    let mut files = Vec::new();
    for (lambda, r, seed, res) in &runs {
        let rep = &res.report;
        let mut row = vec![
            g6(*lambda),
            spec.access.scheme.label().to_string(),
            reward_label(spec.access.reward).to_string(),
            g6(rep.gamma_s),
        ];
        row.extend(rep.gamma.iter().map(|&g| g6(g)));
        row.push(g6(rep.jain_hat));
        row.extend(rep.delay.iter().map(|&d| g6_opt(d)));
        row.extend(rep.energy_mj.iter().map(|&e| g6_opt(e)));
        row.push(spec.run.frames.to_string());
        row.push(seed.to_string());
        csv.row(&row);
        if let (Some(_), Some(policy)) = (&spec.run.policy_out, &res.policy) {
            files.push((format!("policy_lambda{}_rep{r}.csv", g6(*lambda)), snapshot::to_csv(policy)));
        }
    }

    let lambdas = spec.sorted_lambdas();
    let per_lambda = |f: &dyn Fn(&ExperimentResult) -> f64| -> Vec<(f64, f64)> {
        lambdas
            .iter()
            .map(|&l| {
                let v: Vec<f64> = runs.iter().filter(|r| r.0 == l).map(|r| f(&r.3)).collect();
                (l, mean(&v))
            })
            .collect()
    };
    let mut series = vec![Series {
        label: "system".into(),
        points: per_lambda(&|r| r.report.gamma_s),
    }];
    for i in 0..clusters {
        series.push(Series {
            label: format!("cluster {}", i + 1),
            points: per_lambda(&|r| r.report.gamma[i]),
        });
    }
    let chart = LineChart {
        title: format!("Scheme {} ({})", spec.access.scheme.label(), reward_label(spec.access.reward)),
        x_label: "arrival probability per frame".into(),
        y_label: "throughput (packets/frame)".into(),
        series,
    };
    Ok(CommandOutput {
        csv: csv.finish(),
        svg: Some(chart.render()),
        files,
    })
}

fn seed_label(spec: &ExperimentSpec, scheme: Scheme, point: &BenchmarkPoint) -> String {
    let mut labels = Vec::new();
    for (cluster, seed) in point.seeds.iter().enumerate() {
        if scheme.mode(cluster) != AccessMode::Scf {
            continue;
        }
        labels.push(match (seed, spec.benchmark.seed_search) {
            (Some(s), _) => s.0.to_string(),
            (None, SeedSearch::Clairvoyant) => "per_frame".into(),
            (None, SeedSearch::Static) => String::new(),
        });
    }
    labels.join(";")
}

/// Exhaustive-search benchmark per λ for the spec's scheme.
pub fn cmd_benchmark(spec: &ExperimentSpec, workers: usize) -> Result<CommandOutput, HarnessError> {
    let scheme = match spec.access.scheme {
        Scheme::Wac => return Err(ConfigError::new("access.scheme", "benchmark needs scheme A, B or B_both_SCF").into()),
        s => s,
    };
    let seed = spec.replication_seed(0);
    let grid = spec.benchmark_grid();
    let clusters = spec.network.devices.len();
    let mut header = vec!["lambda".to_string(), "scheme".to_string()];
    header.extend((1..=clusters).map(|i| format!("best_a{i}")));
    header.extend(["best_seed", "throughput", "stderr"].map(String::from));
    let mut csv = Csv::new(&metadata_row("benchmark", spec_hash(spec), &[seed]), &header);

    let lambdas = spec.sorted_lambdas();
    let configs = lambdas
        .iter()
        .map(|&l| spec.sim_config(l, seed))
        .collect::<Result<Vec<_>, _>>()?;
    // Grid points are what run in parallel, so λ values go one at a time.
    let points = parallel_map(vec![()], workers, |_| {
        configs
            .iter()
            .map(|cfg| match scheme {
                Scheme::A => benchmark_scheme_a(cfg, &grid),
                _ => benchmark_scheme_b(cfg, &grid),
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .pop()
    .expect("one batch")?;

    let mut series = Vec::new();
    for (lambda, p) in lambdas.iter().zip(&points) {
        let mut row = vec![g6(*lambda), scheme.label().to_string()];
        row.extend(p.access.iter().map(|&a| g6(a)));
        row.push(seed_label(spec, scheme, p));
        row.push(g6(p.throughput));
        row.push(g6_opt(p.stderr));
        csv.row(&row);
        series.push((*lambda, p.throughput));
    }
    let chart = LineChart {
        title: format!("Benchmark, scheme {}", scheme.label()),
        x_label: "arrival probability per frame".into(),
        y_label: "system throughput (packets/frame)".into(),
        series: vec![Series {
            label: "benchmark".into(),
            points: series,
        }],
    };
    Ok(CommandOutput {
        csv: csv.finish(),
        svg: Some(chart.render()),
        files: Vec::new(),
    })
}

/// Physical-layer success-count marginals for every (n1, n2) up to `n_max`.
pub fn cmd_phy_table(spec: &ExperimentSpec, workers: usize) -> Result<CommandOutput, HarnessError> {
    let geoms = spec.geometries();
    if geoms.len() != 2 {
        return Err(ConfigError::new("network.devices", "phy-table needs exactly two clusters").into());
    }
    let geometry = [geoms[0].clone(), geoms[1].clone()];
    let (n_max, samples, seed) = (spec.phy_table.n_max, spec.phy_table.samples, spec.run.seed);
    let mut header: Vec<String> = ["n1", "n2", "cluster"].map(String::from).to_vec();
    header.extend((0..=n_max).map(|u| format!("S{u}")));
    let mut csv = Csv::new(&metadata_row("phy-table", spec_hash(spec), &[seed]), &header);

    let cells: Vec<(usize, usize)> = (0..=n_max).flat_map(|a| (0..=n_max).map(move |b| (a, b))).collect();
    let tables = parallel_map(cells, workers, |&(n1, n2)| {
        let mut rng = substream(seed, Domain::PhySampling, (n1 * (n_max + 1) + n2) as u64);
        outcome_distribution(n1, n2, &spec.phy, &geometry, samples, &mut rng)
    });
    for t in &tables {
        for cluster in 0..2 {
            let mut row = vec![t.n1.to_string(), t.n2.to_string(), (cluster + 1).to_string()];
            row.extend(t.marginal(cluster, n_max + 1).iter().map(|&p| g6(p)));
            csv.row(&row);
        }
    }
    Ok(CommandOutput {
        csv: csv.finish(),
        ..CommandOutput::default()
    })
}

/// Windowed system throughput over time, averaged over replications.
pub fn cmd_convergence(spec: &ExperimentSpec, workers: usize) -> Result<CommandOutput, HarnessError> {
    let window = spec.run.window;
    if spec.run.frames < window {
        return Err(ConfigError::new("run.frames", "must be at least run.window").into());
    }
    let runs = run_grid(spec, workers, Some(window))?;
    let header = ["lambda", "frame", "gamma_s", "stderr"].map(String::from);
    let mut csv = Csv::new(
        &metadata_row("convergence", spec_hash(spec), &spec.replication_seeds()),
        &header,
    );
    let reps = spec.run.replications;
    let mut series = Vec::new();
    for lambda in spec.sorted_lambdas() {
        let traces: Vec<&Vec<f64>> = runs.iter().filter(|r| r.0 == lambda).map(|r| &r.3.trace).collect();
        let len = traces[0].len();
        let mut points = Vec::with_capacity(len);
        for k in 0..len {
            let v: Vec<f64> = traces.iter().map(|t| t[k]).collect();
            let m = mean(&v);
            let se = (reps > 1).then(|| {
                let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
                (var / reps as f64).sqrt()
            });
            let frame = (k as u64 + 1) * window;
            csv.row(&[g6(lambda), frame.to_string(), g6(m), g6_opt(se)]);
            points.push((frame as f64, m));
        }
        series.push(Series {
            label: format!("lambda {}", g6(lambda)),
            points,
        });
    }
    let chart = LineChart {
        title: format!(
            "Scheme {} ({}), K = {}",
            spec.access.scheme.label(),
            reward_label(spec.access.reward),
            spec.access.update_interval
        ),
        x_label: "frame".into(),
        y_label: format!("system throughput, {window}-frame window"),
        series,
    };
    Ok(CommandOutput {
        csv: csv.finish(),
        svg: Some(chart.render()),
        files: Vec::new(),
    })
}

/// Noise bandwidth that makes a lone C1 transmission succeed at the target rate.
pub fn cmd_calibrate(spec: &ExperimentSpec) -> Result<CommandOutput, HarnessError> {
    let geoms = spec.geometries();
    let seed = spec.run.seed;
    let mut rng = substream(seed, Domain::PhySampling, u64::MAX);
    let cal = calibrate_bandwidth(&spec.phy, &geoms[0], spec.calibrate.target, spec.calibrate.samples, &mut rng);
    let header = ["target", "bandwidth_hz", "achieved", "sensitivity_limited", "noise_power_dbm"].map(String::from);
    let mut csv = Csv::new(&metadata_row("calibrate", spec_hash(spec), &[seed]), &header);
    let calibrated = crate::phy::PhyConfig {
        bandwidth_hz: cal.bandwidth_hz,
        ..spec.phy.clone()
    };
    csv.row(&[
        g6(spec.calibrate.target),
        g6(cal.bandwidth_hz),
        g6(cal.achieved),
        cal.sensitivity_limited.to_string(),
        g6(calibrated.noise_power_dbm()),
    ]);
    Ok(CommandOutput {
        csv: csv.finish(),
        ..CommandOutput::default()
    })
}
