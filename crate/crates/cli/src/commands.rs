//! The subcommands. Each reads the validated config, runs one pipeline and
//! writes its files through [`OutputDir`].

use std::io::BufReader;

use serde::Serialize;
use serde_json::json;

use ahl_core::cluster::{
    finger_histogram, generate_replica, trace_cluster_boundary_with, Cluster, ClusterTraceOptions, EventLog, RateConvention,
};
use ahl_core::flow::{
    flow_distance, fluctuation_paths, ode_reference_flow, replicas, simulate_boundary_flow, FlowResult, LimitSde, Sampling,
};
use ahl_core::geometry::hausdorff;
use ahl_core::io::{
    read_events_jsonl, render_boundaries_svg, render_trajectories_svg, write_events_jsonl, write_points_csv, write_series_csv,
    SvgStyle,
};
use ahl_core::loewner::{equilibria, trace_hull_with, DrivingMeasure, HullBoundary, HullOptions, DEFAULT_STEP};
use ahl_core::measures::Drift;
use ahl_core::rng::{stream, Purpose, StreamId};
use ahl_core::{stats, Exec, Trajectory};
use ahl_verify::{criterion_ids, run_criterion, VerifyOptions};

use crate::config::{Command, ConfigError, ExperimentConfig};
use crate::output::OutputDir;
use crate::Log;

/// Why a run stopped; each kind has its exit code.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
    /// `verify` ran but some criteria failed.
    CriteriaFailed(Vec<u8>),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
            RunError::CriteriaFailed(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
            RunError::CriteriaFailed(_) => "criteria_failed",
        }
    }

    pub fn message(&self) -> String {
        match self {
            RunError::Config(m) | RunError::Numerical(m) | RunError::Io(m) => m.clone(),
            RunError::CriteriaFailed(ids) => format!("acceptance criteria failed: {ids:?}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<ahl_core::Error> for RunError {
    fn from(e: ahl_core::Error) -> Self {
        match e {
            ahl_core::Error::Io(m) => RunError::Io(m),
            ahl_core::Error::Parse(m) => RunError::Config(m),
            e => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

type Run<T> = Result<T, RunError>;

/// Runs the configured command into `out`.
pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    match cfg.command {
        Command::Cluster => cluster(cfg, out, log),
        Command::Hull => hull(cfg, out, log),
        Command::Flow => flow(cfg, out, log),
        Command::Ode => ode(cfg, out),
        Command::Fluct => fluct(cfg, out, log),
        Command::Compare => compare(cfg, out, log),
        Command::Verify => verify(cfg, out, log),
    }
}

/// File-name suffix of a replica; a single replica gets none.
fn suffix(r: u64, count: usize) -> String {
    if count == 1 {
        String::new()
    } else {
        format!("_r{r}")
    }
}

fn metadata(cfg: &ExperimentConfig, log: &EventLog) -> serde_json::Value {
    json!({
        "seed": log.master_seed,
        "replica": log.replica,
        "rate_convention": log.convention.name(),
        "horizon": log.horizon,
        "d": log.constant_diameter(),
        "nu": cfg.nu,
        "sigma": cfg.sigma,
        "particles": log.len(),
    })
}

/// The event logs of the run: a replayed file, or one drawn log per replica.
fn event_logs(cfg: &ExperimentConfig) -> Run<Vec<EventLog>> {
    if let Some(path) = &cfg.events {
        let file = std::fs::File::open(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let events = read_events_jsonl(BufReader::new(file))?;
        let horizon = match cfg.horizon {
            Some(h) => h,
            None => events.last().map_or(0.0, |e| e.t),
        };
        // the convention only matters when drawing arrivals; a replay keeps the configured label
        let convention = if cfg.rate.is_some() && cfg.sigma.is_some() { cfg.rate()? } else { RateConvention::Deterministic };
        let seed = cfg.seeds.map_or(0, |s| s.master);
        return Ok(vec![EventLog::from_events(events, convention, seed, horizon)?]);
    }
    let (nu, sigma, horizon, conv, seeds) = (cfg.nu()?, cfg.sigma()?, cfg.horizon()?, cfg.rate()?, cfg.seeds()?);
    replicas(seeds.replicas as usize, Exec::Parallel, |r| generate_replica(&nu, &sigma, horizon, conv, seeds.master, r))
        .into_iter()
        .map(|l| l.map_err(RunError::from))
        .collect()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> ahl_core::Result<()>) -> Run<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_svg(out: &mut OutputDir, name: &str, svg: Option<String>, log: &Log) -> Run<()> {
    match svg {
        Some(s) => out.write(name, s.as_bytes())?,
        None => log.warn(&format!("nothing to draw; {name} not written")),
    }
    Ok(())
}

fn trace_cluster(cfg: &ExperimentConfig, log: &EventLog) -> Run<HullBoundary> {
    let cluster = Cluster::from_log(log)?;
    let opts = ClusterTraceOptions { eps: cfg.resolution.eps.unwrap_or(1e-3), ..Default::default() };
    Ok(trace_cluster_boundary_with(&cluster, cfg.resolution.n_points.unwrap_or(4096), &opts)?)
}

fn cluster(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let logs = event_logs(cfg)?;
    for l in &logs {
        let sfx = suffix(l.replica, logs.len());
        log.info(&format!("replica {}: {} particles", l.replica, l.len()));
        out.write(&format!("events{sfx}.jsonl"), &csv_bytes(|b| write_events_jsonl(b, &l.events))?)?;
        let boundary = trace_cluster(cfg, l)?;
        out.write(&format!("boundary{sfx}.csv"), &csv_bytes(|b| write_points_csv(b, &boundary.vertices))?)?;
        let svg = render_boundaries_svg(&[&boundary.vertices], &[], &SvgStyle::default());
        write_svg(out, &format!("cluster{sfx}.svg"), svg, log)?;
        let fingers = finger_histogram(&boundary, cfg.resolution.bins.unwrap_or(48))?;
        out.write_json(
            &format!("fingers{sfx}.json"),
            &json!({ "meta": metadata(cfg, l), "capacity": boundary.capacity, "histogram": fingers }),
        )?;
    }
    Ok(())
}

fn hull_options(cfg: &ExperimentConfig) -> HullOptions {
    let r = &cfg.resolution;
    HullOptions {
        eps: r.eps.unwrap_or(1e-6),
        step: r.step.unwrap_or(DEFAULT_STEP),
        refine: r.refine.unwrap_or(false),
        ..Default::default()
    }
}

fn hull(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let mu = DrivingMeasure::constant(cfg.nu()?);
    let h = trace_hull_with(&mu, cfg.horizon()?, cfg.resolution.n_rays.unwrap_or(512), &hull_options(cfg))?;
    log.info(&format!("hull with {} vertices, max radius {}", h.len(), h.max_radius()));
    out.write("hull.csv", &csv_bytes(|b| write_points_csv(b, &h.vertices))?)?;
    let marked: Vec<_> = h.marked.iter().map(|&i| h.vertices[i]).collect();
    write_svg(out, "hull.svg", render_boundaries_svg(&[&h.vertices], &marked, &SvgStyle::default()), log)?;
    out.write_json("hull.json", &json!({ "nu": cfg.nu, "horizon": cfg.horizon, "hull": h }))?;
    Ok(())
}

fn omega_series(f: &FlowResult, k: usize) -> Trajectory {
    let start = f.omega[k].first().copied().unwrap_or(0.0);
    let start_time = f.omega_times.first().copied().unwrap_or(0.0);
    Trajectory { start_time, start, times: f.omega_times.clone(), values: f.omega[k].clone() }
}

fn write_flow(out: &mut OutputDir, stem: &str, f: &FlowResult, meta: serde_json::Value, log: &Log) -> Run<()> {
    for (k, t) in f.trajectories.iter().enumerate() {
        out.write(&format!("{stem}_p{k}.csv"), &csv_bytes(|b| write_series_csv(b, t))?)?;
    }
    for k in 0..f.omega.len() {
        out.write(&format!("{stem}_omega{k}.csv"), &csv_bytes(|b| write_series_csv(b, &omega_series(f, k)))?)?;
    }
    out.write_json(&format!("{stem}.json"), &json!({ "meta": meta, "result": f }))?;
    let paths: Vec<&Trajectory> = f.trajectories.iter().collect();
    write_svg(out, &format!("{stem}.svg"), render_trajectories_svg(&paths, &SvgStyle::default()), log)
}

fn flow(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let logs = event_logs(cfg)?;
    let horizon = cfg.horizon()?;
    let starts: Vec<(f64, f64)> = cfg.starts().into_iter().map(|x| (0.0, x)).collect();
    let sampling = Sampling::Grid { dt: cfg.resolution.sample_dt.unwrap_or(0.01) };
    let results = Exec::Parallel.map(&logs, |l| simulate_boundary_flow(l, &starts, horizon, sampling));
    for (l, f) in logs.iter().zip(results) {
        let f = f?;
        log.info(&format!("replica {}: {} events applied", l.replica, l.len()));
        write_flow(out, &format!("flow{}", suffix(l.replica, logs.len())), &f, metadata(cfg, l), log)?;
    }
    Ok(())
}

fn ode(cfg: &ExperimentConfig, out: &mut OutputDir) -> Run<()> {
    let nu = cfg.nu()?;
    let c0 = cfg.c0.unwrap_or(0.0);
    let starts: Vec<(f64, f64)> = cfg.starts().into_iter().map(|x| (0.0, x)).collect();
    let f = ode_reference_flow(&nu, c0, &starts, cfg.horizon()?, cfg.resolution.step.unwrap_or(DEFAULT_STEP))?;
    let eq = match equilibria(&Drift::new(nu, c0)?) {
        Ok(eq) => json!(eq),
        Err(ahl_core::Error::DegenerateDrift) => json!(null),
        Err(e) => return Err(e.into()),
    };
    let meta = json!({ "nu": cfg.nu, "c0": c0, "horizon": cfg.horizon, "equilibria": eq });
    write_flow(out, "ode", &f, meta, &Log::quiet())
}

#[derive(Serialize)]
struct FluctReport {
    start: f64,
    horizon: f64,
    d: Option<f64>,
    replicas: usize,
    /// `∫ ψ² h` along the deterministic path.
    variance_integral: f64,
    /// Sample mean and variance of `ψ_T Z_T` over the replicas.
    empirical_mean: f64,
    empirical_variance: f64,
    sde_paths: usize,
    limit_sde_variance: f64,
}

fn fluct(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let nu = cfg.nu()?;
    let c0 = cfg.c0.unwrap_or(0.0);
    let horizon = cfg.horizon()?;
    let step = cfg.resolution.step.unwrap_or(DEFAULT_STEP);
    let start = (0.0, cfg.starts()[0]);
    let logs = event_logs(cfg)?;
    let results = Exec::Parallel.map(&logs, |l| fluctuation_paths(l, &nu, c0, start, horizon, step));
    let mut ends = Vec::with_capacity(logs.len());
    for (i, r) in results.into_iter().enumerate() {
        let f = r?;
        if i == 0 {
            out.write("z_r0.csv", &csv_bytes(|b| write_series_csv(b, &f.z_path))?)?;
            out.write("psi.csv", &csv_bytes(|b| write_series_csv(b, &f.psi))?)?;
            out.write("variance_profile.csv", &csv_bytes(|b| write_series_csv(b, &f.variance_profile))?)?;
        }
        ends.push(f.psi.last_value().unwrap_or(1.0) * f.z_path.last_value().unwrap_or(0.0));
    }
    let sde = LimitSde::new(&nu, c0, start, horizon, step)?;
    let paths = cfg.resolution.sde_paths.unwrap_or(10_000);
    let seed = cfg.seeds()?.master;
    let mut rng = stream(seed, StreamId::new(u64::MAX >> 4, Purpose::Gaussian));
    let sde_ends: Vec<f64> = (0..paths).map(|_| sde.psi_end() * sde.sample_end(&mut rng)).collect();
    let report = FluctReport {
        start: start.1,
        horizon,
        d: logs[0].constant_diameter(),
        replicas: logs.len(),
        variance_integral: sde.variance_integral(),
        empirical_mean: stats::mean(&ends),
        empirical_variance: if ends.len() > 1 { stats::variance(&ends) } else { f64::NAN },
        sde_paths: paths,
        limit_sde_variance: stats::variance(&sde_ends),
    };
    log.info(&format!("Var(ψZ) = {} against ∫ψ²h = {}", report.empirical_variance, report.variance_integral));
    out.write_json("fluct.json", &json!({ "meta": metadata(cfg, &logs[0]), "report": report }))?;
    Ok(())
}

fn compare(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let nu = cfg.nu()?;
    let c0 = cfg.c0.unwrap_or(0.0);
    let horizon = cfg.horizon()?;
    let step = cfg.resolution.step.unwrap_or(DEFAULT_STEP);
    let hull = trace_hull_with(
        &DrivingMeasure::constant(nu.clone()),
        horizon,
        cfg.resolution.n_rays.unwrap_or(512),
        &HullOptions { eps: cfg.resolution.eps.unwrap_or(1e-3), ..hull_options(cfg) },
    )?;
    let starts: Vec<(f64, f64)> = cfg.starts().into_iter().map(|x| (0.0, x)).collect();
    let phi = ode_reference_flow(&nu, c0, &starts, horizon, step)?;
    let sampling = Sampling::Grid { dt: cfg.resolution.sample_dt.unwrap_or(0.01) };
    let logs = event_logs(cfg)?;
    let rows = Exec::Sequential.map(&logs, |l| -> Run<(u64, f64, f64)> {
        let boundary = trace_cluster(cfg, l)?;
        let x = simulate_boundary_flow(l, &starts, horizon, sampling)?;
        Ok((l.replica, hausdorff(&boundary.vertices, &hull.vertices), flow_distance(&x, &phi)?))
    });
    let mut table = String::from("replica,cluster_hull_hausdorff,flow_distance\n");
    let (mut shape, mut flow) = (Vec::new(), Vec::new());
    for row in rows {
        let (r, h, f) = row?;
        table.push_str(&format!("{r},{h},{f}\n"));
        shape.push(h);
        flow.push(f);
    }
    log.info(&format!("median Hausdorff {}, median flow distance {}", stats::median(&shape), stats::median(&flow)));
    out.write("compare.csv", table.as_bytes())?;
    out.write_json(
        "compare.json",
        &json!({
            "meta": metadata(cfg, &logs[0]),
            "median_cluster_hull_hausdorff": stats::median(&shape),
            "median_flow_distance": stats::median(&flow),
        }),
    )?;
    Ok(())
}

fn verify(cfg: &ExperimentConfig, out: &mut OutputDir, log: &Log) -> Run<()> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = cfg.seeds {
        opts.master_seed = s.master;
    }
    let ids = cfg.criteria.clone().unwrap_or_else(criterion_ids);
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id, &opts).ok_or_else(|| RunError::Config(format!("unknown criterion {id}")))?;
        println!("{}", r.line());
        log.info(&format!("criterion {id} done"));
        reports.push(r);
    }
    out.write_json("verify.json", &json!({ "master_seed": opts.master_seed, "criteria": reports }))?;
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::CriteriaFailed(failed))
    }
}
