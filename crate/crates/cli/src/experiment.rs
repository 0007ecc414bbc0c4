//! Sweep execution: one job per (sweep point, seed), run on a worker pool and
//! merged back in sweep order.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use trihybrid::baselines::{fixed_pattern_channels, fixed_pattern_wmmse, zf_precoder};
use trihybrid::channel::{generate_scenario, AntennaPrecoder, EffectiveChannel};
use trihybrid::hybrid_decomp::decompose;
use trihybrid::metrics::{audit_constraints, AuditReport};
use trihybrid::patterns::{fictitious_candidate_set, CandidateSet, RadiationPattern};
use trihybrid::sph_harmonics::{coefficient_count, SphereGrid};
use trihybrid::units::dbm_to_mw;
use trihybrid::wmmse::{
    algorithm1, algorithm1_from, algorithm2, algorithm2_from, initial_coefficients, initial_precoder,
    sum_rate, PrecoderState, Solution, SystemConfig,
};

use crate::config::{Config, Method, SweepPoint, WarmStart};
use crate::CliError;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "TRIHYBRID_WORKERS";

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub point: usize,
    pub power_dbm: f64,
    pub n_antennas: usize,
    pub streams: usize,
    pub n_rf: usize,
    pub n_rf_offset: usize,
    pub method: &'static str,
    pub seed: u64,
    pub status: String,
    pub digital_rate: Option<f64>,
    pub hybrid_rate: Option<f64>,
    pub iterations: usize,
    pub objective: Option<f64>,
    pub decomposition_residual: Option<f64>,
    pub digital_power_margin: Option<f64>,
    pub hybrid_power_margin: Option<f64>,
    pub constant_modulus_margin: Option<f64>,
    pub antenna_margin: Option<f64>,
    pub min_pattern_gain: Option<f64>,
    pub sphere_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub point: usize,
    pub method: &'static str,
    pub seed: u64,
    pub iter: usize,
    pub objective: f64,
    pub sum_rate: f64,
    pub max_power_violation: f64,
    pub norm_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub point: usize,
    pub method: &'static str,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub results: Vec<ResultRow>,
    pub traces: Vec<TraceRow>,
    pub timings: Vec<TimingRow>,
}

/// Shared read-only inputs of every job.
struct Context<'a> {
    config: &'a Config,
    grid: SphereGrid,
    candidates: CandidateSet,
    fixed: CandidateSet,
    rx: RadiationPattern,
}

/// Worker count from [`WORKERS_ENV`]; unset or `0` means one per core.
pub fn workers_from_env() -> Result<usize, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

/// Runs every (point, method, seed) combination of the sweep.
pub fn run_sweep(config: &Config, workers: usize) -> Result<RunOutput, CliError> {
    let grid = SphereGrid::default();
    let candidates = fictitious_candidate_set(&config.beam_params(), &grid)?;
    let fixed = CandidateSet::single(candidates.baseline().clone())?;
    let ctx = Context {
        config,
        grid,
        candidates,
        fixed,
        rx: RadiationPattern::isotropic(),
    };
    let jobs: Vec<(SweepPoint, u64)> = config
        .points()
        .into_iter()
        .flat_map(|p| config.sweep.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    let parts: Vec<Result<RunOutput, CliError>> =
        pool.install(|| jobs.par_iter().map(|&(p, s)| run_job(&ctx, &p, s)).collect());
    let mut out = RunOutput::default();
    for part in parts {
        let part = part?;
        out.results.extend(part.results);
        out.traces.extend(part.traces);
        out.timings.extend(part.timings);
    }
    Ok(out)
}

fn run_job(ctx: &Context, point: &SweepPoint, seed: u64) -> Result<RunOutput, CliError> {
    let cfg = ctx.config;
    let scenario = generate_scenario(&cfg.scenario_config(point), seed)?;
    let n = scenario.n_tx();
    let d = cfg.total_streams();
    let n_rf = d + point.n_rf_offset;
    let system = SystemConfig::uniform(
        cfg.scenario.users,
        cfg.scenario.streams_per_user,
        n,
        dbm_to_mw(point.power_dbm),
        dbm_to_mw(cfg.scenario.noise_dbm),
        n_rf,
    );
    let init = initial_precoder(&system, seed)?;
    let opts = cfg.solver_options(seed);
    let methods = &cfg.sweep.methods;
    let warm = cfg.solver.warm_start == WarmStart::Fixed;

    let base = ResultRow {
        point: point.index,
        power_dbm: point.power_dbm,
        n_antennas: n,
        streams: d,
        n_rf,
        n_rf_offset: point.n_rf_offset,
        method: "",
        seed,
        status: "ok".into(),
        digital_rate: None,
        hybrid_rate: None,
        iterations: 0,
        objective: None,
        decomposition_residual: None,
        digital_power_margin: None,
        hybrid_power_margin: None,
        constant_modulus_margin: None,
        antenna_margin: None,
        min_pattern_gain: None,
        sphere_warnings: 0,
    };
    let fixed_channels = fixed_pattern_channels(&scenario.users, ctx.fixed.baseline(), &ctx.rx)?;
    let needs_fixed = methods.contains(&Method::WmmseFixed)
        || (warm && (methods.contains(&Method::Model1) || methods.contains(&Method::Model2)));
    let mut fixed_solution: Option<Solution> = None;
    let mut out = RunOutput::default();

    // The fixed-pattern solution runs first so it can seed the other models.
    for method in [Method::WmmseFixed, Method::Model1, Method::Model2, Method::Zf] {
        let report = methods.contains(&method);
        if !report && !(method == Method::WmmseFixed && needs_fixed) {
            continue;
        }
        let mut row = base.clone();
        row.method = method.as_str();
        let start = Instant::now();
        let sol = match method {
            Method::WmmseFixed => {
                let sol = fixed_pattern_wmmse(&fixed_channels, &system, &opts, &init)?;
                fill_solution(&mut row, &sol, &system, 1, Some(&ctx.fixed), &ctx.grid)?;
                Some(sol)
            }
            Method::Model1 => {
                let ch = scenario.selection_channels(&ctx.candidates, &ctx.rx);
                let sol = match (&fixed_solution, warm) {
                    (Some(f), true) => algorithm1_from(&ch, &system, &opts, &f.state.f_d, vec![0; n])?,
                    _ => algorithm1(&ch, &system, &opts, &init)?,
                };
                let s = ctx.candidates.len();
                fill_solution(&mut row, &sol, &system, s, Some(&ctx.candidates), &ctx.grid)?;
                Some(sol)
            }
            Method::Model2 => {
                let ch = scenario.coefficient_channels(cfg.scenario.sh_degree, &ctx.rx);
                let t = coefficient_count(cfg.scenario.sh_degree);
                let sol = match (&fixed_solution, warm) {
                    (Some(f), true) => {
                        let rho = if t == 1 { 1.0 } else { opts.rho };
                        let c0 = vec![initial_coefficients(t, rho); n];
                        algorithm2_from(&ch, &system, &opts, &f.state.f_d, c0)?
                    }
                    _ => algorithm2(&ch, &system, &opts, &init)?,
                };
                fill_solution(&mut row, &sol, &system, t, None, &ctx.grid)?;
                Some(sol)
            }
            Method::Zf => {
                fill_zf(&mut row, &fixed_channels, &system, opts.decomposition_iters, seed, ctx)?;
                None
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        if report {
            if let Some(sol) = &sol {
                out.traces.extend(trace_rows(&row, sol));
            }
            out.timings.push(TimingRow {
                point: point.index,
                method: method.as_str(),
                seed,
                seconds,
            });
            out.results.push(row);
        }
        if method == Method::WmmseFixed {
            fixed_solution = sol;
        }
    }
    // Report in the order the config lists the methods.
    let rank = |name: &str| methods.iter().position(|m| m.as_str() == name);
    out.results.sort_by_key(|r| rank(r.method));
    out.traces.sort_by_key(|t| rank(t.method));
    out.timings.sort_by_key(|t| rank(t.method));
    Ok(out)
}

fn fill_audit(row: &mut ResultRow, a: &AuditReport) {
    row.digital_power_margin = Some(a.digital_power_margin);
    row.hybrid_power_margin = a.hybrid_power_margin;
    row.constant_modulus_margin = a.constant_modulus_margin;
    row.antenna_margin = Some(a.antenna_margin);
    row.min_pattern_gain = Some(a.min_pattern_gain);
}

fn fill_solution(
    row: &mut ResultRow,
    sol: &Solution,
    system: &SystemConfig,
    block: usize,
    candidates: Option<&CandidateSet>,
    grid: &SphereGrid,
) -> Result<(), CliError> {
    let d = &sol.decomposition;
    let audit = audit_constraints(&sol.state, Some((&d.f_rf, &d.f_bb)), &system.power, block, candidates, grid)?;
    row.digital_rate = Some(sol.digital_rate);
    row.hybrid_rate = Some(sol.hybrid_rate);
    row.iterations = sol.iterations();
    row.objective = sol.trace.last().map(|t| t.objective);
    row.decomposition_residual = Some(d.residual);
    row.sphere_warnings = sol.sphere_warnings;
    fill_audit(row, &audit);
    Ok(())
}

fn fill_zf(
    row: &mut ResultRow,
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    decomposition_iters: usize,
    seed: u64,
    ctx: &Context,
) -> Result<(), CliError> {
    let h: Vec<_> = channels.iter().map(|c| c.matrix.clone()).collect();
    let f = match zf_precoder(&h, system) {
        Ok(f) => f,
        Err(e) => {
            row.status = format!("infeasible: {e}");
            return Ok(());
        }
    };
    let d = decompose(&f, system.n_rf, &system.power, decomposition_iters, seed)?;
    let state = PrecoderState {
        f_d: f.clone(),
        antenna: AntennaPrecoder::Selection(vec![0; system.n_antennas()]),
        u: Vec::new(),
        w: Vec::new(),
    };
    let audit = audit_constraints(&state, Some((&d.f_rf, &d.f_bb)), &system.power, 1, Some(&ctx.fixed), &ctx.grid)?;
    row.digital_rate = Some(sum_rate(&h, &f, system)?.0);
    row.hybrid_rate = Some(sum_rate(&h, &(&d.f_rf * &d.f_bb), system)?.0);
    row.decomposition_residual = Some(d.residual);
    fill_audit(row, &audit);
    Ok(())
}

fn trace_rows(row: &ResultRow, sol: &Solution) -> Vec<TraceRow> {
    sol.trace
        .iter()
        .map(|t| TraceRow {
            point: row.point,
            method: row.method,
            seed: row.seed,
            iter: t.iter,
            objective: t.objective,
            sum_rate: t.sum_rate,
            max_power_violation: t.max_power_violation,
            norm_deviation: t.norm_deviation,
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| CliError::io(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    Ok(())
}

/// Column names of `results.csv`, in order.
pub const RESULT_COLUMNS: [&str; 20] = [
    "point",
    "power_dbm",
    "n_antennas",
    "streams",
    "n_rf",
    "n_rf_offset",
    "method",
    "seed",
    "status",
    "digital_rate",
    "hybrid_rate",
    "iterations",
    "objective",
    "decomposition_residual",
    "digital_power_margin",
    "hybrid_power_margin",
    "constant_modulus_margin",
    "antenna_margin",
    "min_pattern_gain",
    "sphere_warnings",
];

/// Writes `results.csv`, `traces.csv` and `timings.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_rows(&dir.join("results.csv"), &out.results, &RESULT_COLUMNS)?;
    write_rows(
        &dir.join("traces.csv"),
        &out.traces,
        &["point", "method", "seed", "iter", "objective", "sum_rate", "max_power_violation", "norm_deviation"],
    )?;
    write_rows(&dir.join("timings.csv"), &out.timings, &["point", "method", "seed", "seconds"])?;
    Ok(())
}
