//! Experiment runner: configure a solver/schedule/instance triple, run it,
//! emit the trace and summary files, and compare runs.

mod cache;
mod compare;
mod config;
mod plot;

pub use cache::{cache_path, content_hash, load_or_compute_reference, load_reference_file};
pub use compare::{compare_runs, nfval_at_inner, CompareReport, Winner, STAGNATION_LEVEL};
pub use config::{ExperimentConfig, ReferenceSpec, ENV_OUT_DIR};
pub use plot::{emit_plot_data, PlotFiles, OUT_AXIS_CAP};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qap::{build_relaxation, parse_qaplib, QapRelaxProblem, StMode};
use crate::schedules::{ThetaSchedule, ToleranceSchedule};
use crate::solver::{
    check_descent_inequality, check_ibpg_bounds, check_vibpg_bound, ibpg_run, vibpg_run,
    Problem, Reference, RunOptions, RunTrace, SolverKind, StopReason, TraceSidecar,
};
use crate::transport::SinkhornOracle;

/// Relative tolerance at which the verified inequalities are declared to hold.
pub const BOUND_CHECK_TOL: f64 = 1e-8;

/// Inner-iteration checkpoints recorded in every summary.
pub const SUMMARY_CHECKPOINTS: [u64; 4] = [1_000, 10_000, 100_000, 500_000];

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CheckpointGap {
    pub inner: u64,
    pub nfval: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundFlags {
    pub descent_ok: Option<bool>,
    pub averaged_ok: Option<bool>,
    pub last_iterate_ok: Option<bool>,
    pub rate_ok: Option<bool>,
    pub lyapunov_ok: Option<bool>,
    pub worst_violation: f64,
}

impl BoundFlags {
    pub fn all_ok(&self) -> bool {
        [
            self.descent_ok,
            self.averaged_ok,
            self.last_iterate_ok,
            self.rate_ok,
            self.lyapunov_ok,
        ]
        .iter()
        .all(|flag| flag.unwrap_or(true))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub instance: String,
    pub solver: SolverKind,
    pub p: f64,
    pub f_star: f64,
    pub final_nfval: f64,
    pub checkpoints: Vec<CheckpointGap>,
    pub outer_iterations: usize,
    pub cum_inner_iterations: u64,
    pub stop: StopReason,
    pub bounds: Option<BoundFlags>,
    pub wall_seconds: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub summary: RunSummary,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs one configured experiment end to end: build the relaxation, obtain
/// the reference optimum, run the solver, verify bounds when asked, and write
/// `{label}.csv`, `{label}.meta.json` and `{label}.summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let bytes = std::fs::read(&config.instance)?;
    let text = String::from_utf8_lossy(&bytes);
    let stem = config
        .instance
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    let instance = parse_qaplib(&text, &stem)?;
    let problem = QapRelaxProblem::new(build_relaxation(instance, StMode::LapDuals)?);

    let reference = match &config.reference {
        ReferenceSpec::Compute => load_or_compute_reference(
            &problem.qap,
            &config.instance,
            &bytes,
            config.reference_tol,
        )?,
        ReferenceSpec::Path(p) => load_reference_file(p)?,
    };

    std::fs::create_dir_all(&config.out_dir)?;
    let label = config.run_label();
    let started = Instant::now();
    let trace = run_solver(config, &problem, &reference)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let trace_path = config.out_dir.join(format!("{label}.csv"));
    trace.write_files(&trace_path)?;

    let bounds = if config.check_bounds {
        Some(verify_bounds(&trace, &problem, &reference)?)
    } else {
        None
    };

    let rows = &trace.rows;
    let summary = RunSummary {
        label: label.clone(),
        instance: trace.meta.instance.clone(),
        solver: trace.meta.solver,
        p: config.p,
        f_star: reference.f_star,
        final_nfval: rows.last().map_or(f64::NAN, |r| r.nfval),
        checkpoints: SUMMARY_CHECKPOINTS
            .iter()
            .map(|&inner| CheckpointGap {
                inner,
                nfval: nfval_at_inner(rows, inner),
            })
            .collect(),
        outer_iterations: rows.len(),
        cum_inner_iterations: trace.cum_inner(),
        stop: trace.stop,
        bounds,
        wall_seconds,
    };
    let summary_path = config.out_dir.join(format!("{label}.summary.json"));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(ExperimentOutcome {
        summary,
        trace_path,
        summary_path,
    })
}

fn run_solver(
    config: &ExperimentConfig,
    problem: &QapRelaxProblem,
    reference: &Reference,
) -> Result<RunTrace> {
    let mut oracle = SinkhornOracle::new(config.check_every, config.warm_start);
    let tolerances = ToleranceSchedule::power_mu(config.p);
    let options = RunOptions {
        retain_iterates: config.check_bounds,
        reference: Some(reference.clone()),
        seed: config.seed,
        instance: problem.qap.instance.name.clone(),
    };
    let budget = config.budget();
    let x0 = problem.all_ones_start();
    match config.solver {
        SolverKind::Ibpg => ibpg_run(problem, &mut oracle, &tolerances, x0, None, budget, &options),
        SolverKind::Vibpg => {
            let mut theta = if config.theta_root_find {
                ThetaSchedule::root_find(config.gamma)?
            } else {
                ThetaSchedule::closed_form(config.alpha, config.gamma)?
            };
            let x0_feasible = problem.to_feasible(&x0);
            vibpg_run(
                problem,
                &mut oracle,
                &mut theta,
                &tolerances,
                x0_feasible,
                x0,
                budget,
                &options,
            )
        }
    }
}

fn verify_bounds(
    trace: &RunTrace,
    problem: &QapRelaxProblem,
    reference: &Reference,
) -> Result<BoundFlags> {
    let mut flags = BoundFlags {
        descent_ok: None,
        averaged_ok: None,
        last_iterate_ok: None,
        rate_ok: None,
        lyapunov_ok: None,
        worst_violation: f64::NEG_INFINITY,
    };
    match trace.meta.solver {
        SolverKind::Ibpg => {
            let descent = check_descent_inequality(trace, problem, &reference.x_star)?;
            flags.descent_ok = Some(descent.max_scaled_residual <= BOUND_CHECK_TOL);
            flags.worst_violation = flags.worst_violation.max(descent.max_scaled_residual);
            let report = check_ibpg_bounds(trace, problem, &reference.x_star, reference.f_star)?;
            flags.averaged_ok = Some(report.averaged.holds(BOUND_CHECK_TOL));
            flags.last_iterate_ok = Some(report.last_iterate.holds(BOUND_CHECK_TOL));
            flags.worst_violation = flags
                .worst_violation
                .max(report.averaged.max_rel_violation)
                .max(report.last_iterate.max_rel_violation);
        }
        SolverKind::Vibpg => {
            let report = check_vibpg_bound(trace, problem, &reference.x_star, reference.f_star)?;
            flags.rate_ok = Some(report.rate_bound.holds(BOUND_CHECK_TOL));
            flags.lyapunov_ok = Some(report.lyapunov.holds(BOUND_CHECK_TOL));
            flags.worst_violation = flags
                .worst_violation
                .max(report.rate_bound.max_rel_violation)
                .max(report.lyapunov.max_rel_violation);
        }
    }
    Ok(flags)
}

/// Cartesian sweep over tolerance exponents and solvers; the reference is
/// computed (and cached) once, then the runs execute on worker threads, each
/// owning its state and writing to distinct files.
pub fn sweep(
    base: &ExperimentConfig,
    p_values: &[f64],
    solvers: &[SolverKind],
) -> Result<Vec<ExperimentOutcome>> {
    base.validate()?;
    if p_values.is_empty() || solvers.is_empty() {
        return Err(Error::Config("sweep needs at least one p and one solver".into()));
    }
    // Warm the reference cache before spawning workers.
    if base.reference == ReferenceSpec::Compute {
        let bytes = std::fs::read(&base.instance)?;
        let text = String::from_utf8_lossy(&bytes);
        let instance = parse_qaplib(&text, "warmup")?;
        let qap = build_relaxation(instance, StMode::LapDuals)?;
        load_or_compute_reference(&qap, &base.instance, &bytes, base.reference_tol)?;
    }

    let mut combos = Vec::new();
    for &solver in solvers {
        for &p in p_values {
            let mut cfg = base.clone();
            cfg.solver = solver;
            cfg.p = p;
            cfg.label = None;
            combos.push(cfg);
        }
    }
    let mut outcomes: Vec<Option<Result<ExperimentOutcome>>> =
        combos.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, cfg) in outcomes.iter_mut().zip(combos.iter()) {
            scope.spawn(move || {
                *slot = Some(run_experiment(cfg));
            });
        }
    });
    outcomes
        .into_iter()
        .map(|o| o.expect("worker completed"))
        .collect()
}

/// Reads the sidecar document of a trace CSV.
pub fn read_sidecar(csv_path: &Path) -> Result<TraceSidecar> {
    crate::solver::read_sidecar_file(csv_path)
}
