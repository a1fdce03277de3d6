//! The four subcommands. Each writes its human-readable summary to `out` and
//! returns a structured result for programmatic callers.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use finger_dyn_core::calibration::{fit, CalibrationProblem, FitError, FitReport, Reference};
use finger_dyn_core::dynamics::{neglected_torque, ModelVariant};
use finger_dyn_core::model::D11Form;
use finger_dyn_core::sim::{energy_audit, simulate, EnergyAudit, Trajectory};
use finger_dyn_core::validation::{self, CheckResult};
use finger_dyn_core::{Error as CoreError, FingerParams};
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const DEFAULT_TRAJECTORY: &str = "trajectory.csv";
pub const DEFAULT_DISCREPANCY_REPORT: &str = "discrepancy_report.txt";
pub const DEFAULT_FITTED_PARAMS: &str = "fitted_params.json";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub variant: Option<ModelVariant>,
    pub seed: Option<u64>,
    pub use_paper_d11: bool,
    pub reference: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    CliError::io(path)
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn fmt_vec(v: &Vector3<f64>) -> String {
    format!("[{:.9e}, {:.9e}, {:.9e}]", v[0], v[1], v[2])
}

fn fmt_deg(v: &Vector3<f64>) -> String {
    let d = v.map(f64::to_degrees);
    format!("[{:.4}, {:.4}, {:.4}]", d[0], d[1], d[2])
}

fn run(cfg: &RunConfig, variant: ModelVariant) -> Result<Trajectory, CliError> {
    let mut sim = cfg.sim;
    sim.variant = variant;
    simulate(&sim, &cfg.params, &cfg.profile).map_err(|e| match e {
        CoreError::Validation { .. } | CoreError::Parse(_) | CoreError::Io(_) => e.into(),
        other => CliError::Simulation(other),
    })
}

fn peak_abs(traj: &Trajectory, f: impl Fn(&finger_dyn_core::sim::Sample) -> Vector3<f64>) -> Vector3<f64> {
    traj.samples
        .iter()
        .fold(Vector3::zeros(), |acc, s| acc.zip_map(&f(s), |a, b| a.max(b.abs())))
}

fn tendon_offset_line(p: &FingerParams) -> String {
    format!("tendon offset e: {} mm", p.e * 1e3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub variant: ModelVariant,
    pub samples: usize,
    pub final_q: Vector3<f64>,
    pub peak_qdot: Vector3<f64>,
    pub audit: EnergyAudit,
    pub csv: PathBuf,
}

pub fn cmd_simulate(cfg: &RunConfig, opts: &Options, out: &mut dyn Write) -> Result<SimulateSummary, CliError> {
    let variant = opts.variant.unwrap_or(cfg.sim.variant);
    let traj = run(cfg, variant)?;
    let path = opts.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_TRAJECTORY));
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    traj.write_csv(&mut w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;

    let audit = energy_audit(&traj, &cfg.params)?;
    let last = traj.last();
    let summary = SimulateSummary {
        variant,
        samples: traj.samples.len(),
        final_q: last.q,
        peak_qdot: peak_abs(&traj, |s| s.qdot),
        audit,
        csv: path,
    };
    let mut text = String::new();
    writeln!(text, "variant: {variant}").unwrap();
    writeln!(text, "integrator: {}", cfg.sim.integrator).unwrap();
    writeln!(text, "{}", tendon_offset_line(&cfg.params)).unwrap();
    writeln!(text, "samples: {} (t = 0 .. {} s)", summary.samples, last.t).unwrap();
    writeln!(text, "final q (rad): {}", fmt_vec(&summary.final_q)).unwrap();
    writeln!(text, "final q (deg): {}", fmt_deg(&summary.final_q)).unwrap();
    writeln!(text, "peak |qdot| (rad/s): {}", fmt_vec(&summary.peak_qdot)).unwrap();
    writeln!(
        text,
        "energy drift: max |E - E(0)| = {:.6e} J (relative {:.3e})",
        audit.max_drift_rel * traj.samples.iter().map(|s| s.energy().abs()).fold(0.0, f64::max),
        audit.max_drift_rel
    )
    .unwrap();
    writeln!(
        text,
        "work: injected {:.6e} J, dissipated {:.6e} J",
        audit.injected_work, audit.dissipated_work
    )
    .unwrap();
    writeln!(
        text,
        "work-energy residual (relative): {:.3e}",
        audit.work_balance_residual
    )
    .unwrap();
    if opts.use_paper_d11 {
        writeln!(text, "note: --use-paper-d11 only affects `validate`").unwrap();
    }
    writeln!(text, "wrote: {}", summary.csv.display()).unwrap();
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub seed: u64,
    pub checks: Vec<(String, CheckResult)>,
    /// All `key: value` lines, byte-identical for a given seed and config.
    pub text: String,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, c)| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(set, c)| format!("{}[{set}]", c.name))
            .collect()
    }
}

/// Oracle sweeps on the configured parameters and on the unit-scale set.
pub fn validation_report(cfg: &RunConfig, seed: u64, form: D11Form) -> Result<ValidateReport, CliError> {
    let unit = FingerParams::unit();
    let (config_checks, unit_checks, dynamic, gap) = thread::scope(|s| {
        let a = s.spawn(|| validation::model_checks(&cfg.params, form, seed));
        let b = s.spawn(|| validation::model_checks(&unit, form, seed));
        let c = s.spawn(|| validation::dynamics_checks(&cfg.params));
        let gap = validation::christoffel_unsymmetrized_gap(
            &unit,
            validation::CHRISTOFFEL_SAMPLES,
            &mut validation::rng(seed),
        );
        (
            a.join().expect("check thread"),
            b.join().expect("check thread"),
            c.join().expect("check thread"),
            gap,
        )
    });
    let dynamic = dynamic.map_err(CliError::Simulation)?;

    let mut checks = Vec::new();
    checks.extend(config_checks.into_iter().map(|c| ("config".to_string(), c)));
    checks.extend(unit_checks.into_iter().map(|c| ("unit".to_string(), c)));
    checks.extend(dynamic.into_iter().map(|c| ("config".to_string(), c)));

    let mut text = String::new();
    writeln!(text, "seed: {seed}").unwrap();
    writeln!(
        text,
        "d11_form: {}",
        match form {
            D11Form::Corrected => "corrected",
            D11Form::AsPrinted => "as_printed",
        }
    )
    .unwrap();
    writeln!(text, "params_hash: {}", cfg.params.fingerprint()).unwrap();
    writeln!(text, "tendon_offset_mm: {}", cfg.params.e * 1e3).unwrap();
    for (set, c) in &checks {
        writeln!(
            text,
            "check.{set}.{}: {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
        writeln!(text, "check.{set}.{}.max_deviation: {:.6e}", c.name, c.max_deviation).unwrap();
        let tol = if c.tolerance == 0.0 {
            "exact".to_string()
        } else {
            format!("{:e}", c.tolerance)
        };
        writeln!(text, "check.{set}.{}.tolerance: {tol}", c.name).unwrap();
        writeln!(text, "check.{set}.{}.worst: {}", c.name, c.worst).unwrap();
    }
    writeln!(text, "info.unit.christoffel_unsymmetrized_max_entry_gap: {:.6e}", gap.0).unwrap();
    writeln!(text, "info.unit.christoffel_unsymmetrized_detail: {}", gap.1).unwrap();
    let mut report = ValidateReport { seed, checks, text };
    let failures = report.failures();
    let result = if failures.is_empty() {
        "PASS".to_string()
    } else {
        format!("FAIL ({})", failures.join(", "))
    };
    writeln!(report.text, "result: {result}").unwrap();
    Ok(report)
}

pub fn cmd_validate(cfg: &RunConfig, opts: &Options, out: &mut dyn Write) -> Result<ValidateReport, CliError> {
    let seed = opts.seed.unwrap_or(validation::DEFAULT_SEED);
    let form = if opts.use_paper_d11 {
        D11Form::AsPrinted
    } else {
        D11Form::Corrected
    };
    let report = validation_report(cfg, seed, form)?;
    out.write_all(report.text.as_bytes()).map_err(stdout_err)?;

    let target = match (&opts.out, report.passed()) {
        (Some(p), _) => Some(p.clone()),
        (None, false) => Some(PathBuf::from(DEFAULT_DISCREPANCY_REPORT)),
        (None, true) => None,
    };
    if let Some(path) = target {
        std::fs::write(&path, &report.text).map_err(io_err(&path))?;
        writeln!(out, "report: {}", path.display()).map_err(stdout_err)?;
    }
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::ChecksFailed(report.failures().join(", ")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub samples: usize,
    pub max_dq: [f64; 3],
    pub max_dqdot: [f64; 3],
    /// Peak `|D_off qddot + Cm qdot|` along the full-model run, N·m.
    pub peak_neglected_torque: f64,
    pub peak_inertial_coupling: f64,
    pub peak_coriolis: f64,
    /// Peak magnitude of the retained torques `phi(q) + cd qdot`, for scale.
    pub peak_retained_torque: f64,
    pub peak_applied_torque: f64,
}

pub fn compare_runs(full: &Trajectory, reduced: &Trajectory, p: &FingerParams) -> CompareReport {
    let mut r = CompareReport {
        samples: full.samples.len().min(reduced.samples.len()),
        max_dq: [0.0; 3],
        max_dqdot: [0.0; 3],
        peak_neglected_torque: 0.0,
        peak_inertial_coupling: 0.0,
        peak_coriolis: 0.0,
        peak_retained_torque: 0.0,
        peak_applied_torque: 0.0,
    };
    for (a, b) in full.samples.iter().zip(&reduced.samples) {
        for j in 0..3 {
            r.max_dq[j] = r.max_dq[j].max((a.q[j] - b.q[j]).abs());
            r.max_dqdot[j] = r.max_dqdot[j].max((a.qdot[j] - b.qdot[j]).abs());
        }
    }
    for s in &full.samples {
        let n = neglected_torque(&s.state(), &s.qddot, p);
        r.peak_neglected_torque = r.peak_neglected_torque.max(n.total().norm());
        r.peak_inertial_coupling = r.peak_inertial_coupling.max(n.inertial_coupling.norm());
        r.peak_coriolis = r.peak_coriolis.max(n.coriolis.norm());
        let retained = finger_dyn_core::model::potential_gradient(&s.q, p) + p.cd * s.qdot;
        r.peak_retained_torque = r.peak_retained_torque.max(retained.norm());
        r.peak_applied_torque = r.peak_applied_torque.max(s.tau.norm());
    }
    r
}

pub fn cmd_compare(cfg: &RunConfig, opts: &Options, out: &mut dyn Write) -> Result<CompareReport, CliError> {
    let (full, reduced) = thread::scope(|s| {
        let f = s.spawn(|| run(cfg, ModelVariant::Full));
        let r = s.spawn(|| run(cfg, ModelVariant::Reduced));
        (f.join().expect("run thread"), r.join().expect("run thread"))
    });
    let (full, reduced) = (full?, reduced?);
    let report = compare_runs(&full, &reduced, &cfg.params);

    let mut text = String::new();
    let v = |a: [f64; 3]| format!("[{:.6e}, {:.6e}, {:.6e}]", a[0], a[1], a[2]);
    writeln!(text, "samples: {}", report.samples).unwrap();
    writeln!(text, "max_abs_dq_rad: {}", v(report.max_dq)).unwrap();
    writeln!(text, "max_abs_dq_deg: {}", v(report.max_dq.map(f64::to_degrees))).unwrap();
    writeln!(text, "max_abs_dqdot_rad_s: {}", v(report.max_dqdot)).unwrap();
    writeln!(text, "peak_neglected_torque_Nm: {:.6e}", report.peak_neglected_torque).unwrap();
    writeln!(text, "peak_inertial_coupling_Nm: {:.6e}", report.peak_inertial_coupling).unwrap();
    writeln!(text, "peak_coriolis_Nm: {:.6e}", report.peak_coriolis).unwrap();
    writeln!(text, "peak_retained_torque_Nm: {:.6e}", report.peak_retained_torque).unwrap();
    writeln!(text, "peak_applied_torque_Nm: {:.6e}", report.peak_applied_torque).unwrap();
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    if let Some(path) = &opts.out {
        std::fs::write(path, &text).map_err(io_err(path))?;
        writeln!(out, "report: {}", path.display()).map_err(stdout_err)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct FittedParams<'a> {
    params: &'a FingerParams,
    fit: &'a FitReport,
}

pub fn cmd_calibrate(cfg: &RunConfig, opts: &Options, out: &mut dyn Write) -> Result<FitReport, CliError> {
    let Some(section) = &cfg.calibration else {
        return Err(CliError::Validation {
            key: "calibration".into(),
            constraint: "section is required for `calibrate`".into(),
        });
    };
    let path = match (&opts.reference, &section.reference) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => {
            return Err(CliError::Validation {
                key: "calibration.reference".into(),
                constraint: "no reference CSV given (use --reference or calibration.reference)".into(),
            })
        }
    };
    let reference = Reference::from_csv_path(&path).map_err(|e| match e {
        CoreError::Io(source) => CliError::Io {
            path: path.clone(),
            source,
        },
        other => other.into(),
    })?;

    let mut sim = cfg.sim;
    if let Some(v) = opts.variant {
        sim.variant = v;
    }
    let prob = CalibrationProblem {
        reference,
        free: section.free_with_bounds(),
        baseline: cfg.params,
        profile: cfg.profile.clone(),
        sim,
        weights: section.weights,
    };
    let x0 = section.start(&cfg.params);
    let result = fit(&prob, &x0);

    let report = match result {
        Ok(r) => r,
        Err(FitError::NotConverged(r)) => {
            let mut text = String::new();
            writeln!(text, "status: not converged").unwrap();
            describe_fit(&mut text, &r);
            out.write_all(text.as_bytes()).map_err(stdout_err)?;
            return Err(CliError::NotConverged(r));
        }
        Err(FitError::Invalid(e)) => return Err(e.into()),
    };

    let target = opts.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_FITTED_PARAMS));
    let json = serde_json::to_string_pretty(&FittedParams {
        params: &report.params,
        fit: &report,
    })
    .expect("fit report serializes");
    std::fs::write(&target, json + "\n").map_err(io_err(&target))?;

    let mut text = String::new();
    writeln!(text, "status: converged").unwrap();
    describe_fit(&mut text, &report);
    writeln!(text, "wrote: {}", target.display()).unwrap();
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(report)
}

fn describe_fit(text: &mut String, r: &FitReport) {
    for (p, v) in r.free.iter().zip(&r.x_best) {
        writeln!(text, "{p}: {v:.9e}").unwrap();
    }
    writeln!(text, "final_cost: {:.6e}", r.final_cost).unwrap();
    writeln!(text, "iterations: {}", r.iterations).unwrap();
    writeln!(text, "evaluations: {}", r.evaluations).unwrap();
    writeln!(text, "simplex_diameter: {:.3e}", r.diagnostics.simplex_diameter).unwrap();
    writeln!(text, "cost_spread: {:.3e}", r.diagnostics.cost_spread).unwrap();
    writeln!(text, "diverged_evaluations: {}", r.diagnostics.diverged_evaluations).unwrap();
    if r.diagnostics.flat_cost {
        writeln!(
            text,
            "diagnostic: flat cost, zero gradient at the start; the free parameters do not affect the trajectory"
        )
        .unwrap();
    }
}
