//! Identification of damping, spring stiffnesses and torque fractions from a
//! reference joint-angle trajectory.
//!
//! Masses, lengths and inertias are taken as known. The remaining parameters
//! are fitted by minimizing `1/2 |r|^2`, where `r` stacks the weighted
//! differences between simulated and reference joint angles, with a bounded
//! Nelder-Mead simplex. Candidate points are projected onto the bounds, so no
//! simulation ever runs outside them.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::ForceProfile;
use crate::dynamics::potential_hessian_fd;
use crate::model::inertia_matrix_closed;
use crate::sim::{simulate, IntegratorKind, SimConfig, Trajectory};
use crate::{Error, FingerParams, Result};

/// A parameter the calibration may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParam {
    Cd,
    Kt1,
    Kt2,
    Kt3,
    Alpha,
    Beta,
    Gamma,
}

impl FreeParam {
    pub const ALL: [FreeParam; 7] = [
        FreeParam::Cd,
        FreeParam::Kt1,
        FreeParam::Kt2,
        FreeParam::Kt3,
        FreeParam::Alpha,
        FreeParam::Beta,
        FreeParam::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FreeParam::Cd => "cd",
            FreeParam::Kt1 => "kt1",
            FreeParam::Kt2 => "kt2",
            FreeParam::Kt3 => "kt3",
            FreeParam::Alpha => "alpha",
            FreeParam::Beta => "beta",
            FreeParam::Gamma => "gamma",
        }
    }

    pub fn get(self, p: &FingerParams) -> f64 {
        match self {
            FreeParam::Cd => p.cd,
            FreeParam::Kt1 => p.kt1,
            FreeParam::Kt2 => p.kt2,
            FreeParam::Kt3 => p.kt3,
            FreeParam::Alpha => p.alpha,
            FreeParam::Beta => p.beta,
            FreeParam::Gamma => p.gamma,
        }
    }

    pub fn set(self, p: &mut FingerParams, value: f64) {
        let slot = match self {
            FreeParam::Cd => &mut p.cd,
            FreeParam::Kt1 => &mut p.kt1,
            FreeParam::Kt2 => &mut p.kt2,
            FreeParam::Kt3 => &mut p.kt3,
            FreeParam::Alpha => &mut p.alpha,
            FreeParam::Beta => &mut p.beta,
            FreeParam::Gamma => &mut p.gamma,
        };
        *slot = value;
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FreeParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FreeParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown calibration parameter `{s}`"))
    }
}

/// Closed search interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Reference joint-angle series `(t, q1, q2, q3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub t: Vec<f64>,
    pub q: Vec<Vector3<f64>>,
}

impl Reference {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Reference {
            t: traj.samples.iter().map(|s| s.t).collect(),
            q: traj.samples.iter().map(|s| s.q).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Reads a CSV with a header containing at least `t,q1,q2,q3`. Other
    /// columns and `#` comment lines are ignored, so trajectory files written
    /// by the simulator load directly.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let mut cols = [0usize; 4];
        for (slot, name) in cols.iter_mut().zip(["t", "q1", "q2", "q3"]) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("reference is missing column `{name}`")))?;
        }
        let mut t = Vec::new();
        let mut q = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let mut vals = [0.0; 4];
            for ((v, col), name) in vals.iter_mut().zip(cols).zip(["t", "q1", "q2", "q3"]) {
                let raw = record.get(col).unwrap_or("");
                *v = raw.parse().map_err(|_| {
                    Error::Parse(format!("data row {}: column `{name}`: cannot parse `{raw}`", row + 1))
                })?;
            }
            t.push(vals[0]);
            q.push(Vector3::new(vals[1], vals[2], vals[3]));
        }
        let reference = Reference { t, q };
        reference.validate()?;
        Ok(reference)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() < 2 || self.t.len() != self.q.len() {
            return Err(Error::validation("reference", "needs at least two samples"));
        }
        if self.t[0] < 0.0 {
            return Err(Error::validation("reference.t", "times must be >= 0"));
        }
        if !self.t.iter().all(|t| t.is_finite()) || !self.q.iter().all(|q| q.iter().all(|v| v.is_finite())) {
            return Err(Error::validation("reference", "all values must be finite"));
        }
        if let Some(n) = self.t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::validation(
                format!("reference.t[{}]", n + 1),
                "times must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn max_spacing(&self) -> f64 {
        self.t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Linear interpolation of `q` from a trajectory at time `t`.
fn interpolate_q(traj: &Trajectory, t: f64) -> Vector3<f64> {
    let s = &traj.samples;
    let hi = s.partition_point(|x| x.t < t);
    if hi == 0 {
        return s[0].q;
    }
    if hi == s.len() {
        return s[s.len() - 1].q;
    }
    let (a, b) = (&s[hi - 1], &s[hi]);
    if b.t == t {
        return b.q;
    }
    let w = (t - a.t) / (b.t - a.t);
    a.q + w * (b.q - a.q)
}

/// Periods (s) of the small-oscillation modes about `q0`, longest first.
/// Modes with non-positive stiffness are omitted.
pub fn linear_mode_periods(q0: &Vector3<f64>, p: &FingerParams) -> Vec<f64> {
    let d = inertia_matrix_closed(q0, p).0;
    let k = potential_hessian_fd(q0, p);
    let k = 0.5 * (k + k.transpose());
    let Some(chol) = d.cholesky() else {
        return Vec::new();
    };
    let l_inv = chol.l().try_inverse().unwrap_or_else(Matrix3::zeros);
    let a = l_inv * k * l_inv.transpose();
    let eig = SymmetricEigen::new(0.5 * (a + a.transpose()));
    // Finite-difference noise leaves tiny nonzero eigenvalues on flat modes.
    let floor = 1e-8 * eig.eigenvalues.amax();
    let mut periods: Vec<f64> = eig
        .eigenvalues
        .iter()
        .filter(|w2| **w2 > floor)
        .map(|w2| 2.0 * std::f64::consts::PI / w2.sqrt())
        .collect();
    periods.sort_by(|a, b| b.total_cmp(a));
    periods
}

/// Samples required per period of the slowest linear mode.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub reference: Reference,
    pub free: Vec<(FreeParam, Bounds)>,
    /// Values for all parameters not being fitted.
    pub baseline: FingerParams,
    pub profile: ForceProfile,
    /// Integration settings; `t_end` is replaced to cover the reference.
    pub sim: SimConfig,
    pub weights: [f64; 3],
}

/// Value returned for `1/2 |r|^2` when a candidate's simulation fails.
pub const DIVERGED_COST: f64 = 1e30;

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::validation("calibration.free", "needs at least one parameter"));
        }
        let mut seen = HashSet::new();
        for (param, b) in &self.free {
            if !seen.insert(*param) {
                return Err(Error::validation("calibration.free", format!("`{param}` listed twice")));
            }
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(Error::validation(
                    format!("calibration.bounds.{param}"),
                    "must be finite with lo < hi",
                ));
            }
            if b.lo < 0.0 {
                return Err(Error::validation(
                    format!("calibration.bounds.{param}"),
                    "lower bound must be >= 0",
                ));
            }
        }
        for (n, w) in self.weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::validation(
                    format!("calibration.weights[{n}]"),
                    "must be finite and >= 0",
                ));
            }
        }
        self.reference.validate()?;
        self.baseline.validate()?;
        self.profile.validate()?;

        if let Some(slowest) = linear_mode_periods(&self.sim.initial.q, &self.baseline).first() {
            let spacing = self.reference.max_spacing();
            if spacing > slowest / MIN_SAMPLES_PER_PERIOD {
                return Err(Error::validation(
                    "reference.t",
                    format!(
                        "sampled too coarsely: spacing {spacing:.3e} s exceeds 1/{MIN_SAMPLES_PER_PERIOD} of the \
                         slowest oscillation period {slowest:.3e} s"
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Baseline with `x` substituted for the free parameters.
    pub fn params_for(&self, x: &[f64]) -> FingerParams {
        let mut p = self.baseline;
        for ((param, _), v) in self.free.iter().zip(x) {
            param.set(&mut p, *v);
        }
        p
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((_, b), v) in self.free.iter().zip(x.iter_mut()) {
            *v = b.project(*v);
        }
    }

    pub fn initial_guess(&self) -> Vec<f64> {
        self.free.iter().map(|(param, _)| param.get(&self.baseline)).collect()
    }

    fn sim_config(&self) -> SimConfig {
        let mut cfg = self.sim;
        let t_last = *self.reference.t.last().expect("validated");
        cfg.t_end = match cfg.integrator {
            IntegratorKind::AdaptiveRk45 => t_last.max(cfg.record_every),
            _ => {
                let steps = (t_last / cfg.step - 1e-9).ceil().max(1.0);
                let record_steps = (cfg.record_every / cfg.step).round().max(1.0);
                (steps / record_steps).ceil() * record_steps * cfg.step
            }
        };
        cfg
    }

    /// Weighted stacked joint-angle errors, three per reference sample.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::validation("calibration.x", "wrong number of parameters"));
        }
        for ((param, b), v) in self.free.iter().zip(x) {
            if !b.contains(*v) {
                return Err(Error::validation(
                    format!("calibration.{param}"),
                    format!("{v} outside [{}, {}]", b.lo, b.hi),
                ));
            }
        }
        let p = self.params_for(x);
        let traj = simulate(&self.sim_config(), &p, &self.profile)?;
        let mut r = Vec::with_capacity(3 * self.reference.len());
        for (t, q_ref) in self.reference.t.iter().zip(&self.reference.q) {
            let q_sim = interpolate_q(&traj, *t);
            for j in 0..3 {
                r.push(self.weights[j] * (q_sim[j] - q_ref[j]));
            }
        }
        Ok(r)
    }

    /// `1/2 |r|^2`, or [`DIVERGED_COST`] when the simulation fails.
    pub fn cost(&self, x: &[f64]) -> (f64, bool) {
        match self.residual(x) {
            Ok(r) => {
                let c = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
                if c.is_finite() {
                    (c, true)
                } else {
                    (DIVERGED_COST, false)
                }
            }
            Err(_) => (DIVERGED_COST, false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when every vertex lies within this distance (max-norm) of the best.
    pub x_tol: f64,
    /// Stop when the spread of costs over the simplex falls below this.
    pub f_tol: f64,
    /// Initial simplex edge as a fraction of each parameter's bound width.
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 2000,
            x_tol: 1e-8,
            f_tol: 1e-12,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// Every vertex of the initial simplex had the same cost: the finite
    /// difference gradient is zero and the free parameters cannot be
    /// identified from this reference.
    pub flat_cost: bool,
    pub simplex_diameter: f64,
    pub cost_spread: f64,
    pub diverged_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub free: Vec<FreeParam>,
    pub x_best: Vec<f64>,
    #[serde(skip)]
    pub params: FingerParams,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best cost after each iteration.
    pub cost_history: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cost {:.6e} after {} iterations", self.final_cost, self.iterations)?;
        for (param, v) in self.free.iter().zip(&self.x_best) {
            write!(f, ", {param} = {v:.9e}")?;
        }
        if self.diagnostics.flat_cost {
            write!(f, " (flat cost: zero gradient, parameters unidentifiable)")?;
        }
        if self.diagnostics.diverged_evaluations > 0 {
            write!(f, " ({} simulations diverged)", self.diagnostics.diverged_evaluations)?;
        }
        Ok(())
    }
}

/// Failure of [`fit`]; carries the best iterate found.
#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("calibration did not converge: {0}")]
    NotConverged(Box<FitReport>),
    #[error(transparent)]
    Invalid(#[from] Error),
}

pub fn fit(prob: &CalibrationProblem, x0: &[f64]) -> std::result::Result<FitReport, FitError> {
    fit_with(prob, x0, &FitOptions::default())
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

/// Bounded Nelder-Mead minimization of `1/2 |residual|^2`.
pub fn fit_with(prob: &CalibrationProblem, x0: &[f64], opts: &FitOptions) -> std::result::Result<FitReport, FitError> {
    prob.validate()?;
    let n = prob.dim();
    if x0.len() != n {
        return Err(Error::validation("calibration.x0", format!("expected {n} values")).into());
    }
    for ((param, b), v) in prob.free.iter().zip(x0) {
        if !b.contains(*v) {
            return Err(Error::validation(
                format!("calibration.x0.{param}"),
                format!("{v} outside [{}, {}]", b.lo, b.hi),
            )
            .into());
        }
    }

    let mut evaluations = 0usize;
    let mut diverged = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let (f, ok) = prob.cost(x);
        if !ok {
            diverged += 1;
        }
        f
    };

    let mut simplex: Vec<Vertex> = Vec::with_capacity(n + 1);
    simplex.push(Vertex {
        x: x0.to_vec(),
        f: eval(x0),
    });
    for i in 0..n {
        let b = prob.free[i].1;
        let step = opts.initial_step * (b.hi - b.lo);
        let mut x = x0.to_vec();
        x[i] = if x[i] + step <= b.hi { x[i] + step } else { x[i] - step };
        let f = eval(&x);
        simplex.push(Vertex { x, f });
    }

    let spread = |s: &[Vertex]| s[n].f - s[0].f;
    let diameter = |s: &[Vertex]| {
        s[1..]
            .iter()
            .flat_map(|v| v.x.iter().zip(&s[0].x).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };
    let sort = |s: &mut Vec<Vertex>| s.sort_by(|a, b| a.f.total_cmp(&b.f));

    sort(&mut simplex);
    let f_scale = simplex[0].f.abs().max(1.0);
    let all_diverged = simplex.iter().all(|v| v.f >= DIVERGED_COST);
    let flat_cost = !all_diverged && spread(&simplex) <= 1e-15 * f_scale;

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    if !flat_cost && !all_diverged {
        while iterations < opts.max_iterations {
            if diameter(&simplex) < opts.x_tol || spread(&simplex) < opts.f_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v.x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].x)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                prob.project(&mut x);
                x
            };

            let xr = along(1.0);
            let fr = eval(&xr);
            if fr < simplex[0].f {
                let xe = along(2.0);
                let fe = eval(&xe);
                simplex[n] = if fe < fr {
                    Vertex { x: xe, f: fe }
                } else {
                    Vertex { x: xr, f: fr }
                };
            } else if fr < simplex[n - 1].f {
                simplex[n] = Vertex { x: xr, f: fr };
            } else {
                let (xc, fc) = if fr < simplex[n].f {
                    let xc = along(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < fr.min(simplex[n].f) {
                    simplex[n] = Vertex { x: xc, f: fc };
                } else {
                    let best = simplex[0].x.clone();
                    for v in simplex[1..].iter_mut() {
                        for (xi, bi) in v.x.iter_mut().zip(&best) {
                            *xi = bi + 0.5 * (*xi - bi);
                        }
                        v.f = eval(&v.x);
                    }
                }
            }
            sort(&mut simplex);
            history.push(simplex[0].f);
        }
        if !converged && (diameter(&simplex) < opts.x_tol || spread(&simplex) < opts.f_tol) {
            converged = true;
        }
    }

    let best = &simplex[0];
    let report = FitReport {
        free: prob.free.iter().map(|(p, _)| *p).collect(),
        x_best: best.x.clone(),
        params: prob.params_for(&best.x),
        final_cost: best.f,
        iterations,
        evaluations,
        converged,
        cost_history: history,
        diagnostics: FitDiagnostics {
            flat_cost,
            simplex_diameter: diameter(&simplex),
            cost_spread: spread(&simplex),
            diverged_evaluations: diverged,
        },
    };
    if report.converged && report.final_cost < DIVERGED_COST {
        Ok(report)
    } else {
        Err(FitError::NotConverged(Box::new(report)))
    }
}
