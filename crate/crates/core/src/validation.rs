//! Seeded randomized sweeps that compare every closed-form quantity with its
//! independent numerical route.
//!
//! Each check returns the worst deviation it saw and the tolerance it was held
//! to. The same seed always produces the same samples and the same numbers.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::{ForceProfile, ForceTable};
use crate::model::{self, D11Form, FD_STEP};
use crate::sim::{energy_audit, simulate, SimConfig};
use crate::{FingerParams, JointState, Result};

pub const INERTIA_TOL: f64 = 1e-12;
pub const CHRISTOFFEL_TOL: f64 = 1e-6;
pub const PASSIVITY_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;
pub const DISSIPATION_TOL: f64 = 1e-8;
pub const WORK_BALANCE_TOL: f64 = 1e-4;

pub const INERTIA_SAMPLES: usize = 1000;
pub const CHRISTOFFEL_SAMPLES: usize = 200;
pub const PASSIVITY_SAMPLES: usize = 200;
pub const GRADIENT_SAMPLES: usize = 200;

pub const DEFAULT_SEED: u64 = 20_170_421;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Where the worst deviation occurred, e.g. `d_11 at q = (...)`.
    pub worst: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, max_deviation: f64, tolerance: f64, worst: String) -> Self {
        CheckResult {
            name: name.into(),
            max_deviation,
            tolerance,
            passed: max_deviation < tolerance,
            worst,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<5} {:<36} max_dev = {:.3e}  tol = {}  worst: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_deviation,
            if self.tolerance == 0.0 {
                "exact".to_string()
            } else {
                format!("{:.1e}", self.tolerance)
            },
            self.worst
        )
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_angles<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-PI..=PI))
}

/// Uniform in the unit ball.
pub fn random_rates<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

fn fmt_q(q: &Vector3<f64>) -> String {
    format!("({:.6}, {:.6}, {:.6})", q[0], q[1], q[2])
}

/// Closed-form `D` against the Jacobian assembly over random configurations.
pub fn inertia_equivalence<R: Rng>(p: &FingerParams, form: D11Form, samples: usize, rng: &mut R) -> CheckResult {
    let mut worst = (0.0, (0, 0), Vector3::zeros());
    for _ in 0..samples {
        let q = random_angles(rng);
        let diff = model::inertia_matrix_closed_with(&q, p, form).0 - model::inertia_matrix_jacobian(&q, p).0;
        let (idx, dev) =
            diff.iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if dev > worst.0 {
            // Column-major storage; report the upper-triangle name.
            let (r, c) = (idx % 3, idx / 3);
            worst = (dev, (r.min(c), r.max(c)), q);
        }
    }
    let (dev, (r, c), q) = worst;
    CheckResult::new(
        "inertia_closed_vs_jacobian",
        dev,
        INERTIA_TOL,
        format!("d_{}{} at q = {}", r + 1, c + 1, fmt_q(&q)),
    )
}

/// Exact symmetry and positive leading minors of both `D` routes.
pub fn inertia_structure<R: Rng>(p: &FingerParams, samples: usize, rng: &mut R) -> CheckResult {
    let mut asym: f64 = 0.0;
    let mut min_minor = f64::INFINITY;
    let mut at = Vector3::zeros();
    for _ in 0..samples {
        let q = random_angles(rng);
        for d in [
            model::inertia_matrix_closed(&q, p),
            model::inertia_matrix_jacobian(&q, p),
        ] {
            asym = asym.max((d.0 - d.0.transpose()).amax());
            let m = d.leading_minors().into_iter().fold(f64::INFINITY, f64::min);
            if m < min_minor {
                min_minor = m;
                at = q;
            }
        }
    }
    // Fails on any asymmetry or a non-positive minor.
    let dev = if min_minor > 0.0 { asym } else { f64::INFINITY };
    let mut r = CheckResult::new(
        "inertia_symmetric_positive_definite",
        dev,
        0.0,
        format!("smallest leading minor {min_minor:.3e} at q = {}", fmt_q(&at)),
    );
    r.passed = asym == 0.0 && min_minor > 0.0;
    r
}

fn christoffel_name((i, j, k): (usize, usize, usize)) -> String {
    format!("C_{}{}{}", i + 1, j + 1, k + 1)
}

/// Closed-form Christoffel coefficients against finite differences of the
/// Jacobian-assembled `D`, plus the exact zeros.
pub fn christoffel_equivalence<R: Rng>(p: &FingerParams, samples: usize, rng: &mut R) -> Vec<CheckResult> {
    let mut worst = (0.0, (0, 0, 0), Vector3::zeros());
    let mut c333: f64 = 0.0;
    for _ in 0..samples {
        let q = random_angles(rng);
        let closed = model::christoffel_closed(&q, p);
        let (dev, idx) = closed.max_abs_diff(&model::christoffel_fd(&q, p));
        if dev > worst.0 {
            worst = (dev, idx, q);
        }
        c333 = c333.max(closed[(2, 2, 2)].abs());
    }
    let at_zero = model::christoffel_closed(&Vector3::zeros(), p)
        .entries()
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);

    let mut exact_zero = CheckResult::new(
        "christoffel_zero_entries",
        at_zero.max(c333),
        0.0,
        format!("max |C(0)| = {at_zero:e}, max |C_333| = {c333:e}"),
    );
    exact_zero.passed = at_zero == 0.0 && c333 == 0.0;

    vec![
        CheckResult::new(
            "christoffel_closed_vs_fd",
            worst.0,
            CHRISTOFFEL_TOL,
            format!("{} at q = {}", christoffel_name(worst.1), fmt_q(&worst.2)),
        ),
        exact_zero,
    ]
}

/// Largest entrywise gap between the closed form and the unsymmetrized
/// finite-difference expression. This is expected to be large: the two agree
/// only after contraction with `qdot_i qdot_j`.
pub fn christoffel_unsymmetrized_gap<R: Rng>(p: &FingerParams, samples: usize, rng: &mut R) -> (f64, String) {
    let mut worst = (0.0, (0, 0, 0));
    let mut torque_gap: f64 = 0.0;
    for _ in 0..samples {
        let q = random_angles(rng);
        let qd = random_rates(rng);
        let closed = model::christoffel_closed(&q, p);
        let raw = model::christoffel_fd_unsymmetrized(&q, p);
        let (dev, idx) = closed.max_abs_diff(&raw);
        if dev > worst.0 {
            worst = (dev, idx);
        }
        torque_gap = torque_gap.max((closed.quadratic_torque(&qd) - raw.quadratic_torque(&qd)).amax());
    }
    (
        worst.0,
        format!(
            "worst entry {}, quadratic torque agrees to {torque_gap:.3e}",
            christoffel_name(worst.1)
        ),
    )
}

/// `qdot^T (Ddot - 2 Cm) qdot = 0`, with `Ddot` by central difference along
/// the flow `q + eps qdot`.
pub fn passivity<R: Rng>(p: &FingerParams, samples: usize, rng: &mut R) -> CheckResult {
    let mut worst = (0.0, Vector3::zeros(), Vector3::zeros());
    for _ in 0..samples {
        let q = random_angles(rng);
        let qd = random_rates(rng);
        let d_dot = (model::inertia_matrix_jacobian(&(q + FD_STEP * qd), p).0
            - model::inertia_matrix_jacobian(&(q - FD_STEP * qd), p).0)
            / (2.0 * FD_STEP);
        let cm = model::coriolis_matrix(&q, &qd, p);
        let form = qd.dot(&((d_dot - 2.0 * cm) * qd)).abs();
        if form > worst.0 {
            worst = (form, q, qd);
        }
    }
    CheckResult::new(
        "passivity_quadratic_form",
        worst.0,
        PASSIVITY_TOL,
        format!("q = {}, qdot = {}", fmt_q(&worst.1), fmt_q(&worst.2)),
    )
}

/// Analytic potential gradient against central differences, with gravity on
/// or off and random spring stiffnesses at each sample.
pub fn gradient_check<R: Rng>(p: &FingerParams, samples: usize, rng: &mut R) -> CheckResult {
    let spring_scale = [p.kt1, p.kt2, p.kt3].into_iter().fold(0.0, f64::max).max(1.0);
    let mut worst = (0.0, Vector3::zeros(), 0.0);
    for _ in 0..samples {
        let mut ps = *p;
        ps.g = if rng.random_bool(0.5) { 9.81 } else { 0.0 };
        ps.kt1 = rng.random_range(0.0..spring_scale);
        ps.kt2 = rng.random_range(0.0..spring_scale);
        ps.kt3 = rng.random_range(0.0..spring_scale);
        let q = random_angles(rng);
        let analytic = model::potential_gradient(&q, &ps);
        let numeric = Vector3::from_fn(|i, _| {
            let mut plus = q;
            let mut minus = q;
            plus[i] += FD_STEP;
            minus[i] -= FD_STEP;
            (model::potential_energy(&plus, &ps) - model::potential_energy(&minus, &ps)) / (2.0 * FD_STEP)
        });
        let rel = (analytic - numeric).amax() / analytic.amax().max(1e-12);
        if rel > worst.0 {
            worst = (rel, q, ps.g);
        }
    }
    CheckResult::new(
        "potential_gradient_vs_fd",
        worst.0,
        GRADIENT_TOL,
        format!("q = {}, g = {}", fmt_q(&worst.1), worst.2),
    )
}

/// Initial bend used by the energy runs.
pub fn energy_test_state() -> JointState {
    JointState::at_rest(Vector3::new(0.4, 0.3, 0.2))
}

/// Undamped, unactuated RK4 run (h = 1e-4 s, 1 s): relative energy drift.
pub fn energy_conservation(p: &FingerParams) -> Result<CheckResult> {
    let mut ps = *p;
    ps.cd = 0.0;
    let cfg = SimConfig {
        step: 1e-4,
        t_end: 1.0,
        record_every: 1e-4,
        initial: energy_test_state(),
        ..Default::default()
    };
    let traj = simulate(&cfg, &ps, &ForceProfile::default())?;
    let audit = energy_audit(&traj, &ps)?;
    Ok(CheckResult::new(
        "energy_conservation_undamped",
        audit.max_drift_rel,
        ENERGY_DRIFT_TOL,
        format!("E(0) = {:.6e} J", traj.first().energy()),
    ))
}

/// Damped, unactuated run: energy must not increase between samples.
pub fn damped_dissipation(p: &FingerParams) -> Result<CheckResult> {
    let mut ps = *p;
    if ps.cd == 0.0 {
        ps.cd = 1e-3;
    }
    let cfg = SimConfig {
        step: 1e-4,
        t_end: 1.0,
        record_every: 1e-4,
        initial: energy_test_state(),
        ..Default::default()
    };
    let traj = simulate(&cfg, &ps, &ForceProfile::default())?;
    let audit = energy_audit(&traj, &ps)?;
    Ok(CheckResult::new(
        "energy_non_increasing_damped",
        audit.max_energy_increase_rel.max(0.0),
        DISSIPATION_TOL,
        format!("dissipated {:.6e} J", audit.dissipated_work),
    ))
}

/// Actuated, damped run sampled at every step: work-energy residual.
pub fn work_balance(p: &FingerParams) -> Result<CheckResult> {
    let mut ps = *p;
    if ps.cd == 0.0 {
        ps.cd = 1e-3;
    }
    let cfg = SimConfig {
        step: 1e-4,
        t_end: 1.0,
        record_every: 1e-4,
        initial: energy_test_state(),
        ..Default::default()
    };
    let profile = ForceProfile::Table(ForceTable::new(vec![(0.0, 0.0), (0.3, 3.0), (0.7, 3.0), (1.0, 1.0)])?);
    let traj = simulate(&cfg, &ps, &profile)?;
    let audit = energy_audit(&traj, &ps)?;
    Ok(CheckResult::new(
        "work_energy_balance",
        audit.work_balance_residual,
        WORK_BALANCE_TOL,
        format!("injected {:.6e} J", audit.injected_work),
    ))
}

/// The kinematic and energetic oracle checks on one parameter set.
pub fn model_checks(p: &FingerParams, form: D11Form, seed: u64) -> Vec<CheckResult> {
    let mut rng = rng(seed);
    let mut out = vec![
        inertia_equivalence(p, form, INERTIA_SAMPLES, &mut rng),
        inertia_structure(p, INERTIA_SAMPLES, &mut rng),
    ];
    out.extend(christoffel_equivalence(p, CHRISTOFFEL_SAMPLES, &mut rng));
    out.push(passivity(p, PASSIVITY_SAMPLES, &mut rng));
    out.push(gradient_check(p, GRADIENT_SAMPLES, &mut rng));
    out
}

pub fn dynamics_checks(p: &FingerParams) -> Result<Vec<CheckResult>> {
    Ok(vec![energy_conservation(p)?, damped_dissipation(p)?, work_balance(p)?])
}

/// Largest entry of `D` for a parameter set, for scaling messages.
pub fn inertia_scale(p: &FingerParams) -> f64 {
    let d: Matrix3<f64> = model::inertia_matrix_jacobian(&Vector3::zeros(), p).0;
    d.amax()
}
