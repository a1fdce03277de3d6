//! Forward and inverse dynamics of the damped chain.
//!
//! Equation of motion, with the damping torque on the resisting side:
//!
//! ```text
//! D(q) qddot + Cm(q, qdot) qdot + phi(q) + cd qdot = tau
//! ```
//!
//! The reduced variant keeps only `diag(D)`, drops every Christoffel term and
//! retains gravity, springs and damping.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{self, FD_STEP};
use crate::{Error, FingerParams, JointState, Result};

/// Inertia condition estimates above this are treated as singular.
pub const MAX_INERTIA_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    #[default]
    Full,
    Reduced,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Full => "full",
            ModelVariant::Reduced => "reduced",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ModelVariant::Full),
            "reduced" => Ok(ModelVariant::Reduced),
            other => Err(format!("unknown model variant `{other}` (expected full or reduced)")),
        }
    }
}

/// Joint torques `[tau1, tau2, tau3]` (MCP, PIP, DIP), N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneralizedForces(pub Vector3<f64>);

impl GeneralizedForces {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Self {
        GeneralizedForces(Vector3::new(t1, t2, t3))
    }

    pub fn zero() -> Self {
        GeneralizedForces(Vector3::zeros())
    }
}

fn ensure_finite(v: &Vector3<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

/// Bias torque `Cm qdot + phi + cd qdot` for the chosen variant.
fn bias_torque(s: &JointState, p: &FingerParams, v: ModelVariant) -> Vector3<f64> {
    let passive = model::potential_gradient(&s.q, p) + p.cd * s.qdot;
    match v {
        ModelVariant::Full => model::coriolis_matrix(&s.q, &s.qdot, p) * s.qdot + passive,
        ModelVariant::Reduced => passive,
    }
}

/// Joint accelerations for applied torque `tau`.
pub fn forward_dynamics(
    s: &JointState,
    tau: &GeneralizedForces,
    p: &FingerParams,
    v: ModelVariant,
) -> Result<Vector3<f64>> {
    ensure_finite(&s.q, "q")?;
    ensure_finite(&s.qdot, "qdot")?;
    ensure_finite(&tau.0, "tau")?;

    let d = model::inertia_matrix_closed(&s.q, p);
    let rhs = tau.0 - bias_torque(s, p, v);
    match v {
        ModelVariant::Full => solve_spd(&d.0, &rhs),
        ModelVariant::Reduced => {
            let diag = d.diagonal();
            let (lo, hi) = (diag.min(), diag.max());
            if lo <= 0.0 || hi / lo > MAX_INERTIA_CONDITION {
                return Err(Error::SingularInertia {
                    condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
                });
            }
            Ok(rhs.component_div(&diag))
        }
    }
}

/// Cholesky solve with a cheap condition estimate from the factor diagonal.
fn solve_spd(d: &Matrix3<f64>, rhs: &Vector3<f64>) -> Result<Vector3<f64>> {
    let chol = d.cholesky().ok_or(Error::SingularInertia {
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty().diagonal();
    let condition = (l.max() / l.min()).powi(2);
    if !(condition <= MAX_INERTIA_CONDITION) {
        return Err(Error::SingularInertia { condition });
    }
    Ok(chol.solve(rhs))
}

/// Torque required to produce `qddot` in state `s`.
pub fn inverse_dynamics(
    s: &JointState,
    qddot: &Vector3<f64>,
    p: &FingerParams,
    v: ModelVariant,
) -> Result<GeneralizedForces> {
    ensure_finite(&s.q, "q")?;
    ensure_finite(&s.qdot, "qdot")?;
    ensure_finite(qddot, "qddot")?;

    let d = model::inertia_matrix_closed(&s.q, p);
    let inertial = match v {
        ModelVariant::Full => d.0 * qddot,
        ModelVariant::Reduced => d.diagonal().component_mul(qddot),
    };
    Ok(GeneralizedForces(inertial + bias_torque(s, p, v)))
}

/// Torque terms the reduced model omits: off-diagonal inertia coupling and
/// the full centrifugal/Coriolis torque, evaluated at `(s, qddot)`.
pub fn neglected_torque(s: &JointState, qddot: &Vector3<f64>, p: &FingerParams) -> NeglectedTorque {
    let d = model::inertia_matrix_closed(&s.q, p).0;
    let off_diagonal = d - Matrix3::from_diagonal(&d.diagonal());
    NeglectedTorque {
        inertial_coupling: off_diagonal * qddot,
        coriolis: model::coriolis_matrix(&s.q, &s.qdot, p) * s.qdot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeglectedTorque {
    pub inertial_coupling: Vector3<f64>,
    pub coriolis: Vector3<f64>,
}

impl NeglectedTorque {
    pub fn total(&self) -> Vector3<f64> {
        self.inertial_coupling + self.coriolis
    }
}

pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;
pub const EQUILIBRIUM_MAX_ITERATIONS: usize = 100;
const MAX_STEP_HALVINGS: usize = 30;

/// Static equilibrium `phi(q*) = tau_const` by damped Newton iteration.
///
/// The Jacobian of `phi` is taken by central differences. When a full Newton
/// step does not reduce the residual it is halved, up to 30 times.
pub fn static_equilibrium(
    tau_const: &GeneralizedForces,
    p: &FingerParams,
    q_guess: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    ensure_finite(&tau_const.0, "tau")?;
    ensure_finite(q_guess, "q_guess")?;

    let residual = |q: &Vector3<f64>| model::potential_gradient(q, p) - tau_const.0;
    let mut q = *q_guess;
    let mut r = residual(&q);
    let mut norm = r.amax();
    let mut iterations = 0;

    for iteration in 0..EQUILIBRIUM_MAX_ITERATIONS {
        iterations = iteration;
        if norm < EQUILIBRIUM_TOLERANCE {
            return Ok(q);
        }
        let jac = potential_hessian_fd(&q, p);
        let Some(step) = jac.lu().solve(&(-r)) else {
            return Err(Error::NoConvergence {
                best: q.into(),
                residual: norm,
                iterations: iteration,
            });
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let trial = q + scale * step;
            let r_trial = residual(&trial);
            let n_trial = r_trial.amax();
            if n_trial < norm {
                q = trial;
                r = r_trial;
                norm = n_trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // The residual floor of the finite-difference Jacobian was reached.
            break;
        }
    }

    if norm < EQUILIBRIUM_TOLERANCE {
        Ok(q)
    } else {
        Err(Error::NoConvergence {
            best: q.into(),
            residual: norm,
            iterations: iterations + 1,
        })
    }
}

/// `d phi / d q` by central differences of the analytic gradient.
pub fn potential_hessian_fd(q: &Vector3<f64>, p: &FingerParams) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        let mut plus = *q;
        let mut minus = *q;
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        let col = (model::potential_gradient(&plus, p) - model::potential_gradient(&minus, p)) / (2.0 * FD_STEP);
        h.set_column(i, &col);
    }
    h
}
