//! Time integration, trajectory recording and energy auditing.
//!
//! The state is integrated as the first-order system `y = (q, qdot)` with
//! `qddot` from [`forward_dynamics`]. Applied torque is re-evaluated at every
//! stage time, so time-varying force profiles are sampled correctly between
//! steps. Force discontinuities are not localized; the adaptive controller
//! handles them by rejecting steps.

use std::io::Write;

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::{joint_torques, ForceProfile};
use crate::dynamics::{forward_dynamics, GeneralizedForces, ModelVariant};
use crate::model::{kinetic_energy, potential_energy};
use crate::{Error, FingerParams, JointState, Result};

type State6 = SVector<f64, 6>;

/// Applied torque as a function of time and state.
pub type TorqueFn<'a> = dyn Fn(f64, &JointState) -> GeneralizedForces + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    Rk4,
    SemiImplicitEuler,
    AdaptiveRk45,
}

impl std::fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::SemiImplicitEuler => "semi_implicit_euler",
            IntegratorKind::AdaptiveRk45 => "adaptive_rk45",
        })
    }
}

/// Error control for [`IntegratorKind::AdaptiveRk45`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveTolerance {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for AdaptiveTolerance {
    fn default() -> Self {
        AdaptiveTolerance {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-9,
            h_max: 1e-2,
        }
    }
}

impl AdaptiveTolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::validation("sim.tolerance.rtol", "must be finite and > 0"));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(Error::validation("sim.tolerance.atol", "must be finite and > 0"));
        }
        if !(self.h_min > 0.0 && self.h_min.is_finite()) {
            return Err(Error::validation("sim.tolerance.h_min", "must be finite and > 0"));
        }
        if !(self.h_max >= self.h_min && self.h_max.is_finite()) {
            return Err(Error::validation("sim.tolerance.h_max", "must be finite and >= h_min"));
        }
        Ok(())
    }
}

fn default_step() -> f64 {
    1e-4
}

fn default_t_end() -> f64 {
    2.0
}

fn default_record_every() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub integrator: IntegratorKind,
    /// Fixed step size (s); for the adaptive integrator, the first trial step.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub tolerance: AdaptiveTolerance,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    #[serde(default)]
    pub initial: JointState,
    #[serde(default)]
    pub variant: ModelVariant,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            integrator: IntegratorKind::Rk4,
            step: default_step(),
            tolerance: AdaptiveTolerance::default(),
            t_end: default_t_end(),
            record_every: default_record_every(),
            initial: JointState::default(),
            variant: ModelVariant::Full,
        }
    }
}

// Relative slack when checking that a duration is a whole number of steps.
const GRID_SLACK: f64 = 1e-9;

fn whole_steps(duration: f64, h: f64) -> Option<usize> {
    let n = (duration / h).round();
    ((n * h - duration).abs() <= GRID_SLACK * duration.max(h) && n >= 1.0).then_some(n as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("sim.step", "must be finite and > 0"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::validation("sim.t_end", "must be finite and > 0"));
        }
        if !(self.record_every > 0.0 && self.record_every.is_finite()) {
            return Err(Error::validation("sim.record_every", "must be finite and > 0"));
        }
        if !self.initial.is_finite() {
            return Err(Error::validation("sim.initial", "must be finite"));
        }
        match self.integrator {
            IntegratorKind::AdaptiveRk45 => self.tolerance.validate()?,
            IntegratorKind::Rk4 | IntegratorKind::SemiImplicitEuler => {
                if whole_steps(self.t_end, self.step).is_none() {
                    return Err(Error::validation("sim.t_end", "must be a whole number of steps"));
                }
                if whole_steps(self.record_every, self.step).is_none() {
                    return Err(Error::validation(
                        "sim.record_every",
                        "must be a whole (>= 1) number of fixed steps",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn pack(s: &JointState) -> State6 {
    State6::new(s.q[0], s.q[1], s.q[2], s.qdot[0], s.qdot[1], s.qdot[2])
}

fn unpack(y: &State6) -> JointState {
    JointState::new(y.fixed_rows::<3>(0).into(), y.fixed_rows::<3>(3).into())
}

fn as_state_error(e: Error, t: f64, s: &JointState) -> Error {
    match e {
        Error::NonFiniteInput(_) => Error::NonFiniteState {
            t,
            q: s.q.into(),
            qdot: s.qdot.into(),
        },
        other => other,
    }
}

fn rhs(t: f64, y: &State6, torque: &TorqueFn, p: &FingerParams, v: ModelVariant) -> Result<State6> {
    let s = unpack(y);
    let qddot = forward_dynamics(&s, &torque(t, &s), p, v).map_err(|e| as_state_error(e, t, &s))?;
    let mut dy = State6::zeros();
    dy.fixed_rows_mut::<3>(0).copy_from(&s.qdot);
    dy.fixed_rows_mut::<3>(3).copy_from(&qddot);
    Ok(dy)
}

fn check_finite(t: f64, y: &State6) -> Result<JointState> {
    let s = unpack(y);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFiniteState {
            t,
            q: s.q.into(),
            qdot: s.qdot.into(),
        })
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn step_rk4(
    s: &JointState,
    t: f64,
    h: f64,
    torque: &TorqueFn,
    p: &FingerParams,
    v: ModelVariant,
) -> Result<JointState> {
    let y = pack(s);
    let k1 = rhs(t, &y, torque, p, v)?;
    let k2 = rhs(t + 0.5 * h, &(y + 0.5 * h * k1), torque, p, v)?;
    let k3 = rhs(t + 0.5 * h, &(y + 0.5 * h * k2), torque, p, v)?;
    let k4 = rhs(t + h, &(y + h * k3), torque, p, v)?;
    let next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(t + h, &next)
}

/// Symplectic (velocity-first) Euler step.
pub fn step_semi_implicit_euler(
    s: &JointState,
    t: f64,
    h: f64,
    torque: &TorqueFn,
    p: &FingerParams,
    v: ModelVariant,
) -> Result<JointState> {
    let qddot = forward_dynamics(s, &torque(t, s), p, v).map_err(|e| as_state_error(e, t, s))?;
    let qdot = s.qdot + h * qddot;
    let q = s.q + h * qdot;
    let y = pack(&JointState::new(q, qdot));
    check_finite(t + h, &y)
}

/// Result of one accepted adaptive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStep {
    pub state: JointState,
    pub t_new: f64,
    /// Size of the accepted step.
    pub h_used: f64,
    /// Proposed size of the next step.
    pub h_next: f64,
    /// Trial steps rejected before this one was accepted.
    pub rejected: usize,
}

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Returns the fifth-order solution and the scaled error norm (`<= 1` accepts).
fn dopri_trial(
    y: &State6,
    t: f64,
    h: f64,
    torque: &TorqueFn,
    p: &FingerParams,
    v: ModelVariant,
    tol: &AdaptiveTolerance,
) -> Result<(State6, f64)> {
    let mut k = [State6::zeros(); 7];
    for stage in 0..7 {
        let mut yi = *y;
        for (j, a) in A[stage].iter().enumerate().take(stage) {
            yi += (h * a) * k[j];
        }
        if !yi.iter().all(|x| x.is_finite()) {
            // Overflow inside a trial step; let the controller shrink it.
            return Ok((*y, f64::INFINITY));
        }
        k[stage] = match rhs(t + C[stage] * h, &yi, torque, p, v) {
            Ok(k) => k,
            // Stage 0 is the accepted state itself, so failures there are real.
            Err(e) if stage == 0 => return Err(e),
            Err(_) => return Ok((*y, f64::INFINITY)),
        };
    }
    let mut y5 = *y;
    let mut err = State6::zeros();
    for i in 0..7 {
        y5 += (h * B5[i]) * k[i];
        err += (h * (B5[i] - B4[i])) * k[i];
    }
    let mut norm: f64 = 0.0;
    for i in 0..6 {
        let scale = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
        norm = norm.max(err[i].abs() / scale);
    }
    if !norm.is_finite() {
        norm = f64::INFINITY;
    }
    Ok((y5, norm))
}

fn propose(h: f64, norm: f64) -> f64 {
    let factor = if norm == 0.0 {
        MAX_SCALE
    } else {
        (SAFETY * norm.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
    };
    h * factor
}

/// One accepted embedded 4(5) step, retrying with smaller steps on rejection.
pub fn step_adaptive(
    s: &JointState,
    t: f64,
    h_try: f64,
    torque: &TorqueFn,
    p: &FingerParams,
    v: ModelVariant,
    tol: &AdaptiveTolerance,
) -> Result<AdaptiveStep> {
    let y = pack(s);
    let mut h = h_try.min(tol.h_max);
    let mut rejected = 0;
    loop {
        if h < tol.h_min {
            return Err(Error::StepUnderflow { t, h, h_min: tol.h_min });
        }
        let (y5, norm) = dopri_trial(&y, t, h, torque, p, v, tol)?;
        if norm <= 1.0 {
            let state = check_finite(t + h, &y5)?;
            let h_next = propose(h, norm).clamp(tol.h_min, tol.h_max);
            return Ok(AdaptiveStep {
                state,
                t_new: t + h,
                h_used: h,
                h_next,
                rejected,
            });
        }
        rejected += 1;
        h = propose(h, norm);
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    pub qddot: Vector3<f64>,
    pub tau: Vector3<f64>,
    pub kinetic: f64,
    pub potential: f64,
}

impl Sample {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.potential
    }

    pub fn state(&self) -> JointState {
        JointState::new(self.q, self.qdot)
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub params_hash: String,
    pub params: FingerParams,
    pub config: SimConfig,
    pub profile: ForceProfile,
}

/// Accepted step size log of a run, for inspecting adaptive behaviour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLog {
    /// `(t_start, h)` of every accepted step.
    pub accepted: Vec<(f64, f64)>,
    pub rejected: usize,
}

impl StepLog {
    pub fn min_step(&self) -> Option<f64> {
        self.accepted.iter().map(|(_, h)| *h).reduce(f64::min)
    }

    pub fn max_step(&self) -> Option<f64> {
        self.accepted.iter().map(|(_, h)| *h).reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub meta: RunMetadata,
    pub steps: StepLog,
}

pub const CSV_HEADER: &str = "t,q1,q2,q3,qd1,qd2,qd3,qdd1,qdd2,qdd3,tau1,tau2,tau3,K,P,E";

impl Trajectory {
    pub fn variant(&self) -> ModelVariant {
        self.meta.config.variant
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        &self.samples[self.samples.len() - 1]
    }

    /// Writes `# key: value` metadata lines, the 16-column header and one row
    /// per sample with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = &self.meta;
        writeln!(w, "# generator: finger-dyn {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# variant: {}", m.config.variant)?;
        writeln!(w, "# integrator: {}", m.config.integrator)?;
        writeln!(w, "# params_hash: {}", m.params_hash)?;
        writeln!(w, "# params: {}", json(&m.params))?;
        writeln!(w, "# sim: {}", json(&m.config))?;
        writeln!(w, "# profile: {}", json(&m.profile))?;
        writeln!(w, "{CSV_HEADER}")?;
        let mut row = String::with_capacity(16 * 25);
        for s in &self.samples {
            row.clear();
            let values = std::iter::once(s.t)
                .chain(s.q.iter().copied())
                .chain(s.qdot.iter().copied())
                .chain(s.qddot.iter().copied())
                .chain(s.tau.iter().copied())
                .chain([s.kinetic, s.potential, s.energy()]);
            for (n, v) in values.enumerate() {
                if n > 0 {
                    row.push(',');
                }
                row.push_str(&format!("{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("metadata serializes")
}

fn record(t: f64, s: &JointState, torque: &TorqueFn, p: &FingerParams, v: ModelVariant) -> Result<Sample> {
    let tau = torque(t, s);
    let qddot = forward_dynamics(s, &tau, p, v).map_err(|e| as_state_error(e, t, s))?;
    Ok(Sample {
        t,
        q: s.q,
        qdot: s.qdot,
        qddot,
        tau: tau.0,
        kinetic: kinetic_energy(s, p),
        potential: potential_energy(&s.q, p),
    })
}

/// Integrates from `cfg.initial` to `cfg.t_end` under the tendon torque
/// produced by `profile`.
pub fn simulate(cfg: &SimConfig, p: &FingerParams, profile: &ForceProfile) -> Result<Trajectory> {
    cfg.validate()?;
    p.validate()?;
    profile.validate()?;
    let torque = |t: f64, _: &JointState| joint_torques(profile.force_at(t), p);
    simulate_with(cfg, p, &torque, profile.clone())
}

/// Like [`simulate`] but with an arbitrary torque callback. `profile` is only
/// stored in the metadata.
pub fn simulate_with(
    cfg: &SimConfig,
    p: &FingerParams,
    torque: &TorqueFn,
    profile: ForceProfile,
) -> Result<Trajectory> {
    cfg.validate()?;
    let v = cfg.variant;
    let meta = RunMetadata {
        params_hash: p.fingerprint(),
        params: *p,
        config: *cfg,
        profile,
    };
    let mut samples = Vec::new();
    let mut steps = StepLog::default();
    let mut state = cfg.initial;
    samples.push(record(0.0, &state, torque, p, v)?);

    match cfg.integrator {
        IntegratorKind::Rk4 | IntegratorKind::SemiImplicitEuler => {
            let h = cfg.step;
            let n_steps = whole_steps(cfg.t_end, h).expect("validated");
            let stride = whole_steps(cfg.record_every, h).expect("validated");
            let step = match cfg.integrator {
                IntegratorKind::Rk4 => step_rk4,
                _ => step_semi_implicit_euler,
            };
            for n in 0..n_steps {
                let t = n as f64 * h;
                state = step(&state, t, h, torque, p, v)?;
                let done = n + 1;
                if done % stride == 0 || done == n_steps {
                    samples.push(record(done as f64 * h, &state, torque, p, v)?);
                }
            }
        }
        IntegratorKind::AdaptiveRk45 => {
            let tol = cfg.tolerance;
            let mut t = 0.0;
            let mut h = cfg.step.min(tol.h_max);
            let mut k = 1usize;
            loop {
                let target = (k as f64 * cfg.record_every).min(cfg.t_end);
                let remaining = target - t;
                let clipped = remaining <= h + tol.h_min;
                let out = step_adaptive(&state, t, if clipped { remaining } else { h }, torque, p, v, &tol)?;
                steps.accepted.push((t, out.h_used));
                steps.rejected += out.rejected;
                state = out.state;
                let landed = clipped && (target - out.t_new).abs() <= tol.h_min;
                t = if landed { target } else { out.t_new };
                // A step shortened to hit a sample time says nothing about the
                // next step size; keep the previous proposal in that case.
                if !landed || out.h_next < h {
                    h = out.h_next;
                }
                if landed {
                    samples.push(record(t, &state, torque, p, v)?);
                    if target >= cfg.t_end {
                        break;
                    }
                    k += 1;
                }
            }
        }
    }

    Ok(Trajectory { samples, meta, steps })
}

/// Energy bookkeeping over a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyAudit {
    /// `max |E(t) - E(0)| / max(E_char, 1e-12)`, `E_char = max |E|`.
    pub max_drift_rel: f64,
    /// `max |E - E0 - W_applied + W_damping|`, normalized by
    /// `E_char + integral |tau . qdot| dt`.
    pub work_balance_residual: f64,
    /// Largest sample-to-sample increase of `E`, relative to `E_char`.
    /// Positive values mean energy grew somewhere.
    pub max_energy_increase_rel: f64,
    pub injected_work: f64,
    pub dissipated_work: f64,
}

/// Trapezoidal work-energy balance: `E(t) - E(0) - int tau.qdot + int cd |qdot|^2`.
pub fn energy_audit(traj: &Trajectory, p: &FingerParams) -> Result<EnergyAudit> {
    let s = &traj.samples;
    if s.len() < 2 {
        return Err(Error::validation(
            "trajectory",
            "energy audit needs at least two samples",
        ));
    }
    let e0 = s[0].energy();
    let e_char = s.iter().map(|x| x.energy().abs()).fold(0.0, f64::max);
    let power_in = |x: &Sample| x.tau.dot(&x.qdot);
    let power_out = |x: &Sample| p.cd * x.qdot.norm_squared();

    let mut w_in = 0.0;
    let mut w_in_abs = 0.0;
    let mut w_out = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut max_increase = f64::NEG_INFINITY;
    for pair in s.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        w_in += 0.5 * dt * (power_in(a) + power_in(b));
        w_in_abs += 0.5 * dt * (power_in(a).abs() + power_in(b).abs());
        w_out += 0.5 * dt * (power_out(a) + power_out(b));
        let residual = b.energy() - e0 - w_in + w_out;
        max_residual = max_residual.max(residual.abs());
        max_drift = max_drift.max((b.energy() - e0).abs());
        max_increase = max_increase.max(b.energy() - a.energy());
    }
    let floor = 1e-12;
    Ok(EnergyAudit {
        max_drift_rel: max_drift / e_char.max(floor),
        work_balance_residual: max_residual / (e_char + w_in_abs).max(floor),
        max_energy_increase_rel: max_increase / e_char.max(floor),
        injected_work: w_in,
        dissipated_work: w_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_torque(_: f64, _: &JointState) -> GeneralizedForces {
        GeneralizedForces::zero()
    }

    fn free_params() -> FingerParams {
        let mut p = FingerParams::unit();
        p.g = 0.0;
        p
    }

    #[test]
    fn rk4_fixed_point() {
        let p = free_params();
        let s = JointState::at_rest(Vector3::new(0.2, 0.3, -0.1));
        let next = step_rk4(&s, 0.0, 1e-3, &zero_torque, &p, ModelVariant::Full).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn adaptive_grows_to_h_max_on_trivial_dynamics() {
        let p = free_params();
        let tol = AdaptiveTolerance {
            h_max: 0.05,
            ..Default::default()
        };
        let mut h = 1e-6;
        let mut t = 0.0;
        let s = JointState::default();
        for _ in 0..20 {
            let out = step_adaptive(&s, t, h, &zero_torque, &p, ModelVariant::Full, &tol).unwrap();
            assert_eq!(out.rejected, 0);
            t = out.t_new;
            h = out.h_next;
        }
        assert_eq!(h, 0.05);
    }

    #[test]
    fn adaptive_underflow_is_reported() {
        let mut p = FingerParams::unit();
        p.kt1 = 1e6;
        let tol = AdaptiveTolerance {
            rtol: 1e-12,
            atol: 1e-14,
            h_min: 1e-3,
            h_max: 1e-2,
        };
        let s = JointState::at_rest(Vector3::new(0.5, 0.0, 0.0));
        let err = step_adaptive(&s, 0.0, 1e-2, &zero_torque, &p, ModelVariant::Full, &tol).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }), "{err:?}");
    }

    #[test]
    fn non_finite_state_carries_time() {
        let p = FingerParams::unit();
        let s = JointState::new(Vector3::zeros(), Vector3::new(f64::NAN, 0.0, 0.0));
        match step_rk4(&s, 0.25, 1e-3, &zero_torque, &p, ModelVariant::Full) {
            Err(Error::NonFiniteState { t, .. }) => assert_eq!(t, 0.25),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_defaults() {
        let cfg: SimConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.step, 1e-4);
        assert_eq!(cfg.t_end, 2.0);
        assert_eq!(cfg.record_every, 1e-3);
        assert_eq!(cfg.integrator, IntegratorKind::Rk4);
        assert_eq!(cfg.variant, ModelVariant::Full);
    }

    #[test]
    fn config_rejects_off_grid_record_cadence() {
        let cfg = SimConfig {
            record_every: 1.5e-4,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Validation { key, .. }) if key == "sim.record_every"));
    }

    #[test]
    fn zero_dynamics_run_is_constant() {
        let p = free_params();
        let cfg = SimConfig {
            t_end: 1.0,
            record_every: 0.01,
            initial: JointState::at_rest(Vector3::new(0.1, 0.2, 0.3)),
            ..Default::default()
        };
        let traj = simulate(&cfg, &p, &ForceProfile::default()).unwrap();
        assert_eq!(traj.samples.len(), 101);
        assert!(traj.samples.iter().all(|s| s.state() == cfg.initial));
        assert_eq!(traj.last().t, 1.0);
    }

    #[test]
    fn adaptive_run_lands_on_record_times() {
        let mut p = FingerParams::unit();
        p.kt1 = 10.0;
        p.cd = 0.5;
        let cfg = SimConfig {
            integrator: IntegratorKind::AdaptiveRk45,
            step: 1e-3,
            tolerance: AdaptiveTolerance {
                rtol: 1e-7,
                atol: 1e-9,
                h_min: 1e-9,
                h_max: 0.05,
            },
            t_end: 0.5,
            record_every: 0.1,
            ..Default::default()
        };
        let traj = simulate(&cfg, &p, &ForceProfile::default()).unwrap();
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 6);
        for (n, t) in times.iter().enumerate() {
            assert!((t - n as f64 * 0.1).abs() < 1e-12, "{times:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let p = free_params();
        let cfg = SimConfig {
            t_end: 0.002,
            ..Default::default()
        };
        let traj = simulate(&cfg, &p, &ForceProfile::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3);
        assert_eq!(lines[1].split(',').count(), 16);
        assert!(text.contains("# variant: full"));
    }
}
