//! Muscle force input and the tendon torque split.
//!
//! The muscle force is an input time series; no thermal or constitutive
//! muscle model is involved. The tendon tension `F`, less an optional
//! constant friction loss, acts at offset `e` and is shared between the MCP,
//! PIP and DIP joints by the fractions `alpha`, `beta`, `gamma`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::GeneralizedForces;
use crate::{Error, FingerParams, Result};

/// Time-parameterized actuator force, N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForceProfile {
    /// `F0` on `[t_on, t_off)`, zero elsewhere. A missing `t_off` holds forever.
    Step {
        #[serde(rename = "F0")]
        f0: f64,
        #[serde(default)]
        t_on: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_off: Option<f64>,
    },
    /// `F0` before `t0`, linear to `F1` at `t1`, `F1` afterwards.
    Ramp {
        #[serde(rename = "F0")]
        f0: f64,
        #[serde(rename = "F1")]
        f1: f64,
        t0: f64,
        t1: f64,
    },
    /// Square wave: `F0` for the first `duty` fraction of each period.
    Pulse {
        #[serde(rename = "F0")]
        f0: f64,
        period: f64,
        duty: f64,
    },
    Table(ForceTable),
}

impl Default for ForceProfile {
    fn default() -> Self {
        ForceProfile::Step {
            f0: 0.0,
            t_on: 0.0,
            t_off: None,
        }
    }
}

/// Sampled force curve, linearly interpolated and clamped at both ends.
///
/// Temperatures, when present, are carried along for reference only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceTable {
    /// `(t, F)` pairs with strictly increasing `t`.
    pub points: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<f64>>,
}

impl ForceTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let table = ForceTable {
            points,
            temperature: None,
        };
        table.validate()?;
        Ok(table)
    }

    /// Reads a `t,F` CSV with a header row. An optional third column named
    /// `T` holds the muscle temperature.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        let t_col = column("t").ok_or_else(|| Error::Parse("force table is missing column `t`".into()))?;
        let f_col = column("F").ok_or_else(|| Error::Parse("force table is missing column `F`".into()))?;
        let temp_col = column("T");

        let mut points = Vec::new();
        let mut temps = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |col: usize, name: &str| -> Result<f64> {
                let raw = record.get(col).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: column `{name}`: cannot parse `{raw}`", row + 2)))
            };
            points.push((field(t_col, "t")?, field(f_col, "F")?));
            if let Some(c) = temp_col {
                temps.push(field(c, "T")?);
            }
        }
        let table = ForceTable {
            points,
            temperature: temp_col.map(|_| temps),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::validation(
                "profile.points",
                "table needs at least one (t, F) pair",
            ));
        }
        for (n, (t, f)) in self.points.iter().enumerate() {
            if !t.is_finite() || !f.is_finite() {
                return Err(Error::validation(format!("profile.points[{n}]"), "must be finite"));
            }
            if *f < 0.0 {
                return Err(Error::validation(format!("profile.points[{n}]"), "force must be >= 0"));
            }
        }
        if let Some(n) = self.points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(Error::validation(
                format!("profile.points[{}]", n + 1),
                "times must be strictly increasing",
            ));
        }
        if let Some(temps) = &self.temperature {
            if temps.len() != self.points.len() {
                return Err(Error::validation(
                    "profile.temperature",
                    "must have one entry per (t, F) pair",
                ));
            }
        }
        Ok(())
    }

    pub fn interpolate(&self, t: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let hi = pts.partition_point(|(ti, _)| *ti <= t);
        let (t0, f0) = pts[hi - 1];
        let (t1, f1) = pts[hi];
        f0 + (f1 - f0) * (t - t0) / (t1 - t0)
    }
}

impl ForceProfile {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("profile.{key}"), "must be finite and >= 0"))
            }
        };
        match *self {
            ForceProfile::Step { f0, t_on, t_off } => {
                nonneg("F0", f0)?;
                nonneg("t_on", t_on)?;
                if let Some(t_off) = t_off {
                    if !(t_off >= t_on) {
                        return Err(Error::validation("profile.t_off", "must be >= t_on"));
                    }
                }
            }
            ForceProfile::Ramp { f0, f1, t0, t1 } => {
                nonneg("F0", f0)?;
                nonneg("F1", f1)?;
                nonneg("t0", t0)?;
                if !(t1.is_finite() && t1 > t0) {
                    return Err(Error::validation("profile.t1", "must be finite and > t0"));
                }
            }
            ForceProfile::Pulse { f0, period, duty } => {
                nonneg("F0", f0)?;
                if !(period.is_finite() && period > 0.0) {
                    return Err(Error::validation("profile.period", "must be finite and > 0"));
                }
                if !(0.0..=1.0).contains(&duty) {
                    return Err(Error::validation("profile.duty", "must lie in [0, 1]"));
                }
            }
            ForceProfile::Table(ref table) => table.validate()?,
        }
        Ok(())
    }

    /// Muscle force at time `t` (s).
    pub fn force_at(&self, t: f64) -> f64 {
        match *self {
            ForceProfile::Step { f0, t_on, t_off } => {
                if t >= t_on && t_off.is_none_or(|off| t < off) {
                    f0
                } else {
                    0.0
                }
            }
            ForceProfile::Ramp { f0, f1, t0, t1 } => {
                if t <= t0 {
                    f0
                } else if t >= t1 {
                    f1
                } else {
                    f0 + (f1 - f0) * (t - t0) / (t1 - t0)
                }
            }
            ForceProfile::Pulse { f0, period, duty } => {
                if t.rem_euclid(period) < duty * period {
                    f0
                } else {
                    0.0
                }
            }
            ForceProfile::Table(ref table) => table.interpolate(t),
        }
    }

    /// Whether the profile is zero at every time.
    pub fn is_identically_zero(&self) -> bool {
        match self {
            ForceProfile::Step { f0, .. } | ForceProfile::Pulse { f0, .. } => *f0 == 0.0,
            ForceProfile::Ramp { f0, f1, .. } => *f0 == 0.0 && *f1 == 0.0,
            ForceProfile::Table(t) => t.points.iter().all(|(_, f)| *f == 0.0),
        }
    }
}

/// Joint torques from tendon force `force` (N).
pub fn joint_torques(force: f64, p: &FingerParams) -> GeneralizedForces {
    // A tendon cannot push.
    let effective = (force - p.friction_force).max(0.0);
    let tau = effective * p.e;
    GeneralizedForces::new(p.alpha * tau, p.beta * tau, p.gamma * tau)
}
