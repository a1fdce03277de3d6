//! Physical constants of the finger and its joint state.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Every physical constant of the three-link chain, in SI units.
///
/// Field names follow the configuration file (`I1`, `frictionForce`, ...).
/// Joint 1 is the MCP joint, joint 2 the PIP joint and joint 3 the DIP joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerParams {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub l1: f64,
    pub l2: f64,
    /// Only used to place the fingertip; no dynamic term depends on it.
    pub l3: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub lc3: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    pub kt1: f64,
    pub kt2: f64,
    pub kt3: f64,
    pub cd: f64,
    /// Tendon offset (moment arm), m.
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "frictionForce", default)]
    pub friction_force: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl FingerParams {
    /// Unit-scale chain: 1 kg links, 1 m long, centers of mass at mid-link, no
    /// rotational inertia, springs or damping. Used by the oracle sweeps.
    pub fn unit() -> Self {
        FingerParams {
            m1: 1.0,
            m2: 1.0,
            m3: 1.0,
            l1: 1.0,
            l2: 1.0,
            l3: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            lc3: 0.5,
            i1: 0.0,
            i2: 0.0,
            i3: 0.0,
            kt1: 0.0,
            kt2: 0.0,
            kt3: 0.0,
            cd: 0.0,
            e: 0.0045,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            friction_force: 0.0,
            g: 9.81,
        }
    }

    /// Illustrative centimeter-scale 3D-printed index finger. These are not
    /// measured values; no published parameter table exists for the prototype.
    pub fn index_finger() -> Self {
        let (m1, m2, m3) = (0.008, 0.005, 0.003);
        let (l1, l2, l3) = (0.045, 0.025, 0.020);
        FingerParams {
            m1,
            m2,
            m3,
            l1,
            l2,
            l3,
            lc1: 0.5 * l1,
            lc2: 0.5 * l2,
            lc3: 0.5 * l3,
            i1: m1 * l1 * l1 / 12.0,
            i2: m2 * l2 * l2 / 12.0,
            i3: m3 * l3 * l3 / 12.0,
            kt1: 0.02,
            kt2: 0.015,
            kt3: 0.01,
            cd: 2.0e-4,
            e: 0.0045,
            alpha: 1.0,
            beta: 0.7,
            gamma: 0.4,
            friction_force: 0.0,
            g: 9.81,
        }
    }

    pub fn masses(&self) -> [f64; 3] {
        [self.m1, self.m2, self.m3]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn com_offsets(&self) -> [f64; 3] {
        [self.lc1, self.lc2, self.lc3]
    }

    pub fn inertias(&self) -> [f64; 3] {
        [self.i1, self.i2, self.i3]
    }

    pub fn springs(&self) -> Vector3<f64> {
        Vector3::new(self.kt1, self.kt2, self.kt3)
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Checks every physical invariant. The error names the offending field
    /// as it appears in the configuration file.
    pub fn validate(&self) -> Result<()> {
        let fields: [(&str, f64); 22] = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("lc3", self.lc3),
            ("I1", self.i1),
            ("I2", self.i2),
            ("I3", self.i3),
            ("kt1", self.kt1),
            ("kt2", self.kt2),
            ("kt3", self.kt3),
            ("cd", self.cd),
            ("e", self.e),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("frictionForce", self.friction_force),
            ("g", self.g),
        ];
        for (key, v) in fields {
            if !v.is_finite() {
                return Err(Error::validation(key, "must be finite"));
            }
        }
        for (i, m) in self.masses().into_iter().enumerate() {
            if m <= 0.0 {
                return Err(Error::validation(format!("m{}", i + 1), "must be > 0"));
            }
        }
        for (i, l) in self.lengths().into_iter().enumerate() {
            if l <= 0.0 {
                return Err(Error::validation(format!("l{}", i + 1), "must be > 0"));
            }
        }
        for (i, (lc, l)) in self.com_offsets().into_iter().zip(self.lengths()).enumerate() {
            if !(lc > 0.0 && lc <= l) {
                return Err(Error::validation(
                    format!("lc{}", i + 1),
                    format!("must satisfy 0 < lc{0} <= l{0} (lc{0} = {lc}, l{0} = {l})", i + 1),
                ));
            }
        }
        for (i, v) in self.inertias().into_iter().enumerate() {
            if v < 0.0 {
                return Err(Error::validation(format!("I{}", i + 1), "must be >= 0"));
            }
        }
        for (i, k) in self.springs().iter().enumerate() {
            if *k < 0.0 {
                return Err(Error::validation(format!("kt{}", i + 1), "must be >= 0"));
            }
        }
        if self.cd < 0.0 {
            return Err(Error::validation("cd", "must be >= 0"));
        }
        if self.e <= 0.0 {
            return Err(Error::validation("e", "must be > 0"));
        }
        for (key, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if v < 0.0 {
                return Err(Error::validation(key, "must be >= 0"));
            }
        }
        if self.friction_force < 0.0 {
            return Err(Error::validation("frictionForce", "must be >= 0"));
        }
        Ok(())
    }

    /// Short stable fingerprint of the parameter set (SHA-256 of its JSON
    /// form, first 16 hex digits).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Joint angles (rad) and angular velocities (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointState {
    #[serde(default)]
    pub q: Vector3<f64>,
    #[serde(default)]
    pub qdot: Vector3<f64>,
}

impl JointState {
    pub fn new(q: Vector3<f64>, qdot: Vector3<f64>) -> Self {
        JointState { q, qdot }
    }

    pub fn at_rest(q: Vector3<f64>) -> Self {
        JointState {
            q,
            qdot: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}
