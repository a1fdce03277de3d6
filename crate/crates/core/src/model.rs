//! Kinematics and energetics of the planar three-link chain.
//!
//! Angles are relative joint angles; link `i` points along `q1 + ... + qi`,
//! measured from the horizontal with gravity acting along `-y`. The zero
//! configuration is the straight, horizontal finger.
//!
//! The inertia matrix and the Christoffel coefficients each come in two
//! formulations: a closed form (fast, used by the dynamics) and a derivation
//! route (Jacobian assembly, finite differences) that serves as its oracle.

use std::ops::{Deref, Index};

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::{FingerParams, JointState};

/// Central-difference step (rad) for first derivatives of `D` and `P`.
pub const FD_STEP: f64 = 1e-6;

/// Inertia matrix `D(q)`, kg·m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaMatrix(pub Matrix3<f64>);

impl Deref for InertiaMatrix {
    type Target = Matrix3<f64>;

    fn deref(&self) -> &Matrix3<f64> {
        &self.0
    }
}

impl InertiaMatrix {
    pub fn diagonal(&self) -> Vector3<f64> {
        self.0.diagonal()
    }

    /// The three leading principal minors.
    pub fn leading_minors(&self) -> [f64; 3] {
        let d = &self.0;
        [
            d[(0, 0)],
            d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)],
            d.determinant(),
        ]
    }
}

/// Christoffel coefficients `C[i][j][k]` (0-based), so that the velocity
/// product torque on joint `k` is `sum_ij C[i][j][k] qdot_i qdot_j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChristoffelTensor(pub [[[f64; 3]; 3]; 3]);

impl Index<(usize, usize, usize)> for ChristoffelTensor {
    type Output = f64;

    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.0[i][j][k]
    }
}

impl ChristoffelTensor {
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        (0..27).map(move |n| {
            let idx = (n / 9, (n / 3) % 3, n % 3);
            (idx, self[idx])
        })
    }

    pub fn max_abs_diff(&self, other: &ChristoffelTensor) -> (f64, (usize, usize, usize)) {
        self.entries()
            .map(|(idx, v)| ((v - other[idx]).abs(), idx))
            .fold((0.0, (0, 0, 0)), |acc, x| if x.0 > acc.0 { x } else { acc })
    }

    /// Velocity-product torque `sum_ij C[i][j][k] qdot_i qdot_j` for each `k`.
    pub fn quadratic_torque(&self, qdot: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for ((i, j, k), c) in self.entries() {
            out[k] += c * qdot[i] * qdot[j];
        }
        out
    }
}

/// Which `d_11` expression [`inertia_matrix_closed_with`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum D11Form {
    /// `m3` term carries `2 l1 lc3 cos(q2 + q3)`, consistent with the
    /// Jacobian assembly.
    #[default]
    Corrected,
    /// `m3` term carries `lc3 cos(q2 + q3)`, as printed in the original
    /// closed-form table. Dimensionally wrong; kept to exercise the oracle.
    AsPrinted,
}

/// Linear-velocity Jacobians of the three link centers of mass.
#[rustfmt::skip]
pub fn velocity_jacobians(q: &Vector3<f64>, p: &FingerParams) -> [Matrix3<f64>; 3] {
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    let (s123, c123) = (q[0] + q[1] + q[2]).sin_cos();

    let jv1 = Matrix3::new(
        -p.lc1 * s1, 0.0, 0.0,
        p.lc1 * c1, 0.0, 0.0,
        0.0, 0.0, 0.0,
    );
    let jv2 = Matrix3::new(
        -p.l1 * s1 - p.lc2 * s12, -p.lc2 * s12, 0.0,
        p.l1 * c1 + p.lc2 * c12, p.lc2 * c12, 0.0,
        0.0, 0.0, 0.0,
    );
    let w11 = -p.l1 * s1 - p.l2 * s12 - p.lc3 * s123;
    let w12 = -p.l2 * s12 - p.lc3 * s123;
    let w13 = -p.lc3 * s123;
    let w21 = p.l1 * c1 + p.l2 * c12 + p.lc3 * c123;
    let w22 = p.l2 * c12 + p.lc3 * c123;
    let w23 = p.lc3 * c123;
    let jv3 = Matrix3::new(
        w11, w12, w13,
        w21, w22, w23,
        0.0, 0.0, 0.0,
    );
    [jv1, jv2, jv3]
}

/// Rotational contribution to `D`: `I1 E1 + I2 E2 + I3 E3` with `E_i` the
/// 0/1 pattern of joints that rotate link `i`. The 1/2 of the kinetic energy
/// is applied by [`kinetic_energy`], not here.
pub fn rotational_energy_matrix(p: &FingerParams) -> Matrix3<f64> {
    let mut r = Matrix3::zeros();
    for (link, inertia) in p.inertias().into_iter().enumerate() {
        for a in 0..=link {
            for b in 0..=link {
                r[(a, b)] += inertia;
            }
        }
    }
    r
}

pub fn inertia_matrix_closed(q: &Vector3<f64>, p: &FingerParams) -> InertiaMatrix {
    inertia_matrix_closed_with(q, p, D11Form::Corrected)
}

#[rustfmt::skip]
pub fn inertia_matrix_closed_with(q: &Vector3<f64>, p: &FingerParams, form: D11Form) -> InertiaMatrix {
    let c2 = q[1].cos();
    let c3 = q[2].cos();
    let c23 = (q[1] + q[2]).cos();
    let FingerParams {
        m1, m2, m3, l1, l2, lc1, lc2, lc3, i1, i2, i3, ..
    } = *p;

    let d11_cross = match form {
        D11Form::Corrected => 2.0 * l1 * lc3 * c23,
        D11Form::AsPrinted => lc3 * c23,
    };
    let d11 = m1 * lc1 * lc1
        + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2)
        + m3 * (l1 * l1 + l2 * l2 + lc3 * lc3 + 2.0 * l1 * l2 * c2 + 2.0 * l2 * lc3 * c3 + d11_cross)
        + i1
        + i2
        + i3;
    let d12 = m2 * (lc2 * lc2 + l1 * lc2 * c2)
        + m3 * (l2 * l2 + lc3 * lc3 + 2.0 * l2 * lc3 * c3 + l1 * l2 * c2 + l1 * lc3 * c23)
        + i2
        + i3;
    let d13 = m3 * (lc3 * lc3 + l1 * lc3 * c23 + l2 * lc3 * c3) + i3;
    let d23 = m3 * (lc3 * lc3 + l2 * lc3 * c3) + i3;
    let d22 = m3 * (l2 * l2 + lc3 * lc3 + 2.0 * l2 * lc3 * c3) + m2 * lc2 * lc2 + i2 + i3;
    let d33 = m3 * lc3 * lc3 + i3;

    InertiaMatrix(Matrix3::new(
        d11, d12, d13,
        d12, d22, d23,
        d13, d23, d33,
    ))
}

/// `D = sum_i m_i Jv_i^T Jv_i + R`, assembled from the velocity Jacobians.
pub fn inertia_matrix_jacobian(q: &Vector3<f64>, p: &FingerParams) -> InertiaMatrix {
    let jv = velocity_jacobians(q, p);
    let mut d = rotational_energy_matrix(p);
    for (m, j) in p.masses().into_iter().zip(jv.iter()) {
        d += m * j.transpose() * j;
    }
    // J^T J is symmetric mathematically but not bit-for-bit.
    InertiaMatrix(0.5 * (d + d.transpose()))
}

/// `K = 1/2 qdot^T D(q) qdot`, with `D` from the Jacobian assembly.
pub fn kinetic_energy(s: &JointState, p: &FingerParams) -> f64 {
    let d = inertia_matrix_jacobian(&s.q, p);
    0.5 * s.qdot.dot(&(d.0 * s.qdot))
}

/// Gravity plus torsional-spring potential energy, J.
pub fn potential_energy(q: &Vector3<f64>, p: &FingerParams) -> f64 {
    let [a, b, c] = gravity_moments(p);
    let gravity = a * q[0].sin() + b * (q[0] + q[1]).sin() + c * (q[0] + q[1] + q[2]).sin();
    let elastic = 0.5 * (p.kt1 * q[0] * q[0] + p.kt2 * q[1] * q[1] + p.kt3 * q[2] * q[2]);
    gravity + elastic
}

/// Analytic gradient of [`potential_energy`], N·m.
pub fn potential_gradient(q: &Vector3<f64>, p: &FingerParams) -> Vector3<f64> {
    let [a, b, c] = gravity_moments(p);
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let c123 = (q[0] + q[1] + q[2]).cos();
    let phi3 = c * c123;
    let phi2 = b * c12 + phi3;
    let phi1 = a * c1 + phi2;
    Vector3::new(phi1, phi2, phi3) + p.springs().component_mul(q)
}

// Weights of sin(q1), sin(q1+q2), sin(q1+q2+q3) in the gravity potential.
fn gravity_moments(p: &FingerParams) -> [f64; 3] {
    [
        (p.m1 * p.lc1 + p.m2 * p.l1 + p.m3 * p.l1) * p.g,
        (p.m2 * p.lc2 + p.m3 * p.l2) * p.g,
        p.m3 * p.lc3 * p.g,
    ]
}

/// Closed-form Christoffel coefficients in terms of
/// `h1 = l1 lc2 sin q2`, `h2 = l1 lc3 sin(q2+q3)`, `h3 = l2 lc3 sin q3`,
/// `h4 = l1 l2 sin q2`.
pub fn christoffel_closed(q: &Vector3<f64>, p: &FingerParams) -> ChristoffelTensor {
    let s2 = q[1].sin();
    let s3 = q[2].sin();
    let s23 = (q[1] + q[2]).sin();
    let h1 = p.l1 * p.lc2 * s2;
    let h2 = p.l1 * p.lc3 * s23;
    let h3 = p.l2 * p.lc3 * s3;
    let h4 = p.l1 * p.l2 * s2;

    let a = p.m2 * h1 + p.m3 * (h2 + h4);
    let b = p.m3 * (h2 + h3);
    let c = p.m3 * h3;

    let mut t = [[[0.0; 3]; 3]; 3];
    // 1-based (i, j, k) as conventionally written.
    let mut set = |i: usize, j: usize, k: usize, v: f64| t[i - 1][j - 1][k - 1] = v;
    set(1, 1, 2, a);
    set(1, 1, 3, b);
    for (i, j, k) in [(1, 2, 3), (2, 1, 3), (2, 2, 3)] {
        set(i, j, k, c);
    }
    for (i, j, k) in [(1, 2, 1), (2, 1, 1), (2, 2, 1)] {
        set(i, j, k, -a);
    }
    for (i, j, k) in [(2, 3, 2), (3, 2, 2), (3, 3, 2), (1, 3, 2), (3, 1, 2)] {
        set(i, j, k, -c);
    }
    for (i, j, k) in [(1, 3, 1), (3, 1, 1), (2, 3, 1), (3, 2, 1), (3, 3, 1)] {
        set(i, j, k, -b);
    }
    ChristoffelTensor(t)
}

/// Central-difference partials `dD/dq_i` of the Jacobian-assembled `D`.
pub fn inertia_partials_fd(q: &Vector3<f64>, p: &FingerParams) -> [Matrix3<f64>; 3] {
    std::array::from_fn(|i| {
        let mut plus = *q;
        let mut minus = *q;
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        (inertia_matrix_jacobian(&plus, p).0 - inertia_matrix_jacobian(&minus, p).0) / (2.0 * FD_STEP)
    })
}

/// `C_ijk = dd_kj/dq_i - 1/2 dd_ij/dq_k` evaluated literally from finite
/// differences. Not symmetric in `(i, j)`, so it only matches the closed form
/// after contraction with `qdot_i qdot_j`.
pub fn christoffel_fd_unsymmetrized(q: &Vector3<f64>, p: &FingerParams) -> ChristoffelTensor {
    let dd = inertia_partials_fd(q, p);
    let mut t = [[[0.0; 3]; 3]; 3];
    for (i, ti) in t.iter_mut().enumerate() {
        for (j, tij) in ti.iter_mut().enumerate() {
            for (k, v) in tij.iter_mut().enumerate() {
                *v = dd[i][(k, j)] - 0.5 * dd[k][(i, j)];
            }
        }
    }
    ChristoffelTensor(t)
}

/// Finite-difference Christoffel coefficients, symmetrized over `(i, j)`:
/// `C_ijk = 1/2 (dd_kj/dq_i + dd_ki/dq_j - dd_ij/dq_k)`.
/// The velocity-product torque is unchanged by the symmetrization.
pub fn christoffel_fd(q: &Vector3<f64>, p: &FingerParams) -> ChristoffelTensor {
    let raw = christoffel_fd_unsymmetrized(q, p);
    let mut t = [[[0.0; 3]; 3]; 3];
    for (i, ti) in t.iter_mut().enumerate() {
        for (j, tij) in ti.iter_mut().enumerate() {
            for (k, v) in tij.iter_mut().enumerate() {
                *v = 0.5 * (raw[(i, j, k)] + raw[(j, i, k)]);
            }
        }
    }
    ChristoffelTensor(t)
}

/// `Cm[k][j] = sum_i C_ijk qdot_i`, so that `Cm qdot` is the full
/// centrifugal/Coriolis torque.
pub fn coriolis_matrix(q: &Vector3<f64>, qdot: &Vector3<f64>, p: &FingerParams) -> Matrix3<f64> {
    coriolis_matrix_from(&christoffel_closed(q, p), qdot)
}

pub fn coriolis_matrix_from(c: &ChristoffelTensor, qdot: &Vector3<f64>) -> Matrix3<f64> {
    let mut cm = Matrix3::zeros();
    for ((i, j, k), v) in c.entries() {
        cm[(k, j)] += v * qdot[i];
    }
    cm
}

/// Positions of the MCP, PIP, DIP joints and the fingertip in the plane.
pub fn joint_positions(q: &Vector3<f64>, p: &FingerParams) -> [Vector2<f64>; 4] {
    let mut out = [Vector2::zeros(); 4];
    let mut angle = 0.0;
    for (n, l) in p.lengths().into_iter().enumerate() {
        angle += q[n];
        out[n + 1] = out[n] + l * Vector2::new(angle.cos(), angle.sin());
    }
    out
}
