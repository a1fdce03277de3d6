use finger_dyn_core::actuation::ForceProfile;
use finger_dyn_core::calibration::{fit, Bounds, CalibrationProblem, FitError, FreeParam, Reference};
use finger_dyn_core::sim::{simulate, SimConfig};
use finger_dyn_core::{Error, FingerParams, JointState};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A finger about ten times the size of a human one, so that damping and
/// spring values of a few hundredths are well inside the dynamic range.
fn bench_params() -> FingerParams {
    let mut p = FingerParams::unit();
    (p.m1, p.m2, p.m3) = (0.1, 0.06, 0.04);
    (p.l1, p.l2, p.l3) = (0.1, 0.08, 0.06);
    (p.lc1, p.lc2, p.lc3) = (0.05, 0.04, 0.03);
    p.i1 = p.m1 * p.l1 * p.l1 / 12.0;
    p.i2 = p.m2 * p.l2 * p.l2 / 12.0;
    p.i3 = p.m3 * p.l3 * p.l3 / 12.0;
    (p.kt1, p.kt2, p.kt3) = (0.05, 0.04, 0.03);
    p.cd = 0.02;
    p.e = 0.01;
    (p.alpha, p.beta, p.gamma) = (1.0, 0.7, 0.4);
    p
}

fn bench_sim() -> SimConfig {
    SimConfig {
        step: 2e-4,
        t_end: 2.0,
        record_every: 0.01,
        initial: JointState::at_rest(Vector3::new(0.2, 0.3, 0.4)),
        ..Default::default()
    }
}

fn bench_profile() -> ForceProfile {
    ForceProfile::Step {
        f0: 5.0,
        t_on: 0.2,
        t_off: Some(1.2),
    }
}

fn problem(truth: &FingerParams, free: Vec<(FreeParam, Bounds)>) -> CalibrationProblem {
    let traj = simulate(&bench_sim(), truth, &bench_profile()).unwrap();
    CalibrationProblem {
        reference: Reference::from_trajectory(&traj),
        free,
        baseline: *truth,
        profile: bench_profile(),
        sim: bench_sim(),
        weights: [1.0; 3],
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn residual_vanishes_at_truth() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let r = prob.residual(&[p.cd]).unwrap();
    assert_eq!(r.len(), 3 * prob.reference.len());
    assert!(r.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn perturbed_damping_increases_residual() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let norm = |x: f64| prob.residual(&[x]).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm(1.1 * p.cd) > norm(p.cd));
    assert!(norm(1.1 * p.cd) > 1e-6);
}

#[test]
fn zero_weight_rows_are_zero() {
    let p = bench_params();
    let mut prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    prob.weights = [1.0, 0.0, 1.0];
    let r = prob.residual(&[0.03]).unwrap();
    assert!(r.chunks(3).all(|row| row[1] == 0.0));
    assert!(r.chunks(3).any(|row| row[0] != 0.0));
}

#[test]
fn out_of_bounds_candidates_are_refused() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    assert!(prob.residual(&[0.2]).is_err());
}

#[test]
fn recovers_damping() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let report = fit(&prob, &[0.05]).unwrap();
    assert!(report.converged);
    assert!(rel(report.x_best[0], 0.02) < 0.01, "{report}");
    assert_eq!(report.params.cd, report.x_best[0]);
}

#[test]
fn recovers_spring_stiffnesses() {
    let p = bench_params();
    let b = Bounds::new(0.001, 0.2);
    let prob = problem(&p, vec![(FreeParam::Kt1, b), (FreeParam::Kt2, b), (FreeParam::Kt3, b)]);
    let report = fit(&prob, &[0.08, 0.06, 0.05]).unwrap();
    for (got, want) in report.x_best.iter().zip([0.05, 0.04, 0.03]) {
        assert!(rel(*got, want) < 0.02, "{report}");
    }
}

#[test]
fn noisy_reference_still_gives_damping() {
    let p = bench_params();
    let mut prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noise = Normal::new(0.0, 1e-3).unwrap();
    for q in &mut prob.reference.q {
        *q += Vector3::from_fn(|_, _| noise.sample(&mut rng));
    }
    let report = fit(&prob, &[0.05]).unwrap();
    assert!(rel(report.x_best[0], 0.02) < 0.10, "{report}");
}

#[test]
fn cost_history_is_monotone_and_bounds_hold() {
    let p = bench_params();
    let b = Bounds::new(0.01, 0.03);
    let prob = problem(&p, vec![(FreeParam::Cd, b), (FreeParam::Kt1, Bounds::new(0.02, 0.08))]);
    let report = fit(&prob, &[0.0299, 0.079]).unwrap();
    assert!(report.cost_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(b.contains(report.x_best[0]));
    // Out-of-bounds evaluations would be counted as diverged.
    assert_eq!(report.diagnostics.diverged_evaluations, 0);
    assert!(report.final_cost <= report.cost_history[0]);
}

#[test]
fn torque_fractions_without_force_are_flagged() {
    let p = bench_params();
    let unit = Bounds::new(0.0, 1.0);
    let mut prob = problem(
        &p,
        vec![
            (FreeParam::Alpha, unit),
            (FreeParam::Beta, unit),
            (FreeParam::Gamma, unit),
        ],
    );
    prob.profile = ForceProfile::default();
    let traj = simulate(&bench_sim(), &p, &prob.profile).unwrap();
    prob.reference = Reference::from_trajectory(&traj);
    match fit(&prob, &[0.5, 0.5, 0.5]) {
        Err(FitError::NotConverged(report)) => {
            assert!(report.diagnostics.flat_cost);
            assert!(!report.converged);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn coarse_reference_is_rejected() {
    let p = bench_params();
    let mut prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let keep: Vec<usize> = (0..prob.reference.len()).step_by(50).collect();
    prob.reference = Reference {
        t: keep.iter().map(|i| prob.reference.t[*i]).collect(),
        q: keep.iter().map(|i| prob.reference.q[*i]).collect(),
    };
    match fit(&prob, &[0.05]) {
        Err(FitError::Invalid(Error::Validation { key, constraint })) => {
            assert_eq!(key, "reference.t");
            assert!(constraint.contains("coarsely"), "{constraint}");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn unstable_start_is_not_reported_as_converged() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.5, 1.0))]);
    match fit(&prob, &[0.7]) {
        Err(FitError::NotConverged(report)) => {
            assert!(!report.diagnostics.flat_cost);
            assert!(report.diagnostics.diverged_evaluations > 0);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn fit_is_deterministic() {
    let p = bench_params();
    let prob = problem(&p, vec![(FreeParam::Cd, Bounds::new(0.001, 0.1))]);
    let a = fit(&prob, &[0.05]).unwrap();
    let b = fit(&prob, &[0.05]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reference_loads_from_simulator_csv() {
    let p = bench_params();
    let traj = simulate(&bench_sim(), &p, &bench_profile()).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let r = Reference::from_csv_reader(buf.as_slice()).unwrap();
    assert_eq!(r, Reference::from_trajectory(&traj));
}
