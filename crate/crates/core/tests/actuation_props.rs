use std::io::Write;

use finger_dyn_core::actuation::{joint_torques, ForceProfile, ForceTable};
use finger_dyn_core::FingerParams;
use proptest::prelude::*;

fn finger() -> FingerParams {
    FingerParams::index_finger()
}

#[test]
fn three_newtons_at_four_and_a_half_millimetres() {
    let mut p = finger();
    p.alpha = 1.0;
    p.beta = 1.0;
    p.gamma = 1.0;
    let tau = joint_torques(3.0, &p);
    for v in tau.0.iter() {
        let ulps = (v.to_bits() as i64 - 0.0135f64.to_bits() as i64).abs();
        assert!(ulps <= 4, "{v}");
    }
}

#[test]
fn table_round_trip_through_csv_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "# twisted polymer muscle, bench run").unwrap();
    writeln!(f, "t,F,T").unwrap();
    writeln!(f, "0,0,25").unwrap();
    writeln!(f, "0.5,2.5,60").unwrap();
    writeln!(f, "1.0,3.0,80").unwrap();
    let table = ForceTable::from_csv_path(f.path()).unwrap();
    assert_eq!(table.points.len(), 3);
    assert_eq!(table.temperature.as_deref(), Some(&[25.0, 60.0, 80.0][..]));
    let profile = ForceProfile::Table(table);
    assert_eq!(profile.force_at(0.25), 1.25);
    assert_eq!(profile.force_at(2.0), 3.0);
    assert_eq!(profile.force_at(-1.0), 0.0);
}

#[test]
fn profile_json_round_trip() {
    let profiles = [
        ForceProfile::Step {
            f0: 3.0,
            t_on: 0.1,
            t_off: None,
        },
        ForceProfile::Ramp {
            f0: 0.0,
            f1: 3.0,
            t0: 0.0,
            t1: 2.0,
        },
        ForceProfile::Pulse {
            f0: 2.0,
            period: 0.5,
            duty: 0.25,
        },
        ForceProfile::Table(ForceTable::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap()),
    ];
    for p in profiles {
        let text = serde_json::to_string(&p).unwrap();
        let back: ForceProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}

#[test]
fn unknown_profile_key_is_rejected() {
    let err = serde_json::from_str::<ForceProfile>(r#"{"kind":"step","F0":1,"tonset":0}"#).unwrap_err();
    assert!(err.to_string().contains("tonset"));
}

proptest! {
    #[test]
    fn torque_is_homogeneous_above_friction(f in 0.0..10.0f64, k in 0.0..10.0f64) {
        let p = finger();
        let a = joint_torques(f, &p).0;
        let b = joint_torques(k * f, &p).0;
        prop_assert!((b - k * a).amax() <= 1e-15 * (1.0 + k * f));
    }

    #[test]
    fn friction_clamps_at_zero(friction in 0.0..5.0f64, f in 0.0..5.0f64) {
        let mut p = finger();
        p.friction_force = friction;
        let tau = joint_torques(f, &p).0;
        prop_assert!(tau.iter().all(|v| *v >= 0.0));
        if f <= friction {
            prop_assert!(tau.iter().all(|v| *v == 0.0));
        } else {
            let expected = (f - friction) * p.e;
            prop_assert!((tau[0] - p.alpha * expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn split_follows_fractions(f in 0.0..10.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
        let mut p = finger();
        (p.alpha, p.beta, p.gamma) = (a, b, c);
        let tau = joint_torques(f, &p).0;
        let total = f * p.e;
        prop_assert!((tau[0] - a * total).abs() <= 1e-16);
        prop_assert!((tau[1] - b * total).abs() <= 1e-16);
        prop_assert!((tau[2] - c * total).abs() <= 1e-16);
    }

    #[test]
    fn table_interpolation_stays_between_neighbours(t in -1.0..3.0f64) {
        let table = ForceTable::new(vec![(0.0, 0.0), (0.5, 2.0), (1.0, 1.0), (2.0, 3.0)]).unwrap();
        let f = table.interpolate(t);
        prop_assert!((0.0..=3.0).contains(&f));
    }
}
