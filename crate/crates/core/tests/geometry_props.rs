mod common;

use common::{boxed, overlap_oracle, sampled_overlap};
use proptest::prelude::*;
use tokensim::geometry::{
    apply_delta, axis_separation, normalize_angle, sat_overlap, MotionDelta, OrientedBox, Pose2D,
};

fn box_strategy() -> impl Strategy<Value = OrientedBox> {
    (-4.0..4.0f64, -4.0..4.0f64, -3.2..3.2f64, 0.3..5.0f64, 0.3..3.0f64)
        .prop_map(|(x, y, yaw, l, w)| boxed(x, y, yaw, l, w))
}

/// Applies the rigid motion `m` (rotation then translation) to a box.
fn moved(b: &OrientedBox, m: &Pose2D) -> OrientedBox {
    let c = b.center();
    let (s, co) = m.yaw.sin_cos();
    let x = m.x + co * c.x - s * c.y;
    let y = m.y + s * c.x + co * c.y;
    OrientedBox::new(Pose2D::new(x, y, c.yaw + m.yaw), b.length(), b.width()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sat_is_symmetric(a in box_strategy(), b in box_strategy()) {
        prop_assert_eq!(sat_overlap(&a, &b), sat_overlap(&b, &a));
    }

    #[test]
    fn sat_matches_edge_oracle(a in box_strategy(), b in box_strategy()) {
        let sep = axis_separation(&a, &b);
        prop_assume!(sep.abs() >= 1e-6);
        prop_assert_eq!(sat_overlap(&a, &b), overlap_oracle(&a, &b), "sep {}", sep);
        prop_assert_eq!(sat_overlap(&a, &b), sep < 0.0);
    }

    #[test]
    fn sampled_boundary_agrees_away_from_contact(a in box_strategy(), b in box_strategy()) {
        let sep = axis_separation(&a, &b);
        prop_assume!(sep > 1e-6 || sep < -0.1);
        prop_assert_eq!(sat_overlap(&a, &b), sampled_overlap(&a, &b, 200));
    }

    #[test]
    fn rigid_motion_keeps_overlap(
        a in box_strategy(),
        b in box_strategy(),
        tx in -50.0..50.0f64,
        ty in -50.0..50.0f64,
        rot in -3.2..3.2f64,
    ) {
        let sep = axis_separation(&a, &b);
        prop_assume!(sep.abs() >= 1e-6);
        let m = Pose2D::new(tx, ty, rot);
        prop_assert_eq!(sat_overlap(&a, &b), sat_overlap(&moved(&a, &m), &moved(&b, &m)));
    }

    #[test]
    fn delta_round_trip(
        x in -100.0..100.0f64, y in -100.0..100.0f64, yaw in -3.2..3.2f64,
        dx in -3.0..3.0f64, dy in -3.0..3.0f64, dyaw in -0.3..0.3f64,
    ) {
        let p = Pose2D::new(x, y, yaw);
        let d = MotionDelta::new(dx, dy, dyaw);
        let back = MotionDelta::between(&p, &apply_delta(&p, &d));
        prop_assert!((back.dx - dx).abs() < 1e-9);
        prop_assert!((back.dy - dy).abs() < 1e-9);
        prop_assert!((back.dyaw - dyaw).abs() < 1e-12);
    }

    #[test]
    fn normalized_angle_in_range(a in -1e4..1e4f64) {
        let n = normalize_angle(a);
        prop_assert!(n > -std::f64::consts::PI && n <= std::f64::consts::PI);
        let turns = (a - n) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }
}

#[test]
fn contained_box_overlaps() {
    let outer = boxed(0.0, 0.0, 0.3, 6.0, 4.0);
    let inner = boxed(0.2, -0.1, 1.2, 1.0, 0.5);
    assert!(sat_overlap(&outer, &inner));
    assert!(overlap_oracle(&outer, &inner));
    assert!(axis_separation(&outer, &inner) < 0.0);
}

#[test]
fn crossed_bars_overlap_without_corner_containment() {
    let a = boxed(0.0, 0.0, 0.0, 10.0, 0.5);
    let b = boxed(0.0, 0.0, std::f64::consts::FRAC_PI_2, 10.0, 0.5);
    assert!(a.corners().iter().all(|p| !b.contains(*p)));
    assert!(sat_overlap(&a, &b));
    assert!(overlap_oracle(&a, &b));
}
