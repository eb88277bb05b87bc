mod common;

use common::overlap_oracle;
use proptest::prelude::*;
use tokensim::geometry::OrientedBox;
use tokensim::scenario::{
    extract_segments, generate_synthetic, is_collision_prone, load_scenario, save_scenario,
    Template,
};
use tokensim::Error;

fn gt_conflict(s: &tokensim::scenario::Scenario) -> bool {
    (0..s.track_len()).any(|k| {
        let boxes: Vec<OrientedBox> = s
            .tracks
            .iter()
            .filter(|t| t.valid[k])
            .map(|t| OrientedBox::new(t.poses[k], t.length, t.width).unwrap())
            .collect();
        (0..boxes.len()).any(|i| (i + 1..boxes.len()).any(|j| overlap_oracle(&boxes[i], &boxes[j])))
    })
}

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (i, t) in Template::ALL.into_iter().enumerate() {
        let s = generate_synthetic(t, 3 + i, 10 + i as u64).unwrap();
        let path = dir.path().join(format!("{t}.json"));
        save_scenario(&s, &path).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(s, back);
        for (a, b) in s.tracks.iter().zip(&back.tracks) {
            for (p, q) in a.poses.iter().zip(&b.poses) {
                assert_eq!(p.x.to_bits(), q.x.to_bits());
                assert_eq!(p.yaw.to_bits(), q.yaw.to_bits());
            }
        }
    }
}

#[test]
fn malformed_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_synthetic(Template::Straight, 2, 1).unwrap();
    let text = s.to_json().unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_scenario(&cut), Err(Error::Parse { .. })));

    let mut bad = s.clone();
    bad.tracks[1].valid.pop();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, bad.to_json().unwrap()).unwrap();
    assert!(matches!(load_scenario(&p), Err(Error::Validation(_))));
}

#[test]
fn planted_left_turns_conflict_in_ground_truth() {
    assert!(gt_conflict(&generate_synthetic(Template::UnprotectedLeft, 2, 0).unwrap()));
    for seed in (0..80).step_by(4) {
        for n in 2..=8 {
            assert!(is_collision_prone(Template::UnprotectedLeft, n, seed));
            let s = generate_synthetic(Template::UnprotectedLeft, n, seed).unwrap();
            assert!(gt_conflict(&s), "seed {seed} agents {n}");
        }
    }
}

#[test]
fn out_of_range_agent_counts_fail() {
    assert!(generate_synthetic(Template::Merge, 0, 1).is_err());
    assert!(generate_synthetic(Template::Merge, 17, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_pure_and_valid(t in 0usize..3, n in 1usize..=16, seed in any::<u64>()) {
        let a = generate_synthetic(Template::ALL[t], n, seed).unwrap();
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(a.tracks.len(), n);
        prop_assert_eq!(&a, &generate_synthetic(Template::ALL[t], n, seed).unwrap());
    }

    #[test]
    fn segment_count_matches_enumeration(t in 0usize..3, n in 1usize..6, seed in any::<u64>(), drop in prop::collection::vec(any::<bool>(), 92)) {
        let mut s = generate_synthetic(Template::ALL[t], n, seed).unwrap();
        for tr in &mut s.tracks {
            for (k, d) in drop.iter().enumerate().skip(1) {
                if *d && k < tr.valid.len() {
                    tr.valid[k] = false;
                }
            }
        }
        let want: usize = s
            .tracks
            .iter()
            .map(|tr| tr.valid.windows(2).filter(|w| w[0] && w[1]).count())
            .sum();
        prop_assert_eq!(extract_segments(std::slice::from_ref(&s)).len(), want);
    }
}
