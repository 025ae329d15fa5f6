mod common;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use omnigt::sync::{build_sync, video_to_mocap, FlashPair};

#[test]
fn session_anchors() {
    let m = build_sync(FlashPair::new(36, 100), FlashPair::new(362, 969)).unwrap();
    let timeline: Vec<u64> = (0..2000).collect();
    assert_eq!(m.target(199), 534.5);
    assert_eq!(video_to_mocap(&m, 199, &timeline).unwrap(), 535);
}

#[test]
fn matches_brute_force_on_sparse_timeline() {
    let mut rng = StdRng::seed_from_u64(17);
    let m = build_sync(FlashPair::new(36, 100), FlashPair::new(362, 969)).unwrap();
    // Gappy timeline: drop roughly a third of the frames.
    let timeline: Vec<u64> = (80..1000).filter(|_| rng.random_range(0..3) != 0).collect();
    for _ in 0..1000 {
        let v = rng.random_range(0..420);
        assert_eq!(
            video_to_mocap(&m, v, &timeline).unwrap(),
            common::brute_nearest([(36, 100), (362, 969)], v, &timeline),
            "video frame {v}"
        );
    }
}

proptest! {
    #[test]
    fn random_anchors_match_brute_force(
        v1 in 0u64..500, dv in 1u64..500, m1 in 0u64..2000, dm in 1u64..2000,
        frames in proptest::collection::btree_set(0u64..5000, 1..200),
        v in 0u64..1500,
    ) {
        let a = FlashPair::new(v1, m1);
        let b = FlashPair::new(v1 + dv, m1 + dm);
        let m = build_sync(b, a).unwrap();
        let timeline: Vec<u64> = frames.into_iter().collect();
        prop_assert_eq!(
            video_to_mocap(&m, v, &timeline).unwrap(),
            common::brute_nearest([(v1, m1), (v1 + dv, m1 + dm)], v, &timeline)
        );
    }

    #[test]
    fn monotone_in_video_frame(v in 0u64..1000, step in 0u64..50) {
        let m = build_sync(FlashPair::new(36, 100), FlashPair::new(362, 969)).unwrap();
        let timeline: Vec<u64> = (100..=969).step_by(3).collect();
        let a = video_to_mocap(&m, v, &timeline).unwrap();
        let b = video_to_mocap(&m, v + step, &timeline).unwrap();
        prop_assert!(a <= b);
    }
}
