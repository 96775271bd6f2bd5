mod support {
    pub mod oracles;
}

use craterscan::nms::nms;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{random_detections, ref_iou, ref_nms};

#[test]
fn matches_brute_force_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..300 {
        let n = rng.gen_range(0..=200);
        let dets = random_detections(&mut rng, n, 3);
        for thr in [0.3, 0.5, 0.7] {
            for aware in [true, false] {
                let got = nms(&dets, thr, aware).unwrap();
                let want = ref_nms(&dets, thr, aware);
                assert_eq!(got, want, "case {case} n={n} thr={thr} aware={aware}");
            }
        }
    }
}

#[test]
fn reference_iou_agrees_on_examples() {
    let a = craterscan::PixelBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = craterscan::PixelBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
    assert!((ref_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
    assert_eq!(ref_iou(&a, &b), craterscan::iou(&a, &b));
}

#[test]
fn output_is_subset_in_kept_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dets = random_detections(&mut rng, 120, 2);
    let out = nms(&dets, 0.5, true).unwrap();
    assert!(out.iter().all(|d| dets.contains(d)));
    assert!(out.windows(2).all(|p| p[0].confidence >= p[1].confidence));
}
