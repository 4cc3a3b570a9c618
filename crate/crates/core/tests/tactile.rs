use proptest::prelude::*;
use touchstone_core::tactile::dataset::{finetune_set, lab_objects, POSES_PER_OBJECT};
use touchstone_core::par::Exec;
use touchstone_core::tactile::{
    capture_clip, detect_contact, press, relative_depths, select_frames, ssim, ContactCriteria, GelConfig, Indenter,
    PressPose,
};

fn quiet() -> GelConfig {
    GelConfig { sensor_noise_sigma: 0.0, ..GelConfig::default() }
}

fn mean_abs(img: &touchstone_core::imaging::GrayImage) -> f64 {
    img.data.iter().map(|v| v.abs()).sum::<f64>() / img.data.len() as f64
}

#[test]
fn clip_depths_follow_the_step_contract() {
    let s = press(&Indenter { hardness: 70.0, aspect: 1.0 }, &PressPose::default(), &GelConfig::default(), 6.0, 4).unwrap();
    let i = detect_contact(&s.frames, &s.reference, &ContactCriteria::COLLECTION).unwrap().unwrap();
    let clip = capture_clip(&s, i).unwrap();
    let want = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];
    for (d, w) in relative_depths(&clip).iter().zip(want) {
        assert!((d - w).abs() < 1e-12);
    }
    assert_eq!(capture_clip(&s, i).unwrap(), clip);
    assert!(capture_clip(&s, s.frames.len() - 7).is_err());
}

#[test]
fn collection_gate_fires_early_for_mid_range_hardness() {
    // the noise level is chosen so the stricter SSIM gate lands within the
    // first millimetre of indentation
    for seed in 0..10 {
        let s = press(&Indenter { hardness: 70.0, aspect: 1.0 }, &PressPose::default(), &GelConfig::default(), 6.0, seed)
            .unwrap();
        let i = detect_contact(&s.frames, &s.reference, &ContactCriteria::COLLECTION).unwrap().unwrap();
        let d = s.frames[i].depth;
        assert!((0.25..=0.75).contains(&d), "seed {seed}: contact at {d} mm");
    }
}

#[test]
fn finetune_corpus_has_280_clips() {
    let set = finetune_set(&GelConfig::default(), 1, Exec::Parallel).unwrap();
    assert_eq!(set.len(), lab_objects().len() * POSES_PER_OBJECT);
    assert_eq!(set.len(), 280);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn harder_objects_give_stronger_differences(h in 10.0f64..90.0, gap in 1.0f64..10.0, yaw in 0.0f64..45.0) {
        let pose = PressPose { dx: 0.5, dy: -1.0, yaw_deg: yaw };
        let soft = press(&Indenter { hardness: h, aspect: 1.3 }, &pose, &quiet(), 2.0, 1).unwrap();
        let hard = press(&Indenter { hardness: h + gap, aspect: 1.3 }, &pose, &quiet(), 2.0, 1).unwrap();
        let cs = capture_clip(&soft, 0).unwrap();
        let ch = capture_clip(&hard, 0).unwrap();
        for (a, b) in select_frames(&ch, 4).unwrap().iter().zip(select_frames(&cs, 4).unwrap().iter()) {
            prop_assert!(mean_abs(a) > mean_abs(b));
        }
    }

    #[test]
    fn marker_travel_grows_with_depth(h in 5.0f64..95.0, seed in 0u64..1000) {
        let s = press(&Indenter { hardness: h, aspect: 1.0 }, &PressPose::default(), &GelConfig::default(), 3.0, seed).unwrap();
        prop_assert_eq!(s.frames[0].mean_marker_displacement(&s.reference), 0.0);
        for w in s.frames.windows(2) {
            prop_assert!(w[1].mean_marker_displacement(&s.reference) > w[0].mean_marker_displacement(&s.reference));
        }
    }

    #[test]
    fn contact_index_non_increasing_in_threshold(h in 30.0f64..90.0, seed in 0u64..1000, lo in 0.80f64..0.97, step in 0.0f64..0.03) {
        let s = press(&Indenter { hardness: h, aspect: 1.0 }, &PressPose::default(), &GelConfig::default(), 6.0, seed).unwrap();
        let at = |t: f64| {
            detect_contact(&s.frames, &s.reference, &ContactCriteria { ssim_threshold: t, marker_disp_threshold: None })
                .unwrap()
                .unwrap_or(usize::MAX)
        };
        prop_assert!(at(lo + step) <= at(lo));
    }

    #[test]
    fn ssim_is_symmetric(seed in 0u64..1000, k in 1usize..12) {
        let s = press(&Indenter { hardness: 60.0, aspect: 1.5 }, &PressPose::default(), &GelConfig::default(), 3.0, seed).unwrap();
        let (a, b) = (&s.reference.image, &s.frames[k].image);
        prop_assert!((ssim(a, b).unwrap() - ssim(b, a).unwrap()).abs() < 1e-12);
    }
}
