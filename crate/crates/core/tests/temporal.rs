mod common;

use onestep_vqa::temporal::DisplacementDirection as D;
use onestep_vqa::{displaced_difference, nvs_fits_for_pair, LumaFrame};
use proptest::prelude::*;

fn diagonals() -> [D; 4] {
    [D::D1, D::D2, D::D3, D::D4]
}

/// Replaces every 8x8 block by its rounded mean.
fn blocky(frame: &LumaFrame) -> LumaFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut means = vec![0u8; w.div_ceil(8) * h.div_ceil(8)];
    let bw = w.div_ceil(8);
    for by in 0..h.div_ceil(8) {
        for bx in 0..bw {
            let (mut s, mut n) = (0u32, 0u32);
            for y in by * 8..((by + 1) * 8).min(h) {
                for x in bx * 8..((bx + 1) * 8).min(w) {
                    s += u32::from(frame.get(x, y));
                    n += 1;
                }
            }
            means[by * bw + bx] = ((s + n / 2) / n) as u8;
        }
    }
    LumaFrame::from_fn(w, h, |x, y| means[(y / 8) * bw + x / 8]).unwrap()
}

fn noise_pair(seed: u64) -> (LumaFrame, LumaFrame) {
    let mut r = common::rng(seed);
    (
        common::noise_frame(128, 128, 128.0, 30.0, &mut r),
        common::noise_frame(128, 128, 128.0, 30.0, &mut r),
    )
}

#[test]
fn iid_noise_differences_are_slightly_platykurtic() {
    // self-normalization over a 7x7 window lightens the tails; recorded alpha
    // with this seed is 2.96, and an independent scipy run gives 2.98
    let (a, b) = noise_pair(5);
    for (dir, fit) in nvs_fits_for_pair(&a, &b, &diagonals()).unwrap() {
        assert!((2.7..=3.2).contains(&fit.alpha), "{dir}: {}", fit.alpha);
        assert!(fit.sigma > 0.0 && fit.sigma <= 255.0);
    }
}

#[test]
fn blockiness_lowers_the_shape_parameter() {
    let (a, b) = noise_pair(5);
    let noise = nvs_fits_for_pair(&a, &b, &diagonals()).unwrap();
    let video = common::textured_video(128, 128, 2, 9);
    let raw = &video.frames()[0];
    let compressed = blocky(&video.frames()[1]);
    let blocked = nvs_fits_for_pair(raw, &compressed, &diagonals()).unwrap();
    for ((dir, n), (_, b)) in noise.iter().zip(&blocked) {
        assert!(b.alpha < n.alpha, "{dir}: blocky {} vs noise {}", b.alpha, n.alpha);
    }
}

#[test]
fn difference_fields_crop_one_pixel() {
    let (a, b) = noise_pair(1);
    for dir in D::ALL {
        let d = displaced_difference(&a, &b, dir).unwrap();
        assert_eq!((d.width(), d.height()), (126, 126));
        assert!(d.values().iter().all(|v| (-255.0..=255.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shifted_pair_cancels_along_its_motion(seed in any::<u64>(), w in 10usize..30, h in 10usize..30) {
        let mut r = common::rng(seed);
        let t = common::noise_frame(w, h, 128.0, 60.0, &mut r);
        let t1 = LumaFrame::from_fn(w, h, |x, y| {
            if x >= 1 && y >= 1 { t.get(x - 1, y - 1) } else { 0 }
        })
        .unwrap();
        let d4 = displaced_difference(&t, &t1, D::D4).unwrap();
        prop_assert!(d4.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn d1_is_negated_reindexed_d4_of_the_swapped_pair(seed in any::<u64>(), w in 9usize..30, h in 9usize..30) {
        let mut r = common::rng(seed);
        let t = common::noise_frame(w, h, 128.0, 60.0, &mut r);
        let t1 = common::noise_frame(w, h, 128.0, 60.0, &mut r);
        let d1 = displaced_difference(&t, &t1, D::D1).unwrap();
        let d4 = displaced_difference(&t1, &t, D::D4).unwrap();
        for v in 1..d1.height() {
            for u in 1..d1.width() {
                prop_assert_eq!(d1.get(u, v), -d4.get(u - 1, v - 1));
            }
        }
    }

    #[test]
    fn every_direction_matches_a_direct_loop(seed in any::<u64>(), k in 0usize..9) {
        let dir = D::ALL[k];
        let mut r = common::rng(seed);
        let t = common::noise_frame(20, 15, 128.0, 60.0, &mut r);
        let t1 = common::noise_frame(20, 15, 128.0, 60.0, &mut r);
        let d = displaced_difference(&t, &t1, dir).unwrap();
        for y in 1..14usize {
            for x in 1..19usize {
                let sx = (x as isize + dir.dx as isize) as usize;
                let sy = (y as isize + dir.dy as isize) as usize;
                let want = f64::from(t.get(x, y)) - f64::from(t1.get(sx, sy));
                prop_assert_eq!(d.get(x - 1, y - 1), want);
            }
        }
    }
}
