use proptest::prelude::*;
use rwc_core::{rwc_pair, RwcMode, TensorData};

/// Two independent passes, no shared code with the engine: sum |Δ|, sum |prev|.
fn naive_norm_ratio(prev: &[f64], cur: &[f64]) -> f64 {
    let mut diff = 0.0;
    for i in 0..prev.len() {
        diff += (cur[i] - prev[i]).abs();
    }
    let mut base = 0.0;
    for v in prev {
        base += v.abs();
    }
    diff / base
}

fn tensor(shape: &[usize], values: &[f64]) -> TensorData {
    TensorData::from_f64(shape.to_vec(), values.to_vec()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn shape_and_pair() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
    prop::collection::vec(1usize..8, 1..=4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        (
            Just(shape),
            prop::collection::vec(0.1f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

fn signed(values: Vec<f64>, signs: &[bool]) -> Vec<f64> {
    values.into_iter().zip(signs.iter().cycle()).map(|(v, &s)| if s { -v } else { v }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_ratio_matches_naive_oracle((shape, prev, cur) in shape_and_pair(), signs in prop::collection::vec(any::<bool>(), 1..16)) {
        let prev = signed(prev, &signs);
        let got = rwc_pair(&tensor(&shape, &prev), &tensor(&shape, &cur), RwcMode::NormRatio).unwrap();
        prop_assert!(rel(got, naive_norm_ratio(&prev, &cur)) <= 1e-12);
    }

    #[test]
    fn scale_invariance((shape, prev, cur) in shape_and_pair(), k in prop_oneof![0.5f64..2.0, 1e-3f64..1e3, -1e3f64..-1e-3]) {
        for mode in [RwcMode::NormRatio, RwcMode::ElementMean] {
            let base = rwc_pair(&tensor(&shape, &prev), &tensor(&shape, &cur), mode).unwrap();
            let sp: Vec<f64> = prev.iter().map(|v| v * k).collect();
            let sc: Vec<f64> = cur.iter().map(|v| v * k).collect();
            let scaled = rwc_pair(&tensor(&shape, &sp), &tensor(&shape, &sc), mode).unwrap();
            prop_assert!(rel(base, scaled) <= 1e-12, "{mode}: {base} vs {scaled}");
        }
    }

    #[test]
    fn permutation_invariance((_, prev, cur) in shape_and_pair(), seed in any::<u64>()) {
        let n = prev.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let pp: Vec<f64> = order.iter().map(|&i| prev[i]).collect();
        let pc: Vec<f64> = order.iter().map(|&i| cur[i]).collect();
        for mode in [RwcMode::NormRatio, RwcMode::ElementMean] {
            let a = rwc_pair(&tensor(&[n], &prev), &tensor(&[n], &cur), mode).unwrap();
            let b = rwc_pair(&tensor(&[n], &pp), &tensor(&[n], &pc), mode).unwrap();
            prop_assert!(rel(a, b) <= 1e-12);
        }
    }

    #[test]
    fn identical_snapshots_give_exact_zero((shape, prev, _) in shape_and_pair()) {
        let t = tensor(&shape, &prev);
        prop_assert_eq!(rwc_pair(&t, &t, RwcMode::NormRatio).unwrap(), 0.0);
        prop_assert_eq!(rwc_pair(&t, &t, RwcMode::ElementMean).unwrap(), 0.0);
    }

    #[test]
    fn values_are_non_negative_and_finite((shape, prev, cur) in shape_and_pair()) {
        for mode in [RwcMode::NormRatio, RwcMode::ElementMean] {
            let v = rwc_pair(&tensor(&shape, &prev), &tensor(&shape, &cur), mode).unwrap();
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }
}

#[test]
fn hand_fixtures() {
    let v = rwc_pair(&tensor(&[3], &[1.0, -2.0, 3.0]), &tensor(&[3], &[1.5, -1.0, 3.0]), RwcMode::NormRatio).unwrap();
    assert!((v - 0.25).abs() <= 1e-12);
    let (p, c) = (tensor(&[2], &[1.0, 4.0]), tensor(&[2], &[2.0, 2.0]));
    assert!((rwc_pair(&p, &c, RwcMode::NormRatio).unwrap() - 0.6).abs() <= 1e-12);
    assert!((rwc_pair(&p, &c, RwcMode::ElementMean).unwrap() - 0.75).abs() <= 1e-12);
}

#[test]
fn element_mean_oracle() {
    let prev = [2.0, 0.0, -4.0, 1e-13, 8.0];
    let cur = [3.0, 7.0, -2.0, 5.0, 8.0];
    // only |prev| >= 1e-12 counts: 0.5, 0.5, 0.0
    let v = rwc_pair(&tensor(&[5], &prev), &tensor(&[5], &cur), RwcMode::ElementMean).unwrap();
    assert!((v - 1.0 / 3.0).abs() <= 1e-15);
}
