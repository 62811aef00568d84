//! Rate bounds of conjugate beamforming.

use approx::assert_relative_eq;
use chanmap::beamform::{conjugate_weights, lower_bound_rate, matched_rate, mismatched_rate, BeamformerSet};
use chanmap::channel::{ChannelTensor, FrequencyPlan};
use chanmap::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn channel(values: Vec<Complex64>, m: usize, k: usize) -> ChannelTensor {
    ChannelTensor::new(values, m, FrequencyPlan::new(2.5e9, 20e6, k).unwrap(), 0).unwrap()
}

fn complex_strategy(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

/// Per-subcarrier rates evaluated directly from the defining sums.
#[test]
fn matches_per_subcarrier_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, k) = (5, 7);
    let h = channel(gaussian(&mut rng, m * k), m, k);
    let v = BeamformerSet::from_values(gaussian(&mut rng, m * k), m, k).unwrap();
    let snr = 2.5;
    let (mut upper, mut mis) = (0.0, 0.0);
    for kk in 0..k {
        let mut norm = 0.0;
        let mut inner = Complex64::new(0.0, 0.0);
        for mm in 0..m {
            norm += h.get(mm, kk).norm_sqr();
            inner += h.get(mm, kk) * v.get(mm, kk);
        }
        upper += (1.0 + snr * norm).log2() / k as f64;
        mis += (1.0 + snr * inner.norm_sqr()).log2() / k as f64;
    }
    assert!((matched_rate(&h, snr).unwrap() - upper).abs() < 1e-12);
    assert!((mismatched_rate(&h, &v, snr).unwrap() - mis).abs() < 1e-12);
}

#[test]
fn conjugate_weights_attain_the_matched_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let h = channel(gaussian(&mut rng, 6 * 4), 6, 4);
        let v = conjugate_weights(&h).unwrap();
        for kk in 0..4 {
            assert_relative_eq!(v.column_norm(kk), 1.0, max_relative = 1e-14);
        }
        let a = mismatched_rate(&h, &v, 1.7).unwrap();
        let b = matched_rate(&h, 1.7).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

#[test]
fn no_unit_beamformer_beats_matched_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = channel(gaussian(&mut rng, 4 * 3), 4, 3);
    let upper = matched_rate(&h, 10.0).unwrap();
    for _ in 0..1000 {
        let v = BeamformerSet::from_values(gaussian(&mut rng, 4 * 3), 4, 3).unwrap();
        assert!(mismatched_rate(&h, &v, 10.0).unwrap() <= upper + 1e-12);
    }
}

#[test]
fn zero_column_is_rejected() {
    let mut values = vec![Complex64::new(1.0, 0.0); 6];
    values[1] = Complex64::new(0.0, 0.0);
    values[4] = Complex64::new(0.0, 0.0);
    assert!(BeamformerSet::from_values(values.clone(), 2, 3).is_err());
    assert!(conjugate_weights(&channel(values, 2, 3)).is_err());
    let h = channel(vec![Complex64::new(1.0, 0.0); 6], 2, 3);
    assert!(matched_rate(&h, 0.0).is_err());
    assert!(matched_rate(&h, f64::NAN).is_err());
}

proptest! {
    #[test]
    fn common_phase_rotation_is_invisible(values in complex_strategy(12), theta in -3.2f64..3.2) {
        let h = channel(values.clone(), 3, 4);
        let rotated = channel(values.iter().map(|v| v * Complex64::from_polar(1.0, theta)).collect(), 3, 4);
        let v = conjugate_weights(&h).unwrap();
        let a = mismatched_rate(&h, &v, 4.0).unwrap();
        let b = mismatched_rate(&rotated, &v, 4.0).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((matched_rate(&h, 4.0).unwrap() - matched_rate(&rotated, 4.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rate_grows_with_snr(values in complex_strategy(12), s1 in 0.01f64..100.0, s2 in 0.01f64..100.0) {
        let h = channel(values, 3, 4);
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(matched_rate(&h, lo).unwrap() <= matched_rate(&h, hi).unwrap());
    }

    #[test]
    fn larger_subsets_never_lose_rate(values in complex_strategy(24), cut in 1usize..6) {
        let h = channel(values, 6, 4);
        let small: Vec<usize> = (0..cut).collect();
        let large: Vec<usize> = (0..=cut).collect();
        let a = lower_bound_rate(&h, &small, 3.0).unwrap();
        let b = lower_bound_rate(&h, &large, 3.0).unwrap();
        prop_assert!(a <= b + 1e-12);
        prop_assert!(b <= matched_rate(&h, 3.0).unwrap() + 1e-12);
    }
}
