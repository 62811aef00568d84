//! Conjugate beamforming and subcarrier-averaged achievable rates.

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};

/// Unit-norm beamforming vector per subcarrier, stored `M × K` antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    num_antennas: usize,
    num_subcarriers: usize,
    values: Vec<Complex64>,
}

impl BeamformerSet {
    /// Normalizes every subcarrier column of `values` to unit norm.
    pub fn from_values(values: Vec<Complex64>, num_antennas: usize, num_subcarriers: usize) -> Result<Self> {
        if values.len() != num_antennas * num_subcarriers {
            return Err(Error::ShapeMismatch {
                expected: format!("{num_antennas} x {num_subcarriers}"),
                got: format!("{} values", values.len()),
            });
        }
        let mut set = Self {
            num_antennas,
            num_subcarriers,
            values,
        };
        for k in 0..num_subcarriers {
            let norm = set.column_norm(k);
            if norm == 0.0 {
                return Err(Error::ZeroChannel { subcarrier: k });
            }
            for m in 0..num_antennas {
                set.values[m * num_subcarriers + k] /= norm;
            }
        }
        Ok(set)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn get(&self, antenna: usize, subcarrier: usize) -> Complex64 {
        self.values[antenna * self.num_subcarriers + subcarrier]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn column_norm(&self, subcarrier: usize) -> f64 {
        (0..self.num_antennas)
            .map(|m| self.get(m, subcarrier).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// `v_{m,k} = h*_{m,k} / ‖h_{·,k}‖`.
pub fn conjugate_weights(h: &ChannelTensor) -> Result<BeamformerSet> {
    let conj = h.values().iter().map(|v| v.conj()).collect();
    BeamformerSet::from_values(conj, h.num_antennas(), h.num_subcarriers())
}

fn validate_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidConfig(format!("snr must be positive, got {snr}")));
    }
    Ok(())
}

/// Perfect-knowledge rate `(1/K) Σ_k log2(1 + snr ‖h_{·,k}‖²)`.
pub fn matched_rate(h: &ChannelTensor, snr: f64) -> Result<f64> {
    validate_snr(snr)?;
    let k_count = h.num_subcarriers();
    let total: f64 = (0..k_count)
        .map(|k| {
            let gain: f64 = (0..h.num_antennas()).map(|m| h.get(m, k).norm_sqr()).sum();
            (1.0 + snr * gain).log2()
        })
        .sum();
    Ok(total / k_count as f64)
}

/// Rate with beamformer `v` over the true channel:
/// `(1/K) Σ_k log2(1 + snr |Σ_m h_{m,k} v_{m,k}|²)`, the received downlink gain.
pub fn mismatched_rate(h_true: &ChannelTensor, v: &BeamformerSet, snr: f64) -> Result<f64> {
    validate_snr(snr)?;
    if h_true.num_antennas() != v.num_antennas() || h_true.num_subcarriers() != v.num_subcarriers() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {}", h_true.num_antennas(), h_true.num_subcarriers()),
            got: format!("{} x {}", v.num_antennas(), v.num_subcarriers()),
        });
    }
    let k_count = h_true.num_subcarriers();
    let total: f64 = (0..k_count)
        .map(|k| {
            let inner: Complex64 = (0..h_true.num_antennas()).map(|m| h_true.get(m, k) * v.get(m, k)).sum();
            (1.0 + snr * inner.norm_sqr()).log2()
        })
        .sum();
    Ok(total / k_count as f64)
}

/// Perfect-knowledge rate using only the antennas in `subset`.
pub fn lower_bound_rate(h_true: &ChannelTensor, subset: &[usize], snr: f64) -> Result<f64> {
    matched_rate(&h_true.restrict(subset)?, snr)
}

/// Rates of one experiment point, averaged over its test users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub mode: String,
    pub subset_size: usize,
    pub draw: usize,
    pub seed: u64,
    pub snr: f64,
    pub rate_predicted: f64,
    pub rate_upper: f64,
    pub rate_lower: f64,
    pub test_nmse: f64,
    pub train_fraction: f64,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub subset: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FrequencyPlan;

    fn tensor(values: Vec<Complex64>, m: usize) -> ChannelTensor {
        let k = values.len() / m;
        ChannelTensor::new(values, m, FrequencyPlan::new(2.5e9, 20e6, k).unwrap(), 0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_antenna_unit_modulus() {
        let h = tensor(vec![c(0.3, -0.4), c(-2.0, 1.0)], 1);
        let v = conjugate_weights(&h).unwrap();
        for k in 0..2 {
            assert!((v.get(0, k).norm() - 1.0).abs() < 1e-15);
            assert!((v.get(0, k) - h.get(0, k).conj() / h.get(0, k).norm()).norm() < 1e-15);
        }
    }

    #[test]
    fn real_positive_channel() {
        let h = tensor(vec![c(3.0, 0.0), c(4.0, 0.0)], 2);
        let v = conjugate_weights(&h).unwrap();
        assert_eq!(v.get(0, 0), c(0.6, 0.0));
        assert_eq!(v.get(1, 0), c(0.8, 0.0));
    }

    #[test]
    fn zero_column_rejected() {
        let h = tensor(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 1.0), c(0.0, 0.0)], 2);
        assert!(matches!(
            conjugate_weights(&h),
            Err(Error::ZeroChannel { subcarrier: 1 })
        ));
    }

    #[test]
    fn reference_rates() {
        let h = tensor(vec![c(1.0, 0.0)], 1);
        assert_eq!(matched_rate(&h, 1.0).unwrap(), 1.0);
        let zero = tensor(vec![c(0.0, 0.0); 4], 2);
        assert_eq!(matched_rate(&zero, 10.0).unwrap(), 0.0);
        assert!(matched_rate(&h, 0.0).is_err());
    }

    #[test]
    fn orthogonal_beamformer_has_zero_rate() {
        let h = tensor(vec![c(1.0, 0.0), c(0.0, 2.0), c(0.0, 0.0), c(0.0, 0.0)], 2);
        // Column k of h is supported on antenna 0 only; steer everything to antenna 1.
        let v = BeamformerSet::from_values(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, -1.0)], 2, 2).unwrap();
        assert_eq!(mismatched_rate(&h, &v, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_beamformer_attains_matched_rate() {
        let h = tensor(
            vec![
                c(0.2, 0.1),
                c(-0.3, 0.5),
                c(0.7, -0.1),
                c(0.0, 0.4),
                c(0.1, 0.1),
                c(-0.6, 0.2),
            ],
            3,
        );
        let v = conjugate_weights(&h).unwrap();
        let a = mismatched_rate(&h, &v, 3.0).unwrap();
        let b = matched_rate(&h, 3.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_reductions() {
        let h = tensor(vec![c(0.2, 0.1), c(-0.3, 0.5), c(0.7, -0.1), c(0.0, 0.4)], 2);
        let full = lower_bound_rate(&h, &[0, 1], 2.0).unwrap();
        assert_eq!(full, matched_rate(&h, 2.0).unwrap());
        let single = lower_bound_rate(&h, &[1], 2.0).unwrap();
        let expect = ((1.0 + 2.0 * h.get(1, 0).norm_sqr()).log2() + (1.0 + 2.0 * h.get(1, 1).norm_sqr()).log2()) / 2.0;
        assert!((single - expect).abs() < 1e-15);
        assert!(single <= full);
    }

    #[test]
    fn shape_mismatch() {
        let h = tensor(vec![c(1.0, 0.0); 4], 2);
        let v = BeamformerSet::from_values(vec![c(1.0, 0.0); 4], 1, 4).unwrap();
        assert!(mismatched_rate(&h, &v, 1.0).is_err());
    }
}
