//! Centering, max-abs scaling, antenna masking and flattening.
//!
//! A channel tensor becomes a real `M × K × 2` array after
//! `(h - μ) / Δ`, with the last axis holding (re, im). The flat network vector
//! uses the same antenna-major, subcarrier, then (re, im) order.

use num_complex::Complex64;

use crate::channel::{ChannelTensor, DatasetSample, FrequencyPlan};
use crate::error::{Error, Result};

/// Dataset mean and centered max-abs value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: Complex64,
    pub max_abs: f64,
}

/// Fits `μ` and `Δ` over an arbitrary collection of complex entries.
///
/// `Δ` is taken over the centered values so that every fitted entry
/// normalizes into `[-1, 1]`.
pub fn fit_stats_values(values: &[Complex64]) -> Result<NormStats> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = values.iter().sum::<Complex64>() / values.len() as f64;
    let max_abs = values.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    if !(max_abs > 0.0 && max_abs.is_finite()) {
        return Err(Error::DegenerateDataset(format!(
            "centered max-abs is {max_abs}; every entry equals the mean"
        )));
    }
    Ok(NormStats { mean, max_abs })
}

/// Fits one shared scale over every uplink and downlink entry of the training samples.
pub fn fit_stats<'a, I>(training: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a DatasetSample>,
{
    let mut values = Vec::new();
    for s in training {
        values.extend_from_slice(s.h_ul.values());
        values.extend_from_slice(s.h_dl.values());
    }
    fit_stats_values(&values)
}

/// Real `M × K × 2` array, stored flat in (antenna, subcarrier, re/im) order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    num_antennas: usize,
    num_subcarriers: usize,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn zeros(num_antennas: usize, num_subcarriers: usize) -> Self {
        Self {
            num_antennas,
            num_subcarriers,
            data: vec![0.0; 2 * num_antennas * num_subcarriers],
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.num_antennas, self.num_subcarriers, 2]
    }

    fn index(&self, m: usize, k: usize, part: usize) -> usize {
        (m * self.num_subcarriers + k) * 2 + part
    }

    pub fn get(&self, m: usize, k: usize, part: usize) -> f64 {
        self.data[self.index(m, k, part)]
    }

    pub fn set(&mut self, m: usize, k: usize, part: usize, value: f64) {
        let i = self.index(m, k, part);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `(h - μ) / Δ` split into real and imaginary planes.
pub fn normalize(h: &ChannelTensor, stats: &NormStats) -> RealTensor {
    let mut out = RealTensor::zeros(h.num_antennas(), h.num_subcarriers());
    for (i, v) in h.values().iter().enumerate() {
        let z = (v - stats.mean) / stats.max_abs;
        out.data[2 * i] = z.re;
        out.data[2 * i + 1] = z.im;
    }
    out
}

/// Inverse of [`normalize`]: `Δ·t + μ` as a channel tensor.
pub fn denormalize(t: &RealTensor, stats: &NormStats, plan: FrequencyPlan, user_index: usize) -> Result<ChannelTensor> {
    if t.num_subcarriers != plan.num_subcarriers() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} subcarriers", plan.num_subcarriers()),
            got: format!("{} subcarriers", t.num_subcarriers),
        });
    }
    let values = t
        .data
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]) * stats.max_abs + stats.mean)
        .collect();
    ChannelTensor::new(values, t.num_antennas, plan, user_index)
}

/// The set of observed antennas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntennaMask {
    num_antennas: usize,
    selected: Vec<usize>,
}

impl AntennaMask {
    /// Sorts and validates `selected`; it must be non-empty, distinct and `< num_antennas`.
    pub fn new(num_antennas: usize, mut selected: Vec<usize>) -> Result<Self> {
        selected.sort_unstable();
        let len = selected.len();
        selected.dedup();
        if selected.len() != len {
            return Err(Error::InvalidMask("duplicate antenna index".into()));
        }
        if selected.is_empty() {
            return Err(Error::InvalidMask("mask selects no antennas".into()));
        }
        if let Some(&bad) = selected.iter().find(|&&m| m >= num_antennas) {
            return Err(Error::InvalidMask(format!(
                "antenna {bad} out of range (M = {num_antennas})"
            )));
        }
        Ok(Self { num_antennas, selected })
    }

    pub fn full(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, (0..num_antennas).collect())
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, antenna: usize) -> bool {
        self.selected.binary_search(&antenna).is_ok()
    }

    /// Binary `M × K × 2` tensor with ones on the selected rows.
    pub fn tensor(&self, num_subcarriers: usize) -> RealTensor {
        let mut u = RealTensor::zeros(self.num_antennas, num_subcarriers);
        for &m in &self.selected {
            for k in 0..num_subcarriers {
                u.set(m, k, 0, 1.0);
                u.set(m, k, 1, 1.0);
            }
        }
        u
    }
}

/// Elementwise product with the mask tensor; unselected rows become zero.
pub fn apply_mask(t: &RealTensor, mask: &AntennaMask) -> Result<RealTensor> {
    if t.num_antennas != mask.num_antennas {
        return Err(Error::ShapeMismatch {
            expected: format!("{} antennas", mask.num_antennas),
            got: format!("{} antennas", t.num_antennas),
        });
    }
    let u = mask.tensor(t.num_subcarriers);
    Ok(RealTensor {
        num_antennas: t.num_antennas,
        num_subcarriers: t.num_subcarriers,
        data: t.data.iter().zip(&u.data).map(|(x, w)| x * w).collect(),
    })
}

/// Length-`2KM` vector in (antenna, subcarrier, re/im) order.
pub fn flatten(t: &RealTensor) -> Vec<f64> {
    t.data.clone()
}

pub fn unflatten(v: &[f64], num_antennas: usize, num_subcarriers: usize) -> Result<RealTensor> {
    let expected = 2 * num_antennas * num_subcarriers;
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.len() });
    }
    Ok(RealTensor {
        num_antennas,
        num_subcarriers,
        data: v.to_vec(),
    })
}

/// Network input for one channel: normalize, mask, flatten.
pub fn encode_input(h: &ChannelTensor, stats: &NormStats, mask: &AntennaMask) -> Result<Vec<f64>> {
    Ok(flatten(&apply_mask(&normalize(h, stats), mask)?))
}

/// Network target for one channel: normalize, flatten.
pub fn encode_target(h: &ChannelTensor, stats: &NormStats) -> Vec<f64> {
    flatten(&normalize(h, stats))
}

/// Network output back to a complex channel.
pub fn decode_output(
    y: &[f64],
    stats: &NormStats,
    num_antennas: usize,
    plan: FrequencyPlan,
    user_index: usize,
) -> Result<ChannelTensor> {
    let t = unflatten(y, num_antennas, plan.num_subcarriers())?;
    denormalize(&t, stats, plan, user_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(k: usize) -> FrequencyPlan {
        FrequencyPlan::new(2.5e9, 20e6, k).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_point_stats() {
        let s = fit_stats_values(&[c(1.0, 0.0), c(3.0, 0.0)]).unwrap();
        assert_eq!(s.mean, c(2.0, 0.0));
        assert_eq!(s.max_abs, 1.0);
    }

    #[test]
    fn constant_and_empty_rejected() {
        assert!(matches!(
            fit_stats_values(&[c(0.5, 0.5); 4]),
            Err(Error::DegenerateDataset(_))
        ));
        assert!(matches!(fit_stats_values(&[]), Err(Error::EmptyDataset)));
        let none: Vec<DatasetSample> = Vec::new();
        assert!(matches!(fit_stats(&none), Err(Error::EmptyDataset)));
    }

    #[test]
    fn centering_and_extreme_entry() {
        let stats = NormStats {
            mean: c(0.5, -0.25),
            max_abs: 2.0,
        };
        let h = ChannelTensor::new(vec![stats.mean; 6], 3, plan(2), 0).unwrap();
        assert!(normalize(&h, &stats).as_slice().iter().all(|&x| x == 0.0));

        let values = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(2.0, -1.0)];
        let h = ChannelTensor::new(values.clone(), 2, plan(2), 0).unwrap();
        let stats = fit_stats_values(&values).unwrap();
        let t = normalize(&h, &stats);
        let mags: Vec<f64> = t.as_slice().chunks(2).map(|p| p[0].hypot(p[1])).collect();
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-15);
        assert!(t.as_slice().iter().all(|x| x.abs() <= 1.0));
        let back = denormalize(&t, &stats, plan(2), 0).unwrap();
        for (a, b) in back.values().iter().zip(&values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mask_rows() {
        let mut t = RealTensor::zeros(4, 3);
        for (i, x) in t.data.iter_mut().enumerate() {
            *x = i as f64 + 1.0;
        }
        let mask = AntennaMask::new(4, vec![2, 0]).unwrap();
        assert_eq!(mask.selected(), &[0, 2]);
        let out = apply_mask(&t, &mask).unwrap();
        for m in 0..4 {
            for k in 0..3 {
                for p in 0..2 {
                    let expect = if m == 0 || m == 2 { t.get(m, k, p) } else { 0.0 };
                    assert_eq!(out.get(m, k, p), expect);
                }
            }
        }
        assert_eq!(apply_mask(&out, &mask).unwrap(), out);
        assert_eq!(apply_mask(&t, &AntennaMask::full(4).unwrap()).unwrap(), t);
    }

    #[test]
    fn mask_validation() {
        assert!(AntennaMask::new(4, vec![]).is_err());
        assert!(AntennaMask::new(4, vec![4]).is_err());
        assert!(AntennaMask::new(4, vec![1, 1]).is_err());
        let t = RealTensor::zeros(3, 2);
        assert!(apply_mask(&t, &AntennaMask::full(4).unwrap()).is_err());
    }

    #[test]
    fn flatten_order() {
        let mut t = RealTensor::zeros(1, 1);
        t.set(0, 0, 0, 0.25);
        t.set(0, 0, 1, -0.5);
        assert_eq!(flatten(&t), vec![0.25, -0.5]);

        let mut t = RealTensor::zeros(2, 2);
        t.set(1, 0, 0, 7.0);
        assert_eq!(flatten(&t)[4], 7.0);
        assert!(unflatten(&[0.0; 7], 2, 2).is_err());
    }
}
