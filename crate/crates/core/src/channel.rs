//! OFDM channel synthesis and uplink/downlink datasets.
//!
//! Subcarrier `k` of a plan sits at `f_center + k·Δf` for `k = 0..K`, and the
//! channel on it is the coherent sum over paths of
//! `|α| e^{jφ} e^{-j2π f τ}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scene::{compute_paths, PathSet, Point3, Scene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPlan {
    center_hz: f64,
    bandwidth_hz: f64,
    num_subcarriers: usize,
}

impl FrequencyPlan {
    pub fn new(center_hz: f64, bandwidth_hz: f64, num_subcarriers: usize) -> Result<Self> {
        if num_subcarriers == 0 {
            return Err(Error::InvalidPlan("need at least one subcarrier".into()));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::InvalidPlan(format!(
                "bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        if !(center_hz > bandwidth_hz && center_hz.is_finite()) {
            return Err(Error::InvalidPlan(format!(
                "center frequency {center_hz} must exceed the bandwidth {bandwidth_hz}"
            )));
        }
        Ok(Self {
            center_hz,
            bandwidth_hz,
            num_subcarriers,
        })
    }

    pub fn center_hz(&self) -> f64 {
        self.center_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    /// Δf = BW / K.
    pub fn spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        self.center_hz + k as f64 * self.spacing_hz()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.num_subcarriers).map(|k| self.subcarrier_hz(k)).collect()
    }

    /// Same subcarrier grid around a different carrier.
    pub fn with_center(&self, center_hz: f64) -> Result<Self> {
        Self::new(center_hz, self.bandwidth_hz, self.num_subcarriers)
    }
}

/// Complex channel over `M` antennas × `K` subcarriers, antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    values: Vec<Complex64>,
    num_antennas: usize,
    plan: FrequencyPlan,
    user_index: usize,
}

impl ChannelTensor {
    pub fn new(values: Vec<Complex64>, num_antennas: usize, plan: FrequencyPlan, user_index: usize) -> Result<Self> {
        let expected = num_antennas * plan.num_subcarriers();
        if num_antennas == 0 || values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{num_antennas} x {} values", plan.num_subcarriers()),
                got: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::DegenerateDataset("channel contains non-finite entries".into()));
        }
        Ok(Self {
            values,
            num_antennas,
            plan,
            user_index,
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.plan.num_subcarriers()
    }

    pub fn plan(&self) -> &FrequencyPlan {
        &self.plan
    }

    pub fn user_index(&self) -> usize {
        self.user_index
    }

    pub fn get(&self, antenna: usize, subcarrier: usize) -> Complex64 {
        self.values[antenna * self.num_subcarriers() + subcarrier]
    }

    pub fn row(&self, antenna: usize) -> &[Complex64] {
        let k = self.num_subcarriers();
        &self.values[antenna * k..(antenna + 1) * k]
    }

    /// Channel vector across antennas on subcarrier `k`.
    pub fn column(&self, subcarrier: usize) -> Vec<Complex64> {
        (0..self.num_antennas).map(|m| self.get(m, subcarrier)).collect()
    }

    /// Tensor keeping only the listed antenna rows, in the given order.
    pub fn restrict(&self, antennas: &[usize]) -> Result<ChannelTensor> {
        if antennas.is_empty() {
            return Err(Error::InvalidMask("empty antenna subset".into()));
        }
        let mut values = Vec::with_capacity(antennas.len() * self.num_subcarriers());
        for &m in antennas {
            if m >= self.num_antennas {
                return Err(Error::InvalidMask(format!(
                    "antenna {m} out of range (M = {})",
                    self.num_antennas
                )));
            }
            values.extend_from_slice(self.row(m));
        }
        ChannelTensor::new(values, antennas.len(), self.plan, self.user_index)
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Evaluates the multipath sum at arbitrary frequencies.
pub fn synthesize_at(paths: &PathSet, frequencies: &[f64]) -> Vec<Complex64> {
    frequencies
        .iter()
        .map(|&f| {
            paths
                .paths()
                .iter()
                .map(|p| Complex64::from_polar(p.gain, p.phase - 2.0 * std::f64::consts::PI * f * p.delay))
                .sum()
        })
        .collect()
}

/// Channel on the `K` subcarriers of `plan` for one (user, antenna) link.
pub fn synthesize_channel(paths: &PathSet, plan: &FrequencyPlan) -> Result<Vec<Complex64>> {
    if paths.is_empty() {
        return Err(Error::InvalidGeometry("path set is empty".into()));
    }
    Ok(synthesize_at(paths, &plan.frequencies()))
}

/// Full `M × K` channel of one user at one carrier.
pub fn user_channel(scene: &Scene, user_index: usize, plan: &FrequencyPlan) -> Result<ChannelTensor> {
    let user = scene.users().get(user_index).ok_or(Error::InsufficientSamples {
        required: user_index + 1,
        got: scene.num_users(),
    })?;
    let mut values = Vec::with_capacity(scene.num_antennas() * plan.num_subcarriers());
    for m in 0..scene.num_antennas() {
        let paths = compute_paths(scene, user, m, plan.center_hz())?;
        values.extend(synthesize_channel(&paths, plan)?);
    }
    ChannelTensor::new(values, scene.num_antennas(), *plan, user_index)
}

/// One learning-mode observation: uplink and downlink channels of a user.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub user_index: usize,
    pub position: Point3,
    pub h_ul: ChannelTensor,
    pub h_dl: ChannelTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_antennas: usize,
    ul_plan: FrequencyPlan,
    dl_plan: FrequencyPlan,
    samples: Vec<DatasetSample>,
}

impl Dataset {
    pub fn new(
        num_antennas: usize,
        ul_plan: FrequencyPlan,
        dl_plan: FrequencyPlan,
        samples: Vec<DatasetSample>,
    ) -> Result<Self> {
        check_plans(&ul_plan, &dl_plan)?;
        for s in &samples {
            for (h, plan) in [(&s.h_ul, &ul_plan), (&s.h_dl, &dl_plan)] {
                if h.num_antennas() != num_antennas || h.plan() != plan {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{num_antennas} x {} at {} Hz", plan.num_subcarriers(), plan.center_hz()),
                        got: format!(
                            "{} x {} at {} Hz",
                            h.num_antennas(),
                            h.num_subcarriers(),
                            h.plan().center_hz()
                        ),
                    });
                }
            }
        }
        Ok(Self {
            num_antennas,
            ul_plan,
            dl_plan,
            samples,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.ul_plan.num_subcarriers()
    }

    pub fn ul_plan(&self) -> &FrequencyPlan {
        &self.ul_plan
    }

    pub fn dl_plan(&self) -> &FrequencyPlan {
        &self.dl_plan
    }

    pub fn samples(&self) -> &[DatasetSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Writes the binary dataset layout (see `docs/formats.md`).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(self.num_antennas as u32).to_le_bytes())?;
        w.write_all(&(self.num_subcarriers() as u32).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&self.ul_plan.center_hz().to_le_bytes())?;
        w.write_all(&self.dl_plan.center_hz().to_le_bytes())?;
        w.write_all(&self.ul_plan.bandwidth_hz().to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&(s.user_index as u32).to_le_bytes())?;
            for c in [s.position.x, s.position.y, s.position.z] {
                w.write_all(&c.to_le_bytes())?;
            }
            for h in [&s.h_ul, &s.h_dl] {
                for v in h.values() {
                    w.write_all(&v.re.to_le_bytes())?;
                    w.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a channel dataset file (bad magic)".into()));
        }
        let m = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        let n = read_u64(r)? as usize;
        let f_ul = read_f64(r)?;
        let f_dl = read_f64(r)?;
        let bw = read_f64(r)?;
        let ul_plan = FrequencyPlan::new(f_ul, bw, k)?;
        let dl_plan = FrequencyPlan::new(f_dl, bw, k)?;
        let mut samples = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let user_index = read_u32(r)? as usize;
            let position = Point3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?);
            let mut read_tensor = |plan: FrequencyPlan| -> Result<ChannelTensor> {
                let mut values = Vec::with_capacity(m * k);
                for _ in 0..m * k {
                    let re = read_f64(r)?;
                    let im = read_f64(r)?;
                    values.push(Complex64::new(re, im));
                }
                ChannelTensor::new(values, m, plan, user_index)
            };
            let h_ul = read_tensor(ul_plan)?;
            let h_dl = read_tensor(dl_plan)?;
            samples.push(DatasetSample {
                user_index,
                position,
                h_ul,
                h_dl,
            });
        }
        Dataset::new(m, ul_plan, dl_plan, samples)
    }
}

pub const DATASET_MAGIC: &[u8; 8] = b"CHMAPDS1";

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn check_plans(ul: &FrequencyPlan, dl: &FrequencyPlan) -> Result<()> {
    if ul.num_subcarriers() != dl.num_subcarriers() || ul.bandwidth_hz() != dl.bandwidth_hz() {
        return Err(Error::InvalidPlan(
            "uplink and downlink plans must share bandwidth and subcarrier count".into(),
        ));
    }
    Ok(())
}

/// Per-user noise stream, independent of how many users precede it.
fn noise_rng(seed: u64, user_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_index as u64);
    rng
}

/// One sample per scene user. The uplink channel is optionally perturbed by
/// circularly-symmetric complex Gaussian noise with per-entry standard
/// deviation `noise_std`; the downlink target is always noiseless.
pub fn build_dataset(
    scene: &Scene,
    ul_plan: &FrequencyPlan,
    dl_plan: &FrequencyPlan,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    check_plans(ul_plan, dl_plan)?;
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let per_component = noise_std / std::f64::consts::SQRT_2;
    let mut samples = Vec::with_capacity(scene.num_users());
    for (u, &position) in scene.users().iter().enumerate() {
        let mut h_ul = user_channel(scene, u, ul_plan)?;
        if noise_std > 0.0 {
            let mut rng = noise_rng(seed, u);
            let noisy = h_ul
                .values()
                .iter()
                .map(|&h| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    h + Complex64::new(re, im) * per_component
                })
                .collect();
            h_ul = ChannelTensor::new(noisy, scene.num_antennas(), *ul_plan, u)?;
        }
        let h_dl = user_channel(scene, u, dl_plan)?;
        samples.push(DatasetSample {
            user_index: u,
            position,
            h_ul,
            h_dl,
        });
    }
    Dataset::new(scene.num_antennas(), *ul_plan, *dl_plan, samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BijectivityReport {
    pub subset: Vec<usize>,
    pub min_pairwise_distance: f64,
    /// Dataset positions (not user indices) of the closest pair.
    pub argmin: (usize, usize),
    pub verdict: bool,
}

/// Minimum Frobenius distance between uplink channels restricted to `subset`
/// over every pair of distinct samples.
pub fn check_bijectivity(dataset: &Dataset, subset: &[usize], tolerance: f64) -> Result<BijectivityReport> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: n });
    }
    if subset.is_empty() {
        return Err(Error::InvalidMask("empty antenna subset".into()));
    }
    let restricted: Vec<Vec<Complex64>> = dataset
        .samples()
        .iter()
        .map(|s| s.h_ul.restrict(subset).map(|t| t.values().to_vec()))
        .collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, (0, 1));
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = restricted[i]
                .iter()
                .zip(&restricted[j])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            if d2 < best.0 {
                best = (d2, (i, j));
            }
        }
    }
    let min = best.0.sqrt();
    Ok(BijectivityReport {
        subset: subset.to_vec(),
        min_pairwise_distance: min,
        argmin: best.1,
        verdict: min > tolerance,
    })
}
