//! Experiment orchestration: splits, subset draws, training runs, rate
//! evaluation, sweeps and CSV reports.
//!
//! Every random choice is derived from the master seed, so a configuration
//! reproduces its CSV byte for byte apart from the `wall_time_s` column.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{conjugate_weights, lower_bound_rate, matched_rate, mismatched_rate, RateReport};
use crate::channel::{build_dataset, Dataset, FrequencyPlan};
use crate::error::{Error, Result};
use crate::mlp::{self, architecture, complex_nmse, EpochStats, MlpModel, ModelBundle, TrainConfig};
use crate::preprocess::{decode_output, encode_input, encode_target, fit_stats, AntennaMask};
use crate::scene::{build_scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Input and target share the downlink carrier.
    WithinBand,
    /// Uplink-carrier input, downlink-carrier target.
    CrossBand,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::WithinBand => "within_band",
            Mode::CrossBand => "cross_band",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub ul_plan: FrequencyPlan,
    pub dl_plan: FrequencyPlan,
    pub noise_std: f64,
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub mode: Mode,
    pub subset_sizes: Vec<usize>,
    /// Random subset draws per size.
    pub draws: usize,
    pub train_fractions: Vec<f64>,
    /// Subset size held fixed during the dataset-size sweep.
    pub size_sweep_subset: usize,
    pub snr: f64,
    pub seed: u64,
    pub bijectivity_tolerance: f64,
}

impl ExperimentConfig {
    pub fn new(scene: SceneConfig, ul_plan: FrequencyPlan, dl_plan: FrequencyPlan) -> Self {
        Self {
            scene,
            ul_plan,
            dl_plan,
            noise_std: 0.0,
            hidden_layers: vec![1024, 4096, 4096, 2048],
            train: TrainConfig::default(),
            mode: Mode::WithinBand,
            subset_sizes: vec![1, 2, 3, 4, 8, 16],
            draws: 3,
            train_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            size_sweep_subset: 8,
            snr: 1.0,
            seed: 0,
            bijectivity_tolerance: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.subset_sizes.is_empty() {
            return invalid("subset_sizes must not be empty");
        }
        if self.subset_sizes.contains(&0) || self.size_sweep_subset == 0 {
            return invalid("subset sizes must be at least 1");
        }
        if self.draws == 0 {
            return invalid("draws must be at least 1");
        }
        if self.train_fractions.is_empty() {
            return invalid("train_fractions must not be empty");
        }
        if self.train_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return invalid("train fractions must lie in (0, 1]");
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return invalid("snr must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invalid("noise_std must be non-negative");
        }
        if self.hidden_layers.contains(&0) {
            return invalid("hidden layer widths must be positive");
        }
        let m = self.scene.antennas.len();
        if let Some(&s) = self
            .subset_sizes
            .iter()
            .chain([&self.size_sweep_subset])
            .find(|&&s| s > m)
        {
            return Err(Error::InvalidConfig(format!(
                "subset size {s} exceeds the {m} antennas"
            )));
        }
        self.train.validate()
    }

    /// Carrier plan of the network input.
    pub fn input_plan(&self) -> FrequencyPlan {
        match self.mode {
            Mode::WithinBand => self.dl_plan,
            Mode::CrossBand => self.ul_plan,
        }
    }
}

/// Builds the scene and one sample per user at the mode's input and target carriers.
pub fn generate_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let scene = build_scene(config.scene.clone())?;
    build_dataset(
        &scene,
        &config.input_plan(),
        &config.dl_plan,
        config.noise_std,
        derive_seed(config.seed, &[NOISE_TAG]),
    )
}

const NOISE_TAG: u64 = 0x006e_6f69_7365;
const SPLIT_TAG: u64 = 0x0073_706c_6974;
const MASK_TAG: u64 = 1;
const INIT_TAG: u64 = 2;
const SHUFFLE_TAG: u64 = 3;

/// Mixes a seed with a path of integers (SplitMix64 finalizer per step).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// Shuffled 4:1 train/test partition of sample positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndex {
    pub order: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`, then `⌊0.8 n⌋` train / remainder test.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndex> {
    if n < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (4 * n / 5).max(1).min(n - 1);
    Ok(SplitIndex {
        train: order[..n_train].to_vec(),
        test: order[n_train..].to_vec(),
        order,
    })
}

pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<SplitIndex> {
    split_indices(dataset.len(), seed)
}

/// Uniform draw of `size` distinct antennas out of `num_antennas`.
pub fn select_subset(num_antennas: usize, size: usize, seed: u64) -> Result<AntennaMask> {
    if size == 0 || size > num_antennas {
        return Err(Error::InvalidMask(format!(
            "cannot draw {size} of {num_antennas} antennas"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AntennaMask::new(num_antennas, index::sample(&mut rng, num_antennas, size).into_vec())
}

/// Identifies one training run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLabel {
    pub mode: Mode,
    pub subset_size: usize,
    pub draw: usize,
    pub train_fraction: f64,
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} subset={} draw={} fraction={}",
            self.mode, self.subset_size, self.draw, self.train_fraction
        )
    }
}

fn stack_rows(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("rows share one width")
}

/// Fits scaling on `train`, then trains a fresh network mapping masked input
/// channels to full downlink channels.
pub fn train_model(
    dataset: &Dataset,
    train: &[usize],
    mask: &AntennaMask,
    hidden_layers: &[usize],
    config: &TrainConfig,
    init_seed: u64,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(ModelBundle, Vec<EpochStats>)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples = dataset.samples();
    let stats = fit_stats(train.iter().map(|&i| &samples[i]))?;
    let width = 2 * dataset.num_antennas() * dataset.num_subcarriers();
    let inputs = train
        .iter()
        .map(|&i| encode_input(&samples[i].h_ul, &stats, mask))
        .collect::<Result<Vec<_>>>()?;
    let targets = train.iter().map(|&i| encode_target(&samples[i].h_dl, &stats)).collect();
    let inputs = stack_rows(inputs, width);
    let targets = stack_rows(targets, width);

    let mut model = MlpModel::init(&architecture(width, hidden_layers, width), init_seed)?;
    let history = mlp::train(&mut model, inputs.view(), targets.view(), config, |s| on_epoch(s))?;
    Ok((
        ModelBundle {
            model,
            stats,
            mask: mask.clone(),
        },
        history,
    ))
}

/// Test-set averages for one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub rate_predicted: f64,
    pub rate_upper: f64,
    pub rate_lower: f64,
    /// Mean per-user `‖ĥ − h‖² / ‖h‖²` on denormalized downlink channels.
    pub test_nmse: f64,
}

/// Predicts downlink channels for `test` users and scores conjugate beamformers built from them.
pub fn evaluate(bundle: &ModelBundle, dataset: &Dataset, test: &[usize], snr: f64) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bundle.mask.num_antennas() != dataset.num_antennas()
        || bundle.model.input_dim() != 2 * dataset.num_antennas() * dataset.num_subcarriers()
    {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "model for {} antennas x {} subcarriers",
                dataset.num_antennas(),
                dataset.num_subcarriers()
            ),
            got: format!(
                "model with input {} and {} antennas",
                bundle.model.input_dim(),
                bundle.mask.num_antennas()
            ),
        });
    }
    let samples = dataset.samples();
    let width = bundle.model.input_dim();
    let inputs = test
        .iter()
        .map(|&i| encode_input(&samples[i].h_ul, &bundle.stats, &bundle.mask))
        .collect::<Result<Vec<_>>>()?;
    let outputs = mlp::predict_batch(&bundle.model, stack_rows(inputs, width).view())?;

    let mut acc = [0.0f64; 4];
    for (row, &i) in outputs.outer_iter().zip(test) {
        let s = &samples[i];
        let predicted = decode_output(
            row.as_slice().expect("contiguous row"),
            &bundle.stats,
            dataset.num_antennas(),
            *dataset.dl_plan(),
            s.user_index,
        )?;
        let v = conjugate_weights(&predicted)?;
        acc[0] += mismatched_rate(&s.h_dl, &v, snr)?;
        acc[1] += matched_rate(&s.h_dl, snr)?;
        acc[2] += lower_bound_rate(&s.h_dl, bundle.mask.selected(), snr)?;
        acc[3] += complex_nmse(predicted.values(), s.h_dl.values())?;
    }
    let n = test.len() as f64;
    Ok(Evaluation {
        rate_predicted: acc[0] / n,
        rate_upper: acc[1] / n,
        rate_lower: acc[2] / n,
        test_nmse: acc[3] / n,
    })
}

/// A finished run: its report row, model and loss curve.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub report: RateReport,
    pub bundle: ModelBundle,
    pub history: Vec<EpochStats>,
}

/// Seeds of one (subset size, draw) cell: the antenna mask and init/shuffle streams derive from it.
pub fn run_seed(master: u64, subset_size: usize, draw: usize) -> u64 {
    derive_seed(master, &[subset_size as u64, draw as u64])
}

/// Trains and evaluates one (subset size, draw, training fraction) point.
pub fn run_point(
    config: &ExperimentConfig,
    dataset: &Dataset,
    split: &SplitIndex,
    subset_size: usize,
    draw: usize,
    train_fraction: f64,
    on_epoch: &mut dyn FnMut(&RunLabel, &EpochStats),
) -> Result<TrainedRun> {
    let start = Instant::now();
    let seed = run_seed(config.seed, subset_size, draw);
    let mask = select_subset(dataset.num_antennas(), subset_size, derive_seed(seed, &[MASK_TAG]))?;
    let n_train = ((split.train.len() as f64 * train_fraction).round() as usize).clamp(1, split.train.len());
    let train = &split.train[..n_train];
    debug_assert!(train.iter().all(|i| !split.test.contains(i)));

    let label = RunLabel {
        mode: config.mode,
        subset_size,
        draw,
        train_fraction,
    };
    let train_config = TrainConfig {
        seed: derive_seed(seed, &[SHUFFLE_TAG]),
        ..config.train
    };
    let (bundle, history) = train_model(
        dataset,
        train,
        &mask,
        &config.hidden_layers,
        &train_config,
        derive_seed(seed, &[INIT_TAG]),
        &mut |s| on_epoch(&label, s),
    )?;
    let eval = evaluate(&bundle, dataset, &split.test, config.snr)?;
    let report = RateReport {
        mode: config.mode.to_string(),
        subset_size,
        draw,
        seed,
        snr: config.snr,
        rate_predicted: eval.rate_predicted,
        rate_upper: eval.rate_upper,
        rate_lower: eval.rate_lower,
        test_nmse: eval.test_nmse,
        train_fraction,
        wall_time_s: start.elapsed().as_secs_f64(),
        subset: mask.selected().to_vec(),
    };
    Ok(TrainedRun {
        report,
        bundle,
        history,
    })
}

/// The master-seed train/test split shared by every run of a configuration.
pub fn experiment_split(config: &ExperimentConfig, dataset: &Dataset) -> Result<SplitIndex> {
    split_dataset(dataset, derive_seed(config.seed, &[SPLIT_TAG]))
}

/// Every (subset size, draw) on the full training split.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &Dataset,
    on_epoch: &mut dyn FnMut(&RunLabel, &EpochStats),
) -> Result<Vec<TrainedRun>> {
    config.validate()?;
    let split = experiment_split(config, dataset)?;
    let mut runs = Vec::with_capacity(config.subset_sizes.len() * config.draws);
    for &size in &config.subset_sizes {
        for draw in 0..config.draws {
            runs.push(run_point(config, dataset, &split, size, draw, 1.0, on_epoch)?);
        }
    }
    Ok(runs)
}

/// Retrains from scratch at each training fraction with a fixed test set
/// and the `size_sweep_subset` antenna subset of each draw.
pub fn run_dataset_size_sweep(
    config: &ExperimentConfig,
    dataset: &Dataset,
    on_epoch: &mut dyn FnMut(&RunLabel, &EpochStats),
) -> Result<Vec<TrainedRun>> {
    config.validate()?;
    let split = experiment_split(config, dataset)?;
    let mut runs = Vec::with_capacity(config.train_fractions.len() * config.draws);
    for &fraction in &config.train_fractions {
        for draw in 0..config.draws {
            runs.push(run_point(
                config,
                dataset,
                &split,
                config.size_sweep_subset,
                draw,
                fraction,
                on_epoch,
            )?);
        }
    }
    Ok(runs)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Median predicted rate per distinct key, in first-seen key order.
pub fn median_rate_by<K: PartialEq + Copy>(reports: &[RateReport], key: impl Fn(&RateReport) -> K) -> Vec<(K, f64)> {
    let mut keys: Vec<K> = Vec::new();
    for r in reports {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let rates: Vec<f64> = reports
                .iter()
                .filter(|r| key(r) == k)
                .map(|r| r.rate_predicted)
                .collect();
            (k, median(&rates))
        })
        .collect()
}

pub fn write_csv<W: Write>(reports: &[RateReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `mode, subset_size, draw, seed, snr, rate_predicted,
/// rate_upper, rate_lower, test_nmse, train_fraction, wall_time_s`.
pub fn report_csv(reports: &[RateReport], path: impl AsRef<Path>) -> Result<()> {
    write_csv(reports, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_floor_rule() {
        let s = split_indices(10, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let s = split_indices(5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (4, 1));
        assert!(split_indices(1, 0).is_err());
    }

    #[test]
    fn split_is_seeded_disjoint_and_covering() {
        let a = split_indices(37, 9).unwrap();
        assert_eq!(a, split_indices(37, 9).unwrap());
        assert_ne!(a.order, split_indices(37, 10).unwrap().order);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        assert!(a.test.iter().all(|i| !a.train.contains(i)));
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn subset_draws() {
        assert_eq!(select_subset(6, 6, 3).unwrap().selected(), &[0, 1, 2, 3, 4, 5]);
        assert!(select_subset(4, 5, 0).is_err());
        assert!(select_subset(4, 0, 0).is_err());
        let m = select_subset(16, 4, 77).unwrap();
        assert_eq!(m, select_subset(16, 4, 77).unwrap());
        assert!(m.selected().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn all_singletons_reachable() {
        let mut seen = [false; 4];
        for seed in 0..64 {
            seen[select_subset(4, 1, seed).unwrap().selected()[0]] = true;
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(5, &[1, 1]), derive_seed(5, &[1, 1]));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
