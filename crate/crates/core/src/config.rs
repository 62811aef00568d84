//! TOML configuration files.
//!
//! ```toml
//! [scene]
//! room_size = [10.0, 10.0, 3.0]
//! max_reflection_order = 2
//! reflection_coefficient = 0.5
//! max_paths = 1
//!
//! [scene.antennas]          # or: positions = [[x, y, z], ...]
//! rows = 4
//! cols = 4
//! spacing = 1.0
//! center = [5.0, 5.0]
//! height = 2.5
//!
//! [[scene.user_grids]]
//! origin = [4.003, 4.207, 1.0]
//! extent = [0.3, 0.3]
//! spacing = 0.01
//!
//! [frequency]
//! uplink_hz = 2.4e9
//! downlink_hz = 2.5e9
//! bandwidth_hz = 2.0e7
//! subcarriers = 16
//!
//! [dataset]
//! noise_std = 0.0
//!
//! [model]
//! hidden_layers = [256, 1024, 512]
//!
//! [train]                   # any field of TrainConfig
//! epochs = 17
//!
//! [experiment]
//! mode = "within_band"      # or "cross_band"
//! subset_sizes = [1, 2, 4, 8]
//! draws = 3
//! train_fractions = [0.1, 0.3, 1.0]
//! size_sweep_subset = 8
//! snr = 1.0
//! seed = 7
//! bijectivity_tolerance = 1e-9
//! ```
//!
//! Omitted sections and fields fall back to the defaults of [`SceneConfig`],
//! [`TrainConfig`] and [`ExperimentConfig`].

use std::path::Path;

use serde::Deserialize;

use crate::channel::FrequencyPlan;
use crate::error::Result;
use crate::mlp::TrainConfig;
use crate::pipeline::{ExperimentConfig, Mode};
use crate::scene::{ceiling_grid, Point3, Room, SceneConfig, UserGrid};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    scene: SceneSection,
    #[serde(default)]
    frequency: FrequencySection,
    #[serde(default)]
    dataset: DatasetSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    experiment: ExperimentSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSection {
    room_size: Option<[f64; 3]>,
    room_origin: Option<[f64; 3]>,
    max_reflection_order: Option<u32>,
    reflection_coefficient: Option<f64>,
    max_paths: Option<usize>,
    antennas: Option<AntennaSection>,
    user_grids: Option<Vec<GridSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AntennaSection {
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
        center: [f64; 2],
        height: f64,
    },
    List {
        positions: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    origin: [f64; 3],
    extent: [f64; 2],
    spacing: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FrequencySection {
    uplink_hz: f64,
    downlink_hz: f64,
    bandwidth_hz: f64,
    subcarriers: usize,
}

impl Default for FrequencySection {
    fn default() -> Self {
        Self {
            uplink_hz: 2.4e9,
            downlink_hz: 2.5e9,
            bandwidth_hz: 0.02e9,
            subcarriers: 64,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DatasetSection {
    noise_std: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    hidden_layers: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    mode: Option<Mode>,
    subset_sizes: Option<Vec<usize>>,
    draws: Option<usize>,
    train_fractions: Option<Vec<f64>>,
    size_sweep_subset: Option<usize>,
    snr: Option<f64>,
    seed: Option<u64>,
    bijectivity_tolerance: Option<f64>,
}

fn point(c: [f64; 3]) -> Point3 {
    Point3::new(c[0], c[1], c[2])
}

/// Parses a TOML configuration document into a validated experiment config.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text)?;
    let defaults = SceneConfig::default();
    let s = file.scene;
    let mut room = defaults.room;
    if let Some(size) = s.room_size {
        room = Room::with_size(size[0], size[1], size[2]);
    }
    if let Some(origin) = s.room_origin {
        room.origin = point(origin);
    }
    let antennas = match s.antennas {
        None => defaults.antennas,
        Some(AntennaSection::Grid {
            rows,
            cols,
            spacing,
            center,
            height,
        }) => ceiling_grid(rows, cols, spacing, center, height),
        Some(AntennaSection::List { positions }) => positions.into_iter().map(point).collect(),
    };
    let user_grids = match s.user_grids {
        None => defaults.user_grids,
        Some(grids) => grids
            .into_iter()
            .map(|g| UserGrid {
                origin: point(g.origin),
                extent: g.extent,
                spacing: g.spacing,
            })
            .collect(),
    };
    let scene = SceneConfig {
        room,
        antennas,
        user_grids,
        max_reflection_order: s.max_reflection_order.unwrap_or(defaults.max_reflection_order),
        reflection_coefficient: s.reflection_coefficient.unwrap_or(defaults.reflection_coefficient),
        max_paths: s.max_paths.unwrap_or(defaults.max_paths),
    };

    let f = file.frequency;
    let ul_plan = FrequencyPlan::new(f.uplink_hz, f.bandwidth_hz, f.subcarriers)?;
    let dl_plan = FrequencyPlan::new(f.downlink_hz, f.bandwidth_hz, f.subcarriers)?;

    let base = ExperimentConfig::new(scene, ul_plan, dl_plan);
    let e = file.experiment;
    let config = ExperimentConfig {
        noise_std: file.dataset.noise_std,
        hidden_layers: file.model.hidden_layers.unwrap_or(base.hidden_layers.clone()),
        train: file.train,
        mode: e.mode.unwrap_or(base.mode),
        subset_sizes: e.subset_sizes.unwrap_or(base.subset_sizes.clone()),
        draws: e.draws.unwrap_or(base.draws),
        train_fractions: e.train_fractions.unwrap_or(base.train_fractions.clone()),
        size_sweep_subset: e.size_sweep_subset.unwrap_or(base.size_sweep_subset),
        snr: e.snr.unwrap_or(base.snr),
        seed: e.seed.unwrap_or(base.seed),
        bijectivity_tolerance: e.bijectivity_tolerance.unwrap_or(base.bijectivity_tolerance),
        ..base
    };
    config.validate()?;
    Ok(config)
}

pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse(&std::fs::read_to_string(path)?)
}
