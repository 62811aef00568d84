//! Channel-to-channel mapping in space and frequency for distributed massive MIMO.
//!
//! The crate is organized bottom-up:
//!
//! - [`scene`]: box-room geometry, ceiling antennas, user grids and image-method
//!   multipath enumeration.
//! - [`channel`]: OFDM channel synthesis from path parameters, uplink/downlink
//!   dataset assembly, the binary dataset format and the empirical
//!   bijectivity check.
//! - [`preprocess`]: centering, max-abs scaling, antenna masking and flattening.
//! - [`mlp`]: a fully-connected ReLU network with hand-written backpropagation,
//!   the NMSE loss, Adam and the binary model format.
//! - [`beamform`]: conjugate beamforming and achievable-rate bounds.
//! - [`pipeline`]: splits, subset draws, experiment sweeps and CSV reports.
//! - [`config`]: TOML configuration files for all of the above.

pub mod beamform;
pub mod channel;
pub mod config;
pub mod error;
pub mod mlp;
pub mod pipeline;
pub mod preprocess;
pub mod scene;

pub use error::{Error, Result};
pub use num_complex::Complex64;
