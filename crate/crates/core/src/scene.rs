//! Box-room scene geometry and image-method multipath.
//!
//! The environment is an empty rectangular room with ceiling-mounted isotropic
//! antennas and horizontal grids of candidate user positions. Specular
//! reflections off the six room planes are enumerated with the image method:
//! along each axis the antenna is mirrored independently, and the total
//! reflection order of an image is the sum of the per-axis bounce counts.
//!
//! Path gains follow free-space spreading `λ / (4π d)` scaled by a constant
//! reflection coefficient per bounce, with a half-wave phase flip per bounce.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn translate(&self, by: &Point3) -> Point3 {
        Point3::new(self.x + by.x, self.y + by.y, self.z + by.z)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Axis-aligned room occupying `[origin, origin + size]` on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub origin: Point3,
    pub size: [f64; 3],
}

impl Room {
    pub fn with_size(lx: f64, ly: f64, lz: f64) -> Self {
        Self {
            origin: Point3::new(0.0, 0.0, 0.0),
            size: [lx, ly, lz],
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Point3) -> bool {
        let o = self.origin.coords();
        p.coords()
            .iter()
            .zip(o.iter().zip(self.size.iter()))
            .all(|(&c, (&lo, &len))| c > lo && c < lo + len)
    }

    fn local(&self, p: &Point3) -> [f64; 3] {
        [p.x - self.origin.x, p.y - self.origin.y, p.z - self.origin.z]
    }
}

/// Horizontal rectangular grid of user positions at height `origin.z`.
///
/// Points run from `origin` along +x and +y up to `extent`, `spacing` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserGrid {
    pub origin: Point3,
    pub extent: [f64; 2],
    pub spacing: f64,
}

impl UserGrid {
    /// Number of points along x and y.
    pub fn dims(&self) -> (usize, usize) {
        let count = |len: f64| (len / self.spacing + 1e-9).floor() as usize + 1;
        (count(self.extent[0]), count(self.extent[1]))
    }

    /// Grid points in row-major order (y outer, x inner).
    pub fn points(&self) -> Vec<Point3> {
        let (nx, ny) = self.dims();
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                out.push(Point3::new(
                    self.origin.x + ix as f64 * self.spacing,
                    self.origin.y + iy as f64 * self.spacing,
                    self.origin.z,
                ));
            }
        }
        out
    }
}

/// Regular `rows × cols` antenna grid centered at `center` (x, y) and mounted at `height`.
pub fn ceiling_grid(rows: usize, cols: usize, spacing: f64, center: [f64; 2], height: f64) -> Vec<Point3> {
    let x0 = center[0] - spacing * (cols as f64 - 1.0) / 2.0;
    let y0 = center[1] - spacing * (rows as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(Point3::new(x0 + c as f64 * spacing, y0 + r as f64 * spacing, height));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room: Room,
    pub antennas: Vec<Point3>,
    pub user_grids: Vec<UserGrid>,
    pub max_reflection_order: u32,
    pub reflection_coefficient: f64,
    pub max_paths: usize,
}

impl Default for SceneConfig {
    /// 10 m × 10 m × 3 m room, 8 × 8 ceiling antennas at 2.5 m, two user grids at 1 m.
    fn default() -> Self {
        Self {
            room: Room::with_size(10.0, 10.0, 3.0),
            antennas: ceiling_grid(8, 8, 0.5, [5.0, 5.0], 2.5),
            user_grids: vec![
                UserGrid {
                    origin: Point3::new(3.003, 3.507, 1.0),
                    extent: [1.0, 0.6],
                    spacing: 0.01,
                },
                UserGrid {
                    origin: Point3::new(5.511, 5.802, 1.0),
                    extent: [1.0, 0.6],
                    spacing: 0.01,
                },
            ],
            max_reflection_order: 2,
            reflection_coefficient: 0.5,
            max_paths: 5,
        }
    }
}

/// A validated scene with enumerated antennas (0..M) and users.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    config: SceneConfig,
    users: Vec<Point3>,
}

impl Scene {
    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn room(&self) -> &Room {
        &self.config.room
    }

    pub fn antennas(&self) -> &[Point3] {
        &self.config.antennas
    }

    pub fn num_antennas(&self) -> usize {
        self.config.antennas.len()
    }

    pub fn users(&self) -> &[Point3] {
        &self.users
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Same scene shifted by a fixed vector (room, antennas, and grids).
    pub fn translated(&self, by: &Point3) -> Result<Scene> {
        let mut config = self.config.clone();
        config.room.origin = config.room.origin.translate(by);
        for a in &mut config.antennas {
            *a = a.translate(by);
        }
        for g in &mut config.user_grids {
            g.origin = g.origin.translate(by);
        }
        build_scene(config)
    }
}

pub fn build_scene(config: SceneConfig) -> Result<Scene> {
    let room = &config.room;
    if !room.origin.is_finite() || room.size.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidGeometry(format!(
            "room size must be positive and finite, got {:?}",
            room.size
        )));
    }
    if config.antennas.is_empty() {
        return Err(Error::InvalidGeometry("no antennas".into()));
    }
    if config.user_grids.is_empty() {
        return Err(Error::InvalidGeometry("no user grids".into()));
    }
    if config.max_paths == 0 {
        return Err(Error::InvalidGeometry("max_paths must be at least 1".into()));
    }
    let rho = config.reflection_coefficient;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "reflection coefficient must lie in (0, 1], got {rho}"
        )));
    }
    for (i, a) in config.antennas.iter().enumerate() {
        if !a.is_finite() || !room.contains(a) {
            return Err(Error::InvalidGeometry(format!(
                "antenna {i} at {a:?} is outside the room"
            )));
        }
    }
    let mut users = Vec::new();
    for (gi, grid) in config.user_grids.iter().enumerate() {
        if !(grid.spacing > 0.0 && grid.spacing.is_finite())
            || grid.extent.iter().any(|&e| !(e >= 0.0 && e.is_finite()))
        {
            return Err(Error::InvalidGeometry(format!(
                "user grid {gi} has invalid extent/spacing"
            )));
        }
        for p in grid.points() {
            if !p.is_finite() || !room.contains(&p) {
                return Err(Error::InvalidGeometry(format!(
                    "user point {p:?} of grid {gi} is outside the room"
                )));
            }
            users.push(p);
        }
    }
    Ok(Scene { config, users })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    /// Unfolded propagation distance, m.
    pub distance: f64,
    /// `distance / c`, s.
    pub delay: f64,
    pub gain: f64,
    /// Radians in `[-π, π)`.
    pub phase: f64,
    pub reflection_order: u32,
}

impl Path {
    /// Builds a path from its geometry: free-space gain, `ρ^r` attenuation, `π·r` phase.
    pub fn from_geometry(distance: f64, reflection_order: u32, wavelength: f64, rho: f64) -> Path {
        let gain = wavelength / (4.0 * PI * distance) * rho.powi(reflection_order as i32);
        Path {
            distance,
            delay: distance / SPEED_OF_LIGHT,
            gain,
            phase: wrap_phase(PI * reflection_order as f64),
            reflection_order,
        }
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = (phi + PI).rem_euclid(two_pi) - PI;
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Paths for one (user, antenna) link, strongest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    /// Sorts by descending gain; ties broken by shorter delay.
    pub fn new(mut paths: Vec<Path>) -> Self {
        paths.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.delay.total_cmp(&b.delay)));
        Self { paths }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn truncate(&mut self, max_paths: usize) {
        self.paths.truncate(max_paths);
    }

    /// Concatenation, re-sorted.
    pub fn union(&self, other: &PathSet) -> PathSet {
        PathSet::new(self.paths.iter().chain(other.paths.iter()).copied().collect())
    }
}

/// Image coordinates of `s` along one axis of length `len` with their bounce counts,
/// restricted to at most `max_order` bounces.
fn axis_images(s: f64, len: f64, max_order: u32) -> Vec<(f64, u32)> {
    let max_order = max_order as i64;
    let mut out = Vec::new();
    // Image x = (1 - 2p) s + 2 i len has |2i - p| bounces.
    for i in -max_order..=max_order {
        for p in 0..=1i64 {
            let bounces = (2 * i - p).unsigned_abs();
            if bounces as i64 <= max_order {
                let sign = if p == 0 { 1.0 } else { -1.0 };
                out.push((sign * s + 2.0 * i as f64 * len, bounces as u32));
            }
        }
    }
    out
}

/// Every candidate path (LOS plus reflections up to the scene's order), untruncated.
pub fn enumerate_paths(scene: &Scene, user: &Point3, antenna_index: usize, carrier_hz: f64) -> Result<PathSet> {
    let room = scene.room();
    if !room.contains(user) {
        return Err(Error::InvalidGeometry(format!("user {user:?} is outside the room")));
    }
    let antenna = scene.antennas().get(antenna_index).ok_or_else(|| {
        Error::InvalidGeometry(format!(
            "antenna index {antenna_index} out of range (M = {})",
            scene.num_antennas()
        ))
    })?;
    if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
        return Err(Error::InvalidPlan(format!(
            "carrier must be positive, got {carrier_hz}"
        )));
    }
    let cfg = scene.config();
    let order = cfg.max_reflection_order;
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let src = room.local(antenna);
    let dst = room.local(user);

    let per_axis: Vec<Vec<(f64, u32)>> = (0..3).map(|a| axis_images(src[a], room.size[a], order)).collect();

    let mut paths = Vec::new();
    for &(ix, rx) in &per_axis[0] {
        for &(iy, ry) in &per_axis[1] {
            if rx + ry > order {
                continue;
            }
            for &(iz, rz) in &per_axis[2] {
                let r = rx + ry + rz;
                if r > order {
                    continue;
                }
                let (dx, dy, dz) = (ix - dst[0], iy - dst[1], iz - dst[2]);
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                paths.push(Path::from_geometry(d, r, wavelength, cfg.reflection_coefficient));
            }
        }
    }
    Ok(PathSet::new(paths))
}

/// The `max_paths` strongest propagation paths between `user` and antenna `antenna_index`.
pub fn compute_paths(scene: &Scene, user: &Point3, antenna_index: usize, carrier_hz: f64) -> Result<PathSet> {
    let mut set = enumerate_paths(scene, user, antenna_index, carrier_hz)?;
    set.truncate(scene.config().max_paths);
    Ok(set)
}
