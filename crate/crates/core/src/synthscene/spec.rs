use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fiducial::DICTIONARY;
use crate::geometry::{Affine2D, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Camera {
    Rgb,
    Hsi,
}

/// Reflectance of every scene material (flat across channels unless noted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Materials {
    pub belt: f64,
    pub plate: f64,
    pub strip: f64,
    pub paper_white: f64,
    pub paper_black: f64,
    pub bar: f64,
    pub rim: f64,
    pub marker_black: f64,
    pub marker_white: f64,
    /// Marker paper soaks up water and turns dark in the NIR.
    pub marker_white_nir: f64,
    pub board_black: f64,
    pub board_white: f64,
    pub glint: f64,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            belt: 0.05,
            plate: 0.30,
            strip: 1.0,
            paper_white: 0.45,
            paper_black: 0.07,
            bar: 0.06,
            rim: 0.10,
            marker_black: 0.05,
            marker_white: 0.80,
            marker_white_nir: 0.15,
            board_black: 0.05,
            board_white: 0.90,
            glint: 0.97,
        }
    }
}

/// Row- and channel-dependent illumination of the line-scan cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Illumination {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    /// Linear gain change from the first to the last raw row.
    pub slope: f64,
}

impl Default for Illumination {
    fn default() -> Self {
        Self {
            amplitude: 0.06,
            period: 170.0,
            phase: 0.4,
            slope: 0.05,
        }
    }
}

impl Illumination {
    pub fn gain(&self, row: usize, rows: usize) -> f64 {
        let t = row as f64 / rows.max(1) as f64 - 0.5;
        1.0 + self.amplitude * (2.0 * PI * row as f64 / self.period + self.phase).sin() + self.slope * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoardSpec {
    /// Squares per side.
    pub squares: usize,
    pub square: f64,
    pub margin: f64,
    pub centers: [Point2; 4],
    pub rotations: [f64; 4],
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self {
            squares: 4,
            square: 12.0,
            margin: 6.0,
            centers: [
                Point2::new(70.0, 45.0),
                Point2::new(450.0, 45.0),
                Point2::new(70.0, 355.0),
                Point2::new(450.0, 355.0),
            ],
            rotations: [0.0; 4],
        }
    }
}

impl BoardSpec {
    pub fn half_extent(&self) -> f64 {
        self.squares as f64 * self.square / 2.0 + self.margin
    }

    /// Inner corner offsets from the board center, row-major, before rotation.
    pub fn inner_corners(&self) -> Vec<Point2> {
        let n = self.squares;
        let half = n as f64 * self.square / 2.0;
        let mut out = Vec::new();
        for r in 1..n {
            for c in 1..n {
                out.push(Point2::new(c as f64 * self.square - half, r as f64 * self.square - half));
            }
        }
        out
    }
}

/// One kernel, placed relative to the center of its grid cell in grid-local
/// coordinates so it follows the dish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub cell: (usize, usize),
    pub offset: Point2,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub rgb: [f64; 3],
    /// `base + amp·sin(freq·t + phase)` over normalized wavelength `t`.
    pub spectrum: [f64; 4],
    /// Optional specular glint, offset from the cell center.
    pub glint: Option<Point2>,
}

impl KernelSpec {
    pub fn reflectance(&self, channel: usize, channels: usize) -> f64 {
        let t = channel as f64 / (channels.max(2) - 1) as f64;
        let [base, amp, freq, phase] = self.spectrum;
        base + amp * (freq * t + phase).sin()
    }

    /// Inside test in cell-center-relative grid-local coordinates.
    pub fn contains_local(&self, p: Point2) -> bool {
        let d = (p - self.offset).rotate(-self.angle);
        (d.x / self.semi_major).powi(2) + (d.y / self.semi_minor).powi(2) <= 1.0
    }
}

/// A dark scratch across the dish, in grid-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyLine {
    pub a: Point2,
    pub b: Point2,
    pub width: f64,
}

/// Full description of a synthetic plate; identical specs render identical
/// frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub plate_width: f64,
    pub plate_height: f64,
    pub strip_width: f64,
    /// RGB raw pixels per world pixel along x.
    pub stretch: f64,
    /// RGB raw position of the world origin.
    pub raw_origin: Point2,
    pub dish_center: Point2,
    /// Inner radius of the rim.
    pub dish_radius: f64,
    pub rim_width: f64,
    pub grid_center: Point2,
    pub grid_rotation: f64,
    pub grid_spacing: f64,
    pub grid_lines: usize,
    pub bar_width: f64,
    /// Lowest id sits on the y = 0 side, highest on the x = 0 side.
    pub marker_ids: [u16; 2],
    pub marker_module: f64,
    /// Distance from grid center to marker center.
    pub marker_offset: f64,
    /// Quarter turns of each printed code relative to the grid axes.
    pub marker_turns: [u8; 2],
    /// Places the x = 0 side (and the second marker) on +x instead of −x.
    pub mirrored: bool,
    pub boards: BoardSpec,
    pub materials: Materials,
    pub illumination: Illumination,
    pub rgb_white_level: f64,
    pub rgb_channel_gain: [f64; 3],
    pub hsi_channels: usize,
    pub hsi_white_level: f64,
    pub hsi_dark_level: f64,
    pub hsi_dark_ripple: f64,
    /// HSI world-to-raw scale (both axes) and extra horizontal stretch.
    pub hsi_scale: f64,
    pub hsi_stretch: f64,
    pub hsi_raw_origin: Point2,
    /// Additive noise σ as a fraction of full scale.
    pub noise: f64,
    /// Gaussian point spread σ in raw pixels.
    pub optical_blur: f64,
    pub kernels: Vec<KernelSpec>,
    pub glint_radius: f64,
    /// Probability that a kernel pixel loses a short run of HSI channels.
    pub dropout_rate: f64,
    pub decoy_lines: Vec<DecoyLine>,
    /// Plate-fixed dark rings `(center, radius)`.
    pub decoy_circles: Vec<(Point2, f64)>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            plate_width: 520.0,
            plate_height: 400.0,
            strip_width: 30.0,
            stretch: 1.3,
            raw_origin: Point2::new(16.5, 12.5),
            dish_center: Point2::new(260.0, 200.0),
            dish_radius: 160.0,
            rim_width: 3.0,
            grid_center: Point2::new(260.0, 200.0),
            grid_rotation: 0.0,
            grid_spacing: 40.0,
            grid_lines: 6,
            bar_width: 6.0,
            marker_ids: [3, 7],
            marker_module: 6.0,
            marker_offset: 126.0,
            marker_turns: [0, 0],
            mirrored: false,
            boards: BoardSpec::default(),
            materials: Materials::default(),
            illumination: Illumination::default(),
            rgb_white_level: 220.0,
            rgb_channel_gain: [1.0, 0.95, 0.85],
            hsi_channels: 40,
            hsi_white_level: 3000.0,
            hsi_dark_level: 150.0,
            hsi_dark_ripple: 20.0,
            hsi_scale: 0.85,
            hsi_stretch: 1.25,
            hsi_raw_origin: Point2::new(14.5, 10.5),
            noise: 0.005,
            optical_blur: 0.9,
            kernels: Vec::new(),
            glint_radius: 2.0,
            dropout_rate: 0.0,
            decoy_lines: Vec::new(),
            decoy_circles: Vec::new(),
        }
    }
}

impl SceneSpec {
    /// Randomized pose, illumination, stretch and noise within the ranges
    /// the pipeline is specified for; kernels in every cell.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let mut s = SceneSpec {
            seed,
            ..Default::default()
        };
        s.stretch = rng.random_range(1.2..=1.4);
        s.dish_center = Point2::new(
            260.0 + rng.random_range(-10.0..=10.0),
            200.0 + rng.random_range(-10.0..=10.0),
        );
        s.dish_radius = rng.random_range(156.0..=164.0);
        s.grid_center = s.dish_center + Point2::new(rng.random_range(-3.0..=3.0), rng.random_range(-3.0..=3.0));
        s.grid_rotation = rng.random_range(-5.0f64..=5.0).to_radians();
        let mut ids: Vec<u16> = (0..DICTIONARY.len() as u16).collect();
        ids.shuffle(&mut rng);
        s.marker_ids = [ids[0].min(ids[1]), ids[0].max(ids[1])];
        s.marker_turns = [rng.random_range(0..4), rng.random_range(0..4)];
        s.mirrored = rng.random_bool(0.5);
        for r in &mut s.boards.rotations {
            *r = rng.random_range(-5.0f64..=5.0).to_radians();
        }
        s.illumination = Illumination {
            amplitude: rng.random_range(0.02..=0.08),
            period: rng.random_range(120.0..=260.0),
            phase: rng.random_range(0.0..2.0 * PI),
            slope: rng.random_range(-0.08..=0.08),
        };
        s.hsi_scale = rng.random_range(0.8..=0.9);
        s.hsi_stretch = rng.random_range(1.15..=1.35);
        s.noise = rng.random_range(0.0..=0.02);
        s.kernels = random_kernels(&mut rng);
        s
    }

    /// Adds a glint next to every kernel.
    pub fn with_glints(mut self) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6117);
        let half = self.grid_spacing / 2.0 - self.bar_width / 2.0;
        for k in &mut self.kernels {
            k.glint = place_glint(&mut rng, k, half - self.glint_radius - 1.0, self.glint_radius);
        }
        self
    }

    pub fn n_cells(&self) -> usize {
        self.grid_lines - 1
    }

    pub fn channels(&self, camera: Camera) -> usize {
        match camera {
            Camera::Rgb => 3,
            Camera::Hsi => self.hsi_channels,
        }
    }

    pub fn bit_depth(&self, camera: Camera) -> u8 {
        match camera {
            Camera::Rgb => 8,
            Camera::Hsi => 12,
        }
    }

    pub fn world_to_raw(&self, camera: Camera) -> Affine2D {
        match camera {
            Camera::Rgb => Affine2D::new([
                [self.stretch, 0.0, self.raw_origin.x],
                [0.0, 1.0, self.raw_origin.y],
            ]),
            Camera::Hsi => {
                let k = self.hsi_scale;
                Affine2D::new([
                    [k * self.hsi_stretch, 0.0, self.hsi_raw_origin.x],
                    [0.0, k, self.hsi_raw_origin.y],
                ])
            }
        }
    }

    /// Raw frame `(height, width)` for a camera.
    pub fn raw_size(&self, camera: Camera) -> (usize, usize) {
        let t = self.world_to_raw(camera);
        let far = t.apply(Point2::new(self.plate_width, self.plate_height));
        let (ox, oy) = (t.m[0][2], t.m[1][2]);
        (
            (far.y + oy).round() as usize,
            (far.x + ox).round() as usize,
        )
    }

    /// Grid-local offset of lattice index `k` along x (follows `mirrored`).
    pub fn lattice_x(&self, k: usize) -> f64 {
        let v = self.lattice_coord(k);
        if self.mirrored {
            -v
        } else {
            v
        }
    }

    pub fn lattice_y(&self, k: usize) -> f64 {
        self.lattice_coord(k)
    }

    fn lattice_coord(&self, k: usize) -> f64 {
        (k as f64 - (self.grid_lines - 1) as f64 / 2.0) * self.grid_spacing
    }

    /// Grid-local → world (before any session affine).
    pub fn local_to_world(&self, p: Point2) -> Point2 {
        self.grid_center + p.rotate(self.grid_rotation)
    }

    pub fn world_to_local(&self, p: Point2) -> Point2 {
        (p - self.grid_center).rotate(-self.grid_rotation)
    }

    pub fn lattice_local(&self, x: usize, y: usize) -> Point2 {
        Point2::new(self.lattice_x(x), self.lattice_y(y))
    }

    /// Center of cell `(i, j)` in grid-local coordinates.
    pub fn cell_center_local(&self, i: usize, j: usize) -> Point2 {
        (self.lattice_local(i, j) + self.lattice_local(i + 1, j + 1)) * 0.5
    }

    /// Marker centers in grid-local coordinates: `[lowest id, highest id]`.
    pub fn marker_centers_local(&self) -> [Point2; 2] {
        let b = if self.mirrored {
            self.marker_offset
        } else {
            -self.marker_offset
        };
        [Point2::new(0.0, -self.marker_offset), Point2::new(b, 0.0)]
    }

    /// Canonical corners of marker `k` in grid-local coordinates.
    pub fn marker_corners_local(&self, k: usize) -> [Point2; 4] {
        let c = self.marker_centers_local()[k];
        let half = 3.0 * self.marker_module;
        let turn = self.marker_turns[k] as f64 * PI / 2.0;
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .map(|(u, v)| c + Point2::new(u * half, v * half).rotate(turn))
    }

    /// Module color of marker `k` at grid-local `p`: `Some(true)` for white,
    /// `Some(false)` for black, `None` outside the marker's white patch.
    pub fn marker_module_at(&self, k: usize, p: Point2) -> Option<bool> {
        let c = self.marker_centers_local()[k];
        let turn = self.marker_turns[k] as f64 * PI / 2.0;
        let m = self.marker_module;
        let q = (p - c).rotate(-turn);
        let (u, v) = (q.x / m + 3.0, q.y / m + 3.0);
        if !(-1.0..7.0).contains(&u) || !(-1.0..7.0).contains(&v) {
            return None;
        }
        if !(0.0..6.0).contains(&u) || !(0.0..6.0).contains(&v) {
            return Some(true);
        }
        let (col, row) = (u as usize, v as usize);
        if row == 0 || row == 5 || col == 0 || col == 5 {
            return Some(false);
        }
        let code = DICTIONARY[self.marker_ids[k] as usize];
        let idx = (row - 1) * 4 + (col - 1);
        Some((code >> (15 - idx)) & 1 == 1)
    }

    /// Inside test for kernel `k` at grid-local `p`.
    pub fn kernel_contains_local(&self, k: usize, p: Point2) -> bool {
        let kern = &self.kernels[k];
        let c = self.cell_center_local(kern.cell.0, kern.cell.1);
        kern.contains_local(p - c)
    }

    /// Inside test for kernel `k` at world `p` under a session affine.
    pub fn kernel_contains_world(&self, k: usize, day_affine: &Affine2D, p: Point2) -> bool {
        let inv = day_affine.inverse().expect("session affine is invertible");
        self.kernel_contains_local(k, self.world_to_local(inv.apply(p)))
    }
}

fn random_kernels(rng: &mut ChaCha8Rng) -> Vec<KernelSpec> {
    let mut out = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let semi_major = rng.random_range(10.0..=13.0);
            let semi_minor = rng.random_range(5.0..=6.5);
            let base = rng.random_range(0.32..=0.45);
            let k = KernelSpec {
                cell: (i, j),
                offset: Point2::new(rng.random_range(-3.0..=3.0), rng.random_range(-3.0..=3.0)),
                semi_major,
                semi_minor,
                angle: rng.random_range(0.0..PI),
                rgb: [
                    rng.random_range(0.50..=0.60),
                    rng.random_range(0.38..=0.46),
                    rng.random_range(0.24..=0.32),
                ],
                spectrum: [
                    base,
                    rng.random_range(0.03..=0.08),
                    rng.random_range(2.0..=6.0),
                    rng.random_range(0.0..2.0 * PI),
                ],
                glint: None,
            };
            out.push(k);
        }
    }
    out
}

/// Clearance between a glint and its kernel, in world pixels; wide enough
/// that blur halos do not join them after HSI downscaling.
const GLINT_GAP: f64 = 4.0;

/// A glint spot inside the cell interior that keeps a clear gap to the
/// kernel so it forms its own component.
fn place_glint(rng: &mut ChaCha8Rng, k: &KernelSpec, reach: f64, radius: f64) -> Option<Point2> {
    for _ in 0..200 {
        let p = Point2::new(rng.random_range(-reach..=reach), rng.random_range(-reach..=reach));
        let clear = (0..24).all(|s| {
            let a = s as f64 * PI / 12.0;
            !k.contains_local(p + Point2::new(a.cos(), a.sin()) * (radius + GLINT_GAP))
        }) && !k.contains_local(p);
        if clear {
            return Some(p);
        }
    }
    None
}
