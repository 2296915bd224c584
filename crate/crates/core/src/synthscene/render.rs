use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::spec::{Camera, SceneSpec};
use super::{BoardTruth, DishTruth, GroundTruth, KernelTruth, LatticeTruth, MarkerTruth};
use crate::geometry::{Affine2D, Point2};
use crate::pixcodec::{ImageCube, Modality};

/// Sub-samples per mixed pixel, one per row and column of a 16×16 raster
/// so axis-aligned edges still resolve to 1/16 px.
const SUPERSAMPLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Material {
    Belt,
    Plate,
    Strip,
    Paper,
    Bar,
    Rim,
    MarkerBlack,
    MarkerWhite,
    BoardBlack,
    BoardWhite,
    Kernel(u16),
    Glint,
}

/// A rendered raw frame with its ground truth; HSI frames come with the
/// matching shutter-closed dark frame.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub raw: ImageCube,
    pub dark: Option<ImageCube>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct SessionRender {
    pub rgb: Rendered,
    pub hsi: Rendered,
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    inv_day: Affine2D,
    white_paper: bool,
    with_kernels: bool,
}

impl Scene<'_> {
    fn material(&self, q: Point2) -> Material {
        let s = self.spec;
        if q.x < 0.0 || q.y < 0.0 || q.x >= s.plate_width || q.y >= s.plate_height {
            return Material::Belt;
        }
        if q.x < s.strip_width || q.x >= s.plate_width - s.strip_width {
            return Material::Strip;
        }
        for &(c, r) in &s.decoy_circles {
            if (q.dist(c) - r).abs() <= s.rim_width / 2.0 {
                return Material::Rim;
            }
        }
        let b = &s.boards;
        let half = b.half_extent();
        let inner = b.squares as f64 * b.square / 2.0;
        for (k, &c) in b.centers.iter().enumerate() {
            let u = (q - c).rotate(-b.rotations[k]);
            if u.x.abs() <= half && u.y.abs() <= half {
                if u.x.abs() < inner && u.y.abs() < inner {
                    let ix = ((u.x + inner) / b.square) as usize;
                    let iy = ((u.y + inner) / b.square) as usize;
                    return if (ix + iy) % 2 == 0 {
                        Material::BoardBlack
                    } else {
                        Material::BoardWhite
                    };
                }
                return Material::BoardWhite;
            }
        }

        let p = self.inv_day.apply(q);
        let d = p.dist(s.dish_center);
        if d > s.dish_radius + s.rim_width {
            return Material::Plate;
        }
        if d >= s.dish_radius {
            return Material::Rim;
        }
        let l = s.world_to_local(p);
        for k in 0..2 {
            if let Some(white) = s.marker_module_at(k, l) {
                return if white {
                    Material::MarkerWhite
                } else {
                    Material::MarkerBlack
                };
            }
        }
        if self.with_kernels {
            let n = s.n_cells() as f64;
            let span = s.grid_spacing * n / 2.0;
            if l.x.abs() < span && l.y.abs() < span {
                for (k, kern) in s.kernels.iter().enumerate() {
                    let c = s.cell_center_local(kern.cell.0, kern.cell.1);
                    let rel = l - c;
                    if rel.x.abs() > s.grid_spacing / 2.0 || rel.y.abs() > s.grid_spacing / 2.0 {
                        continue;
                    }
                    if kern.contains_local(rel) {
                        return Material::Kernel(k as u16);
                    }
                    if let Some(g) = kern.glint {
                        if rel.dist(g) <= s.glint_radius {
                            return Material::Glint;
                        }
                    }
                }
            }
        }
        let hw = s.bar_width / 2.0;
        for k in 0..s.grid_lines {
            if (l.x - s.lattice_x(k)).abs() <= hw || (l.y - s.lattice_y(k)).abs() <= hw {
                return Material::Bar;
            }
        }
        for dl in &s.decoy_lines {
            let ab = dl.b - dl.a;
            let t = ((l - dl.a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            if l.dist(dl.a + ab * t) <= dl.width / 2.0 {
                return Material::Bar;
            }
        }
        Material::Paper
    }
}

/// Per-material reflectance for each channel of a camera.
struct Palette {
    fixed: Vec<Vec<f64>>,
    kernels: Vec<Vec<f64>>,
}

impl Palette {
    fn new(spec: &SceneSpec, camera: Camera, white_paper: bool) -> Self {
        let m = &spec.materials;
        let ch = spec.channels(camera);
        let flat = |v: f64| vec![v; ch];
        let marker_white = match camera {
            Camera::Rgb => m.marker_white,
            Camera::Hsi => m.marker_white_nir,
        };
        let fixed = vec![
            flat(m.belt),
            flat(m.plate),
            flat(m.strip),
            flat(if white_paper { m.paper_white } else { m.paper_black }),
            flat(m.bar),
            flat(m.rim),
            flat(m.marker_black),
            flat(marker_white),
            flat(m.board_black),
            flat(m.board_white),
            flat(m.glint),
        ];
        let kernels = spec
            .kernels
            .iter()
            .map(|k| match camera {
                Camera::Rgb => k.rgb.to_vec(),
                Camera::Hsi => (0..ch).map(|c| k.reflectance(c, ch)).collect(),
            })
            .collect();
        Self { fixed, kernels }
    }

    fn get(&self, m: Material) -> &[f64] {
        let i = match m {
            Material::Belt => 0,
            Material::Plate => 1,
            Material::Strip => 2,
            Material::Paper => 3,
            Material::Bar => 4,
            Material::Rim => 5,
            Material::MarkerBlack => 6,
            Material::MarkerWhite => 7,
            Material::BoardBlack => 8,
            Material::BoardWhite => 9,
            Material::Glint => 10,
            Material::Kernel(k) => return &self.kernels[k as usize],
        };
        &self.fixed[i]
    }
}

/// Sensor response: `dark + level·gain(row)·channel_gain(c)·reflectance`.
struct Sensor {
    level: f64,
    full_scale: f64,
    gain: Vec<f64>,
    channel_gain: Vec<f64>,
    dark: Vec<Vec<f64>>,
}

impl Sensor {
    fn new(spec: &SceneSpec, camera: Camera, rows: usize) -> Self {
        let ch = spec.channels(camera);
        let gain = (0..rows).map(|r| spec.illumination.gain(r, rows)).collect();
        match camera {
            Camera::Rgb => Self {
                level: spec.rgb_white_level,
                full_scale: 255.0,
                gain,
                channel_gain: spec.rgb_channel_gain.to_vec(),
                dark: vec![vec![0.0; ch]; rows],
            },
            Camera::Hsi => Self {
                level: spec.hsi_white_level,
                full_scale: 4095.0,
                gain,
                channel_gain: (0..ch)
                    .map(|c| 0.75 + 0.25 * (std::f64::consts::PI * (c as f64 + 0.5) / ch as f64).sin())
                    .collect(),
                dark: (0..rows)
                    .map(|r| {
                        (0..ch)
                            .map(|c| {
                                spec.hsi_dark_level
                                    + spec.hsi_dark_ripple * (r as f64 / 23.0 + c as f64 / 7.0).sin()
                            })
                            .collect()
                    })
                    .collect(),
            },
        }
    }

    fn expected(&self, row: usize, ch: usize, reflectance: f64) -> f64 {
        self.dark[row][ch] + self.level * self.gain[row] * self.channel_gain[ch] * reflectance
    }

    fn quantize(&self, v: f64) -> f32 {
        v.round().clamp(0.0, self.full_scale) as f32
    }
}

/// Separable Gaussian point spread, per channel, edges clamped.
fn optical_blur(data: &mut [f64], h: usize, w: usize, ch: usize, sigma: f64) {
    let kernel = crate::vision::gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return;
    }
    let rad = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f64; data.len()];
    tmp.par_chunks_mut(w * ch).enumerate().for_each(|(r, row)| {
        for c in 0..w {
            for k in 0..ch {
                let mut s = 0.0;
                for (t, &g) in kernel.iter().enumerate() {
                    let cc = (c as isize + t as isize - rad).clamp(0, w as isize - 1) as usize;
                    s += g * data[(r * w + cc) * ch + k];
                }
                row[c * ch + k] = s;
            }
        }
    });
    data.par_chunks_mut(w * ch).enumerate().for_each(|(r, row)| {
        for c in 0..w {
            for k in 0..ch {
                let mut s = 0.0;
                for (t, &g) in kernel.iter().enumerate() {
                    let rr = (r as isize + t as isize - rad).clamp(0, h as isize - 1) as usize;
                    s += g * tmp[(rr * w + c) * ch + k];
                }
                row[c * ch + k] = s;
            }
        }
    });
}

fn row_rng(seed: u64, stream: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream);
    rng.set_stream(row as u64);
    rng
}

fn render_frame(spec: &SceneSpec, camera: Camera, day: u32, day_affine: &Affine2D, white_paper: bool) -> Rendered {
    let to_raw = spec.world_to_raw(camera);
    let to_world = to_raw.inverse().expect("camera mapping is invertible");
    let (h, w) = spec.raw_size(camera);
    let ch = spec.channels(camera);
    let scene = Scene {
        spec,
        inv_day: day_affine.inverse().expect("session affine is invertible"),
        white_paper,
        with_kernels: !white_paper,
    };
    let palette = Palette::new(spec, camera, scene.white_paper);
    let sensor = Sensor::new(spec, camera, h);
    let stream = (camera == Camera::Hsi) as u64 * 0x1000 + day as u64;
    let sigma = spec.noise * sensor.full_scale;
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");

    // Material at pixel corners decides where supersampling is needed.
    let corner = |r: usize, c: usize| scene.material(to_world.apply(Point2::new(c as f64 - 0.5, r as f64 - 0.5)));
    let corners: Vec<Vec<Material>> = (0..=h)
        .into_par_iter()
        .map(|r| (0..=w).map(|c| corner(r, c)).collect())
        .collect();

    // Scene reflectance per pixel, box-filtered over the pixel footprint.
    let mut refl = vec![0f64; h * w * ch];
    let centers: Vec<Vec<Material>> = refl
        .par_chunks_mut(w * ch)
        .enumerate()
        .map(|(r, row)| {
            let mut mats = Vec::with_capacity(w);
            for c in 0..w {
                let m = corners[r][c];
                let center = scene.material(to_world.apply(Point2::new(c as f64, r as f64)));
                mats.push(center);
                let acc = &mut row[c * ch..(c + 1) * ch];
                let uniform =
                    m == center && m == corners[r][c + 1] && m == corners[r + 1][c] && m == corners[r + 1][c + 1];
                if uniform {
                    acc.copy_from_slice(palette.get(m));
                } else {
                    for k in 0..SUPERSAMPLE {
                        let off = |j: usize| (j as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let q = to_world.apply(Point2::new(c as f64 + off(k), r as f64 + off(k * 7 % SUPERSAMPLE)));
                        for (a, v) in acc.iter_mut().zip(palette.get(scene.material(q))) {
                            *a += v;
                        }
                    }
                    let n = SUPERSAMPLE as f64;
                    acc.iter_mut().for_each(|a| *a /= n);
                }
            }
            mats
        })
        .collect();
    optical_blur(&mut refl, h, w, ch, spec.optical_blur);

    let mut data = vec![0f32; h * w * ch];
    let dropouts: usize = data
        .par_chunks_mut(w * ch)
        .enumerate()
        .map(|(r, row)| {
            let mut rng = row_rng(spec.seed, stream, r);
            let mut dropped = 0;
            for c in 0..w {
                let acc = &refl[(r * w + c) * ch..(r * w + c + 1) * ch];
                let px = &mut row[c * ch..(c + 1) * ch];
                for k in 0..ch {
                    let noise = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    px[k] = sensor.quantize(sensor.expected(r, k, acc[k]) + noise);
                }
                if camera == Camera::Hsi && spec.dropout_rate > 0.0 && matches!(centers[r][c], Material::Kernel(_)) {
                    if rng.random_bool(spec.dropout_rate.min(1.0)) {
                        let len = rng.random_range(1..=3usize).min(ch);
                        let start = rng.random_range(0..=ch - len);
                        px[start..start + len].iter_mut().for_each(|v| *v = 0.0);
                        dropped += 1;
                    }
                }
            }
            dropped
        })
        .sum();

    let modality = match camera {
        Camera::Rgb => Modality::Rgb,
        Camera::Hsi => Modality::Hsi,
    };
    let raw = ImageCube::from_data(h, w, ch, spec.bit_depth(camera), modality, data)
        .expect("rendered samples are valid counts");
    let dark = (camera == Camera::Hsi).then(|| {
        let mut d = vec![0f32; h * w * ch];
        d.par_chunks_mut(w * ch).enumerate().for_each(|(r, row)| {
            let mut rng = row_rng(spec.seed, stream ^ 0xda7c, r);
            for c in 0..w {
                for k in 0..ch {
                    let noise = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    row[c * ch + k] = sensor.quantize(sensor.dark[r][k] + noise);
                }
            }
        });
        ImageCube::from_data(h, w, ch, 12, Modality::Hsi, d).expect("dark samples are valid counts")
    });

    let truth = ground_truth(spec, camera, day, day_affine, &sensor, h, !white_paper, dropouts);
    Rendered { raw, dark, truth }
}

#[allow(clippy::too_many_arguments)]
fn ground_truth(
    spec: &SceneSpec,
    camera: Camera,
    day: u32,
    day_affine: &Affine2D,
    sensor: &Sensor,
    rows: usize,
    with_kernels: bool,
    dropout_pixels: usize,
) -> GroundTruth {
    let to_raw = spec.world_to_raw(camera);
    let dish = |p: Point2| day_affine.apply(spec.local_to_world(p));
    let ch = spec.channels(camera);

    let mut grid_points = Vec::new();
    for x in 0..spec.grid_lines {
        for y in 0..spec.grid_lines {
            let world = dish(spec.lattice_local(x, y));
            grid_points.push(LatticeTruth {
                x,
                y,
                world,
                raw: to_raw.apply(world),
            });
        }
    }
    let markers = (0..2)
        .map(|k| {
            let corners_world = spec.marker_corners_local(k).map(dish);
            MarkerTruth {
                id: spec.marker_ids[k],
                corners_world,
                corners_raw: corners_world.map(|p| to_raw.apply(p)),
            }
        })
        .collect();
    let boards = spec
        .boards
        .centers
        .iter()
        .zip(&spec.boards.rotations)
        .map(|(&c, &rotation)| BoardTruth {
            center_world: c,
            center_raw: to_raw.apply(c),
            rotation,
        })
        .collect();
    let dish_center = day_affine.apply(spec.dish_center);
    let kernels = if with_kernels {
        spec.kernels
            .iter()
            .map(|k| {
                let c = spec.cell_center_local(k.cell.0, k.cell.1);
                let center_world = dish(c + k.offset);
                KernelTruth {
                    cell: k.cell,
                    center_world,
                    center_raw: to_raw.apply(center_world),
                    reflectance: match camera {
                        Camera::Rgb => k.rgb.to_vec(),
                        Camera::Hsi => (0..ch).map(|i| k.reflectance(i, ch)).collect(),
                    },
                    glint_world: k.glint.map(|g| dish(c + g)),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let row_white = (0..rows)
        .map(|r| (0..ch).map(|c| sensor.quantize(sensor.expected(r, c, spec.materials.strip)) as f64).collect())
        .collect();
    let row_dark = (0..rows)
        .map(|r| (0..ch).map(|c| sensor.quantize(sensor.dark[r][c]) as f64).collect())
        .collect();
    let top = to_raw.apply(Point2::new(0.0, 0.0)).y;
    let bottom = to_raw.apply(Point2::new(0.0, spec.plate_height)).y;
    GroundTruth {
        camera,
        day,
        world_to_raw: to_raw,
        stretch: to_raw.m[0][0] / to_raw.m[1][1],
        day_affine: *day_affine,
        grid_points,
        markers,
        boards,
        dish: DishTruth {
            center_world: dish_center,
            center_raw: to_raw.apply(dish_center),
            radius_world: spec.dish_radius + spec.rim_width / 2.0,
        },
        kernels,
        row_white,
        row_dark,
        strip_rows: ((top + 0.5).ceil() as usize, (bottom - 0.5).floor() as usize),
        dropout_pixels,
    }
}

/// Reference-day RGB frame: white filter paper, no kernels.
pub fn render_reference(spec: &SceneSpec) -> Rendered {
    render_frame(spec, Camera::Rgb, 0, &Affine2D::identity(), true)
}

/// A later session: black paper with kernels, the dish moved by
/// `day_affine` (world coordinates), imaged by both cameras.
pub fn render_session(spec: &SceneSpec, day: u32, day_affine: &Affine2D) -> SessionRender {
    SessionRender {
        rgb: render_frame(spec, Camera::Rgb, day, day_affine, false),
        hsi: render_frame(spec, Camera::Hsi, day, day_affine, false),
    }
}
