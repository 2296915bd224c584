//! Deterministic synthetic raw frames with ground truth.
//!
//! The world frame is the size-corrected plate in pixels: x to the right,
//! y down, origin at the top-left plate corner. Each camera maps world to
//! raw pixels by an axis-aligned affine (horizontal over-sampling plus
//! offsets), and the dish with everything attached to it (grid, markers,
//! kernels) can be moved by a per-session world affine.

mod render;
mod spec;

pub use render::{render_reference, render_session, Rendered, SessionRender};
pub use spec::{
    BoardSpec, Camera, DecoyLine, Illumination, KernelSpec, Materials, SceneSpec,
};

use serde::{Deserialize, Serialize};

use crate::geometry::{Affine2D, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeTruth {
    pub x: usize,
    pub y: usize,
    pub world: Point2,
    pub raw: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTruth {
    pub id: u16,
    /// Canonical order: top-left, top-right, bottom-right, bottom-left of
    /// the printed code.
    pub corners_world: [Point2; 4],
    pub corners_raw: [Point2; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardTruth {
    pub center_world: Point2,
    pub center_raw: Point2,
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishTruth {
    pub center_world: Point2,
    pub center_raw: Point2,
    /// Radius of the rim centerline in world pixels.
    pub radius_world: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTruth {
    pub cell: (usize, usize),
    pub center_world: Point2,
    pub center_raw: Point2,
    /// Reflectance per channel of the rendering camera.
    pub reflectance: Vec<f64>,
    pub glint_world: Option<Point2>,
}

/// Everything known about one rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub camera: Camera,
    pub day: u32,
    pub world_to_raw: Affine2D,
    /// Horizontal over-sampling of the camera (raw px per world px, relative
    /// to the vertical scale).
    pub stretch: f64,
    pub day_affine: Affine2D,
    pub grid_points: Vec<LatticeTruth>,
    pub markers: Vec<MarkerTruth>,
    pub boards: Vec<BoardTruth>,
    pub dish: DishTruth,
    pub kernels: Vec<KernelTruth>,
    /// Noise-free white level per raw row and channel.
    pub row_white: Vec<Vec<f64>>,
    /// Noise-free dark level per raw row and channel (zero for RGB).
    pub row_dark: Vec<Vec<f64>>,
    /// Raw rows covered by the white strips (inclusive).
    pub strip_rows: (usize, usize),
    /// Pixels that received a zero-count dropout run.
    pub dropout_pixels: usize,
}

impl GroundTruth {
    pub fn grid_point(&self, x: usize, y: usize) -> Option<&LatticeTruth> {
        self.grid_points.iter().find(|p| p.x == x && p.y == y)
    }

    pub fn raw_to_world(&self) -> Affine2D {
        self.world_to_raw.inverse().expect("camera mapping is invertible")
    }
}
