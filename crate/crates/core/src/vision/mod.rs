//! Classical vision primitives shared by every pipeline stage.
//!
//! All functions are pure: inputs are borrowed immutably and results are
//! freshly allocated.

mod components;
mod edges;
mod filter;
mod hough;
mod image;
mod lines;
mod ransac;
mod resample;
mod stats;
mod threshold;

pub use components::{connected_components, largest_components, Components, Connectivity, Region};
pub use edges::{edge_detect, edge_detect_with_gradient, EdgeParams, Gradient};
pub use filter::{gaussian_kernel, gaussian_smooth};
pub use hough::{
    hough_circles, hough_circles_gradient, hough_lines, select_dish_circle, Circle,
    HoughCircleParams, HoughLine, HoughLineParams,
};
pub use image::{binarize, grayscale, BinaryMask, GrayImage};
pub use lines::{average_similar_lines, line_intersection, line_intersections, Intersection};
pub use ransac::{estimate_affine_ransac, fit_affine_exact, fit_affine_lstsq, AffineFit, RansacParams};
pub use resample::{bilinear_resize_horizontal, HorizontalResize};
pub use stats::{median, quantile, row_median, row_quantile, RowValues};
pub use threshold::{otsu_bin, otsu_threshold, OtsuThreshold};

pub use crate::geometry::{apply_affine, Affine2D, Point2};
