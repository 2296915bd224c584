//! Fixtures shared by the benchmarks.

use grainpipe_core::geometry::Point2;
use grainpipe_core::gridfind::{detect_grid, GridModel, GridParams};
use grainpipe_core::standardize::{standardize, StandardizeParams, Standardized};
use grainpipe_core::synthscene::{render_reference, render_session, SceneSpec, SessionRender};
use grainpipe_core::Affine2D;

pub struct Fixture {
    pub reference: Standardized,
    pub grid: GridModel,
    pub session: SessionRender,
}

pub fn board_centers(s: &Standardized) -> Vec<Point2> {
    s.boards.iter().map(|b| b.center).collect()
}

/// One rendered dish: its standardized reference, detected grid and a
/// shifted day-1 session.
pub fn fixture(seed: u64) -> Fixture {
    let spec = SceneSpec::random(seed);
    let params = StandardizeParams::default();
    let reference = standardize(&render_reference(&spec).raw, None, &params).expect("reference standardizes");
    let grid = detect_grid(&reference.plate.cube, &board_centers(&reference), &GridParams::default())
        .expect("grid detected");
    let day = Affine2D::about(spec.dish_center, 2f64.to_radians(), 1.0, Point2::new(4.0, -3.0));
    let session = render_session(&spec, 1, &day);
    Fixture {
        reference,
        grid,
        session,
    }
}
