use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use grainpipe_bench::{board_centers, fixture};
use grainpipe_core::fiducial::{find_markers, MarkerParams};
use grainpipe_core::gridfind::{detect_grid, GridParams};
use grainpipe_core::gridtrack::{extract_all_cells, localize_hsi, localize_rgb};
use grainpipe_core::kernelproc::{mean_pseudo_absorbance, segment_cell, SpectrumParams};
use grainpipe_core::pixcodec::{pack_mono12p, unpack_mono12p};
use grainpipe_core::standardize::{standardize, StandardizeParams};
use grainpipe_core::vision::{otsu_threshold, RansacParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn codec(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<u16> = (0..1 << 20).map(|_| rng.random_range(0..4096)).collect();
    let packed = pack_mono12p(&values).unwrap();
    c.bench_function("mono12p_pack_1M", |b| b.iter(|| pack_mono12p(black_box(&values)).unwrap()));
    c.bench_function("mono12p_unpack_1M", |b| b.iter(|| unpack_mono12p(black_box(&packed))));
}

fn stages(c: &mut Criterion) {
    let f = fixture(7);
    let params = StandardizeParams::default();
    let rgb = standardize(&f.session.rgb.raw, None, &params).unwrap();
    let hsi = standardize(&f.session.hsi.raw, f.session.hsi.dark.as_ref(), &params).unwrap();
    let ransac = RansacParams::default();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    g.bench_function("otsu_plate", |b| b.iter(|| otsu_threshold(black_box(&f.reference.plate.gray()), 256)));
    g.bench_function("standardize_rgb", |b| {
        b.iter(|| standardize(black_box(&f.session.rgb.raw), None, &params).unwrap())
    });
    g.bench_function("standardize_hsi", |b| {
        b.iter(|| standardize(black_box(&f.session.hsi.raw), f.session.hsi.dark.as_ref(), &params).unwrap())
    });
    g.bench_function("detect_grid", |b| {
        b.iter(|| detect_grid(black_box(&f.reference.plate.cube), &board_centers(&f.reference), &GridParams::default()).unwrap())
    });
    g.bench_function("localize_rgb_hsi", |b| {
        b.iter(|| {
            let markers = find_markers(&rgb.plate.cube, &MarkerParams::default());
            let l = localize_rgb(&f.grid, &markers, &board_centers(&rgb), &ransac).unwrap();
            localize_hsi(&l.grid, &board_centers(&rgb), &board_centers(&hsi), &ransac).unwrap()
        })
    });

    let markers = find_markers(&rgb.plate.cube, &MarkerParams::default());
    let l = localize_rgb(&f.grid, &markers, &board_centers(&rgb), &ransac).unwrap();
    let h = localize_hsi(&l.grid, &board_centers(&rgb), &board_centers(&hsi), &ransac).unwrap();
    g.bench_function("extract_25_hsi_cells", |b| {
        b.iter(|| extract_all_cells(black_box(&hsi.plate.cube), &h.grid, 1).unwrap())
    });
    let cells = extract_all_cells(&hsi.plate.cube, &h.grid, 1).unwrap();
    let sp = SpectrumParams::default();
    g.bench_function("segment_and_spectra_25_cells", |b| {
        b.iter(|| {
            for cell in &cells {
                let m = segment_cell(cell, 256).unwrap();
                black_box(mean_pseudo_absorbance(&cell.cube, &m, &sp).unwrap());
            }
        })
    });
    g.finish();
}

criterion_group!(benches, codec, stages);
criterion_main!(benches);
