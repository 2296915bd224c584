//! Manifests, layered configuration and the file-level commands behind the
//! `grainpipe` binary.

mod commands;
mod config;
mod dataset;
mod manifest;
mod run;
mod synth;

pub use commands::{
    board_centers, cmd_cells, cmd_convert, cmd_detect_grid, cmd_extract, cmd_localize, cmd_segment_spectra,
    detect_reference_grid, list_cells, localize_session, process_cells, read_mask_pbm, read_raw_frame, save_cells,
    standardize_frame, summarize_cells, write_mask_pbm, CellOutcome, CellStages, CellStatus, DayGrids, FitRecord,
    LocalizeRecord, RawFrameInfo, RawLayout, SessionFrames,
};
pub use config::{PipelineConfig, CONFIG_FILE, DEFAULT_SEED, SEED_ENV};
pub use dataset::{
    build_mini_archive, cmd_validate_dataset, mini_expectation, parse_archive, validate_index, ArchiveIndex, Check,
    DatasetExpectation, KernelRecord, ValidationReport, VarietyCounts, LABELS_FILE,
};
pub use manifest::{
    cell_key, cell_stem, germination_day, mask_file, parse_cell_key, spectrum_stem, DayEntry, OutputLayout,
    RunManifest, SessionManifest, CELLS_PER_SIDE, LABEL_DAYS, SESSION_DAYS,
};
pub use run::{cmd_run, cmd_run_file, DayReport, DishReport, ModalityReport, RunReport};
pub use synth::{session_affine, synth_run, SynthOptions};
