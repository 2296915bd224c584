//! `grainpipe`: command-line front end of the kernel tracking pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use grainpipe_core::pipeline::{
    cmd_cells, cmd_convert, cmd_detect_grid, cmd_extract, cmd_localize, cmd_run_file, cmd_validate_dataset,
    summarize_cells, synth_run, CellStages, CellStatus, DatasetExpectation, PipelineConfig, RawFrameInfo, RawLayout,
    SessionFrames, SynthOptions,
};
use grainpipe_core::pixcodec::Packing;
use grainpipe_core::synthscene::SceneSpec;
use grainpipe_core::{Error, Modality};

const EXIT_ITEMS_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "grainpipe", version, about = "Grain kernel tracking and spectra from gridded Petri dish images")]
struct Cli {
    /// Configuration file (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set ransac.inlier_tol=1.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Re-pack a cube container or wrap a raw camera dump.
    Convert(ConvertArgs),
    /// Render synthetic dishes, their ground truth and a run manifest.
    Synth(SynthArgs),
    /// Detect the 6×6 grid on a reference frame.
    DetectGrid(DetectGridArgs),
    /// Move a reference grid onto an RGB session and, optionally, its HSI partner.
    Localize(LocalizeArgs),
    /// Cut the 25 cells out of a frame.
    Extract(ExtractArgs),
    /// Kernel masks for every cell file in a directory.
    Segment(CellsArgs),
    /// Mean pseudo-absorbance spectra for every HSI cell file in a directory.
    Spectra(CellsArgs),
    /// The whole chain for every dish of a manifest.
    Run(RunArgs),
    /// Count checks against a downloaded dataset archive.
    ValidateDataset(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PackingArg {
    Mono12p,
    U8,
    U16,
    F32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Mono12p,
    U16le,
    U8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModalityArg {
    Rgb,
    Hsi,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    input: PathBuf,
    /// Output header path (`<name>.cube.json`).
    output: PathBuf,
    #[arg(long, value_enum)]
    packing: Option<PackingArg>,
    /// Treat the input as a headerless dump in this layout.
    #[arg(long, value_enum, requires_all = ["height", "width", "channels"])]
    raw_layout: Option<LayoutArg>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 12)]
    bit_depth: u8,
    #[arg(long, value_enum, default_value = "hsi")]
    modality: ModalityArg,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene description (JSON) used for every dish.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dishes: usize,
    /// Session days, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 1, 2, 3, 4, 5])]
    days: Vec<u32>,
    #[arg(long)]
    no_hsi: bool,
    #[arg(long)]
    glints: bool,
}

#[derive(Args, Debug)]
struct DetectGridArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    dark: Option<PathBuf>,
    /// Marker corners to use instead of detection.
    #[arg(long)]
    markers: Option<PathBuf>,
    #[arg(long, default_value = "dish")]
    dish_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    rgb: PathBuf,
    #[arg(long, requires = "dark")]
    hsi: Option<PathBuf>,
    #[arg(long, requires = "hsi")]
    dark: Option<PathBuf>,
    #[arg(long)]
    markers: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    day: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Day grid in the frame's plate coordinates.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    dark: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    day: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CellsArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    cells: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Shorthand for `--set workers=N`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    root: PathBuf,
    /// Expected counts (JSON); defaults to the published ones.
    #[arg(long)]
    expected: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    ItemsFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ItemsFailed) => ExitCode::from(EXIT_ITEMS_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Invalid(_))))
                || e.downcast_ref::<InvalidInvocation>().is_some();
            ExitCode::from(if invalid { EXIT_INVALID } else { EXIT_ITEMS_FAILED })
        }
    }
}

#[derive(Debug)]
struct InvalidInvocation(String);

impl std::fmt::Display for InvalidInvocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInvocation {}

fn config(cli: &Cli, extra: &[String]) -> anyhow::Result<PipelineConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    overrides.extend_from_slice(extra);
    PipelineConfig::load(cli.config.as_deref(), &overrides)
        .map_err(|e| anyhow::Error::new(InvalidInvocation(format!("configuration: {e}"))))
}

fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Convert(a) => {
            let raw = a.raw_layout.map(|layout| RawFrameInfo {
                height: a.height.unwrap_or_default(),
                width: a.width.unwrap_or_default(),
                channels: a.channels.unwrap_or_default(),
                bit_depth: a.bit_depth,
                modality: match a.modality {
                    ModalityArg::Rgb => Modality::Rgb,
                    ModalityArg::Hsi => Modality::Hsi,
                },
                layout: match layout {
                    LayoutArg::Mono12p => RawLayout::Mono12p,
                    LayoutArg::U16le => RawLayout::U16le,
                    LayoutArg::U8 => RawLayout::U8,
                },
            });
            let packing = a.packing.map(|p| match p {
                PackingArg::Mono12p => Packing::Mono12p,
                PackingArg::U8 => Packing::U8,
                PackingArg::U16 => Packing::U16,
                PackingArg::F32 => Packing::F32,
            });
            let h = cmd_convert(&a.input, raw.as_ref(), &a.output, packing)
                .with_context(|| format!("converting {}", a.input.display()))?;
            println!(
                "{}: {}×{}×{} {}-bit {:?}",
                a.output.display(),
                h.height,
                h.width,
                h.channels,
                h.bit_depth,
                h.packing
            );
            Ok(Outcome::Ok)
        }
        Command::Synth(a) => {
            let cfg = config(&cli, &[])?;
            let spec = a.spec.as_deref().map(read_spec).transpose()?;
            let opts = SynthOptions {
                seed: cfg.seed,
                dishes: a.dishes,
                days: a.days.clone(),
                hsi: !a.no_hsi,
                glints: a.glints,
                spec,
                ..Default::default()
            };
            let m = synth_run(&a.out, &opts)?;
            println!("{} dishes written to {}", m.dishes.len(), a.out.join("manifest.json").display());
            Ok(Outcome::Ok)
        }
        Command::DetectGrid(a) => {
            let cfg = config(&cli, &[])?;
            let g = cmd_detect_grid(&a.reference, a.dark.as_deref(), a.markers.as_deref(), &a.dish_id, &cfg, &a.out)?;
            println!("grid with {} points written to {}", g.points.len(), a.out.join("grid.json").display());
            Ok(Outcome::Ok)
        }
        Command::Localize(a) => {
            let cfg = config(&cli, &[])?;
            let frames = SessionFrames {
                rgb: &a.rgb,
                hsi: a.hsi.as_deref().zip(a.dark.as_deref()),
                markers_file: a.markers.as_deref(),
            };
            let g = cmd_localize(&a.grid, a.day, &frames, &cfg, &a.out)?;
            println!(
                "day {} localized (rgb{}) into {}",
                a.day,
                if g.hsi.is_some() { " + hsi" } else { "" },
                a.out.display()
            );
            Ok(Outcome::Ok)
        }
        Command::Extract(a) => {
            let cfg = config(&cli, &[])?;
            let stems = cmd_extract(&a.grid, &a.frame, a.dark.as_deref(), a.day, &cfg, &a.out)?;
            println!("{} cells written to {}", stems.len(), a.out.display());
            Ok(Outcome::Ok)
        }
        Command::Segment(a) => cells(&cli, &a.cells, CellStages::Segment),
        Command::Spectra(a) => cells(&cli, &a.cells, CellStages::Spectra),
        Command::Run(a) => {
            let extra: Vec<String> = a.workers.map(|w| format!("workers={w}")).into_iter().collect();
            let cfg = config(&cli, &extra)?;
            let report = cmd_run_file(&a.manifest, &cfg, &a.out)?;
            print!("{}", report.summary());
            Ok(if report.failures() == 0 { Outcome::Ok } else { Outcome::ItemsFailed })
        }
        Command::ValidateDataset(a) => {
            let expected = match &a.expected {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => DatasetExpectation::published(),
            };
            let report = cmd_validate_dataset(&a.root, &expected)?;
            print!("{}", report.render());
            if let Some(p) = &a.report {
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(if report.passed { Outcome::Ok } else { Outcome::ItemsFailed })
        }
    }
}

fn read_spec(path: &Path) -> anyhow::Result<SceneSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cells(cli: &Cli, dir: &Path, stages: CellStages) -> anyhow::Result<Outcome> {
    let cfg = config(cli, &[])?;
    let outcomes = cmd_cells(dir, stages, &cfg)?;
    print!("{}", summarize_cells(&outcomes));
    let failed = outcomes.iter().any(|o| o.status == CellStatus::Failed);
    Ok(if failed { Outcome::ItemsFailed } else { Outcome::Ok })
}
