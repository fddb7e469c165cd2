//! `floodbench` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 method degeneracy.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::{error, info};

use floodbench::depth::{apply_depth_config, read_sections, DepthConfig, DepthInputs};
use floodbench::ensemble::{enumerate_depth, enumerate_filters, enumerate_mappers, sweep, SweepControl, SweepPlan};
use floodbench::floodmap::{
    apply_mapper_config, to_db, ExternalModel, Histogram, LocalThresholdParams, MapperConfig, MapperInputs,
    MorphologyConfig, ThresholdSelector, ChanVeseParams,
};
use floodbench::metrics::{accuracy, confusion, depth_rmse, f1, flooded_area_km2, read_watermarks, rmse_at_points};
use floodbench::raster::{read_mask, read_raster, write_atomic, write_mask, write_raster, RasterFormat};
use floodbench::speckle::{apply_filter_config, enl, FilterConfig, SpeckleModel};
use floodbench::synth::{generate_scene, SceneSpec};
use floodbench::{BinaryMask, Error, Raster};

#[derive(Parser)]
#[command(name = "floodbench", version, about = "SAR flood mapping and water depth ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Speckle-filter a linear-intensity raster.
    Despeckle(DespeckleArgs),
    /// Map flood extent from a (filtered) intensity raster.
    Mapflood(MapfloodArgs),
    /// Estimate water depth from a flood mask and a DEM.
    Depth(DepthArgs),
    /// Score a flood map and/or a depth raster against references.
    Metrics(MetricsArgs),
    /// Run an ensemble sweep from a plan file.
    Sweep(SweepArgs),
    /// Generate a synthetic scene from a TOML spec.
    Synth(SynthArgs),
    /// Print one configuration space, one line per configuration.
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FilterMethod {
    None,
    Median,
    Lee,
    LeeSigma,
    Frost,
    External,
}

#[derive(clap::Args)]
struct DespeckleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    method: FilterMethod,
    /// Odd window side.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Lee Sigma cumulative probability.
    #[arg(long, default_value_t = 0.9)]
    xi: f64,
    /// Frost damping factor.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Number of looks of the speckle model (Lee).
    #[arg(long, default_value_t = 1.0)]
    looks: f64,
    /// Externally despeckled raster for `--method external`.
    #[arg(long)]
    external: Option<PathBuf>,
    /// Accept parameters outside the sweep grid.
    #[arg(long)]
    allow_off_grid: bool,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MapMethod {
    GlobalThreshold,
    LocalThreshold,
    ActiveContour,
    ChangeDetection,
    ExternalMask,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selector {
    Otsu,
    Ki,
}

impl From<Selector> for ThresholdSelector {
    fn from(s: Selector) -> Self {
        match s {
            Selector::Otsu => ThresholdSelector::Otsu,
            Selector::Ki => ThresholdSelector::Ki,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cnn,
    Rf,
}

#[derive(clap::Args)]
struct MapfloodArgs {
    /// Flood-time intensity (linear).
    #[arg(long = "in")]
    input: PathBuf,
    /// Pre-flood intensity, required by change detection.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Initial contour for the active contour; defaults to the global Otsu map.
    #[arg(long)]
    init_mask: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MapMethod,
    #[arg(long, value_enum, default_value = "otsu")]
    selector: Selector,
    #[arg(long, default_value_t = 100)]
    min_side: usize,
    /// Ashman's D acceptance threshold.
    #[arg(long, default_value_t = 2.0)]
    ad: f64,
    /// Bhattacharyya coefficient acceptance threshold.
    #[arg(long, default_value_t = 0.99)]
    bc: f64,
    /// Surface-ratio acceptance threshold.
    #[arg(long, default_value_t = 0.1)]
    sr: f64,
    /// Active-contour smoothness.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "cnn")]
    model: Model,
    /// Mask file for `--method external_mask`.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Fill dry holes up to this many pixels.
    #[arg(long)]
    fill_holes: Option<usize>,
    /// Remove flooded patches up to this many pixels (after filling).
    #[arg(long)]
    remove_patches: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DepthMethod {
    Fwdet,
    Flexth,
    CrossSection,
}

#[derive(clap::Args)]
struct DepthArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    dem: PathBuf,
    #[arg(long, value_enum)]
    method: DepthMethod,
    /// Boundary slope limit in percent; omit for none.
    #[arg(long)]
    slope_threshold: Option<f64>,
    /// Fw-DET smoothing passes.
    #[arg(long, default_value_t = 3)]
    smoothing: usize,
    /// FLEXTH nearest boundary cells.
    #[arg(long, default_value_t = 10)]
    neighbors: usize,
    /// Cells FLEXTH may grow the flood into.
    #[arg(long)]
    exclusion: Option<PathBuf>,
    /// Cross-section polylines, one `x,y;x,y` per line.
    #[arg(long)]
    sections: Option<PathBuf>,
    /// Depth raster.
    #[arg(long)]
    out: PathBuf,
    /// Water-surface elevation raster.
    #[arg(long)]
    wse_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Cells excluded from the confusion counts (e.g. permanent water).
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long)]
    pred_depth: Option<PathBuf>,
    #[arg(long)]
    ref_depth: Option<PathBuf>,
    /// CSV with header x,y,observed_depth_m.
    #[arg(long)]
    watermarks: Option<PathBuf>,
    /// Write the row here instead of stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the plan's worker count.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Filters,
    Mappers,
    MappersMorph,
    Depth,
}

#[derive(clap::Args)]
struct EnumerateArgs {
    #[arg(long, value_enum)]
    space: Space,
}

fn raster(path: &Path) -> Result<Raster, Error> {
    read_raster(path, RasterFormat::from_path(path))
}

fn mask(path: &Path) -> Result<BinaryMask, Error> {
    read_mask(path, RasterFormat::from_path(path))
}

fn despeckle(a: DespeckleArgs) -> Result<(), Error> {
    let config = match a.method {
        FilterMethod::None => FilterConfig::None,
        FilterMethod::Median => FilterConfig::Median { window: a.window },
        FilterMethod::Lee => FilterConfig::Lee { window: a.window },
        FilterMethod::LeeSigma => FilterConfig::LeeSigma { window: a.window, xi: a.xi },
        FilterMethod::Frost => FilterConfig::Frost {
            window: a.window,
            alpha: a.alpha,
        },
        FilterMethod::External => FilterConfig::External {
            path: Some(
                a.external
                    .ok_or_else(|| Error::MissingInput("--external is required for method external".into()))?,
            ),
        },
    };
    config.validate(a.allow_off_grid)?;
    let model = SpeckleModel::new(a.looks)?;
    let input = raster(&a.input)?;
    let out = apply_filter_config(&input, &config, &model)?;
    let everywhere = BinaryMask::from_predicate(&input, |_| true);
    if let (Ok(before), Ok(after)) = (enl(&input, &everywhere), enl(&out, &everywhere)) {
        info!("stage=despeckle config={config} status=ok enl_in={before:.3} enl_out={after:.3}");
    }
    write_raster(&out, &a.out, RasterFormat::from_path(&a.out))
}

fn mapflood(a: MapfloodArgs) -> Result<(), Error> {
    let config = match a.method {
        MapMethod::GlobalThreshold => MapperConfig::GlobalThreshold {
            selector: a.selector.into(),
        },
        MapMethod::LocalThreshold => MapperConfig::LocalThreshold(LocalThresholdParams {
            min_side: a.min_side,
            ashman_d: a.ad,
            bhattacharyya: a.bc,
            surface_ratio: a.sr,
        }),
        MapMethod::ActiveContour => MapperConfig::ActiveContour(ChanVeseParams::with_alpha(a.alpha)),
        MapMethod::ChangeDetection => MapperConfig::ChangeDetection {
            selector: a.selector.into(),
        },
        MapMethod::ExternalMask => MapperConfig::ExternalMask {
            model: match a.model {
                Model::Cnn => ExternalModel::Cnn,
                Model::Rf => ExternalModel::RandomForest,
            },
            path: Some(
                a.mask
                    .ok_or_else(|| Error::MissingInput("--mask is required for method external-mask".into()))?,
            ),
        },
    };
    if let MapperConfig::LocalThreshold(p) = &config {
        if p.min_side < 2 {
            return Err(Error::InvalidInput("--min-side must be at least 2".into()));
        }
    }
    if let MapperConfig::ActiveContour(p) = &config {
        p.validate()?;
    }
    if config.needs_reference() && a.reference.is_none() {
        return Err(Error::MissingInput("--ref is required for change detection".into()));
    }
    let morphology = if a.fill_holes.is_some() || a.remove_patches.is_some() {
        MorphologyConfig {
            enabled: true,
            fill_holes_max: a.fill_holes.unwrap_or(0),
            remove_patches_max: a.remove_patches.unwrap_or(0),
        }
    } else {
        MorphologyConfig::DISABLED
    };

    let image = raster(&a.input)?;
    let reference = a.reference.as_deref().map(raster).transpose()?;
    let init = a.init_mask.as_deref().map(mask).transpose()?;
    if let MapperConfig::GlobalThreshold { selector } = &config {
        let values: Vec<f64> = to_db(&image).valid_values().map(f64::from).collect();
        if let Ok(split) = Histogram::build(&values).and_then(|h| selector.select(&h)) {
            info!("stage=mapflood config={config} threshold_db={:.4}", split.threshold);
        }
    }
    let inputs = MapperInputs {
        reference: reference.as_ref(),
        permanent_water: init.as_ref(),
        tile_fits: None,
    };
    let out = apply_mapper_config(&image, &config, &morphology, &inputs)?;
    info!(
        "stage=mapflood config={config} status=ok flooded_cells={} area_km2={:.6}",
        out.flooded_count(),
        flooded_area_km2(&out)
    );
    write_mask(&out, &a.out, RasterFormat::from_path(&a.out))
}

fn depth(a: DepthArgs) -> Result<(), Error> {
    let config = match a.method {
        DepthMethod::Fwdet => DepthConfig::Fwdet {
            slope_threshold: a.slope_threshold,
            smoothing: a.smoothing,
        },
        DepthMethod::Flexth => DepthConfig::Flexth {
            slope_threshold: a.slope_threshold,
            max_neighbors: a.neighbors,
        },
        DepthMethod::CrossSection => DepthConfig::CrossSection,
    };
    if matches!(config, DepthConfig::CrossSection) && a.sections.is_none() {
        return Err(Error::MissingInput("--sections is required for cross_section".into()));
    }
    if matches!(config, DepthConfig::Flexth { max_neighbors: 0, .. }) {
        return Err(Error::InvalidInput("--neighbors must be at least 1".into()));
    }
    let flood = mask(&a.mask)?;
    let dem = raster(&a.dem)?;
    let exclusion = a.exclusion.as_deref().map(mask).transpose()?;
    let sections = a.sections.as_deref().map(read_sections).transpose()?;
    let inputs = DepthInputs {
        exclusion: exclusion.as_ref(),
        sections: sections.as_deref(),
    };
    let field = apply_depth_config(&flood, &dem, &config, &inputs)?;
    info!("stage=depth config={config} status=ok");
    write_raster(&field.depth, &a.out, RasterFormat::from_path(&a.out))?;
    if let Some(p) = &a.wse_out {
        write_raster(&field.wse, p, RasterFormat::from_path(p))?;
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn metrics(a: MetricsArgs) -> Result<(), Error> {
    if a.pred.is_some() != a.reference.is_some() {
        return Err(Error::MissingInput("--pred and --ref go together".into()));
    }
    if a.pred.is_none() && a.pred_depth.is_none() {
        return Err(Error::MissingInput("nothing to score: give --pred/--ref and/or --pred-depth".into()));
    }
    if a.pred_depth.is_some() && a.ref_depth.is_none() && a.watermarks.is_none() {
        return Err(Error::MissingInput("--pred-depth needs --ref-depth or --watermarks".into()));
    }
    // Read everything before computing, so input errors win over degeneracies.
    let pred = a.pred.as_deref().map(mask).transpose()?;
    let reference = a.reference.as_deref().map(mask).transpose()?;
    let exclude = a.exclude.as_deref().map(mask).transpose()?;
    let pred_depth = a.pred_depth.as_deref().map(raster).transpose()?;
    let ref_depth = a.ref_depth.as_deref().map(raster).transpose()?;
    let watermarks = a.watermarks.as_deref().map(read_watermarks).transpose()?;

    let (mut acc, mut f1_score, mut area) = (None, None, None);
    if let (Some(p), Some(r)) = (&pred, &reference) {
        let counts = confusion(p, r, exclude.as_ref())?;
        acc = Some(accuracy(&counts)?);
        f1_score = Some(f1(&counts)?);
        area = Some(flooded_area_km2(p));
        info!(
            "stage=metrics config=map status=ok tp={} tn={} fp={} fn={}",
            counts.tp, counts.tn, counts.fp, counts.fn_
        );
    }
    let (mut rmse, mut wm_rmse, mut used, mut skipped) = (None, None, None, None);
    if let Some(d) = &pred_depth {
        if let Some(r) = &ref_depth {
            rmse = Some(depth_rmse(d, r)?);
        }
        if let Some(w) = &watermarks {
            let p = rmse_at_points(d, w)?;
            wm_rmse = Some(p.rmse);
            used = Some(p.used as f64);
            skipped = Some(p.skipped as f64);
        }
    }
    let text = format!(
        "acc,f1,area_km2,rmse_m,watermark_rmse_m,used_points,skipped_points\n{},{},{},{},{},{},{}\n",
        cell(acc),
        cell(f1_score),
        cell(area),
        cell(rmse),
        cell(wm_rmse),
        cell(used),
        cell(skipped)
    );
    match &a.out_csv {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_sweep(a: SweepArgs) -> Result<(), Error> {
    let mut plan = SweepPlan::read(&a.plan)?;
    if let Some(j) = a.jobs {
        plan.run.jobs = j;
    }
    let out = sweep(&plan, &a.out_dir, &SweepControl::new())?;
    info!(
        "stage=sweep config=all status=ok records={} failed={} cache_hits={} cache_misses={}",
        out.records, out.failed, out.cache.hits, out.cache.misses
    );
    println!("{}", out.manifest.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Error> {
    let spec = SceneSpec::read(&a.spec)?;
    let scene = generate_scene(&spec)?;
    for name in scene.write(&a.out_dir)? {
        info!("stage=synth config=seed{} status=written file={name}", spec.seed);
    }
    Ok(())
}

fn enumerate(a: EnumerateArgs) {
    let lines: Vec<String> = match a.space {
        Space::Filters => enumerate_filters().iter().map(ToString::to_string).collect(),
        Space::Mappers => enumerate_mappers(false).iter().map(|(m, _)| m.to_string()).collect(),
        Space::MappersMorph => enumerate_mappers(true)
            .iter()
            .map(|(m, g)| format!("{m} morph({g})"))
            .collect(),
        Space::Depth => enumerate_depth().iter().map(ToString::to_string).collect(),
    };
    // A closed pipe (`| head`) just ends the listing.
    let mut out = std::io::stdout().lock();
    for l in lines {
        if writeln!(out, "{l}").is_err() {
            break;
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Despeckle(a) => despeckle(a),
        Command::Mapflood(a) => mapflood(a),
        Command::Depth(a) => depth(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Synth(a) => synth(a),
        Command::Enumerate(a) => {
            enumerate(a);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_degenerate() => {
            error!("status=degenerate reason={e}");
            ExitCode::from(3)
        }
        Err(e) => {
            error!("status=failed reason={e}");
            ExitCode::from(2)
        }
    }
}
