//! Plan execution on a bounded work pool.
//!
//! Flood maps run first, one task per filter/mapper pair covering its
//! morphology variants. Depth then runs on representative maps per mapper
//! method. Records reach `manifest.csv.part` through a single writer thread in
//! completion order; the file is renamed to `manifest.csv` only on success.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use log::{info, warn};
use rayon::prelude::*;

use super::{select_representative_maps, summarize, write_summary, CacheStats, ConfigSpec, Pipeline, StageCache, SweepInputs, SweepPlan};
use crate::error::{Error, Result};
use crate::metrics::{ManifestWriter, MetricsRecord};
use crate::raster::{write_mask, write_raster, RasterFormat};

pub const CACHE_DIR_ENV: &str = "FLOODBENCH_CACHE_DIR";

/// External stop signals for a running sweep.
#[derive(Debug, Default)]
pub struct SweepControl {
    cancel: AtomicBool,
    /// Stop once this many records have been written.
    pub stop_after: Option<usize>,
}

impl SweepControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stopping_after(records: usize) -> Self {
        SweepControl {
            cancel: AtomicBool::new(false),
            stop_after: Some(records),
        }
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub manifest: PathBuf,
    pub summary: PathBuf,
    pub records: usize,
    pub failed: usize,
    pub cache: CacheStats,
}

fn cache_dir(plan: &SweepPlan, out_dir: &Path) -> PathBuf {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => plan
            .run
            .cache_dir
            .as_ref()
            .map_or_else(|| out_dir.join("cache"), |d| plan.resolve(d)),
    }
}

struct Emitter<'a> {
    tx: mpsc::Sender<MetricsRecord>,
    control: &'a SweepControl,
    sent: &'a AtomicUsize,
}

impl Emitter<'_> {
    /// False once the sweep should stop.
    fn live(&self) -> bool {
        !self.control.is_cancelled()
    }

    fn send(&self, record: MetricsRecord) {
        if !self.live() {
            return;
        }
        let n = self.sent.fetch_add(1, Ordering::SeqCst) + 1;
        if self.control.stop_after.is_some_and(|s| n >= s) {
            self.control.cancel();
        }
        // The writer outlives every sender.
        let _ = self.tx.send(record);
    }
}

fn write_outputs(out_dir: &Path, output: &super::PipelineOutput) -> Result<()> {
    let dir = out_dir.join(&output.record.config_id);
    if output.mask.is_none() && output.depth.is_none() {
        return Ok(());
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    if let Some(depth) = &output.depth {
        write_raster(&depth.depth, &dir.join("depth.fbr"), RasterFormat::FlatBinary)?;
        write_raster(&depth.wse, &dir.join("wse.fbr"), RasterFormat::FlatBinary)?;
    } else if let Some(mask) = &output.mask {
        write_mask(mask, &dir.join("mask.fbr"), RasterFormat::FlatBinary)?;
    }
    Ok(())
}

/// Runs `plan`, writing `manifest.csv` and `summary.csv` under `out_dir`.
///
/// An interrupted sweep returns [`Error::Interrupted`] and leaves
/// `manifest.csv.part`; rerunning with the same cache completes it from cached
/// stage outputs.
pub fn sweep(plan: &SweepPlan, out_dir: &Path, control: &SweepControl) -> Result<SweepOutcome> {
    plan.validate()?;
    let inputs = SweepInputs::load(plan)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cache = StageCache::open(&cache_dir(plan, out_dir))?;
    let pipeline = Pipeline::new(&inputs, Some(cache))?;

    let filters = plan.filter_configs(&inputs);
    let mappers = plan.mapper_configs(&inputs);
    let pairs: Vec<(usize, ConfigSpec)> = filters
        .iter()
        .flat_map(|f| mappers.iter().map(move |m| (f.clone(), m.clone())))
        .enumerate()
        .map(|(i, (f, m))| (i, ConfigSpec::new(f, m, crate::floodmap::MorphologyConfig::DISABLED)))
        .collect();
    let depth_configs = plan.depth_configs(&inputs);
    info!(
        "stage=sweep config=plan status=start filters={} mappers={} pairs={} depth={} jobs={} cache={}",
        filters.len(),
        mappers.len(),
        pairs.len(),
        depth_configs.len(),
        plan.run.jobs,
        pipeline.cache().expect("attached").dir().display()
    );

    let part = out_dir.join("manifest.csv.part");
    let file = File::create(&part).map_err(|e| Error::io(&part, e))?;
    let mut writer = ManifestWriter::new(BufWriter::new(file))?;
    writer.flush()?;
    let (tx, rx) = mpsc::channel::<MetricsRecord>();
    let writer_thread = std::thread::spawn(move || -> Result<Vec<MetricsRecord>> {
        let mut all = Vec::new();
        for record in rx {
            writer.write(&record)?;
            writer.flush()?;
            all.push(record);
        }
        writer.into_inner()?;
        Ok(all)
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.run.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start work pool: {e}")))?;
    let sent = AtomicUsize::new(0);
    let emitter = Emitter {
        tx,
        control,
        sent: &sent,
    };
    let write_err: std::sync::Mutex<Option<Error>> = std::sync::Mutex::new(None);
    let emit = |output: super::PipelineOutput| {
        if plan.run.write_outputs {
            if let Err(e) = write_outputs(out_dir, &output) {
                write_err.lock().expect("lock").get_or_insert(e);
            }
        }
        let r = &output.record;
        info!(
            "stage={} config={} status={}",
            if r.depth_method.is_empty() { "map" } else { "depth" },
            r.config_id,
            r.status
        );
        emitter.send(output.record);
    };

    // Flood maps.
    let mut specs: HashMap<String, ConfigSpec> = HashMap::new();
    for (i, pair) in &pairs {
        for morph in plan.morphology_for(*i) {
            let spec = ConfigSpec {
                morphology: morph,
                ..pair.clone()
            };
            specs.insert(spec.config_id(), spec);
        }
    }
    let map_records: std::sync::Mutex<Vec<MetricsRecord>> = std::sync::Mutex::default();
    pool.install(|| {
        pairs.par_iter().for_each(|(i, pair)| {
            for morph in plan.morphology_for(*i) {
                if !emitter.live() {
                    return;
                }
                let spec = ConfigSpec {
                    morphology: morph,
                    ..pair.clone()
                };
                let output = pipeline.run(&spec);
                map_records.lock().expect("lock").push(output.record.clone());
                emit(output);
            }
        })
    });

    // Depth on representative maps.
    if emitter.live() && !depth_configs.is_empty() {
        let map_records = map_records.into_inner().expect("lock");
        let selected = select_representative_maps(&map_records, plan.depth.per_method);
        let jobs: Vec<ConfigSpec> = selected
            .iter()
            .flat_map(|r| {
                let spec = &specs[&r.config_id];
                depth_configs.iter().map(move |d| spec.with_depth(*d))
            })
            .collect();
        info!(
            "stage=sweep config=depth status=start maps={} runs={}",
            selected.len(),
            jobs.len()
        );
        pool.install(|| {
            jobs.par_iter().for_each(|spec| {
                if emitter.live() {
                    emit(pipeline.run(spec));
                }
            })
        });
    }

    let interrupted = control.is_cancelled();
    drop(emitter);
    let records = writer_thread.join().expect("manifest writer panicked")?;
    if let Some(e) = write_err.into_inner().expect("lock") {
        return Err(e);
    }
    let stats = pipeline.cache().expect("attached").stats();
    if interrupted {
        warn!(
            "stage=sweep config=all status=interrupted records={} cache_hits={} cache_misses={}",
            records.len(),
            stats.hits,
            stats.misses
        );
        return Err(Error::Interrupted {
            completed: records.len(),
        });
    }

    let manifest = out_dir.join("manifest.csv");
    std::fs::rename(&part, &manifest).map_err(|e| Error::io(&manifest, e))?;
    let summary = out_dir.join("summary.csv");
    write_summary(&summarize(&records), &summary)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    info!(
        "stage=sweep config=all status=done records={} failed={} cache_hits={} cache_misses={}",
        records.len(),
        failed,
        stats.hits,
        stats.misses
    );
    Ok(SweepOutcome {
        manifest,
        summary,
        records: records.len(),
        failed,
        cache: stats,
    })
}
