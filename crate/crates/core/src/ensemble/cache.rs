//! On-disk content-addressed cache of stage outputs.
//!
//! Entries are `<key>.fbr` (rasters), `<key>.mask` (codes, one byte per cell)
//! or `<key>.fail` (the failure reason). All writes go through a temporary
//! file and a rename, so concurrent writers of one key are harmless.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{read_raster, write_atomic, write_raster, BinaryMask, Geometry, Raster, RasterFormat};

const MASK_MAGIC: &[u8; 4] = b"FBM1";

/// Cached outcome of a stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Cached<T> {
    Hit(T),
    Failed(String),
    Miss,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug)]
pub struct StageCache {
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl StageCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(StageCache {
            dir: dir.to_path_buf(),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hashes key parts into a cache key.
    pub fn key(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    fn path(&self, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{key}.{ext}"))
    }

    /// Recorded failure reason, without touching the hit/miss counters.
    pub(crate) fn failure(&self, key: &str) -> Option<String> {
        std::fs::read_to_string(self.path(key, "fail")).ok()
    }

    fn count<T>(&self, c: Cached<T>) -> Cached<T> {
        match c {
            Cached::Miss => self.misses.fetch_add(1, Ordering::Relaxed),
            _ => self.hits.fetch_add(1, Ordering::Relaxed),
        };
        c
    }

    pub fn get_raster(&self, key: &str) -> Cached<Raster> {
        if let Some(reason) = self.failure(key) {
            return self.count(Cached::Failed(reason));
        }
        let path = self.path(key, "fbr");
        if !path.exists() {
            return self.count(Cached::Miss);
        }
        // Unreadable entries are recomputed.
        self.count(match read_raster(&path, RasterFormat::FlatBinary) {
            Ok(r) => Cached::Hit(r),
            Err(_) => Cached::Miss,
        })
    }

    pub fn put_raster(&self, key: &str, raster: &Raster) -> Result<()> {
        write_raster(raster, &self.path(key, "fbr"), RasterFormat::FlatBinary)
    }

    pub fn get_mask(&self, key: &str, geometry: &Geometry) -> Cached<BinaryMask> {
        if let Some(reason) = self.failure(key) {
            return self.count(Cached::Failed(reason));
        }
        let decoded = std::fs::read(self.path(key, "mask")).ok().and_then(|bytes| {
            let body = bytes.strip_prefix(MASK_MAGIC.as_slice())?;
            BinaryMask::new(*geometry, body.to_vec()).ok()
        });
        self.count(decoded.map_or(Cached::Miss, Cached::Hit))
    }

    pub fn put_mask(&self, key: &str, mask: &BinaryMask) -> Result<()> {
        let mut bytes = Vec::with_capacity(4 + mask.codes().len());
        bytes.extend_from_slice(MASK_MAGIC);
        bytes.extend_from_slice(mask.codes());
        write_atomic(&self.path(key, "mask"), &bytes)
    }

    pub fn put_failure(&self, key: &str, reason: &str) -> Result<()> {
        write_atomic(&self.path(key, "fail"), reason.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::code;

    #[test]
    fn round_trips_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::open(dir.path()).unwrap();
        let g = Geometry::new(3, 2, 5.0).unwrap();
        let r = Raster::from_fn(g, |row, col| Some((row * 3 + col) as f64 * 0.1));
        let m = BinaryMask::from_fn(g, |row, _| if row == 0 { code::FLOODED } else { code::NODATA }).unwrap();

        assert_eq!(cache.get_raster("a"), Cached::Miss);
        cache.put_raster("a", &r).unwrap();
        assert_eq!(cache.get_raster("a"), Cached::Hit(r));
        cache.put_mask("b", &m).unwrap();
        assert_eq!(cache.get_mask("b", &g), Cached::Hit(m));
        cache.put_failure("c", "no bimodal tiles").unwrap();
        assert_eq!(cache.get_mask("c", &g), Cached::Failed("no bimodal tiles".into()));
        assert_eq!(cache.stats(), CacheStats { hits: 3, misses: 1 });
    }

    #[test]
    fn key_separates_parts() {
        assert_ne!(StageCache::key(&["ab", "c"]), StageCache::key(&["a", "bc"]));
    }
}
