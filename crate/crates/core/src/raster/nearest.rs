//! Exact Euclidean nearest-source queries on the grid.
//!
//! Sources are bucketed on a coarse grid and queries scan rings of buckets
//! outward until no unvisited bucket can hold a closer (or equally close,
//! lexicographically smaller) source. Distances are compared as exact integer
//! squared cell offsets, so results match an exhaustive scan bit for bit.

use super::Geometry;
use crate::error::{Error, Result};

/// `(row, col)` grid cell.
pub type Cell = (usize, usize);

#[derive(Debug, Clone)]
pub struct SourceIndex {
    sources: Vec<Cell>,
    bucket: usize,
    buckets_wide: usize,
    buckets_high: usize,
    buckets: Vec<Vec<u32>>,
}

impl SourceIndex {
    /// Indexes `sources` (deduplicated, sorted by `(row, col)`) on a
    /// `width x height` grid.
    pub fn new(width: usize, height: usize, sources: &[Cell]) -> Result<Self> {
        let mut sorted: Vec<Cell> = sources.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(Error::invalid("empty source set"));
        }
        if let Some(&(r, c)) = sorted.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::invalid(format!("source ({r}, {c}) outside grid")));
        }
        let area = (width * height) as f64;
        let bucket = ((area / sorted.len() as f64).sqrt().ceil() as usize).clamp(2, 64);
        let buckets_wide = width.div_ceil(bucket);
        let buckets_high = height.div_ceil(bucket);
        let mut buckets = vec![Vec::new(); buckets_wide * buckets_high];
        for (i, &(r, c)) in sorted.iter().enumerate() {
            buckets[(r / bucket) * buckets_wide + c / bucket].push(i as u32);
        }
        Ok(SourceIndex {
            sources: sorted,
            bucket,
            buckets_wide,
            buckets_high,
            buckets,
        })
    }

    /// Sources in index order (lexicographic by `(row, col)`).
    pub fn sources(&self) -> &[Cell] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Nearest source as `(source index, squared distance in cells)`.
    /// Ties go to the lexicographically smallest `(row, col)`.
    pub fn nearest(&self, query: Cell) -> (usize, u64) {
        let mut best = [(u64::MAX, usize::MAX)];
        let mut len = 0;
        self.search(query, 1, &mut best, &mut len);
        (best[0].1, best[0].0)
    }

    /// The `k` nearest sources as `(squared distance, source index)`, sorted
    /// by distance then index. Returns all sources when `k` exceeds their count.
    pub fn k_nearest(&self, query: Cell, k: usize, out: &mut Vec<(u64, usize)>) {
        let k = k.min(self.sources.len()).max(1);
        out.clear();
        out.resize(k, (u64::MAX, usize::MAX));
        let mut len = 0;
        self.search(query, k, out, &mut len);
    }

    fn search(&self, query: Cell, k: usize, best: &mut [(u64, usize)], len: &mut usize) {
        let (qr, qc) = (query.0 as isize, query.1 as isize);
        let qbr = (query.0 / self.bucket) as isize;
        let qbc = (query.1 / self.bucket) as isize;
        let max_ring = self.buckets_wide.max(self.buckets_high) as isize;
        for ring in 0..=max_ring {
            for br in (qbr - ring)..=(qbr + ring) {
                if br < 0 || br >= self.buckets_high as isize {
                    continue;
                }
                let on_edge_row = br == qbr - ring || br == qbr + ring;
                let step = if on_edge_row { 1 } else { (2 * ring).max(1) };
                let mut bc = qbc - ring;
                while bc <= qbc + ring {
                    if bc >= 0 && bc < self.buckets_wide as isize {
                        let bucket = &self.buckets[br as usize * self.buckets_wide + bc as usize];
                        for &si in bucket {
                            let (sr, sc) = self.sources[si as usize];
                            let dr = sr as isize - qr;
                            let dc = sc as isize - qc;
                            let d2 = (dr * dr + dc * dc) as u64;
                            insert_candidate(best, len, k, (d2, si as usize));
                        }
                    }
                    bc += step;
                }
            }
            if *len == k {
                // Closest possible cell in the next ring, along one axis.
                let bound = (ring as u64) * self.bucket as u64 + 1;
                if bound * bound > best[k - 1].0 {
                    break;
                }
            }
        }
    }
}

#[inline]
fn insert_candidate(best: &mut [(u64, usize)], len: &mut usize, k: usize, cand: (u64, usize)) {
    if *len == k && cand >= best[k - 1] {
        return;
    }
    let mut pos = if *len < k { *len } else { k - 1 };
    if *len < k {
        *len += 1;
    }
    while pos > 0 && best[pos - 1] > cand {
        best[pos] = best[pos - 1];
        pos -= 1;
    }
    best[pos] = cand;
}

/// Nearest source for every cell of a grid.
#[derive(Debug, Clone)]
pub struct NearestField {
    sources: Vec<Cell>,
    nearest: Vec<u32>,
    distance: Vec<f64>,
}

impl NearestField {
    pub fn sources(&self) -> &[Cell] {
        &self.sources
    }

    /// Nearest source cell for a flat grid index.
    pub fn nearest_cell(&self, index: usize) -> Cell {
        self.sources[self.nearest[index] as usize]
    }

    /// Euclidean distance in cells for a flat grid index.
    pub fn distance(&self, index: usize) -> f64 {
        self.distance[index]
    }
}

/// Exact nearest source cell and distance for every cell of `geometry`.
pub fn nearest_feature(sources: &[Cell], geometry: &Geometry) -> Result<NearestField> {
    let index = SourceIndex::new(geometry.width, geometry.height, sources)?;
    let mut nearest = Vec::with_capacity(geometry.len());
    let mut distance = Vec::with_capacity(geometry.len());
    for row in 0..geometry.height {
        for col in 0..geometry.width {
            let (si, d2) = index.nearest((row, col));
            nearest.push(si as u32);
            distance.push((d2 as f64).sqrt());
        }
    }
    Ok(NearestField {
        sources: index.sources,
        nearest,
        distance,
    })
}
