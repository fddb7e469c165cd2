//! Connected-component labeling.

use std::collections::VecDeque;

use super::{BinaryMask, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Component labels over a grid. Label 0 is background; labels run 1..=count
/// in order of each component's first cell in row-major scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    geometry: Geometry,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl LabelMap {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Pixel count of a component; `label` must be in `1..=count`.
    pub fn size(&self, label: u32) -> usize {
        self.sizes[label as usize - 1]
    }

    /// Sizes indexed by `label - 1`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Labels the flooded cells of a mask.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    label_cells(mask.geometry(), |i| mask.is_flooded(i), connectivity)
}

/// Labels the maximal connected regions of cells satisfying `member`.
pub fn label_cells(
    geometry: &Geometry,
    member: impl Fn(usize) -> bool,
    connectivity: Connectivity,
) -> LabelMap {
    let g = *geometry;
    let mut labels = vec![0u32; g.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if labels[start] != 0 || !member(start) {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (r, c) = g.row_col(idx);
            let mut visit = |(nr, nc): (usize, usize)| {
                let n = g.index(nr, nc);
                if labels[n] == 0 && member(n) {
                    labels[n] = label;
                    queue.push_back(n);
                }
            };
            match connectivity {
                Connectivity::Four => g.neighbors4(r, c).for_each(&mut visit),
                Connectivity::Eight => g.neighbors8(r, c).for_each(&mut visit),
            }
        }
        sizes.push(size);
    }
    LabelMap {
        geometry: g,
        labels,
        sizes,
    }
}
