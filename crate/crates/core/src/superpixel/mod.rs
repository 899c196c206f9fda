//! Superpixel partitions: SLIC, the undersegmentation quality metric, and
//! pooling of pixel maps into per-superpixel tables.

mod pooling;
mod quality;
mod slic;

pub use pooling::{pool_labels, pool_probabilities};
pub use quality::undersegmentation_error;
pub use slic::{slic, SlicParams};

use crate::error::{Error, Result};

/// Row-major map of superpixel ids in `1..=K`; every id occurs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    k: usize,
    ids: Vec<u32>,
    sizes: Vec<usize>,
}

impl SuperpixelMap {
    pub fn new(height: usize, width: usize, k: usize, ids: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain("superpixel map dimensions must be positive"));
        }
        if ids.len() != height * width {
            return Err(Error::domain(format!(
                "superpixel id count {} does not match {height}x{width}",
                ids.len()
            )));
        }
        if k == 0 {
            return Err(Error::domain("superpixel map needs K >= 1"));
        }
        let mut sizes = vec![0usize; k];
        for &id in &ids {
            if id == 0 || id as usize > k {
                return Err(Error::domain(format!("superpixel id {id} outside 1..={k}")));
            }
            sizes[id as usize - 1] += 1;
        }
        if let Some(missing) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::domain(format!(
                "superpixel id {} is unused",
                missing + 1
            )));
        }
        Ok(Self {
            height,
            width,
            k,
            ids,
            sizes,
        })
    }

    /// Every pixel its own superpixel, ids in scan order.
    pub fn pixel_unit(height: usize, width: usize) -> Self {
        let m = height * width;
        Self {
            height,
            width,
            k: m,
            ids: (1..=m as u32).collect(),
            sizes: vec![1; m],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.ids.len()
    }

    pub fn num_superpixels(&self) -> usize {
        self.k
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Zero-based superpixel index of pixel `j`.
    #[inline]
    pub fn index_of(&self, j: usize) -> usize {
        self.ids[j] as usize - 1
    }

    /// Pixel counts `N(k)`, indexed by zero-based superpixel index.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// True when every superpixel is a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let mut seen = vec![false; self.ids.len()];
        let mut visited_ids = vec![false; self.k];
        let mut stack = Vec::new();
        for start in 0..self.ids.len() {
            if seen[start] {
                continue;
            }
            let id = self.ids[start];
            if visited_ids[id as usize - 1] {
                return false;
            }
            visited_ids[id as usize - 1] = true;
            seen[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (y, x) = (p / w, p % w);
                let neighbours = [
                    (y > 0).then(|| p - w),
                    (y + 1 < h).then(|| p + w),
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                ];
                for q in neighbours.into_iter().flatten() {
                    if !seen[q] && self.ids[q] == id {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        true
    }

    pub(crate) fn check_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::domain(format!(
                "shape mismatch: superpixels {}x{} vs map {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Per-superpixel class distributions (`C x K`, class-major) with sizes `N(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelTable {
    num_classes: usize,
    k: usize,
    values: Vec<f64>,
    sizes: Vec<usize>,
}

impl SuperpixelTable {
    pub fn new(num_classes: usize, values: Vec<f64>, sizes: Vec<usize>) -> Result<Self> {
        let k = sizes.len();
        if values.len() != num_classes * k {
            return Err(Error::domain(format!(
                "table length {} does not match {num_classes}x{k}",
                values.len()
            )));
        }
        Ok(Self {
            num_classes,
            k,
            values,
            sizes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_superpixels(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, class: usize, k: usize) -> f64 {
        self.values[class * self.k + k]
    }

    /// Column `k` as an owned distribution over classes.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.num_classes).map(|c| self.get(c, k)).collect()
    }

    /// Per-column argmax, ties to the lowest class.
    pub fn argmax(&self, k: usize) -> u8 {
        let mut best = 0;
        for c in 1..self.num_classes {
            if self.get(c, k) > self.get(best, k) {
                best = c;
            }
        }
        best as u8
    }
}
