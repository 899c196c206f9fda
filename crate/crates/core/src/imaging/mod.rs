//! Raster types shared by every stage of the pipeline, plus PGM IO, colour
//! conversion and overlap metrics.
//!
//! All rasters are row-major. Multi-channel data is stored channel-major
//! (`data[c * M + j]` for pixel `j` of channel `c`), which is also the layout
//! the network consumes.

mod color;
mod metrics;
mod pgm;

pub use color::rgb_to_cielab;
pub use metrics::{dice, foreground_classes, mean_dice};
pub use pgm::{
    load_image, load_label_map, load_superpixel_map, save_image, save_label_map,
    save_superpixel_map,
};

use crate::error::{Error, Result};

/// Tolerance used for the per-pixel stochasticity checks on [`ProbMap`].
pub const STOCHASTIC_TOL: f64 = 1e-5;

/// A dense `height x width x channels` raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::domain(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::domain(format!(
                "image data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("image contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The plane of channel `c`.
    pub fn channel(&self, c: usize) -> &[f64] {
        let m = self.num_pixels();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.num_pixels() + y * self.width + x]
    }
}

/// Per-pixel class indices in `0..num_classes`. Class 0 is background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain("label map dimensions must be positive"));
        }
        if !(2..=256).contains(&num_classes) {
            return Err(Error::domain(format!(
                "num_classes {num_classes} outside 2..=256"
            )));
        }
        if data.len() != height * width {
            return Err(Error::domain(format!(
                "label data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::domain(format!(
                "label value {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, num_classes: usize, class: u8) -> Result<Self> {
        Self::new(height, width, num_classes, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Number of pixels carrying `class`.
    pub fn count(&self, class: u8) -> usize {
        self.data.iter().filter(|&&v| v == class).count()
    }

    /// Indicator mask of `class`.
    pub fn mask(&self, class: u8) -> Vec<bool> {
        self.data.iter().map(|&v| v == class).collect()
    }

    pub(crate) fn same_shape(&self, other_h: usize, other_w: usize) -> bool {
        self.height == other_h && self.width == other_w
    }
}

/// Per-pixel class distributions, `C x M`, class-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    num_classes: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbMap {
    /// Builds a probability map, checking that every pixel column is a
    /// distribution.
    pub fn new(num_classes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let m = height * width;
        if num_classes < 2 || m == 0 {
            return Err(Error::domain(
                "probability map needs >= 2 classes and >= 1 pixel",
            ));
        }
        if data.len() != num_classes * m {
            return Err(Error::domain(format!(
                "probability data length {} does not match {num_classes}x{m}",
                data.len()
            )));
        }
        for j in 0..m {
            let mut sum = 0.0;
            for c in 0..num_classes {
                let p = data[c * m + j];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("probability {p} outside [0,1]")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::domain(format!("pixel {j} sums to {sum}")));
            }
        }
        Ok(Self {
            num_classes,
            height,
            width,
            data,
        })
    }

    /// Skips the stochasticity scan; used by producers that guarantee it
    /// (softmax output).
    pub(crate) fn from_softmax(
        num_classes: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), num_classes * height * width);
        Self {
            num_classes,
            height,
            width,
            data,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, class: usize, pixel: usize) -> f64 {
        self.data[class * self.num_pixels() + pixel]
    }

    /// Per-pixel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> LabelMap {
        let m = self.num_pixels();
        let data = (0..m)
            .map(|j| {
                let mut best = 0;
                for c in 1..self.num_classes {
                    if self.data[c * m + j] > self.data[best * m + j] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            data,
        }
    }

    /// Max deviation of any pixel column sum from one.
    pub fn max_column_error(&self) -> f64 {
        let m = self.num_pixels();
        (0..m)
            .map(|j| {
                let s: f64 = (0..self.num_classes).map(|c| self.data[c * m + j]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}
