//! Synthetic annotation noise.
//!
//! A fraction `alpha` of the label maps in a dataset is corrupted; each
//! corrupted map receives one pattern (dilation, erosion, or a rotation plus
//! translation) whose magnitude is `beta` relative to the object scale
//! `sqrt(area)`.

mod affine;
mod morphology;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use affine::{centroid, rotate_translate};
pub use morphology::{dilate, disk_radius, erode, innermost_pixel};

use crate::error::{Error, Result};
use crate::imaging::{foreground_classes, mean_dice, LabelMap};

/// Default ratio between the morphology radius / shift bound and
/// `beta * object_scale`.
pub const DEFAULT_LEVEL_SCALE: f64 = 0.375;

/// Maximum rotation, in degrees, at `beta = 1`.
pub const MAX_ANGLE_PER_BETA: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Dilate,
    Erode,
    Affine,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::Dilate, Pattern::Erode, Pattern::Affine];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Dilate => "dilate",
            Pattern::Erode => "erode",
            Pattern::Affine => "affine",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dilate" => Ok(Pattern::Dilate),
            "erode" => Ok(Pattern::Erode),
            "affine" => Ok(Pattern::Affine),
            other => Err(Error::domain(format!("unknown noise pattern `{other}`"))),
        }
    }
}

/// Which samples to corrupt and how hard.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Fraction of samples corrupted.
    pub alpha: f64,
    /// Noise level relative to object scale.
    pub beta: f64,
    pub patterns: Vec<Pattern>,
    pub seed: u64,
    /// Radius (and shift bound) per unit of `beta * object_scale`.
    pub level_scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.7,
            patterns: Pattern::ALL.to_vec(),
            seed: 0,
            level_scale: DEFAULT_LEVEL_SCALE,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::domain(format!("beta {} must be >= 0", self.beta)));
        }
        if self.patterns.is_empty() {
            return Err(Error::domain("at least one noise pattern is required"));
        }
        if !(self.level_scale >= 0.0 && self.level_scale.is_finite()) {
            return Err(Error::domain("level scale must be >= 0"));
        }
        Ok(())
    }
}

/// One drawn corruption.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Corruption {
    Dilate { radius: f64 },
    Erode { radius: f64 },
    Affine { angle_deg: f64, dx: f64, dy: f64 },
}

impl Corruption {
    pub fn pattern(&self) -> Pattern {
        match self {
            Corruption::Dilate { .. } => Pattern::Dilate,
            Corruption::Erode { .. } => Pattern::Erode,
            Corruption::Affine { .. } => Pattern::Affine,
        }
    }
}

/// One row of the corruption log.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionRecord {
    pub sample_index: usize,
    pub class: u8,
    pub corruption: Corruption,
    /// Mean foreground dice of the corrupted map against the clean one.
    pub dice_vs_clean: f64,
}

/// splitmix64 finaliser.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and an index.
pub fn mix64(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// `sqrt` of the area of `class` in `mask`.
pub fn object_scale(mask: &LabelMap, class: u8) -> Result<f64> {
    let area = mask.count(class);
    if area == 0 {
        return Err(Error::domain(format!("class {class} is absent")));
    }
    Ok((area as f64).sqrt())
}

fn replace_class(mask: &LabelMap, class: u8, region: &[bool]) -> LabelMap {
    let data = mask
        .data()
        .iter()
        .zip(region)
        .map(|(&v, &inside)| match (inside, v == class) {
            (true, _) => class,
            (false, true) => 0,
            (false, false) => v,
        })
        .collect();
    LabelMap::new(mask.height(), mask.width(), mask.num_classes(), data)
        .expect("labels stay in range")
}

/// Grows the `class` region by a disk of radius `max(1, round(radius))`.
pub fn dilate_mask(mask: &LabelMap, class: u8, radius: f64) -> LabelMap {
    let grown = dilate(
        &mask.mask(class),
        mask.height(),
        mask.width(),
        disk_radius(radius),
    );
    replace_class(mask, class, &grown)
}

fn erode_region(region: &[bool], h: usize, w: usize, radius: f64) -> Vec<bool> {
    let mut shrunk = erode(region, h, w, disk_radius(radius));
    if !shrunk.iter().any(|&b| b) {
        if let Some(p) = innermost_pixel(region, h, w) {
            shrunk[p] = true;
        }
    }
    shrunk
}

/// Shrinks the `class` region by a disk. An erosion that would remove the
/// whole region keeps its innermost pixel instead.
pub fn erode_mask(mask: &LabelMap, class: u8, radius: f64) -> LabelMap {
    let shrunk = erode_region(&mask.mask(class), mask.height(), mask.width(), radius);
    replace_class(mask, class, &shrunk)
}

fn affine_region(
    region: &[bool],
    h: usize,
    w: usize,
    angle_deg: f64,
    shift: (f64, f64),
) -> Vec<bool> {
    match centroid(region, w) {
        Some(c) => rotate_translate(region, h, w, c, angle_deg, shift),
        None => region.to_vec(),
    }
}

/// Rotates the `class` region about its centroid and shifts it.
pub fn affine_mask(mask: &LabelMap, class: u8, angle_deg: f64, shift: (f64, f64)) -> LabelMap {
    let moved = affine_region(
        &mask.mask(class),
        mask.height(),
        mask.width(),
        angle_deg,
        shift,
    );
    replace_class(mask, class, &moved)
}

/// Draws magnitudes for `pattern` at noise level `beta` on an object of
/// scale `scale`.
pub fn draw_parameters<R: Rng + ?Sized>(
    pattern: Pattern,
    beta: f64,
    scale: f64,
    level_scale: f64,
    rng: &mut R,
) -> Corruption {
    let reach = level_scale * beta * scale;
    match pattern {
        Pattern::Dilate => Corruption::Dilate { radius: reach },
        Pattern::Erode => Corruption::Erode { radius: reach },
        Pattern::Affine => {
            let max_angle = MAX_ANGLE_PER_BETA * beta;
            Corruption::Affine {
                angle_deg: rng.random_range(-max_angle..=max_angle),
                dx: rng.random_range(-reach..=reach),
                dy: rng.random_range(-reach..=reach),
            }
        }
    }
}

/// Picks a pattern uniformly from `patterns` and draws its parameters.
pub fn draw_corruption<R: Rng + ?Sized>(
    patterns: &[Pattern],
    beta: f64,
    scale: f64,
    level_scale: f64,
    rng: &mut R,
) -> Corruption {
    let pattern = patterns[rng.random_range(0..patterns.len())];
    draw_parameters(pattern, beta, scale, level_scale, rng)
}

fn apply_region(region: &[bool], h: usize, w: usize, corruption: &Corruption) -> Vec<bool> {
    match *corruption {
        Corruption::Dilate { radius } => dilate(region, h, w, disk_radius(radius)),
        Corruption::Erode { radius } => erode_region(region, h, w, radius),
        Corruption::Affine { angle_deg, dx, dy } => {
            affine_region(region, h, w, angle_deg, (dx, dy))
        }
    }
}

/// Corrupts one map: one pattern for the sample, parameters drawn per
/// foreground class present. Classes are composed in ascending order onto a
/// fresh background, so later classes win overlaps.
pub fn corrupt_sample<R: Rng + ?Sized>(
    mask: &LabelMap,
    spec: &NoiseSpec,
    rng: &mut R,
) -> (LabelMap, Vec<(u8, Corruption)>) {
    let (h, w) = (mask.height(), mask.width());
    let pattern = spec.patterns[rng.random_range(0..spec.patterns.len())];
    let mut out = vec![0u8; h * w];
    let mut drawn = Vec::new();
    for class in foreground_classes(mask.num_classes()) {
        let Ok(scale) = object_scale(mask, class) else {
            continue;
        };
        let corruption = draw_parameters(pattern, spec.beta, scale, spec.level_scale, rng);
        let region = apply_region(&mask.mask(class), h, w, &corruption);
        for (o, inside) in out.iter_mut().zip(region) {
            if inside {
                *o = class;
            }
        }
        drawn.push((class, corruption));
    }
    let out = LabelMap::new(h, w, mask.num_classes(), out).expect("labels stay in range");
    (out, drawn)
}

/// Number of samples corrupted out of `n`.
pub fn corrupted_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64).round() as usize).min(n)
}

/// Corrupts `round(alpha * n)` randomly chosen maps. Untouched maps are
/// returned unchanged. Deterministic in `spec.seed`; sample `i` draws from
/// its own stream `mix64(seed, i)`.
pub fn corrupt_dataset(
    labels: &[LabelMap],
    spec: &NoiseSpec,
) -> Result<(Vec<LabelMap>, Vec<CorruptionRecord>)> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(Error::domain("cannot corrupt an empty dataset"));
    }
    let n = labels.len();
    let count = corrupted_count(spec.alpha, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix64(spec.seed, u64::MAX)));
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();

    let mut out = labels.to_vec();
    let mut log = Vec::new();
    for i in chosen {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(spec.seed, i as u64));
        let (noisy, drawn) = corrupt_sample(&labels[i], spec, &mut rng);
        let fg = foreground_classes(noisy.num_classes());
        let dice = mean_dice(&noisy, &labels[i], &fg)?;
        for (class, corruption) in drawn {
            log.push(CorruptionRecord {
                sample_index: i,
                class,
                corruption,
                dice_vs_clean: dice,
            });
        }
        out[i] = noisy;
    }
    Ok((out, log))
}

/// Fraction of pixels whose noisy label differs from the clean one.
pub fn pixel_noise_rate(noisy: &[LabelMap], clean: &[LabelMap]) -> Result<f64> {
    if noisy.len() != clean.len() || noisy.is_empty() {
        return Err(Error::domain(
            "noise rate needs matching, nonempty label sets",
        ));
    }
    let (mut wrong, mut total) = (0usize, 0usize);
    for (a, b) in noisy.iter().zip(clean) {
        if a.height() != b.height() || a.width() != b.width() {
            return Err(Error::domain("label shapes differ"));
        }
        wrong += a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| x != y)
            .count();
        total += a.num_pixels();
    }
    Ok(wrong as f64 / total as f64)
}

/// Writes the corruption log as CSV:
/// `sample_index,pattern,param1,param2,dice_vs_clean,param3,class`.
///
/// Morphology rows carry the requested radius and the disk radius used;
/// affine rows carry angle (degrees), dx and dy.
pub fn write_corruption_log(log: &[CorruptionRecord], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("sample_index,pattern,param1,param2,dice_vs_clean,param3,class\n");
    for r in log {
        let (p1, p2, p3) = match r.corruption {
            Corruption::Dilate { radius } | Corruption::Erode { radius } => (
                format!("{radius:.6}"),
                disk_radius(radius).to_string(),
                String::new(),
            ),
            Corruption::Affine { angle_deg, dx, dy } => (
                format!("{angle_deg:.6}"),
                format!("{dx:.6}"),
                format!("{dy:.6}"),
            ),
        };
        text.push_str(&format!(
            "{},{},{p1},{p2},{:.6},{p3},{}\n",
            r.sample_index,
            r.corruption.pattern(),
            r.dice_vs_clean,
            r.class
        ));
    }
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
