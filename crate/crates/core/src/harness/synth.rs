//! Synthetic lesion-like dataset: smooth blobs on a textured background.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{load_image, load_label_map, save_image, save_label_map, Image, LabelMap};
use crate::noise::mix64;

/// Highest harmonic of the boundary perturbation.
const HARMONICS: usize = 5;
/// Bound on each harmonic amplitude.
const MAX_AMPLITUDE: f64 = 0.3;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Mean intensity of the highest foreground class.
    pub fg_mean: f64,
    pub bg_mean: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    /// Allowed blob area as a fraction of the image.
    pub min_area: f64,
    pub max_area: f64,
    /// Fraction of images placed in the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_images: 250,
            height: 64,
            width: 64,
            num_classes: 2,
            fg_mean: 0.65,
            bg_mean: 0.35,
            noise_sigma: 0.12,
            min_area: 0.05,
            max_area: 0.30,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 || self.height < 8 || self.width < 8 {
            return Err(Error::domain(
                "need at least one image of at least 8x8 pixels",
            ));
        }
        if !(2..=256).contains(&self.num_classes) {
            return Err(Error::domain(format!(
                "num_classes {} outside 2..=256",
                self.num_classes
            )));
        }
        if !(0.0 < self.min_area && self.min_area <= self.max_area && self.max_area < 1.0) {
            return Err(Error::domain(
                "blob area bounds must satisfy 0 < min <= max < 1",
            ));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::domain("test fraction outside [0,1)"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::domain("noise sigma must be >= 0"));
        }
        Ok(())
    }

    /// Number of training images; the remainder is the test split.
    pub fn n_train(&self) -> usize {
        self.n_images - (self.test_fraction * self.n_images as f64).round() as usize
    }
}

/// Rasterised Fourier-perturbed ellipse:
/// `radius(phi) = r(phi) * (1 + sum_m a_m cos(m phi + p_m))`.
fn blob<R: Rng>(h: usize, w: usize, target_area: f64, rng: &mut R) -> Vec<bool> {
    let aspect: f64 = rng.random_range(0.6..1.0);
    let tilt: f64 = rng.random_range(0.0..PI);
    let coeffs: Vec<(f64, f64)> = (2..=HARMONICS)
        .map(|m| {
            let a = rng.random_range(-MAX_AMPLITUDE..MAX_AMPLITUDE) / m as f64;
            (a, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    // ellipse with semi-axes (r, aspect * r) has area pi * aspect * r^2
    let r = (target_area / (PI * aspect)).sqrt();
    let margin = r * 0.8;
    let cx = rng
        .random_range(margin.min(w as f64 / 2.0)..(w as f64 - margin).max(w as f64 / 2.0 + 1e-9));
    let cy = rng
        .random_range(margin.min(h as f64 / 2.0)..(h as f64 - margin).max(h as f64 / 2.0 + 1e-9));
    let (st, ct) = tilt.sin_cos();
    let mut mask = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let (u, v) = (ct * dx + st * dy, -st * dx + ct * dy);
            let phi = v.atan2(u);
            let base = r * aspect / ((aspect * phi.cos()).powi(2) + phi.sin().powi(2)).sqrt();
            let bump: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, &(a, p))| a * ((i + 2) as f64 * phi + p).cos())
                .sum();
            mask[y * w + x] = (u * u + v * v).sqrt() <= base * (1.0 + bump);
        }
    }
    mask
}

/// One image with its clean label map, deterministic in `(spec.seed, index)`.
pub fn generate_sample(spec: &SynthSpec, index: usize) -> Result<(Image, LabelMap)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let m = (h * w) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(spec.seed, index as u64));
    let mut labels = vec![0u8; h * w];
    for class in 1..spec.num_classes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let target = rng.random_range(spec.min_area..=spec.max_area) * m;
            let mask = blob(h, w, target, &mut rng);
            let area = mask.iter().filter(|&&b| b).count() as f64 / m;
            if area < spec.min_area || area > spec.max_area {
                continue;
            }
            let mut trial = labels.clone();
            for (t, &inside) in trial.iter_mut().zip(&mask) {
                if inside {
                    *t = class as u8;
                }
            }
            // earlier classes must stay visible
            if (1..=class).all(|c| trial.contains(&(c as u8))) {
                labels = trial;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::domain(format!(
                "could not place class {class} in image {index}"
            )));
        }
    }
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let step = (spec.fg_mean - spec.bg_mean) / (spec.num_classes - 1) as f64;
    let data = labels
        .iter()
        .map(|&c| {
            let base = spec.bg_mean + step * c as f64;
            let n = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            (base + n).clamp(0.0, 1.0)
        })
        .collect();
    Ok((
        Image::new(h, w, 1, data)?,
        LabelMap::new(h, w, spec.num_classes, labels)?,
    ))
}

/// One entry of a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub split: Split,
    pub image: PathBuf,
    pub label: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub const MANIFEST: &str = "manifest.csv";

pub fn image_name(index: usize) -> String {
    format!("{index:04}.pgm")
}

pub fn label_name(index: usize) -> String {
    format!("{index:04}.label.pgm")
}

/// Writes `images/`, `labels/` and `manifest.csv` under `out`. The first
/// `n_train` images form the training split.
pub fn gen_data(spec: &SynthSpec, out: &Path) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    for dir in ["images", "labels"] {
        let d = out.join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let n_train = spec.n_train();
    let mut entries = Vec::with_capacity(spec.n_images);
    let mut text = String::from("index,split,image,label,foreground_fraction\n");
    for i in 0..spec.n_images {
        let (img, lab) = generate_sample(spec, i)?;
        let image = PathBuf::from("images").join(image_name(i));
        let label = PathBuf::from("labels").join(label_name(i));
        save_image(&img, out.join(&image))?;
        save_label_map(&lab, out.join(&label))?;
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Test
        };
        let fg = lab.data().iter().filter(|&&c| c > 0).count() as f64 / lab.num_pixels() as f64;
        text.push_str(&format!(
            "{i},{},{},{},{fg:.6}\n",
            split.as_str(),
            image.display(),
            label.display()
        ));
        entries.push(ManifestEntry {
            index: i,
            split,
            image,
            label,
        });
    }
    let path = out.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Reads `manifest.csv` from a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let field = |i: usize| {
            r.get(i)
                .ok_or_else(|| Error::Format(format!("manifest row has no column {i}")))
        };
        let index = field(0)?
            .parse()
            .map_err(|_| Error::Format(format!("bad manifest index `{}`", &r[0])))?;
        let split = match field(1)? {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::Format(format!("bad manifest split `{other}`"))),
        };
        out.push(ManifestEntry {
            index,
            split,
            image: PathBuf::from(field(2)?),
            label: PathBuf::from(field(3)?),
        });
    }
    Ok(out)
}

/// Images and labels of one split loaded from disk.
pub fn load_split(
    dir: &Path,
    entries: &[ManifestEntry],
    split: Split,
    num_classes: usize,
) -> Result<(Vec<usize>, Vec<Image>, Vec<LabelMap>)> {
    let mut idx = Vec::new();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for e in entries.iter().filter(|e| e.split == split) {
        idx.push(e.index);
        images.push(load_image(dir.join(&e.image))?);
        labels.push(load_label_map(dir.join(&e.label), num_classes)?);
    }
    Ok((idx, images, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_images: 10,
            height: 32,
            width: 32,
            seed: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn split_is_eighty_twenty() {
        let dir = tempfile::tempdir().unwrap();
        let entries = gen_data(&small(), dir.path()).unwrap();
        let train = entries.iter().filter(|e| e.split == Split::Train).count();
        assert_eq!((train, entries.len() - train), (8, 2));
        assert_eq!(read_manifest(dir.path()).unwrap(), entries);
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen_data(&small(), a.path()).unwrap();
        gen_data(&small(), b.path()).unwrap();
        for name in ["manifest.csv", "images/0003.pgm", "labels/0007.label.pgm"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn blob_areas_respect_bounds() {
        let spec = SynthSpec {
            n_images: 60,
            ..small()
        };
        for i in 0..spec.n_images {
            let (img, lab) = generate_sample(&spec, i).unwrap();
            assert_eq!((img.height(), img.width()), (lab.height(), lab.width()));
            let frac = lab.count(1) as f64 / lab.num_pixels() as f64;
            assert!((0.05..=0.30).contains(&frac), "image {i}: {frac}");
        }
    }

    #[test]
    fn every_foreground_class_is_present() {
        let spec = SynthSpec {
            num_classes: 4,
            n_images: 12,
            ..small()
        };
        for i in 0..spec.n_images {
            let (_, lab) = generate_sample(&spec, i).unwrap();
            for c in 1..4 {
                assert!(lab.count(c) > 0, "image {i} lacks class {c}");
            }
        }
    }
}
