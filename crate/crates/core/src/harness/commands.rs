//! The CLI subcommands. Each takes a resolved [`Config`] and returns a short
//! human-readable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::Config;
use super::synth::{gen_data, label_name, read_manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::imaging::{
    foreground_classes, load_image, load_label_map, load_superpixel_map, mean_dice, save_label_map,
    save_superpixel_map, Image, LabelMap,
};
use crate::model::save_checkpoint;
use crate::noise::{corrupt_dataset, pixel_noise_rate, write_corruption_log};
use crate::superpixel::{slic, undersegmentation_error, SlicParams, SuperpixelMap};
use crate::train::{run_full, write_metrics_csv, Dataset};

pub const CONFIG_ECHO: &str = "run.cfg";
pub const METRICS: &str = "metrics.csv";
pub const CORRUPTION_LOG: &str = "corruption_log.csv";

pub fn superpixel_name(index: usize) -> String {
    format!("{index:04}.sp.pgm")
}

pub fn refined_name(index: usize, iteration: usize) -> String {
    format!("{index:04}.label.refined.{iteration}.pgm")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_config_echo(cfg: &Config, out: &Path) -> Result<()> {
    write_file(&out.join(CONFIG_ECHO), &cfg.echo())
}

pub(crate) fn superpixelize_all(
    images: &[Image],
    params: &SlicParams,
) -> Result<Vec<SuperpixelMap>> {
    images.par_iter().map(|img| slic(img, params)).collect()
}

pub fn cmd_gen_data(cfg: &Config) -> Result<String> {
    let out = cfg.required_path("io.out")?;
    let spec = cfg.synth_spec()?;
    let entries = gen_data(&spec, &out)?;
    write_config_echo(cfg, &out)?;
    let n_train = entries.iter().filter(|e| e.split == Split::Train).count();
    Ok(format!(
        "wrote {} images ({} train, {} test) to {}\n",
        entries.len(),
        n_train,
        entries.len() - n_train,
        out.display()
    ))
}

struct Loaded {
    index: Vec<usize>,
    images: Vec<Image>,
    labels: Vec<LabelMap>,
}

fn load(
    dir: &Path,
    entries: &[ManifestEntry],
    split: Split,
    num_classes: usize,
    images: bool,
) -> Result<Loaded> {
    let chosen: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == split).collect();
    let loaded: Vec<(Option<Image>, LabelMap)> = chosen
        .par_iter()
        .map(|e| {
            let img = if images {
                Some(load_image(dir.join(&e.image))?)
            } else {
                None
            };
            Ok((img, load_label_map(dir.join(&e.label), num_classes)?))
        })
        .collect::<Result<_>>()?;
    let (imgs, labels): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    Ok(Loaded {
        index: chosen.iter().map(|e| e.index).collect(),
        images: imgs.into_iter().flatten().collect(),
        labels,
    })
}

/// Corrupts the training labels of a dataset; test labels are left alone.
pub fn cmd_corrupt(cfg: &Config) -> Result<String> {
    let data = cfg.required_path("io.data")?;
    let out = cfg.required_path("io.out")?;
    let spec = cfg.noise_spec()?;
    let num_classes: usize = cfg.get("data.num_classes")?;
    let entries = read_manifest(&data)?;
    let train = load(&data, &entries, Split::Train, num_classes, false)?;
    let (noisy, log) = corrupt_dataset(&train.labels, &spec)?;
    let labels_dir = out.join("labels");
    create_dir(&labels_dir)?;
    for (&i, lab) in train.index.iter().zip(&noisy) {
        save_label_map(lab, labels_dir.join(label_name(i)))?;
    }
    write_corruption_log(&log, &out.join(CORRUPTION_LOG))?;
    write_config_echo(cfg, &out)?;
    let rate = pixel_noise_rate(&noisy, &train.labels)?;
    Ok(format!(
        "corrupted {} of {} training label maps; pixel noise rate {rate:.6}\n",
        log.iter()
            .map(|r| r.sample_index)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        noisy.len()
    ))
}

/// Runs SLIC on every training image and reports the mean
/// undersegmentation error against the manifest labels.
pub fn cmd_superpixelize(cfg: &Config) -> Result<String> {
    let data = cfg.required_path("io.data")?;
    let out = cfg.required_path("io.out")?;
    let params = cfg.slic_params()?;
    let num_classes: usize = cfg.get("data.num_classes")?;
    let entries = read_manifest(&data)?;
    let train = load(&data, &entries, Split::Train, num_classes, true)?;
    let maps = superpixelize_all(&train.images, &params)?;
    create_dir(&out)?;
    let mut csv = String::from("index,k,undersegmentation_error\n");
    let mut total = 0.0;
    for ((&i, sp), gt) in train.index.iter().zip(&maps).zip(&train.labels) {
        save_superpixel_map(sp, out.join(superpixel_name(i)))?;
        let ue = undersegmentation_error(sp, gt)?;
        total += ue;
        let _ = writeln!(csv, "{i},{},{ue:.6}", sp.num_superpixels());
    }
    write_file(&out.join("superpixels.csv"), &csv)?;
    let mean_k =
        maps.iter().map(|m| m.num_superpixels()).sum::<usize>() as f64 / maps.len().max(1) as f64;
    Ok(format!(
        "superpixelized {} images; mean K {mean_k:.1}; mean undersegmentation error {:.6}\n",
        maps.len(),
        total / maps.len().max(1) as f64
    ))
}

/// Trains one mode on a dataset directory. Training labels come from
/// `io.labels` when set, otherwise from the manifest; superpixels come from
/// `io.superpixels` when set, otherwise SLIC is run.
pub fn cmd_train(cfg: &Config) -> Result<String> {
    let data_dir = cfg.required_path("io.data")?;
    let out = cfg.required_path("io.out")?;
    let mode = cfg.mode()?;
    let tc = cfg.train_config()?;
    let num_classes = tc.net.num_classes;
    let entries = read_manifest(&data_dir)?;
    let train = load(&data_dir, &entries, Split::Train, num_classes, true)?;
    let test = load(&data_dir, &entries, Split::Test, num_classes, true)?;

    let labels_dir = match cfg.path("io.labels")? {
        Some(d) => d,
        None => data_dir.join("labels"),
    };
    let train_labels = match cfg.path("io.labels")? {
        Some(d) => train
            .index
            .par_iter()
            .map(|&i| load_label_map(d.join(label_name(i)), num_classes))
            .collect::<Result<Vec<_>>>()?,
        None => train.labels.clone(),
    };
    let superpixels = match cfg.path("io.superpixels")? {
        Some(d) => train
            .index
            .par_iter()
            .map(|&i| load_superpixel_map(d.join(superpixel_name(i))))
            .collect::<Result<Vec<_>>>()?,
        None => superpixelize_all(&train.images, &cfg.slic_params()?)?,
    };
    let dataset = Dataset {
        num_classes,
        train_images: train.images,
        train_labels,
        train_clean: Some(train.labels),
        superpixels,
        test_images: test.images,
        test_labels: test.labels,
    };
    let result = run_full(&dataset, &tc, mode)?;

    create_dir(&out)?;
    write_metrics_csv(&result.rows, num_classes, &out.join(METRICS))?;
    save_checkpoint(&result.nets.net1, out.join("net1.ckpt"))?;
    save_checkpoint(&result.nets.net2, out.join("net2.ckpt"))?;
    for (n, labels) in result.label_history.iter().enumerate() {
        for (&i, lab) in train.index.iter().zip(labels) {
            save_label_map(lab, labels_dir.join(refined_name(i, n + 1)))?;
        }
    }
    write_config_echo(cfg, &out)?;

    let mut s = format!(
        "mode {mode}: score {:.6} over the last {} kept epochs; R0 {:.6}\n",
        result.score, tc.report_epochs, result.initial_ratio
    );
    for it in &result.iterations {
        let _ = writeln!(
            s,
            "iteration {}: R {:.4}, {} epochs, stop {}, label dice {} -> {}",
            it.iteration,
            it.ratio,
            it.epochs_run,
            it.stop_epoch.map_or("none".into(), |e| e.to_string()),
            fmt_opt(it.label_dice_before),
            fmt_opt(it.label_dice_after)
        );
    }
    write_file(&out.join("summary.txt"), &s)?;
    Ok(s)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |d| format!("{d:.4}"))
}

/// Label maps to compare: a single file, or every `.pgm` in a directory.
fn eval_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !gt.is_dir() {
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    let read = std::fs::read_dir(gt).map_err(|e| Error::io(gt, e))?;
    let mut names = Vec::new();
    for entry in read {
        let entry = entry.map_err(|e| Error::io(gt, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(".pgm") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::domain(format!(
            "no .pgm label maps in {}",
            gt.display()
        )));
    }
    Ok(names
        .into_iter()
        .map(|n| (pred.join(&n), gt.join(&n)))
        .collect())
}

/// Mean foreground dice of predicted label maps against ground truth.
pub fn cmd_eval(cfg: &Config) -> Result<String> {
    let pred = cfg.required_path("io.pred")?;
    let gt = cfg.required_path("io.gt")?;
    let num_classes: usize = cfg.get("data.num_classes")?;
    let classes = foreground_classes(num_classes);
    let pairs = eval_pairs(&pred, &gt)?;
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|(p, g)| {
            let p = load_label_map(p, num_classes)?;
            let g = load_label_map(g, num_classes)?;
            mean_dice(&p, &g, &classes)
        })
        .collect::<Result<_>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(format!("images {}\nmean_dice {mean:.6}\n", scores.len()))
}
