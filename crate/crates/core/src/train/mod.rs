//! Superpixel-guided co-training from noisy labels.
//!
//! Each outer iteration trains two networks on the small-loss superpixels of
//! every image, stops when the loss gap between selected and excluded
//! superpixels peaks, and relabels the highest-loss superpixels with the
//! networks' joint prediction. The selection ratio then grows by `gamma`.

mod loss;
mod refine;
mod select;
mod stopping;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use loss::{soft_cross_entropy, superpixel_loss, sym_kl, training_loss_and_grad, LOG_EPS};
pub use refine::{refine_labels, RelabelLog};
pub use select::{loss_gap, select_small_loss, select_unreliable, SelectionResult};
pub use stopping::{smooth, stopping_check, LossGapSeries};

use crate::error::{Error, Result};
use crate::imaging::{dice, foreground_classes, mean_dice, Image, LabelMap, ProbMap};
use crate::model::{init_pair, sgd_step, Net, NetConfig, SgdState};
use crate::noise::{mix64, pixel_noise_rate};
use crate::superpixel::{pool_labels, pool_probabilities, SuperpixelMap, SuperpixelTable};

/// Training regimes compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Plain co-training on every pixel: `R = 1`, `lambda = 0`, no early
    /// stop, no refinement.
    Baseline,
    /// The full method.
    Ours,
    /// The full method with every pixel its own superpixel.
    PixelUnit,
    /// Trains on all pixels; selection is still used for the loss gap and
    /// for refinement.
    NoSelection,
    /// A single stage with selection and early stopping but no relabelling.
    NoRefinement,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Baseline,
        Mode::Ours,
        Mode::PixelUnit,
        Mode::NoSelection,
        Mode::NoRefinement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ours => "ours",
            Mode::PixelUnit => "pixel_unit",
            Mode::NoSelection => "no_selection",
            Mode::NoRefinement => "no_refinement",
        }
    }

    /// Whether the mode relabels the training set between stages.
    pub fn refines(self) -> bool {
        self.plan().refine
    }

    fn plan(self) -> Plan {
        match self {
            Mode::Baseline => Plan {
                select: false,
                train_on_selection: false,
                early_stop: false,
                refine: false,
                iterate: false,
            },
            Mode::Ours | Mode::PixelUnit => Plan {
                select: true,
                train_on_selection: true,
                early_stop: true,
                refine: true,
                iterate: true,
            },
            Mode::NoSelection => Plan {
                select: true,
                train_on_selection: false,
                early_stop: true,
                refine: true,
                iterate: true,
            },
            Mode::NoRefinement => Plan {
                select: true,
                train_on_selection: true,
                early_stop: true,
                refine: false,
                iterate: false,
            },
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::domain(format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Copy, Debug)]
struct Plan {
    /// Ratio `R < 1` is used at all (otherwise `R = 1`, `lambda = 0`).
    select: bool,
    train_on_selection: bool,
    early_stop: bool,
    refine: bool,
    iterate: bool,
}

/// Which network's prediction is scored on the test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalNet {
    First,
    /// Average of both networks' probabilities.
    Mean,
}

/// How per-superpixel losses are aggregated into the loss gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapPooling {
    /// One gap over all training superpixels.
    Dataset,
    /// Mean of the per-image gaps.
    PerImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Initial selection ratio; `1 - noise_rate` when unset.
    pub r0: Option<f64>,
    /// Known pixel noise rate; measured against clean labels when unset.
    pub noise_rate: Option<f64>,
    pub gamma: f64,
    pub max_epochs: usize,
    pub stop_window: usize,
    pub max_iterations: usize,
    /// Stop a stage as soon as the loss-gap peak is confirmed. When false the
    /// stage runs to `max_epochs` and the peak is only recorded.
    pub halt_on_stop: bool,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub net: NetConfig,
    pub eval: EvalNet,
    pub gap_pooling: GapPooling,
    /// Epochs averaged for the reported score.
    pub report_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.65,
            r0: None,
            noise_rate: None,
            gamma: 1.1,
            max_epochs: 200,
            stop_window: 5,
            max_iterations: 5,
            halt_on_stop: true,
            lr: 0.005,
            momentum: 0.0,
            batch_size: 8,
            net: NetConfig::default(),
            eval: EvalNet::First,
            gap_pooling: GapPooling::Dataset,
            report_epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::domain(format!(
                "lambda {} outside [0,1)",
                self.lambda
            )));
        }
        if let Some(r) = self.r0 {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::domain(format!("r0 {r} outside (0,1]")));
            }
        }
        if let Some(n) = self.noise_rate {
            if !(0.0..1.0).contains(&n) {
                return Err(Error::domain(format!("noise rate {n} outside [0,1)")));
            }
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!("gamma {} must be >= 1", self.gamma)));
        }
        if self.max_epochs == 0 || self.max_iterations == 0 || self.batch_size == 0 {
            return Err(Error::domain(
                "epochs, iterations and batch size must be positive",
            ));
        }
        if self.stop_window == 0 || self.report_epochs == 0 {
            return Err(Error::domain(
                "stop window and report epochs must be positive",
            ));
        }
        SgdState::new(self.lr, self.momentum)?;
        self.net.validate()
    }
}

/// Images, labels and superpixels for one experiment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub num_classes: usize,
    pub train_images: Vec<Image>,
    /// Labels used for training (possibly noisy).
    pub train_labels: Vec<LabelMap>,
    /// Clean training labels, when known; used only for reporting and the
    /// noise rate.
    pub train_clean: Option<Vec<LabelMap>>,
    pub superpixels: Vec<SuperpixelMap>,
    pub test_images: Vec<Image>,
    pub test_labels: Vec<LabelMap>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.train_images.len();
        if n == 0 {
            return Err(Error::domain("training split is empty"));
        }
        if self.train_labels.len() != n || self.superpixels.len() != n {
            return Err(Error::domain(
                "training images, labels and superpixels differ in count",
            ));
        }
        if let Some(clean) = &self.train_clean {
            if clean.len() != n {
                return Err(Error::domain("clean training labels differ in count"));
            }
        }
        if self.test_images.len() != self.test_labels.len() {
            return Err(Error::domain("test images and labels differ in count"));
        }
        let all_labels = self
            .train_labels
            .iter()
            .chain(&self.test_labels)
            .chain(self.train_clean.iter().flatten());
        for l in all_labels {
            if l.num_classes() != self.num_classes {
                return Err(Error::domain("label maps disagree on the class count"));
            }
        }
        for (i, img) in self.train_images.iter().enumerate() {
            let (h, w) = (img.height(), img.width());
            let l = &self.train_labels[i];
            let s = &self.superpixels[i];
            if (l.height(), l.width()) != (h, w) || (s.height(), s.width()) != (h, w) {
                return Err(Error::domain(format!(
                    "training sample {i} has mismatched shapes"
                )));
            }
        }
        for (i, (img, l)) in self.test_images.iter().zip(&self.test_labels).enumerate() {
            if (l.height(), l.width()) != (img.height(), img.width()) {
                return Err(Error::domain(format!(
                    "test sample {i} has mismatched shapes"
                )));
            }
        }
        Ok(())
    }

    /// Mean foreground dice of `labels` against the clean training labels.
    pub fn label_dice(&self, labels: &[LabelMap]) -> Result<Option<f64>> {
        let Some(clean) = &self.train_clean else {
            return Ok(None);
        };
        let fg = foreground_classes(self.num_classes);
        let mut sum = 0.0;
        for (a, b) in labels.iter().zip(clean) {
            sum += mean_dice(a, b, &fg)?;
        }
        Ok(Some(sum / labels.len() as f64))
    }
}

/// One row of the per-epoch metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub iteration: usize,
    pub epoch: usize,
    pub mode: Mode,
    pub ratio: f64,
    pub lambda: f64,
    pub train_loss: f64,
    pub gap: f64,
    pub gap_smoothed: f64,
    /// Test dice per foreground class.
    pub test_dice: Vec<f64>,
    pub test_mean_dice: f64,
    pub label_dice_vs_clean: Option<f64>,
}

/// Outcome of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub ratio: f64,
    pub epochs_run: usize,
    /// Epoch whose networks were kept, if the loss gap peaked.
    pub stop_epoch: Option<usize>,
    pub label_dice_before: Option<f64>,
    pub label_dice_after: Option<f64>,
    pub relabel: Vec<RelabelLog>,
}

/// The two networks with their optimiser states.
#[derive(Clone, Debug)]
pub struct NetPair {
    pub net1: Net,
    pub net2: Net,
    sgd1: SgdState,
    sgd2: SgdState,
}

impl NetPair {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let (net1, net2) = init_pair(config.net, mix64(config.seed, 1), mix64(config.seed, 2))?;
        Ok(Self {
            net1,
            net2,
            sgd1: SgdState::new(config.lr, config.momentum)?,
            sgd2: SgdState::new(config.lr, config.momentum)?,
        })
    }

    fn predict(&self, img: &Image, eval: EvalNet) -> Result<ProbMap> {
        let p1 = self.net1.forward(img)?;
        match eval {
            EvalNet::First => Ok(p1),
            EvalNet::Mean => {
                let p2 = self.net2.forward(img)?;
                let data = p1
                    .data()
                    .iter()
                    .zip(p2.data())
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                ProbMap::new(p1.num_classes(), p1.height(), p1.width(), data)
            }
        }
    }
}

/// Test-split dice per foreground class and their mean, averaged over
/// images.
pub fn evaluate(nets: &NetPair, data: &Dataset, eval: EvalNet) -> Result<(Vec<f64>, f64)> {
    let fg = foreground_classes(data.num_classes);
    if data.test_images.is_empty() {
        return Ok((vec![0.0; fg.len()], 0.0));
    }
    let per_image: Vec<Vec<f64>> = data
        .test_images
        .par_iter()
        .zip(&data.test_labels)
        .map(|(img, gt)| {
            let pred = nets.predict(img, eval)?.argmax();
            fg.iter()
                .map(|&c| dice(&pred, gt, c))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = per_image.len() as f64;
    let per_class: Vec<f64> = (0..fg.len())
        .map(|c| per_image.iter().map(|d| d[c]).sum::<f64>() / n)
        .collect();
    let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok((per_class, mean))
}

struct ImageStep {
    loss: f64,
    g1: Vec<f64>,
    g2: Vec<f64>,
    sp_losses: Vec<f64>,
    selected: Vec<bool>,
}

/// Settings for one network-training stage.
#[derive(Clone, Copy, Debug)]
struct Stage {
    ratio: f64,
    lambda: f64,
    plan: Plan,
}

fn image_step(
    nets: &NetPair,
    img: &Image,
    labels: &LabelMap,
    soft: &SuperpixelTable,
    sp: &SuperpixelMap,
    stage: &Stage,
) -> Result<ImageStep> {
    let (p1, c1) = nets.net1.forward_cached(img)?;
    let (p2, c2) = nets.net2.forward_cached(img)?;
    let ps1 = pool_probabilities(&p1, sp)?;
    let ps2 = pool_probabilities(&p2, sp)?;
    let sp_losses = superpixel_loss(&ps1, &ps2, soft, stage.lambda)?;
    let selection = select_small_loss(&sp_losses, sp.sizes(), stage.ratio)?;
    let mask: Vec<bool> = if stage.plan.train_on_selection {
        (0..sp.num_pixels())
            .map(|j| selection.selected[sp.index_of(j)])
            .collect()
    } else {
        vec![true; sp.num_pixels()]
    };
    let (loss, d1, d2) = training_loss_and_grad(&p1, &p2, labels, &mask, stage.lambda)?;
    let g1 = nets.net1.backward(&c1, &d1)?;
    let g2 = nets.net2.backward(&c2, &d2)?;
    Ok(ImageStep {
        loss,
        g1,
        g2,
        sp_losses,
        selected: selection.selected,
    })
}

fn gap_of(losses: &[Vec<f64>], selected: &[Vec<bool>], pooling: GapPooling) -> f64 {
    match pooling {
        GapPooling::Dataset => {
            let l: Vec<f64> = losses.iter().flatten().copied().collect();
            let s: Vec<bool> = selected.iter().flatten().copied().collect();
            loss_gap(&l, &s)
        }
        GapPooling::PerImage => {
            let n = losses.len() as f64;
            losses
                .iter()
                .zip(selected)
                .map(|(l, s)| loss_gap(l, s))
                .sum::<f64>()
                / n
        }
    }
}

/// One pass over the training split in seeded random mini-batches. Returns
/// the mean training loss and the loss gap measured on the superpixel
/// losses seen during the pass.
fn train_epoch(
    nets: &mut NetPair,
    data: &Dataset,
    labels: &[LabelMap],
    soft: &[SuperpixelTable],
    sp: &[SuperpixelMap],
    stage: &Stage,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let n = data.train_images.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut losses = vec![Vec::new(); n];
    let mut selected = vec![Vec::new(); n];
    let mut total_loss = 0.0;
    for batch in order.chunks(config.batch_size) {
        let frozen = &*nets;
        let steps: Vec<ImageStep> = batch
            .par_iter()
            .map(|&i| {
                image_step(
                    frozen,
                    &data.train_images[i],
                    &labels[i],
                    &soft[i],
                    &sp[i],
                    stage,
                )
            })
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut g1 = vec![0.0; nets.net1.num_params()];
        let mut g2 = vec![0.0; nets.net2.num_params()];
        for (step, &i) in steps.into_iter().zip(batch) {
            for (a, b) in g1.iter_mut().zip(&step.g1) {
                *a += scale * b;
            }
            for (a, b) in g2.iter_mut().zip(&step.g2) {
                *a += scale * b;
            }
            total_loss += step.loss;
            losses[i] = step.sp_losses;
            selected[i] = step.selected;
        }
        sgd_step(&mut nets.net1, &g1, &mut nets.sgd1)?;
        sgd_step(&mut nets.net2, &g2, &mut nets.sgd2)?;
    }
    Ok((
        total_loss / n as f64,
        gap_of(&losses, &selected, config.gap_pooling),
    ))
}

/// Result of [`run_iteration`].
#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub labels: Vec<LabelMap>,
    pub rows: Vec<EpochMetrics>,
    pub summary: IterationSummary,
    /// Selection ratio for the next iteration, `min(1, R * gamma)`.
    pub next_ratio: f64,
}

/// One training stage followed by one refinement pass.
///
/// The networks are trained until the loss gap peaks (or `max_epochs`) and
/// are then restored to the peak epoch. `rows` holds every epoch that was
/// run; `summary.stop_epoch` marks the one that was kept.
pub fn run_iteration(
    data: &Dataset,
    superpixels: &[SuperpixelMap],
    nets: &mut NetPair,
    labels: &[LabelMap],
    config: &TrainConfig,
    mode: Mode,
    iteration: usize,
    ratio: f64,
) -> Result<IterationOutcome> {
    let plan = mode.plan();
    let stage = Stage {
        ratio: if plan.select { ratio } else { 1.0 },
        lambda: if plan.select { config.lambda } else { 0.0 },
        plan,
    };
    let soft: Vec<SuperpixelTable> = labels
        .par_iter()
        .zip(superpixels)
        .map(|(l, s)| pool_labels(l, s))
        .collect::<Result<_>>()?;
    let label_dice = data.label_dice(labels)?;

    let mut series = LossGapSeries::new(config.stop_window);
    let mut snapshots: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(mix64(config.seed, 3), iteration as u64));
    for epoch in 1..=config.max_epochs {
        let (train_loss, gap) = train_epoch(
            nets,
            data,
            labels,
            &soft,
            superpixels,
            &stage,
            config,
            &mut rng,
        )?;
        let (test_dice, test_mean_dice) = evaluate(nets, data, config.eval)?;
        rows.push(EpochMetrics {
            iteration,
            epoch,
            mode,
            ratio: stage.ratio,
            lambda: stage.lambda,
            train_loss,
            gap,
            gap_smoothed: 0.0,
            test_dice,
            test_mean_dice,
            label_dice_vs_clean: label_dice,
        });
        let stop = series.push(gap);
        if plan.early_stop {
            snapshots.push((nets.net1.params().to_vec(), nets.net2.params().to_vec()));
            if stop.is_some() && config.halt_on_stop {
                break;
            }
        }
    }
    for (row, s) in rows.iter_mut().zip(series.smoothed()) {
        row.gap_smoothed = s;
    }

    let stop_epoch = if plan.early_stop {
        series.stop_epoch()
    } else {
        None
    };
    if let Some(e) = stop_epoch {
        let (a, b) = &snapshots[e - 1];
        nets.net1.params_mut().copy_from_slice(a);
        nets.net2.params_mut().copy_from_slice(b);
        nets.sgd1 = SgdState::new(config.lr, config.momentum)?;
        nets.sgd2 = SgdState::new(config.lr, config.momentum)?;
    }

    let (new_labels, relabel) = if plan.refine {
        let frozen = &*nets;
        let refined: Vec<(LabelMap, RelabelLog)> = (0..labels.len())
            .into_par_iter()
            .map(|i| {
                let img = &data.train_images[i];
                let sp = &superpixels[i];
                let ps1 = pool_probabilities(&frozen.net1.forward(img)?, sp)?;
                let ps2 = pool_probabilities(&frozen.net2.forward(img)?, sp)?;
                let losses = superpixel_loss(&ps1, &ps2, &soft[i], stage.lambda)?;
                refine_labels(&ps1, &ps2, &losses, stage.ratio, &labels[i], sp)
            })
            .collect::<Result<_>>()?;
        refined.into_iter().unzip()
    } else {
        (labels.to_vec(), vec![RelabelLog::default(); labels.len()])
    };

    let summary = IterationSummary {
        iteration,
        ratio: stage.ratio,
        epochs_run: rows.len(),
        stop_epoch,
        label_dice_before: label_dice,
        label_dice_after: data.label_dice(&new_labels)?,
        relabel,
    };
    Ok(IterationOutcome {
        labels: new_labels,
        rows,
        summary,
        next_ratio: (stage.ratio * config.gamma).min(1.0),
    })
}

/// Everything produced by [`run_full`].
#[derive(Clone, Debug)]
pub struct RunResult {
    pub mode: Mode,
    pub nets: NetPair,
    pub labels: Vec<LabelMap>,
    /// Training labels after each iteration, empty for modes that do not
    /// refine.
    pub label_history: Vec<Vec<LabelMap>>,
    /// Every epoch that was run, in order.
    pub rows: Vec<EpochMetrics>,
    pub iterations: Vec<IterationSummary>,
    /// Mean test dice over the last `report_epochs` epochs of the kept
    /// trajectory (epochs after a restored peak are dropped).
    pub score: f64,
    pub initial_ratio: f64,
}

impl RunResult {
    /// Rows on the kept trajectory: each iteration up to its stop epoch.
    pub fn kept_rows(&self) -> Vec<&EpochMetrics> {
        self.rows
            .iter()
            .filter(|r| {
                let it = &self.iterations[r.iteration - 1];
                it.stop_epoch.is_none_or(|s| r.epoch <= s)
            })
            .collect()
    }
}

/// Initial selection ratio `1 - noise_rate`, unless `r0` is configured.
pub fn initial_ratio(data: &Dataset, config: &TrainConfig) -> Result<f64> {
    if let Some(r) = config.r0 {
        return Ok(r);
    }
    let rate = match (config.noise_rate, &data.train_clean) {
        (Some(r), _) => r,
        (None, Some(clean)) => pixel_noise_rate(&data.train_labels, clean)?,
        (None, None) => {
            return Err(Error::domain(
                "noise rate unknown: set r0 or noise_rate, or provide clean labels",
            ));
        }
    };
    Ok((1.0 - rate).clamp(f64::MIN_POSITIVE, 1.0))
}

/// Runs the outer loop for `mode`: stages and refinements alternate until a
/// stage shows no loss-gap peak after its first epoch, or `max_iterations`
/// is reached.
pub fn run_full(data: &Dataset, config: &TrainConfig, mode: Mode) -> Result<RunResult> {
    config.validate()?;
    data.validate()?;
    if config.net.num_classes != data.num_classes {
        return Err(Error::domain(
            "network and dataset disagree on the class count",
        ));
    }
    let plan = mode.plan();
    let pixel_maps: Vec<SuperpixelMap>;
    let superpixels: &[SuperpixelMap] = if mode == Mode::PixelUnit {
        pixel_maps = data
            .train_images
            .iter()
            .map(|img| SuperpixelMap::pixel_unit(img.height(), img.width()))
            .collect();
        &pixel_maps
    } else {
        &data.superpixels
    };

    let initial = if plan.select {
        initial_ratio(data, config)?
    } else {
        1.0
    };
    let mut ratio = initial;
    let mut nets = NetPair::new(config)?;
    let mut labels = data.train_labels.clone();
    let mut label_history = Vec::new();
    let mut rows = Vec::new();
    let mut iterations = Vec::new();
    let max_iterations = if plan.iterate {
        config.max_iterations
    } else {
        1
    };
    for iteration in 1..=max_iterations {
        let out = run_iteration(
            data,
            superpixels,
            &mut nets,
            &labels,
            config,
            mode,
            iteration,
            ratio,
        )?;
        labels = out.labels;
        if plan.refine {
            label_history.push(labels.clone());
        }
        rows.extend(out.rows);
        let peaked = out.summary.stop_epoch.is_some_and(|e| e > 1);
        iterations.push(out.summary);
        ratio = out.next_ratio;
        if !peaked {
            break;
        }
    }

    let mut result = RunResult {
        mode,
        nets,
        labels,
        label_history,
        rows,
        iterations,
        score: 0.0,
        initial_ratio: initial,
    };
    let kept = result.kept_rows();
    let tail = &kept[kept.len().saturating_sub(config.report_epochs)..];
    result.score = tail.iter().map(|r| r.test_mean_dice).sum::<f64>() / tail.len() as f64;
    Ok(result)
}

/// Writes the per-epoch metrics as CSV.
pub fn write_metrics_csv(rows: &[EpochMetrics], num_classes: usize, path: &Path) -> Result<()> {
    let mut text = String::from("iteration,epoch,mode,R,lambda,train_loss,G_l,G_l_smoothed");
    for c in foreground_classes(num_classes) {
        text.push_str(&format!(",test_dice_c{c}"));
    }
    text.push_str(",test_mean_dice,label_dice_vs_clean\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.8},{:.8},{:.8}",
            r.iteration, r.epoch, r.mode, r.ratio, r.lambda, r.train_loss, r.gap, r.gap_smoothed
        ));
        for d in &r.test_dice {
            text.push_str(&format!(",{d:.6}"));
        }
        let label = r
            .label_dice_vs_clean
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        text.push_str(&format!(",{:.6},{label}\n", r.test_mean_dice));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
