//! The noise-grid sweep: every (alpha, beta) cell is trained once per mode on
//! a shared synthetic dataset, and the scores are assembled into a markdown
//! report.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::commands::{superpixelize_all, write_file, CONFIG_ECHO, METRICS};
use super::config::Config;
use super::synth::generate_sample;
use crate::error::{Error, Result};
use crate::imaging::{Image, LabelMap};
use crate::noise::{corrupt_dataset, NoiseSpec};
use crate::train::{run_full, write_metrics_csv, Dataset, Mode, TrainConfig};

pub const REPORT: &str = "report.md";

/// Outcome of one mode in one noise cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub alpha: f64,
    pub beta: f64,
    pub mode: Mode,
    /// Mean test dice over the last reported epochs, in `[0, 1]`.
    pub score: f64,
    /// Dice of the noisy training labels against the clean ones.
    pub label_dice_noisy: f64,
    /// The same after the final refinement, for modes that refine.
    pub label_dice_refined: Option<f64>,
    pub stop_epochs: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub alpha: f64,
    pub beta: f64,
    pub mode: Mode,
    pub result: std::result::Result<CellResult, String>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub modes: Vec<Mode>,
    pub cells: Vec<CellOutcome>,
}

impl Experiment {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    pub fn get(&self, alpha: f64, beta: f64, mode: Mode) -> Option<&CellOutcome> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.beta == beta && c.mode == mode)
    }
}

pub fn cell_dir(alpha: f64, beta: f64, mode: Mode) -> String {
    format!("cells/a{alpha:.2}_b{beta:.2}/{mode}")
}

struct Shared {
    images: Vec<Image>,
    clean: Vec<LabelMap>,
    superpixels: Vec<crate::superpixel::SuperpixelMap>,
    test_images: Vec<Image>,
    test_labels: Vec<LabelMap>,
}

fn run_cell(
    shared: &Shared,
    noise: &NoiseSpec,
    tc: &TrainConfig,
    mode: Mode,
    out: Option<&Path>,
) -> Result<CellResult> {
    let (noisy, _) = corrupt_dataset(&shared.clean, noise)?;
    let data = Dataset {
        num_classes: tc.net.num_classes,
        train_images: shared.images.clone(),
        train_labels: noisy,
        train_clean: Some(shared.clean.clone()),
        superpixels: shared.superpixels.clone(),
        test_images: shared.test_images.clone(),
        test_labels: shared.test_labels.clone(),
    };
    let label_dice_noisy = data.label_dice(&data.train_labels)?.unwrap_or(1.0);
    let result = run_full(&data, tc, mode)?;
    if let Some(dir) = out {
        let dir = dir.join(cell_dir(noise.alpha, noise.beta, mode));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_metrics_csv(&result.rows, tc.net.num_classes, &dir.join(METRICS))?;
    }
    let label_dice_refined = if mode.refines() {
        data.label_dice(&result.labels)?
    } else {
        None
    };
    Ok(CellResult {
        alpha: noise.alpha,
        beta: noise.beta,
        mode,
        score: result.score,
        label_dice_noisy,
        label_dice_refined,
        stop_epochs: result.iterations.iter().map(|it| it.stop_epoch).collect(),
    })
}

/// Runs the sweep described by `cfg`. Per-cell metrics go under `out` when
/// given. A failing cell is recorded and the sweep continues.
pub fn run_experiment(cfg: &Config, out: Option<&Path>) -> Result<Experiment> {
    let synth = cfg.synth_spec()?;
    let base_noise = cfg.noise_spec()?;
    let tc = cfg.train_config()?;
    let slic_params = cfg.slic_params()?;
    let alphas: Vec<f64> = cfg.list("experiment.alphas")?;
    let betas: Vec<f64> = cfg.list("experiment.betas")?;
    let modes: Vec<Mode> = cfg.list("experiment.modes")?;
    if alphas.is_empty() || betas.is_empty() || modes.is_empty() {
        return Err(Error::domain("the experiment grid is empty"));
    }
    let mut cells = Vec::new();
    for &alpha in &alphas {
        for &beta in &betas {
            let noise = NoiseSpec {
                alpha,
                beta,
                ..base_noise.clone()
            };
            noise.validate()?;
            for &mode in &modes {
                cells.push((noise.clone(), mode));
            }
        }
    }
    let jobs: usize = cfg.get("experiment.jobs")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;

    let outcomes = pool.install(|| -> Result<Vec<CellOutcome>> {
        let samples: Vec<(Image, LabelMap)> = (0..synth.n_images)
            .into_par_iter()
            .map(|i| generate_sample(&synth, i))
            .collect::<Result<_>>()?;
        let n_train = synth.n_train();
        let (train, test) = samples.split_at(n_train);
        let images: Vec<Image> = train.iter().map(|s| s.0.clone()).collect();
        let superpixels = superpixelize_all(&images, &slic_params)?;
        let shared = Shared {
            images,
            clean: train.iter().map(|s| s.1.clone()).collect(),
            superpixels,
            test_images: test.iter().map(|s| s.0.clone()).collect(),
            test_labels: test.iter().map(|s| s.1.clone()).collect(),
        };
        Ok(cells
            .par_iter()
            .map(|(noise, mode)| CellOutcome {
                alpha: noise.alpha,
                beta: noise.beta,
                mode: *mode,
                result: run_cell(&shared, noise, &tc, *mode, out).map_err(|e| e.to_string()),
            })
            .collect())
    })?;
    Ok(Experiment {
        alphas,
        betas,
        modes,
        cells: outcomes,
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Markdown report: test dice per noise setting and mode, then the label
/// dice before and after refinement.
pub fn render_report(exp: &Experiment, report_epochs: usize) -> String {
    let mut s = String::from("# Experiment report\n\n");
    let _ = writeln!(
        s,
        "Test Dice (%) averaged over the last {report_epochs} epochs of the kept trajectory.\n"
    );
    s.push_str("| noise setting |");
    for m in &exp.modes {
        let _ = write!(s, " {m} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(exp.modes.len()));
    s.push('\n');
    for &a in &exp.alphas {
        for &b in &exp.betas {
            let _ = write!(s, "| α={a:.1}, β={b:.1} |");
            for &m in &exp.modes {
                let cell = match exp.get(a, b, m).map(|c| &c.result) {
                    Some(Ok(r)) => pct(r.score),
                    _ => "failed".into(),
                };
                let _ = write!(s, " {cell} |");
            }
            s.push('\n');
        }
    }

    let refining: Vec<Mode> = exp.modes.iter().copied().filter(|m| m.refines()).collect();
    if !refining.is_empty() {
        s.push_str("\n## Label refinement\n\n");
        s.push_str("Dice (%) of the refined training labels against the clean labels, with the noisy labels in parentheses.\n\n");
        s.push_str("| noise setting |");
        for m in &refining {
            let _ = write!(s, " {m} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(refining.len()));
        s.push('\n');
        for &a in &exp.alphas {
            for &b in &exp.betas {
                let _ = write!(s, "| α={a:.1}, β={b:.1} |");
                for &m in &refining {
                    let cell = match exp.get(a, b, m).map(|c| &c.result) {
                        Some(Ok(r)) => format!(
                            "{} ({})",
                            r.label_dice_refined.map_or("n/a".into(), pct),
                            pct(r.label_dice_noisy)
                        ),
                        _ => "failed".into(),
                    };
                    let _ = write!(s, " {cell} |");
                }
                s.push('\n');
            }
        }
    }

    let failed: Vec<&CellOutcome> = exp.cells.iter().filter(|c| c.result.is_err()).collect();
    if !failed.is_empty() {
        s.push_str("\n## Failed cells\n\n");
        for c in failed {
            if let Err(e) = &c.result {
                let _ = writeln!(s, "- α={:.1}, β={:.1}, {}: {e}", c.alpha, c.beta, c.mode);
            }
        }
    }
    s
}

/// Runs the sweep and writes `report.md`, per-cell metrics and the resolved
/// configuration under `io.out`.
pub fn cmd_experiment(cfg: &Config) -> Result<String> {
    let out = cfg.required_path("io.out")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_file(&out.join(CONFIG_ECHO), &cfg.echo())?;
    let exp = run_experiment(cfg, Some(&out))?;
    let report = render_report(&exp, cfg.get("train.report_epochs")?);
    write_file(&out.join(REPORT), &report)?;
    let failures = exp.failures();
    if failures > 0 {
        return Err(Error::State(format!(
            "{failures} of {} cells failed; see {}",
            exp.cells.len(),
            out.join(REPORT).display()
        )));
    }
    Ok(report)
}
