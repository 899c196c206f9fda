//! Acceptance criteria 1 to 11. Each test prints one `PASS`/`FAIL` line to
//! stdout (visible even when output capture is on) and then asserts.
//!
//! The tests take a shared lock so that the runtime measurements of
//! criteria 6 and 11 are not disturbed by other tests in this binary.
//! Set `SEGLAB_FULL_GRID=1` to make criterion 11 run the whole default grid
//! instead of bounding it from measured per-epoch costs.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seglab_core::harness::{generate_sample, run_experiment, Config, SynthSpec};
use seglab_core::imaging::{foreground_classes, mean_dice, Image, LabelMap, ProbMap};
use seglab_core::model::{Net, NetConfig};
use seglab_core::noise::corrupt_dataset;
use seglab_core::superpixel::{
    pool_probabilities, slic, undersegmentation_error, SlicParams, SuperpixelMap,
};
use seglab_core::train::{
    loss_gap, run_full, select_small_loss, training_loss_and_grad, Dataset, Mode, RunResult,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {n:>2} {tag} {name}: {detail}\n");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

const SEEDS: [u64; 3] = [0, 1, 2];

/// The harness defaults with a given master seed and noise setting.
fn desk_config(seed: u64, alpha: f64, beta: f64) -> Config {
    let mut cfg = Config::default();
    cfg.set("seed", &seed.to_string()).unwrap();
    cfg.set("noise.alpha", &alpha.to_string()).unwrap();
    cfg.set("noise.beta", &beta.to_string()).unwrap();
    cfg
}

/// The default synthetic set for `seed`, corrupted as `cfg` says.
fn desk_dataset(cfg: &Config) -> Dataset {
    let spec = cfg.synth_spec().unwrap();
    let samples: Vec<(Image, LabelMap)> = (0..spec.n_images)
        .map(|i| generate_sample(&spec, i).unwrap())
        .collect();
    let (train, test) = samples.split_at(spec.n_train());
    let clean: Vec<LabelMap> = train.iter().map(|s| s.1.clone()).collect();
    let (noisy, _) = corrupt_dataset(&clean, &cfg.noise_spec().unwrap()).unwrap();
    let params = cfg.slic_params().unwrap();
    Dataset {
        num_classes: spec.num_classes,
        train_images: train.iter().map(|s| s.0.clone()).collect(),
        train_labels: noisy,
        train_clean: Some(clean),
        superpixels: train.iter().map(|s| slic(&s.0, &params).unwrap()).collect(),
        test_images: test.iter().map(|s| s.0.clone()).collect(),
        test_labels: test.iter().map(|s| s.1.clone()).collect(),
    }
}

#[test]
fn c01_gradient_correctness() {
    let _g = serial();
    let t = Instant::now();
    let config = NetConfig {
        in_channels: 1,
        num_classes: 2,
        depth: 2,
        base_channels: 1,
    };
    let net = Net::init(config, 5).unwrap();
    let n_params = net.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = Image::new(6, 6, 1, (0..36).map(|_| rng.random::<f64>()).collect()).unwrap();
    let labels =
        LabelMap::new(6, 6, 2, (0..36).map(|_| rng.random_range(0..2u8)).collect()).unwrap();
    let other = {
        let p: Vec<f64> = (0..36).map(|_| rng.random_range(0.05..0.95)).collect();
        let data = [p.iter().map(|v| 1.0 - v).collect::<Vec<_>>(), p].concat();
        ProbMap::new(2, 6, 6, data).unwrap()
    };
    let mask: Vec<bool> = (0..36).map(|j| j % 5 != 0).collect();
    let loss = |net: &Net| {
        let p = net.forward(&img).unwrap();
        training_loss_and_grad(&p, &other, &labels, &mask, 0.65)
            .unwrap()
            .0
    };
    let (p, cache) = net.forward_cached(&img).unwrap();
    let (_, g1, _) = training_loss_and_grad(&p, &other, &labels, &mask, 0.65).unwrap();
    let analytic = net.backward(&cache, &g1).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..n_params {
        let mut plus = net.clone();
        plus.params_mut()[i] += eps;
        let mut minus = net.clone();
        minus.params_mut()[i] -= eps;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        let a = analytic[i];
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient correctness",
        n_params <= 500 && worst < 1e-4 && secs < 10.0,
        &format!(
            "{n_params} parameters, max relative error {worst:.2e} (< 1e-4), {secs:.2} s (< 10 s)"
        ),
    );
}

#[test]
fn c02_pooling_conserves_mass() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (h, w) = (rng.random_range(8..32), rng.random_range(8..32));
        let c = rng.random_range(2..5);
        let img = Image::new(h, w, 1, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap();
        let k = rng.random_range(1..=(h * w / 4));
        let sp = slic(
            &img,
            &SlicParams {
                k_target: k,
                ..SlicParams::default()
            },
        )
        .unwrap();
        let mut data = vec![0.0; c * h * w];
        for j in 0..h * w {
            let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            for (cls, v) in raw.iter().enumerate() {
                data[cls * h * w + j] = v / total;
            }
        }
        let p = ProbMap::new(c, h, w, data).unwrap();
        let table = pool_probabilities(&p, &sp).unwrap();
        for cls in 0..c {
            let pooled: f64 = (0..table.num_superpixels())
                .map(|s| table.sizes()[s] as f64 * table.get(cls, s))
                .sum();
            let direct: f64 = (0..h * w).map(|j| p.get(cls, j)).sum();
            worst = worst.max((pooled - direct).abs());
        }
    }
    verdict(
        2,
        "superpixel pooling conservation",
        worst <= 1e-4,
        &format!("50 random pairs, max per-class deviation {worst:.2e} (<= 1e-4)"),
    );
}

/// Brute-force minimum of the selected loss sum under the pixel constraint.
fn brute_force(losses: &[f64], sizes: &[usize], need: usize) -> f64 {
    let k = losses.len();
    (0u32..1 << k)
        .filter(|m| {
            (0..k)
                .filter(|i| m >> i & 1 == 1)
                .map(|i| sizes[i])
                .sum::<usize>()
                >= need
        })
        .map(|m| {
            (0..k)
                .filter(|i| m >> i & 1 == 1)
                .map(|i| losses[i])
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn c03_greedy_selection_is_near_optimal() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut greedy_total, mut opt_total, mut worst, mut over) = (0.0, 0.0, 0.0f64, 0);
    let (mut constraint_ok, mut prefix_ok) = (true, true);
    for _ in 0..200 {
        let k = rng.random_range(1..=12);
        let losses: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        // near-equal sizes, as SLIC produces
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(90..=110)).collect();
        let ratio = rng.random_range(0.05..=1.0);
        let sel = select_small_loss(&losses, &sizes, ratio).unwrap();
        let m: usize = sizes.iter().sum();
        let need = (ratio * m as f64 - 1e-9).ceil() as usize;
        let count: usize = (0..k).filter(|&i| sel.selected[i]).map(|i| sizes[i]).sum();
        constraint_ok &=
            count >= need && count == sel.selected_pixels && sel.required_pixels == need;
        let inside = (0..k)
            .filter(|&i| sel.selected[i])
            .map(|i| losses[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let outside = (0..k)
            .filter(|&i| !sel.selected[i])
            .map(|i| losses[i])
            .fold(f64::INFINITY, f64::min);
        prefix_ok &= inside <= outside;
        let g: f64 = (0..k).filter(|&i| sel.selected[i]).map(|i| losses[i]).sum();
        let opt = brute_force(&losses, &sizes, need);
        greedy_total += g;
        opt_total += opt;
        let gap = (g - opt) / opt.max(1e-12);
        worst = worst.max(gap);
        over += (gap > 0.05) as usize;
    }
    let gap = greedy_total / opt_total - 1.0;
    verdict(
        3,
        "greedy selection optimality",
        gap <= 0.05 && constraint_ok && prefix_ok,
        &format!(
            "200 instances, total loss gap {:.2}% (<= 5%), worst single instance {:.1}%, {over} instances above 5%, \
             constraint {constraint_ok}, prefix {prefix_ok}",
            100.0 * gap,
            100.0 * worst
        ),
    );
}

#[test]
fn c04_loss_gap_sanity() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut min_gap, mut max_shift) = (f64::INFINITY, 0.0f64);
    for _ in 0..1000 {
        let k = rng.random_range(1..60);
        let losses: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..200)).collect();
        let ratio = rng.random_range(0.01..=1.0);
        let sel = select_small_loss(&losses, &sizes, ratio).unwrap();
        let g = loss_gap(&losses, &sel.selected);
        min_gap = min_gap.min(g);
        let c = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
        let sel2 = select_small_loss(&shifted, &sizes, ratio).unwrap();
        max_shift = max_shift.max((loss_gap(&shifted, &sel2.selected) - g).abs());
    }
    verdict(
        4,
        "loss gap sanity",
        min_gap >= 0.0 && max_shift < 1e-9,
        &format!(
            "1000 trials, min G_l {min_gap:.3e} (>= 0), max shift change {max_shift:.2e} (< 1e-9)"
        ),
    );
}

#[test]
fn c05_noise_calibration() {
    let _g = serial();
    let mut per_seed = Vec::new();
    for seed in SEEDS {
        let cfg = desk_config(seed, 0.7, 0.7);
        let spec = cfg.synth_spec().unwrap();
        let clean: Vec<LabelMap> = (0..spec.n_train())
            .map(|i| generate_sample(&spec, i).unwrap().1)
            .collect();
        let (noisy, _) = corrupt_dataset(&clean, &cfg.noise_spec().unwrap()).unwrap();
        let fg = foreground_classes(spec.num_classes);
        let d: f64 = noisy
            .iter()
            .zip(&clean)
            .map(|(a, b)| mean_dice(a, b, &fg).unwrap())
            .sum::<f64>()
            / clean.len() as f64;
        per_seed.push(100.0 * d);
    }
    let mean = per_seed.iter().sum::<f64>() / 3.0;
    verdict(
        5,
        "noise calibration",
        (69.0..=77.0).contains(&mean),
        &format!("alpha=0.7 beta=0.7, 200 masks, label dice per seed {per_seed:.2?}, mean {mean:.2} (in [69, 77])"),
    );
}

#[test]
fn c06_label_refinement_efficacy() {
    let _g = serial();
    let t = Instant::now();
    let mut gains = Vec::new();
    for seed in SEEDS {
        let mut cfg = desk_config(seed, 0.5, 0.5);
        cfg.set("train.max_iterations", "1").unwrap();
        let data = desk_dataset(&cfg);
        let r = run_full(&data, &cfg.train_config().unwrap(), Mode::Ours).unwrap();
        let it = &r.iterations[0];
        gains.push(100.0 * (it.label_dice_after.unwrap() - it.label_dice_before.unwrap()));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        6,
        "label refinement efficacy",
        gains.iter().all(|&g| g >= 2.0) && secs < 600.0,
        &format!("alpha=0.5 beta=0.5, refined minus noisy label dice per seed {gains:.2?} (each >= 2), {secs:.0} s (< 600 s)"),
    );
}

struct Timed {
    result: RunResult,
    secs: f64,
}

impl Timed {
    fn epochs(&self) -> usize {
        self.result.rows.len()
    }
}

/// Per seed: ours, baseline and pixel_unit at alpha = beta = 0.7.
fn robustness_runs() -> &'static Vec<[Timed; 3]> {
    static RUNS: OnceLock<Vec<[Timed; 3]>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let cfg = desk_config(seed, 0.7, 0.7);
                let data = desk_dataset(&cfg);
                let tc = cfg.train_config().unwrap();
                [Mode::Ours, Mode::Baseline, Mode::PixelUnit].map(|mode| {
                    let t = Instant::now();
                    let result = run_full(&data, &tc, mode).unwrap();
                    Timed {
                        result,
                        secs: t.elapsed().as_secs_f64(),
                    }
                })
            })
            .collect()
    })
}

#[test]
fn c07_robustness_effect() {
    let _g = serial();
    let runs = robustness_runs();
    let score = |m: usize| {
        runs.iter()
            .map(|r| 100.0 * r[m].result.score)
            .collect::<Vec<_>>()
    };
    let (ours, base, pixel) = (score(0), score(1), score(2));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let vs_base = mean(&ours) - mean(&base);
    let vs_pixel = mean(&ours) - mean(&pixel);
    verdict(
        7,
        "robustness effect",
        vs_base >= 3.0 && vs_pixel >= 1.0,
        &format!(
            "alpha=0.7 beta=0.7, test dice ours {ours:.2?} baseline {base:.2?} pixel_unit {pixel:.2?}; \
             ours - baseline {vs_base:.2} (>= 3), ours - pixel_unit {vs_pixel:.2} (>= 1)"
        ),
    );
}

#[test]
fn c08_stopping_quality() {
    let _g = serial();
    let mut details = Vec::new();
    let mut pass = true;
    for seed in SEEDS {
        let mut cfg = desk_config(seed, 0.7, 0.7);
        cfg.set("train.max_epochs", "100").unwrap();
        cfg.set("train.max_iterations", "1").unwrap();
        cfg.set("train.halt_on_stop", "false").unwrap();
        let data = desk_dataset(&cfg);
        let r = run_full(&data, &cfg.train_config().unwrap(), Mode::Ours).unwrap();
        let best = r
            .rows
            .iter()
            .map(|row| row.test_mean_dice)
            .fold(f64::NEG_INFINITY, f64::max);
        match r.iterations[0].stop_epoch {
            Some(e) => {
                let at = r.rows[e - 1].test_mean_dice;
                let shortfall = 100.0 * (best - at);
                pass &= shortfall <= 1.5;
                details.push(format!(
                    "seed {seed}: stop epoch {e}, {:.2} vs best {:.2}",
                    100.0 * at,
                    100.0 * best
                ));
            }
            None => {
                pass = false;
                details.push(format!(
                    "seed {seed}: no stop in 100 epochs, best {:.2}",
                    100.0 * best
                ));
            }
        }
    }
    verdict(
        8,
        "stopping quality",
        pass,
        &format!("{} (each within 1.5)", details.join("; ")),
    );
}

#[test]
fn c09_superpixel_quality() {
    let _g = serial();
    let spec = SynthSpec {
        n_images: 4,
        height: 256,
        width: 256,
        seed: 9,
        ..SynthSpec::default()
    };
    let params = SlicParams {
        k_target: 800,
        ..SlicParams::default()
    };
    let (mut worst, mut invariants) = (0.0f64, true);
    for i in 0..spec.n_images {
        let (img, gt) = generate_sample(&spec, i).unwrap();
        let sp: SuperpixelMap = slic(&img, &params).unwrap();
        worst = worst.max(undersegmentation_error(&sp, &gt).unwrap());
        let k = sp.num_superpixels();
        invariants &= sp.ids().iter().all(|&id| id >= 1 && id as usize <= k)
            && sp.sizes().iter().all(|&n| n > 0)
            && sp.sizes().iter().sum::<usize>() == sp.num_pixels()
            && sp.is_connected();
    }
    let (bar, expected) = (worst < 0.32, worst < 0.1);
    verdict(
        9,
        "superpixel quality",
        bar && expected && invariants,
        &format!("K=800 on 256x256, max undersegmentation error {worst:.4} (< 0.32, expected < 0.1), invariants {invariants}"),
    );
}

fn seglab_experiment(out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["experiment", "--out", out.to_str().unwrap()];
    args.extend(extra);
    Command::new(env!("CARGO_BIN_EXE_seglab"))
        .args(&args)
        .env_remove("SEGLAB_SEED")
        .output()
        .unwrap()
}

#[test]
fn c10_end_to_end_determinism() {
    let _g = serial();
    let tmp = tempfile::tempdir().unwrap();
    let small = [
        "--seed",
        "3",
        "--data.n_images",
        "30",
        "--data.height",
        "32",
        "--data.width",
        "32",
        "--k",
        "30",
        "--max-epochs",
        "8",
        "--train.stop_window",
        "2",
        "--experiment.alphas",
        "0.5,1.0",
        "--experiment.betas",
        "0.7",
        "--modes",
        "baseline,ours",
        "--jobs",
        "2",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ok = seglab_experiment(&a, &small).status.success()
        && seglab_experiment(&b, &small).status.success();
    let read = |p: &Path| std::fs::read(p.join("report.md")).unwrap_or_default();
    let (ra, rb) = (read(&a), read(&b));
    let cell = "cells/a0.50_b0.70/ours/metrics.csv";
    let same_metrics = std::fs::read(a.join(cell)).ok() == std::fs::read(b.join(cell)).ok();
    verdict(
        10,
        "end-to-end determinism",
        ok && !ra.is_empty() && ra == rb && same_metrics,
        &format!(
            "two `seglab experiment` runs, seed 3, 2 cells x 2 modes: reports {} ({} bytes), metrics {}",
            if ra == rb { "identical" } else { "differ" },
            ra.len(),
            if same_metrics { "identical" } else { "differ" }
        ),
    );
}

#[test]
fn c11_desk_scale_budget() {
    let _g = serial();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let budget = Duration::from_secs(30 * 60);
    if std::env::var("SEGLAB_FULL_GRID").is_ok_and(|v| v == "1") {
        let t = Instant::now();
        let mut cfg = Config::default();
        cfg.set("experiment.jobs", &cores.min(4).to_string())
            .unwrap();
        let exp = run_experiment(&cfg, None).unwrap();
        let wall = t.elapsed();
        // a machine with fewer than 4 cores is scaled to 4
        let scaled = wall.mul_f64(cores.min(4) as f64 / 4.0);
        verdict(
            11,
            "desk-scale budget",
            exp.failures() == 0 && scaled < budget,
            &format!(
                "full default grid on {cores} core(s): {:.1} min wall, {:.1} min scaled to 4 cores (< 30)",
                wall.as_secs_f64() / 60.0,
                scaled.as_secs_f64() / 60.0
            ),
        );
        return;
    }
    let cfg = Config::default();
    let t = Instant::now();
    desk_dataset(&desk_config(0, 0.7, 0.7));
    let setup = t.elapsed().as_secs_f64();
    let runs = &robustness_runs()[0];
    let per_epoch = |r: &Timed| r.secs / r.epochs() as f64;
    let (ours, base) = (per_epoch(&runs[0]), per_epoch(&runs[1]));
    let max_epochs: f64 = cfg.get("train.max_epochs").unwrap();
    let max_iter: f64 = cfg.get("train.max_iterations").unwrap();
    let cells = (cfg.list::<f64>("experiment.alphas").unwrap().len()
        * cfg.list::<f64>("experiment.betas").unwrap().len()) as f64;
    // every ours run at the iteration cap, every baseline run at the epoch cap
    let worst_cpu = cells * (max_iter * max_epochs * ours + max_epochs * base);
    let bound = setup + worst_cpu / 4.0;
    let observed_cpu = cells * (runs[0].secs + runs[1].secs);
    verdict(
        11,
        "desk-scale budget",
        bound < budget.as_secs_f64(),
        &format!(
            "measured {ours:.2} s/epoch (ours) and {base:.2} s/epoch (baseline) on one core; worst-case grid \
             {:.1} min on 4 cores (< 30), estimate from the alpha=0.7 beta=0.7 cell {:.1} min",
            bound / 60.0,
            (setup + observed_cpu / 4.0) / 60.0
        ),
    );
}
