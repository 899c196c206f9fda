//! Corruption strength against the noise level.

use seglab_core::harness::{generate_sample, SynthSpec};
use seglab_core::imaging::{mean_dice, LabelMap};
use seglab_core::noise::{corrupt_dataset, NoiseSpec};

fn masks(seed: u64) -> Vec<LabelMap> {
    let spec = SynthSpec {
        n_images: 120,
        seed,
        ..SynthSpec::default()
    };
    (0..spec.n_images)
        .map(|i| generate_sample(&spec, i).unwrap().1)
        .collect()
}

fn dataset_dice(clean: &[LabelMap], spec: &NoiseSpec) -> f64 {
    let (noisy, _) = corrupt_dataset(clean, spec).unwrap();
    let total: f64 = noisy
        .iter()
        .zip(clean)
        .map(|(n, c)| mean_dice(n, c, &[1]).unwrap())
        .sum();
    total / clean.len() as f64
}

#[test]
fn dice_falls_as_beta_grows() {
    let betas = [0.1, 0.3, 0.5, 0.7, 0.9];
    for alpha in [0.5, 1.0] {
        let mut mean = vec![0.0; betas.len()];
        for seed in 0..3 {
            let clean = masks(seed);
            for (b, &beta) in betas.iter().enumerate() {
                let spec = NoiseSpec {
                    alpha,
                    beta,
                    seed: 100 + seed,
                    ..NoiseSpec::default()
                };
                mean[b] += dataset_dice(&clean, &spec) / 3.0;
            }
        }
        for pair in mean.windows(2) {
            assert!(pair[1] < pair[0], "alpha {alpha}: dice by beta {mean:?}");
        }
    }
}
