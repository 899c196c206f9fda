//! Analytic gradients against central finite differences.

use seglab_core::imaging::Image;
use seglab_core::model::{Net, NetConfig};

const EPS: f64 = 1e-5;

fn input(h: usize, w: usize, channels: usize, salt: u64) -> Image {
    let data = (0..channels * h * w)
        .map(|i| (((i as u64 + 1) * (2654435761 + salt)) % 1000) as f64 / 1000.0)
        .collect();
    Image::new(h, w, channels, data).unwrap()
}

fn weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64) * 0.731).sin()).collect()
}

fn scalar_loss(net: &Net, img: &Image, g: &[f64]) -> f64 {
    net.forward(img)
        .unwrap()
        .data()
        .iter()
        .zip(g)
        .map(|(p, w)| p * w)
        .sum()
}

/// Largest `|a - n| / max(|a| + |n|, 1e-8)` over all parameters.
fn max_relative_error(config: NetConfig, seed: u64) -> f64 {
    let img = input(6, 6, config.in_channels, seed);
    let net = Net::init(config, seed).unwrap();
    assert!(net.num_params() <= 500, "{} parameters", net.num_params());
    let g = weights(config.num_classes * 36);
    let (_, cache) = net.forward_cached(&img).unwrap();
    let analytic = net.backward(&cache, &g).unwrap();

    let mut worst = 0.0f64;
    for i in 0..net.num_params() {
        let mut plus = net.clone();
        plus.params_mut()[i] += EPS;
        let mut minus = net.clone();
        minus.params_mut()[i] -= EPS;
        let numeric = (scalar_loss(&plus, &img, &g) - scalar_loss(&minus, &img, &g)) / (2.0 * EPS);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn two_level_net_matches_finite_differences() {
    let config = NetConfig {
        in_channels: 1,
        num_classes: 2,
        depth: 2,
        base_channels: 1,
    };
    let err = max_relative_error(config, 11);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn one_level_three_class_colour_net_matches_finite_differences() {
    let config = NetConfig {
        in_channels: 3,
        num_classes: 3,
        depth: 1,
        base_channels: 2,
    };
    let err = max_relative_error(config, 4);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn bottleneck_only_net_matches_finite_differences() {
    let config = NetConfig {
        in_channels: 1,
        num_classes: 2,
        depth: 0,
        base_channels: 3,
    };
    let err = max_relative_error(config, 2);
    assert!(err < 1e-4, "max relative error {err}");
}
