//! A network pair can fit one clean image.

use seglab_core::harness::{generate_sample, SynthSpec};
use seglab_core::imaging::ProbMap;
use seglab_core::model::{init_pair, sgd_step, NetConfig, SgdState};
use seglab_core::train::training_loss_and_grad;

fn pixel_cross_entropy(p: &ProbMap, labels: &[u8]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(j, &y)| -p.get(y as usize, j).max(1e-12).ln())
        .sum();
    total / labels.len() as f64
}

#[test]
fn two_hundred_steps_fit_a_clean_image() {
    let (img, labels) = generate_sample(&SynthSpec::default(), 3).unwrap();
    let (mut a, mut b) = init_pair(NetConfig::default(), 11, 12).unwrap();
    let mask = vec![true; labels.num_pixels()];
    let mut sa = SgdState::new(0.005, 0.9).unwrap();
    let mut sb = SgdState::new(0.005, 0.9).unwrap();
    for _ in 0..200 {
        let (p1, c1) = a.forward_cached(&img).unwrap();
        let (p2, c2) = b.forward_cached(&img).unwrap();
        let (_, g1, g2) = training_loss_and_grad(&p1, &p2, &labels, &mask, 0.0).unwrap();
        let (d1, d2) = (a.backward(&c1, &g1).unwrap(), b.backward(&c2, &g2).unwrap());
        sgd_step(&mut a, &d1, &mut sa).unwrap();
        sgd_step(&mut b, &d2, &mut sb).unwrap();
    }
    for net in [&a, &b] {
        let p = net.forward(&img).unwrap();
        let ce = pixel_cross_entropy(&p, labels.data());
        assert!(ce < 0.1, "pixel cross-entropy {ce}");
        // forward is a pure function of the parameters and the input
        assert_eq!(p, net.forward(&img).unwrap());
    }
}
