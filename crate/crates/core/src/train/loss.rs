use crate::error::{Error, Result};
use crate::imaging::{LabelMap, ProbMap};
use crate::superpixel::SuperpixelTable;

/// Probabilities are clamped to at least this value before taking logs.
pub const LOG_EPS: f64 = 1e-12;

#[inline]
fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_EPS).ln()
}

/// Derivative of `clamped_ln`.
#[inline]
fn clamped_ln_grad(p: f64) -> f64 {
    if p > LOG_EPS {
        1.0 / p
    } else {
        0.0
    }
}

/// `-sum_c y(c) ln p(c)`.
pub fn soft_cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    -p.iter()
        .zip(y)
        .map(|(&p, &y)| y * clamped_ln(p))
        .sum::<f64>()
}

/// `KL(p||q) + KL(q||p) = sum_c (p(c) - q(c)) (ln p(c) - ln q(c))`.
pub fn sym_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| (a - b) * (clamped_ln(a) - clamped_ln(b)))
        .sum()
}

/// Per-superpixel joint loss
/// `(1 - lambda) (ce(Ps1, Ys) + ce(Ps2, Ys)) + lambda * symkl(Ps1, Ps2)`.
pub fn superpixel_loss(
    ps1: &SuperpixelTable,
    ps2: &SuperpixelTable,
    ys: &SuperpixelTable,
    lambda: f64,
) -> Result<Vec<f64>> {
    let k = ps1.num_superpixels();
    if ps2.num_superpixels() != k || ys.num_superpixels() != k {
        return Err(Error::domain("superpixel tables disagree on K"));
    }
    if ps2.num_classes() != ps1.num_classes() || ys.num_classes() != ps1.num_classes() {
        return Err(Error::domain(
            "superpixel tables disagree on the class count",
        ));
    }
    Ok((0..k)
        .map(|j| {
            let (a, b, y) = (ps1.column(j), ps2.column(j), ys.column(j));
            (1.0 - lambda) * (soft_cross_entropy(&a, &y) + soft_cross_entropy(&b, &y))
                + lambda * sym_kl(&a, &b)
        })
        .collect())
}

/// Mean pixel loss over the pixels flagged in `mask`, with its gradients
/// with respect to both probability maps (`C x M`, zero on unflagged
/// pixels).
pub fn training_loss_and_grad(
    p1: &ProbMap,
    p2: &ProbMap,
    labels: &LabelMap,
    mask: &[bool],
    lambda: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c_n, m) = (p1.num_classes(), p1.num_pixels());
    if p2.num_classes() != c_n || p2.num_pixels() != m {
        return Err(Error::domain("probability maps differ in shape"));
    }
    if labels.num_pixels() != m || mask.len() != m || labels.num_classes() != c_n {
        return Err(Error::domain(
            "labels or mask do not match the probability maps",
        ));
    }
    let n = mask.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(Error::domain("no pixel selected for training"));
    }
    let scale = 1.0 / n as f64;
    let (a, b) = (p1.data(), p2.data());
    let mut g1 = vec![0.0; c_n * m];
    let mut g2 = vec![0.0; c_n * m];
    let mut total = 0.0;
    for j in (0..m).filter(|&j| mask[j]) {
        let y = labels.data()[j] as usize;
        let mut loss = 0.0;
        for c in 0..c_n {
            let (x1, x2) = (a[c * m + j], b[c * m + j]);
            let (l1, l2) = (clamped_ln(x1), clamped_ln(x2));
            let (d1, d2) = (clamped_ln_grad(x1), clamped_ln_grad(x2));
            loss += lambda * (x1 - x2) * (l1 - l2);
            let mut dg1 = lambda * ((l1 - l2) + (x1 - x2) * d1);
            let mut dg2 = lambda * (-(l1 - l2) - (x1 - x2) * d2);
            if c == y {
                loss -= (1.0 - lambda) * (l1 + l2);
                dg1 -= (1.0 - lambda) * d1;
                dg2 -= (1.0 - lambda) * d2;
            }
            g1[c * m + j] = scale * dg1;
            g2[c * m + j] = scale * dg2;
        }
        total += loss;
    }
    Ok((total * scale, g1, g2))
}
