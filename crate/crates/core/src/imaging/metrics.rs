use super::LabelMap;
use crate::error::{Error, Result};

/// Dice overlap `2|A∩B| / (|A|+|B|)` of the class-`class` pixel sets.
///
/// Two empty sets score 1.0.
pub fn dice(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<f64> {
    if !pred.same_shape(gt.height(), gt.width()) {
        return Err(Error::domain(format!(
            "shape mismatch: {}x{} vs {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    if class as usize >= pred.num_classes().max(gt.num_classes()) {
        return Err(Error::domain(format!("class {class} out of range")));
    }
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let in_a = p == class;
        let in_b = g == class;
        a += in_a as usize;
        b += in_b as usize;
        both += (in_a && in_b) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

/// Arithmetic mean of [`dice`] over `classes`.
pub fn mean_dice(pred: &LabelMap, gt: &LabelMap, classes: &[u8]) -> Result<f64> {
    if classes.is_empty() {
        return Err(Error::domain("mean dice needs at least one class"));
    }
    let mut sum = 0.0;
    for &c in classes {
        sum += dice(pred, gt, c)?;
    }
    Ok(sum / classes.len() as f64)
}

/// Foreground classes `1..num_classes`.
pub fn foreground_classes(num_classes: usize) -> Vec<u8> {
    (1..num_classes as u8).collect()
}
