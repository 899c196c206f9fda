use super::SuperpixelMap;
use crate::error::{Error, Result};
use crate::imaging::LabelMap;

/// Fraction of a superpixel that must overlap a segment to count as leaking
/// into it.
const OVERLAP_FRACTION: f64 = 0.05;

/// Undersegmentation error of `sp` against the groundtruth segments of `gt`:
///
/// `(sum_g sum_{k : |k ∩ g| > 0.05 |k|} |k|  -  M) / M`
///
/// Segments are the class regions of `gt`.
pub fn undersegmentation_error(sp: &SuperpixelMap, gt: &LabelMap) -> Result<f64> {
    if sp.height() != gt.height() || sp.width() != gt.width() {
        return Err(Error::domain("superpixel and groundtruth shapes differ"));
    }
    let (k_n, c_n) = (sp.num_superpixels(), gt.num_classes());
    let mut overlap = vec![0usize; k_n * c_n];
    for (j, &g) in gt.data().iter().enumerate() {
        overlap[sp.index_of(j) * c_n + g as usize] += 1;
    }
    let mut total = 0usize;
    for k in 0..k_n {
        let size = sp.sizes()[k];
        for c in 0..c_n {
            if overlap[k * c_n + c] as f64 > OVERLAP_FRACTION * size as f64 {
                total += size;
            }
        }
    }
    let m = sp.num_pixels();
    Ok((total as f64 - m as f64) / m as f64)
}
