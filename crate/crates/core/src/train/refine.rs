use super::select::select_unreliable;
use crate::error::{Error, Result};
use crate::imaging::LabelMap;
use crate::superpixel::{SuperpixelMap, SuperpixelTable};

/// What one refinement pass changed in one label map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RelabelLog {
    /// Superpixels in the unreliable set.
    pub superpixels: usize,
    /// Pixels whose label changed.
    pub pixels_changed: usize,
}

/// Relabels the highest-loss superpixels (at most `floor((1 - R) M)` pixels)
/// with the argmax of the two networks' averaged superpixel probabilities.
/// All other pixels keep their label.
pub fn refine_labels(
    ps1: &SuperpixelTable,
    ps2: &SuperpixelTable,
    losses: &[f64],
    ratio: f64,
    labels: &LabelMap,
    sp: &SuperpixelMap,
) -> Result<(LabelMap, RelabelLog)> {
    let k = sp.num_superpixels();
    if ps1.num_superpixels() != k || ps2.num_superpixels() != k || losses.len() != k {
        return Err(Error::domain("refinement inputs disagree on K"));
    }
    let c_n = labels.num_classes();
    if ps1.num_classes() != c_n || ps2.num_classes() != c_n {
        return Err(Error::domain(
            "refinement inputs disagree on the class count",
        ));
    }
    sp.check_shape(labels.height(), labels.width())?;
    let unreliable = select_unreliable(losses, sp.sizes(), ratio)?;
    let predicted: Vec<u8> = (0..k)
        .map(|j| {
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for c in 0..c_n {
                let p = 0.5 * (ps1.get(c, j) + ps2.get(c, j));
                if p > best_p {
                    best_p = p;
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    let mut changed = 0;
    let data = labels
        .data()
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            let s = sp.index_of(j);
            if unreliable[s] {
                changed += (predicted[s] != y) as usize;
                predicted[s]
            } else {
                y
            }
        })
        .collect();
    let log = RelabelLog {
        superpixels: unreliable.iter().filter(|&&b| b).count(),
        pixels_changed: changed,
    };
    Ok((
        LabelMap::new(labels.height(), labels.width(), c_n, data)?,
        log,
    ))
}
