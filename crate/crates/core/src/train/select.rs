use crate::error::{Error, Result};

/// Small-loss superpixels of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionResult {
    /// `selected[k]` for every superpixel index `k` (zero-based).
    pub selected: Vec<bool>,
    /// Pixels covered by the selected superpixels.
    pub selected_pixels: usize,
    /// `ceil(R * M)`.
    pub required_pixels: usize,
}

impl SelectionResult {
    pub fn selected_ids(&self) -> Vec<usize> {
        (0..self.selected.len())
            .filter(|&k| self.selected[k])
            .collect()
    }

    pub fn num_selected(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }
}

fn check_inputs(losses: &[f64], sizes: &[usize], ratio: f64) -> Result<usize> {
    if losses.len() != sizes.len() || losses.is_empty() {
        return Err(Error::domain(
            "losses and sizes must be nonempty and of equal length",
        ));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::domain(format!(
            "selection ratio {ratio} outside (0,1]"
        )));
    }
    if let Some(l) = losses.iter().find(|l| l.is_nan()) {
        return Err(Error::Numeric(format!("superpixel loss {l}")));
    }
    Ok(sizes.iter().sum())
}

/// `ceil(R * M)`, robust to the rounding error of `R * M`.
fn required(ratio: f64, m: usize) -> usize {
    ((ratio * m as f64 - 1e-9).ceil().max(0.0) as usize).min(m)
}

/// Superpixel indices sorted by ascending loss, lower index first on ties.
fn ascending(losses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    order
}

/// Greedy small-loss selection: the shortest ascending-loss prefix covering
/// at least `ceil(R * M)` pixels.
pub fn select_small_loss(losses: &[f64], sizes: &[usize], ratio: f64) -> Result<SelectionResult> {
    let m = check_inputs(losses, sizes, ratio)?;
    let need = required(ratio, m);
    let mut selected = vec![false; losses.len()];
    let mut count = 0;
    for k in ascending(losses) {
        if count >= need {
            break;
        }
        selected[k] = true;
        count += sizes[k];
    }
    Ok(SelectionResult {
        selected,
        selected_pixels: count,
        required_pixels: need,
    })
}

/// Unreliable superpixels: the longest descending-loss prefix (higher index
/// first on ties) covering at most `floor((1 - R) * M)` pixels. Disjoint
/// from [`select_small_loss`] at the same ratio.
pub fn select_unreliable(losses: &[f64], sizes: &[usize], ratio: f64) -> Result<Vec<bool>> {
    let m = check_inputs(losses, sizes, ratio)?;
    // M - ceil(R M) = floor((1 - R) M)
    let budget = m - required(ratio, m);
    let mut out = vec![false; losses.len()];
    let mut count = 0;
    for k in ascending(losses).into_iter().rev() {
        if count + sizes[k] > budget {
            break;
        }
        out[k] = true;
        count += sizes[k];
    }
    Ok(out)
}

/// Mean loss of the excluded superpixels minus mean loss of the selected
/// ones; zero when either side is empty.
pub fn loss_gap(losses: &[f64], selected: &[bool]) -> f64 {
    let (mut s_sum, mut s_n, mut u_sum, mut u_n) = (0.0, 0usize, 0.0, 0usize);
    for (&l, &sel) in losses.iter().zip(selected) {
        if sel {
            s_sum += l;
            s_n += 1;
        } else {
            u_sum += l;
            u_n += 1;
        }
    }
    if s_n == 0 || u_n == 0 {
        return 0.0;
    }
    u_sum / u_n as f64 - s_sum / s_n as f64
}
