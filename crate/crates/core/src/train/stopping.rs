/// Centered moving average of width `w` (half-width `w / 2`), truncated at
/// both ends of the series.
pub fn smooth(series: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Detects the peak of a loss-gap series. With `n` recorded epochs
/// (`n >= 2w + 1`), training stops at the first `n` for which the smoothed
/// value at epoch `n - w` is strictly greater than each of the `w` smoothed
/// values after it and no smaller than each of the `w` before it. Returns
/// that 1-based epoch.
///
/// The peak must follow a rise: a series that only falls never stops.
pub fn stopping_check(series: &[f64], w: usize) -> Option<usize> {
    let w = w.max(1);
    (2 * w + 1..=series.len()).find_map(|n| peak_at_end(&series[..n], w))
}

/// The check for the newest epoch only.
fn peak_at_end(series: &[f64], w: usize) -> Option<usize> {
    let s = smooth(series, w);
    let at = series.len() - 1 - w;
    let peak = s[at];
    let after = s[at + 1..].iter().all(|&v| peak > v);
    let before = s[at - w..at].iter().all(|&v| peak >= v);
    (after && before).then_some(at + 1)
}

/// Per-epoch loss gaps of one training stage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossGapSeries {
    raw: Vec<f64>,
    window: usize,
    stop_epoch: Option<usize>,
}

impl LossGapSeries {
    pub fn new(window: usize) -> Self {
        Self {
            raw: Vec::new(),
            window,
            stop_epoch: None,
        }
    }

    /// Records one epoch and returns the stop epoch once a peak has been
    /// detected.
    pub fn push(&mut self, gap: f64) -> Option<usize> {
        self.raw.push(gap);
        let w = self.window.max(1);
        if self.stop_epoch.is_none() && self.raw.len() > 2 * w {
            self.stop_epoch = peak_at_end(&self.raw, w);
        }
        self.stop_epoch
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn smoothed(&self) -> Vec<f64> {
        smooth(&self.raw, self.window)
    }

    pub fn stop_epoch(&self) -> Option<usize> {
        self.stop_epoch
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}
