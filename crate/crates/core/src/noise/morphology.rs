//! Binary morphology with a Euclidean disk structuring element, computed
//! through an exact squared distance transform.

const FAR: f64 = 1e20;

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// (Felzenszwalb & Huttenlocher lower-envelope transform). `FAR`-ish values
/// when there is none.
pub(crate) fn squared_distance(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        transform_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        transform_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Integer disk radius used for a requested real radius.
pub fn disk_radius(r: f64) -> usize {
    let r = if r.is_finite() { r.max(0.0) } else { 0.0 };
    (r.round() as usize).max(1)
}

/// Union of disks of `radius` stamped at every `true` pixel.
pub fn dilate(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    if !mask.iter().any(|&b| b) {
        return mask.to_vec();
    }
    let limit = (radius * radius) as f64;
    squared_distance(mask, h, w)
        .iter()
        .map(|&d| d <= limit)
        .collect()
}

/// Pixels whose whole disk lies in the mask. Out-of-frame pixels do not
/// erode, so `erode(A) = !dilate(!A)` holds exactly.
pub fn erode(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let background: Vec<bool> = mask.iter().map(|&b| !b).collect();
    if !background.iter().any(|&b| b) {
        return mask.to_vec();
    }
    let limit = (radius * radius) as f64;
    squared_distance(&background, h, w)
        .iter()
        .zip(mask)
        .map(|(&d, &m)| m && d > limit)
        .collect()
}

/// Index of the mask pixel farthest from the background (first in scan
/// order on ties), or `None` for an empty mask.
pub fn innermost_pixel(mask: &[bool], h: usize, w: usize) -> Option<usize> {
    let background: Vec<bool> = mask.iter().map(|&b| !b).collect();
    let dist = squared_distance(&background, h, w);
    let mut best: Option<usize> = None;
    for (p, &m) in mask.iter().enumerate() {
        if m && best.is_none_or(|b| dist[p] > dist[b]) {
            best = Some(p);
        }
    }
    best
}
