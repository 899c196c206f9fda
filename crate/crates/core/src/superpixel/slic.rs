//! Simple linear iterative clustering.
//!
//! Pixels are clustered by local k-means in a joint feature + position space.
//! Features are CIE-lab for colour input and the 3x3 median intensity for
//! grayscale input, which suppresses pixel noise without blurring step
//! edges. All features are expressed on the conventional `[0, 100]` scale so that the
//! usual compactness values keep their meaning.

use super::SuperpixelMap;
use crate::error::{Error, Result};
use crate::imaging::{rgb_to_cielab, Image};

const FEATURE_SCALE: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SlicParams {
    /// Requested number of superpixels.
    pub k_target: usize,
    /// Weight `m` of the spatial term relative to the feature term.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k_target: 100,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    x: f64,
    y: f64,
    f: [f64; 3],
}

fn features(img: &Image) -> Result<Vec<[f64; 3]>> {
    let m = img.num_pixels();
    let mut out = vec![[0.0; 3]; m];
    match img.channels() {
        3 => {
            let lab = rgb_to_cielab(img)?;
            for (j, f) in out.iter_mut().enumerate() {
                for (c, v) in f.iter_mut().enumerate() {
                    *v = lab.data()[c * m + j] * FEATURE_SCALE;
                }
            }
        }
        _ => {
            let (h, w) = (img.height(), img.width());
            let ch = img.channel(0);
            let mut win = Vec::with_capacity(9);
            for y in 0..h {
                for x in 0..w {
                    win.clear();
                    for yy in y.saturating_sub(1)..(y + 2).min(h) {
                        win.extend_from_slice(
                            &ch[yy * w + x.saturating_sub(1)..yy * w + (x + 2).min(w)],
                        );
                    }
                    win.sort_unstable_by(f64::total_cmp);
                    out[y * w + x][0] = win[win.len() / 2] * FEATURE_SCALE;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn feature_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

fn gradient(feat: &[[f64; 3]], h: usize, w: usize, x: usize, y: usize) -> f64 {
    let at = |xx: usize, yy: usize| &feat[yy * w + xx];
    let dx = feature_dist(at((x + 1).min(w - 1), y), at(x.saturating_sub(1), y));
    let dy = feature_dist(at(x, (y + 1).min(h - 1)), at(x, y.saturating_sub(1)));
    dx * dx + dy * dy
}

/// Grid of `nx x ny` cells with aspect close to the image and `nx * ny`
/// close to `k`.
fn grid_shape(k: usize, h: usize, w: usize) -> (usize, usize) {
    let nx = ((k as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w.min(k));
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
    (nx, ny)
}

/// Partitions `img` into roughly `k_target` connected superpixels.
pub fn slic(img: &Image, params: &SlicParams) -> Result<SuperpixelMap> {
    let (h, w) = (img.height(), img.width());
    let m = h * w;
    if params.k_target == 0 || params.k_target > m {
        return Err(Error::domain(format!(
            "k_target {} outside 1..={m}",
            params.k_target
        )));
    }
    if params.iterations == 0 {
        return Err(Error::domain("slic needs at least one iteration"));
    }
    if !(params.compactness >= 0.0 && params.compactness.is_finite()) {
        return Err(Error::domain("compactness must be finite and non-negative"));
    }

    let feat = features(img)?;
    let step = (m as f64 / params.k_target as f64).sqrt();
    let (nx, ny) = grid_shape(params.k_target, h, w);
    let (cell_w, cell_h) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let (cx, cy) = ((gx as f64 + 0.5) * cell_w, (gy as f64 + 0.5) * cell_h);
            let (px, py) = ((cx as usize).min(w - 1), (cy as usize).min(h - 1));
            let mut center = Center {
                x: cx,
                y: cy,
                f: feat[py * w + px],
            };
            if step >= 3.0 {
                let mut best = gradient(&feat, h, w, px, py);
                for yy in py.saturating_sub(1)..(py + 2).min(h) {
                    for xx in px.saturating_sub(1)..(px + 2).min(w) {
                        let g = gradient(&feat, h, w, xx, yy);
                        if g < best {
                            best = g;
                            center = Center {
                                x: xx as f64 + 0.5,
                                y: yy as f64 + 0.5,
                                f: feat[yy * w + xx],
                            };
                        }
                    }
                }
            }
            centers.push(center);
        }
    }

    let spatial_weight = params.compactness / step;
    let radius = step.max(cell_w).max(cell_h).ceil() as isize;
    let mut labels = vec![u32::MAX; m];
    let mut dist = vec![f64::INFINITY; m];

    for _ in 0..params.iterations {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.floor() as isize, c.y.floor() as isize);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius).min(h as isize - 1)) as usize;
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius).min(w as isize - 1)) as usize;
            for y in y0..=y1 {
                let dy = y as f64 + 0.5 - c.y;
                for x in x0..=x1 {
                    let p = y * w + x;
                    let dx = x as f64 + 0.5 - c.x;
                    let d =
                        feature_dist(&feat[p], &c.f) + spatial_weight * (dx * dx + dy * dy).sqrt();
                    // strict: the lower id keeps exact ties
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }

        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let a = &mut acc[l as usize];
            a[0] += (p % w) as f64 + 0.5;
            a[1] += (p / w) as f64 + 0.5;
            a[2] += feat[p][0];
            a[3] += feat[p][1];
            a[4] += feat[p][2];
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                let n = a[5];
                *c = Center {
                    x: a[0] / n,
                    y: a[1] / n,
                    f: [a[2] / n, a[3] / n, a[4] / n],
                };
            }
        }
    }

    let min_size = ((step * step / 4.0).floor() as usize).max(1);
    let ids = enforce_connectivity(&labels, h, w, min_size);
    let k = ids.iter().copied().max().unwrap_or(1) as usize;
    SuperpixelMap::new(h, w, k, ids)
}

/// Splits labels into 4-connected components, keeps the largest component of
/// each label when it has at least `min_size` pixels, and merges every other
/// component into the largest adjacent kept region. Returns ids `1..=K` in
/// order of first appearance.
fn enforce_connectivity(labels: &[u32], h: usize, w: usize, min_size: usize) -> Vec<u32> {
    let m = labels.len();
    let mut comp = vec![usize::MAX; m];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut comp_label = Vec::new();
    let mut stack = Vec::new();
    for start in 0..m {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = members.len();
        let label = labels[start];
        let mut pixels = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (y, x) = (p / w, p % w);
            let neighbours = [
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
            ];
            for q in neighbours.into_iter().flatten() {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        members.push(pixels);
        comp_label.push(label);
    }

    let n = members.len();
    let mut keep = vec![false; n];
    let mut largest: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for c in 0..n {
        if comp_label[c] == u32::MAX {
            continue;
        }
        let entry = largest.entry(comp_label[c]).or_insert(c);
        if members[c].len() > members[*entry].len() {
            *entry = c;
        }
    }
    for &c in largest.values() {
        if members[c].len() >= min_size {
            keep[c] = true;
        }
    }
    if !keep.iter().any(|&k| k) {
        let biggest = (0..n)
            .max_by_key(|&c| (members[c].len(), std::cmp::Reverse(c)))
            .unwrap_or(0);
        keep[biggest] = true;
    }

    // owner[c]: the kept component c has been merged into (itself if kept)
    let mut owner: Vec<Option<usize>> = (0..n).map(|c| keep[c].then_some(c)).collect();
    let mut size: Vec<usize> = members.iter().map(Vec::len).collect();
    loop {
        let mut pending = false;
        for c in 0..n {
            if owner[c].is_some() {
                continue;
            }
            let mut best: Option<usize> = None;
            for &p in &members[c] {
                let (y, x) = (p / w, p % w);
                let neighbours = [
                    (y > 0).then(|| p - w),
                    (y + 1 < h).then(|| p + w),
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                ];
                for q in neighbours.into_iter().flatten() {
                    if let Some(o) = owner[comp[q]] {
                        let better = match best {
                            None => true,
                            Some(b) => size[o] > size[b] || (size[o] == size[b] && o < b),
                        };
                        if better {
                            best = Some(o);
                        }
                    }
                }
            }
            match best {
                Some(o) => {
                    owner[c] = Some(o);
                    size[o] += members[c].len();
                }
                None => pending = true,
            }
        }
        if !pending {
            break;
        }
    }

    let mut new_id = vec![0u32; n];
    let mut next = 0u32;
    let mut out = vec![0u32; m];
    for p in 0..m {
        let o = owner[comp[p]].expect("every component merged");
        if new_id[o] == 0 {
            next += 1;
            new_id[o] = next;
        }
        out[p] = new_id[o];
    }
    out
}
