/// Rotates `mask` by `angle_deg` about `center` and then shifts it by
/// `(dx, dy)`, with nearest-neighbour resampling. Positive angles rotate
/// clockwise on screen (y points down). Pixels mapped from outside the frame
/// are `false`.
pub fn rotate_translate(
    mask: &[bool],
    h: usize,
    w: usize,
    center: (f64, f64),
    angle_deg: f64,
    shift: (f64, f64),
) -> Vec<bool> {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = center;
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            // inverse map: undo the shift, then rotate by -angle about the center
            let u = x as f64 - shift.0 - cx;
            let v = y as f64 - shift.1 - cy;
            let sx = (cx + cos * u + sin * v + 0.5).floor();
            let sy = (cy - sin * u + cos * v + 0.5).floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                out[y * w + x] = mask[sy as usize * w + sx as usize];
            }
        }
    }
    out
}

/// Mean pixel coordinate `(x, y)` of the `true` pixels.
pub fn centroid(mask: &[bool], w: usize) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (p, &m) in mask.iter().enumerate() {
        if m {
            sx += (p % w) as f64;
            sy += (p / w) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}
