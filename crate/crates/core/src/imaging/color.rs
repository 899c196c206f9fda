use super::Image;
use crate::error::{Error, Result};

/// sRGB (linear) to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Half-width of the range `a*` and `b*` are mapped from.
const AB_RANGE: f64 = 128.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple in `[0,1]` to unscaled `(L*, a*, b*)`.
///
/// The white point is the XYZ image of sRGB white, so neutral greys land on
/// `a* = b* = 0` exactly.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        let white: f64 = row.iter().sum();
        *out = (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / white;
    }
    let [fx, fy, fz] = xyz.map(lab_f);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a 3-channel sRGB image to CIE-lab, rescaled per channel:
/// `L*/100`, `(a* + 128)/256`, `(b* + 128)/256`.
pub fn rgb_to_cielab(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::domain(format!(
            "colour conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let m = img.num_pixels();
    let mut data = vec![0.0; 3 * m];
    for j in 0..m {
        let rgb = [img.data()[j], img.data()[m + j], img.data()[2 * m + j]];
        let [l, a, b] = srgb_to_lab(rgb);
        data[j] = l / 100.0;
        data[m + j] = (a + AB_RANGE) / (2.0 * AB_RANGE);
        data[2 * m + j] = (b + AB_RANGE) / (2.0 * AB_RANGE);
    }
    Image::new(img.height(), img.width(), 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn white_and_black_endpoints() {
        let [l, a, b] = srgb_to_lab([1.0, 1.0, 1.0]);
        assert!(close(l, 100.0, 1e-9) && close(a, 0.0, 1e-9) && close(b, 0.0, 1e-9));
        let [l, ..] = srgb_to_lab([0.0, 0.0, 0.0]);
        assert!(close(l, 0.0, 1e-12));
    }

    #[test]
    fn primaries_match_reference_converter() {
        // Frozen from an independent numpy evaluation of the sRGB -> XYZ -> Lab chain.
        let cases = [
            (
                [1.0, 0.0, 0.0],
                [53.24079183328088, 80.09246954480042, 67.20319253649727],
            ),
            (
                [0.0, 1.0, 0.0],
                [87.73471889497407, -86.18270151612145, 83.17931454093255],
            ),
            (
                [0.5, 0.2, 0.8],
                [40.04429413931117, 60.255774942233415, -65.67507635014066],
            ),
        ];
        for (rgb, want) in cases {
            let got = srgb_to_lab(rgb);
            for k in 0..3 {
                assert!(close(got[k], want[k], 1e-9), "{rgb:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn grey_maps_to_chroma_midpoint() {
        let img = Image::new(1, 3, 3, vec![0.2, 0.5, 0.9, 0.2, 0.5, 0.9, 0.2, 0.5, 0.9]).unwrap();
        let lab = rgb_to_cielab(&img).unwrap();
        for j in 0..3 {
            assert!(close(lab.get(1, 0, j), 0.5, 1e-12));
            assert!(close(lab.get(2, 0, j), 0.5, 1e-12));
        }
    }

    #[test]
    fn single_channel_is_rejected() {
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        assert!(matches!(rgb_to_cielab(&img), Err(Error::Domain(_))));
    }
}
