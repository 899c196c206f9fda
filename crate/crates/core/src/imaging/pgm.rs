//! Binary PGM (P5) reading and writing.
//!
//! Samples are one byte when `maxval <= 255`, otherwise two bytes big-endian
//! (Netpbm convention). Three-channel images are stored as a single P5 file
//! whose planes are stacked vertically, tagged by a `# seglab-channels 3`
//! comment line directly after the magic number. Other readers see a valid
//! grayscale image three times as tall.

use std::fs;
use std::path::Path;

use super::{Image, LabelMap};
use crate::error::{Error, Result};
use crate::superpixel::SuperpixelMap;

const CHANNEL_TAG: &str = "seglab-channels";

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    channels: usize,
}

struct Pgm {
    header: Header,
    samples: Vec<u16>,
}

fn parse(bytes: &[u8]) -> Result<Pgm> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("missing P5 magic number".into()));
    }
    let mut pos = 2;
    let mut channels = 1;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map(|e| pos + e)
                        .ok_or_else(|| Error::Format("unterminated header comment".into()))?;
                    let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                    let mut words = comment.split_whitespace();
                    if words.next() == Some(CHANNEL_TAG) {
                        channels = words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .filter(|&c| c == 1 || c == 3)
                            .ok_or_else(|| Error::Format(format!("bad channel tag `{comment}`")))?;
                    }
                    pos = end + 1;
                }
                Some(_) => break,
                None => return Err(Error::Format("header ended early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("header number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let [width, stacked_height, maxval] = fields;
    if width == 0 || stacked_height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} outside 1..=65535")));
    }
    if stacked_height % channels != 0 {
        return Err(Error::Format(
            "stacked height not divisible by channel count".into(),
        ));
    }

    let count = width * stacked_height;
    let wide = maxval > 255;
    let expected = if wide { 2 * count } else { count };
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let samples: Vec<u16> = if wide {
        payload[..expected]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        payload[..expected].iter().map(|&b| b as u16).collect()
    };
    if let Some(v) = samples.iter().find(|&&v| v as usize > maxval) {
        return Err(Error::Format(format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok(Pgm {
        header: Header {
            width,
            height: stacked_height / channels,
            maxval,
            channels,
        },
        samples,
    })
}

fn read(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

fn encode(width: usize, height: usize, channels: usize, maxval: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + samples.len() * 2);
    out.extend_from_slice(b"P5\n");
    if channels != 1 {
        out.extend_from_slice(format!("# {CHANNEL_TAG} {channels}\n").as_bytes());
    }
    out.extend_from_slice(format!("{width} {}\n{maxval}\n", height * channels).as_bytes());
    if maxval > 255 {
        for &s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an image, scaling samples by `1 / maxval`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let pgm = read(path.as_ref())?;
    let h = &pgm.header;
    let scale = h.maxval as f64;
    let data = pgm.samples.iter().map(|&s| s as f64 / scale).collect();
    Image::new(h.height, h.width, h.channels, data)
}

/// Reads a label map with `num_classes` classes. Any sample `>= num_classes`
/// is a domain error.
pub fn load_label_map(path: impl AsRef<Path>, num_classes: usize) -> Result<LabelMap> {
    let pgm = read(path.as_ref())?;
    let h = &pgm.header;
    if h.channels != 1 || h.maxval > 255 {
        return Err(Error::Format(
            "label maps must be single-plane 8-bit PGM".into(),
        ));
    }
    let data = pgm.samples.iter().map(|&s| s as u8).collect();
    LabelMap::new(h.height, h.width, num_classes, data)
}

/// Reads a superpixel map; `maxval` is the superpixel count.
pub fn load_superpixel_map(path: impl AsRef<Path>) -> Result<SuperpixelMap> {
    let pgm = read(path.as_ref())?;
    let h = &pgm.header;
    if h.channels != 1 {
        return Err(Error::Format("superpixel maps must be single-plane".into()));
    }
    let ids = pgm.samples.iter().map(|&s| s as u32).collect();
    SuperpixelMap::new(h.height, h.width, h.maxval, ids)
}

/// Writes an image with 8-bit samples, rounding half up.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let samples: Vec<u16> = image
        .data()
        .iter()
        .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u16)
        .collect();
    let bytes = encode(
        image.width(),
        image.height(),
        image.channels(),
        255,
        &samples,
    );
    write(path.as_ref(), &bytes)
}

/// Writes a label map with `maxval = num_classes - 1`.
pub fn save_label_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let samples: Vec<u16> = labels.data().iter().map(|&v| v as u16).collect();
    let bytes = encode(
        labels.width(),
        labels.height(),
        1,
        labels.num_classes() - 1,
        &samples,
    );
    write(path.as_ref(), &bytes)
}

/// Writes a superpixel map with `maxval = K`.
pub fn save_superpixel_map(map: &SuperpixelMap, path: impl AsRef<Path>) -> Result<()> {
    if map.num_superpixels() > 65535 {
        return Err(Error::domain(format!(
            "{} superpixels exceed the 16-bit PGM range",
            map.num_superpixels()
        )));
    }
    let samples: Vec<u16> = map.ids().iter().map(|&v| v as u16).collect();
    let bytes = encode(
        map.width(),
        map.height(),
        1,
        map.num_superpixels(),
        &samples,
    );
    write(path.as_ref(), &bytes)
}
