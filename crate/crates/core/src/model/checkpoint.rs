//! Parameter checkpoints: a magic line, a line echoing the configuration,
//! then the parameters as little-endian `f64`.

use std::path::Path;

use super::{Net, NetConfig};
use crate::error::{Error, Result};

const MAGIC: &str = "SEGLAB-NET 1";

fn header(net: &Net) -> String {
    let c = net.config();
    format!(
        "{MAGIC}\nin_channels={} num_classes={} depth={} base_channels={} seed={} params={}\n",
        c.in_channels,
        c.num_classes,
        c.depth,
        c.base_channels,
        net.seed(),
        net.num_params()
    )
}

pub fn save_checkpoint(net: &Net, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header(net).into_bytes();
    bytes.reserve(8 * net.num_params());
    for p in net.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("checkpoint header is incomplete".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Net> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    if take_line(&bytes, &mut pos)? != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let mut fields = std::collections::HashMap::new();
    for item in take_line(&bytes, &mut pos)?.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad checkpoint field `{item}`")))?;
        let v: u64 = v
            .parse()
            .map_err(|_| Error::Format(format!("bad checkpoint value `{item}`")))?;
        fields.insert(k.to_string(), v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("checkpoint lacks `{k}`")))
    };
    let config = NetConfig {
        in_channels: get("in_channels")? as usize,
        num_classes: get("num_classes")? as usize,
        depth: get("depth")? as usize,
        base_channels: get("base_channels")? as usize,
    };
    config.validate()?;
    let n = get("params")? as usize;
    if n != config.num_params() {
        return Err(Error::Format(format!(
            "checkpoint declares {n} parameters, configuration needs {}",
            config.num_params()
        )));
    }
    let payload = &bytes[pos..];
    if payload.len() != 8 * n {
        return Err(Error::Truncated {
            expected: 8 * n,
            found: payload.len(),
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Net::from_params(config, get("seed")?, params)
}
