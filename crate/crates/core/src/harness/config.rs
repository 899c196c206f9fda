//! `key = value` configuration with dotted keys.
//!
//! Sources are applied in order: built-in defaults, a config file, the
//! `SEGLAB_SEED` environment variable, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::NetConfig;
use crate::noise::{NoiseSpec, Pattern};
use crate::superpixel::SlicParams;
use crate::train::{EvalNet, GapPooling, Mode, TrainConfig};

use super::synth::SynthSpec;

pub const SEED_ENV: &str = "SEGLAB_SEED";

/// Every recognised key with its default value.
const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.n_images", "250"),
    ("data.height", "64"),
    ("data.width", "64"),
    ("data.num_classes", "2"),
    ("data.fg_mean", "0.65"),
    ("data.bg_mean", "0.35"),
    ("data.noise_sigma", "0.12"),
    ("data.min_area", "0.05"),
    ("data.max_area", "0.3"),
    ("data.test_fraction", "0.2"),
    ("noise.alpha", "0.7"),
    ("noise.beta", "0.7"),
    ("noise.patterns", "dilate,erode,affine"),
    ("noise.level_scale", "0.375"),
    ("superpixel.k", "100"),
    ("superpixel.compactness", "10"),
    ("superpixel.iterations", "10"),
    ("model.depth", "2"),
    ("model.base_channels", "8"),
    ("train.mode", "ours"),
    ("train.lambda", "0.65"),
    ("train.r0", "auto"),
    ("train.noise_rate", "auto"),
    ("train.gamma", "1.1"),
    ("train.max_epochs", "60"),
    ("train.stop_window", "5"),
    ("train.max_iterations", "3"),
    ("train.halt_on_stop", "true"),
    ("train.lr", "0.005"),
    ("train.momentum", "0.9"),
    ("train.batch_size", "8"),
    ("train.eval", "net1"),
    ("train.gap_pooling", "dataset"),
    ("train.report_epochs", "10"),
    ("experiment.alphas", "0.3,0.5,0.7,1.0"),
    ("experiment.betas", "0.5,0.7"),
    ("experiment.modes", "baseline,ours"),
    ("experiment.jobs", "0"),
    ("io.data", ""),
    ("io.labels", ""),
    ("io.superpixels", ""),
    ("io.out", ""),
    ("io.pred", ""),
    ("io.gt", ""),
];

/// Short flag names.
const ALIASES: &[(&str, &str)] = &[
    ("alpha", "noise.alpha"),
    ("beta", "noise.beta"),
    ("mode", "train.mode"),
    ("modes", "experiment.modes"),
    ("max_epochs", "train.max_epochs"),
    ("lambda", "train.lambda"),
    ("k", "superpixel.k"),
    ("jobs", "experiment.jobs"),
    ("data", "io.data"),
    ("labels", "io.labels"),
    ("superpixels", "io.superpixels"),
    ("out", "io.out"),
    ("pred", "io.pred"),
    ("gt", "io.gt"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

fn canonical(key: &str) -> Result<&'static str> {
    let norm = key.trim().trim_start_matches("--").replace('-', "_");
    if let Some(&(_, target)) = ALIASES.iter().find(|(a, _)| *a == norm) {
        return Ok(target);
    }
    KEYS.iter()
        .find(|(k, _)| *k == norm)
        .map(|&(k, _)| k)
        .ok_or_else(|| Error::UnknownKey(key.trim().to_string()))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = canonical(key)?;
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected `key = value`", n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `SEGLAB_SEED` from the given value, if any.
    pub fn apply_seed_env(&mut self, value: Option<String>) -> Result<()> {
        match value {
            Some(v) => self.set("seed", &v),
            None => Ok(()),
        }
    }

    /// Applies `--key value` and `--key=value` pairs.
    pub fn apply_args<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = args[i].as_ref();
            if !arg.starts_with("--") {
                return Err(Error::InvalidValue {
                    key: arg.to_string(),
                    value: "expected a `--key` flag".into(),
                });
            }
            if let Some((k, v)) = arg.split_once('=') {
                self.set(k, v)?;
                i += 1;
            } else {
                let v = args.get(i + 1).ok_or_else(|| Error::InvalidValue {
                    key: arg.to_string(),
                    value: "missing value".into(),
                })?;
                self.set(arg, v.as_ref())?;
                i += 2;
            }
        }
        Ok(())
    }

    /// Resolves a full configuration from its sources.
    pub fn resolve<S: AsRef<str>>(
        file: Option<&Path>,
        seed_env: Option<String>,
        args: &[S],
    ) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        cfg.apply_seed_env(seed_env)?;
        cfg.apply_args(args)?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        let k = canonical(key)?;
        Ok(self.values[k].as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| Error::InvalidValue {
            key: key.to_string(),
            value: v.to_string(),
        })
    }

    /// `None` for the value `auto`.
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key)? == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| Error::InvalidValue {
                    key: key.to_string(),
                    value: s.to_string(),
                })
            })
            .collect()
    }

    /// A path-valued key; empty means unset.
    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        let v = self.raw(key)?;
        Ok((!v.is_empty()).then(|| PathBuf::from(v)))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)?.ok_or_else(|| Error::InvalidValue {
            key: key.to_string(),
            value: "a path is required".into(),
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    /// The resolved configuration as `key = value` lines, readable by
    /// [`Config::apply_text`].
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let spec = SynthSpec {
            n_images: self.get("data.n_images")?,
            height: self.get("data.height")?,
            width: self.get("data.width")?,
            num_classes: self.get("data.num_classes")?,
            fg_mean: self.get("data.fg_mean")?,
            bg_mean: self.get("data.bg_mean")?,
            noise_sigma: self.get("data.noise_sigma")?,
            min_area: self.get("data.min_area")?,
            max_area: self.get("data.max_area")?,
            test_fraction: self.get("data.test_fraction")?,
            seed: self.seed()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let spec = NoiseSpec {
            alpha: self.get("noise.alpha")?,
            beta: self.get("noise.beta")?,
            patterns: self.list::<Pattern>("noise.patterns")?,
            seed: self.seed()?,
            level_scale: self.get("noise.level_scale")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn slic_params(&self) -> Result<SlicParams> {
        Ok(SlicParams {
            k_target: self.get("superpixel.k")?,
            compactness: self.get("superpixel.compactness")?,
            iterations: self.get("superpixel.iterations")?,
        })
    }

    pub fn mode(&self) -> Result<Mode> {
        self.get("train.mode")
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let eval = match self.raw("train.eval")? {
            "net1" => EvalNet::First,
            "mean" => EvalNet::Mean,
            other => {
                return Err(Error::InvalidValue {
                    key: "train.eval".into(),
                    value: other.into(),
                })
            }
        };
        let gap_pooling = match self.raw("train.gap_pooling")? {
            "dataset" => GapPooling::Dataset,
            "per_image" => GapPooling::PerImage,
            other => {
                return Err(Error::InvalidValue {
                    key: "train.gap_pooling".into(),
                    value: other.into(),
                })
            }
        };
        let cfg = TrainConfig {
            lambda: self.get("train.lambda")?,
            r0: self.get_auto("train.r0")?,
            noise_rate: self.get_auto("train.noise_rate")?,
            gamma: self.get("train.gamma")?,
            max_epochs: self.get("train.max_epochs")?,
            stop_window: self.get("train.stop_window")?,
            max_iterations: self.get("train.max_iterations")?,
            halt_on_stop: self.get("train.halt_on_stop")?,
            lr: self.get("train.lr")?,
            momentum: self.get("train.momentum")?,
            batch_size: self.get("train.batch_size")?,
            net: NetConfig {
                in_channels: 1,
                num_classes: self.get("data.num_classes")?,
                depth: self.get("model.depth")?,
                base_channels: self.get("model.base_channels")?,
            },
            eval,
            gap_pooling,
            report_epochs: self.get("train.report_epochs")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::DEFAULT_LEVEL_SCALE;

    #[test]
    fn defaults_build_valid_specs() {
        let cfg = Config::default();
        assert_eq!(cfg.synth_spec().unwrap(), SynthSpec::default());
        assert_eq!(cfg.noise_spec().unwrap().level_scale, DEFAULT_LEVEL_SCALE);
        assert_eq!(cfg.slic_params().unwrap(), SlicParams::default());
        let t = cfg.train_config().unwrap();
        assert_eq!(
            (t.lambda, t.gamma, t.lr, t.batch_size),
            (0.65, 1.1, 0.005, 8)
        );
        assert_eq!(t.r0, None);
    }

    #[test]
    fn precedence_is_file_then_env_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(
            &file,
            "# comment\nseed = 3\nnoise.alpha = 0.3 # trailing\ntrain.lr=0.01\n",
        )
        .unwrap();
        let cfg = Config::resolve(Some(&file), Some("9".into()), &["--alpha", "0.5"]).unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
        assert_eq!(cfg.get::<f64>("noise.alpha").unwrap(), 0.5);
        assert_eq!(cfg.get::<f64>("train.lr").unwrap(), 0.01);
        let cfg = Config::resolve(Some(&file), None, &["--seed=4"]).unwrap();
        assert_eq!(cfg.seed().unwrap(), 4);
    }

    #[test]
    fn flags_mirror_dotted_keys_and_aliases() {
        let mut cfg = Config::default();
        cfg.apply_args(&["--train.max-epochs", "7", "--max-epochs", "8", "--k=50"])
            .unwrap();
        assert_eq!(cfg.get::<usize>("train.max_epochs").unwrap(), 8);
        assert_eq!(cfg.get::<usize>("superpixel.k").unwrap(), 50);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_reported() {
        let mut cfg = Config::default();
        assert!(matches!(
            cfg.set("noise.gamma", "1"),
            Err(Error::UnknownKey(_))
        ));
        assert!(matches!(
            cfg.apply_text("bogus = 1"),
            Err(Error::UnknownKey(_))
        ));
        assert!(matches!(
            cfg.apply_text("no equals sign"),
            Err(Error::Format(_))
        ));
        cfg.set("noise.alpha", "lots").unwrap();
        assert!(matches!(cfg.noise_spec(), Err(Error::InvalidValue { .. })));
        cfg.set("noise.alpha", "1.5").unwrap();
        assert!(matches!(cfg.noise_spec(), Err(Error::Domain(_))));
        assert!(cfg.apply_args(&["--alpha"]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = Config::default();
        cfg.apply_args(&["--beta", "0.5", "--modes", "ours,pixel_unit"])
            .unwrap();
        let mut back = Config::default();
        back.apply_text(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
    }
}
