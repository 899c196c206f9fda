//! A small U-Net with manual backpropagation.
//!
//! Layer table for `depth = d`, `base_channels = b`, channel width
//! `c_l = b * 2^l`:
//!
//! | layer            | kernel | in              | out  | activation |
//! |------------------|--------|-----------------|------|------------|
//! | `enc_l`, l < d   | 3x3    | in / `c_{l-1}`  | c_l  | relu       |
//! | 2x2 max-pool after every `enc_l`                          |||||
//! | bottleneck       | 3x3    | `c_{d-1}` / in  | c_d  | relu       |
//! | `up_l`, l = d-1..0 | 1x1  | c_{l+1}         | c_l  | none, then nearest 2x upsample |
//! | `dec_l`          | 3x3    | 2 c_l (concat with `enc_l`) | c_l | relu |
//! | head             | 1x1    | b               | C    | softmax    |
//!
//! Parameters are stored in one flat vector in the order of the table, each
//! layer as weights `[cout][cin][ky][kx]` followed by `cout` biases.

mod checkpoint;
mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::imaging::{Image, ProbMap};
use layers::{ConvSpec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Number of pooling levels.
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            num_classes: 2,
            depth: 2,
            base_channels: 8,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_channels == 0 {
            return Err(Error::domain("channel counts must be positive"));
        }
        if !(2..=256).contains(&self.num_classes) {
            return Err(Error::domain(format!(
                "num_classes {} outside 2..=256",
                self.num_classes
            )));
        }
        if self.depth > 8 {
            return Err(Error::domain(format!("depth {} exceeds 8", self.depth)));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    enc: Vec<ConvSpec>,
    bottleneck: ConvSpec,
    /// Indexed by level.
    up: Vec<ConvSpec>,
    /// Indexed by level.
    dec: Vec<ConvSpec>,
    head: ConvSpec,
    total: usize,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let width = |l: usize| cfg.base_channels << l;
        let mut offset = 0;
        let mut next = |cin: usize, cout: usize, k: usize| {
            let spec = ConvSpec {
                cin,
                cout,
                k,
                offset,
            };
            offset += spec.num_params();
            spec
        };
        let d = cfg.depth;
        let enc: Vec<ConvSpec> = (0..d)
            .map(|l| {
                next(
                    if l == 0 {
                        cfg.in_channels
                    } else {
                        width(l - 1)
                    },
                    width(l),
                    3,
                )
            })
            .collect();
        let bottleneck = next(
            if d == 0 {
                cfg.in_channels
            } else {
                width(d - 1)
            },
            width(d),
            3,
        );
        let mut up = vec![None; d];
        let mut dec = vec![None; d];
        for l in (0..d).rev() {
            up[l] = Some(next(width(l + 1), width(l), 1));
            dec[l] = Some(next(2 * width(l), width(l), 3));
        }
        let head = next(width(0), cfg.num_classes, 1);
        Self {
            enc,
            bottleneck,
            up: up.into_iter().map(Option::unwrap).collect(),
            dec: dec.into_iter().map(Option::unwrap).collect(),
            head,
            total: offset,
        }
    }

    fn all(&self) -> Vec<ConvSpec> {
        let mut v = self.enc.clone();
        v.push(self.bottleneck);
        for l in (0..self.up.len()).rev() {
            v.push(self.up[l]);
            v.push(self.dec[l]);
        }
        v.push(self.head);
        v
    }
}

/// One network instance: configuration plus its flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    config: NetConfig,
    seed: u64,
    params: Vec<f64>,
    layout: Layout,
}

/// Activations recorded by [`Net::forward_cached`] for use by
/// [`Net::backward`]. The default value is empty.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    inner: Option<CacheData>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.inner.is_none()
    }
}

#[derive(Clone, Debug)]
struct CacheData {
    config: NetConfig,
    /// Input to `enc_l` (or to the bottleneck at index `depth`).
    enc_in: Vec<Tensor>,
    enc_out: Vec<Tensor>,
    pool_arg: Vec<Vec<usize>>,
    bottleneck_out: Tensor,
    /// Input to `up_l`, indexed by level.
    up_in: Vec<Tensor>,
    dec_in: Vec<Tensor>,
    dec_out: Vec<Tensor>,
    head_in: Tensor,
    probs: Vec<f64>,
}

impl Net {
    /// He-normal weights (std `sqrt(2 / fan_in)`) and zero biases, drawn
    /// from a generator seeded with `seed`.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in layout.all() {
            let normal =
                Normal::new(0.0, (2.0 / spec.fan_in() as f64).sqrt()).expect("positive std");
            for w in &mut params[spec.offset..spec.offset + spec.num_weights()] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(Self {
            config,
            seed,
            params,
            layout,
        })
    }

    /// Builds a network from an explicit parameter vector.
    pub fn from_params(config: NetConfig, seed: u64, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            config,
            seed,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        if img.channels() != self.config.in_channels {
            return Err(Error::domain(format!(
                "network expects {} channels, image has {}",
                self.config.in_channels,
                img.channels()
            )));
        }
        Ok(())
    }

    /// Per-pixel class distribution for `img`.
    pub fn forward(&self, img: &Image) -> Result<ProbMap> {
        self.forward_cached(img).map(|(p, _)| p)
    }

    /// Forward pass that also records what [`Net::backward`] needs.
    pub fn forward_cached(&self, img: &Image) -> Result<(ProbMap, ForwardCache)> {
        self.check_input(img)?;
        let theta = &self.params;
        let lay = &self.layout;
        let d = self.config.depth;
        let mut x = Tensor {
            c: img.channels(),
            h: img.height(),
            w: img.width(),
            data: img.data().to_vec(),
        };
        let mut enc_in = Vec::with_capacity(d + 1);
        let mut enc_out = Vec::with_capacity(d);
        let mut pool_arg = Vec::with_capacity(d);
        for spec in &lay.enc {
            let e = layers::conv_forward(spec, theta, &x, true);
            let (pooled, arg) = layers::max_pool(&e);
            enc_in.push(std::mem::replace(&mut x, pooled));
            enc_out.push(e);
            pool_arg.push(arg);
        }
        let bottleneck_out = layers::conv_forward(&lay.bottleneck, theta, &x, true);
        enc_in.push(x);

        let mut y = bottleneck_out.clone();
        let mut up_in = vec![Tensor::zeros(0, 0, 0); d];
        let mut dec_in = vec![Tensor::zeros(0, 0, 0); d];
        let mut dec_out = vec![Tensor::zeros(0, 0, 0); d];
        for l in (0..d).rev() {
            let u = layers::conv_forward(&lay.up[l], theta, &y, false);
            let skip = &enc_out[l];
            let cat = layers::concat(&layers::upsample(&u, skip.h, skip.w), skip);
            let out = layers::conv_forward(&lay.dec[l], theta, &cat, true);
            up_in[l] = std::mem::replace(&mut y, out.clone());
            dec_in[l] = cat;
            dec_out[l] = out;
        }
        let logits = layers::conv_forward(&lay.head, theta, &y, false);
        let probs = layers::softmax(&logits);
        let map = ProbMap::from_softmax(
            self.config.num_classes,
            img.height(),
            img.width(),
            probs.clone(),
        );
        let cache = CacheData {
            config: self.config,
            enc_in,
            enc_out,
            pool_arg,
            bottleneck_out,
            up_in,
            dec_in,
            dec_out,
            head_in: y,
            probs,
        };
        Ok((map, ForwardCache { inner: Some(cache) }))
    }

    /// Gradient of a scalar loss with respect to the parameters, given its
    /// gradient `loss_grad` with respect to the output probabilities
    /// (`C x M`, class-major).
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64]) -> Result<Vec<f64>> {
        let c = cache
            .inner
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a forward cache".into()))?;
        if c.config != self.config {
            return Err(Error::State(
                "forward cache belongs to a different network".into(),
            ));
        }
        if loss_grad.len() != c.probs.len() {
            return Err(Error::domain(format!(
                "loss gradient has {} entries, output has {}",
                loss_grad.len(),
                c.probs.len()
            )));
        }
        let theta = &self.params;
        let lay = &self.layout;
        let d = self.config.depth;
        let mut grad = vec![0.0; self.params.len()];

        let (h, w) = (c.head_in.h, c.head_in.w);
        let d_logits = layers::softmax_backward(&c.probs, loss_grad, self.config.num_classes, h, w);
        let mut dy =
            layers::conv_backward(&lay.head, theta, &c.head_in, &d_logits, &mut grad, true)
                .expect("input gradient requested");

        let mut d_skip = vec![None; d];
        for l in 0..d {
            layers::relu_backward(&c.dec_out[l], &mut dy);
            let d_cat =
                layers::conv_backward(&lay.dec[l], theta, &c.dec_in[l], &dy, &mut grad, true)
                    .expect("input gradient requested");
            let (d_up, skip) = layers::split(&d_cat, lay.up[l].cout);
            d_skip[l] = Some(skip);
            let src = &c.up_in[l];
            let d_u = layers::upsample_backward(&d_up, src.h, src.w);
            dy = layers::conv_backward(&lay.up[l], theta, src, &d_u, &mut grad, true)
                .expect("input gradient requested");
        }

        layers::relu_backward(&c.bottleneck_out, &mut dy);
        let mut dx =
            layers::conv_backward(&lay.bottleneck, theta, &c.enc_in[d], &dy, &mut grad, d > 0);
        for l in (0..d).rev() {
            let e = &c.enc_out[l];
            let pooled = dx.take().expect("input gradient requested");
            let mut de = layers::max_pool_backward(&pooled, &c.pool_arg[l], e.c, e.h, e.w);
            let skip = d_skip[l].take().expect("decoder visited every level");
            for (a, b) in de.data.iter_mut().zip(&skip.data) {
                *a += b;
            }
            layers::relu_backward(e, &mut de);
            dx = layers::conv_backward(&lay.enc[l], theta, &c.enc_in[l], &de, &mut grad, l > 0);
        }
        Ok(grad)
    }
}

/// Builds the two co-trained networks with the same shape and different
/// initialisations.
pub fn init_pair(config: NetConfig, seed1: u64, seed2: u64) -> Result<(Net, Net)> {
    if seed1 == seed2 {
        return Err(Error::domain("the two networks need different seeds"));
    }
    Ok((Net::init(config, seed1)?, Net::init(config, seed2)?))
}

/// Plain SGD with optional momentum.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdState {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::domain(format!(
                "learning rate {lr} must be positive"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::domain(format!("momentum {momentum} outside [0,1)")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }
}

/// `theta <- theta - lr * v`, with `v <- momentum * v + grad`. A non-finite
/// gradient is refused and leaves the network untouched.
pub fn sgd_step(net: &mut Net, grad: &[f64], state: &mut SgdState) -> Result<()> {
    if grad.len() != net.params.len() {
        return Err(Error::domain(format!(
            "gradient has {} entries, network has {}",
            grad.len(),
            net.params.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient at parameter {i}"
        )));
    }
    if state.momentum == 0.0 {
        for (p, g) in net.params.iter_mut().zip(grad) {
            *p -= state.lr * g;
        }
        return Ok(());
    }
    if state.velocity.len() != grad.len() {
        state.velocity = vec![0.0; grad.len()];
    }
    for ((p, v), g) in net.params.iter_mut().zip(&mut state.velocity).zip(grad) {
        *v = state.momentum * *v + g;
        *p -= state.lr * *v;
    }
    Ok(())
}
