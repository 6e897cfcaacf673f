//! Multiscale densely connected network mapping a broad-band image to a
//! hyperspectral cube of the same spatial size.
//!
//! Layout for `num_scales = S`:
//!
//! ```text
//! stem 3×3 conv
//! S × [dense block → (skip) → transition down]
//! bottleneck dense block
//! S × [transition up → concat skip → dense block]
//! head 1×1 conv (linear)
//! ```
//!
//! Transition-up only consumes the feature maps appended by the preceding
//! block and emits `layers_per_block · growth_filters` channels, which keeps
//! the channel count on the up path bounded.

mod layers;
mod objective;
mod tiling;

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use layers::Mode;
pub use objective::RegressionObjective;
pub use tiling::{predict_image, predict_tiled, reflect_index, reflect_pad, tile_layout, TileSpan};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{concat_channels, split_channels, Scalar, Tensor4};
use layers::{Conv, DenseBlock, DenseBlockCache, TransitionDown, TransitionDownCache, TransitionUp};

/// Declarative architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub num_scales: usize,
    pub layers_per_block: usize,
    pub growth_filters: usize,
    pub stem_filters: usize,
    pub dropout_rate: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 31,
            num_scales: 5,
            layers_per_block: 4,
            growth_filters: 16,
            stem_filters: 32,
            dropout_rate: 0.5,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("num_scales", self.num_scales),
            ("layers_per_block", self.layers_per_block),
            ("growth_filters", self.growth_filters),
            ("stem_filters", self.stem_filters),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Param(format!("{name} must be at least 1")));
        }
        if self.num_scales > 12 {
            return Err(Error::Param(format!("num_scales {} is unreasonably deep", self.num_scales)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Param(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Spatial dims of every input must be a multiple of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.num_scales
    }

    /// Channels appended by each dense block.
    pub fn block_growth(&self) -> usize {
        self.layers_per_block * self.growth_filters
    }

    /// Canonical human-readable key = value text.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("network spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameter-free description of the instantiated graph; weights live in the
/// [`ParamStore`] returned alongside it.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    stem: Conv,
    down: Vec<(DenseBlock, TransitionDown)>,
    bottleneck: DenseBlock,
    up: Vec<(TransitionUp, DenseBlock)>,
    head: Conv,
}

struct DownCache<T> {
    block: DenseBlockCache<T>,
    td: TransitionDownCache<T>,
}

struct UpCache<T> {
    tu_input: Tensor4<T>,
    block: DenseBlockCache<T>,
}

/// Activations recorded by [`Network::forward_cached`] for the backward pass.
pub struct ForwardCache<T> {
    input: Tensor4<T>,
    down: Vec<DownCache<T>>,
    bottleneck: DenseBlockCache<T>,
    up: Vec<UpCache<T>>,
    head_input: Tensor4<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Fingerprint of every ReLU sign pattern and max-pool winner.
    pub fn regime_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for d in &self.down {
            DenseBlock::hash_regime(&d.block, &mut h);
            TransitionDown::hash_regime(&d.td, &mut h);
        }
        DenseBlock::hash_regime(&self.bottleneck, &mut h);
        for u in &self.up {
            DenseBlock::hash_regime(&u.block, &mut h);
        }
        h.finish()
    }
}

/// Instantiates `spec` with He-uniform weights and zero biases.
pub fn build_network<T: Scalar, R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<(Network, ParamStore<T>)> {
    spec.validate()?;
    let mut params = ParamStore::new();
    let growth = spec.block_growth();
    let stem = Conv::new(&mut params, "stem", spec.in_channels, spec.stem_filters, 3, rng)?;

    let mut channels = spec.stem_filters;
    let mut skip_channels = Vec::with_capacity(spec.num_scales);
    let mut down = Vec::with_capacity(spec.num_scales);
    for s in 0..spec.num_scales {
        let block = DenseBlock::new(&mut params, &format!("down{s}.block"), channels, spec.layers_per_block, spec.growth_filters, rng)?;
        channels = block.out_ch();
        assert_eq!(channels, spec.stem_filters + growth * (s + 1), "skip channel bookkeeping");
        skip_channels.push(channels);
        let td = TransitionDown::new(&mut params, &format!("down{s}.td"), channels, rng)?;
        down.push((block, td));
    }

    let bottleneck = DenseBlock::new(&mut params, "bottleneck", channels, spec.layers_per_block, spec.growth_filters, rng)?;
    let mut new_ch = bottleneck.new_ch();

    let mut up = Vec::with_capacity(spec.num_scales);
    for (j, &skip) in skip_channels.iter().rev().enumerate() {
        let tu = TransitionUp::new(&mut params, &format!("up{j}.tu"), new_ch, growth, rng)?;
        let block = DenseBlock::new(&mut params, &format!("up{j}.block"), tu.out_ch() + skip, spec.layers_per_block, spec.growth_filters, rng)?;
        new_ch = block.new_ch();
        channels = block.out_ch();
        up.push((tu, block));
    }

    let head = Conv::new(&mut params, "head", channels, spec.out_channels, 1, rng)?;
    Ok((
        Network {
            spec: spec.clone(),
            stem,
            down,
            bottleneck,
            up,
            head,
        },
        params,
    ))
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Channel count of each skip connection, shallowest first.
    pub fn skip_channels(&self) -> Vec<usize> {
        self.down.iter().map(|(b, _)| b.out_ch()).collect()
    }

    /// Number of convolution layers in the graph.
    pub fn conv_count(&self) -> usize {
        let blocks = self.down.len() + 1 + self.up.len();
        2 + blocks * self.spec.layers_per_block + self.down.len() + self.up.len()
    }

    fn check_input<T: Scalar>(&self, x: &Tensor4<T>) -> Result<()> {
        let s = x.shape();
        if s.channels != self.spec.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.spec.in_channels, s.channels
            )));
        }
        let m = self.spec.size_multiple();
        if s.height % m != 0 || s.width % m != 0 {
            return Err(Error::shape(format!(
                "input {}x{} is not a multiple of {m} in both spatial dims",
                s.height, s.width
            )));
        }
        Ok(())
    }

    /// Inference or training forward pass; `Mode` only toggles dropout.
    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor4<T>, mode: &mut Mode<'_>) -> Result<Tensor4<T>> {
        Ok(self.forward_cached(params, x, mode)?.0)
    }

    pub fn forward_cached<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor4<T>,
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut h = self.stem.forward(params, x)?;
        let mut skips = Vec::with_capacity(self.down.len());
        let mut down = Vec::with_capacity(self.down.len());
        for (block, td) in &self.down {
            let (y, bc) = block.forward(params, &h, mode)?;
            let (pooled, tc) = td.forward(params, &y)?;
            skips.push(y);
            down.push(DownCache { block: bc, td: tc });
            h = pooled;
        }

        let (y, bottleneck) = self.bottleneck.forward(params, &h, mode)?;
        let mut new_features = new_channels(&y, self.bottleneck.in_ch)?;
        let mut up = Vec::with_capacity(self.up.len());
        let mut head_input = None;
        for (j, ((tu, block), skip)) in self.up.iter().zip(skips.iter().rev()).enumerate() {
            let upsampled = tu.forward(params, &new_features)?;
            let joined = concat_channels(&[&upsampled, skip])?;
            let (y, bc) = block.forward(params, &joined, mode)?;
            let tu_input = if j + 1 < self.up.len() {
                std::mem::replace(&mut new_features, new_channels(&y, block.in_ch)?)
            } else {
                head_input = Some(y);
                new_features.clone()
            };
            up.push(UpCache { tu_input, block: bc });
        }
        let head_input = head_input.expect("at least one scale");
        let out = self.head.forward(params, &head_input)?;
        Ok((
            out,
            ForwardCache {
                input: x.clone(),
                down,
                bottleneck,
                up,
                head_input,
            },
        ))
    }

    /// Accumulates into `params` the gradient of `sum(grad_out ⊙ forward(x))`.
    pub fn backward<T: Scalar>(&self, params: &mut ParamStore<T>, cache: &ForwardCache<T>, grad_out: &Tensor4<T>) -> Result<()> {
        let expected = cache.head_input.shape().with_channels(self.spec.out_channels);
        if grad_out.shape() != expected {
            return Err(Error::shape(format!(
                "output gradient {} does not match network output {expected}",
                grad_out.shape()
            )));
        }
        // Gradient of the full output of the block currently being visited.
        let mut grad = self
            .head
            .backward(params, &cache.head_input, grad_out, true)?
            .expect("input gradient requested");

        let scales = self.up.len();
        let mut skip_grads: Vec<Option<Tensor4<T>>> = (0..scales).map(|_| None).collect();
        for j in (0..scales).rev() {
            let (tu, block) = &self.up[j];
            let uc = &cache.up[j];
            let grad_joined = block.backward(params, &uc.block, &grad)?;
            let skip_ch = grad_joined.shape().channels - tu.out_ch();
            let mut parts = split_channels(&grad_joined, &[tu.out_ch(), skip_ch])?;
            skip_grads[scales - 1 - j] = parts.pop();
            let grad_up = parts.pop().expect("two parts");
            let grad_new = tu.backward(params, &uc.tu_input, &grad_up)?;
            let prev_in = if j > 0 { self.up[j - 1].1.in_ch } else { self.bottleneck.in_ch };
            grad = with_zero_prefix(&grad_new, prev_in)?;
        }

        grad = self.bottleneck.backward(params, &cache.bottleneck, &grad)?;
        for s in (0..self.down.len()).rev() {
            let (block, td) = &self.down[s];
            let dc = &cache.down[s];
            let mut grad_y = td.backward(params, &dc.td, &grad)?;
            let skip = skip_grads[s].as_ref().expect("every scale has a skip gradient");
            for (g, k) in grad_y.data_mut().iter_mut().zip(skip.data()) {
                *g += *k;
            }
            grad = block.backward(params, &dc.block, &grad_y)?;
        }
        self.stem.backward(params, &cache.input, &grad, false)?;
        Ok(())
    }
}

/// Channels appended by a dense block, i.e. its output minus its input.
fn new_channels<T: Scalar>(y: &Tensor4<T>, in_ch: usize) -> Result<Tensor4<T>> {
    let total = y.shape().channels;
    Ok(split_channels(y, &[in_ch, total - in_ch])?.pop().expect("two parts"))
}

/// Gradient of a full block output whose first `prefix` channels are unused.
fn with_zero_prefix<T: Scalar>(grad_new: &Tensor4<T>, prefix: usize) -> Result<Tensor4<T>> {
    if prefix == 0 {
        return Ok(grad_new.clone());
    }
    let zeros = Tensor4::zeros(grad_new.shape().with_channels(prefix))?;
    concat_channels(&[&zeros, grad_new])
}
