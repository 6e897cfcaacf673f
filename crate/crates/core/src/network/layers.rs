use std::hash::Hasher;

use rand::{Rng, RngCore};

use crate::autodiff::{he_uniform_init, ParamId, ParamKind, ParamStore};
use crate::error::Result;
use crate::tensor::{
    concat_channels, conv2d_raw, conv2d_raw_backward, dropout, dropout_backward, max_pool2x2,
    max_pool2x2_backward, pixel_shuffle, pixel_unshuffle, relu, relu_backward, split_channels,
    DropoutMask, KernelRef, PoolIndex, Scalar, Tensor4,
};

/// Whether dropout is active, and the randomness that drives it.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut dyn RngCore, dropout_rate: f64 },
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Same-padded convolution whose kernel and bias live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub(crate) struct Conv {
    weight: ParamId,
    bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    size: usize,
}

impl Conv {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = [out_ch, in_ch, size, size];
        let w = he_uniform_init(&shape, in_ch * size * size, rng)?;
        let weight = params.add(format!("{name}.w"), ParamKind::Weight, &shape, w)?;
        let bias = params.add(format!("{name}.b"), ParamKind::Bias, &[out_ch], vec![T::zero(); out_ch])?;
        Ok(Self {
            weight,
            bias,
            in_ch,
            out_ch,
            size,
        })
    }

    fn pad(&self) -> usize {
        self.size / 2
    }

    fn kernel<'a, T>(&self, weight: &'a [T], bias: &'a [T]) -> KernelRef<'a, T> {
        KernelRef {
            weight,
            bias,
            out_ch: self.out_ch,
            in_ch: self.in_ch,
            kh: self.size,
            kw: self.size,
        }
    }

    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let k = self.kernel(params.value(self.weight), params.value(self.bias));
        conv2d_raw(x, k, self.pad())
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamStore<T>,
        x: &Tensor4<T>,
        grad_out: &Tensor4<T>,
        want_grad_x: bool,
    ) -> Result<Option<Tensor4<T>>> {
        let (w, b, gw, gb) = params.conv_parts(self.weight, self.bias);
        conv2d_raw_backward(x, self.kernel(w, b), self.pad(), grad_out, gw, gb, want_grad_x)
    }
}

/// ReLU → 3×3 conv → dropout.
#[derive(Clone, Debug)]
pub(crate) struct DenseLayer {
    conv: Conv,
}

pub(crate) struct DenseLayerCache<T> {
    input: Tensor4<T>,
    mask: Option<DropoutMask<T>>,
}

impl DenseLayer {
    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x: Tensor4<T>,
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor4<T>, DenseLayerCache<T>)> {
        let features = self.conv.forward(params, &relu(&x))?;
        let (out, mask) = match mode {
            Mode::Eval => (features, None),
            Mode::Train { rng, dropout_rate } => {
                let (y, mask) = dropout(&features, *dropout_rate, &mut **rng, true)?;
                (y, Some(mask))
            }
        };
        Ok((out, DenseLayerCache { input: x, mask }))
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamStore<T>,
        cache: &DenseLayerCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let grad_features = match &cache.mask {
            Some(mask) => dropout_backward(mask, grad_out)?,
            None => grad_out.clone(),
        };
        let grad_act = self
            .conv
            .backward(params, &relu(&cache.input), &grad_features, true)?
            .expect("input gradient requested");
        relu_backward(&cache.input, &grad_act)
    }
}

/// Densely connected block: every layer sees the concatenation of the block
/// input and all earlier layer outputs; the block output is the
/// concatenation of the input and all layer outputs.
#[derive(Clone, Debug)]
pub(crate) struct DenseBlock {
    layers: Vec<DenseLayer>,
    pub in_ch: usize,
    pub growth: usize,
}

pub(crate) struct DenseBlockCache<T> {
    layers: Vec<DenseLayerCache<T>>,
}

impl DenseBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        num_layers: usize,
        growth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|i| {
                Conv::new(params, &format!("{name}.layer{i}"), in_ch + i * growth, growth, 3, rng)
                    .map(|conv| DenseLayer { conv })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, in_ch, growth })
    }

    pub fn out_ch(&self) -> usize {
        self.in_ch + self.new_ch()
    }

    /// Channels appended by the block.
    pub fn new_ch(&self) -> usize {
        self.layers.len() * self.growth
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor4<T>,
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor4<T>, DenseBlockCache<T>)> {
        let mut current = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (features, cache) = layer.forward(params, current, mode)?;
            current = concat_channels(&[&cache.input, &features])?;
            caches.push(cache);
        }
        Ok((current, DenseBlockCache { layers: caches }))
    }

    /// Gradient w.r.t. the block input, given the gradient of the full block
    /// output.
    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamStore<T>,
        cache: &DenseBlockCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        // Walking the layers backwards, the running gradient always covers
        // the concatenation that layer i consumed plus its own output.
        let mut grad = grad_out.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let in_ch = lc.input.shape().channels;
            let mut parts = split_channels(&grad, &[in_ch, self.growth])?;
            let grad_features = parts.pop().expect("two parts");
            let mut grad_input = parts.pop().expect("two parts");
            let through = layer.backward(params, lc, &grad_features)?;
            for (g, t) in grad_input.data_mut().iter_mut().zip(through.data()) {
                *g += *t;
            }
            grad = grad_input;
        }
        Ok(grad)
    }

    pub fn hash_regime<T: Scalar>(cache: &DenseBlockCache<T>, h: &mut impl Hasher) {
        for lc in &cache.layers {
            hash_signs(lc.input.data(), h);
        }
    }
}

fn hash_signs<T: Scalar>(data: &[T], h: &mut impl Hasher) {
    for chunk in data.chunks(64) {
        let mut bits = 0u64;
        for (i, v) in chunk.iter().enumerate() {
            if *v > T::zero() {
                bits |= 1 << i;
            }
        }
        h.write_u64(bits);
    }
}

/// 1×1 convolution followed by 2×2 max-pooling.
#[derive(Clone, Debug)]
pub(crate) struct TransitionDown {
    conv: Conv,
}

pub(crate) struct TransitionDownCache<T> {
    input: Tensor4<T>,
    pool: PoolIndex,
}

impl TransitionDown {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(params, name, channels, channels, 1, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor4<T>) -> Result<(Tensor4<T>, TransitionDownCache<T>)> {
        let (y, pool) = max_pool2x2(&self.conv.forward(params, x)?)?;
        Ok((y, TransitionDownCache { input: x.clone(), pool }))
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamStore<T>,
        cache: &TransitionDownCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let grad_conv = max_pool2x2_backward(&cache.pool, grad_out)?;
        Ok(self
            .conv
            .backward(params, &cache.input, &grad_conv, true)?
            .expect("input gradient requested"))
    }

    pub fn hash_regime<T>(cache: &TransitionDownCache<T>, h: &mut impl Hasher) {
        for &w in cache.pool.winners() {
            h.write_u32(w);
        }
    }
}

/// 3×3 convolution to `4·target` channels followed by 2× sub-pixel shuffle.
#[derive(Clone, Debug)]
pub(crate) struct TransitionUp {
    conv: Conv,
}

impl TransitionUp {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        target: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(params, name, in_ch, 4 * target, 3, rng)?,
        })
    }

    pub fn out_ch(&self) -> usize {
        self.conv.out_ch / 4
    }

    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        pixel_shuffle(&self.conv.forward(params, x)?, 2)
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamStore<T>,
        input: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let grad_conv = pixel_unshuffle(grad_out, 2)?;
        Ok(self
            .conv
            .backward(params, input, &grad_conv, true)?
            .expect("input gradient requested"))
    }
}
