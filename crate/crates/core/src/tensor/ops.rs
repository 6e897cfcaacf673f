use rand::Rng;

use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Concatenate along the channel axis, in the order given.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::shape("concat of an empty list"))?
        .shape();
    for x in xs {
        let s = x.shape();
        if (s.batch, s.height, s.width) != (first.batch, first.height, first.width) {
            return Err(Error::shape(format!("cannot concat {s} with {first}")));
        }
    }
    let channels = xs.iter().map(|x| x.shape().channels).sum();
    let shape = first.with_channels(channels);
    let mut data = Vec::with_capacity(shape.len());
    for b in 0..first.batch {
        for x in xs {
            data.extend_from_slice(x.item(b));
        }
    }
    Tensor4::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: split into consecutive channel groups.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, sizes: &[usize]) -> Result<Vec<Tensor4<T>>> {
    let s = x.shape();
    if sizes.iter().sum::<usize>() != s.channels || sizes.contains(&0) {
        return Err(Error::shape(format!(
            "channel split {sizes:?} does not partition {} channels",
            s.channels
        )));
    }
    let plane = s.plane();
    let mut parts: Vec<Vec<T>> = sizes
        .iter()
        .map(|&c| Vec::with_capacity(c * plane * s.batch))
        .collect();
    for b in 0..s.batch {
        let item = x.item(b);
        let mut start = 0;
        for (part, &c) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&item[start * plane..(start + c) * plane]);
            start += c;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(data, &c)| Tensor4::from_vec(s.with_channels(c), data))
        .collect()
}

/// Sub-pixel upsampling: `out[b, c, r·h+dy, r·w+dx] = x[b, c·r² + dy·r + dx, h, w]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let s = x.shape();
    if r == 0 || s.channels % (r * r) != 0 {
        return Err(Error::shape(format!(
            "pixel shuffle by {r} needs channels divisible by {}, got {}",
            r * r,
            s.channels
        )));
    }
    let out_shape = Shape4::new(s.batch, s.channels / (r * r), s.height * r, s.width * r);
    let mut out = Tensor4::zeros(out_shape)?;
    for b in 0..s.batch {
        for c in 0..out_shape.channels {
            for dy in 0..r {
                for dx in 0..r {
                    let src = x.plane(b, c * r * r + dy * r + dx);
                    for h in 0..s.height {
                        let row = out.offset(b, c, r * h + dy, 0);
                        let dst = &mut out.data_mut()[row..row + out_shape.width];
                        for (w, &v) in src[h * s.width..(h + 1) * s.width].iter().enumerate() {
                            dst[r * w + dx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse permutation of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let s = x.shape();
    if r == 0 || s.height % r != 0 || s.width % r != 0 {
        return Err(Error::shape(format!(
            "pixel unshuffle by {r} needs spatial dims divisible by {r}, got {}x{}",
            s.height, s.width
        )));
    }
    let out_shape = Shape4::new(s.batch, s.channels * r * r, s.height / r, s.width / r);
    let mut out = Vec::with_capacity(out_shape.len());
    for b in 0..s.batch {
        for c in 0..s.channels {
            for dy in 0..r {
                for dx in 0..r {
                    for h in 0..out_shape.height {
                        for w in 0..out_shape.width {
                            out.push(x.get(b, c, r * h + dy, r * w + dx));
                        }
                    }
                }
            }
        }
    }
    Tensor4::from_vec(out_shape, out)
}

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "relu gradient {} does not match input {}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(x.shape(), data)
}

/// Per-element multipliers applied by [`dropout`]: 0 for dropped elements,
/// `1/(1-rate)` for survivors.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    scale: Vec<T>,
}

impl<T: Scalar> DropoutMask<T> {
    pub fn ones(len: usize) -> Self {
        Self {
            scale: vec![T::one(); len],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.scale
    }

    pub fn survivors(&self) -> usize {
        self.scale.iter().filter(|&&s| s != T::zero()).count()
    }
}

/// Inverted dropout. At inference (`training == false`) the output equals the
/// input exactly and the mask is all ones.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor4<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor4<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::ones(x.len())));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mask = DropoutMask { scale };
    let y = dropout_apply(x, &mask)?;
    Ok((y, mask))
}

fn dropout_apply<T: Scalar>(x: &Tensor4<T>, mask: &DropoutMask<T>) -> Result<Tensor4<T>> {
    if mask.scale.len() != x.len() {
        return Err(Error::shape("dropout mask does not match tensor"));
    }
    let data = x.data().iter().zip(&mask.scale).map(|(&v, &s)| v * s).collect();
    Tensor4::from_vec(x.shape(), data)
}

pub fn dropout_backward<T: Scalar>(mask: &DropoutMask<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    dropout_apply(grad_out, mask)
}
