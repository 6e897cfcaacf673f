//! Stride-1 2-d cross-correlation with zero padding, lowered to one strided
//! GEMM per kernel tap.

use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Borrowed view of a convolution kernel: `weight` is `out_ch × in_ch × kh × kw`
/// row-major, `bias` has `out_ch` entries.
#[derive(Clone, Copy, Debug)]
pub struct KernelRef<'a, T> {
    pub weight: &'a [T],
    pub bias: &'a [T],
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

impl<T> KernelRef<'_, T> {
    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn validate(&self) -> Result<()> {
        if self.out_ch == 0 || self.in_ch == 0 || self.kh == 0 || self.kw == 0 {
            return Err(Error::shape("convolution kernel has a zero dimension"));
        }
        if self.weight.len() != self.out_ch * self.patch_len() {
            return Err(Error::shape(format!(
                "kernel weight length {} does not match {}x{}x{}x{}",
                self.weight.len(),
                self.out_ch,
                self.in_ch,
                self.kh,
                self.kw
            )));
        }
        if self.bias.len() != self.out_ch {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output channels",
                self.bias.len(),
                self.out_ch
            )));
        }
        Ok(())
    }
}

/// Owned convolution kernel with 1×1 or 3×3 spatial support.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    /// `weight` is laid out as (out_ch, in_ch, kh, kw).
    pub fn new(weight: Tensor4<T>, bias: Vec<T>) -> Result<Self> {
        let s = weight.shape();
        if !matches!((s.height, s.width), (1, 1) | (3, 3)) {
            return Err(Error::shape(format!(
                "kernel size {}x{} not supported (1x1 or 3x3)",
                s.height, s.width
            )));
        }
        if bias.len() != s.batch {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                s.batch
            )));
        }
        if !weight.all_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Param("kernel contains non-finite values".into()));
        }
        Ok(Self { weight, bias })
    }

    pub fn view(&self) -> KernelRef<'_, T> {
        let s = self.weight.shape();
        KernelRef {
            weight: self.weight.data(),
            bias: &self.bias,
            out_ch: s.batch,
            in_ch: s.channels,
            kh: s.height,
            kw: s.width,
        }
    }
}

/// Gradients returned by [`conv2d_backward`].
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_weight: Tensor4<T>,
    pub grad_bias: Vec<T>,
}

fn output_dims(x: Shape4, k: &KernelRef<'_, impl Sized>, pad: usize) -> Result<(usize, usize)> {
    if k.in_ch != x.channels {
        return Err(Error::shape(format!(
            "kernel expects {} input channels, got {}",
            k.in_ch, x.channels
        )));
    }
    let oh = (x.height + 2 * pad).checked_sub(k.kh - 1).filter(|&v| v > 0);
    let ow = (x.width + 2 * pad).checked_sub(k.kw - 1).filter(|&v| v > 0);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok((oh, ow)),
        _ => Err(Error::shape(format!(
            "{}x{} kernel with pad {pad} does not fit a {}x{} input",
            k.kh, k.kw, x.height, x.width
        ))),
    }
}

/// Copies `channels` planes of `h × w` into zero-bordered planes of
/// `(h + 2·py) × (w + 2·px)`, followed by `tail` extra zeros so that shifted
/// views of the last plane stay in bounds.
fn pad_planes<T: Scalar>(src: &[T], channels: usize, h: usize, w: usize, (py, px): (usize, usize), tail: usize) -> Vec<T> {
    let (hp, wp) = (h + 2 * py, w + 2 * px);
    let mut out = vec![T::zero(); channels * hp * wp + tail];
    for c in 0..channels {
        for y in 0..h {
            let dst = c * hp * wp + (y + py) * wp + px;
            out[dst..dst + w].copy_from_slice(&src[(c * h + y) * w..(c * h + y + 1) * w]);
        }
    }
    out
}

/// Geometry of a stride-1 correlation evaluated on the padded-width grid.
///
/// With the input padded to `hp × wp` and flattened per channel, the input
/// window of grid position `p = y·wp + x` for kernel tap `(ky, kx)` sits at
/// `p + ky·wp + kx`. Every tap is then a plain strided GEMM over all grid
/// positions; the `wp - ow` trailing columns of each grid row are junk and
/// get cropped away.
struct Grid {
    hp: usize,
    wp: usize,
    oh: usize,
}

impl Grid {
    fn n(&self) -> usize {
        self.oh * self.wp
    }

    fn plane(&self) -> usize {
        self.hp * self.wp
    }
}

/// `grid (m × n) += Σ_taps A_tap (m × k) · shift_tap(src)`, where `A_tap`
/// starts at `a[a_offset(ky, kx)]` with strides `(rsa, csa)` and `src` holds
/// `k` padded planes.
#[allow(clippy::too_many_arguments)]
fn shifted_gemm<T: Scalar>(
    m: usize,
    k: usize,
    kh: usize,
    kw: usize,
    a: &[T],
    a_offset: impl Fn(usize, usize) -> usize,
    rsa: isize,
    csa: isize,
    src: &[T],
    g: &Grid,
    grid: &mut [T],
) {
    let n = g.n();
    for ky in 0..kh {
        for kx in 0..kw {
            let shift = ky * g.wp + kx;
            T::gemm(
                m,
                k,
                n,
                T::one(),
                &a[a_offset(ky, kx)..],
                rsa,
                csa,
                &src[shift..],
                g.plane() as isize,
                1,
                T::one(),
                grid,
                n as isize,
                1,
            );
        }
    }
}

/// Crops each `rows × wp` grid plane to `rows × w` and adds it to `dst`.
fn crop_grid_add<T: Scalar>(grid: &[T], planes: usize, rows: usize, wp: usize, w: usize, dst: &mut [T]) {
    for c in 0..planes {
        for y in 0..rows {
            let src = &grid[(c * rows + y) * wp..(c * rows + y) * wp + w];
            let out = &mut dst[(c * rows + y) * w..(c * rows + y + 1) * w];
            for (o, &v) in out.iter_mut().zip(src) {
                *o += v;
            }
        }
    }
}

fn check_pad(k: &KernelRef<'_, impl Sized>, pad: usize) -> Result<()> {
    if pad >= k.kh || pad >= k.kw {
        return Err(Error::shape(format!(
            "padding {pad} must be smaller than the {}x{} kernel",
            k.kh, k.kw
        )));
    }
    Ok(())
}

/// Cross-correlation of the zero-padded input with `k`, plus bias.
pub fn conv2d_raw<T: Scalar>(x: &Tensor4<T>, k: KernelRef<'_, T>, pad: usize) -> Result<Tensor4<T>> {
    k.validate()?;
    check_pad(&k, pad)?;
    let xs = x.shape();
    let (oh, ow) = output_dims(xs, &k, pad)?;
    let g = Grid {
        hp: xs.height + 2 * pad,
        wp: xs.width + 2 * pad,
        oh,
    };
    let taps = k.kh * k.kw;
    let mut out = Tensor4::zeros(Shape4::new(xs.batch, k.out_ch, oh, ow))?;
    let mut grid = vec![T::zero(); k.out_ch * g.n()];
    for b in 0..xs.batch {
        let padded;
        let src: &[T] = if pad == 0 && k.kh == 1 && k.kw == 1 {
            x.item(b)
        } else {
            padded = pad_planes(x.item(b), xs.channels, xs.height, xs.width, (pad, pad), k.kw - 1);
            &padded
        };
        grid.fill(T::zero());
        shifted_gemm(
            k.out_ch,
            k.in_ch,
            k.kh,
            k.kw,
            k.weight,
            |ky, kx| ky * k.kw + kx,
            (k.in_ch * taps) as isize,
            taps as isize,
            src,
            &g,
            &mut grid,
        );
        let dst = out.item_mut(b);
        for (o, &bias) in k.bias.iter().enumerate() {
            dst[o * oh * ow..(o + 1) * oh * ow].fill(bias);
        }
        crop_grid_add(&grid, k.out_ch, oh, g.wp, ow, dst);
    }
    Ok(out)
}

/// Backward pass of [`conv2d_raw`]. Kernel and bias gradients are
/// accumulated into `grad_w` / `grad_b`; the input gradient is returned when
/// `want_grad_x` is set.
///
/// The input gradient is itself a correlation of the output gradient, padded
/// by `k - 1 - pad`, with the spatially flipped and channel-transposed kernel.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_raw_backward<T: Scalar>(
    x: &Tensor4<T>,
    k: KernelRef<'_, T>,
    pad: usize,
    grad_out: &Tensor4<T>,
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_grad_x: bool,
) -> Result<Option<Tensor4<T>>> {
    k.validate()?;
    check_pad(&k, pad)?;
    let xs = x.shape();
    let (oh, ow) = output_dims(xs, &k, pad)?;
    let expected = Shape4::new(xs.batch, k.out_ch, oh, ow);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "gradient shape {} does not match conv output {expected}",
            grad_out.shape()
        )));
    }
    if grad_w.len() != k.weight.len() || grad_b.len() != k.out_ch {
        return Err(Error::shape("gradient accumulators do not match the kernel"));
    }
    let taps = k.kh * k.kw;
    let fwd = Grid {
        hp: xs.height + 2 * pad,
        wp: xs.width + 2 * pad,
        oh,
    };
    let (tpad_y, tpad_x) = (k.kh - 1 - pad, k.kw - 1 - pad);
    let bwd = Grid {
        hp: oh + 2 * tpad_y,
        wp: ow + 2 * tpad_x,
        oh: xs.height,
    };
    let pointwise = pad == 0 && k.kh == 1 && k.kw == 1;
    let mut grad_x = if want_grad_x { Some(Tensor4::zeros(xs)?) } else { None };
    let mut gout_grid = vec![T::zero(); k.out_ch * fwd.n()];
    let mut gx_grid = if want_grad_x { vec![T::zero(); k.in_ch * bwd.n()] } else { Vec::new() };

    for b in 0..xs.batch {
        let gout = grad_out.item(b);
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += gout[o * oh * ow..(o + 1) * oh * ow].iter().copied().sum::<T>();
        }

        // Output gradient laid out on the forward grid, junk columns zero.
        let padded;
        let src: &[T] = if pointwise {
            x.item(b)
        } else {
            padded = pad_planes(x.item(b), xs.channels, xs.height, xs.width, (pad, pad), k.kw - 1);
            &padded
        };
        let grid_rows: &[T] = if fwd.wp == ow {
            gout
        } else {
            for o in 0..k.out_ch {
                for y in 0..oh {
                    let row = (o * oh + y) * fwd.wp;
                    gout_grid[row..row + ow].copy_from_slice(&gout[(o * oh + y) * ow..(o * oh + y + 1) * ow]);
                }
            }
            &gout_grid
        };
        // grad_w[:, :, ky, kx] (out × in) += grad_grid (out × n) · shift(x)ᵀ (n × in)
        for ky in 0..k.kh {
            for kx in 0..k.kw {
                let shift = ky * fwd.wp + kx;
                T::gemm(
                    k.out_ch,
                    fwd.n(),
                    k.in_ch,
                    T::one(),
                    grid_rows,
                    fwd.n() as isize,
                    1,
                    &src[shift..],
                    1,
                    fwd.plane() as isize,
                    T::one(),
                    &mut grad_w[ky * k.kw + kx..],
                    (k.in_ch * taps) as isize,
                    taps as isize,
                );
            }
        }

        if let Some(gx) = grad_x.as_mut() {
            let gpadded;
            let gsrc: &[T] = if pointwise {
                gout
            } else {
                gpadded = pad_planes(gout, k.out_ch, oh, ow, (tpad_y, tpad_x), k.kw - 1);
                &gpadded
            };
            gx_grid.fill(T::zero());
            shifted_gemm(
                k.in_ch,
                k.out_ch,
                k.kh,
                k.kw,
                k.weight,
                |ky, kx| (k.kh - 1 - ky) * k.kw + (k.kw - 1 - kx),
                taps as isize,
                (k.in_ch * taps) as isize,
                gsrc,
                &bwd,
                &mut gx_grid,
            );
            crop_grid_add(&gx_grid, k.in_ch, xs.height, bwd.wp, xs.width, gx.item_mut(b));
        }
    }
    Ok(grad_x)
}

/// Same-padding convolution: `pad = 1` for 3×3 kernels and `pad = 0` for 1×1
/// keep the spatial size unchanged.
pub fn conv2d<T: Scalar>(x: &Tensor4<T>, k: &ConvKernel<T>, pad: usize) -> Result<Tensor4<T>> {
    conv2d_raw(x, k.view(), pad)
}

/// Exact gradients of `sum(grad_out ⊙ conv2d(x, k, pad))`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    k: &ConvKernel<T>,
    pad: usize,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let mut grad_w = vec![T::zero(); k.weight.len()];
    let mut grad_b = vec![T::zero(); k.bias.len()];
    let grad_x = conv2d_raw_backward(x, k.view(), pad, grad_out, &mut grad_w, &mut grad_b, true)?
        .expect("input gradient requested");
    Ok(ConvGrads {
        grad_x,
        grad_weight: Tensor4::from_vec(k.weight.shape(), grad_w)?,
        grad_bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_kernel(out_ch: usize, in_ch: usize, size: usize) -> ConvKernel<f64> {
        ConvKernel::new(
            Tensor4::filled(Shape4::new(out_ch, in_ch, size, size), 1.0).unwrap(),
            vec![0.0; out_ch],
        )
        .unwrap()
    }

    #[test]
    fn box_sum_of_padded_ones() {
        let x = Tensor4::filled(Shape4::new(1, 1, 3, 3), 1.0).unwrap();
        let y = conv2d(&x, &ones_kernel(1, 1, 3), 1).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 3, 3));
        assert_eq!(y.get(0, 0, 1, 1), 9.0);
        for (h, w) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.get(0, 0, h, w), 4.0);
        }
        assert_eq!(y.get(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn unit_pointwise_kernel_is_identity() {
        let x = Tensor4::from_fn(Shape4::new(2, 1, 3, 5), |b, _, h, w| (b * 31 + h * 7 + w) as f64 - 4.5).unwrap();
        let y = conv2d(&x, &ones_kernel(1, 1, 1), 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let x = Tensor4::<f64>::zeros(Shape4::new(1, 2, 4, 4)).unwrap();
        assert!(matches!(conv2d(&x, &ones_kernel(1, 3, 3), 1), Err(Error::Shape(_))));
    }

    #[test]
    fn unsupported_kernel_size_rejected() {
        let w = Tensor4::<f32>::zeros(Shape4::new(1, 1, 5, 5)).unwrap();
        assert!(ConvKernel::new(w, vec![0.0]).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let x = Tensor4::from_fn(Shape4::new(1, 2, 4, 4), |_, c, h, w| (c + h * w) as f64).unwrap();
        let k = ones_kernel(3, 2, 3);
        let g = Tensor4::zeros(Shape4::new(1, 3, 4, 4)).unwrap();
        let grads = conv2d_backward(&x, &k, 1, &g).unwrap();
        assert!(grads.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_weight.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_input_gradient_is_scaled_grad_out() {
        let x = Tensor4::from_fn(Shape4::new(1, 1, 3, 3), |_, _, h, w| (h + w) as f64).unwrap();
        let k = ConvKernel::new(Tensor4::filled(Shape4::new(1, 1, 1, 1), -2.5).unwrap(), vec![0.3]).unwrap();
        let g = Tensor4::from_fn(Shape4::new(1, 1, 3, 3), |_, _, h, w| (h * 3 + w) as f64).unwrap();
        let grads = conv2d_backward(&x, &k, 0, &g).unwrap();
        assert_eq!(grads.grad_x, g.map(|v| -2.5 * v));
    }

    #[test]
    fn same_padding_preserves_spatial_dims() {
        let x = Tensor4::<f32>::zeros(Shape4::new(2, 3, 7, 5)).unwrap();
        let k3 = ConvKernel::new(Tensor4::zeros(Shape4::new(4, 3, 3, 3)).unwrap(), vec![0.0; 4]).unwrap();
        let k1 = ConvKernel::new(Tensor4::zeros(Shape4::new(4, 3, 1, 1)).unwrap(), vec![0.0; 4]).unwrap();
        assert_eq!(conv2d(&x, &k3, 1).unwrap().shape(), Shape4::new(2, 4, 7, 5));
        assert_eq!(conv2d(&x, &k1, 0).unwrap().shape(), Shape4::new(2, 4, 7, 5));
    }

    fn naive(x: &Tensor4<f64>, k: &ConvKernel<f64>, pad: usize, g: &Tensor4<f64>) -> (Tensor4<f64>, ConvGrads<f64>) {
        let xs = x.shape();
        let ws = k.weight.shape();
        let (oh, ow) = (xs.height + 2 * pad + 1 - ws.height, xs.width + 2 * pad + 1 - ws.width);
        let mut y = Tensor4::zeros(Shape4::new(xs.batch, ws.batch, oh, ow)).unwrap();
        let mut gx = Tensor4::zeros(xs).unwrap();
        let mut gw = Tensor4::zeros(ws).unwrap();
        let mut gb = vec![0.0; ws.batch];
        for b in 0..xs.batch {
            for o in 0..ws.batch {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = k.bias[o];
                        let go = g.get(b, o, i, j);
                        gb[o] += go;
                        for c in 0..xs.channels {
                            for u in 0..ws.height {
                                for v in 0..ws.width {
                                    let (yy, xx) = ((i + u) as isize - pad as isize, (j + v) as isize - pad as isize);
                                    if yy < 0 || xx < 0 || yy >= xs.height as isize || xx >= xs.width as isize {
                                        continue;
                                    }
                                    let (yy, xx) = (yy as usize, xx as usize);
                                    let w = k.weight.get(o, c, u, v);
                                    acc += w * x.get(b, c, yy, xx);
                                    gx.set(b, c, yy, xx, gx.get(b, c, yy, xx) + w * go);
                                    gw.set(o, c, u, v, gw.get(o, c, u, v) + x.get(b, c, yy, xx) * go);
                                }
                            }
                        }
                        y.set(b, o, i, j, acc);
                    }
                }
            }
        }
        (
            y,
            ConvGrads {
                grad_x: gx,
                grad_weight: gw,
                grad_bias: gb,
            },
        )
    }

    #[test]
    fn matches_direct_summation_with_gradients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..40 {
            let size = if case % 2 == 0 { 3 } else { 1 };
            let pad = if size == 3 { rng.gen_range(0..=1) } else { 0 };
            let xs = Shape4::new(rng.gen_range(1..3), rng.gen_range(1..5), rng.gen_range(3..9), rng.gen_range(3..9));
            let out_ch = rng.gen_range(1..5);
            let x = Tensor4::from_fn(xs, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
            let w = Tensor4::from_fn(Shape4::new(out_ch, xs.channels, size, size), |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
            let k = ConvKernel::new(w, (0..out_ch).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let y = conv2d(&x, &k, pad).unwrap();
            let g = Tensor4::from_fn(y.shape(), |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
            let (ey, eg) = naive(&x, &k, pad, &g);
            let got = conv2d_backward(&x, &k, pad, &g).unwrap();
            assert!(y.max_abs_diff(&ey).unwrap() < 1e-12, "case {case}");
            assert!(got.grad_x.max_abs_diff(&eg.grad_x).unwrap() < 1e-12, "case {case}");
            assert!(got.grad_weight.max_abs_diff(&eg.grad_weight).unwrap() < 1e-12, "case {case}");
            for (a, b) in got.grad_bias.iter().zip(&eg.grad_bias) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
