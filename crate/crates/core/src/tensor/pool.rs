use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Winner positions of a 2×2 max-pool, one flat input offset per output
/// element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndex {
    input_shape: Shape4,
    winners: Vec<u32>,
}

impl PoolIndex {
    pub fn input_shape(&self) -> Shape4 {
        self.input_shape
    }

    pub fn winners(&self) -> &[u32] {
        &self.winners
    }
}

/// 2×2 max-pooling with stride 2. Ties go to the first element of the window
/// in row-major order.
pub fn max_pool2x2<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndex)> {
    let s = x.shape();
    if s.height % 2 != 0 || s.width % 2 != 0 {
        return Err(Error::shape(format!(
            "max-pool needs even spatial dims, got {}x{}",
            s.height, s.width
        )));
    }
    if s.len() > u32::MAX as usize {
        return Err(Error::shape("tensor too large for pooling index"));
    }
    let out_shape = Shape4::new(s.batch, s.channels, s.height / 2, s.width / 2);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut winners = Vec::with_capacity(out_shape.len());
    let data = x.data();
    let w = s.width;
    for plane in 0..s.batch * s.channels {
        let base = plane * s.plane();
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if data[cand] > data[best] {
                        best = cand;
                    }
                }
                out.push(data[best]);
                winners.push(best as u32);
            }
        }
    }
    Ok((
        Tensor4::from_vec(out_shape, out)?,
        PoolIndex {
            input_shape: s,
            winners,
        },
    ))
}

/// Routes each output gradient to its window's winning input position.
pub fn max_pool2x2_backward<T: Scalar>(index: &PoolIndex, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let s = index.input_shape;
    let expected = Shape4::new(s.batch, s.channels, s.height / 2, s.width / 2);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "pool gradient {} does not match output {expected}",
            grad_out.shape()
        )));
    }
    let mut grad = Tensor4::zeros(s)?;
    let g = grad.data_mut();
    for (&i, &v) in index.winners.iter().zip(grad_out.data()) {
        g[i as usize] += v;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum() {
        let x = Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = max_pool2x2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx.winners(), &[3]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let x = Tensor4::filled(Shape4::new(2, 3, 4, 6), 1.25f64).unwrap();
        let (y, _) = max_pool2x2(&x).unwrap();
        assert_eq!(y.shape(), Shape4::new(2, 3, 2, 3));
        assert!(y.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor4::<f32>::zeros(Shape4::new(1, 1, 3, 4)).unwrap();
        assert!(matches!(max_pool2x2(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn one_gradient_per_window_on_distinct_values() {
        let x = Tensor4::from_fn(Shape4::new(1, 2, 4, 4), |_, c, h, w| ((h * 4 + w) * 7 % 16) as f64 + c as f64 * 0.5).unwrap();
        let (y, idx) = max_pool2x2(&x).unwrap();
        let g = max_pool2x2_backward(&idx, &Tensor4::filled(y.shape(), 1.0).unwrap()).unwrap();
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut total = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            total += g.get(0, c, 2 * oy + dy, 2 * ox + dx);
                        }
                    }
                    assert_eq!(total, 1.0);
                }
            }
        }
    }

    #[test]
    fn tie_routes_gradient_to_top_left() {
        let x = Tensor4::filled(Shape4::new(1, 1, 2, 2), 3.0f64).unwrap();
        let (_, idx) = max_pool2x2(&x).unwrap();
        let g = max_pool2x2_backward(&idx, &Tensor4::filled(Shape4::new(1, 1, 1, 1), 1.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
