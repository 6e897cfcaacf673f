use super::{ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Mean squared error over all elements and its gradient `2(pred - target)/N`.
pub fn euclidean_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(T, Tensor4<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {} does not match target {}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0f64;
    let scale = T::from_f64_lossy(2.0 / n);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    Ok((T::from_f64_lossy(sum / n), Tensor4::from_vec(pred.shape(), grad)?))
}

/// `coeff · Σ w²` over weight arrays (biases excluded).
pub fn l2_penalty<T: Scalar>(params: &ParamStore<T>, coeff: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    coeff
        * params
            .iter()
            .filter(|p| p.kind() == ParamKind::Weight)
            .flat_map(|p| p.value.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
}

/// Adds the gradient of [`l2_penalty`], `2·coeff·w`, to every weight gradient.
pub fn apply_l2<T: Scalar>(params: &mut ParamStore<T>, coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    let factor = T::from_f64_lossy(2.0 * coeff);
    for p in params.iter_mut().filter(|p| p.kind() == ParamKind::Weight) {
        for (g, &w) in p.grad.iter_mut().zip(&p.value) {
            *g += factor * w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape4;

    fn t(v: Vec<f64>) -> Tensor4<f64> {
        Tensor4::from_vec(Shape4::new(1, 1, 1, v.len()), v).unwrap()
    }

    #[test]
    fn identical_inputs_have_zero_loss() {
        let a = t(vec![1.0, -2.0, 3.5]);
        let (loss, grad) = euclidean_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_offset_has_unit_loss() {
        let target = t(vec![1.0, -2.0, 3.5, 0.0]);
        let pred = target.map(|v| v + 1.0);
        let (loss, grad) = euclidean_loss(&pred, &target).unwrap();
        assert_eq!(loss, 1.0);
        assert!(grad.data().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let target = t((0..12).map(|i| (i as f64 * 0.7).sin()).collect());
        let pred = t((0..12).map(|i| (i as f64 * 0.3).cos()).collect());
        let (_, grad) = euclidean_loss(&pred, &target).unwrap();
        let h = 1e-5;
        for i in 0..pred.len() {
            let mut plus = pred.clone();
            plus.data_mut()[i] += h;
            let mut minus = pred.clone();
            minus.data_mut()[i] -= h;
            let fd = (euclidean_loss(&plus, &target).unwrap().0 - euclidean_loss(&minus, &target).unwrap().0) / (2.0 * h);
            let g = grad.data()[i];
            assert!((fd - g).abs() / g.abs().max(1e-12) < 1e-8, "index {i}: {fd} vs {g}");
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            euclidean_loss(&t(vec![1.0]), &t(vec![1.0, 2.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn weight_decay_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", ParamKind::Weight, &[1], vec![3.0]).unwrap();
        let b = store.add("b", ParamKind::Bias, &[1], vec![3.0]).unwrap();
        apply_l2(&mut store, 0.0);
        assert_eq!(store.get(w).grad, vec![0.0]);
        apply_l2(&mut store, 1e-6);
        assert!((store.get(w).grad[0] - 6e-6).abs() < 1e-18);
        assert_eq!(store.get(b).grad, vec![0.0]);
        assert!((l2_penalty(&store, 1e-6) - 9e-6).abs() < 1e-18);
    }
}
