use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParamStore;
use crate::error::Result;

/// Objective value together with a fingerprint of the piecewise-linear
/// regime it was evaluated in (ReLU signs, max-pool winners). Central
/// differences are only meaningful when both probes stay in the regime of the
/// base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub regime: u64,
}

/// A scalar function of a parameter store with an analytic gradient.
pub trait Objective {
    fn evaluate(&self, params: &ParamStore<f64>) -> Result<Evaluation>;

    /// Zeroes the gradients, fills them with the analytic gradient and
    /// returns the value.
    fn value_and_grad(&self, params: &mut ParamStore<f64>) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error, so that gradients that are
    /// zero up to rounding do not blow it up.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            step: 1e-5,
            tolerance: 1e-5,
            abs_floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Probes discarded because a perturbation crossed a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Parameter name and element index of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }
}

/// Compares the analytic gradient of `objective` to central differences on a
/// random subset of scalar parameters.
pub fn grad_check<O: Objective + ?Sized>(
    objective: &O,
    params: &mut ParamStore<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    objective.value_and_grad(params)?;
    let base = objective.evaluate(params)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();

    let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let wanted = cfg.samples.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tried = HashSet::new();
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
        tolerance: cfg.tolerance,
    };

    while report.checked < wanted && tried.len() < total {
        let flat = rng.gen_range(0..total);
        if !tried.insert(flat) {
            continue;
        }
        let (mut pi, mut off) = (0, flat);
        while off >= sizes[pi] {
            off -= sizes[pi];
            pi += 1;
        }
        let original = params.iter().nth(pi).expect("index in range").value[off];
        let set = |params: &mut ParamStore<f64>, v: f64| {
            params.iter_mut().nth(pi).expect("index in range").value[off] = v;
        };
        set(params, original + cfg.step);
        let plus = objective.evaluate(params);
        set(params, original - cfg.step);
        let minus = objective.evaluate(params);
        set(params, original);
        let (plus, minus) = (plus?, minus?);
        if plus.regime != base.regime || minus.regime != base.regime {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.step);
        let a = analytic[pi][off];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.abs_floor);
        report.checked += 1;
        if rel >= report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.iter().nth(pi).expect("index in range").name().to_string(), off));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamKind;

    /// f(w) = Σ cᵢ·wᵢ² with an optionally corrupted gradient.
    struct Quadratic {
        coeffs: Vec<f64>,
        flip_sign: bool,
    }

    impl Objective for Quadratic {
        fn evaluate(&self, params: &ParamStore<f64>) -> Result<Evaluation> {
            let w = &params.iter().next().unwrap().value;
            Ok(Evaluation {
                value: w.iter().zip(&self.coeffs).map(|(w, c)| c * w * w).sum(),
                regime: 0,
            })
        }

        fn value_and_grad(&self, params: &mut ParamStore<f64>) -> Result<f64> {
            let v = self.evaluate(params)?.value;
            let p = params.iter_mut().next().unwrap();
            let sign = if self.flip_sign { -1.0 } else { 1.0 };
            for ((g, w), c) in p.grad.iter_mut().zip(&p.value).zip(&self.coeffs) {
                *g = sign * 2.0 * c * w;
            }
            Ok(v)
        }
    }

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::Weight, &[300], (0..300).map(|i| (i as f64 * 0.37).sin() + 0.1).collect())
            .unwrap();
        s
    }

    #[test]
    fn correct_gradient_passes() {
        let obj = Quadratic {
            coeffs: (0..300).map(|i| 1.0 + i as f64 / 100.0).collect(),
            flip_sign: false,
        };
        let report = grad_check(&obj, &mut store(), &GradCheckConfig::default()).unwrap();
        assert_eq!(report.checked, 200);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn sign_flip_fails() {
        let obj = Quadratic {
            coeffs: vec![1.0; 300],
            flip_sign: true,
        };
        let report = grad_check(&obj, &mut store(), &GradCheckConfig::default()).unwrap();
        assert!(!report.passed());
        assert!(report.max_rel_error > 1.0);
    }

    #[test]
    fn parameters_restored_after_check() {
        let obj = Quadratic {
            coeffs: vec![2.0; 300],
            flip_sign: false,
        };
        let mut s = store();
        let before = s.iter().next().unwrap().value.clone();
        grad_check(&obj, &mut s, &GradCheckConfig::default()).unwrap();
        assert_eq!(s.iter().next().unwrap().value, before);
    }
}
