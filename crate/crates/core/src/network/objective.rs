use super::{Mode, Network};
use crate::autodiff::{apply_l2, euclidean_loss, l2_penalty, Evaluation, Objective, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor4;

/// Euclidean loss of the network in inference mode plus the L2 weight
/// penalty, as a function of the parameters.
pub struct RegressionObjective<'a> {
    pub network: &'a Network,
    pub input: Tensor4<f64>,
    pub target: Tensor4<f64>,
    pub l2_coeff: f64,
}

impl Objective for RegressionObjective<'_> {
    fn evaluate(&self, params: &ParamStore<f64>) -> Result<Evaluation> {
        let (pred, cache) = self.network.forward_cached(params, &self.input, &mut Mode::Eval)?;
        let (loss, _) = euclidean_loss(&pred, &self.target)?;
        Ok(Evaluation {
            value: loss + l2_penalty(params, self.l2_coeff),
            regime: cache.regime_hash(),
        })
    }

    fn value_and_grad(&self, params: &mut ParamStore<f64>) -> Result<f64> {
        params.zero_grad();
        let (pred, cache) = self.network.forward_cached(params, &self.input, &mut Mode::Eval)?;
        let (loss, grad) = euclidean_loss(&pred, &self.target)?;
        self.network.backward(params, &cache, &grad)?;
        apply_l2(params, self.l2_coeff);
        Ok(loss + l2_penalty(params, self.l2_coeff))
    }
}
