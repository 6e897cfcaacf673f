//! Mini-batch training loop: epochs over freshly sampled patches, the
//! step-wise learning-rate schedule, loss logging and checkpoints.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{apply_l2, euclidean_loss, Checkpoint, Nadam, ParamStore, TrainConfig};
use crate::data::{sample_patches, HsiCube, PatchSet};
use crate::error::{Error, Result};
use crate::network::{Mode, Network};
use crate::tensor::Tensor4;

/// Loss is logged every this many optimizer steps.
pub const LOG_EVERY: u64 = 10;

/// One row of the loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,epoch,lr,loss";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.epoch, self.lr, self.loss)
    }
}

/// Why a checkpoint was emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    /// End of learning-rate phase `n` (zero-based).
    Phase(usize),
    /// Parameters before the step that diverged.
    LastGood,
}

pub enum TrainEvent<'a> {
    Log(&'a LossRecord),
    Checkpoint(CheckpointKind, &'a Checkpoint),
}

/// Supplies the training patches of each epoch.
pub trait PatchSource {
    fn epoch_patches(&mut self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<PatchSet>;
}

/// The same patches every epoch.
pub struct FixedPatches(pub PatchSet);

impl PatchSource for FixedPatches {
    fn epoch_patches(&mut self, _epoch: usize, _rng: &mut ChaCha8Rng) -> Result<PatchSet> {
        Ok(self.0.clone())
    }
}

/// A training image: simulated input and ground-truth cube.
#[derive(Clone, Debug)]
pub struct TrainImage {
    pub id: String,
    pub input: HsiCube,
    pub target: HsiCube,
}

/// Draws fresh random windows from every image at the start of each epoch.
pub struct ImageSampler {
    pub images: Vec<TrainImage>,
    pub patches_per_image: usize,
    pub patch_size: usize,
    pub augmentation: bool,
}

impl PatchSource for ImageSampler {
    fn epoch_patches(&mut self, _epoch: usize, rng: &mut ChaCha8Rng) -> Result<PatchSet> {
        let first = self.images.first().ok_or_else(|| Error::Input("no training images".into()))?;
        let mut set = PatchSet::new(self.patch_size, first.input.bands(), first.target.bands());
        for img in &self.images {
            set.extend(sample_patches(
                &img.id,
                &img.input,
                &img.target,
                self.patches_per_image,
                self.patch_size,
                self.augmentation,
                rng,
            )?)?;
        }
        Ok(set)
    }
}

/// Owns the parameters and optimizer state of one training run.
pub struct Trainer<'a> {
    network: &'a Network,
    params: ParamStore<f32>,
    config: TrainConfig,
    optimizer: Nadam,
    rng: ChaCha8Rng,
    step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(network: &'a Network, params: ParamStore<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            network,
            params,
            optimizer: Nadam {
                beta1: config.beta1,
                beta2: config.beta2,
                epsilon: config.epsilon,
            },
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            step: 0,
        })
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn into_params(self) -> ParamStore<f32> {
        self.params
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec_text: self.network.spec().to_text(),
            step: self.step,
            params: self.params.clone(),
        }
    }

    /// Dropout-free Euclidean loss of the current parameters.
    pub fn eval_loss(&self, input: &Tensor4<f32>, target: &Tensor4<f32>) -> Result<f64> {
        let pred = self.network.forward(&self.params, input, &mut Mode::Eval)?;
        Ok(euclidean_loss(&pred, target)?.0 as f64)
    }

    /// One optimizer step on a batch; returns the batch's Euclidean loss
    /// (without the weight penalty) under training-mode dropout.
    pub fn train_step(&mut self, input: &Tensor4<f32>, target: &Tensor4<f32>, lr: f64) -> Result<f64> {
        let mut mode = Mode::Train {
            rng: &mut self.rng,
            dropout_rate: self.config.dropout_rate,
        };
        let (pred, cache) = self.network.forward_cached(&self.params, input, &mut mode)?;
        let (loss, grad) = euclidean_loss(&pred, target)?;
        let loss = loss as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step: self.step + 1 });
        }
        self.params.zero_grad();
        self.network.backward(&mut self.params, &cache, &grad)?;
        apply_l2(&mut self.params, self.config.l2_coeff);
        self.optimizer.step(&mut self.params, lr, self.step + 1)?;
        self.step += 1;
        Ok(loss)
    }

    /// Runs the whole schedule. Each epoch draws its patches from `source`,
    /// shuffles them and walks them in batches of `batch_size` (the last
    /// batch may be smaller). A checkpoint is emitted after every schedule
    /// phase; on divergence the pre-step parameters are emitted as
    /// [`CheckpointKind::LastGood`] before the error is returned.
    pub fn run(
        &mut self,
        source: &mut dyn PatchSource,
        on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
    ) -> Result<Vec<LossRecord>> {
        let mut log = Vec::new();
        let boundaries = self.config.phase_boundaries();
        for epoch in 0..self.config.total_epochs() {
            let lr = self.config.lr_at_epoch(epoch).expect("epoch inside schedule");
            let patches = source.epoch_patches(epoch, &mut self.rng)?;
            if patches.is_empty() {
                return Err(Error::Input("epoch has no training patches".into()));
            }
            let mut order: Vec<usize> = (0..patches.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                let (x, t) = patches.batch(chunk)?;
                let loss = match self.train_step(&x, &t, lr) {
                    Ok(loss) => loss,
                    Err(e @ (Error::Diverged { .. } | Error::Training { .. })) => {
                        on_event(TrainEvent::Checkpoint(CheckpointKind::LastGood, &self.checkpoint()))?;
                        return Err(e);
                    }
                    Err(e) => return Err(e),
                };
                if self.step % LOG_EVERY == 0 {
                    let rec = LossRecord {
                        step: self.step,
                        epoch,
                        lr,
                        loss,
                    };
                    on_event(TrainEvent::Log(&rec))?;
                    log.push(rec);
                }
            }
            if let Some(phase) = boundaries.iter().position(|&b| b == epoch + 1) {
                on_event(TrainEvent::Checkpoint(CheckpointKind::Phase(phase), &self.checkpoint()))?;
            }
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::LrPhase;
    use crate::data::{Patch, PatchOrigin};
    use crate::network::{build_network, NetworkSpec};
    use rand::Rng;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            in_channels: 2,
            out_channels: 3,
            num_scales: 1,
            layers_per_block: 1,
            growth_filters: 2,
            stem_filters: 4,
            ..NetworkSpec::default()
        }
    }

    fn patches(n: usize, seed: u64) -> PatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = PatchSet::new(4, 2, 3);
        for i in 0..n {
            set.patches.push(Patch {
                input: (0..32).map(|_| rng.gen_range(0.0..1.0)).collect(),
                target: (0..48).map(|_| rng.gen_range(0.0..1.0)).collect(),
                origin: PatchOrigin {
                    image: format!("p{i}"),
                    top: 0,
                    left: 0,
                    code: 0,
                },
            });
        }
        set
    }

    fn config() -> TrainConfig {
        TrainConfig {
            lr_schedule: vec![LrPhase { epochs: 3, lr: 0.002 }, LrPhase { epochs: 2, lr: 0.0002 }],
            batch_size: 2,
            ..TrainConfig::default()
        }
    }

    fn run_once() -> (Vec<LossRecord>, Vec<(CheckpointKind, u64)>) {
        let spec = tiny_spec();
        let (net, params) = build_network::<f32, _>(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut trainer = Trainer::new(&net, params, config()).unwrap();
        let mut ckpts = Vec::new();
        let log = trainer
            .run(&mut FixedPatches(patches(8, 2)), &mut |ev| {
                if let TrainEvent::Checkpoint(kind, c) = ev {
                    ckpts.push((kind, c.step));
                }
                Ok(())
            })
            .unwrap();
        (log, ckpts)
    }

    #[test]
    fn schedule_logging_and_checkpoints() {
        let (log, ckpts) = run_once();
        // 8 patches / batch 2 = 4 steps per epoch, 5 epochs.
        assert_eq!(log.iter().map(|r| r.step).collect::<Vec<_>>(), vec![10, 20]);
        assert_eq!((log[0].epoch, log[0].lr), (2, 0.002));
        assert_eq!((log[1].epoch, log[1].lr), (4, 0.0002));
        assert_eq!(ckpts, vec![(CheckpointKind::Phase(0), 12), (CheckpointKind::Phase(1), 20)]);
    }

    #[test]
    fn same_seed_same_log() {
        assert_eq!(run_once(), run_once());
    }

    #[test]
    fn divergence_reports_last_good() {
        let spec = tiny_spec();
        let (net, params) = build_network::<f32, _>(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut trainer = Trainer::new(&net, params, config()).unwrap();
        let mut bad = patches(4, 3);
        bad.patches[1].target[5] = f32::NAN;
        let mut kinds = Vec::new();
        let err = trainer
            .run(&mut FixedPatches(bad), &mut |ev| {
                if let TrainEvent::Checkpoint(kind, _) = ev {
                    kinds.push(kind);
                }
                Ok(())
            })
            .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert_eq!(kinds, vec![CheckpointKind::LastGood]);
        assert!(trainer.params().iter().all(|p| p.value.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn steps_reduce_loss_on_fixed_batch() {
        let spec = tiny_spec();
        let (net, params) = build_network::<f32, _>(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig {
            dropout_rate: 0.0,
            ..config()
        };
        let mut trainer = Trainer::new(&net, params, cfg).unwrap();
        let set = patches(2, 4);
        let (x, t) = set.batch(&[0, 1]).unwrap();
        let before = trainer.eval_loss(&x, &t).unwrap();
        for _ in 0..200 {
            trainer.train_step(&x, &t, 0.01).unwrap();
        }
        assert!(trainer.eval_loss(&x, &t).unwrap() < 0.5 * before);
    }
}
