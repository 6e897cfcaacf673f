use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hypersr::autodiff::TrainConfig;
use hypersr::network::NetworkSpec;
use serde::{Deserialize, Serialize};

/// Everything a training run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Seeds network initialization, the split and the training RNG.
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Simulated input images, `<id>.json`.
    pub input_dir: PathBuf,
    /// Ground-truth cubes with the same ids.
    pub target_dir: PathBuf,
    /// File with `train:` / `test:` sections; without it a seeded two-fold
    /// split is used and `fold` selects which half trains.
    #[serde(default)]
    pub split_file: Option<PathBuf>,
    #[serde(default)]
    pub fold: usize,
    #[serde(default = "default_patches")]
    pub patches_per_image: usize,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_true")]
    pub augmentation: bool,
}

fn default_patches() -> usize {
    200
}

fn default_patch_size() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        // Absolute paths keep the written snapshot valid wherever it lands.
        let rebase = |p: &mut PathBuf| {
            if let Ok(abs) = std::path::absolute(base.join(&*p)) {
                *p = abs;
            }
        };
        rebase(&mut cfg.out_dir);
        rebase(&mut cfg.data.input_dir);
        rebase(&mut cfg.data.target_dir);
        if let Some(p) = cfg.data.split_file.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        if self.data.patch_size % self.network.size_multiple() != 0 {
            bail!(
                "patch_size {} is not a multiple of {}",
                self.data.patch_size,
                self.network.size_multiple()
            );
        }
        if self.data.patches_per_image == 0 {
            bail!("patches_per_image must be at least 1");
        }
        if self.data.split_file.is_none() && self.data.fold > 1 {
            bail!("fold must be 0 or 1 for the two-fold split");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "out_dir = \"run\"\n[data]\ninput_dir = \"in\"\ntarget_dir = \"gt\"\n";

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.data.patches_per_image, 200);
        assert_eq!(cfg.network, NetworkSpec::default());
        assert_eq!(cfg.train.batch_size, 16);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}colour = 1\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
        let text = format!("{MINIMAL}[train]\nlearning_rate = 0.1\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_example_matches_defaults() {
        let text = r#"
out_dir = "run"
seed = 0

[data]
input_dir = "rgb"          # <id>.json input images
target_dir = "gt"          # <id>.json ground-truth cubes
split_file = "split.txt"   # optional; otherwise a seeded two-fold split
fold = 0
patches_per_image = 200
patch_size = 64
augmentation = true        # the 8 rotations/flips

[network]
in_channels = 3
out_channels = 31
num_scales = 5
layers_per_block = 4
growth_filters = 16
stem_filters = 32
dropout_rate = 0.5

[train]
batch_size = 16
dropout_rate = 0.5
l2_coeff = 1e-6
lr_schedule = [{ epochs = 100, lr = 0.002 }, { epochs = 200, lr = 0.0002 }]
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.network, NetworkSpec::default());
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.data.split_file.as_deref(), Some(Path::new("split.txt")));
    }
}
