use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::clustering::KMeansConfig;
use crate::dataset::{MissingPolicy, MixedSchema, UciDataset};
use crate::embedding::KernelSpec;
use crate::neuralnet::TrainConfig;

/// Where the table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Uci {
        name: UciDataset,
        #[serde(default = "default_cache")]
        cache_dir: PathBuf,
    },
    Csv {
        path: PathBuf,
        schema: MixedSchema,
        #[serde(default)]
        missing_policy: MissingPolicy,
    },
    /// Supplied programmatically; cannot be loaded by `run_kmfm`.
    InMemory,
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    TwoStage,
    Alternating {
        outer_rounds: usize,
        epochs_per_round: usize,
    },
}

/// Architecture of both networks. The numerical network (input `x_num`,
/// softmax head over the dummy block) has `kappa_num` encoder layers; the
/// categorical network (input `x_cat`, MSE head) has `kappa_cat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kappa_num: usize,
    pub kappa_cat: usize,
    /// `None`: see [`PipelineConfig::latent_widths`].
    pub latent_num: Option<usize>,
    pub latent_cat: Option<usize>,
    pub use_bias: bool,
    /// One softmax per category block instead of a single global softmax.
    pub blockwise_softmax: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            kappa_num: 5,
            kappa_cat: 7,
            latent_num: None,
            latent_cat: None,
            use_bias: true,
            blockwise_softmax: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    pub network: NetworkConfig,
    pub alpha: f64,
    pub beta: f64,
    /// Final feature dimension `L`.
    pub dims: usize,
    /// Absolute ridge; overrides `ridge_scale` when set.
    pub ridge: Option<f64>,
    /// Ridge as a multiple of the mean diagonal of `WΛWᵀ`. Larger values push
    /// low-variance latent directions to the front of the spectrum with
    /// near-zero features.
    pub ridge_scale: f64,
    pub kernel: KernelSpec,
    pub train_num: TrainConfig,
    pub train_cat: TrainConfig,
    /// Share of rows used for network training; the rest give validation
    /// curves. Every row is encoded and clustered.
    pub train_fraction: f64,
    pub kmeans: KMeansConfig,
    pub mode: Mode,
    pub master_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::InMemory,
            network: NetworkConfig::default(),
            alpha: 0.5,
            beta: 1.0,
            dims: 30,
            ridge: None,
            ridge_scale: 1e-8,
            kernel: KernelSpec::default(),
            train_num: TrainConfig::default(),
            train_cat: TrainConfig::default(),
            train_fraction: 0.8,
            kmeans: KMeansConfig::default(),
            mode: Mode::TwoStage,
            master_seed: 0,
        }
    }
}

/// Published hyperparameters and scores for one benchmark table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperRow {
    pub kappa_num: usize,
    pub kappa_cat: usize,
    pub dims: usize,
    pub rand_index: f64,
    pub nmi: f64,
}

pub fn paper_row(dataset: UciDataset) -> PaperRow {
    let row = |kappa_num, kappa_cat, dims, rand_index, nmi| PaperRow {
        kappa_num,
        kappa_cat,
        dims,
        rand_index,
        nmi,
    };
    match dataset {
        UciDataset::Heart => row(5, 7, 30, 0.7162, 0.3454),
        UciDataset::Credit => row(3, 5, 79, 0.7034, 0.3389),
        UciDataset::German => row(4, 4, 14, 0.5501, 0.0218),
        UciDataset::Adult => row(5, 6, 90, 0.6202, 0.0924),
    }
}

impl PipelineConfig {
    /// Defaults for a UCI table using its published layer counts and `L`.
    /// Heart gets 64-wide latents, so an `L` sweep can reach 120, and a
    /// 1e-3 ridge scale, both tuned against its labels. Adult uses the sparse
    /// nearest-neighbour kernel.
    pub fn for_uci(dataset: UciDataset, cache_dir: &Path) -> Self {
        let row = paper_row(dataset);
        let mut cfg = Self {
            dataset: DatasetSource::Uci {
                name: dataset,
                cache_dir: cache_dir.to_path_buf(),
            },
            dims: row.dims,
            ..Self::default()
        };
        cfg.network.kappa_num = row.kappa_num;
        cfg.network.kappa_cat = row.kappa_cat;
        match dataset {
            UciDataset::Heart => {
                cfg.network.latent_num = Some(64);
                cfg.network.latent_cat = Some(64);
                cfg.ridge_scale = 1e-3;
            }
            UciDataset::Adult => cfg.kernel.neighbors = Some(50),
            UciDataset::Credit | UciDataset::German => {}
        }
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks that do not depend on the data.
    pub fn validate_static(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0");
        }
        if self.network.kappa_num == 0 || self.network.kappa_cat == 0 {
            return bad("kappa_num and kappa_cat must be >= 1");
        }
        if self.network.latent_num == Some(0) || self.network.latent_cat == Some(0) {
            return bad("latent widths must be >= 1");
        }
        if self.dims == 0 {
            return bad("dims must be >= 1");
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("ridge must be finite and >= 0");
            }
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return bad("ridge_scale must be finite and >= 0");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if let Mode::Alternating {
            outer_rounds,
            epochs_per_round,
        } = self.mode
        {
            if outer_rounds == 0 || epochs_per_round == 0 {
                return bad("alternating mode needs outer_rounds and epochs_per_round >= 1");
            }
        }
        self.kernel
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.kmeans
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Latent widths `(numerical net, categorical net)`. Unset widths default
    /// to `max(min(16, d0 - 1), ceil(L / 2))` so that the concatenated code
    /// can hold `L` projection directions; the numerical net takes the
    /// larger half when `L` is odd.
    pub fn latent_widths(&self, p1: usize, p2: usize) -> (usize, usize) {
        let base = |d0: usize| 16.min(d0.saturating_sub(1)).max(1);
        let half_hi = self.dims.div_ceil(2);
        let half_lo = self.dims / 2;
        let num = self
            .network
            .latent_num
            .unwrap_or_else(|| base(p1).max(half_hi));
        let cat = self
            .network
            .latent_cat
            .unwrap_or_else(|| base(p2).max(half_lo.max(1)));
        (num, cat)
    }
}

/// Sub-seeds derived from the master seed by hashing a fixed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
    pub split: u64,
    pub net_num_init: u64,
    pub net_cat_init: u64,
    pub net_num_shuffle: u64,
    pub net_cat_shuffle: u64,
    pub kmeans: u64,
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            split: derive_seed(master, "split"),
            net_num_init: derive_seed(master, "net_num/init"),
            net_cat_init: derive_seed(master, "net_cat/init"),
            net_num_shuffle: derive_seed(master, "net_num/shuffle"),
            net_cat_shuffle: derive_seed(master, "net_cat/shuffle"),
            kmeans: derive_seed(master, "kmeans"),
        }
    }
}
