//! Strict flat key=value config parsing.
//!
//! Unknown keys are hard errors so typos never pass silently. Paths inside
//! a config file resolve relative to the file's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use topomil::datasets::{parse_kv_text, BagDatasetSpec};
use topomil::milcore::{
    Activation, AggregatorKind, EncoderConfig, ModelConfig, DEFAULT_ATTENTION_HIDDEN,
};
use topomil::training::{SweepConfig, TrainConfig};

/// A parsed config file with consumption tracking: every key must be read
/// exactly once by the command that owns the file.
pub struct KvConfig {
    values: HashMap<String, String>,
    used: std::cell::RefCell<std::collections::HashSet<String>>,
    base_dir: PathBuf,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let entries = parse_kv_text(&text)?;
        let mut values = HashMap::new();
        for (k, v) in entries {
            if values.insert(k.clone(), v).is_some() {
                bail!("duplicate config key '{k}'");
            }
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(KvConfig {
            values,
            used: Default::default(),
            base_dir,
        })
    }

    fn raw(&self, key: &str) -> Option<&String> {
        let v = self.values.get(key);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        self.raw(key).cloned()
    }

    pub fn req_str(&self, key: &str) -> Result<String> {
        self.raw(key)
            .cloned()
            .ok_or_else(|| anyhow!("missing required config key '{key}'"))
    }

    pub fn opt_parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("bad value '{v}' for config key '{key}'")),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.opt_parse(key)?.unwrap_or(default))
    }

    pub fn req_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.req_str(key)?;
        v.parse()
            .map_err(|_| anyhow!("bad value '{v}' for config key '{key}'"))
    }

    /// Resolves a path value relative to the config file.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base_dir.join(v))
    }

    /// Errors if any key was never consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let mut unknown: Vec<&String> =
            self.values.keys().filter(|k| !used.contains(*k)).collect();
        unknown.sort();
        if let Some(first) = unknown.first() {
            bail!("unknown config key '{first}'");
        }
        Ok(())
    }
}

fn parse_usize_list(text: &str, key: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| anyhow!("bad entry '{s}' in '{key}'"))
        })
        .collect()
}

pub fn parse_model_config(cfg: &KvConfig) -> Result<ModelConfig> {
    let layer_sizes = parse_usize_list(&cfg.req_str("encoder_layers")?, "encoder_layers")?;
    let activations: Vec<Activation> = cfg
        .req_str("encoder_activations")?
        .split(',')
        .map(|s| Activation::parse(s.trim()).map_err(|e| anyhow!(e)))
        .collect::<Result<_>>()?;
    let hidden = cfg.parse_or("attention_hidden", DEFAULT_ATTENTION_HIDDEN)?;
    let aggregator = match cfg.req_str("aggregator")?.as_str() {
        "max" => AggregatorKind::Max,
        "mean" => AggregatorKind::Mean,
        "attention" => AggregatorKind::Attention { hidden },
        "rgp" => AggregatorKind::Rgp,
        "anomaly" => AggregatorKind::Anomaly { hidden },
        other => bail!("unknown aggregator '{other}'"),
    };
    let model = ModelConfig {
        encoder: EncoderConfig::new(layer_sizes, activations)?,
        aggregator,
        n_classes: cfg.parse_or("n_classes", 2)?,
        dual_head: cfg.parse_or("dual_head", false)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn parse_train_config(cfg: &KvConfig) -> Result<TrainConfig> {
    let model = parse_model_config(cfg)?;
    let train = TrainConfig {
        model,
        lambda: cfg.parse_or("lambda", 0.0)?,
        learning_rate: cfg.req_parse("learning_rate")?,
        betas: (
            cfg.parse_or("adam_beta1", 0.9)?,
            cfg.parse_or("adam_beta2", 0.999)?,
        ),
        epsilon: cfg.parse_or("adam_epsilon", 1e-8)?,
        max_epochs: cfg.req_parse("max_epochs")?,
        patience: cfg.opt_parse("patience")?,
        seed: cfg.parse_or("seed", 0)?,
        ridge: cfg.parse_or("ridge", 1e-3)?,
    };
    train.validate()?;
    Ok(train)
}

/// Fraction of training bags held out for validation by `topomil train`.
pub fn parse_val_fraction(cfg: &KvConfig) -> Result<f64> {
    let f: f64 = cfg.parse_or("val_fraction", 0.0)?;
    if !(0.0..1.0).contains(&f) {
        bail!("val_fraction must be in [0, 1), got {f}");
    }
    Ok(f)
}

/// Toy-dataset generation spec (`topomil gen --kind toy`).
pub struct ToySpec {
    pub n_bags: usize,
    pub bag_size_mean: f64,
    pub bag_size_std: f64,
    pub dim: usize,
    pub seed: u64,
}

pub fn parse_toy_spec(cfg: &KvConfig) -> Result<ToySpec> {
    Ok(ToySpec {
        n_bags: cfg.req_parse("n_bags")?,
        bag_size_mean: cfg.req_parse("bag_size_mean")?,
        bag_size_std: cfg.req_parse("bag_size_std")?,
        dim: cfg.parse_or("dim", 100)?,
        seed: cfg.parse_or("seed", 0)?,
    })
}

/// Where a labeled instance pool comes from.
pub enum PoolSource {
    /// Hypersphere/normal synthetic pool.
    Toy {
        positives: usize,
        negatives: usize,
        dim: usize,
        seed: u64,
    },
    /// IDX image/label file pair.
    Idx { images: PathBuf, labels: PathBuf },
}

pub fn parse_pool_source(cfg: &KvConfig) -> Result<PoolSource> {
    match cfg.req_str("pool")?.as_str() {
        "toy" => Ok(PoolSource::Toy {
            positives: cfg.req_parse("pool_positives")?,
            negatives: cfg.req_parse("pool_negatives")?,
            dim: cfg.parse_or("pool_dim", 100)?,
            seed: cfg.parse_or("pool_seed", 0)?,
        }),
        "idx" => Ok(PoolSource::Idx {
            images: cfg
                .path("pool_images")
                .ok_or_else(|| anyhow!("missing required config key 'pool_images'"))?,
            labels: cfg
                .path("pool_labels")
                .ok_or_else(|| anyhow!("missing required config key 'pool_labels'"))?,
        }),
        other => bail!("unknown pool source '{other}' (expected 'toy' or 'idx')"),
    }
}

/// Bag-sampling spec for `gen --kind pool-bags`.
pub fn parse_bag_spec(cfg: &KvConfig) -> Result<BagDatasetSpec> {
    Ok(BagDatasetSpec {
        n_bags: cfg.req_parse("n_bags")?,
        bag_size_mean: cfg.req_parse("bag_size_mean")?,
        bag_size_std: cfg.req_parse("bag_size_std")?,
        positive_fraction_cap: cfg.parse_or("positive_fraction_cap", 0.2)?,
        positive_class: cfg.parse_or("positive_class", 1)?,
        seed: cfg.parse_or("seed", 0)?,
    })
}

fn parse_size_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (m, s) = pair
                .split_once(':')
                .ok_or_else(|| anyhow!("bag_sizes entries are mean:std, got '{pair}'"))?;
            Ok((
                m.trim()
                    .parse()
                    .map_err(|_| anyhow!("bad mean in '{pair}'"))?,
                s.trim()
                    .parse()
                    .map_err(|_| anyhow!("bad std in '{pair}'"))?,
            ))
        })
        .collect()
}

pub struct SweepFile {
    pub pool: PoolSource,
    pub sweep: SweepConfig,
    pub out: PathBuf,
}

pub fn parse_sweep_config(cfg: &KvConfig, threads: Option<usize>) -> Result<SweepFile> {
    let pool = parse_pool_source(cfg)?;
    let train = parse_train_config(cfg)?;
    let sweep = SweepConfig {
        bag_counts: parse_usize_list(&cfg.req_str("bag_counts")?, "bag_counts")?,
        bag_sizes: parse_size_pairs(&cfg.req_str("bag_sizes")?)?,
        runs: cfg.parse_or("runs", 5)?,
        test_bags: cfg.parse_or("test_bags", 100)?,
        positive_fraction_cap: cfg.parse_or("positive_fraction_cap", 0.2)?,
        positive_class: cfg.parse_or("positive_class", 1)?,
        base_seed: cfg.parse_or("base_seed", 0)?,
        train,
        threads,
    };
    let out = cfg
        .path("out")
        .ok_or_else(|| anyhow!("missing required config key 'out'"))?;
    Ok(SweepFile { pool, sweep, out })
}
