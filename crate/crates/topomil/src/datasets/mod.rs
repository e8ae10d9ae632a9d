//! Bag datasets: synthetic generators and file ingestion.

mod bag_csv;
mod builder;
mod idx;
mod manifest;
mod toy;

pub use bag_csv::{load_bag_csv, parse_bag_csv, write_bag_csv};
pub use builder::build_bags;
pub use idx::{load_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use manifest::{parse_kv_text, read_manifest, write_manifest};
pub use toy::{gen_toy, gen_toy_pool, TOY_POSITIVE_FRACTION_CAP};

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("{file}: wrong magic number: expected 0x{expected:08x}, got 0x{got:08x}")]
    WrongMagic {
        file: String,
        expected: u32,
        got: u32,
    },
    #[error("{file}: truncated: needed {needed} bytes, had {had}")]
    Truncated {
        file: String,
        needed: usize,
        had: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("line {line}: expected {expected} fields, got {got}")]
    RaggedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: field '{field}' is not a finite number")]
    NonNumeric { line: usize, field: String },
    #[error("line {line}: bad label '{field}': labels are nonnegative integers")]
    BadLabel { line: usize, field: String },
    #[error("bag '{bag_id}' has conflicting labels {a} and {b}")]
    InconsistentBagLabel { bag_id: String, a: usize, b: usize },
    #[error("missing or malformed header: expected 'bag_id,label,f1,...'")]
    BadHeader,
    #[error("pool exhausted: bag needs {needed} distinct {class} instances, pool has {available}")]
    PoolExhausted {
        needed: usize,
        available: usize,
        class: &'static str,
    },
    #[error("manifest line {line}: expected 'key=value', got '{content}'")]
    BadManifestLine { line: usize, content: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One MIL bag: an ordered set of instance feature vectors with one label.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub id: String,
    /// n×d instance rows.
    pub instances: Tensor,
    pub label: usize,
    /// Optional grouping key for group-aware fold splitting (for example a
    /// patient id). Bags without a group are their own group.
    pub group: Option<String>,
}

impl Bag {
    pub fn n_instances(&self) -> usize {
        self.instances.rows()
    }

    pub fn dim(&self) -> usize {
        self.instances.cols()
    }
}

/// A pool of individually labeled instances that bags are sampled from.
#[derive(Clone, Debug)]
pub struct InstancePool {
    /// m×d feature rows.
    pub features: Tensor,
    /// One label per row.
    pub labels: Vec<usize>,
}

impl InstancePool {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Declarative description of a sampled bag dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct BagDatasetSpec {
    pub n_bags: usize,
    pub bag_size_mean: f64,
    pub bag_size_std: f64,
    /// Upper bound on the positive-instance fraction inside positive bags.
    pub positive_fraction_cap: f64,
    /// Which pool label counts as positive; every other label is negative.
    pub positive_class: usize,
    pub seed: u64,
}

impl BagDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_bags == 0 {
            return Err(DataError::InvalidSpec("n_bags must be >= 1".to_string()));
        }
        if !(self.bag_size_mean > 0.0) {
            return Err(DataError::InvalidSpec(
                "bag_size_mean must be positive".to_string(),
            ));
        }
        if !(self.bag_size_std >= 0.0) {
            return Err(DataError::InvalidSpec(
                "bag_size_std must be nonnegative".to_string(),
            ));
        }
        if !(self.positive_fraction_cap > 0.0 && self.positive_fraction_cap <= 1.0) {
            return Err(DataError::InvalidSpec(format!(
                "positive_fraction_cap must be in (0, 1], got {}: a positive bag must be allowed ≥ 1 positive instance",
                self.positive_fraction_cap
            )));
        }
        Ok(())
    }
}

impl Default for BagDatasetSpec {
    fn default() -> Self {
        BagDatasetSpec {
            n_bags: 10,
            bag_size_mean: 10.0,
            bag_size_std: 2.0,
            positive_fraction_cap: 0.2,
            positive_class: 1,
            seed: 0,
        }
    }
}
