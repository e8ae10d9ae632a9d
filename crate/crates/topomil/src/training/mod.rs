//! Training loop, cross-validation, metrics and the scarcity sweep.

mod adam;
mod folds;
mod metrics;
mod sweep;

pub use adam::{adam_step, AdamState};
pub use folds::k_fold;
pub use metrics::{auroc_binary, compute_report, MetricsReport};
pub use sweep::{
    read_sweep_csv, scarcity_sweep, scarcity_sweep_resume, write_sweep_csv, SweepCell,
    SweepConfig, SweepResults, SweepSummaryRow,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::datasets::{Bag, DataError};
use crate::milcore::{
    fit_negative_gaussian, gamma_schedule, total_loss, AggregatorKind, Model, ModelConfig,
    ModelError, NegativeGaussian,
};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("no training bags")]
    NoBags,
    #[error("anomaly pooling needs at least one negative training bag")]
    NoNegativeBags,
    #[error("bag '{id}' has width {got}, encoder expects {expected}")]
    BagWidth {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Everything a training run needs, including the model architecture.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Weight of the topological regularization term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Early stopping patience on validation accuracy, when a validation
    /// split is supplied.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Ridge added to the negative-Gaussian covariance diagonal.
    pub ridge: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "max_epochs must be >= 1".to_string(),
            ));
        }
        if let Some(p) = self.patience {
            if p == 0 {
                return Err(TrainError::InvalidConfig(
                    "patience must be >= 1 when present".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// One completed epoch's record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_class: f64,
    pub loss_topo_fwd: f64,
    pub loss_topo_rev: f64,
    pub val_accuracy: Option<f64>,
    pub val_f1: Option<f64>,
}

/// Per-epoch training records, one per completed epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Best validation accuracy over the run, if a validation split ran.
    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.val_accuracy)
            .fold(None, |best, v| Some(best.map_or(v, |b: f64| b.max(v))))
    }

    /// Serializes as `epoch,loss_class,loss_topo_fwd,loss_topo_rev,
    /// val_accuracy,val_f1`; missing validation columns stay empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_class,loss_topo_fwd,loss_topo_rev,val_accuracy,val_f1\n");
        for e in &self.epochs {
            let val_acc = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
            let val_f1 = e.val_f1.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.loss_class, e.loss_topo_fwd, e.loss_topo_rev, val_acc, val_f1
            ));
        }
        out
    }
}

fn check_bags(bags: &[Bag], config: &TrainConfig) -> Result<()> {
    if bags.is_empty() {
        return Err(TrainError::NoBags);
    }
    let expected = config.model.encoder.input_dim();
    for bag in bags {
        if bag.dim() != expected {
            return Err(TrainError::BagWidth {
                id: bag.id.clone(),
                expected,
                got: bag.dim(),
            });
        }
    }
    Ok(())
}

/// Encodes all instances of the negative (label 0) training bags with the
/// current parameters and fits the pooling Gaussian; scores stay detached.
fn refit_negative_gaussian(
    model: &Model,
    bags: &[Bag],
    ridge: f64,
) -> Result<NegativeGaussian> {
    let latent = model.config.latent_dim();
    let mut rows: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for bag in bags.iter().filter(|b| b.label == 0) {
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let xn = tape.constant(&bag.instances);
        let z = crate::milcore::encode(&model.config.encoder, &model.params, &bound, &tape, xn)?;
        let values = z.value();
        rows.extend_from_slice(values.data());
        count += values.rows();
    }
    if count < 2 {
        return Err(TrainError::NoNegativeBags);
    }
    Ok(fit_negative_gaussian(
        &Tensor::matrix(count, latent, rows),
        ridge,
    )?)
}

/// Trains a model on `train_bags`, batch size 1, shuffling bag order each
/// epoch from a seeded stream. When `val_bags` is supplied the returned
/// model is the best-validation-accuracy snapshot (ties to the earlier
/// epoch) and early stopping applies if the config carries a patience;
/// otherwise the final-epoch model is returned.
pub fn train(
    train_bags: &[Bag],
    val_bags: Option<&[Bag]>,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    check_bags(train_bags, config)?;
    if let Some(v) = val_bags {
        check_bags(v, config)?;
    }
    let anomaly = matches!(config.model.aggregator, AggregatorKind::Anomaly { .. });
    if anomaly && !train_bags.iter().any(|b| b.label == 0) {
        return Err(TrainError::NoNegativeBags);
    }

    let mut model = Model::new(config.model.clone(), config.seed)?;
    let mut adam = AdamState::new(&model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..config.max_epochs {
        if anomaly {
            model.negative_gaussian =
                Some(refit_negative_gaussian(&model, train_bags, config.ridge)?);
        }
        let gamma = if model.config.dual_head {
            gamma_schedule(epoch, config.max_epochs)
        } else {
            0.0
        };

        let mut order: Vec<usize> = (0..train_bags.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut sums = (0.0, 0.0, 0.0);
        for &b in &order {
            let bag = &train_bags[b];
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let (loss, parts) = total_loss(&tape, &model, &bound, bag, config.lambda, gamma)?;
            loss.backward().map_err(ModelError::from)?;
            model.params.zero_grads();
            bound.pull_grads(&mut model.params);
            adam_step(
                &mut model.params,
                &mut adam,
                config.learning_rate,
                config.betas.0,
                config.betas.1,
                config.epsilon,
            );
            sums.0 += parts.class;
            sums.1 += parts.topo_forward;
            sums.2 += parts.topo_reverse;
        }
        let n = train_bags.len() as f64;

        let (val_accuracy, val_f1) = match val_bags {
            Some(vb) => {
                let report = evaluate(&model, vb)?;
                (Some(report.accuracy), Some(report.macro_f1))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss_class: sums.0 / n,
            loss_topo_fwd: sums.1 / n,
            loss_topo_rev: sums.2 / n,
            val_accuracy,
            val_f1,
        });

        if let Some(acc) = val_accuracy {
            let improved = best.as_ref().map_or(true, |(b, _, _)| acc > *b);
            if improved {
                best = Some((acc, epoch, model.clone()));
            } else if let Some(patience) = config.patience {
                let since = epoch - best.as_ref().expect("set on first epoch").1;
                if since >= patience {
                    break;
                }
            }
        }
    }

    if let Some((_, _, snapshot)) = best {
        model = snapshot;
    }
    Ok((model, history))
}

/// Deterministic validation split: shuffles seeded, takes ceil(fraction * n)
/// bags for validation but always leaves at least one training bag.
pub fn split_validation(bags: &[Bag], fraction: f64, seed: u64) -> (Vec<Bag>, Vec<Bag>) {
    let mut order: Vec<usize> = (0..bags.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x76a1_55e5);
    order.shuffle(&mut rng);
    let n_val = ((fraction * bags.len() as f64).ceil() as usize).min(bags.len().saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    (
        train_idx.iter().map(|&i| bags[i].clone()).collect(),
        val_idx.iter().map(|&i| bags[i].clone()).collect(),
    )
}

/// Evaluates a frozen model on a bag set.
pub fn evaluate(model: &Model, bags: &[Bag]) -> Result<MetricsReport> {
    if bags.is_empty() {
        return Err(TrainError::NoBags);
    }
    let mut y_true = Vec::with_capacity(bags.len());
    let mut probs = Vec::with_capacity(bags.len());
    for bag in bags {
        probs.push(model.predict_probs(&bag.instances)?);
        y_true.push(bag.label);
    }
    Ok(compute_report(model.config.n_classes, &y_true, &probs))
}
