//! Encoders, aggregators, classifier heads and the composed MIL losses.

pub mod aggregate;
pub mod encoder;
pub mod gaussian;
mod loss;
pub mod params;

pub use aggregate::{
    aggregate_anomaly, aggregate_attention, aggregate_max, aggregate_mean, aggregate_rgp,
    AggregatorKind, DEFAULT_ATTENTION_HIDDEN, RGP_VAR_EPSILON,
};
pub use encoder::{encode, Activation, EncoderConfig};
pub use gaussian::{fit_negative_gaussian, NegativeGaussian};
pub use loss::{gamma_schedule, total_loss, LossParts};
pub use params::{BoundParams, ParamSet, Parameter};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Node, Tape};
use crate::tensor::Tensor;
use crate::toporeg::TopoRegError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid encoder config: {0}")]
    InvalidEncoder(String),
    #[error("unknown activation '{name}'")]
    UnknownActivation { name: String },
    #[error("instances have width {got}, encoder expects {expected}")]
    InstanceWidth { expected: usize, got: usize },
    #[error("{op}: latents must be a nonempty rank-2 array, got shape {shape:?}")]
    BadLatents { op: &'static str, shape: Vec<usize> },
    #[error("empty bag")]
    EmptyBag,
    #[error("duplicate parameter '{name}'")]
    DuplicateParameter { name: String },
    #[error("unknown parameter '{name}'")]
    UnknownParameter { name: String },
    #[error("parameter '{name}' expects shape {expected:?}, got {got:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("regressor-guided pooling requires exactly 2 classes, got {got}")]
    RgpBinaryOnly { got: usize },
    #[error("anomaly pooling requires a fitted negative Gaussian")]
    UnfittedGaussian,
    #[error("need at least 2 negative-bag latents to fit a Gaussian, got {got}")]
    TooFewNegativeLatents { got: usize },
    #[error("covariance not positive definite at ridge {ridge}; increase the ridge")]
    CovarianceNotPd { ridge: f64 },
    #[error("model has {expected} classes but bag label is {got}")]
    LabelOutOfRange { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    TopoReg(#[from] TopoRegError),
}

/// Architecture description: encoder, aggregator, head sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub aggregator: AggregatorKind,
    pub n_classes: usize,
    pub dual_head: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.n_classes < 2 {
            return Err(ModelError::InvalidEncoder(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if matches!(self.aggregator, AggregatorKind::Rgp) && self.n_classes != 2 {
            return Err(ModelError::RgpBinaryOnly {
                got: self.n_classes,
            });
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }
}

/// Everything one forward pass produces for a bag.
#[derive(Debug)]
pub struct BagOutput<'t> {
    /// Bag representation zeta.
    pub zeta: Node<'t>,
    /// Bag logits (length n_classes).
    pub logits: Node<'t>,
    /// Latent instance rows (n × latent).
    pub latents: Node<'t>,
    /// Detached pooling weights; empty for max/mean.
    pub instance_weights: Vec<f64>,
    /// Per-instance logits when the dual head is active.
    pub instance_logits: Option<Node<'t>>,
}

/// A MIL model: config, parameters, and (for anomaly pooling) the fitted
/// negative Gaussian.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub negative_gaussian: Option<NegativeGaussian>,
}

impl Model {
    /// Builds a model with parameters drawn uniformly from
    /// ±sqrt(1/fan_in), in declaration order, from a ChaCha8 stream seeded
    /// with `seed`. The declaration order is fixed: encoder layers
    /// (w then b per layer), aggregator parameters, head, instance head.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut init = |params: &mut ParamSet,
                        name: &str,
                        shape: &[usize],
                        fan_in: usize|
         -> Result<(), ModelError> {
            let bound = (1.0 / fan_in as f64).sqrt();
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
            params.register(name, Tensor::new(shape.to_vec(), data))?;
            Ok(())
        };

        let sizes = &config.encoder.layer_sizes;
        for l in 0..config.encoder.layer_count() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            init(&mut params, &format!("enc.w{l}"), &[fan_in, fan_out], fan_in)?;
            init(&mut params, &format!("enc.b{l}"), &[1, fan_out], fan_in)?;
        }
        let latent = config.latent_dim();
        match config.aggregator {
            AggregatorKind::Max | AggregatorKind::Mean => {}
            AggregatorKind::Attention { hidden } => {
                init(&mut params, "att.v", &[latent, hidden], latent)?;
                init(&mut params, "att.w", &[hidden, 1], hidden)?;
            }
            AggregatorKind::Rgp => {
                init(&mut params, "rgp.w", &[latent, 2], latent)?;
                init(&mut params, "rgp.b", &[1, 2], latent)?;
            }
            AggregatorKind::Anomaly { hidden } => {
                init(&mut params, "att.v", &[latent, hidden], latent)?;
                init(&mut params, "att.w", &[hidden, 1], hidden)?;
                init(&mut params, "ano.wd", &[1], 1)?;
                init(&mut params, "ano.wa", &[1], 1)?;
            }
        }
        if !matches!(config.aggregator, AggregatorKind::Rgp) {
            init(&mut params, "head.w", &[latent, config.n_classes], latent)?;
            init(&mut params, "head.b", &[1, config.n_classes], latent)?;
        }
        if config.dual_head {
            init(&mut params, "ihead.w", &[latent, config.n_classes], latent)?;
            init(&mut params, "ihead.b", &[1, config.n_classes], latent)?;
        }
        Ok(Model {
            config,
            params,
            negative_gaussian: None,
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        BoundParams::bind(&self.params, tape)
    }

    /// Full forward pass of one bag of instances.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &BoundParams<'t>,
        instances: &Tensor,
    ) -> Result<BagOutput<'t>, ModelError> {
        if instances.shape().len() != 2 || instances.rows() == 0 {
            return Err(ModelError::EmptyBag);
        }
        let n = instances.rows();
        let xn = tape.constant(instances);
        let z = encode(&self.config.encoder, &self.params, bound, tape, xn)?;

        let (zeta, instance_weights) = match &self.config.aggregator {
            AggregatorKind::Max => (aggregate_max(z)?, Vec::new()),
            AggregatorKind::Mean => (aggregate_mean(z)?, Vec::new()),
            AggregatorKind::Attention { .. } => {
                let v = bound.node(&self.params, "att.v");
                let w = bound.node(&self.params, "att.w");
                let (zeta, weights) = aggregate_attention(tape, z, v, w)?;
                (zeta, weights.value().into_data())
            }
            AggregatorKind::Rgp => {
                let w = bound.node(&self.params, "rgp.w");
                let b = bound.node(&self.params, "rgp.b");
                let (zeta, weights) = aggregate_rgp(tape, z, w, b)?;
                (zeta, weights.value().into_data())
            }
            AggregatorKind::Anomaly { .. } => {
                let gaussian = self
                    .negative_gaussian
                    .as_ref()
                    .ok_or(ModelError::UnfittedGaussian)?;
                let v = bound.node(&self.params, "att.v");
                let w = bound.node(&self.params, "att.w");
                let wd = bound.node(&self.params, "ano.wd");
                let wa = bound.node(&self.params, "ano.wa");
                let (zeta, weights) = aggregate_anomaly(tape, z, v, w, gaussian, wd, wa)?;
                (zeta, weights.value().into_data())
            }
        };

        let (head_w, head_b) = if matches!(self.config.aggregator, AggregatorKind::Rgp) {
            (
                bound.node(&self.params, "rgp.w"),
                bound.node(&self.params, "rgp.b"),
            )
        } else {
            (
                bound.node(&self.params, "head.w"),
                bound.node(&self.params, "head.b"),
            )
        };
        let logits = classify(zeta, head_w, head_b)?;

        let instance_logits = if self.config.dual_head {
            let ones = tape.constant(&Tensor::matrix(n, 1, vec![1.0; n]));
            let iw = bound.node(&self.params, "ihead.w");
            let ib = bound.node(&self.params, "ihead.b");
            Some(z.matmul(iw)?.add(ones.matmul(ib)?)?)
        } else {
            None
        };

        Ok(BagOutput {
            zeta,
            logits,
            latents: z,
            instance_weights,
            instance_logits,
        })
    }

    /// Class probabilities for a bag (softmax of the bag logits), without
    /// touching gradients.
    pub fn predict_probs(&self, instances: &Tensor) -> Result<Vec<f64>, ModelError> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let out = self.forward(&tape, &bound, instances)?;
        Ok(out.logits.softmax()?.value().into_data())
    }
}

/// Single linear classifier head: latent vector -> class logits. Softmax is
/// applied only inside losses and metrics.
pub fn classify<'t>(
    zeta: Node<'t>,
    head_w: Node<'t>,
    head_b: Node<'t>,
) -> Result<Node<'t>, ModelError> {
    let latent = zeta.len();
    let classes = head_w.shape()[1];
    let logits = zeta
        .reshape(&[1, latent])?
        .matmul(head_w)?
        .add(head_b)?
        .reshape(&[classes])?;
    Ok(logits)
}
