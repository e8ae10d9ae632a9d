//! Instance encoders: stacks of linear layers with per-layer activations.

use crate::autodiff::{Node, Tape};
use crate::tensor::Tensor;

use super::params::{BoundParams, ParamSet};
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "none" => Ok(Activation::None),
            other => Err(ModelError::UnknownActivation {
                name: other.to_string(),
            }),
        }
    }
}

/// Widths input -> ... -> latent plus one activation per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl EncoderConfig {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self, ModelError> {
        let cfg = EncoderConfig {
            layer_sizes,
            activations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layer_sizes.len() < 2 {
            return Err(ModelError::InvalidEncoder(
                "need at least one layer (two widths)".to_string(),
            ));
        }
        if self.layer_sizes.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidEncoder("zero-width layer".to_string()));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(ModelError::InvalidEncoder(format!(
                "{} widths need {} activations, got {}",
                self.layer_sizes.len(),
                self.layer_sizes.len() - 1,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Encodes an n×d instance matrix into n×latent rows; all instances share
/// the layer parameters.
pub fn encode<'t>(
    config: &EncoderConfig,
    params: &ParamSet,
    bound: &BoundParams<'t>,
    tape: &'t Tape,
    instances: Node<'t>,
) -> Result<Node<'t>, ModelError> {
    let shape = instances.shape();
    if shape.len() != 2 || shape[1] != config.input_dim() {
        return Err(ModelError::InstanceWidth {
            expected: config.input_dim(),
            got: shape.get(1).copied().unwrap_or(0),
        });
    }
    let n = shape[0];
    // Bias rows are replicated across instances via a constant ones column.
    let ones = tape.constant(&Tensor::matrix(n, 1, vec![1.0; n]));
    let mut h = instances;
    for l in 0..config.layer_count() {
        let w = bound.node(params, &format!("enc.w{l}"));
        let b = bound.node(params, &format!("enc.b{l}"));
        h = h.matmul(w)?.add(ones.matmul(b)?)?;
        h = match config.activations[l] {
            Activation::Relu => h.relu(),
            Activation::Tanh => h.tanh(),
            Activation::None => h,
        };
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milcore::{AggregatorKind, Model, ModelConfig};

    fn identity_encoder_model(d: usize) -> Model {
        let config = ModelConfig {
            encoder: EncoderConfig::new(vec![d, d], vec![Activation::None]).unwrap(),
            aggregator: AggregatorKind::Mean,
            n_classes: 2,
            dual_head: false,
        };
        let mut model = Model::new(config, 0).unwrap();
        let mut eye = Tensor::zeros(&[d, d]);
        for i in 0..d {
            eye.data_mut()[i * d + i] = 1.0;
        }
        model.params.set_value("enc.w0", eye).unwrap();
        model
            .params
            .set_value("enc.b0", Tensor::zeros(&[1, d]))
            .unwrap();
        model
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let model = identity_encoder_model(3);
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]);
        let tape = Tape::new();
        let bound = BoundParams::bind(&model.params, &tape);
        let xn = tape.constant(&x);
        let z = encode(&model.config.encoder, &model.params, &bound, &tape, xn).unwrap();
        assert_eq!(z.value().data(), x.data());
    }

    #[test]
    fn zero_weights_relu_gives_zero_latents() {
        let config = ModelConfig {
            encoder: EncoderConfig::new(vec![4, 3], vec![Activation::Relu]).unwrap(),
            aggregator: AggregatorKind::Mean,
            n_classes: 2,
            dual_head: false,
        };
        let mut model = Model::new(config, 0).unwrap();
        model
            .params
            .set_value("enc.w0", Tensor::zeros(&[4, 3]))
            .unwrap();
        model
            .params
            .set_value("enc.b0", Tensor::zeros(&[1, 3]))
            .unwrap();
        let tape = Tape::new();
        let bound = BoundParams::bind(&model.params, &tape);
        let xn = tape.constant(&Tensor::matrix(2, 4, vec![1.0; 8]));
        let z = encode(&model.config.encoder, &model.params, &bound, &tape, xn).unwrap();
        assert!(z.value().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn toy_architecture_shapes() {
        // 100 -> 64 -> 2 with ReLU activations on both layers.
        let config = ModelConfig {
            encoder: EncoderConfig::new(
                vec![100, 64, 2],
                vec![Activation::Relu, Activation::Relu],
            )
            .unwrap(),
            aggregator: AggregatorKind::Rgp,
            n_classes: 2,
            dual_head: false,
        };
        let model = Model::new(config, 7).unwrap();
        let n = 9;
        let x = Tensor::matrix(n, 100, (0..n * 100).map(|i| (i as f64).cos()).collect());
        let tape = Tape::new();
        let bound = BoundParams::bind(&model.params, &tape);
        let xn = tape.constant(&x);
        let z = encode(&model.config.encoder, &model.params, &bound, &tape, xn).unwrap();
        assert_eq!(z.shape(), vec![n, 2]);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let model = identity_encoder_model(3);
        let tape = Tape::new();
        let bound = BoundParams::bind(&model.params, &tape);
        let xn = tape.constant(&Tensor::matrix(2, 5, vec![0.0; 10]));
        assert!(matches!(
            encode(&model.config.encoder, &model.params, &bound, &tape, xn),
            Err(ModelError::InstanceWidth {
                expected: 3,
                got: 5
            })
        ));
    }
}
