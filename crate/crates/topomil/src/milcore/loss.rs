//! The combined training objective: classification plus weighted topology.

use crate::autodiff::{Node, Tape};
use crate::datasets::Bag;
use crate::toporeg::topo_loss;

use super::params::BoundParams;
use super::{Model, ModelError};

/// Detached per-term values recorded into the training history.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub class: f64,
    pub topo_forward: f64,
    pub topo_reverse: f64,
}

/// Instance-loss coefficient for the dual head: linear decay from 0.5 at
/// the first epoch to 0.0 at the last.
pub fn gamma_schedule(epoch: usize, max_epochs: usize) -> f64 {
    if max_epochs <= 1 {
        return 0.5;
    }
    let t = epoch.min(max_epochs - 1) as f64 / (max_epochs - 1) as f64;
    0.5 * (1.0 - t)
}

/// L_total = L_class + lambda * L_topo for one bag.
///
/// With the dual head, L_class = (1 - gamma) * L_bag + gamma * mean_i
/// L_instance_i where every instance reuses the bag label; otherwise it is
/// the plain bag cross-entropy. The topological term compares input and
/// latent instance geometry and is zero for single-instance bags.
pub fn total_loss<'t>(
    tape: &'t Tape,
    model: &Model,
    bound: &BoundParams<'t>,
    bag: &Bag,
    lambda: f64,
    gamma: f64,
) -> Result<(Node<'t>, LossParts), ModelError> {
    if bag.label >= model.config.n_classes {
        return Err(ModelError::LabelOutOfRange {
            expected: model.config.n_classes,
            got: bag.label,
        });
    }
    let out = model.forward(tape, bound, &bag.instances)?;

    let bag_loss = out.logits.cross_entropy(bag.label)?;
    let class_loss = match &out.instance_logits {
        Some(instance_logits) if gamma > 0.0 => {
            let n = bag.instances.rows();
            let classes = model.config.n_classes;
            let mut acc: Option<Node<'t>> = None;
            for i in 0..n {
                let pairs: Vec<(usize, usize)> = (0..classes).map(|c| (i, c)).collect();
                let row = instance_logits.gather(&pairs)?;
                let ce = row.cross_entropy(bag.label)?;
                acc = Some(match acc {
                    Some(a) => a.add(ce)?,
                    None => ce,
                });
            }
            let instance_loss = acc.expect("n >= 1").scale(1.0 / n as f64);
            bag_loss
                .scale(1.0 - gamma)
                .add(instance_loss.scale(gamma))?
        }
        _ => bag_loss,
    };

    let (topo, breakdown) = topo_loss(tape, &bag.instances, out.latents)?;
    let total = class_loss.add(topo.scale(lambda))?;
    Ok((
        total,
        LossParts {
            total: total.item(),
            class: class_loss.item(),
            topo_forward: breakdown.forward_term,
            topo_reverse: breakdown.reverse_term,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milcore::{Activation, AggregatorKind, EncoderConfig, ModelConfig};
    use crate::tensor::Tensor;

    fn bag(label: usize) -> Bag {
        Bag {
            id: "b0".to_string(),
            instances: Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.29).sin()).collect()),
            label,
            group: None,
        }
    }

    fn config(dual_head: bool) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::new(vec![3, 2], vec![Activation::Tanh]).unwrap(),
            aggregator: AggregatorKind::Mean,
            n_classes: 2,
            dual_head,
        }
    }

    #[test]
    fn lambda_zero_is_plain_classification_loss() {
        let model = Model::new(config(false), 4).unwrap();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let (_, parts) = total_loss(&tape, &model, &bound, &bag(1), 0.0, 0.0).unwrap();
        assert_eq!(parts.total, parts.class);
    }

    #[test]
    fn lambda_scales_the_topology_term() {
        let model = Model::new(config(false), 4).unwrap();
        let b = bag(0);
        let lambda = 0.005;
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let (_, parts) = total_loss(&tape, &model, &bound, &b, lambda, 0.0).unwrap();
        let expected = parts.class + lambda * (parts.topo_forward + parts.topo_reverse);
        assert!((parts.total - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_encoder_total_is_class_loss_for_any_lambda() {
        let cfg = ModelConfig {
            encoder: EncoderConfig::new(vec![3, 3], vec![Activation::None]).unwrap(),
            aggregator: AggregatorKind::Mean,
            n_classes: 2,
            dual_head: false,
        };
        let mut model = Model::new(cfg, 0).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        model.params.set_value("enc.w0", eye).unwrap();
        model
            .params
            .set_value("enc.b0", Tensor::zeros(&[1, 3]))
            .unwrap();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let (_, parts) = total_loss(&tape, &model, &bound, &bag(1), 123.0, 0.0).unwrap();
        assert_eq!(parts.topo_forward, 0.0);
        assert_eq!(parts.topo_reverse, 0.0);
        assert_eq!(parts.total, parts.class);
    }

    #[test]
    fn dual_head_blends_bag_and_instance_losses() {
        let model = Model::new(config(true), 4).unwrap();
        let b = bag(1);
        let loss_at = |gamma: f64| {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            total_loss(&tape, &model, &bound, &b, 0.0, gamma).unwrap().1
        };
        let bag_only = loss_at(0.0);
        let blended = loss_at(0.5);
        let instance_heavy = loss_at(1.0);
        let implied_instance = 2.0 * (blended.class - 0.5 * bag_only.class);
        assert!((implied_instance - instance_heavy.class).abs() < 1e-9);
    }

    #[test]
    fn gamma_schedule_decays_to_zero() {
        assert_eq!(gamma_schedule(0, 10), 0.5);
        assert_eq!(gamma_schedule(9, 10), 0.0);
        assert!(gamma_schedule(3, 10) > gamma_schedule(6, 10));
        assert_eq!(gamma_schedule(0, 1), 0.5);
    }

    #[test]
    fn out_of_range_label_is_error() {
        let model = Model::new(config(false), 4).unwrap();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        assert!(matches!(
            total_loss(&tape, &model, &bound, &bag(2), 0.0, 0.0),
            Err(ModelError::LabelOutOfRange { .. })
        ));
    }
}
