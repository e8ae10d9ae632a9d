//! `topomil eval`: metrics of a checkpoint on a bag CSV.

use std::path::Path;

use anyhow::anyhow;

use topomil::checkpoint::load_model;
use topomil::datasets::load_bag_csv;
use topomil::training::evaluate;

use super::{config_err, runtime_err};
use crate::CliResult;

pub fn run(checkpoint: &Path, data: &Path) -> CliResult {
    let model = load_model(checkpoint).map_err(config_err)?;
    let bags = load_bag_csv(data).map_err(config_err)?;
    if bags.is_empty() {
        return Err(config_err(anyhow!("{} contains no bags", data.display())));
    }
    let expected = model.config.encoder.input_dim();
    if let Some(bad) = bags.iter().find(|b| b.dim() != expected) {
        return Err(config_err(anyhow!(
            "bag '{}' has {} features but the checkpoint expects {}",
            bad.id,
            bad.dim(),
            expected
        )));
    }
    if let Some(bad) = bags.iter().find(|b| b.label >= model.config.n_classes) {
        return Err(config_err(anyhow!(
            "bag '{}' has label {} but the checkpoint has {} classes",
            bad.id,
            bad.label,
            model.config.n_classes
        )));
    }

    let report = evaluate(&model, &bags).map_err(runtime_err)?;
    if !report.auroc_skipped_classes.is_empty() {
        eprintln!(
            "warning: AUROC undefined for classes {:?} on this set; skipped from the macro mean",
            report.auroc_skipped_classes
        );
    }
    println!("accuracy={}", report.accuracy);
    println!("macro_f1={}", report.macro_f1);
    println!("macro_auroc={}", report.macro_auroc);
    println!("macro_precision={}", report.macro_precision);
    println!("macro_recall={}", report.macro_recall);
    Ok(())
}
