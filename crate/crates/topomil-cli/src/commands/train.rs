//! `topomil train`: fit a model on a bag CSV.

use std::path::Path;

use anyhow::anyhow;

use topomil::checkpoint::save_model;
use topomil::datasets::load_bag_csv;
use topomil::training::{evaluate, split_validation, train};

use super::{config_err, runtime_err};
use crate::config::{parse_train_config, parse_val_fraction, KvConfig};
use crate::CliResult;

pub fn run(config_path: &Path, data: &Path, out: &Path) -> CliResult {
    let cfg = KvConfig::load(config_path).map_err(config_err)?;
    let train_config = parse_train_config(&cfg).map_err(config_err)?;
    let val_fraction = parse_val_fraction(&cfg).map_err(config_err)?;
    cfg.finish().map_err(config_err)?;

    if !data.exists() {
        return Err(config_err(anyhow!("data file {} not found", data.display())));
    }
    let bags = load_bag_csv(data).map_err(config_err)?;
    if bags.is_empty() {
        return Err(config_err(anyhow!("{} contains no bags", data.display())));
    }

    let (train_bags, val_bags) = split_validation(&bags, val_fraction, train_config.seed);

    let (model, history) = train(
        &train_bags,
        if val_bags.is_empty() {
            None
        } else {
            Some(&val_bags)
        },
        &train_config,
    )
    .map_err(runtime_err)?;

    std::fs::create_dir_all(out).map_err(runtime_err)?;
    let checkpoint_path = out.join("checkpoint.tpml");
    save_model(&checkpoint_path, &model).map_err(runtime_err)?;
    std::fs::write(out.join("history.csv"), history.to_csv()).map_err(runtime_err)?;

    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "epochs={} final_loss_class={} final_loss_topo={}",
        history.epochs.len(),
        last.loss_class,
        last.loss_topo_fwd + last.loss_topo_rev
    );
    if let Some(best) = history.best_val_accuracy() {
        println!("best_val_accuracy={best}");
    }
    let train_report = evaluate(&model, &train_bags).map_err(runtime_err)?;
    println!("final_train_accuracy={}", train_report.accuracy);
    println!("checkpoint={}", checkpoint_path.display());
    Ok(())
}
