//! `topomil sweep`: baseline-vs-regularized grid over bag counts and sizes.

use std::path::Path;

use topomil::datasets::{gen_toy_pool, load_idx};
use topomil::training::{read_sweep_csv, scarcity_sweep_resume, write_sweep_csv, SweepCell};

use super::{config_err, runtime_err};
use crate::config::{parse_sweep_config, KvConfig, PoolSource};
use crate::CliResult;

pub fn run(config_path: &Path, resume: bool) -> CliResult {
    let threads = match std::env::var("TOPOMIL_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .map_err(|_| config_err(anyhow::anyhow!("TOPOMIL_THREADS must be an integer")))?,
        ),
        Err(_) => None,
    };
    let cfg = KvConfig::load(config_path).map_err(config_err)?;
    let file = parse_sweep_config(&cfg, threads).map_err(config_err)?;
    cfg.finish().map_err(config_err)?;

    let pool = match &file.pool {
        PoolSource::Toy {
            positives,
            negatives,
            dim,
            seed,
        } => gen_toy_pool(*positives, *negatives, *dim, *seed).map_err(config_err)?,
        PoolSource::Idx { images, labels } => load_idx(images, labels).map_err(config_err)?,
    };

    let existing: Vec<SweepCell> = if resume && file.out.exists() {
        read_sweep_csv(&file.out).map_err(config_err)?
    } else {
        Vec::new()
    };

    let results = scarcity_sweep_resume(&pool, &file.sweep, &existing).map_err(runtime_err)?;
    if let Some(parent) = file.out.parent() {
        std::fs::create_dir_all(parent).map_err(runtime_err)?;
    }
    write_sweep_csv(&file.out, &results).map_err(runtime_err)?;

    println!("bag_count,size_mean,size_std,model,runs,f1_mean,f1_std");
    for row in results.summary() {
        println!(
            "{},{},{},{},{},{},{}",
            row.bag_count, row.size_mean, row.size_std, row.model, row.runs, row.f1_mean, row.f1_std
        );
    }
    eprintln!("wrote {}", file.out.display());
    Ok(())
}
