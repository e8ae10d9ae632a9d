//! `topomil gen`: dataset generation with a re-runnable manifest.

use std::path::Path;

use anyhow::anyhow;

use topomil::datasets::{
    build_bags, gen_toy, gen_toy_pool, load_idx, write_bag_csv, write_manifest, Bag,
};

use super::{config_err, runtime_err};
use crate::config::{parse_bag_spec, parse_pool_source, parse_toy_spec, KvConfig, PoolSource};
use crate::{CliResult, GenKind};

pub fn run(kind_flag: Option<GenKind>, spec_path: &Path, out: &Path) -> CliResult {
    let cfg = KvConfig::load(spec_path).map_err(config_err)?;
    let kind = resolve_kind(kind_flag, &cfg)?;

    let (bags, manifest) = match kind {
        GenKind::Toy => {
            let spec = parse_toy_spec(&cfg).map_err(config_err)?;
            cfg.finish().map_err(config_err)?;
            let bags =
                gen_toy(spec.n_bags, spec.bag_size_mean, spec.bag_size_std, spec.dim, spec.seed)
                    .map_err(config_err)?;
            let manifest = vec![
                ("kind".to_string(), "toy".to_string()),
                ("n_bags".to_string(), spec.n_bags.to_string()),
                ("bag_size_mean".to_string(), spec.bag_size_mean.to_string()),
                ("bag_size_std".to_string(), spec.bag_size_std.to_string()),
                ("dim".to_string(), spec.dim.to_string()),
                ("seed".to_string(), spec.seed.to_string()),
            ];
            (bags, manifest)
        }
        GenKind::PoolBags => {
            let source = parse_pool_source(&cfg).map_err(config_err)?;
            let spec = parse_bag_spec(&cfg).map_err(config_err)?;
            cfg.finish().map_err(config_err)?;
            spec.validate().map_err(config_err)?;
            let (pool, mut manifest) = match &source {
                PoolSource::Toy {
                    positives,
                    negatives,
                    dim,
                    seed,
                } => (
                    gen_toy_pool(*positives, *negatives, *dim, *seed).map_err(config_err)?,
                    vec![
                        ("kind".to_string(), "pool-bags".to_string()),
                        ("pool".to_string(), "toy".to_string()),
                        ("pool_positives".to_string(), positives.to_string()),
                        ("pool_negatives".to_string(), negatives.to_string()),
                        ("pool_dim".to_string(), dim.to_string()),
                        ("pool_seed".to_string(), seed.to_string()),
                    ],
                ),
                PoolSource::Idx { images, labels } => (
                    load_idx(images, labels).map_err(config_err)?,
                    vec![
                        ("kind".to_string(), "pool-bags".to_string()),
                        ("pool".to_string(), "idx".to_string()),
                        (
                            "pool_images".to_string(),
                            absolute(images).display().to_string(),
                        ),
                        (
                            "pool_labels".to_string(),
                            absolute(labels).display().to_string(),
                        ),
                    ],
                ),
            };
            manifest.extend([
                ("n_bags".to_string(), spec.n_bags.to_string()),
                ("bag_size_mean".to_string(), spec.bag_size_mean.to_string()),
                ("bag_size_std".to_string(), spec.bag_size_std.to_string()),
                (
                    "positive_fraction_cap".to_string(),
                    spec.positive_fraction_cap.to_string(),
                ),
                ("positive_class".to_string(), spec.positive_class.to_string()),
                ("seed".to_string(), spec.seed.to_string()),
            ]);
            (build_bags(&pool, &spec).map_err(config_err)?, manifest)
        }
    };

    std::fs::create_dir_all(out).map_err(runtime_err)?;
    write_bag_csv(&out.join("bags.csv"), &bags).map_err(runtime_err)?;
    write_manifest(&out.join("manifest.txt"), &manifest).map_err(runtime_err)?;

    let positive = bags.iter().filter(|b| b.label == 1).count();
    println!(
        "bags={} positive={} negative={} instances={}",
        bags.len(),
        positive,
        bags.len() - positive,
        bags.iter().map(Bag::n_instances).sum::<usize>()
    );
    Ok(())
}

fn resolve_kind(flag: Option<GenKind>, cfg: &KvConfig) -> Result<GenKind, crate::CliError> {
    let from_file = match cfg.opt_str("kind").as_deref() {
        None => None,
        Some("toy") => Some(GenKind::Toy),
        Some("pool-bags") => Some(GenKind::PoolBags),
        Some(other) => {
            return Err(config_err(anyhow!("unknown kind '{other}' in spec file")));
        }
    };
    match (flag, from_file) {
        (Some(a), Some(b)) if a != b => Err(config_err(anyhow!(
            "--kind disagrees with the spec file's kind"
        ))),
        (Some(k), _) | (None, Some(k)) => Ok(k),
        (None, None) => Err(config_err(anyhow!(
            "no kind: pass --kind or put kind= in the spec file"
        ))),
    }
}

fn absolute(path: &Path) -> std::path::PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}
