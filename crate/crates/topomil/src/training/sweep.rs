//! Data-scarcity sweep: baseline vs regularized training across bag counts
//! and bag-size distributions.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::datasets::{build_bags, BagDatasetSpec, InstancePool};

use super::{evaluate, train, Result, TrainConfig, TrainError};

/// Sweep grid and shared training configuration. `train.lambda` is the
/// regularized model's weight; the baseline always runs with lambda = 0.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub bag_counts: Vec<usize>,
    /// (mean, std) bag-size Gaussians.
    pub bag_sizes: Vec<(f64, f64)>,
    /// Runs per cell; run seeds derive from `base_seed + run`.
    pub runs: usize,
    /// Held-out test set size, generated per cell.
    pub test_bags: usize,
    pub positive_fraction_cap: f64,
    pub positive_class: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    /// Worker threads; None uses the rayon default.
    pub threads: Option<usize>,
}

/// One (cell, model, run) result.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub bag_count: usize,
    pub size_mean: f64,
    pub size_std: f64,
    /// "baseline" (lambda = 0) or "topo" (the configured lambda).
    pub model: String,
    pub run: usize,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResults {
    pub cells: Vec<SweepCell>,
}

/// Mean and standard deviation of F1 for one (bag_count, size, model) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummaryRow {
    pub bag_count: usize,
    pub size_mean: f64,
    pub size_std: f64,
    pub model: String,
    pub runs: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl SweepResults {
    /// Aggregates per-run rows into mean ± std per cell, in key order.
    pub fn summary(&self) -> Vec<SweepSummaryRow> {
        let mut keys: Vec<(usize, u64, u64, String)> = self
            .cells
            .iter()
            .map(|c| {
                (
                    c.bag_count,
                    c.size_mean.to_bits(),
                    c.size_std.to_bits(),
                    c.model.clone(),
                )
            })
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(bag_count, mean_bits, std_bits, model)| {
                let f1s: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| {
                        c.bag_count == bag_count
                            && c.size_mean.to_bits() == mean_bits
                            && c.size_std.to_bits() == std_bits
                            && c.model == model
                    })
                    .map(|c| c.f1)
                    .collect();
                let n = f1s.len() as f64;
                let mean = f1s.iter().sum::<f64>() / n;
                let var = f1s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                SweepSummaryRow {
                    bag_count,
                    size_mean: f64::from_bits(mean_bits),
                    size_std: f64::from_bits(std_bits),
                    model,
                    runs: f1s.len(),
                    f1_mean: mean,
                    f1_std: var.sqrt(),
                }
            })
            .collect()
    }
}

/// SplitMix64 step, used to derive independent per-cell seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_seed(base: u64, bag_count: usize, size: (f64, f64), run: usize) -> u64 {
    let mut s = mix(base ^ bag_count as u64);
    s = mix(s ^ size.0.to_bits());
    s = mix(s ^ size.1.to_bits());
    mix(s ^ run as u64)
}

/// Runs the full grid. Cells execute in parallel (capped by
/// `config.threads`) with fully independent seeded state; results are
/// ordered by cell key, not completion order.
pub fn scarcity_sweep(pool: &InstancePool, config: &SweepConfig) -> Result<SweepResults> {
    scarcity_sweep_resume(pool, config, &[])
}

/// Like [`scarcity_sweep`], but skips any (bag_count, size, run) job whose
/// baseline and topo rows both already exist in `existing`; existing rows
/// are carried into the merged result.
pub fn scarcity_sweep_resume(
    pool: &InstancePool,
    config: &SweepConfig,
    existing: &[SweepCell],
) -> Result<SweepResults> {
    if config.runs == 0 {
        return Err(TrainError::InvalidConfig("runs must be >= 1".to_string()));
    }
    if config.bag_counts.is_empty() || config.bag_sizes.is_empty() {
        return Err(TrainError::InvalidConfig(
            "bag_counts and bag_sizes must be nonempty".to_string(),
        ));
    }
    config.train.validate()?;

    let have = |bag_count: usize, size: (f64, f64), run: usize, model: &str| {
        existing.iter().any(|c| {
            c.bag_count == bag_count
                && c.size_mean.to_bits() == size.0.to_bits()
                && c.size_std.to_bits() == size.1.to_bits()
                && c.run == run
                && c.model == model
        })
    };
    let mut jobs = Vec::new();
    for &bag_count in &config.bag_counts {
        for &size in &config.bag_sizes {
            for run in 0..config.runs {
                if have(bag_count, size, run, "baseline") && have(bag_count, size, run, "topo") {
                    continue;
                }
                jobs.push((bag_count, size, run));
            }
        }
    }

    let run_job = |&(bag_count, size, run): &(usize, (f64, f64), usize)| -> Result<Vec<SweepCell>> {
        let ds_seed = cell_seed(config.base_seed, bag_count, size, run);
        let train_spec = BagDatasetSpec {
            n_bags: bag_count,
            bag_size_mean: size.0,
            bag_size_std: size.1,
            positive_fraction_cap: config.positive_fraction_cap,
            positive_class: config.positive_class,
            seed: ds_seed,
        };
        let test_spec = BagDatasetSpec {
            n_bags: config.test_bags,
            seed: mix(ds_seed ^ 1),
            ..train_spec.clone()
        };
        let train_set = build_bags(pool, &train_spec)?;
        let test_set = build_bags(pool, &test_spec)?;

        let mut out = Vec::with_capacity(2);
        for (name, lambda) in [("baseline", 0.0), ("topo", config.train.lambda)] {
            let mut cfg = config.train.clone();
            cfg.lambda = lambda;
            cfg.seed = config.base_seed + run as u64;
            let (model, _) = train(&train_set, None, &cfg)?;
            let report = evaluate(&model, &test_set)?;
            out.push(SweepCell {
                bag_count,
                size_mean: size.0,
                size_std: size.1,
                model: name.to_string(),
                run,
                f1: report.macro_f1,
                accuracy: report.accuracy,
            });
        }
        Ok(out)
    };

    let collected: Vec<Result<Vec<SweepCell>>> = match config.threads {
        Some(threads) => {
            let pool_builder = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
            pool_builder.install(|| jobs.par_iter().map(run_job).collect())
        }
        None => jobs.par_iter().map(run_job).collect(),
    };

    let mut cells: Vec<SweepCell> = existing.to_vec();
    for result in collected {
        for cell in result? {
            let dup = cells.iter().any(|c| {
                c.bag_count == cell.bag_count
                    && c.size_mean.to_bits() == cell.size_mean.to_bits()
                    && c.size_std.to_bits() == cell.size_std.to_bits()
                    && c.model == cell.model
                    && c.run == cell.run
            });
            if !dup {
                cells.push(cell);
            }
        }
    }
    cells.sort_by(|a, b| {
        (a.bag_count, a.size_mean.to_bits(), a.size_std.to_bits(), &a.model, a.run).cmp(&(
            b.bag_count,
            b.size_mean.to_bits(),
            b.size_std.to_bits(),
            &b.model,
            b.run,
        ))
    });
    Ok(SweepResults { cells })
}

/// Reads back a results CSV written by [`write_sweep_csv`].
pub fn read_sweep_csv(path: &Path) -> std::io::Result<Vec<SweepCell>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let mut lines = text.lines();
    match lines.next() {
        Some("bag_count,size_mean,size_std,model,run,f1,accuracy") => {}
        _ => return Err(bad("missing sweep CSV header")),
    }
    let mut cells = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(&format!("expected 7 fields, got {}", fields.len())));
        }
        cells.push(SweepCell {
            bag_count: fields[0].parse().map_err(|_| bad("bad bag_count"))?,
            size_mean: fields[1].parse().map_err(|_| bad("bad size_mean"))?,
            size_std: fields[2].parse().map_err(|_| bad("bad size_std"))?,
            model: fields[3].to_string(),
            run: fields[4].parse().map_err(|_| bad("bad run"))?,
            f1: fields[5].parse().map_err(|_| bad("bad f1"))?,
            accuracy: fields[6].parse().map_err(|_| bad("bad accuracy"))?,
        });
    }
    Ok(cells)
}

/// Writes per-run rows as `bag_count,size_mean,size_std,model,run,f1,accuracy`.
pub fn write_sweep_csv(path: &Path, results: &SweepResults) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bag_count,size_mean,size_std,model,run,f1,accuracy")?;
    for c in &results.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.bag_count, c.size_mean, c.size_std, c.model, c.run, c.f1, c.accuracy
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_toy_pool;
    use crate::milcore::{Activation, AggregatorKind, EncoderConfig, ModelConfig};

    fn sweep_config() -> SweepConfig {
        SweepConfig {
            bag_counts: vec![4, 6],
            bag_sizes: vec![(5.0, 1.0)],
            runs: 2,
            test_bags: 8,
            positive_fraction_cap: 0.2,
            positive_class: 1,
            base_seed: 5,
            train: TrainConfig {
                model: ModelConfig {
                    encoder: EncoderConfig::new(vec![6, 3], vec![Activation::Tanh]).unwrap(),
                    aggregator: AggregatorKind::Mean,
                    n_classes: 2,
                    dual_head: false,
                },
                lambda: 0.01,
                learning_rate: 1e-3,
                betas: (0.9, 0.999),
                epsilon: 1e-8,
                max_epochs: 2,
                patience: None,
                seed: 0,
                ridge: 1e-3,
            },
            threads: Some(2),
        }
    }

    #[test]
    fn table_shape_and_aggregation() {
        let pool = gen_toy_pool(100, 400, 6, 3).unwrap();
        let config = sweep_config();
        let results = scarcity_sweep(&pool, &config).unwrap();
        // |counts| x |specs| x 2 models x runs rows
        assert_eq!(results.cells.len(), 2 * 1 * 2 * 2);
        let summary = results.summary();
        assert_eq!(summary.len(), 2 * 1 * 2);
        for row in &summary {
            assert_eq!(row.runs, 2);
            assert!(row.f1_std >= 0.0);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let pool = gen_toy_pool(100, 400, 6, 3).unwrap();
        let config = sweep_config();
        let a = scarcity_sweep(&pool, &config).unwrap();
        let b = scarcity_sweep(&pool, &config).unwrap();
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn resume_skips_existing_cells_and_merges() {
        let pool = gen_toy_pool(100, 400, 6, 3).unwrap();
        let config = sweep_config();
        let full = scarcity_sweep(&pool, &config).unwrap();
        // pretend the first job's two rows were already on disk, poisoned so
        // we can tell they were kept rather than recomputed
        let mut existing: Vec<SweepCell> = full
            .cells
            .iter()
            .filter(|c| c.bag_count == 4 && c.run == 0)
            .cloned()
            .collect();
        assert_eq!(existing.len(), 2);
        for c in &mut existing {
            c.f1 = -1.0;
        }
        let resumed = scarcity_sweep_resume(&pool, &config, &existing).unwrap();
        assert_eq!(resumed.cells.len(), full.cells.len());
        let kept: Vec<&SweepCell> = resumed
            .cells
            .iter()
            .filter(|c| c.bag_count == 4 && c.run == 0)
            .collect();
        assert!(kept.iter().all(|c| c.f1 == -1.0));
        // everything else matches the from-scratch run
        for (a, b) in resumed.cells.iter().zip(&full.cells) {
            if !(a.bag_count == 4 && a.run == 0) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn sweep_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let pool = gen_toy_pool(100, 400, 6, 3).unwrap();
        let mut config = sweep_config();
        config.bag_counts = vec![4];
        config.runs = 1;
        let results = scarcity_sweep(&pool, &config).unwrap();
        write_sweep_csv(&path, &results).unwrap();
        let cells = read_sweep_csv(&path).unwrap();
        assert_eq!(cells, results.cells);
    }
}
