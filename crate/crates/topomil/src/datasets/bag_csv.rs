//! The bag-CSV interchange format.
//!
//! Header `bag_id,label,f1,...,fd`; one instance per row; rows with the
//! same bag_id form one bag in first-occurrence order. Labels are
//! nonnegative integers and must agree within a bag. No quoting: bag ids
//! must not contain commas. Floats are written in shortest round-trip form,
//! so a write/read cycle is value-exact.

use std::io::Write;
use std::path::Path;

use crate::tensor::Tensor;

use super::{Bag, DataError, Result};

pub fn load_bag_csv(path: &Path) -> Result<Vec<Bag>> {
    let text = std::fs::read_to_string(path)?;
    parse_bag_csv(&text)
}

pub fn parse_bag_csv(text: &str) -> Result<Vec<Bag>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::BadHeader)?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "bag_id" || cols[1] != "label" {
        return Err(DataError::BadHeader);
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{}", k + 1) {
            return Err(DataError::BadHeader);
        }
    }
    let dim = cols.len() - 2;

    // first-occurrence order of bag ids
    let mut order: Vec<String> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();

    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(DataError::RaggedRow {
                line: line_no + 1,
                expected: dim + 2,
                got: fields.len(),
            });
        }
        let bag_id = fields[0].to_string();
        let label: usize = fields[1].parse().map_err(|_| DataError::BadLabel {
            line: line_no + 1,
            field: fields[1].to_string(),
        })?;
        let mut features = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| DataError::NonNumeric {
                line: line_no + 1,
                field: f.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumeric {
                    line: line_no + 1,
                    field: f.to_string(),
                });
            }
            features.push(v);
        }
        match index.get(&bag_id) {
            Some(&i) => {
                if labels[i] != label {
                    return Err(DataError::InconsistentBagLabel {
                        bag_id,
                        a: labels[i],
                        b: label,
                    });
                }
                rows[i].push(features);
            }
            None => {
                index.insert(bag_id.clone(), order.len());
                order.push(bag_id);
                rows.push(vec![features]);
                labels.push(label);
            }
        }
    }

    Ok(order
        .into_iter()
        .zip(rows)
        .zip(labels)
        .map(|((id, instances), label)| Bag {
            id,
            instances: Tensor::from_rows(&instances),
            label,
            group: None,
        })
        .collect())
}

pub fn write_bag_csv(path: &Path, bags: &[Bag]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = bags.first().map_or(0, Bag::dim);
    write!(out, "bag_id,label")?;
    for k in 1..=dim {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for bag in bags {
        for i in 0..bag.n_instances() {
            write!(out, "{},{}", bag.id, bag.label)?;
            for v in bag.instances.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
