//! Versioned binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"TPML"                       4 bytes
//! version  u32 = 1
//! config   u32 length + UTF-8 flat key=value text (model architecture)
//! count    u32 number of arrays
//! per array:
//!   name   u32 length + UTF-8
//!   rank   u32, then u32 per dimension
//!   data   f64 little-endian bits, row-major
//! ```
//!
//! Arrays are the parameters in declaration order, then, when anomaly
//! pooling has been fitted, `gaussian.mean`, `gaussian.cov` (ridge already
//! on its diagonal) and `gaussian.ridge`. Values round-trip bit-exactly.

use std::path::Path;

use crate::datasets::parse_kv_text;
use crate::milcore::{
    Activation, AggregatorKind, EncoderConfig, Model, ModelConfig, ModelError, NegativeGaussian,
    DEFAULT_ATTENTION_HIDDEN,
};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TPML";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// Serializes a ModelConfig as flat key=value text (also used by the CLI).
pub fn model_config_to_kv(config: &ModelConfig) -> String {
    let sizes: Vec<String> = config
        .encoder
        .layer_sizes
        .iter()
        .map(ToString::to_string)
        .collect();
    let acts: Vec<&str> = config
        .encoder
        .activations
        .iter()
        .map(Activation::name)
        .collect();
    let mut out = String::new();
    out.push_str(&format!("encoder_layers={}\n", sizes.join(",")));
    out.push_str(&format!("encoder_activations={}\n", acts.join(",")));
    out.push_str(&format!("aggregator={}\n", config.aggregator.name()));
    if let AggregatorKind::Attention { hidden } | AggregatorKind::Anomaly { hidden } =
        &config.aggregator
    {
        out.push_str(&format!("attention_hidden={hidden}\n"));
    }
    out.push_str(&format!("n_classes={}\n", config.n_classes));
    out.push_str(&format!("dual_head={}\n", config.dual_head));
    out
}

/// Parses the key=value model-architecture text written by
/// [`model_config_to_kv`].
pub fn model_config_from_kv(text: &str) -> Result<ModelConfig> {
    let entries =
        parse_kv_text(text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut map = std::collections::HashMap::new();
    for (k, v) in entries {
        map.insert(k, v);
    }
    let get = |key: &str| -> Result<&String> {
        map.get(key)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing config key '{key}'")))
    };
    let layer_sizes: Vec<usize> = get("encoder_layers")?
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CheckpointError::Corrupt(format!("bad layer width '{s}'")))
        })
        .collect::<Result<_>>()?;
    let activations: Vec<Activation> = get("encoder_activations")?
        .split(',')
        .map(|s| Activation::parse(s.trim()).map_err(CheckpointError::from))
        .collect::<Result<_>>()?;
    let hidden = match map.get("attention_hidden") {
        Some(h) => h
            .parse()
            .map_err(|_| CheckpointError::Corrupt(format!("bad attention_hidden '{h}'")))?,
        None => DEFAULT_ATTENTION_HIDDEN,
    };
    let aggregator = match get("aggregator")?.as_str() {
        "max" => AggregatorKind::Max,
        "mean" => AggregatorKind::Mean,
        "attention" => AggregatorKind::Attention { hidden },
        "rgp" => AggregatorKind::Rgp,
        "anomaly" => AggregatorKind::Anomaly { hidden },
        other => {
            return Err(CheckpointError::Corrupt(format!(
                "unknown aggregator '{other}'"
            )))
        }
    };
    let n_classes: usize = get("n_classes")?
        .parse()
        .map_err(|_| CheckpointError::Corrupt("bad n_classes".to_string()))?;
    let dual_head: bool = get("dual_head")?
        .parse()
        .map_err(|_| CheckpointError::Corrupt("bad dual_head".to_string()))?;
    Ok(ModelConfig {
        encoder: EncoderConfig::new(layer_sizes, activations)?,
        aggregator,
        n_classes,
        dual_head,
    })
}

fn push_array(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config_text = model_config_to_kv(&model.config);
    out.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());

    let gaussian_arrays = if model.negative_gaussian.is_some() { 3 } else { 0 };
    let count = model.params.len() + gaussian_arrays;
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for p in model.params.iter() {
        push_array(&mut out, &p.name, p.value.shape(), p.value.data());
    }
    if let Some(g) = &model.negative_gaussian {
        push_array(&mut out, "gaussian.mean", &[g.mean.len()], &g.mean);
        push_array(
            &mut out,
            "gaussian.cov",
            g.covariance.shape(),
            g.covariance.data(),
        );
        push_array(&mut out, "gaussian.ridge", &[1], &[g.ridge]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "needs {} bytes, file has {}",
                self.pos + n,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn read_string(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CheckpointError::Corrupt("non-UTF-8 string".to_string()))
    }

    fn read_array(&mut self) -> Result<(String, Tensor)> {
        let name = self.read_string()?;
        let rank = self.read_u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.read_u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = self.take(len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok((name, Tensor::new(shape, data)))
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config_text = r.read_string()?;
    let config = model_config_from_kv(&config_text)?;
    let count = r.read_u32()? as usize;

    // Structure (names, shapes, order) comes from the config; stored arrays
    // overwrite the seeded initialization.
    let mut model = Model::new(config, 0)?;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        arrays.push(r.read_array()?);
    }
    let expected = model.params.len();
    if arrays.len() < expected {
        return Err(CheckpointError::Corrupt(format!(
            "model declares {expected} parameters, checkpoint has {}",
            arrays.len()
        )));
    }
    for (i, (name, tensor)) in arrays.iter().take(expected).enumerate() {
        let declared = model
            .params
            .iter()
            .nth(i)
            .expect("within declared count")
            .name
            .clone();
        if *name != declared {
            return Err(CheckpointError::Corrupt(format!(
                "parameter {i} is '{name}', expected '{declared}'"
            )));
        }
        model.params.set_value(name, tensor.clone())?;
    }
    let extras: std::collections::HashMap<String, Tensor> =
        arrays.into_iter().skip(expected).collect();
    if !extras.is_empty() {
        let mean = extras
            .get("gaussian.mean")
            .ok_or_else(|| CheckpointError::Corrupt("missing gaussian.mean".to_string()))?;
        let cov = extras
            .get("gaussian.cov")
            .ok_or_else(|| CheckpointError::Corrupt("missing gaussian.cov".to_string()))?;
        let ridge = extras
            .get("gaussian.ridge")
            .ok_or_else(|| CheckpointError::Corrupt("missing gaussian.ridge".to_string()))?;
        model.negative_gaussian = Some(NegativeGaussian::from_parts(
            mean.data().to_vec(),
            cov.clone(),
            ridge.item(),
        )?);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milcore::fit_negative_gaussian;

    fn model(aggregator: AggregatorKind) -> Model {
        let config = ModelConfig {
            encoder: EncoderConfig::new(vec![6, 4, 3], vec![Activation::Relu, Activation::Tanh])
                .unwrap(),
            aggregator,
            n_classes: 2,
            dual_head: true,
        };
        Model::new(config, 31).unwrap()
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        for aggregator in [
            AggregatorKind::Max,
            AggregatorKind::Mean,
            AggregatorKind::Attention { hidden: 5 },
            AggregatorKind::Rgp,
            AggregatorKind::Anomaly { hidden: 5 },
        ] {
            let path = dir.path().join(format!("{}.tpml", aggregator.name()));
            let mut m = model(aggregator.clone());
            if matches!(aggregator, AggregatorKind::Anomaly { .. }) {
                let neg =
                    Tensor::matrix(8, 3, (0..24).map(|i| (i as f64 * 0.41).sin()).collect());
                m.negative_gaussian = Some(fit_negative_gaussian(&neg, 1e-3).unwrap());
            }
            save_model(&path, &m).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded.config, m.config);
            assert_eq!(loaded.params.len(), m.params.len());
            for (a, b) in m.params.iter().zip(loaded.params.iter()) {
                assert_eq!(a.name, b.name);
                assert_eq!(a.value.shape(), b.value.shape());
                let bits_a: Vec<u64> = a.value.data().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
            match (&m.negative_gaussian, &loaded.negative_gaussian) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    assert_eq!(x.mean, y.mean);
                    assert_eq!(x.covariance.data(), y.covariance.data());
                    assert_eq!(x.ridge, y.ridge);
                }
                other => panic!("gaussian presence mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_garbage_and_wrong_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tpml");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::BadMagic)));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CheckpointError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn config_kv_round_trips() {
        for aggregator in [
            AggregatorKind::Mean,
            AggregatorKind::Attention { hidden: 64 },
            AggregatorKind::Rgp,
        ] {
            let config = ModelConfig {
                encoder: EncoderConfig::new(vec![10, 5], vec![Activation::Relu]).unwrap(),
                aggregator,
                n_classes: 2,
                dual_head: false,
            };
            let text = model_config_to_kv(&config);
            let parsed = model_config_from_kv(&text).unwrap();
            assert_eq!(parsed, config);
        }
    }
}
