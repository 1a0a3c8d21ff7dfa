//! Binary model files.
//!
//! A model file bundles everything needed to label a new recording. All
//! integers are `u64` and all floats `f64`, little-endian:
//!
//! ```text
//! magic            8 bytes  "SLPNET01"
//! classes          4 or 5
//! frame_epochs
//! freq_components
//! cepstrum_components
//! k                dictionary words
//! d                low-level feature dimension
//! input_dim        d + k
//! layer_count
//! layer_count x    (kind: 0 mlp, 1 lstm, 2 blstm; units)
//! centers          k * d floats, row-major
//! norm mean        input_dim floats
//! norm std         input_dim floats
//! parameters       network parameters in canonical order
//! ```
//!
//! The canonical parameter order is, per hidden layer: MLP weight then
//! bias; LSTM `w_x`, `w_h`, input/forget/output peepholes, bias (gate rows
//! stacked input, forget, cell, output); BLSTM the forward LSTM then the
//! backward one; finally the output layer weight and bias. Matrices are
//! row-major with one row per output unit.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::features::{Dictionary, FrameConfig, NormStats};
use crate::ingest::ClassMode;
use crate::network::{LayerKind, LayerSpec, NetShape, Network};
use crate::pipeline::FittedModel;

pub const MAGIC: &[u8; 8] = b"SLPNET01";

fn kind_code(k: LayerKind) -> u64 {
    match k {
        LayerKind::Mlp => 0,
        LayerKind::Lstm => 1,
        LayerKind::Blstm => 2,
    }
}

pub fn to_bytes(model: &FittedModel) -> Vec<u8> {
    let shape = model.net.shape();
    let mut out = MAGIC.to_vec();
    let mut u = |v: usize| out.extend_from_slice(&(v as u64).to_le_bytes());
    u(model.class_mode.num_classes());
    u(model.frame.frame_epochs);
    u(model.frame.freq_components);
    u(model.frame.cepstrum_components);
    u(model.dictionary.k());
    u(model.dictionary.dim());
    u(shape.input_dim);
    u(shape.layers.len());
    for l in &shape.layers {
        u(kind_code(l.kind) as usize);
        u(l.units);
    }
    let floats = model
        .dictionary
        .centers
        .iter()
        .chain(model.norm.mean.iter())
        .chain(model.norm.std.iter())
        .copied()
        .chain(model.net.flat());
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::ModelFile(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 32)
            .ok_or_else(|| Error::ModelFile(format!("implausible {what}: {v}")))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::ModelFile(format!("{what} too large")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FittedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic)".into()));
    }
    let classes = r.u("class count")?;
    let class_mode = ClassMode::from_count(classes)
        .ok_or_else(|| Error::ModelFile(format!("unsupported class count {classes}")))?;
    let frame = FrameConfig {
        frame_epochs: r.u("frame_epochs")?,
        freq_components: r.u("freq_components")?,
        cepstrum_components: r.u("cepstrum_components")?,
    };
    frame.validate().map_err(|e| Error::ModelFile(e.to_string()))?;
    let k = r.u("dictionary size")?;
    let d = r.u("feature dimension")?;
    let input_dim = r.u("input dimension")?;
    if d != frame.dim() || input_dim != d + k {
        return Err(Error::ModelFile(format!(
            "inconsistent layout: frame gives {} low-level dims, header says d={d}, k={k}, input={input_dim}",
            frame.dim()
        )));
    }
    let n_layers = r.u("layer count")?;
    let mut layers = Vec::with_capacity(n_layers.min(16));
    for _ in 0..n_layers {
        let kind = match r.u("layer kind")? {
            0 => LayerKind::Mlp,
            1 => LayerKind::Lstm,
            2 => LayerKind::Blstm,
            other => return Err(Error::ModelFile(format!("unknown layer kind {other}"))),
        };
        layers.push(LayerSpec { kind, units: r.u("layer units")? });
    }
    let shape = NetShape {
        input_dim,
        layers,
        num_classes: class_mode.num_classes(),
    };
    shape.validate().map_err(|e| Error::ModelFile(e.to_string()))?;

    let centers = Array2::from_shape_vec((k, d), r.floats(k * d, "dictionary")?).unwrap();
    let dictionary = Dictionary::from_centers(centers).map_err(|e| Error::ModelFile(e.to_string()))?;
    let norm = NormStats {
        mean: Array1::from(r.floats(input_dim, "norm mean")?),
        std: Array1::from(r.floats(input_dim, "norm std")?),
    };
    let mut net = Network::zeros(&shape)?;
    let params = r.floats(net.num_params(), "network parameters")?;
    net.set_flat(&params)?;
    if r.pos != bytes.len() {
        return Err(Error::ModelFile(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    Ok(FittedModel {
        class_mode,
        frame,
        dictionary,
        norm,
        net,
    })
}

pub fn save(path: &Path, model: &FittedModel) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<FittedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::init_params;

    fn model() -> FittedModel {
        let frame = FrameConfig::default();
        let k = 3;
        let d = frame.dim();
        let shape = NetShape {
            input_dim: d + k,
            layers: vec![
                LayerSpec { kind: LayerKind::Blstm, units: 2 },
                LayerSpec { kind: LayerKind::Mlp, units: 3 },
                LayerSpec { kind: LayerKind::Lstm, units: 2 },
            ],
            num_classes: 4,
        };
        FittedModel {
            class_mode: ClassMode::Four,
            frame,
            dictionary: Dictionary::from_centers(Array2::from_shape_fn((k, d), |(i, j)| i as f64 - 0.1 * j as f64)).unwrap(),
            norm: NormStats {
                mean: Array1::from_shape_fn(d + k, |i| i as f64 * 1e-3),
                std: Array1::from_shape_fn(d + k, |i| 1.0 + i as f64),
            },
            net: init_params(&shape, 9, 0.3).unwrap(),
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let m = model();
        let bytes = to_bytes(&m);
        assert_eq!(&bytes[..8], MAGIC);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back.net, m.net);
        assert_eq!(back.norm, m.norm);
        assert_eq!(back.dictionary.centers, m.dictionary.centers);
        assert_eq!(back.class_mode, ClassMode::Four);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
        assert_eq!(to_bytes(&load(&p).unwrap()), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::ModelFile(_))));
        let mut kind = bytes.clone();
        kind[8 + 8 * 8] = 7;
        assert!(from_bytes(&kind).is_err());
    }
}
