//! Parameter persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "VTRIPNN1" (last byte is the format version)
//! fingerprint  u64      NetworkSpec::fingerprint of the owning spec
//! layer count  u32
//! per layer:   f64 learning-rate multiplier, u32 tensor count (0 or 2),
//!              then per tensor: u32 rank, rank x u32 extents, raw f32 values
//! ```
//!
//! Weights are written as rank 4 (out, in, kh, kw) and biases as rank 1.
//!
//! The weight-import text dump holds one tensor per block:
//!
//! ```text
//! # comments and blank lines are ignored
//! [conv1.weight]
//! shape 96 3 11 11
//! 0.0123 -0.2 ...        (whitespace separated, any number of lines)
//! [conv1.bias]
//! shape 96
//! ...
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::params::{LayerParams, ParameterSet};
use crate::network::spec::{LayerSpec, NetworkSpec};
use crate::tensor::{Shape4, Tensor};

pub const PARAMS_MAGIC: &[u8; 8] = b"VTRIPNN1";

/// Learning-rate multiplier applied to convolution layers initialised from imported weights.
pub const IMPORTED_LR_MULTIPLIER: f64 = 1.0 / 1000.0;

pub fn write_params(params: &ParameterSet<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_trainable() * 4);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&params.fingerprint().to_le_bytes());
    out.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for layer in params.layers() {
        out.extend_from_slice(&layer.lr_multiplier.to_le_bytes());
        match (&layer.weights, &layer.bias) {
            (Some(w), Some(b)) => {
                out.extend_from_slice(&2u32.to_le_bytes());
                write_tensor(&mut out, &w.shape().dims(), w.data());
                write_tensor(&mut out, &[b.len()], b.data());
            }
            _ => out.extend_from_slice(&0u32.to_le_bytes()),
        }
    }
    out
}

fn write_tensor(out: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_params(params: &ParameterSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParameterSet<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_params(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!(
                "parameter file truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32("tensor rank")? as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::format(format!("tensor rank {rank} outside 1..=4")));
        }
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(rank) {
            *d = self.u32("tensor extent")? as usize;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.checked_mul(4).is_some_and(|b| b <= self.remaining()))
            .ok_or_else(|| {
                Error::format(format!(
                    "tensor extents {dims:?} exceed the {} bytes left in the file",
                    self.remaining()
                ))
            })?;
        let raw = self.take(count * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(Shape4::new(dims[0], dims[1], dims[2], dims[3]), data)
    }
}

/// Decodes a parameter file image. Nothing is returned unless the whole file is valid.
pub fn parse_params(bytes: &[u8]) -> Result<ParameterSet<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic[..7] != PARAMS_MAGIC[..7] {
        return Err(Error::format(format!(
            "not a parameter file: magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    if magic[7] != PARAMS_MAGIC[7] {
        return Err(Error::Version {
            expected: (PARAMS_MAGIC[7] as char).to_string(),
            found: String::from_utf8_lossy(&magic[7..]).into_owned(),
        });
    }
    let fingerprint = r.u64("fingerprint")?;
    let count = r.u32("layer count")? as usize;
    // every layer takes at least 12 bytes
    if count > r.remaining() / 12 {
        return Err(Error::format(format!("layer count {count} exceeds file size")));
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let lr_multiplier = r.f64("learning-rate multiplier")?;
        if !(lr_multiplier >= 0.0 && lr_multiplier.is_finite()) {
            return Err(Error::format(format!(
                "layer {} has invalid learning-rate multiplier {lr_multiplier}",
                i + 1
            )));
        }
        let layer = match r.u32("tensor count")? {
            0 => LayerParams {
                lr_multiplier,
                ..LayerParams::empty()
            },
            2 => {
                let weights = r.tensor()?;
                let bias = r.tensor()?;
                if bias.len() != weights.shape().n {
                    return Err(Error::format(format!(
                        "layer {} bias length {} does not match {} outputs",
                        i + 1,
                        bias.len(),
                        weights.shape().n
                    )));
                }
                let bias = bias.reshape(Shape4::new(weights.shape().n, 1, 1, 1))?;
                LayerParams {
                    weights: Some(weights),
                    bias: Some(bias),
                    lr_multiplier,
                }
            }
            n => {
                return Err(Error::format(format!(
                    "layer {} declares {n} tensors; expected 0 or 2",
                    i + 1
                )))
            }
        };
        layers.push(layer);
    }
    if r.remaining() != 0 {
        return Err(Error::format(format!(
            "{} trailing bytes after the last layer",
            r.remaining()
        )));
    }
    Ok(ParameterSet::from_parts(fingerprint, layers))
}

/// One tensor block from a text dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpedTensor {
    pub name: String,
    pub shape: Shape4,
    pub values: Vec<f32>,
}

/// Parses the plain-text tensor dump format.
pub fn parse_text_dump(text: &str) -> Result<Vec<DumpedTensor>> {
    struct Pending {
        name: String,
        header_line: usize,
        shape: Option<(Shape4, usize)>,
        values: Vec<f32>,
    }

    fn finish(p: Pending) -> Result<DumpedTensor> {
        let (shape, count) = p.shape.ok_or_else(|| Error::Parse {
            line: p.header_line,
            message: format!("tensor `{}` has no shape line", p.name),
        })?;
        if p.values.len() != count {
            return Err(Error::Parse {
                line: p.header_line,
                message: format!(
                    "tensor `{}` declares {count} values but has {}",
                    p.name,
                    p.values.len()
                ),
            });
        }
        Ok(DumpedTensor {
            name: p.name,
            shape,
            values: p.values,
        })
    }

    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| parse_err(format!("malformed tensor header `{line}`")))?;
            if let Some(p) = cur.take() {
                out.push(finish(p)?);
            }
            cur = Some(Pending {
                name: name.to_string(),
                header_line: line_no,
                shape: None,
                values: Vec::new(),
            });
            continue;
        }
        let p = cur
            .as_mut()
            .ok_or_else(|| parse_err("values before the first tensor header".into()))?;
        if let Some(rest) = line.strip_prefix("shape") {
            if p.shape.is_some() || !p.values.is_empty() {
                return Err(parse_err(format!("unexpected shape line in `{}`", p.name)));
            }
            let dims = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("bad extent: {e}")))?;
            if dims.is_empty() || dims.len() > 4 {
                return Err(parse_err(format!("shape must have 1 to 4 extents, got {}", dims.len())));
            }
            let mut d = [1usize; 4];
            d[..dims.len()].copy_from_slice(&dims);
            let count = d
                .iter()
                .try_fold(1usize, |a, &x| a.checked_mul(x))
                .filter(|&c| c <= text.len())
                .ok_or_else(|| parse_err("shape too large for the dump".into()))?;
            p.shape = Some((Shape4::new(d[0], d[1], d[2], d[3]), count));
            continue;
        }
        let Some((_, count)) = p.shape else {
            return Err(parse_err(format!("values before shape line in `{}`", p.name)));
        };
        for tok in line.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| parse_err(format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{tok}`")));
            }
            if p.values.len() == count {
                return Err(parse_err(format!("too many values for `{}`", p.name)));
            }
            p.values.push(v);
        }
    }
    if let Some(p) = cur.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

/// Which tensors a text import replaced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportReport {
    pub imported: Vec<String>,
    /// Convolution layers whose multiplier was set to [`IMPORTED_LR_MULTIPLIER`].
    pub scaled_layers: Vec<String>,
}

/// Overwrites tensors of `params` with those named in a text dump
/// (`conv1.weight`, `conv1.bias`, `fc1.weight`, ...). Convolution layers that
/// receive weights get the reduced learning-rate multiplier. On error
/// `params` is left untouched.
pub fn import_text_weights(
    spec: &NetworkSpec,
    params: &mut ParameterSet<f32>,
    text: &str,
) -> Result<ImportReport> {
    params.validate_against(spec)?;
    let dump = parse_text_dump(text)?;
    let names = spec.layer_names();
    let mut staged = params.clone();
    let mut report = ImportReport::default();

    for t in dump {
        let (layer_name, part) = t
            .name
            .rsplit_once('.')
            .ok_or_else(|| Error::config(format!("tensor name `{}` lacks .weight/.bias", t.name)))?;
        let idx = names
            .iter()
            .position(|n| n == layer_name)
            .filter(|&i| spec.layers()[i].is_trainable())
            .ok_or_else(|| Error::config(format!("no trainable layer named `{layer_name}`")))?;
        let lp = &mut staged.layers_mut()[idx];
        let target = match part {
            "weight" => lp.weights.as_mut(),
            "bias" => lp.bias.as_mut(),
            _ => None,
        }
        .ok_or_else(|| Error::config(format!("unknown tensor `{}`", t.name)))?;
        // FC weights may be dumped as (out, in) and biases as (out).
        if target.shape() != t.shape {
            return Err(Error::config(format!(
                "tensor `{}` has shape {}, layer expects {}",
                t.name,
                t.shape,
                target.shape()
            )));
        }
        target.data_mut().copy_from_slice(&t.values);
        if part == "weight" && matches!(spec.layers()[idx], LayerSpec::Convolution { .. }) {
            lp.lr_multiplier = IMPORTED_LR_MULTIPLIER;
            if !report.scaled_layers.contains(&names[idx]) {
                report.scaled_layers.push(names[idx].clone());
            }
        }
        report.imported.push(t.name);
    }
    *params = staged;
    Ok(report)
}
