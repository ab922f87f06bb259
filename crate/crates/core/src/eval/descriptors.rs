use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::load_image;
use crate::mining::SequenceManifest;
use crate::network::{Network, NetworkSpec, ParameterSet};

pub const DESCRIPTORS_MAGIC: &[u8; 8] = b"VTRIPDS1";

/// Descriptors of one sequence, in manifest frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub seq_id: String,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(seq_id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("descriptor length must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} values do not split into descriptors of length {dim}",
                data.len()
            )));
        }
        Ok(DescriptorSet {
            seq_id: seq_id.into(),
            dim,
            data,
        })
    }

    pub fn from_vectors(seq_id: impl Into<String>, dim: usize, vectors: &[Vec<f32>]) -> Result<Self> {
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::shape(format!(
                "descriptor of length {} in a set of length {dim}",
                v.len()
            )));
        }
        Self::new(seq_id, dim, vectors.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<descriptors>", e);
        out.write_all(DESCRIPTORS_MAGIC).map_err(io)?;
        out.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&(self.len() as u32).to_le_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * 4);
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// One row per descriptor, comma separated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for v in self.iter() {
            let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", row.join(",")).map_err(|e| Error::io("<descriptors>", e))?;
        }
        Ok(())
    }
}

/// Decodes a descriptor file. The sequence id is not stored in the file.
pub fn parse_descriptors(bytes: &[u8], seq_id: &str) -> Result<DescriptorSet> {
    if bytes.len() < 16 {
        return Err(Error::format("descriptor file shorter than its header"));
    }
    if bytes[..7] != DESCRIPTORS_MAGIC[..7] {
        return Err(Error::format("not a descriptor file (bad magic)"));
    }
    if bytes[7] != DESCRIPTORS_MAGIC[7] {
        return Err(Error::Version {
            expected: "1".into(),
            found: String::from_utf8_lossy(&bytes[7..8]).into_owned(),
        });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format("descriptor length is zero"));
    }
    let body = &bytes[16..];
    let expected = (dim as u64) * (count as u64) * 4;
    if body.len() as u64 != expected {
        return Err(Error::format(format!(
            "descriptor body has {} bytes, header promises {expected}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DescriptorSet::new(seq_id, dim, data)
}

pub fn load_descriptors(path: &Path) -> Result<DescriptorSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let seq = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_descriptors(&bytes, &seq)
}

/// Runs every frame of `manifest` through the network. Frames are decoded
/// and embedded `batch` at a time; results are position-written, so the
/// output does not depend on the thread count.
pub fn embed_sequence(
    manifest: &SequenceManifest,
    spec: &NetworkSpec,
    params: &ParameterSet<f32>,
    batch: usize,
) -> Result<DescriptorSet> {
    if batch == 0 {
        return Err(Error::usage("embedding batch must be at least 1"));
    }
    let net = Network::new(spec, params)?;
    let dim = spec.descriptor_len();
    let mut data = vec![0.0f32; manifest.len() * dim];
    for (chunk_idx, out) in data.chunks_mut(batch * dim).enumerate() {
        let start = chunk_idx * batch;
        out.par_chunks_mut(dim)
            .enumerate()
            .try_for_each(|(k, dst)| -> Result<()> {
                let img = load_image(&manifest.image_path(start + k), &spec.input())?;
                dst.copy_from_slice(&net.forward(&img)?);
                Ok(())
            })?;
    }
    DescriptorSet::new(manifest.seq_id.clone(), dim, data)
}
