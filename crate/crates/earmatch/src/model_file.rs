//! Versioned binary model container.
//!
//! ```text
//! 0   magic "EARMODEL"
//! 8   version      u32
//! 12  payload size u64
//! 20  CRC-32 (IEEE) of the payload, u32
//! 24  payload: input shape, layer manifest, named f64 tensors
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use earmatch_core::net::{Activation, LayerSpec, Model};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EARMODEL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelHeader {
    pub version: u32,
    pub payload_len: u64,
    pub checksum: u32,
}

pub fn checksum(payload: &[u8]) -> u32 {
    crc32fast::hash(payload)
}

/// Tensor names in [`Model::state`] order, e.g. `conv2d_1/kernel`.
pub fn tensor_names(model: &Model) -> Vec<String> {
    let mut names = Vec::new();
    for (spec, layer) in model.specs().iter().zip(model.summary()) {
        let parts: &[&str] = match spec {
            LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => &["kernel", "bias"],
            LayerSpec::BatchNorm => &["gamma", "beta", "moving_mean", "moving_variance"],
            _ => &[],
        };
        names.extend(parts.iter().map(|p| format!("{}/{p}", layer.name)));
    }
    names
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut p = Vec::new();
    let earmatch_core::net::Shape::Spatial { h, w, c } = model.input_shape() else {
        unreachable!("models are built from spatial inputs")
    };
    for d in [h, w, c] {
        p.extend_from_slice(&(d as u32).to_le_bytes());
    }
    p.extend_from_slice(&(model.specs().len() as u32).to_le_bytes());
    for spec in model.specs() {
        match *spec {
            LayerSpec::Conv2d {
                filters,
                kernel,
                activation,
            } => {
                p.push(0);
                p.extend_from_slice(&(filters as u32).to_le_bytes());
                p.extend_from_slice(&(kernel as u32).to_le_bytes());
                p.push(activation_code(activation));
            }
            LayerSpec::MaxPool2d { pool } => {
                p.push(1);
                p.extend_from_slice(&(pool as u32).to_le_bytes());
            }
            LayerSpec::BatchNorm => p.push(2),
            LayerSpec::Dropout { rate } => {
                p.push(3);
                p.extend_from_slice(&rate.to_le_bytes());
            }
            LayerSpec::Flatten => p.push(4),
            LayerSpec::Dense { units, activation } => {
                p.push(5);
                p.extend_from_slice(&(units as u32).to_le_bytes());
                p.push(activation_code(activation));
            }
        }
    }
    let state = model.state();
    p.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (name, tensor) in tensor_names(model).iter().zip(state) {
        p.extend_from_slice(&(name.len() as u16).to_le_bytes());
        p.extend_from_slice(name.as_bytes());
        p.extend_from_slice(&(tensor.len() as u64).to_le_bytes());
        for v in tensor {
            p.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + p.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    out.extend_from_slice(&checksum(&p).to_le_bytes());
    out.extend_from_slice(&p);
    out
}

/// Validates magic and size and returns the header fields.
pub fn read_header(bytes: &[u8], path: &Path) -> Result<ModelHeader> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::UnknownFormat {
            path: path.to_path_buf(),
            kind: "model",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::ModelTruncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::ModelVersion {
            found: version,
            supported: VERSION,
        });
    }
    Ok(ModelHeader {
        version,
        payload_len: u64::from_le_bytes(bytes[12..20].try_into().unwrap()),
        checksum: u32::from_le_bytes(bytes[20..24].try_into().unwrap()),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::ModelManifest(format!("payload ends inside a field at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn activation(&mut self) -> Result<Activation> {
        match self.u8()? {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            other => Err(Error::ModelManifest(format!(
                "unknown activation code {other}"
            ))),
        }
    }
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<Model> {
    let header = read_header(bytes, path)?;
    let needed = (HEADER_LEN as u64).saturating_add(header.payload_len);
    if (bytes.len() as u64) < needed {
        return Err(Error::ModelTruncated {
            needed: needed.min(usize::MAX as u64) as usize,
            available: bytes.len(),
        });
    }
    if bytes.len() as u64 > needed {
        return Err(Error::ModelManifest(format!(
            "{} trailing bytes",
            bytes.len() as u64 - needed
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let computed = checksum(payload);
    if computed != header.checksum {
        return Err(Error::ModelChecksum {
            stored: header.checksum,
            computed,
        });
    }

    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let input = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let layer_count = r.u32()?;
    let mut specs = Vec::with_capacity(layer_count.min(1024) as usize);
    for _ in 0..layer_count {
        specs.push(match r.u8()? {
            0 => LayerSpec::Conv2d {
                filters: r.u32()? as usize,
                kernel: r.u32()? as usize,
                activation: r.activation()?,
            },
            1 => LayerSpec::MaxPool2d {
                pool: r.u32()? as usize,
            },
            2 => LayerSpec::BatchNorm,
            3 => LayerSpec::Dropout { rate: r.f64()? },
            4 => LayerSpec::Flatten,
            5 => LayerSpec::Dense {
                units: r.u32()? as usize,
                activation: r.activation()?,
            },
            other => return Err(Error::ModelManifest(format!("unknown layer code {other}"))),
        });
    }
    let mut model =
        Model::build(input, &specs, 0).map_err(|e| Error::ModelManifest(e.to_string()))?;
    let names = tensor_names(&model);
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(Error::ModelManifest(format!(
            "{count} tensors stored, layers need {}",
            names.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for expected in &names {
        let len = r.u16()? as usize;
        let name = String::from_utf8_lossy(r.take(len)?).into_owned();
        if &name != expected {
            return Err(Error::ModelManifest(format!(
                "tensor {name:?} where {expected:?} was expected"
            )));
        }
        let n = r.u64()? as usize;
        let raw = r.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::ModelManifest("tensor too large".into()))?,
        )?;
        tensors.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    if r.pos != payload.len() {
        return Err(Error::ModelManifest(
            "unread bytes after the last tensor".into(),
        ));
    }
    model
        .load_state(tensors)
        .map_err(|e| Error::ModelManifest(e.to_string()))?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use earmatch_core::net::{reduced_specs, REDUCED_INPUT};

    fn p() -> &'static Path {
        Path::new("m.bin")
    }

    fn model() -> Model {
        Model::build(REDUCED_INPUT, &reduced_specs(), 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = decode_model(&encode_model(&m), p()).unwrap();
        assert_eq!(back.specs(), m.specs());
        let bits = |m: &Model| {
            m.state()
                .iter()
                .flat_map(|t| t.iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn stored_checksum_matches_recomputation() {
        let bytes = encode_model(&model());
        let header = read_header(&bytes, p()).unwrap();
        assert_eq!(header.payload_len as usize, bytes.len() - HEADER_LEN);
        // Table-free bitwise CRC-32 as an independent oracle.
        let mut crc = 0xFFFF_FFFFu32;
        for &b in &bytes[HEADER_LEN..] {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 {
                    (crc >> 1) ^ 0xEDB8_8320
                } else {
                    crc >> 1
                };
            }
        }
        assert_eq!(header.checksum, !crc);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_model(&model());
        for cut in [10, HEADER_LEN + 5, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_model(&bytes[..cut], p()),
                    Err(Error::ModelTruncated { .. })
                ),
                "cut {cut}"
            );
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(
            decode_model(&flipped, p()),
            Err(Error::ModelChecksum { .. })
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(
            decode_model(&v2, p()),
            Err(Error::ModelVersion {
                found: 2,
                supported: 1
            })
        ));
        assert!(matches!(
            decode_model(b"not a model", p()),
            Err(Error::UnknownFormat { .. })
        ));
    }

    #[test]
    fn tensor_names_follow_layers() {
        let names = tensor_names(&model());
        assert_eq!(names[0], "conv2d_1/kernel");
        assert!(names.contains(&"batch_normalization_1/moving_variance".to_string()));
        assert_eq!(names.len(), model().state().len());
    }
}
