//! `GVTW` weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! "GVTW"  version:u32  variant:u8  qp_tag:u16  precision_bits:u8
//! head_count:u8  head position index (f1..f15):u8 × head_count
//! layer_count:u16
//! per layer: out_ch:u16 in_ch:u16 kh:u8 kw:u8
//!            weights f32 × out·in·kh·kw (row-major)  biases f32 × out
//!            slope_present:u8 [slope f32]
//! crc32 of every preceding byte: u32
//! ```
//!
//! Layers are the trunk in order followed by the heads. The last trunk
//! layer's slope slot holds the slope of the activation applied after the
//! residual sum.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::position::{PositionId, Variant};
use crate::tensor::{ConvLayer, Tensor};

use super::config::GvtcnnConfig;
use super::model::{GvtcnnModel, ModelGrads};

const MAGIC: &[u8; 4] = b"GVTW";
pub const FORMAT_VERSION: u32 = 1;
const PRECISION_BITS: u8 = 32;

pub fn encode_weights(model: &GvtcnnModel<f32>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(cfg.variant.code());
    out.extend_from_slice(&(cfg.qp_tag as u16).to_le_bytes());
    out.push(PRECISION_BITS);
    let positions = cfg.positions();
    out.push(positions.len() as u8);
    out.extend(positions.iter().map(|p| p.index()));
    let trunk = model.trunk();
    let last = trunk.len() - 1;
    let layers = trunk.len() + model.heads().len();
    out.extend_from_slice(&(layers as u16).to_le_bytes());
    for (k, layer) in trunk.iter().chain(model.heads()).enumerate() {
        let [o, i, kh, kw] = layer.weights.shape();
        out.extend_from_slice(&(o as u16).to_le_bytes());
        out.extend_from_slice(&(i as u16).to_le_bytes());
        out.push(kh as u8);
        out.push(kw as u8);
        for v in layer.weights.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let slope = if k == last { Some(model.skip_slope()) } else { layer.slope };
        match slope {
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.to_le_bytes());
            }
            None => out.push(0),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<GvtcnnModel<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad weight-file magic"));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported weight-file version {version}")));
    }
    let variant_code = c.u8("variant")?;
    let variant = Variant::from_code(variant_code)
        .ok_or_else(|| Error::format(8, format!("unknown variant code {variant_code}")))?;
    let qp_tag = c.u16("qp tag")?;
    let precision = c.u8("precision")?;
    if precision != PRECISION_BITS {
        return Err(Error::format(11, format!("unsupported precision {precision} bits")));
    }
    let head_pos = c.pos;
    let head_count = c.u8("head count")? as usize;
    let order: Vec<u8> = c.take(head_count, "head order")?.to_vec();
    let expected: Vec<u8> = variant.positions().iter().map(|p| p.index()).collect();
    if order != expected {
        let found: Vec<String> = order
            .iter()
            .map(|&i| PositionId::from_index(i).map_or(format!("?{i}"), |p| p.to_string()))
            .collect();
        return Err(Error::format(
            head_pos as u64,
            format!("head order {found:?} does not match variant {variant}"),
        ));
    }
    let layer_count = c.u16("layer count")? as usize;
    if layer_count <= head_count + 2 {
        return Err(Error::format(c.pos as u64 - 2, format!("{layer_count} layers is too few")));
    }
    let mut layers = Vec::with_capacity(layer_count);
    let mut slopes = Vec::with_capacity(layer_count);
    for k in 0..layer_count {
        let start = c.pos;
        let o = c.u16("out_ch")? as usize;
        let i = c.u16("in_ch")? as usize;
        let kh = c.u8("kh")? as usize;
        let kw = c.u8("kw")? as usize;
        if o == 0 || i == 0 || kh != 3 || kw != 3 {
            return Err(Error::format(
                start as u64,
                format!("layer {} has invalid shape {o}x{i}x{kh}x{kw}", k + 1),
            ));
        }
        let w = c.f32s(o * i * kh * kw, "weights")?;
        let b = c.f32s(o, "biases")?;
        let flag_pos = c.pos;
        let slope = match c.u8("slope flag")? {
            0 => None,
            1 => Some(c.f32s(1, "slope")?[0]),
            f => return Err(Error::format(flag_pos as u64, format!("invalid slope flag {f}"))),
        };
        layers.push(ConvLayer::from_parts(Tensor::from_vec([o, i, kh, kw], w)?, b, None)?);
        slopes.push(slope);
    }
    let crc_pos = c.pos;
    let stored = c.u32("checksum")?;
    if c.pos != bytes.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes after checksum"));
    }
    if crc32fast::hash(&bytes[..crc_pos]) != stored {
        return Err(Error::format(crc_pos as u64, "checksum mismatch"));
    }

    let trunk_len = layer_count - head_count;
    let heads = layers.split_off(trunk_len);
    let head_slopes = slopes.split_off(trunk_len);
    if head_slopes.iter().any(Option::is_some) {
        return Err(Error::format(crc_pos as u64, "head layers must not carry a slope"));
    }
    let skip_slope = slopes[trunk_len - 1]
        .ok_or_else(|| Error::format(crc_pos as u64, "missing residual-sum slope"))?;
    for (k, (layer, slope)) in layers.iter_mut().zip(&slopes).enumerate() {
        if k + 1 < trunk_len {
            layer.slope = Some(slope.ok_or_else(|| {
                Error::format(crc_pos as u64, format!("layer {} is missing its slope", k + 1))
            })?);
        }
    }
    let config = GvtcnnConfig {
        variant,
        qp_tag: u8::try_from(qp_tag).map_err(|_| Error::format(9, format!("qp tag {qp_tag} out of range")))?,
        wide_channels: layers[0].out_channels(),
        narrow_channels: layers[1].out_channels(),
        narrow_layers: trunk_len - 2,
        padding: Default::default(),
    };
    GvtcnnModel::from_parts(
        config,
        ModelGrads {
            trunk: layers,
            skip_slope,
            heads,
        },
    )
    .map_err(|e| Error::format(0, format!("inconsistent topology: {e}")))
}

pub fn save_weights(model: &GvtcnnModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(model))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GvtcnnModel<f32>> {
    decode_weights(&fs::read(path)?)
}

/// Loads a model and checks that it is the expected variant.
pub fn load_weights_expecting(path: impl AsRef<Path>, variant: Variant) -> Result<GvtcnnModel<f32>> {
    let model = load_weights(path)?;
    if model.config().variant != variant {
        return Err(Error::VariantMismatch {
            expected: variant.to_string(),
            found: model.config().variant.to_string(),
        });
    }
    Ok(model)
}
