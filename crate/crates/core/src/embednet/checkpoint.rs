//! `GNET` weight checkpoint format.
//!
//! Layout: magic `GNET`, version u32 LE, input width u32, input height u32,
//! layer count u32, one descriptor per layer (tag u8 plus tag-specific u32
//! fields), then every parameterized layer's weights and bias as f32 LE in
//! descriptor order.

use super::tensor::Scalar;
use super::{EmbedNetConfig, EmbeddingNet, Layer, LayerSpec};
use crate::error::{Error, Result};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const GNET_MAGIC: &[u8; 4] = b"GNET";
pub const GNET_VERSION: u32 = 1;

const TAG_AVG_POOL: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_MAX_POOL: u8 = 4;
const TAG_GLOBAL_AVG_POOL: u8 = 5;
const TAG_DENSE: u8 = 6;
const TAG_ADAPTIVE_AVG_POOL: u8 = 7;

/// Write the network to a checkpoint file (weights stored as f32).
pub fn save_checkpoint<T: Scalar>(net: &EmbeddingNet<T>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(GNET_MAGIC);
    buf.extend_from_slice(&GNET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.config.input_px.0 as u32).to_le_bytes());
    buf.extend_from_slice(&(net.config.input_px.1 as u32).to_le_bytes());
    buf.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        match layer.spec {
            LayerSpec::AvgPool { factor } => {
                buf.push(TAG_AVG_POOL);
                buf.extend_from_slice(&(factor as u32).to_le_bytes());
            }
            LayerSpec::Conv { in_ch, out_ch } => {
                buf.push(TAG_CONV);
                buf.extend_from_slice(&(in_ch as u32).to_le_bytes());
                buf.extend_from_slice(&(out_ch as u32).to_le_bytes());
            }
            LayerSpec::Relu => buf.push(TAG_RELU),
            LayerSpec::MaxPool => buf.push(TAG_MAX_POOL),
            LayerSpec::GlobalAvgPool => buf.push(TAG_GLOBAL_AVG_POOL),
            LayerSpec::AdaptiveAvgPool { out_h, out_w } => {
                buf.push(TAG_ADAPTIVE_AVG_POOL);
                buf.extend_from_slice(&(out_h as u32).to_le_bytes());
                buf.extend_from_slice(&(out_w as u32).to_le_bytes());
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                buf.push(TAG_DENSE);
                buf.extend_from_slice(&(in_dim as u32).to_le_bytes());
                buf.extend_from_slice(&(out_dim as u32).to_le_bytes());
            }
        }
    }
    for layer in &net.layers {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint produced by [`save_checkpoint`].
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<EmbeddingNet<T>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;

    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::format(path, "truncated checkpoint"));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };

    if take(&mut pos, 4)? != GNET_MAGIC {
        return Err(Error::format(path, "missing GNET magic"));
    }
    let version = read_u32(&mut pos)?;
    if version != GNET_VERSION {
        return Err(Error::FormatVersion {
            path: path.display().to_string(),
            found: version,
            expected: GNET_VERSION,
        });
    }
    let input_w = read_u32(&mut pos)? as usize;
    let input_h = read_u32(&mut pos)? as usize;
    let layer_count = read_u32(&mut pos)? as usize;

    let mut specs = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let tag = take(&mut pos, 1)?[0];
        let spec = match tag {
            TAG_AVG_POOL => LayerSpec::AvgPool {
                factor: read_u32(&mut pos)? as usize,
            },
            TAG_CONV => LayerSpec::Conv {
                in_ch: read_u32(&mut pos)? as usize,
                out_ch: read_u32(&mut pos)? as usize,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_MAX_POOL => LayerSpec::MaxPool,
            TAG_GLOBAL_AVG_POOL => LayerSpec::GlobalAvgPool,
            TAG_ADAPTIVE_AVG_POOL => LayerSpec::AdaptiveAvgPool {
                out_h: read_u32(&mut pos)? as usize,
                out_w: read_u32(&mut pos)? as usize,
            },
            TAG_DENSE => LayerSpec::Dense {
                in_dim: read_u32(&mut pos)? as usize,
                out_dim: read_u32(&mut pos)? as usize,
            },
            other => {
                return Err(Error::format(path, format!("unknown layer tag {other}")));
            }
        };
        specs.push(spec);
    }

    let mut layers = Vec::with_capacity(layer_count);
    for spec in &specs {
        let (w_len, b_len) = match *spec {
            LayerSpec::Conv { in_ch, out_ch } => (out_ch * in_ch * 9, out_ch),
            LayerSpec::Dense { in_dim, out_dim } => (out_dim * in_dim, out_dim),
            _ => (0, 0),
        };
        let mut weight = Vec::with_capacity(w_len);
        for _ in 0..w_len {
            weight.push(T::from_f32(f32::from_le_bytes(
                take(&mut pos, 4)?.try_into().unwrap(),
            )));
        }
        let mut bias = Vec::with_capacity(b_len);
        for _ in 0..b_len {
            bias.push(T::from_f32(f32::from_le_bytes(
                take(&mut pos, 4)?.try_into().unwrap(),
            )));
        }
        layers.push(Layer {
            spec: *spec,
            weight,
            bias,
        });
    }
    if pos != buf.len() {
        return Err(Error::format(path, "trailing bytes after weights"));
    }

    let config = config_from_specs(input_w, input_h, &specs)
        .ok_or_else(|| Error::format(path, "descriptor does not describe a stem/conv/dense stack"))?;
    Ok(EmbeddingNet { config, layers })
}

/// Recover the architecture config from a descriptor list.
fn config_from_specs(
    input_w: usize,
    input_h: usize,
    specs: &[LayerSpec],
) -> Option<EmbedNetConfig> {
    let mut stem_pool = 1;
    let mut conv_widths = Vec::new();
    let mut embed_dim = 0;
    let mut pool_grid = (1, 1);
    for spec in specs {
        match *spec {
            LayerSpec::AvgPool { factor } => stem_pool = factor,
            LayerSpec::Conv { out_ch, .. } => conv_widths.push(out_ch),
            LayerSpec::Dense { out_dim, .. } => embed_dim = out_dim,
            LayerSpec::AdaptiveAvgPool { out_h, out_w } => pool_grid = (out_h, out_w),
            _ => {}
        }
    }
    if conv_widths.is_empty() || embed_dim == 0 {
        return None;
    }
    let config = EmbedNetConfig {
        input_px: (input_w, input_h),
        stem_pool,
        conv_widths,
        pool_grid,
        embed_dim,
    };
    (config.layer_specs() == specs).then_some(config)
}
