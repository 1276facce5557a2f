//! Versioned binary checkpoints for networks and basis memories. All floats
//! are stored as raw IEEE-754 bits, so a round trip is lossless.

use std::path::Path;

use sgp_core::net::{Activation, Layer, LayerSpec};
use sgp_core::{BasisMemory, LayerMemory, Matrix, Network};

use crate::bin::{Reader, Writer};
use crate::error::{Error, Result};

pub const NETWORK_MAGIC: &[u8; 4] = b"SGPN";
pub const MEMORY_MAGIC: &[u8; 4] = b"SGPM";
pub const NETWORK_VERSION: u32 = 1;
pub const MEMORY_VERSION: u32 = 1;

fn put_matrix(w: &mut Writer, m: &Matrix) -> Result<()> {
    w.len(m.rows())?;
    w.len(m.cols())?;
    w.f64s(m.as_slice());
    Ok(())
}

fn get_matrix(r: &mut Reader<'_>) -> Result<Matrix> {
    let rows = r.len()?;
    let cols = r.len()?;
    let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    Ok(Matrix::new(rows, cols, r.f64s(n)?)?)
}

fn put_activation(w: &mut Writer, a: Activation) {
    w.u8(match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
    });
}

fn get_activation(r: &mut Reader<'_>) -> Result<Activation> {
    match r.u8()? {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Relu),
        other => Err(Error::Format(format!("unknown activation tag {other}"))),
    }
}

pub fn encode_network(net: &Network) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(NETWORK_MAGIC);
    w.u32(NETWORK_VERSION);
    w.len(net.layers().len())?;
    for layer in net.layers() {
        match layer.spec {
            LayerSpec::Dense {
                input_dim,
                output_dim,
                activation,
            } => {
                w.u8(0);
                put_activation(&mut w, activation);
                w.len(input_dim)?;
                w.len(output_dim)?;
            }
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                kernel_h,
                kernel_w,
                stride,
                out_channels,
                activation,
            } => {
                w.u8(1);
                put_activation(&mut w, activation);
                for v in [in_channels, height, width, kernel_h, kernel_w, stride, out_channels] {
                    w.len(v)?;
                }
            }
        }
        put_matrix(&mut w, &layer.weight)?;
    }
    w.len(net.heads().len())?;
    for head in net.heads() {
        put_matrix(&mut w, head)?;
    }
    Ok(w.buf)
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes, "network checkpoint");
    r.header(NETWORK_MAGIC, NETWORK_VERSION)?;
    let n = r.len()?;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let kind = r.u8()?;
        let activation = get_activation(&mut r)?;
        let spec = match kind {
            0 => LayerSpec::Dense {
                input_dim: r.len()?,
                output_dim: r.len()?,
                activation,
            },
            1 => {
                let mut v = [0usize; 7];
                for x in &mut v {
                    *x = r.len()?;
                }
                LayerSpec::Conv2d {
                    in_channels: v[0],
                    height: v[1],
                    width: v[2],
                    kernel_h: v[3],
                    kernel_w: v[4],
                    stride: v[5],
                    out_channels: v[6],
                    activation,
                }
            }
            other => return Err(Error::Format(format!("unknown layer tag {other}"))),
        };
        layers.push(Layer {
            spec,
            weight: get_matrix(&mut r)?,
        });
    }
    let h = r.len()?;
    let mut heads = Vec::with_capacity(h.min(1024));
    for _ in 0..h {
        heads.push(get_matrix(&mut r)?);
    }
    r.finish()?;
    Ok(Network::from_parts(layers, heads)?)
}

/// A basis memory together with the number of tasks it has absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryCheckpoint {
    pub tasks_seen: usize,
    pub memory: BasisMemory,
}

pub fn encode_memory(ckpt: &MemoryCheckpoint) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MEMORY_MAGIC);
    w.u32(MEMORY_VERSION);
    w.len(ckpt.tasks_seen)?;
    w.len(ckpt.memory.layers.len())?;
    for layer in &ckpt.memory.layers {
        put_matrix(&mut w, layer.basis())?;
        w.f64s(layer.lambda());
    }
    Ok(w.buf)
}

pub fn decode_memory(bytes: &[u8]) -> Result<MemoryCheckpoint> {
    let mut r = Reader::new(bytes, "memory checkpoint");
    r.header(MEMORY_MAGIC, MEMORY_VERSION)?;
    let tasks_seen = r.len()?;
    let n = r.len()?;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let basis = get_matrix(&mut r)?;
        let lambda = r.f64s(basis.cols())?;
        layers.push(LayerMemory::from_parts(basis, lambda)?);
    }
    r.finish()?;
    Ok(MemoryCheckpoint {
        tasks_seen,
        memory: BasisMemory { layers },
    })
}

pub fn read_memory(path: &Path) -> Result<MemoryCheckpoint> {
    decode_memory(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_network(path: &Path) -> Result<Network> {
    decode_network(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
