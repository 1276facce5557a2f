//! IDX image/label files (the MNIST container format): big-endian magic and
//! dimension sizes, then raw unsigned bytes.

use std::path::Path;

use sgp_core::data::{InputShape, LabeledPool};

use crate::bin::Reader;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn magic(r: &mut Reader<'_>, what: &'static str, expected: u32) -> Result<()> {
    let found = r.u32_be()?;
    if found != expected {
        return Err(Error::BadMagic { what, found, expected });
    }
    Ok(())
}

/// Images as `[0, 1]` pixel vectors (row-major) and their `rows × cols` shape.
pub fn parse_images(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, InputShape)> {
    let mut r = Reader::new(bytes, "idx images");
    magic(&mut r, "idx images", IMAGES_MAGIC)?;
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("idx images: {rows}×{cols} overflows")))?;
    let pixels = r.take(n.checked_mul(len).ok_or_else(|| Error::Format("idx images: size overflows".into()))?)?;
    r.finish()?;
    let images = if len == 0 {
        vec![Vec::new(); n]
    } else {
        pixels
            .chunks_exact(len)
            .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
            .collect()
    };
    Ok((
        images,
        InputShape {
            channels: 1,
            height: rows,
            width: cols,
        },
    ))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader::new(bytes, "idx labels");
    magic(&mut r, "idx labels", LABELS_MAGIC)?;
    let n = r.u32_be()? as usize;
    let labels = r.take(n)?.iter().map(|&b| usize::from(b)).collect();
    r.finish()?;
    Ok(labels)
}

pub fn parse_pool(images: &[u8], labels: &[u8]) -> Result<LabeledPool> {
    let (inputs, shape) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if inputs.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: inputs.len(),
            labels: labels.len(),
        });
    }
    Ok(LabeledPool {
        inputs,
        labels,
        shape: Some(shape),
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledPool> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_pool(&images, &labels)
}
