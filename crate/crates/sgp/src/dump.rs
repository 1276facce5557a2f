//! Versioned binary dump of a task sequence, for pinning fixtures.

use std::path::Path;

use sgp_core::data::{InputShape, Split, TaskDataset, TaskSequence};

use crate::bin::{Reader, Writer};
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"SGPD";
pub const DUMP_VERSION: u32 = 1;

fn put_split(w: &mut Writer, s: &Split) -> Result<()> {
    w.len(s.len())?;
    for (x, &y) in s.inputs.iter().zip(&s.labels) {
        w.len(y)?;
        w.f64s(x);
    }
    Ok(())
}

fn get_split(r: &mut Reader<'_>, len: usize) -> Result<Split> {
    let n = r.len()?;
    let mut s = Split::default();
    for _ in 0..n {
        let y = r.len()?;
        s.push(r.f64s(len)?, y);
    }
    Ok(s)
}

pub fn encode_sequence(seq: &TaskSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let mut w = Writer::default();
    w.bytes(DUMP_MAGIC);
    w.u32(DUMP_VERSION);
    w.str(&seq.provenance)?;
    let shape = seq.input_shape;
    for v in [shape.channels, shape.height, shape.width] {
        w.len(v)?;
    }
    w.len(seq.tasks.len())?;
    for t in &seq.tasks {
        w.len(t.task_id)?;
        w.len(t.class_count)?;
        for s in [&t.train, &t.validation, &t.test] {
            put_split(&mut w, s)?;
        }
    }
    Ok(w.buf)
}

pub fn decode_sequence(bytes: &[u8]) -> Result<TaskSequence> {
    let mut r = Reader::new(bytes, "sequence dump");
    r.header(DUMP_MAGIC, DUMP_VERSION)?;
    let provenance = r.str()?;
    let input_shape = InputShape {
        channels: r.len()?,
        height: r.len()?,
        width: r.len()?,
    };
    let len = input_shape.len();
    let n = r.len()?;
    let mut tasks = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let task_id = r.len()?;
        let class_count = r.len()?;
        tasks.push(TaskDataset {
            task_id,
            class_count,
            train: get_split(&mut r, len)?,
            validation: get_split(&mut r, len)?,
            test: get_split(&mut r, len)?,
        });
    }
    r.finish()?;
    let seq = TaskSequence {
        tasks,
        input_shape,
        provenance,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn read_sequence(path: &Path) -> Result<TaskSequence> {
    decode_sequence(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
