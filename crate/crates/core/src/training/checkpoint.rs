//! Binary model checkpoint. All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "TREMCKPT"
//! version          u32      1
//! block1_channels  u32
//! block2_channels  u32
//! pcsf_channels    u32
//! p, q             f64, f64
//! leaky_slope      f64
//! dropout          f64
//! squeezed         81 x u32, row-major [target][source]
//! class count      u32, then per class: u32 byte length + UTF-8 name
//! tensor count     u32, then per tensor:
//!     name         u32 byte length + UTF-8
//!     ndim         u32
//!     dims         ndim x u64
//!     values       prod(dims) x f64
//! ```
//!
//! Tensors are trainable parameters followed by batch-norm buffers
//! (`running_mean`, `running_var`, `tracked`), in visiting order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{ArchSpec, TremorNet};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::nnet::{Layer, Tensor};
use crate::skeleton::NUM_JOINTS;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TREMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn tensors(model: &mut TremorNet) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    model.visit_params(&mut |n, p, _| out.push((n.to_string(), p.clone())));
    model.visit_buffers(&mut |n, b| out.push((n.to_string(), b.clone())));
    out
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &mut TremorNet) -> std::io::Result<()> {
    let arch = model.arch().clone();
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    write_u32(w, arch.block1_channels as u32)?;
    write_u32(w, arch.block2_channels as u32)?;
    write_u32(w, arch.pcsf_channels as u32)?;
    write_f64s(w, &[arch.p, arch.q, arch.leaky_slope, arch.dropout])?;
    for row in &model.pcsf_spec().squeezed {
        for &s in row {
            write_u32(w, s as u32)?;
        }
    }
    write_u32(w, model.class_names().len() as u32)?;
    for name in model.class_names() {
        write_str(w, name)?;
    }
    let all = tensors(model);
    write_u32(w, all.len() as u32)?;
    for (name, t) in &all {
        write_str(w, name)?;
        write_u32(w, t.rank() as u32)?;
        for &d in t.shape() {
            write_u64(w, d as u64)?;
        }
        write_f64s(w, t.data())?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &mut TremorNet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R, path: &Path) -> Result<TremorNet> {
    let io = |e: std::io::Error| format_err(path, format!("truncated or unreadable: {e}"));
    let magic: [u8; 8] = read_array(r).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format_err(path, "not a checkpoint file"));
    }
    let version = read_u32(r).map_err(io)?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(path, format!("unsupported checkpoint version {version}")));
    }
    let block1_channels = read_u32(r).map_err(io)? as usize;
    let block2_channels = read_u32(r).map_err(io)? as usize;
    let pcsf_channels = read_u32(r).map_err(io)? as usize;
    let reals = read_f64s(r, 4).map_err(io)?;
    let arch = ArchSpec {
        block1_channels,
        block2_channels,
        pcsf_channels,
        p: reals[0],
        q: reals[1],
        leaky_slope: reals[2],
        dropout: reals[3],
    };
    let mut squeezed = [[0usize; NUM_JOINTS]; NUM_JOINTS];
    for row in squeezed.iter_mut() {
        for s in row.iter_mut() {
            *s = read_u32(r).map_err(io)? as usize;
        }
    }
    let n_classes = read_u32(r).map_err(io)? as usize;
    if n_classes > 1024 {
        return Err(format_err(path, format!("implausible class count {n_classes}")));
    }
    let class_names = (0..n_classes)
        .map(|_| read_str(r).map_err(io))
        .collect::<Result<Vec<_>>>()?;
    let mut model = TremorNet::new(arch, class_names, 0).map_err(|e| format_err(path, e.to_string()))?;
    if model.pcsf_spec().squeezed != squeezed {
        return Err(format_err(path, "stored squeeze schedule does not match the architecture"));
    }

    let n_tensors = read_u32(r).map_err(io)? as usize;
    let mut stored: HashMap<String, Tensor> = HashMap::new();
    for _ in 0..n_tensors {
        let name = read_str(r).map_err(io)?;
        let ndim = read_u32(r).map_err(io)? as usize;
        if ndim > 8 {
            return Err(format_err(path, format!("tensor {name}: implausible rank {ndim}")));
        }
        let dims = (0..ndim)
            .map(|_| read_u64(r).map(|d| d as usize).map_err(io))
            .collect::<Result<Vec<_>>>()?;
        let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = match len {
            Some(l) if l <= 1 << 28 => l,
            _ => return Err(format_err(path, format!("tensor {name}: implausible size"))),
        };
        let values = read_f64s(r, len).map_err(io)?;
        stored.insert(name, Tensor::from_vec(&dims, values)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(format_err(path, format!("{} trailing bytes", rest.len())));
    }

    let mut problem: Option<String> = None;
    let mut take = |name: &str, dst: &mut Tensor| match stored.remove(name) {
        Some(t) if t.shape() == dst.shape() => *dst = t,
        Some(t) => {
            problem.get_or_insert(format!(
                "tensor {name}: stored shape {:?}, expected {:?}",
                t.shape(),
                dst.shape()
            ));
        }
        None => {
            problem.get_or_insert(format!("tensor {name} missing"));
        }
    };
    model.visit_params(&mut |n, p, _| take(n, p));
    model.visit_buffers(&mut |n, b| take(n, b));
    if let Some(p) = problem {
        return Err(format_err(path, p));
    }
    if let Some(name) = stored.keys().min() {
        return Err(format_err(path, format!("unexpected tensor {name}")));
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TremorNet> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r, path)
}
