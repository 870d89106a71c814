//! Versioned JSON checkpoint of a [`PlasticModel`]. Floats are written with
//! round-trip precision, so save followed by load is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plastic::PlasticModel;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "nmt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Out<'a> {
    format: &'static str,
    version: u32,
    model: &'a PlasticModel,
}

#[derive(Deserialize)]
struct In {
    format: String,
    version: u32,
    model: PlasticModel,
}

pub fn write_checkpoint<W: Write>(model: &PlasticModel, mut w: W) -> Result<()> {
    serde_json::to_writer(
        &mut w,
        &Out {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            model,
        },
    )?;
    w.write_all(b"\n").map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<PlasticModel> {
    let c: In = serde_json::from_reader(r)?;
    if c.format != CHECKPOINT_FORMAT {
        return Err(Error::Serde(format!("not a checkpoint (format `{}`)", c.format)));
    }
    if c.version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            c.version
        )));
    }
    c.model.registry.check_invariants()?;
    Ok(c.model)
}

pub fn save_checkpoint(model: &PlasticModel, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<PlasticModel> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
