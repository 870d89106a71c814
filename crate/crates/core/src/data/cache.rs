//! Line-delimited JSON bank cache.
//!
//! Line 1 is a header object
//! `{"format":"nmt-task-bank","version":1,"lag":..,"tasks":..,"vocab":{..}}`,
//! followed by one [`TaskData`] object per line in bank order. Floats are
//! written in shortest round-trip form, so a save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::VocabMap;
use super::window::{TaskBank, TaskData};
use crate::{Error, Result};

pub const BANK_FORMAT: &str = "nmt-task-bank";
pub const BANK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    lag: usize,
    tasks: usize,
    vocab: VocabMap,
}

pub fn write_bank<W: Write>(bank: &TaskBank, mut out: W) -> Result<()> {
    let header = Header {
        format: BANK_FORMAT.into(),
        version: BANK_FORMAT_VERSION,
        lag: bank.lag,
        tasks: bank.tasks.len(),
        vocab: bank.vocab.clone(),
    };
    let io = |e| Error::io("<bank>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for t in &bank.tasks {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_bank<R: BufRead>(input: R) -> Result<TaskBank> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Data("empty bank cache".into()))?
        .map_err(|e| Error::io("<bank>", e))?;
    let header: Header = serde_json::from_str(&first)?;
    if header.format != BANK_FORMAT || header.version != BANK_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported bank cache {} v{}",
            header.format, header.version
        )));
    }
    let mut tasks = Vec::with_capacity(header.tasks);
    for line in lines {
        let line = line.map_err(|e| Error::io("<bank>", e))?;
        if line.is_empty() {
            continue;
        }
        tasks.push(serde_json::from_str::<TaskData>(&line)?);
    }
    if tasks.len() != header.tasks {
        return Err(Error::Data(format!(
            "bank cache declares {} tasks, found {}",
            header.tasks,
            tasks.len()
        )));
    }
    let bank = TaskBank {
        tasks,
        vocab: header.vocab,
        lag: header.lag,
    };
    bank.validate()?;
    Ok(bank)
}

pub fn save_bank(bank: &TaskBank, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_bank(bank, BufWriter::new(f))
}

pub fn load_bank(path: &Path) -> Result<TaskBank> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bank(BufReader::new(f))
}
