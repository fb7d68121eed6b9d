//! Checkpoint file: magic bytes, format version, a JSON header (model
//! configuration, tasks, vocabularies, feature hash), then every
//! parameter as name, shape and little-endian doubles, in name order.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelTask, ParamStore, Vocabularies};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UNIDAGCK";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tasks: Vec<ModelTask>,
    vocabs: Vocabularies,
    feature_hash: String,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Model(format!("bad checkpoint: {}", what.into()))
}

impl Model {
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            tasks: self.tasks().cloned().collect(),
            vocabs: self.vocabs.clone(),
            feature_hash: self.feature_hash(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Model(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(json.len() as u64)?;
        w.write_all(&json)?;
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for (name, t) in self.params.iter() {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u64::<LittleEndian>(t.nrows() as u64)?;
            w.write_u64::<LittleEndian>(t.ncols() as u64)?;
            for &x in t.iter() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to memory");
        out
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(corrupt(format!(
                "version {} (expected {})",
                version, VERSION
            )));
        }
        let len = r.read_u64::<LittleEndian>()? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| corrupt(e.to_string()))?;
        let mut params = ParamStore::new();
        let count = r.read_u64::<LittleEndian>()?;
        for _ in 0..count {
            let n = r.read_u32::<LittleEndian>()? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| corrupt(e.to_string()))?;
            let rows = r.read_u64::<LittleEndian>()? as usize;
            let cols = r.read_u64::<LittleEndian>()? as usize;
            let mut data = vec![0.0; rows * cols];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            let t =
                Array2::from_shape_vec((rows, cols), data).map_err(|e| corrupt(e.to_string()))?;
            params.insert(&name, t);
        }
        let model = Model::assemble(header.config, header.tasks, header.vocabs, params)?;
        if model.feature_hash() != header.feature_hash {
            return Err(corrupt("feature configuration hash mismatch"));
        }
        // Every parameter the structure needs must be present with its shape.
        let mut expected = Model::assemble(
            model.config.clone(),
            model.tasks().cloned().collect(),
            model.vocabs.clone(),
            ParamStore::new(),
        )?;
        expected.init(0);
        for (name, t) in expected.params.iter() {
            match model.params.iter().find(|(n, _)| n == &name) {
                Some((_, have)) if have.raw_dim() == t.raw_dim() => {}
                Some(_) => return Err(corrupt(format!("shape of {}", name))),
                None => return Err(corrupt(format!("missing parameter {}", name))),
            }
        }
        Ok(model)
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        Self::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
