//! Binary checkpoint container and its text manifest.
//!
//! Layout (little endian): magic `GEKC`, `u32` format version, `u8` family,
//! `u8` kind, `u8` dtype (0 = f64), `u8` reciprocal flag, `u64` |E|, |R|,
//! rank, relation rank, then every parameter tensor as raw `f64` values in
//! storage order. The manifest sits next to the checkpoint with a
//! `.manifest` suffix.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

use super::{param_shapes, Dims, Family, Model, ModelKind};

const MAGIC: &[u8; 4] = b"GEKC";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointInfo {
    pub path: PathBuf,
    pub sha256: String,
    pub vocab_hash: Option<String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model) -> std::io::Result<()> {
    let dims = model.dims();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[
        model.family().tag(),
        model.kind().tag(),
        DTYPE_F64,
        u8::from(model.reciprocal()),
    ])?;
    for v in [dims.entities, dims.relations, dims.rank, dims.relation_rank] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for p in model.params() {
        for x in p.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model> {
    let magic: [u8; 4] = read_exact(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let [fam, kind, dtype, recip] = read_exact::<_, 4>(&mut r)?;
    let family = Family::from_tag(fam).ok_or_else(|| Error::Checkpoint(format!("unknown family tag {fam}")))?;
    let kind = ModelKind::from_tag(kind).ok_or_else(|| Error::Checkpoint(format!("unknown kind tag {kind}")))?;
    if dtype != DTYPE_F64 {
        return Err(Error::Checkpoint(format!("unsupported dtype tag {dtype}")));
    }
    let mut header = [0usize; 4];
    for h in &mut header {
        *h = u64::from_le_bytes(read_exact(&mut r)?) as usize;
    }
    let dims = Dims {
        entities: header[0],
        relations: header[1],
        rank: header[2],
        relation_rank: header[3],
    };
    let mut params = Vec::new();
    for (_, rows, cols) in param_shapes(family, kind, &dims) {
        let mut data = vec![0.0; rows * cols];
        for x in &mut data {
            *x = f64::from_le_bytes(read_exact(&mut r)?);
        }
        params.push(DenseMatrix::from_vec(rows, cols, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
    }
    let mut model = Model::new(family, kind, dims, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
    model.set_reciprocal(recip != 0);
    Ok(model)
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes the checkpoint and its manifest; returns the content hash.
pub fn save_checkpoint(path: &Path, model: &Model, vocab_hash: Option<&str>) -> Result<CheckpointInfo> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, model).expect("writing to memory");
    let sha = hex::encode(Sha256::digest(&bytes));
    {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let dims = model.dims();
    let mut m = String::new();
    m.push_str("format = GEKC\n");
    m.push_str(&format!("format_version = {FORMAT_VERSION}\n"));
    m.push_str(&format!("family = {}\n", model.family()));
    m.push_str(&format!("kind = {}\n", model.kind()));
    m.push_str("dtype = f64\n");
    m.push_str(&format!("reciprocal = {}\n", model.reciprocal()));
    m.push_str(&format!("entities = {}\n", dims.entities));
    m.push_str(&format!("relations = {}\n", dims.relations));
    m.push_str(&format!("rank = {}\n", dims.rank));
    m.push_str(&format!("relation_rank = {}\n", dims.relation_rank));
    for (name, r, c) in param_shapes(model.family(), model.kind(), dims) {
        m.push_str(&format!("tensor.{name} = {r}x{c}\n"));
    }
    m.push_str(&format!("sha256 = {sha}\n"));
    if let Some(v) = vocab_hash {
        m.push_str(&format!("vocab_hash = {v}\n"));
    }
    let mp = manifest_path(path);
    fs::write(&mp, m).map_err(|e| Error::io(&mp, e))?;
    Ok(CheckpointInfo {
        path: path.to_owned(),
        sha256: sha,
        vocab_hash: vocab_hash.map(str::to_owned),
    })
}

/// Reads a checkpoint, verifying it against its manifest when one exists.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointInfo)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let model = read_checkpoint(BufReader::new(bytes.as_slice()))?;
    let mp = manifest_path(path);
    let mut vocab_hash = None;
    if let Ok(text) = fs::read_to_string(&mp) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                match k.trim() {
                    "sha256" if v.trim() != sha => {
                        return Err(Error::Checkpoint(format!(
                            "content hash mismatch for {}: manifest {} vs file {sha}",
                            path.display(),
                            v.trim()
                        )))
                    }
                    "vocab_hash" => vocab_hash = Some(v.trim().to_owned()),
                    _ => {}
                }
            }
        }
    }
    Ok((
        model,
        CheckpointInfo {
            path: path.to_owned(),
            sha256: sha,
            vocab_hash,
        },
    ))
}
