use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AutodiffError, Tensor};

pub type CheckpointEntry = (String, Tensor);

const MANIFEST: &str = "manifest.tsv";
const PAYLOAD: &str = "payload.f64le";

/// Writes `entries` as a manifest (`name<TAB>shape<TAB>byte_offset`, shape
/// dims joined by `x`) plus one flat little-endian `f64` payload file.
pub fn write_checkpoint(dir: &Path, entries: &[CheckpointEntry]) -> Result<(), AutodiffError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut payload = Vec::new();
    for (name, t) in entries {
        if name.contains(['\t', '\n']) {
            return Err(AutodiffError::Checkpoint(format!("invalid tensor name {:?}", name)));
        }
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{}\t{}\t{}\n", name, shape.join("x"), payload.len()));
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(dir.join(MANIFEST))?.write_all(manifest.as_bytes())?;
    fs::File::create(dir.join(PAYLOAD))?.write_all(&payload)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Vec<CheckpointEntry>, AutodiffError> {
    let manifest = fs::read_to_string(dir.join(MANIFEST))?;
    let payload = fs::read(dir.join(PAYLOAD))?;
    let bad = |line: usize, why: &str| AutodiffError::Checkpoint(format!("manifest line {}: {}", line + 1, why));
    let mut out = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [name, shape, offset] = cols[..] else {
            return Err(bad(i, "expected 3 columns"));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i, "bad shape"))?;
        let offset: usize = offset.parse().map_err(|_| bad(i, "bad offset"))?;
        let n: usize = shape.iter().product();
        let bytes = payload.get(offset..offset + 8 * n).ok_or_else(|| bad(i, "payload too short"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((name.to_string(), Tensor::new(shape, data)?));
    }
    Ok(out)
}
