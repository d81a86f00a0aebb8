//! Dataset and checkpoint files. Datasets are line-delimited JSON: a header
//! line naming the schema, version, record kind and count, then one record
//! per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hip_core::action::InvDynNet;
use hip_core::env::{ClassifyRecord, Datasets, InvRecord, VideoRecord};
use hip_core::nn::Checkpoint;
use hip_core::task::GroundingClassifier;
use hip_core::visual::{DenoiserNet, FeasibilityClassifier};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: &str = "hip-dataset";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub kind: String,
    pub count: usize,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, kind: &str, records: &[T]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        schema: SCHEMA.into(),
        version: SCHEMA_VERSION,
        kind: kind.into(),
        count: records.len(),
    };
    let mut line = |v: String| writeln!(w, "{v}").map_err(|e| io_err(path, e));
    line(serde_json::to_string(&header).expect("header serializes"))?;
    for r in records {
        line(serde_json::to_string(r).map_err(|e| io_err(path, e))?)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(|e| CliError::MissingDataset(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| io_err(path, "empty file"))?
        .map_err(|e| io_err(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| io_err(path, format!("bad header: {e}")))?;
    if header.schema != SCHEMA || header.version != SCHEMA_VERSION || header.kind != kind {
        return Err(io_err(
            path,
            format!(
                "expected {SCHEMA} v{SCHEMA_VERSION} {kind}, found {} v{} {}",
                header.schema, header.version, header.kind
            ),
        ));
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, l) in lines.enumerate() {
        let l = l.map_err(|e| io_err(path, e))?;
        out.push(serde_json::from_str(&l).map_err(|e| io_err(path, format!("record {}: {e}", i + 1)))?);
    }
    if out.len() != header.count {
        return Err(io_err(path, format!("header says {} records, found {}", header.count, out.len())));
    }
    Ok(out)
}

pub fn dataset_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join("classify.jsonl"), dir.join("video.jsonl"), dir.join("inv.jsonl")]
}

pub fn save_datasets(dir: &Path, d: &Datasets) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let [c, v, i] = dataset_paths(dir);
    write_jsonl(&c, "classify", &d.classify)?;
    write_jsonl(&v, "video", &d.video)?;
    write_jsonl(&i, "inv", &d.inv)
}

pub fn load_classify(dir: &Path) -> Result<Vec<ClassifyRecord>, CliError> {
    read_jsonl(&dataset_paths(dir)[0], "classify")
}

pub fn load_video(dir: &Path) -> Result<Vec<VideoRecord>, CliError> {
    read_jsonl(&dataset_paths(dir)[1], "video")
}

pub fn load_inv(dir: &Path) -> Result<Vec<InvRecord>, CliError> {
    read_jsonl(&dataset_paths(dir)[2], "inv")
}

pub fn checkpoint_path(dir: &Path, role: &str) -> PathBuf {
    dir.join(format!("{role}.ckpt"))
}

pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = checkpoint_path(dir, &ck.role);
    ck.save(&path).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn load_checkpoint(dir: &Path, role: &str) -> Result<Checkpoint, CliError> {
    let path = checkpoint_path(dir, role);
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path.display().to_string()));
    }
    Checkpoint::load(&path).map_err(|e| io_err(&path, e))
}

fn incompatible(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("incompatible models: {e}"))
}

/// Loads the four trained components from `dir`.
pub fn load_models(dir: &Path) -> Result<hip_core::pipeline::Models, CliError> {
    let g = GroundingClassifier::from_checkpoint(&load_checkpoint(dir, hip_core::task::GROUNDING_ROLE)?).map_err(incompatible)?;
    let d = DenoiserNet::from_checkpoint(&load_checkpoint(dir, hip_core::visual::DENOISER_ROLE)?).map_err(incompatible)?;
    let f = FeasibilityClassifier::from_checkpoint(&load_checkpoint(dir, hip_core::visual::FEASIBILITY_ROLE)?).map_err(incompatible)?;
    let i = InvDynNet::from_checkpoint(&load_checkpoint(dir, hip_core::action::INVERSE_ROLE)?).map_err(incompatible)?;
    hip_core::pipeline::Models::new(g, d, f, i).map_err(incompatible)
}

/// `epoch,loss` rows.
pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<(), CliError> {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l:.9}\n", e + 1));
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hip_core::env::{generate_datasets, EnvParams};

    #[test]
    fn datasets_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_datasets(5, 3, EnvParams::default()).unwrap();
        save_datasets(dir.path(), &d).unwrap();
        assert_eq!(load_classify(dir.path()).unwrap(), d.classify);
        assert_eq!(load_video(dir.path()).unwrap(), d.video);
        assert_eq!(load_inv(dir.path()).unwrap(), d.inv);
    }

    #[test]
    fn wrong_kind_or_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, "video", &[1u32, 2, 3]).unwrap();
        assert!(read_jsonl::<u32>(&p, "classify").is_err());
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replace("\"count\":3", "\"count\":4")).unwrap();
        assert!(read_jsonl::<u32>(&p, "video").is_err());
    }

    #[test]
    fn missing_files_are_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_video(dir.path()), Err(CliError::MissingDataset(_))));
        assert!(matches!(load_models(dir.path()), Err(CliError::MissingCheckpoint(_))));
    }
}
