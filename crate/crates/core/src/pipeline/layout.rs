use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::Result;

/// Directory tree of one experiment, keyed by config hash.
#[derive(Debug, Clone)]
pub struct ExpLayout {
    pub root: PathBuf,
}

impl ExpLayout {
    pub fn new(exp_root: &Path, config_hash: &str) -> Self {
        Self { root: exp_root.join(config_hash) }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn sdf(&self) -> PathBuf {
        self.root.join("sdf")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn decoder(&self) -> PathBuf {
        self.checkpoints().join("decoder")
    }

    pub fn cond(&self) -> PathBuf {
        self.checkpoints().join("cond")
    }

    pub fn latents(&self) -> PathBuf {
        self.root.join("latents")
    }

    pub fn meshes(&self) -> PathBuf {
        self.root.join("meshes")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn stages(&self) -> PathBuf {
        self.root.join("stages")
    }

    pub fn marker(&self, stage: &str) -> PathBuf {
        self.stages().join(format!("{stage}.done.json"))
    }

    pub fn create(&self) -> Result<()> {
        for d in [self.dataset(), self.sdf(), self.checkpoints(), self.latents(), self.meshes(), self.reports(), self.stages()] {
            fs::create_dir_all(d)?;
        }
        Ok(())
    }
}

/// Sidecar metadata written next to every artifact as `<file>.prov.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub stage: String,
    pub timestamp_unix: u64,
    pub file: String,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn provenance_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".prov.json");
    artifact.with_file_name(name)
}

pub fn write_provenance(artifact: &Path, config_hash: &str, stage: &str) -> Result<()> {
    let prov = Provenance {
        config_hash: config_hash.to_string(),
        stage: stage.to_string(),
        timestamp_unix: unix_now(),
        file: artifact.file_name().unwrap_or_default().to_string_lossy().into_owned(),
    };
    fs::write(provenance_path(artifact), serde_json::to_string_pretty(&prov)?)?;
    Ok(())
}

/// Stamps `dir` itself when it is a file, otherwise every file below it
/// that is not itself a sidecar.
pub fn stamp_tree(dir: &Path, config_hash: &str, stage: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.retain(|p| !p.to_string_lossy().ends_with(".prov.json"));
    files.sort();
    for f in &files {
        write_provenance(f, config_hash, stage)?;
    }
    Ok(files)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names_and_stamping() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("a");
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join("x.obj"), "v 0 0 0\n").unwrap();
        fs::write(dir.path().join("y.csv"), "a\n").unwrap();
        assert_eq!(provenance_path(Path::new("m/x.obj")), Path::new("m/x.obj.prov.json"));
        let stamped = stamp_tree(dir.path(), "abc", "extract").unwrap();
        assert_eq!(stamped.len(), 2);
        let again = stamp_tree(dir.path(), "abc", "extract").unwrap();
        assert_eq!(again.len(), 2);
        let p: Provenance = serde_json::from_str(&fs::read_to_string(sub.join("x.obj.prov.json")).unwrap()).unwrap();
        assert_eq!(p.stage, "extract");
        assert_eq!(p.file, "x.obj");
    }
}
