//! Flat-file stores: newline-delimited trajectory and reflection records,
//! and one document per principle version.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{
    deserialize_principle_set, deserialize_reflection, deserialize_trajectory,
    serialize_principle_set, serialize_reflection, serialize_trajectory, PrincipleSet, Reflection,
    Trajectory,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad record at {path}:{line}: {source}")]
    BadRecord {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    Ok(())
}

/// Writes trajectories one per line, replacing the file.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), StoreError> {
    ensure_parent(path)?;
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for t in trajectories {
        writeln!(file, "{}", serialize_trajectory(t)).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            deserialize_trajectory(line).map_err(|source| StoreError::BadRecord {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Writes reflections one per line, replacing the file.
pub fn write_reflections(path: &Path, reflections: &[Reflection]) -> Result<(), StoreError> {
    ensure_parent(path)?;
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for r in reflections {
        writeln!(file, "{}", serialize_reflection(r)).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn read_reflections(path: &Path) -> Result<Vec<Reflection>, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            deserialize_reflection(line).map_err(|source| StoreError::BadRecord {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Versioned principle store: one `v{version:03}.json` document per
/// version under a directory.
pub struct PrincipleStore {
    dir: PathBuf,
}

impl PrincipleStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, version: u64) -> PathBuf {
        self.dir.join(format!("v{version:03}.json"))
    }

    pub fn save(&self, set: &PrincipleSet) -> Result<PathBuf, StoreError> {
        let path = self.path_for(set.version);
        ensure_parent(&path)?;
        fs::write(&path, serialize_principle_set(set)).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn load(&self, version: u64) -> Result<PrincipleSet, StoreError> {
        load_principle_file(&self.path_for(version))
    }

    /// Stored versions, ascending.
    pub fn versions(&self) -> Result<Vec<u64>, StoreError> {
        let mut versions = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(versions),
            Err(e) => return Err(io_err(&self.dir, e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&self.dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(v) = name
                .strip_prefix('v')
                .and_then(|s| s.strip_suffix(".json"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                versions.push(v);
            }
        }
        versions.sort_unstable();
        Ok(versions)
    }
}

/// Loads one principle document from an arbitrary path.
pub fn load_principle_file(path: &Path) -> Result<PrincipleSet, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    deserialize_principle_set(&text).map_err(|source| StoreError::BadRecord {
        path: path.display().to_string(),
        line: source.line(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Provenance, TerminationCause};

    #[test]
    fn trajectory_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let ts = vec![
            Trajectory {
                query: "a".into(),
                steps: vec![],
                reward: Some(0.5),
                terminated: TerminationCause::Finished,
            },
            Trajectory {
                query: "b".into(),
                steps: vec![],
                reward: None,
                terminated: TerminationCause::MaxSteps,
            },
        ];
        write_trajectories(&path, &ts).unwrap();
        assert_eq!(read_trajectories(&path).unwrap(), ts);
    }

    #[test]
    fn bad_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "{\"query\"\n").unwrap();
        let err = read_trajectories(&path).unwrap_err();
        assert!(matches!(err, StoreError::BadRecord { line: 1, .. }));
    }

    #[test]
    fn principle_store_versions_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let store = PrincipleStore::new(dir.path().join("principles"));
        let space = vec![crate::types::ActionSpec::new("a", "d", vec![])];
        let v0 = PrincipleSet::seed_from_space(&space);
        let v1 = v0.child(v0.entries.clone(), Provenance::RpoBatch);
        store.save(&v1).unwrap();
        store.save(&v0).unwrap();
        assert_eq!(store.versions().unwrap(), vec![0, 1]);
        assert_eq!(store.load(1).unwrap(), v1);
    }
}
