use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One invocation of the command line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment_id: String,
    pub config_hash: String,
    pub provenance: String,
    pub command: String,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_s: f64,
    /// "ok" or "error: <message>".
    pub status: String,
}

pub fn provenance(config_hash: &str) -> String {
    format!("gando-core@{}+cfg.{config_hash}", env!("CARGO_PKG_VERSION"))
}

/// Appends one JSON line under an exclusive file lock.
pub fn append_run(path: &Path, record: &RunRecord) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.lock()?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let res = f.write_all(line.as_bytes()).and_then(|_| f.flush());
    f.unlock()?;
    res?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = std::fs::File::open(path)?;
    f.lock_shared()?;
    let out = BufReader::new(&f)
        .lines()
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect::<Result<Vec<_>>>();
    f.unlock()?;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize) -> RunRecord {
        RunRecord {
            experiment_id: format!("e{i}"),
            config_hash: "h".into(),
            provenance: provenance("h"),
            command: "train".into(),
            artifacts: vec![],
            wall_clock_s: 0.5,
            status: "ok".into(),
        }
    }

    #[test]
    fn concurrent_appends_keep_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        std::thread::scope(|s| {
            for t in 0..4 {
                let path = &path;
                s.spawn(move || {
                    for i in 0..25 {
                        append_run(path, &rec(t * 100 + i)).unwrap();
                    }
                });
            }
        });
        let runs = read_runs(&path).unwrap();
        assert_eq!(runs.len(), 100);
    }
}
