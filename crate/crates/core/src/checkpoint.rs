//! Per-job record of committed object files.
//!
//! Each translation unit is committed at most once; the first digest wins.
//! The on-disk form is one tab-separated record per line:
//!
//! ```text
//! <tu_id>\t<object_digest hex>\t<node_id>\t<stamp>\n
//! ```
//!
//! Every commit is flushed with `fsync` before it is acknowledged. A torn
//! final line (no trailing newline) is the signature of a crash mid-write and
//! is ignored on replay; the unit is simply compiled again.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::digest::Digest;
use crate::types::{JobId, NodeId, TranslationUnit, TuId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointEntry {
    pub tu_id: TuId,
    pub object_digest: Digest,
    pub node_id: NodeId,
    pub stamp: u64,
}

impl CheckpointEntry {
    pub fn encode(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\n",
            self.tu_id, self.object_digest, self.node_id, self.stamp
        )
    }

    pub fn decode(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [tu, digest, node, stamp] = fields.as_slice() else {
            return Err(format!(
                "expected 4 tab-separated fields, got {}",
                fields.len()
            ));
        };
        Ok(CheckpointEntry {
            tu_id: TuId::new(*tu).map_err(|e| e.to_string())?,
            object_digest: digest
                .parse()
                .map_err(|e: crate::digest::InvalidDigest| e.to_string())?,
            node_id: NodeId::new(*node).map_err(|e| e.to_string())?,
            stamp: stamp
                .parse()
                .map_err(|e: std::num::ParseIntError| e.to_string())?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("conflicting object digest for {tu_id}: kept {kept}, rejected {offered}")]
    DigestConflict {
        tu_id: TuId,
        kept: Digest,
        offered: Digest,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
}

/// Outcome of a successful commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Commit {
    Appended {
        stamp: u64,
    },
    /// Same `(tu_id, digest)` was already present.
    Unchanged,
}

/// In-memory checkpoint log. Append-only.
#[derive(Debug, Clone)]
pub struct CheckpointLog {
    job_id: JobId,
    entries: Vec<CheckpointEntry>,
    index: HashMap<TuId, usize>,
}

impl CheckpointLog {
    pub fn new(job_id: JobId) -> Self {
        CheckpointLog {
            job_id,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn job_id(&self) -> &JobId {
        &self.job_id
    }

    pub fn entries(&self) -> &[CheckpointEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tu: &TuId) -> Option<&CheckpointEntry> {
        self.index.get(tu).map(|&i| &self.entries[i])
    }

    pub fn is_committed(&self, tu: &TuId) -> bool {
        self.index.contains_key(tu)
    }

    pub fn committed(&self) -> BTreeSet<TuId> {
        self.index.keys().cloned().collect()
    }

    fn next_stamp(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.stamp + 1)
    }

    /// Checks a commit without applying it.
    fn prepare(&self, tu_id: &TuId, digest: &Digest) -> Result<Option<u64>, CheckpointError> {
        match self.get(tu_id) {
            Some(e) if e.object_digest == *digest => Ok(None),
            Some(e) => Err(CheckpointError::DigestConflict {
                tu_id: tu_id.clone(),
                kept: e.object_digest.clone(),
                offered: digest.clone(),
            }),
            None => Ok(Some(self.next_stamp())),
        }
    }

    fn push(&mut self, entry: CheckpointEntry) {
        self.index.insert(entry.tu_id.clone(), self.entries.len());
        self.entries.push(entry);
    }

    /// Records that `tu_id` produced `object_digest` on `node_id`.
    ///
    /// A conflicting digest leaves the log unchanged and is reported as
    /// [`CheckpointError::DigestConflict`]; callers treat it as a warning.
    pub fn commit(
        &mut self,
        tu_id: TuId,
        object_digest: Digest,
        node_id: NodeId,
    ) -> Result<Commit, CheckpointError> {
        match self.prepare(&tu_id, &object_digest)? {
            None => Ok(Commit::Unchanged),
            Some(stamp) => {
                self.push(CheckpointEntry {
                    tu_id,
                    object_digest,
                    node_id,
                    stamp,
                });
                Ok(Commit::Appended { stamp })
            }
        }
    }

    /// Translation units of the job that still need compiling, in job order.
    pub fn restart_plan<'a>(
        &self,
        job_tus: impl IntoIterator<Item = &'a TranslationUnit>,
    ) -> Vec<TuId> {
        job_tus
            .into_iter()
            .filter(|tu| !self.is_committed(&tu.tu_id))
            .map(|tu| tu.tu_id.clone())
            .collect()
    }
}

/// A [`CheckpointLog`] mirrored to an append-only file.
#[derive(Debug)]
pub struct CheckpointFile {
    path: PathBuf,
    file: File,
    log: CheckpointLog,
}

impl CheckpointFile {
    /// Opens or creates the log at `path`, replaying any existing records.
    pub fn open(path: impl AsRef<Path>, job_id: JobId) -> Result<Self, CheckpointError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let log = Self::replay(&path, job_id)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        // Drop a torn tail so the next record starts on a fresh line.
        let intact: u64 = log.entries.iter().map(|e| e.encode().len() as u64).sum();
        if file.metadata()?.len() != intact {
            file.set_len(intact)?;
            file.sync_all()?;
        }
        Ok(CheckpointFile { path, file, log })
    }

    /// Reads the committed entries of a log file without opening it for
    /// writing. A missing file is an empty log.
    pub fn replay(path: &Path, job_id: JobId) -> Result<CheckpointLog, CheckpointError> {
        let mut log = CheckpointLog::new(job_id);
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(log),
            Err(e) => return Err(e.into()),
        };
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            lineno += 1;
            let Some(record) = line.strip_suffix('\n') else {
                log::warn!("{}: ignoring torn record at line {lineno}", path.display());
                break;
            };
            let entry =
                CheckpointEntry::decode(record).map_err(|reason| CheckpointError::Corrupt {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason,
                })?;
            match log.prepare(&entry.tu_id, &entry.object_digest) {
                Ok(Some(_)) => log.push(entry),
                Ok(None) => {}
                Err(e) => log::warn!("{}:{lineno}: {e}", path.display()),
            }
        }
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn log(&self) -> &CheckpointLog {
        &self.log
    }

    /// Durable commit: the record is fsynced before the in-memory log changes.
    pub fn commit(
        &mut self,
        tu_id: TuId,
        object_digest: Digest,
        node_id: NodeId,
    ) -> Result<Commit, CheckpointError> {
        let Some(stamp) = self.log.prepare(&tu_id, &object_digest)? else {
            return Ok(Commit::Unchanged);
        };
        let entry = CheckpointEntry {
            tu_id,
            object_digest,
            node_id,
            stamp,
        };
        self.file.write_all(entry.encode().as_bytes())?;
        self.file.sync_data()?;
        self.log.push(entry);
        Ok(Commit::Appended { stamp })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tu(i: usize) -> TranslationUnit {
        TranslationUnit::from_preprocessed(
            TuId::new(format!("tu{i}")).unwrap(),
            format!("int f{i};").as_bytes(),
            vec!["-O2".into()],
            "x86_64-linux-gnu".parse().unwrap(),
        )
    }

    fn node() -> NodeId {
        NodeId::new("n1").unwrap()
    }

    #[test]
    fn commit_idempotent_and_conflict_keeps_first() {
        let mut log = CheckpointLog::new(JobId::new("j").unwrap());
        let d1 = Digest::of(b"1");
        let d2 = Digest::of(b"2");
        let t3 = TuId::new("tu3").unwrap();
        assert_eq!(
            log.commit(t3.clone(), d1.clone(), node()).unwrap(),
            Commit::Appended { stamp: 1 }
        );
        assert_eq!(
            log.commit(t3.clone(), d1.clone(), node()).unwrap(),
            Commit::Unchanged
        );
        let err = log.commit(t3.clone(), d2, node()).unwrap_err();
        assert!(matches!(err, CheckpointError::DigestConflict { .. }));
        assert_eq!(log.len(), 1);
        assert_eq!(log.get(&t3).unwrap().object_digest, d1);
    }

    #[test]
    fn restart_plan_is_set_difference() {
        let tus: Vec<_> = (0..10).map(tu).collect();
        let mut log = CheckpointLog::new(JobId::new("j").unwrap());
        assert_eq!(log.restart_plan(&tus).len(), 10);
        for t in tus.iter().take(4) {
            log.commit(
                t.tu_id.clone(),
                Digest::of(t.tu_id.as_str().as_bytes()),
                node(),
            )
            .unwrap();
        }
        let plan = log.restart_plan(&tus);
        assert_eq!(
            plan,
            tus[4..].iter().map(|t| t.tu_id.clone()).collect::<Vec<_>>()
        );
        for t in &tus[4..] {
            log.commit(t.tu_id.clone(), Digest::of(b"o"), node())
                .unwrap();
        }
        assert!(log.restart_plan(&tus).is_empty());
    }

    #[test]
    fn file_replay_matches_and_ignores_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.log");
        let job = JobId::new("j").unwrap();
        let mut f = CheckpointFile::open(&path, job.clone()).unwrap();
        for i in 0..3 {
            f.commit(
                TuId::new(format!("t{i}")).unwrap(),
                Digest::of(&[i as u8]),
                node(),
            )
            .unwrap();
        }
        let before = f.log().entries().to_vec();
        drop(f);
        // simulate a crash half way through a fourth record
        let mut raw = OpenOptions::new().append(true).open(&path).unwrap();
        raw.write_all(b"t3\tabc").unwrap();
        drop(raw);
        let mut f = CheckpointFile::open(&path, job.clone()).unwrap();
        assert_eq!(f.log().entries(), before.as_slice());
        f.commit(TuId::new("t3").unwrap(), Digest::of(b"x"), node())
            .unwrap();
        let replayed = CheckpointFile::replay(&path, job).unwrap();
        assert_eq!(replayed.len(), 4);
        assert_eq!(replayed.entries()[3].stamp, 4);
    }

    #[test]
    fn record_format_is_tab_separated() {
        let e = CheckpointEntry {
            tu_id: TuId::new("src/a.c").unwrap(),
            object_digest: Digest::of(b""),
            node_id: node(),
            stamp: 7,
        };
        assert_eq!(
            e.encode(),
            "src/a.c\te3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855\tn1\t7\n"
        );
        assert_eq!(CheckpointEntry::decode(e.encode().trim_end()).unwrap(), e);
        assert!(CheckpointEntry::decode("a\tb").is_err());
    }
}
