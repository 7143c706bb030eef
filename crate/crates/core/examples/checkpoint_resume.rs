//! Records finished objects in a checkpoint file, simulates a crash with a
//! torn write, and resumes with only the missing units.

use std::io::Write;

use distcom::{CheckpointFile, Digest, JobId, NodeId, TuId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.log");
    let job = JobId::new("demo")?;
    let units: Vec<TuId> = (0..6)
        .map(|i| TuId::new(format!("src/u{i}.c")))
        .collect::<Result<_, _>>()?;

    let mut log = CheckpointFile::open(&path, job.clone())?;
    for tu in &units[..4] {
        log.commit(
            tu.clone(),
            Digest::of(tu.as_str().as_bytes()),
            NodeId::new("n1")?,
        )?;
    }
    drop(log);
    // A crash in the middle of the fifth append.
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)?
        .write_all(b"src/u4.c\t3f")?;

    let log = CheckpointFile::open(&path, job)?;
    let done = log.log();
    println!("{} units committed before the crash", done.len());
    for tu in &units {
        let state = if done.is_committed(tu) {
            "restored"
        } else {
            "recompile"
        };
        println!("  {tu}: {state}");
    }
    Ok(())
}
