use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::kv::{KvError, KvFile};
use crate::types::{NodeDescriptor, NodeId, SchedulingClass, TargetTriple};
use crate::xmapper::ToolchainId;

use super::DaemonError;

/// A compiler installed on this node, described by a `toolchain.meta` file:
///
/// ```text
/// target = arm-linux-gnueabi
/// compiler = /usr/bin/clang
/// version = 14.0.0
/// args = --target=arm-linux-gnueabi   # optional leading arguments
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub id: ToolchainId,
    pub compiler: PathBuf,
    pub leading_args: Vec<String>,
}

impl Toolchain {
    pub fn from_meta(text: &str, dir: &Path) -> Result<Self, KvError> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(|k| matches!(k, "target" | "compiler" | "version" | "args"))?;
        let target: TargetTriple = kv.parse_req("target")?;
        let version = kv.require("version")?;
        let id = ToolchainId::new(target, version).map_err(|e| KvError::Value {
            key: "version".into(),
            value: version.into(),
            reason: e.to_string(),
        })?;
        let compiler = PathBuf::from(kv.require("compiler")?);
        // Relative paths with a separator are relative to the toolchain dir;
        // bare names are looked up on PATH at execution.
        let compiler = if compiler.is_relative() && compiler.components().count() > 1 {
            dir.join(compiler)
        } else {
            compiler
        };
        let leading_args = kv
            .get("args")
            .map(|a| a.split_whitespace().map(str::to_owned).collect())
            .unwrap_or_default();
        Ok(Toolchain {
            id,
            compiler,
            leading_args,
        })
    }
}

/// Reads every `<dir>/*/toolchain.meta`. Directories without a meta file
/// are skipped; malformed ones are errors.
pub fn discover_toolchains(dir: &Path) -> Result<BTreeMap<ToolchainId, Toolchain>, DaemonError> {
    let mut found = BTreeMap::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| DaemonError::Io(format!("{}: {e}", dir.display())))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let meta = sub.join("toolchain.meta");
        let Ok(text) = std::fs::read_to_string(&meta) else {
            continue;
        };
        let tc = Toolchain::from_meta(&text, &sub)
            .map_err(|e| DaemonError::Meta(format!("{}: {e}", meta.display())))?;
        found.insert(tc.id.clone(), tc);
    }
    if found.is_empty() {
        return Err(DaemonError::NoToolchainFound(dir.to_path_buf()));
    }
    Ok(found)
}

pub fn hostname() -> String {
    let mut buf = [0u8; 256];
    // SAFETY: buf is writable for its full length and gethostname NUL-terminates on success.
    let rc = unsafe { libc::gethostname(buf.as_mut_ptr().cast(), buf.len()) };
    if rc != 0 {
        return "localhost".into();
    }
    let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
    String::from_utf8_lossy(&buf[..end]).into_owned()
}

/// Options that override what the probe would detect.
#[derive(Debug, Clone, Default)]
pub struct ProbeOverrides {
    pub node_id: Option<NodeId>,
    pub cpu_count: Option<u32>,
}

/// Describes this machine.
pub fn probe_node(
    toolchain_dir: &Path,
    class: SchedulingClass,
    overrides: &ProbeOverrides,
) -> Result<(NodeDescriptor, BTreeMap<ToolchainId, Toolchain>), DaemonError> {
    let toolchains = discover_toolchains(toolchain_dir)?;
    let cpu_count = overrides.cpu_count.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get() as u32)
            .unwrap_or(1)
    });
    let node_id = match &overrides.node_id {
        Some(id) => id.clone(),
        None => NodeId::new(hostname()).map_err(|e| DaemonError::Io(e.to_string()))?,
    };
    let desc = NodeDescriptor {
        node_id,
        cpu_count,
        os_family: std::env::consts::OS.to_owned(),
        cpu_arch: std::env::consts::ARCH.to_owned(),
        toolchains: toolchains.keys().cloned().collect(),
        load: read_load(cpu_count),
        user_active: false,
        scheduling_class: class,
    };
    desc.validate()
        .map_err(|e| DaemonError::Io(e.to_string()))?;
    Ok((desc, toolchains))
}

/// One-minute load average per CPU, clamped to `[0, 1]`.
pub fn normalize_load(loadavg: f64, cpu_count: u32) -> f64 {
    if !loadavg.is_finite() || cpu_count == 0 {
        return 1.0;
    }
    (loadavg / cpu_count as f64).clamp(0.0, 1.0)
}

pub fn read_load(cpu_count: u32) -> f64 {
    let avg = std::fs::read_to_string("/proc/loadavg")
        .ok()
        .and_then(|s| {
            s.split_whitespace()
                .next()
                .and_then(|v| v.parse::<f64>().ok())
        })
        .unwrap_or(0.0);
    normalize_load(avg, cpu_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_meta(root: &Path, name: &str, body: &str) {
        let d = root.join(name);
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("toolchain.meta"), body).unwrap();
    }

    #[test]
    fn native_plus_cross_toolchain() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(
            dir.path(),
            "native",
            "target=x86_64-linux-gnu\ncompiler=gcc\nversion=11.4.0\n",
        );
        write_meta(
            dir.path(),
            "arm",
            "target=arm-linux-gnueabi\ncompiler=bin/cc\nversion=14.0.0\nargs=--target=arm-linux-gnueabi -mfloat-abi=soft\n",
        );
        std::fs::create_dir_all(dir.path().join("not-a-toolchain")).unwrap();
        let overrides = ProbeOverrides {
            node_id: Some(NodeId::new("box").unwrap()),
            cpu_count: Some(2),
        };
        let (desc, tcs) = probe_node(dir.path(), SchedulingClass::Shared, &overrides).unwrap();
        assert_eq!(desc.cpu_count, 2);
        assert_eq!(desc.toolchains.len(), 2);
        assert_eq!(desc.os_family, std::env::consts::OS);
        let arm = &tcs[&"arm-linux-gnueabi/14.0.0".parse().unwrap()];
        assert_eq!(arm.compiler, dir.path().join("arm").join("bin/cc"));
        assert_eq!(
            arm.leading_args,
            ["--target=arm-linux-gnueabi", "-mfloat-abi=soft"]
        );
    }

    #[test]
    fn empty_dir_has_no_toolchain() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            probe_node(
                dir.path(),
                SchedulingClass::Dedicated,
                &ProbeOverrides::default()
            ),
            Err(DaemonError::NoToolchainFound(_))
        ));
    }

    #[test]
    fn detected_cpu_count_matches_machine() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(
            dir.path(),
            "native",
            "target=x86_64-linux-gnu\ncompiler=gcc\nversion=11\n",
        );
        let (desc, _) = probe_node(
            dir.path(),
            SchedulingClass::Dedicated,
            &ProbeOverrides::default(),
        )
        .unwrap();
        assert_eq!(
            desc.cpu_count as usize,
            std::thread::available_parallelism().unwrap().get()
        );
    }

    #[test]
    fn load_is_clamped() {
        assert_eq!(normalize_load(3.0, 2), 1.0);
        assert_eq!(normalize_load(0.5, 2), 0.25);
        assert_eq!(normalize_load(0.0, 4), 0.0);
        assert_eq!(normalize_load(f64::NAN, 4), 1.0);
        let l = read_load(1);
        assert!((0.0..=1.0).contains(&l));
    }
}
