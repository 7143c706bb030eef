//! Content-addressed object cache.
//!
//! A key is a digest over the preprocessed source digest, the canonicalized
//! compile flags and the toolchain id (which carries the compiler version).
//! Entries live under a two-level fan-out:
//!
//! ```text
//! <root>/<k0k1>/<k2k3>/<key>.o      object bytes
//! <root>/<k0k1>/<k2k3>/<key>.meta   JSON sidecar: key inputs, sizes, stamps
//! ```
//!
//! Both files are written to a temporary name and renamed into place. The
//! on-disk total (objects plus sidecars) never exceeds the configured
//! capacity; least recently used entries are evicted first. An entry whose
//! object does not match its recorded size and digest is purged and reported
//! as a miss.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::types::TranslationUnit;
use crate::xmapper::ToolchainId;

pub const DEFAULT_CAPACITY: u64 = 5 * 1024 * 1024 * 1024;

const KEY_SCHEMA: &[u8] = b"distcom-objcache-v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub Digest);

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Flags that consume the following argument.
const TAKES_VALUE: &[&str] = &[
    "-x",
    "-arch",
    "-target",
    "-Xclang",
    "-Xassembler",
    "-Xlinker",
    "-mllvm",
    "--param",
];

/// Returns the family of flags in which the last occurrence overrides
/// earlier ones, or `None` for flags that are kept verbatim.
fn override_family(flag: &str) -> Option<String> {
    if flag.starts_with("-O") {
        return Some("O".into());
    }
    if flag.starts_with("-std=") {
        return Some("std".into());
    }
    if matches!(flag, "-g" | "-g0" | "-g1" | "-g2" | "-g3") {
        return Some("g".into());
    }
    for prefix in ["-f", "-m", "-W"] {
        if let Some(rest) = flag.strip_prefix(prefix) {
            // -Wl,... -Wa,... -Wp,... are pass-through lists, not switches.
            if rest.contains(',') || rest.is_empty() {
                return None;
            }
            let name = rest.strip_prefix("no-").unwrap_or(rest);
            let name = name.split('=').next().unwrap_or(name);
            return Some(format!("{prefix}:{name}"));
        }
    }
    None
}

/// Canonical form of a flag list: value-taking flags are kept with their
/// value, overriding families (`-O*`, `-f[no-]x`, `-W[no-]x`, `-m[no-]x`,
/// `-std=`, `-g[0-3]`) keep only their last occurrence, and the survivors are
/// sorted.
pub fn canonical_args(args: &[String]) -> Vec<String> {
    let mut tokens: Vec<String> = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if TAKES_VALUE.contains(&a.as_str()) {
            let v = it.next().map(String::as_str).unwrap_or("");
            tokens.push(format!("{a} {v}"));
        } else {
            tokens.push(a.clone());
        }
    }
    let mut last: HashMap<String, usize> = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        if let Some(fam) = override_family(t) {
            last.insert(fam, i);
        }
    }
    let mut out: Vec<String> = tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| override_family(t).map_or(true, |fam| last[&fam] == *i))
        .map(|(_, t)| t.clone())
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn cache_key(tu: &TranslationUnit, toolchain: &ToolchainId) -> CacheKey {
    let args = canonical_args(&tu.compile_args).join("\0");
    CacheKey(Digest::of_fields([
        KEY_SCHEMA,
        tu.source_digest.as_str().as_bytes(),
        args.as_bytes(),
        toolchain.as_str().as_bytes(),
    ]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EntryMeta {
    key: CacheKey,
    source_digest: Digest,
    toolchain: String,
    args: Vec<String>,
    size: u64,
    object_digest: Digest,
    /// Zero-padded so rewriting a stamp never changes the sidecar size.
    stored: String,
    last_used: String,
}

fn stamp_str(s: u64) -> String {
    format!("{s:020}")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub corrupt: u64,
    pub evictions: u64,
    pub stores: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit(Vec<u8>),
    Miss,
    /// The entry was damaged and has been purged. Treat as a miss.
    Corrupt,
}

#[derive(Debug, Clone)]
struct Indexed {
    meta: EntryMeta,
    disk: u64,
    last_used: u64,
}

#[derive(Debug)]
pub struct ObjectCache {
    root: PathBuf,
    capacity: u64,
    entries: HashMap<CacheKey, Indexed>,
    lru: BTreeMap<u64, CacheKey>,
    size: u64,
    clock: u64,
    stats: CacheStats,
}

impl ObjectCache {
    /// Opens the cache at `root`, indexing existing entries. Unreadable
    /// sidecars and orphaned files are removed.
    pub fn open(root: impl AsRef<Path>, capacity: u64) -> io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let mut cache = ObjectCache {
            root,
            capacity,
            entries: HashMap::new(),
            lru: BTreeMap::new(),
            size: 0,
            clock: 1,
            stats: CacheStats::default(),
        };
        cache.scan()?;
        cache.evict_until(0)?;
        Ok(cache)
    }

    fn scan(&mut self) -> io::Result<()> {
        let mut metas = Vec::new();
        let mut objects = Vec::new();
        for l1 in fs::read_dir(&self.root)? {
            let l1 = l1?.path();
            if !l1.is_dir() {
                continue;
            }
            for l2 in fs::read_dir(&l1)? {
                let l2 = l2?.path();
                if !l2.is_dir() {
                    continue;
                }
                for f in fs::read_dir(&l2)? {
                    let p = f?.path();
                    match p.extension().and_then(|e| e.to_str()) {
                        Some("meta") => metas.push(p),
                        Some("o") => objects.push(p),
                        _ => {
                            let _ = fs::remove_file(&p);
                        }
                    }
                }
            }
        }
        for p in metas {
            let parsed = fs::read(&p).ok().and_then(|b| {
                serde_json::from_slice::<EntryMeta>(&b)
                    .ok()
                    .map(|m| (m, b.len() as u64))
            });
            match parsed {
                Some((meta, meta_len)) if p.with_extension("o").exists() => {
                    let last_used = meta.last_used.parse().unwrap_or(0);
                    self.clock = self.clock.max(last_used + 1);
                    let disk = meta.size + meta_len;
                    self.size += disk;
                    self.lru.insert(last_used, meta.key.clone());
                    self.entries.insert(
                        meta.key.clone(),
                        Indexed {
                            meta,
                            disk,
                            last_used,
                        },
                    );
                }
                _ => {
                    let _ = fs::remove_file(&p);
                    let _ = fs::remove_file(p.with_extension("o"));
                }
            }
        }
        for p in objects {
            if !p.with_extension("meta").exists() {
                let _ = fs::remove_file(&p);
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Bytes currently used on disk by objects and sidecars.
    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entries.contains_key(key)
    }

    fn base_path(&self, key: &CacheKey) -> PathBuf {
        let k = key.0.as_str();
        self.root.join(&k[0..2]).join(&k[2..4]).join(k)
    }

    /// Path of the object file for `key`.
    pub fn object_path(&self, key: &CacheKey) -> PathBuf {
        self.base_path(key).with_extension("o")
    }

    fn tick(&mut self) -> u64 {
        let s = self.clock;
        self.clock += 1;
        s
    }

    pub fn lookup(&mut self, key: &CacheKey) -> io::Result<Lookup> {
        let Some(entry) = self.entries.get(key) else {
            self.stats.misses += 1;
            return Ok(Lookup::Miss);
        };
        let expected_size = entry.meta.size;
        let expected_digest = entry.meta.object_digest.clone();
        let bytes = match fs::read(self.object_path(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        if bytes.len() as u64 != expected_size || Digest::of(&bytes) != expected_digest {
            log::warn!("object cache entry {key} is corrupt; purging");
            self.purge(key)?;
            self.stats.corrupt += 1;
            self.stats.misses += 1;
            return Ok(Lookup::Corrupt);
        }
        let now = self.tick();
        let entry = self.entries.get_mut(key).expect("checked above");
        self.lru.remove(&entry.last_used);
        entry.last_used = now;
        entry.meta.last_used = stamp_str(now);
        self.lru.insert(now, key.clone());
        let meta = serde_json::to_vec(&entry.meta).map_err(io::Error::other)?;
        write_atomic(&self.base_path(key).with_extension("meta"), &meta)?;
        self.stats.hits += 1;
        Ok(Lookup::Hit(bytes))
    }

    /// Stores an object produced by a finished task. Idempotent; objects
    /// larger than the whole cache are not stored.
    pub fn store(
        &mut self,
        key: &CacheKey,
        tu: &TranslationUnit,
        toolchain: &ToolchainId,
        object: &[u8],
    ) -> io::Result<bool> {
        if self.entries.contains_key(key) {
            return Ok(true);
        }
        let now = self.tick();
        let meta = EntryMeta {
            key: key.clone(),
            source_digest: tu.source_digest.clone(),
            toolchain: toolchain.to_string(),
            args: tu.compile_args.clone(),
            size: object.len() as u64,
            object_digest: Digest::of(object),
            stored: stamp_str(now),
            last_used: stamp_str(now),
        };
        let meta_bytes = serde_json::to_vec(&meta).map_err(io::Error::other)?;
        let disk = object.len() as u64 + meta_bytes.len() as u64;
        if disk > self.capacity {
            return Ok(false);
        }
        self.evict_until(disk)?;
        let base = self.base_path(key);
        fs::create_dir_all(base.parent().expect("fan-out dir"))?;
        write_atomic(&base.with_extension("o"), object)?;
        write_atomic(&base.with_extension("meta"), &meta_bytes)?;
        self.size += disk;
        self.lru.insert(now, key.clone());
        self.entries.insert(
            key.clone(),
            Indexed {
                meta,
                disk,
                last_used: now,
            },
        );
        self.stats.stores += 1;
        Ok(true)
    }

    fn evict_until(&mut self, incoming: u64) -> io::Result<()> {
        while self.size + incoming > self.capacity {
            let Some((_, key)) = self.lru.pop_first() else {
                break;
            };
            self.remove_entry(&key)?;
            self.stats.evictions += 1;
        }
        Ok(())
    }

    fn remove_entry(&mut self, key: &CacheKey) -> io::Result<()> {
        if let Some(e) = self.entries.remove(key) {
            self.lru.remove(&e.last_used);
            self.size -= e.disk;
        }
        let base = self.base_path(key);
        for ext in ["o", "meta"] {
            match fs::remove_file(base.with_extension(ext)) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        Ok(())
    }

    fn purge(&mut self, key: &CacheKey) -> io::Result<()> {
        self.remove_entry(key)
    }

    /// Removes every entry.
    pub fn clear(&mut self) -> io::Result<()> {
        let keys: Vec<CacheKey> = self.entries.keys().cloned().collect();
        for k in keys {
            self.remove_entry(&k)?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TuId;

    fn tu(args: &[&str]) -> TranslationUnit {
        TranslationUnit::from_preprocessed(
            TuId::new("a.c").unwrap(),
            b"int x;",
            args.iter().map(|s| s.to_string()).collect(),
            "x86_64-linux-gnu".parse().unwrap(),
        )
    }

    fn tc(v: &str) -> ToolchainId {
        ToolchainId::new("x86_64-linux-gnu".parse().unwrap(), v).unwrap()
    }

    #[test]
    fn key_determinism_and_sensitivity() {
        assert_eq!(
            cache_key(&tu(&["-O2"]), &tc("11")),
            cache_key(&tu(&["-O2"]), &tc("11"))
        );
        assert_ne!(
            cache_key(&tu(&["-O2"]), &tc("11")),
            cache_key(&tu(&["-O0"]), &tc("11"))
        );
        assert_ne!(
            cache_key(&tu(&["-O2"]), &tc("11")),
            cache_key(&tu(&["-O2"]), &tc("12"))
        );
        assert_eq!(
            cache_key(&tu(&["-O2", "-Wall", "-g"]), &tc("11")),
            cache_key(&tu(&["-g", "-Wall", "-O2"]), &tc("11"))
        );
    }

    #[test]
    fn canonicalization_respects_overrides() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(canonical_args(&s(&["-O0", "-O2"])), s(&["-O2"]));
        assert_ne!(
            canonical_args(&s(&["-O0", "-O2"])),
            canonical_args(&s(&["-O2", "-O0"]))
        );
        assert_eq!(canonical_args(&s(&["-fpic", "-fno-pic"])), s(&["-fno-pic"]));
        assert_eq!(canonical_args(&s(&["-x", "c", "-O1"])), s(&["-O1", "-x c"]));
        assert_eq!(canonical_args(&s(&["-Wl,-a", "-Wl,-b"])).len(), 2);
    }

    #[test]
    fn store_lookup_corrupt_and_evict() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ObjectCache::open(dir.path(), 1 << 20).unwrap();
        let t = tu(&["-O2"]);
        let k = cache_key(&t, &tc("11"));
        assert_eq!(c.lookup(&k).unwrap(), Lookup::Miss);
        assert!(c.store(&k, &t, &tc("11"), b"object-bytes").unwrap());
        assert_eq!(c.lookup(&k).unwrap(), Lookup::Hit(b"object-bytes".to_vec()));

        // reopen: index survives
        drop(c);
        let mut c = ObjectCache::open(dir.path(), 1 << 20).unwrap();
        assert!(c.contains(&k));

        // truncate on disk
        fs::write(c.object_path(&k), b"obj").unwrap();
        assert_eq!(c.lookup(&k).unwrap(), Lookup::Corrupt);
        assert!(!c.contains(&k));
        assert_eq!(c.lookup(&k).unwrap(), Lookup::Miss);
        assert_eq!(c.size(), 0);
    }

    #[test]
    fn lru_eviction_respects_capacity() {
        let dir = tempfile::tempdir().unwrap();
        let t = |i: usize| tu(&[&format!("-DI{i}")]);
        let object = vec![7u8; 1000];
        let probe = {
            let mut c = ObjectCache::open(dir.path().join("probe"), u64::MAX).unwrap();
            c.store(&cache_key(&t(0), &tc("1")), &t(0), &tc("1"), &object)
                .unwrap();
            c.size()
        };
        let mut c = ObjectCache::open(dir.path().join("c"), probe * 3).unwrap();
        let keys: Vec<_> = (0..4).map(|i| cache_key(&t(i), &tc("1"))).collect();
        for (i, k) in keys.iter().take(3).enumerate() {
            c.store(k, &t(i), &tc("1"), &object).unwrap();
        }
        // touch 0 so 1 becomes the eviction candidate
        assert!(matches!(c.lookup(&keys[0]).unwrap(), Lookup::Hit(_)));
        c.store(&keys[3], &t(3), &tc("1"), &object).unwrap();
        assert!(c.size() <= c.capacity());
        assert!(c.contains(&keys[0]) && !c.contains(&keys[1]) && c.contains(&keys[3]));
        assert_eq!(c.stats().evictions, 1);
        c.clear().unwrap();
        assert_eq!((c.len(), c.size()), (0, 0));
    }
}
