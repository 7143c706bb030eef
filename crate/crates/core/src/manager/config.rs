use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::kv::{KvError, KvFile};
use crate::objcache::DEFAULT_CAPACITY;
use crate::scheduler::{Policy, PolicyConfig};
use crate::task::DEFAULT_MAX_ATTEMPTS;

/// Manager settings. Loaded from a `key=value` file:
///
/// ```text
/// policy = hybrid
/// load_reject_threshold = 0.75
/// stop_on_user_access = false
/// scheduling_cost_weight = 0
/// heartbeat_interval_ms = 2000
/// missed_heartbeats = 3
/// max_attempts = 3
/// staging_dir = /var/lib/distcom/staging
/// cache_dir = /var/lib/distcom/cache
/// cache_capacity_bytes = 5368709120
/// allow_mixed = false
/// ```
///
/// Without `cache_dir` the object cache is off.
#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub policy: PolicyConfig,
    pub heartbeat_interval: Duration,
    pub missed_heartbeats: u32,
    pub max_attempts: u32,
    pub staging_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub cache_capacity: u64,
    pub allow_mixed: bool,
}

impl ManagerConfig {
    pub fn new(staging_dir: impl Into<PathBuf>) -> Self {
        ManagerConfig {
            policy: PolicyConfig::default(),
            heartbeat_interval: Duration::from_secs(2),
            missed_heartbeats: 3,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            staging_dir: staging_dir.into(),
            cache_dir: None,
            cache_capacity: DEFAULT_CAPACITY,
            allow_mixed: false,
        }
    }

    /// Silence longer than this marks a node as lost.
    pub fn loss_timeout(&self) -> Duration {
        self.heartbeat_interval * self.missed_heartbeats
    }

    pub fn from_kv(kv: &KvFile, base: &Path) -> Result<Self, KvError> {
        const KNOWN: &[&str] = &[
            "policy",
            "load_reject_threshold",
            "stop_on_user_access",
            "scheduling_cost_weight",
            "heartbeat_interval_ms",
            "missed_heartbeats",
            "max_attempts",
            "staging_dir",
            "cache_dir",
            "cache_capacity_bytes",
            "allow_mixed",
        ];
        kv.reject_unknown(|k| KNOWN.contains(&k))?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut cfg = ManagerConfig::new(resolve(kv.get("staging_dir").unwrap_or("staging")));
        if let Some(p) = kv.parse_opt::<Policy>("policy")? {
            cfg.policy.policy = p;
        }
        if let Some(v) = kv.parse_opt("load_reject_threshold")? {
            cfg.policy.load_reject_threshold = v;
        }
        if let Some(v) = kv.parse_opt("stop_on_user_access")? {
            cfg.policy.stop_on_user_access = v;
        }
        if let Some(v) = kv.parse_opt("scheduling_cost_weight")? {
            cfg.policy.scheduling_cost_weight = v;
        }
        if let Some(ms) = kv.parse_opt::<u64>("heartbeat_interval_ms")? {
            cfg.heartbeat_interval = Duration::from_millis(ms);
        }
        if let Some(v) = kv.parse_opt("missed_heartbeats")? {
            cfg.missed_heartbeats = v;
        }
        if let Some(v) = kv.parse_opt("max_attempts")? {
            cfg.max_attempts = v;
        }
        cfg.cache_dir = kv.get("cache_dir").map(resolve);
        if let Some(v) = kv.parse_opt("cache_capacity_bytes")? {
            cfg.cache_capacity = v;
        }
        if let Some(v) = kv.parse_opt("allow_mixed")? {
            cfg.allow_mixed = v;
        }
        cfg.policy.validate().map_err(|reason| KvError::Value {
            key: "policy".into(),
            value: format!("{:?}", cfg.policy),
            reason,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::from_kv(&KvFile::parse(&text)?, base)?)
    }
}
