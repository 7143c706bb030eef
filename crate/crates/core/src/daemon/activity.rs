use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

/// Default idle window before a quiet console counts as unattended.
pub const DEFAULT_IDLE_WINDOW: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: stamp {stamp} is earlier than the previous one")]
    NotMonotone { line: usize, stamp: f64 },
}

/// A recorded user-presence schedule: `(seconds, active)` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrace {
    steps: Vec<(f64, bool)>,
}

impl ScriptedTrace {
    pub fn new(steps: Vec<(f64, bool)>) -> Result<Self, TraceError> {
        for (i, w) in steps.windows(2).enumerate() {
            if w[1].0 < w[0].0 {
                return Err(TraceError::NotMonotone {
                    line: i + 2,
                    stamp: w[1].0,
                });
            }
        }
        Ok(ScriptedTrace { steps })
    }

    /// Parses lines of `<seconds> <0|1>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| TraceError::Syntax {
                line: i + 1,
                reason: reason.to_owned(),
            };
            let mut parts = line.split_whitespace();
            let stamp: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|s: &f64| s.is_finite() && *s >= 0.0)
                .ok_or_else(|| bad("expected a nonnegative stamp in seconds"))?;
            let active = match parts.next() {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(bad("expected 0 or 1")),
            };
            if parts.next().is_some() {
                return Err(bad("trailing fields"));
            }
            if let Some(&(prev, _)) = steps.last() {
                if stamp < prev {
                    return Err(TraceError::NotMonotone { line: i + 1, stamp });
                }
            }
            steps.push((stamp, active));
        }
        Ok(ScriptedTrace { steps })
    }

    pub fn steps(&self) -> &[(f64, bool)] {
        &self.steps
    }

    /// Presence at `t` seconds: the last step at or before `t`, absent before
    /// the first.
    pub fn active_at(&self, t: f64) -> bool {
        let idx = self.steps.partition_point(|&(s, _)| s <= t);
        idx > 0 && self.steps[idx - 1].1
    }

    /// Stamps where presence flips, with the new value.
    pub fn transitions(&self) -> Vec<(f64, bool)> {
        let mut out = Vec::new();
        let mut cur = false;
        for &(s, a) in &self.steps {
            if a != cur {
                out.push((s, a));
                cur = a;
            }
        }
        out
    }

    pub fn duration(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.0)
    }
}

/// Where presence information comes from.
#[derive(Debug, Clone)]
pub enum ActivityProbe {
    /// Input devices and terminals touched within the idle window count as
    /// presence.
    RealInputDevices {
        paths: Vec<PathBuf>,
        idle_window: Duration,
    },
    ScriptedTrace(ScriptedTrace),
}

impl ActivityProbe {
    pub fn real() -> Self {
        ActivityProbe::RealInputDevices {
            paths: vec![PathBuf::from("/dev/input"), PathBuf::from("/dev/pts")],
            idle_window: DEFAULT_IDLE_WINDOW,
        }
    }

    /// Presence `elapsed` after the daemon started.
    pub fn user_active(&self, elapsed: Duration) -> bool {
        match self {
            ActivityProbe::ScriptedTrace(t) => t.active_at(elapsed.as_secs_f64()),
            ActivityProbe::RealInputDevices { paths, idle_window } => {
                let now = SystemTime::now();
                paths
                    .iter()
                    .filter_map(|p| latest_access(p))
                    .any(|t| now.duration_since(t).map_or(true, |d| d <= *idle_window))
            }
        }
    }
}

fn latest_access(path: &Path) -> Option<SystemTime> {
    let stamp = |p: &Path| {
        std::fs::metadata(p)
            .ok()
            .and_then(|m| m.accessed().ok().max(m.modified().ok()))
    };
    let dir = std::fs::read_dir(path).ok()?;
    dir.filter_map(|e| e.ok())
        .filter_map(|e| stamp(&e.path()))
        .max()
}
