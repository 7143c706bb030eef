//! Domain types shared by every service: identifiers, target triples,
//! translation units and node descriptors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::Digest;
use crate::xmapper::ToolchainId;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("{kind} must be nonempty")]
    Empty { kind: &'static str },
    #[error("{kind} {value:?} contains a tab, newline or other control character")]
    ControlChar { kind: &'static str, value: String },
    #[error("malformed target triple {0:?}: expected <arch>-<os>-<abi>")]
    Triple(String),
    #[error("node {node}: {reason}")]
    Node { node: String, reason: String },
}

macro_rules! text_id {
    ($(#[$doc:meta])* $name:ident, $kind:literal) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, TypeError> {
                let s = s.into();
                if s.is_empty() {
                    return Err(TypeError::Empty { kind: $kind });
                }
                if s.chars().any(char::is_control) {
                    return Err(TypeError::ControlChar { kind: $kind, value: s });
                }
                Ok($name(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = TypeError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

text_id!(
    /// Identifies a translation unit within a job. Usually the source path.
    TuId,
    "tu_id"
);
text_id!(
    /// Identifies a registered daemon.
    NodeId,
    "node_id"
);
text_id!(
    /// Content-derived job identity; resubmitting the same job yields the
    /// same id, which is how checkpoint logs are found again.
    JobId,
    "job_id"
);

/// `(job_id, tu_id)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub job: JobId,
    pub tu: TuId,
}

impl TaskId {
    pub fn new(job: JobId, tu: TuId) -> Self {
        TaskId { job, tu }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.job, self.tu)
    }
}

/// Where produced objects must run: `(cpu_arch, os_family, abi)`, lowercase.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetTriple {
    cpu_arch: String,
    os_family: String,
    abi: String,
}

impl TargetTriple {
    pub fn new(cpu_arch: &str, os_family: &str, abi: &str) -> Result<Self, TypeError> {
        let parts = [cpu_arch, os_family, abi];
        if parts.iter().any(|p| p.trim().is_empty()) {
            return Err(TypeError::Triple(parts.join("-")));
        }
        if parts.iter().any(|p| {
            p.contains(|c: char| c == '-' || c == '/' || c.is_whitespace() || c.is_control())
        }) {
            return Err(TypeError::Triple(parts.join("-")));
        }
        Ok(TargetTriple {
            cpu_arch: cpu_arch.to_ascii_lowercase(),
            os_family: os_family.to_ascii_lowercase(),
            abi: abi.to_ascii_lowercase(),
        })
    }

    pub fn cpu_arch(&self) -> &str {
        &self.cpu_arch
    }

    pub fn os_family(&self) -> &str {
        &self.os_family
    }

    pub fn abi(&self) -> &str {
        &self.abi
    }
}

impl FromStr for TargetTriple {
    type Err = TypeError;

    /// Accepts `arch-os-abi` and the four-part `arch-vendor-os-abi` form
    /// (the vendor field is dropped).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        match parts.as_slice() {
            [arch, os, abi] => TargetTriple::new(arch, os, abi),
            [arch, _vendor, os, abi] => TargetTriple::new(arch, os, abi),
            _ => Err(TypeError::Triple(s.to_owned())),
        }
    }
}

impl fmt::Display for TargetTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.cpu_arch, self.os_family, self.abi)
    }
}

impl fmt::Debug for TargetTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TargetTriple({self})")
    }
}

impl Serialize for TargetTriple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TargetTriple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One source file, preprocessed, to be compiled into one object file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub tu_id: TuId,
    pub source_digest: Digest,
    /// Compiler flags only; input and output paths are supplied at execution.
    pub compile_args: Vec<String>,
    pub target: TargetTriple,
    /// Abstract work units; known in simulation, unknown in real builds.
    pub est_cost: Option<f64>,
}

impl TranslationUnit {
    pub fn from_preprocessed(
        tu_id: TuId,
        preprocessed: &[u8],
        compile_args: Vec<String>,
        target: TargetTriple,
    ) -> Self {
        TranslationUnit {
            tu_id,
            source_digest: Digest::of(preprocessed),
            compile_args,
            target,
            est_cost: None,
        }
    }
}

/// How a node participates in scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulingClass {
    /// Operator-flagged always-idle machine; runs tasks at full priority.
    Dedicated,
    /// Machine with an interactive user; tasks yield to that user.
    Shared,
}

impl FromStr for SchedulingClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dedicated" => Ok(SchedulingClass::Dedicated),
            "shared" => Ok(SchedulingClass::Shared),
            other => Err(format!("unknown scheduling class {other:?}")),
        }
    }
}

impl fmt::Display for SchedulingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulingClass::Dedicated => "dedicated",
            SchedulingClass::Shared => "shared",
        })
    }
}

/// What a daemon reports about its machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: NodeId,
    pub cpu_count: u32,
    pub os_family: String,
    pub cpu_arch: String,
    pub toolchains: BTreeSet<ToolchainId>,
    /// Normalized load in `[0, 1]`.
    pub load: f64,
    pub user_active: bool,
    pub scheduling_class: SchedulingClass,
}

impl NodeDescriptor {
    /// Checks the invariants a registrable node must satisfy.
    pub fn validate(&self) -> Result<(), TypeError> {
        let fail = |reason: &str| {
            Err(TypeError::Node {
                node: self.node_id.to_string(),
                reason: reason.to_owned(),
            })
        };
        if self.cpu_count == 0 {
            return fail("cpu_count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.load) {
            return fail("load must lie in [0, 1]");
        }
        if self.toolchains.is_empty() {
            return fail("a registrable node needs at least one toolchain");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_parse_forms() {
        let t: TargetTriple = "ARM-Linux-GNUEABI".parse().unwrap();
        assert_eq!(t.to_string(), "arm-linux-gnueabi");
        let t: TargetTriple = "x86_64-pc-linux-gnu".parse().unwrap();
        assert_eq!(t.to_string(), "x86_64-linux-gnu");
        assert!("mips-linux".parse::<TargetTriple>().is_err());
        assert!("a--b".parse::<TargetTriple>().is_err());
    }

    #[test]
    fn ids_reject_control_chars() {
        assert!(TuId::new("a\tb").is_err());
        assert!(TuId::new("").is_err());
        assert!(NodeId::new("n\n").is_err());
        assert_eq!(TuId::new("src/a.c").unwrap().as_str(), "src/a.c");
    }

    #[test]
    fn node_validation() {
        let mut desc = NodeDescriptor {
            node_id: NodeId::new("n1").unwrap(),
            cpu_count: 2,
            os_family: "linux".into(),
            cpu_arch: "x86_64".into(),
            toolchains: [ToolchainId::new("x86_64-linux-gnu".parse().unwrap(), "11.4.0").unwrap()]
                .into_iter()
                .collect(),
            load: 0.0,
            user_active: false,
            scheduling_class: SchedulingClass::Dedicated,
        };
        assert!(desc.validate().is_ok());
        desc.load = 1.5;
        assert!(desc.validate().is_err());
        desc.load = 0.5;
        desc.cpu_count = 0;
        assert!(desc.validate().is_err());
        desc.cpu_count = 1;
        desc.toolchains.clear();
        assert!(desc.validate().is_err());
    }
}
