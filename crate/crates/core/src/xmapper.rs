//! Heterogeneous CPU mapping: which toolchain on which node produces objects
//! for a job's target.
//!
//! Matching is exact on all three triple components. There is no notion of a
//! "compatible" architecture; an object built for the wrong triple is a
//! wrong object.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::types::{NodeDescriptor, NodeId, TargetTriple, TypeError};

/// `<target-triple>/<compiler-version>`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ToolchainId {
    id: String,
    target: TargetTriple,
    version: String,
}

impl ToolchainId {
    pub fn new(target: TargetTriple, version: &str) -> Result<Self, TypeError> {
        let version = version.trim();
        if version.is_empty() {
            return Err(TypeError::Empty {
                kind: "toolchain version",
            });
        }
        if version
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || c == '/')
        {
            return Err(TypeError::ControlChar {
                kind: "toolchain version",
                value: version.to_owned(),
            });
        }
        Ok(ToolchainId {
            id: format!("{target}/{version}"),
            target,
            version: version.to_owned(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.id
    }

    pub fn target(&self) -> &TargetTriple {
        &self.target
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

impl Ord for ToolchainId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id.cmp(&other.id)
    }
}

impl PartialOrd for ToolchainId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for ToolchainId {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (triple, version) = s
            .split_once('/')
            .ok_or_else(|| TypeError::Triple(s.to_owned()))?;
        ToolchainId::new(triple.parse()?, version)
    }
}

impl fmt::Display for ToolchainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl fmt::Debug for ToolchainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ToolchainId({})", self.id)
    }
}

impl Serialize for ToolchainId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.id)
    }
}

impl<'de> Deserialize<'de> for ToolchainId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Orders version strings component-wise: numeric runs compare as numbers,
/// everything else lexically. `11.10.0 > 11.9.2 > 11.9`.
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let split =
        |s: &str| -> Vec<String> { s.split(['.', '-', '_', '+']).map(str::to_owned).collect() };
    let (pa, pb) = (split(a), split(b));
    for (x, y) in pa.iter().zip(pb.iter()) {
        let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
            (Ok(nx), Ok(ny)) => nx.cmp(&ny),
            (Ok(_), Err(_)) => Ordering::Greater,
            (Err(_), Ok(_)) => Ordering::Less,
            (Err(_), Err(_)) => x.cmp(y),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    pa.len().cmp(&pb.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node {node} has no toolchain for {target}")]
pub struct Incompatible {
    pub target: TargetTriple,
    pub node: NodeId,
}

/// Picks the toolchain on `node` that builds for exactly `target`; the
/// highest version wins when several match.
pub fn resolve_toolchain<'a>(
    target: &TargetTriple,
    node: &'a NodeDescriptor,
) -> Result<&'a ToolchainId, Incompatible> {
    node.toolchains
        .iter()
        .filter(|tc| tc.target() == target)
        .max_by(|a, b| compare_versions(a.version(), b.version()))
        .ok_or_else(|| Incompatible {
            target: target.clone(),
            node: node.node_id.clone(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VersionCheck {
    /// None of the nodes can build the target.
    NoEligibleNodes,
    /// Every compatible node resolves to the same compiler version.
    Uniform { version: String },
    /// Versions differ. `offenders` resolve to something other than the
    /// majority version (ties go to the highest version). Accepted only when
    /// `allowed` is set.
    Mixed {
        majority: String,
        offenders: Vec<NodeId>,
        allowed: bool,
    },
}

impl VersionCheck {
    pub fn is_ok(&self) -> bool {
        matches!(
            self,
            VersionCheck::Uniform { .. } | VersionCheck::Mixed { allowed: true, .. }
        )
    }

    /// The version the job should be pinned to, if any.
    pub fn pinned_version(&self) -> Option<&str> {
        match self {
            VersionCheck::Uniform { version } => Some(version),
            _ => None,
        }
    }

    /// The version most compatible nodes resolve to.
    pub fn majority_version(&self) -> Option<&str> {
        match self {
            VersionCheck::Uniform { version } => Some(version),
            VersionCheck::Mixed { majority, .. } => Some(majority),
            VersionCheck::NoEligibleNodes => None,
        }
    }
}

/// Guards against linking objects produced by different compiler versions.
pub fn version_consistency_check<'a>(
    target: &TargetTriple,
    nodes: impl IntoIterator<Item = &'a NodeDescriptor>,
    allow_mixed: bool,
) -> VersionCheck {
    let resolved: Vec<(&NodeId, &str)> = nodes
        .into_iter()
        .filter_map(|n| {
            resolve_toolchain(target, n)
                .ok()
                .map(|tc| (&n.node_id, tc.version()))
        })
        .collect();
    if resolved.is_empty() {
        return VersionCheck::NoEligibleNodes;
    }
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, v) in &resolved {
        *tally.entry(v).or_default() += 1;
    }
    if tally.len() == 1 {
        return VersionCheck::Uniform {
            version: resolved[0].1.to_owned(),
        };
    }
    let majority = tally
        .iter()
        .max_by(|(va, ca), (vb, cb)| ca.cmp(cb).then_with(|| compare_versions(va, vb)))
        .map(|(v, _)| v.to_string())
        .expect("nonempty tally");
    let mut offenders: Vec<NodeId> = resolved
        .iter()
        .filter(|(_, v)| *v != majority)
        .map(|(n, _)| (*n).clone())
        .collect();
    offenders.sort();
    if allow_mixed {
        log::warn!(
            "mixed compiler versions for {target}: {} node(s) differ from {majority}",
            offenders.len()
        );
    }
    VersionCheck::Mixed {
        majority,
        offenders,
        allowed: allow_mixed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SchedulingClass;

    fn node(id: &str, toolchains: &[&str]) -> NodeDescriptor {
        NodeDescriptor {
            node_id: NodeId::new(id).unwrap(),
            cpu_count: 2,
            os_family: "linux".into(),
            cpu_arch: "x86_64".into(),
            toolchains: toolchains.iter().map(|t| t.parse().unwrap()).collect(),
            load: 0.0,
            user_active: false,
            scheduling_class: SchedulingClass::Dedicated,
        }
    }

    #[test]
    fn resolves_cross_and_native() {
        let n = node(
            "n1",
            &["x86_64-linux-gnu/11.4.0", "arm-linux-gnueabi/9.4.0"],
        );
        let arm: TargetTriple = "arm-linux-gnueabi".parse().unwrap();
        assert_eq!(
            resolve_toolchain(&arm, &n).unwrap().as_str(),
            "arm-linux-gnueabi/9.4.0"
        );
        let native: TargetTriple = "x86_64-linux-gnu".parse().unwrap();
        assert_eq!(resolve_toolchain(&native, &n).unwrap().version(), "11.4.0");
        let mips: TargetTriple = "mips-linux-gnu".parse().unwrap();
        assert_eq!(
            resolve_toolchain(&mips, &n).unwrap_err(),
            Incompatible {
                target: mips,
                node: n.node_id.clone()
            }
        );
    }

    #[test]
    fn abi_must_match_exactly() {
        let n = node("n1", &["arm-linux-gnueabihf/9.4.0"]);
        let soft: TargetTriple = "arm-linux-gnueabi".parse().unwrap();
        assert!(resolve_toolchain(&soft, &n).is_err());
    }

    #[test]
    fn highest_version_wins() {
        let n = node(
            "n1",
            &[
                "arm-linux-gnueabi/9.10.0",
                "arm-linux-gnueabi/9.9.1",
                "arm-linux-gnueabi/10.1",
            ],
        );
        let arm: TargetTriple = "arm-linux-gnueabi".parse().unwrap();
        assert_eq!(resolve_toolchain(&arm, &n).unwrap().version(), "10.1");
        assert_eq!(compare_versions("9.10.0", "9.9.1"), Ordering::Greater);
        assert_eq!(compare_versions("9.9", "9.9.0"), Ordering::Less);
    }

    #[test]
    fn version_check_flags_minority() {
        let arm: TargetTriple = "arm-linux-gnueabi".parse().unwrap();
        let mut nodes: Vec<_> = (1..=8)
            .map(|i| node(&format!("node{i}"), &["arm-linux-gnueabi/4.8"]))
            .collect();
        assert_eq!(
            version_consistency_check(&arm, &nodes, false),
            VersionCheck::Uniform {
                version: "4.8".into()
            }
        );
        nodes.push(node("node9", &["arm-linux-gnueabi/4.9"]));
        let check = version_consistency_check(&arm, &nodes, false);
        assert_eq!(
            check,
            VersionCheck::Mixed {
                majority: "4.8".into(),
                offenders: vec![NodeId::new("node9").unwrap()],
                allowed: false
            }
        );
        assert!(!check.is_ok());
        assert!(version_consistency_check(&arm, &nodes, true).is_ok());
        assert_eq!(
            version_consistency_check(&"mips-linux-gnu".parse().unwrap(), &nodes, false),
            VersionCheck::NoEligibleNodes
        );
    }
}
