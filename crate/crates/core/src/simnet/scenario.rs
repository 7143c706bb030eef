use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::kv::KvFile;
use crate::scheduler::{Policy, PolicyConfig, DEFAULT_LOAD_REJECT_THRESHOLD};
use crate::types::SchedulingClass;

use super::SimError;

/// A per-TU quantity drawn from a seeded distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Constant(f64),
    /// Log-normal with the given mean (not `mu`) and shape `sigma`.
    LogNormal {
        mean: f64,
        sigma: f64,
    },
}

impl Dist {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
        if let Some(v) = text.strip_prefix("constant:") {
            let v = num(v)?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("constant {v} must be finite and nonnegative"));
            }
            return Ok(Dist::Constant(v));
        }
        if let Some(rest) = text.strip_prefix("lognormal:") {
            let (m, s) = rest.split_once(':').ok_or("lognormal needs mean:sigma")?;
            let (mean, sigma) = (num(m)?, num(s)?);
            if !(mean > 0.0 && mean.is_finite() && sigma >= 0.0 && sigma.is_finite()) {
                return Err(format!(
                    "lognormal:{mean}:{sigma} needs mean > 0 and sigma >= 0"
                ));
            }
            return Ok(Dist::LogNormal { mean, sigma });
        }
        Err(format!(
            "unknown distribution {text:?} (expected constant:<v> or lognormal:<mean>:<sigma>)"
        ))
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Constant(v) => v,
            Dist::LogNormal { mean, .. } => mean,
        }
    }

    pub fn scaled(&self, k: f64) -> Dist {
        match *self {
            Dist::Constant(v) => Dist::Constant(v * k),
            Dist::LogNormal { mean, sigma } => Dist::LogNormal {
                mean: mean * k,
                sigma,
            },
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Dist::Constant(v) => v,
            Dist::LogNormal { sigma: 0.0, .. } => self.mean(),
            Dist::LogNormal { mean, sigma } => {
                let mu = mean.ln() - sigma * sigma / 2.0;
                LogNormal::new(mu, sigma)
                    .expect("validated parameters")
                    .sample(rng)
            }
        }
    }

    fn render(&self) -> String {
        match self {
            Dist::Constant(v) => format!("constant:{v}"),
            Dist::LogNormal { mean, sigma } => format!("lognormal:{mean}:{sigma}"),
        }
    }
}

/// User presence over simulated minutes.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    /// `(time, active)` steps in increasing time; inactive before the first.
    Steps(Vec<(f64, bool)>),
    /// Active for `duty × period` at the start of every period. Each node
    /// gets its own seeded phase offset.
    Periodic { period: f64, duty: f64 },
}

impl Trace {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("periodic:") {
            let (p, d) = rest
                .split_once(',')
                .ok_or("periodic needs <period>,<duty>")?;
            let period: f64 = p.trim().parse().map_err(|e| format!("period {p:?}: {e}"))?;
            let duty: f64 = d.trim().parse().map_err(|e| format!("duty {d:?}: {e}"))?;
            if !(period > 0.0 && period.is_finite() && (0.0..=1.0).contains(&duty)) {
                return Err(format!(
                    "periodic:{period},{duty} needs period > 0 and duty in [0, 1]"
                ));
            }
            return Ok(Trace::Periodic { period, duty });
        }
        if let Some(rest) = text.strip_prefix("steps:") {
            return Self::steps_from(rest.split(';'));
        }
        if let Some(rest) = text.strip_prefix("file:") {
            let path = base.join(rest.trim());
            let body =
                std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            return Self::steps_from(body.lines().map(|l| l.split('#').next().unwrap_or("")));
        }
        Err(format!(
            "unknown trace {text:?} (expected periodic:, steps: or file:)"
        ))
    }

    fn steps_from<'a>(parts: impl Iterator<Item = &'a str>) -> Result<Self, String> {
        let mut steps: Vec<(f64, bool)> = Vec::new();
        for part in parts.map(str::trim).filter(|p| !p.is_empty()) {
            let mut it = part.split_whitespace();
            let (Some(t), Some(a), None) = (it.next(), it.next(), it.next()) else {
                return Err(format!("trace step {part:?} is not `<minutes> <0|1>`"));
            };
            let t: f64 = t.parse().map_err(|e| format!("{t:?}: {e}"))?;
            let active = match a {
                "0" => false,
                "1" => true,
                _ => return Err(format!("trace state {a:?} is not 0 or 1")),
            };
            if !(t >= 0.0 && t.is_finite()) || steps.last().is_some_and(|&(prev, _)| t <= prev) {
                return Err(format!("trace times must increase from 0, got {t}"));
            }
            steps.push((t, active));
        }
        Ok(Trace::Steps(steps))
    }

    fn render(&self) -> String {
        match self {
            Trace::Periodic { period, duty } => format!("periodic:{period},{duty}"),
            Trace::Steps(s) => {
                let parts: Vec<String> = s
                    .iter()
                    .map(|(t, a)| format!("{t} {}", u8::from(*a)))
                    .collect();
                format!("steps:{}", parts.join(";"))
            }
        }
    }

    pub fn is_busy(&self) -> bool {
        match self {
            Trace::Steps(s) => s.iter().any(|&(_, a)| a),
            Trace::Periodic { duty, .. } => *duty > 0.0,
        }
    }
}

/// One expanded simulated machine.
#[derive(Debug, Clone, PartialEq)]
pub struct SimNode {
    pub cpus: u32,
    pub speed: f64,
    pub class: SchedulingClass,
    pub trace: Option<Trace>,
    /// Normalized load reported while the user is active.
    pub busy_load: f64,
}

/// A scripted node failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub node: usize,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nodes: Vec<SimNode>,
    pub bandwidth_mbps: f64,
    pub tus: usize,
    /// Compile cost in minutes on a speed-1 CPU.
    pub cost: Dist,
    pub input_bytes: Dist,
    pub output_bytes: Dist,
    /// Minutes a slot spends on each dispatch before any transfer.
    pub dispatch_overhead: f64,
    pub policy: PolicyConfig,
    pub cache_redundancy: f64,
    pub virtualization_overhead: f64,
    /// Service rate under the lowest priority while the user is active.
    pub demoted_rate: f64,
    pub max_attempts: u32,
    /// Every node exposes one slot regardless of CPUs.
    pub distcc_mode: bool,
    pub faults: Vec<Fault>,
    pub seed: u64,
}

const NODE_FIELDS: [&str; 6] = ["cpus", "speed", "class", "trace", "busy_load", "count"];

impl Scenario {
    /// A fleet of `count` identical dedicated nodes with no overheads.
    pub fn uniform(name: &str, count: usize, cpus: u32, tus: usize, cost: Dist) -> Self {
        Scenario {
            name: name.to_owned(),
            nodes: vec![
                SimNode {
                    cpus,
                    speed: 1.0,
                    class: SchedulingClass::Dedicated,
                    trace: None,
                    busy_load: 0.0
                };
                count
            ],
            bandwidth_mbps: 100.0,
            tus,
            cost,
            input_bytes: Dist::Constant(0.0),
            output_bytes: Dist::Constant(0.0),
            dispatch_overhead: 0.0,
            policy: PolicyConfig::with_policy(Policy::DedicatedOnly),
            cache_redundancy: 0.0,
            virtualization_overhead: 1.0,
            demoted_rate: 0.5,
            max_attempts: crate::task::DEFAULT_MAX_ATTEMPTS,
            distcc_mode: false,
            faults: Vec::new(),
            seed: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses a scenario. `trace.<name>` entries define traces that
    /// `node.<i>.trace` refers to by name; `file:` paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, SimError> {
        let bad = |m: String| SimError::InvalidScenario(m);
        let kv = KvFile::parse(text).map_err(|e| bad(e.to_string()))?;
        let num = |k: &str| -> Result<Option<f64>, SimError> {
            kv.parse_opt::<f64>(k).map_err(|e| bad(e.to_string()))
        };
        let dist = |k: &str| -> Result<Dist, SimError> {
            Dist::parse(kv.require(k).map_err(|e| bad(e.to_string()))?)
                .map_err(|e| bad(format!("{k}: {e}")))
        };

        let mut group_ids: Vec<usize> = Vec::new();
        for key in kv.keys() {
            let known = match key.split('.').collect::<Vec<_>>().as_slice() {
                ["node", i, field] => {
                    let i: usize = i
                        .parse()
                        .map_err(|_| bad(format!("bad node index in {key:?}")))?;
                    if !group_ids.contains(&i) {
                        group_ids.push(i);
                    }
                    NODE_FIELDS.contains(field)
                }
                ["trace", _] => true,
                ["fault", _] => true,
                [k] => matches!(
                    *k,
                    "name"
                        | "seed"
                        | "tus"
                        | "cost"
                        | "input_bytes"
                        | "output_bytes"
                        | "bandwidth_mbps"
                        | "dispatch_overhead"
                        | "policy"
                        | "load_reject_threshold"
                        | "stop_on_user_access"
                        | "scheduling_cost_weight"
                        | "cache_redundancy"
                        | "virtualization_overhead"
                        | "demoted_rate"
                        | "max_attempts"
                        | "distcc_mode"
                ),
                _ => false,
            };
            if !known {
                return Err(bad(format!("unknown key {key:?}")));
            }
        }
        group_ids.sort_unstable();

        let mut nodes = Vec::new();
        for i in group_ids {
            let k = |f: &str| format!("node.{i}.{f}");
            let cpus = kv
                .parse_opt::<u32>(&k("cpus"))
                .map_err(|e| bad(e.to_string()))?
                .unwrap_or(1);
            let speed = num(&k("speed"))?.unwrap_or(1.0);
            let class = kv
                .get(&k("class"))
                .map(|c| c.parse::<SchedulingClass>())
                .transpose()
                .map_err(|e| bad(format!("{}: {e}", k("class"))))?
                .unwrap_or(SchedulingClass::Dedicated);
            let trace = match kv.get(&k("trace")) {
                None | Some("") | Some("none") => None,
                Some(name) => {
                    let spec = kv
                        .get(&format!("trace.{name}"))
                        .ok_or_else(|| bad(format!("trace {name:?} is not defined")))?;
                    Some(Trace::parse(spec, base).map_err(|e| bad(format!("trace.{name}: {e}")))?)
                }
            };
            let busy_load = num(&k("busy_load"))?.unwrap_or(0.0);
            let count = kv
                .parse_opt::<usize>(&k("count"))
                .map_err(|e| bad(e.to_string()))?
                .unwrap_or(1);
            nodes.extend(
                std::iter::repeat(SimNode {
                    cpus,
                    speed,
                    class,
                    trace,
                    busy_load,
                })
                .take(count),
            );
        }

        let mut policy = PolicyConfig::with_policy(
            kv.get("policy")
                .unwrap_or("hybrid")
                .parse::<Policy>()
                .map_err(|e| bad(format!("policy: {e}")))?,
        );
        policy.load_reject_threshold =
            num("load_reject_threshold")?.unwrap_or(DEFAULT_LOAD_REJECT_THRESHOLD);
        policy.scheduling_cost_weight = num("scheduling_cost_weight")?.unwrap_or(0.0);
        policy.stop_on_user_access = kv
            .parse_opt::<bool>("stop_on_user_access")
            .map_err(|e| bad(e.to_string()))?
            .unwrap_or(false);

        let mut faults = Vec::new();
        for (key, value) in kv.iter().filter(|(k, _)| k.starts_with("fault.")) {
            let (n, t) = value
                .split_once('@')
                .ok_or_else(|| bad(format!("{key}: expected <node index>@<minutes>")))?;
            let node = n
                .trim()
                .parse()
                .map_err(|_| bad(format!("{key}: bad node index {n:?}")))?;
            let at = t
                .trim()
                .parse()
                .map_err(|_| bad(format!("{key}: bad time {t:?}")))?;
            faults.push(Fault { node, at });
        }

        let sc = Scenario {
            name: kv.get("name").unwrap_or("scenario").to_owned(),
            nodes,
            bandwidth_mbps: num("bandwidth_mbps")?.unwrap_or(100.0),
            tus: kv
                .parse_req::<usize>("tus")
                .map_err(|e| bad(e.to_string()))?,
            cost: dist("cost")?,
            input_bytes: dist("input_bytes")?,
            output_bytes: dist("output_bytes")?,
            dispatch_overhead: num("dispatch_overhead")?.unwrap_or(0.0),
            policy,
            cache_redundancy: num("cache_redundancy")?.unwrap_or(0.0),
            virtualization_overhead: num("virtualization_overhead")?.unwrap_or(1.0),
            demoted_rate: num("demoted_rate")?.unwrap_or(0.5),
            max_attempts: kv
                .parse_opt::<u32>("max_attempts")
                .map_err(|e| bad(e.to_string()))?
                .unwrap_or(crate::task::DEFAULT_MAX_ATTEMPTS),
            distcc_mode: kv
                .parse_opt::<bool>("distcc_mode")
                .map_err(|e| bad(e.to_string()))?
                .unwrap_or(false),
            faults,
            seed: kv
                .parse_opt::<u64>("seed")
                .map_err(|e| bad(e.to_string()))?
                .unwrap_or(1),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.nodes.is_empty() {
            return bad("scenario has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.cpus == 0 {
                return bad(format!("node {i}: cpus must be at least 1"));
            }
            if !(n.speed > 0.0 && n.speed.is_finite()) {
                return bad(format!("node {i}: speed must be positive"));
            }
            if !(0.0..=1.0).contains(&n.busy_load) {
                return bad(format!("node {i}: busy_load must lie in [0, 1]"));
            }
        }
        if !(self.bandwidth_mbps > 0.0 && self.bandwidth_mbps.is_finite()) {
            return bad("bandwidth_mbps must be positive".into());
        }
        if self.tus == 0 {
            return bad("tus must be at least 1".into());
        }
        if !(self.dispatch_overhead >= 0.0 && self.dispatch_overhead.is_finite()) {
            return bad("dispatch_overhead must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.cache_redundancy) {
            return bad("cache_redundancy must lie in [0, 1]".into());
        }
        if !(self.virtualization_overhead >= 1.0 && self.virtualization_overhead.is_finite()) {
            return bad("virtualization_overhead must be at least 1".into());
        }
        if !(self.demoted_rate > 0.0 && self.demoted_rate <= 1.0) {
            return bad("demoted_rate must lie in (0, 1]".into());
        }
        if let Some(f) = self
            .faults
            .iter()
            .find(|f| f.node >= self.nodes.len() || !(f.at >= 0.0 && f.at.is_finite()))
        {
            return bad(format!(
                "fault on node {} at {} is out of range",
                f.node, f.at
            ));
        }
        self.policy.validate().map_err(SimError::InvalidScenario)
    }

    /// Per-TU `(cost, input bytes, output bytes, redundant)`, drawn from the
    /// workload stream so fleet changes never perturb the workload.
    pub fn workload(&self) -> Vec<(f64, f64, f64, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out: Vec<(f64, f64, f64, bool)> = (0..self.tus)
            .map(|_| {
                (
                    self.cost.sample(&mut rng),
                    self.input_bytes.sample(&mut rng),
                    self.output_bytes.sample(&mut rng),
                    false,
                )
            })
            .collect();
        let hits = (self.cache_redundancy * self.tus as f64).round() as usize;
        let mut idx: Vec<usize> = (0..self.tus).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        for &i in idx.iter().take(hits) {
            out[i].3 = true;
        }
        out
    }

    /// Seeded phase offsets for periodic traces, one per node.
    pub fn trace_phases(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        self.nodes
            .iter()
            .map(|n| match n.trace {
                Some(Trace::Periodic { period, .. }) => rng.gen_range(0.0..period),
                _ => {
                    let _: f64 = rng.gen();
                    0.0
                }
            })
            .collect()
    }

    /// Renders back to the file format; `parse(render())` round-trips.
    pub fn render(&self) -> String {
        let p = &self.policy;
        let mut s = format!(
            "name = {}\nseed = {}\ntus = {}\ncost = {}\ninput_bytes = {}\noutput_bytes = {}\nbandwidth_mbps = {}\n\
             dispatch_overhead = {}\npolicy = {}\nload_reject_threshold = {}\nstop_on_user_access = {}\n\
             scheduling_cost_weight = {}\ncache_redundancy = {}\nvirtualization_overhead = {}\ndemoted_rate = {}\n\
             max_attempts = {}\ndistcc_mode = {}\n",
            self.name,
            self.seed,
            self.tus,
            self.cost.render(),
            self.input_bytes.render(),
            self.output_bytes.render(),
            self.bandwidth_mbps,
            self.dispatch_overhead,
            p.policy,
            p.load_reject_threshold,
            p.stop_on_user_access,
            p.scheduling_cost_weight,
            self.cache_redundancy,
            self.virtualization_overhead,
            self.demoted_rate,
            self.max_attempts,
            self.distcc_mode,
        );
        for (i, n) in self.nodes.iter().enumerate() {
            s += &format!("node.{i}.cpus = {}\nnode.{i}.speed = {}\nnode.{i}.class = {}\nnode.{i}.busy_load = {}\n", n.cpus, n.speed, n.class, n.busy_load);
            if let Some(t) = &n.trace {
                s += &format!("trace.t{i} = {}\nnode.{i}.trace = t{i}\n", t.render());
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            s += &format!("fault.{i} = {}@{}\n", f.node, f.at);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "name = demo\nseed = 7\ntus = 20\ncost = lognormal:1.0:0.5\ninput_bytes = constant:1000000\n\
        output_bytes = constant:250000\npolicy = shared\ntrace.busy = periodic:10,0.5\ntrace.once = steps:0 0;3 1;6 0\n\
        node.0.count = 3\nnode.0.cpus = 2\nnode.1.class = shared\nnode.1.trace = busy\nnode.1.busy_load = 0.5\n\
        node.2.class = shared\nnode.2.trace = once\nfault.0 = 0@4.5\n";

    #[test]
    fn parses_and_round_trips() {
        let sc = Scenario::parse(SAMPLE, Path::new(".")).unwrap();
        assert_eq!(sc.nodes.len(), 5);
        assert_eq!(sc.nodes[2].cpus, 2);
        assert_eq!(
            sc.nodes[3].trace,
            Some(Trace::Periodic {
                period: 10.0,
                duty: 0.5
            })
        );
        assert_eq!(
            sc.nodes[4].trace,
            Some(Trace::Steps(vec![(0.0, false), (3.0, true), (6.0, false)]))
        );
        assert_eq!(sc.faults, vec![Fault { node: 0, at: 4.5 }]);
        assert_eq!(sc.policy.policy, Policy::SharedAllowed);
        let again = Scenario::parse(&sc.render(), Path::new(".")).unwrap();
        assert_eq!(again, sc);
    }

    #[test]
    fn rejects_invalid() {
        let base = "tus=1\ncost=constant:1\ninput_bytes=constant:0\noutput_bytes=constant:0\nnode.0.cpus=1\n";
        assert!(Scenario::parse(base, Path::new(".")).is_ok());
        for (extra, needle) in [
            ("node.0.speed=0\n", "speed"),
            ("bandwidth_mbps=0\n", "bandwidth"),
            ("virtualization_overhead=0.5\n", "virtualization"),
            ("cache_redundancy=2\n", "cache_redundancy"),
            ("node.0.trace=nope\n", "not defined"),
            ("bogus=1\n", "unknown key"),
            ("fault.0=9@1\n", "out of range"),
        ] {
            let err = Scenario::parse(&format!("{base}{extra}"), Path::new("."))
                .unwrap_err()
                .to_string();
            assert!(err.contains(needle), "{err} lacks {needle}");
        }
        let no_dist = "tus=1\ncost=constant:1\ninput_bytes=constant:0\nnode.0.cpus=1\n";
        assert!(Scenario::parse(no_dist, Path::new("."))
            .unwrap_err()
            .to_string()
            .contains("output_bytes"));
    }

    #[test]
    fn lognormal_mean_is_the_requested_mean() {
        let d = Dist::LogNormal {
            mean: 2.0,
            sigma: 0.6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let avg = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((avg - 2.0).abs() < 0.02, "{avg}");
    }

    #[test]
    fn redundancy_marks_exact_fraction() {
        let mut sc = Scenario::uniform("r", 1, 1, 200, Dist::Constant(1.0));
        sc.cache_redundancy = 0.1;
        assert_eq!(sc.workload().iter().filter(|w| w.3).count(), 20);
    }
}
