use std::path::{Path, PathBuf};

use crate::types::{SchedulingClass, TargetTriple, TuId};

use super::invocation::classify_invocation;
use super::ClientError;

/// A project to build: header lines of `key = value`, then one unit per
/// line as `<source path> TAB <flags>`.
///
/// ```text
/// target = x86_64-linux-gnu
/// compiler = gcc
/// link = gcc {objects} -o {output} -lm
/// output = app
/// class = dedicated              # optional queue request
/// src/main.c<TAB>-O2 -Iinclude
/// src/util.c<TAB>-O2 -Iinclude
/// ```
///
/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub target: TargetTriple,
    pub compiler: String,
    pub link: Vec<String>,
    pub output: PathBuf,
    pub class: Option<SchedulingClass>,
    pub units: Vec<ManifestUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestUnit {
    pub source: PathBuf,
    pub flags: Vec<String>,
}

impl ManifestUnit {
    pub fn tu_id(&self) -> TuId {
        TuId::new(self.source.to_string_lossy()).expect("manifest paths are nonempty")
    }
}

impl Manifest {
    pub fn parse(text: &str, root: &Path) -> Result<Self, ClientError> {
        let bad = |line: usize, msg: String| ClientError::Manifest(format!("line {line}: {msg}"));
        let (mut target, mut compiler, mut link, mut output, mut class) =
            (None, None, None, None, None);
        let mut units = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim_end_matches([' ', '\r']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            if let Some((path, flags)) = line.split_once('\t') {
                let path = path.trim();
                if path.is_empty() {
                    return Err(bad(n, "empty source path".into()));
                }
                let unit = ManifestUnit {
                    source: PathBuf::from(path),
                    flags: flags.split_whitespace().map(str::to_owned).collect(),
                };
                if units.iter().any(|u: &ManifestUnit| u.source == unit.source) {
                    return Err(bad(n, format!("{path} listed twice")));
                }
                units.push(unit);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(n, "expected key = value or path<TAB>flags".into()))?;
            let value = value.split(" #").next().unwrap_or("").trim().to_owned();
            let slot = match key.trim() {
                "target" => &mut target,
                "compiler" => &mut compiler,
                "link" => &mut link,
                "output" => &mut output,
                "class" => &mut class,
                other => return Err(bad(n, format!("unknown key {other}"))),
            };
            if slot.replace(value).is_some() {
                return Err(bad(n, format!("duplicate key {}", key.trim())));
            }
        }
        let need = |v: Option<String>, k: &str| {
            v.ok_or_else(|| ClientError::Manifest(format!("missing {k}")))
        };
        let target: TargetTriple = need(target, "target")?
            .parse()
            .map_err(|e| ClientError::Manifest(format!("target: {e}")))?;
        let link: Vec<String> = need(link, "link")?
            .split_whitespace()
            .map(str::to_owned)
            .collect();
        if !link.iter().any(|a| a == "{objects}") {
            return Err(ClientError::Manifest("link command lacks {objects}".into()));
        }
        let class = class
            .map(|c| {
                c.parse::<SchedulingClass>()
                    .map_err(|e| ClientError::Manifest(format!("class: {e}")))
            })
            .transpose()?;
        if units.is_empty() {
            return Err(ClientError::Manifest("no translation units".into()));
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            target,
            compiler: need(compiler, "compiler")?,
            link,
            output: PathBuf::from(need(output, "output")?),
            class,
            units,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Manifest(format!("{}: {e}", path.display())))?;
        let root = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::parse(&text, root)
    }

    /// The compile command a plain local build would run for `unit`.
    pub fn compile_argv(&self, unit: &ManifestUnit, object: &Path) -> Vec<String> {
        let mut argv = vec![self.compiler.clone()];
        argv.extend(unit.flags.iter().cloned());
        argv.extend([
            "-c".to_owned(),
            unit.source.to_string_lossy().into_owned(),
            "-o".to_owned(),
        ]);
        argv.push(object.to_string_lossy().into_owned());
        argv
    }

    /// Checks every unit line is a distributable single-source compile.
    pub fn validate_units(&self) -> Result<(), ClientError> {
        for u in &self.units {
            let plan = classify_invocation(&self.compile_argv(u, Path::new("x.o")));
            if !plan.is_distributable() {
                return Err(ClientError::Manifest(format!(
                    "{} cannot be distributed: {}",
                    u.source.display(),
                    plan.reason.unwrap_or("unsupported")
                )));
            }
        }
        Ok(())
    }

    /// The link command with `{objects}` and `{output}` substituted.
    pub fn link_argv(&self, objects: &[PathBuf]) -> Vec<String> {
        let mut argv = Vec::new();
        for a in &self.link {
            match a.as_str() {
                "{objects}" => {
                    argv.extend(objects.iter().map(|o| o.to_string_lossy().into_owned()))
                }
                "{output}" => argv.push(self.output.to_string_lossy().into_owned()),
                _ => argv.push(a.clone()),
            }
        }
        argv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# demo\ntarget = x86_64-linux-gnu\ncompiler = gcc\nlink = gcc {objects} -o {output} -lm\noutput = app\n\
                          src/a.c\t-O2 -Iinclude\nsrc/b.c\t-O2\n";

    #[test]
    fn parses_sample() {
        let m = Manifest::parse(SAMPLE, Path::new("/p")).unwrap();
        assert_eq!(m.units.len(), 2);
        assert_eq!(m.units[0].flags, ["-O2", "-Iinclude"]);
        assert_eq!(m.units[1].tu_id().as_str(), "src/b.c");
        assert_eq!(
            m.link_argv(&[PathBuf::from("a.o"), PathBuf::from("b.o")]),
            ["gcc", "a.o", "b.o", "-o", "app", "-lm"]
        );
        m.validate_units().unwrap();
    }

    #[test]
    fn rejects_broken_manifests() {
        for (text, needle) in [
            ("compiler=gcc\nlink=gcc {objects}\noutput=a\nx.c\t\n", "missing target"),
            ("target=x86_64-linux-gnu\ncompiler=gcc\nlink=gcc -o a\noutput=a\nx.c\t\n", "{objects}"),
            ("target=x86_64-linux-gnu\ncompiler=gcc\nlink=gcc {objects}\noutput=a\n", "no translation units"),
            ("target=x86_64-linux-gnu\ntarget=x86_64-linux-gnu\n", "duplicate"),
            ("bogus line\n", "expected"),
            ("target=x86_64-linux-gnu\ncompiler=gcc\nlink=gcc {objects}\noutput=a\nx.c\t\nx.c\t-O2\n", "twice"),
        ] {
            let err = Manifest::parse(text, Path::new(".")).unwrap_err().to_string();
            assert!(err.contains(needle), "{err} lacks {needle}");
        }
    }

    #[test]
    fn local_only_units_are_flagged() {
        let text = "target=x86_64-linux-gnu\ncompiler=gcc\nlink=gcc {objects}\noutput=a\nx.c\t-fprofile-generate\n";
        let m = Manifest::parse(text, Path::new(".")).unwrap();
        assert!(m.validate_units().is_err());
    }
}
