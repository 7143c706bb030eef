use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    DistributableCompile,
    LocalOnly,
}

/// How a compiler command line will be handled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationPlan {
    pub kind: PlanKind,
    /// Why the command stays local.
    pub reason: Option<&'static str>,
    pub compiler: String,
    pub source: Option<PathBuf>,
    /// Explicit `-o` target, if any.
    pub output: Option<PathBuf>,
    /// Flags for the local preprocessing step.
    pub preprocess_flags: Vec<String>,
    /// Flags shipped with the unit for remote compilation.
    pub compile_flags: Vec<String>,
    pub passthrough_argv: Vec<String>,
}

impl InvocationPlan {
    pub fn is_distributable(&self) -> bool {
        self.kind == PlanKind::DistributableCompile
    }

    /// `-o` if given, else the source's stem with `.o` in the working directory.
    pub fn object_path(&self) -> Option<PathBuf> {
        self.output.clone().or_else(|| {
            let stem = self.source.as_ref()?.file_stem()?;
            Some(PathBuf::from(stem).with_extension("o"))
        })
    }

    /// `i` for C, `ii` for C++.
    pub fn preprocessed_ext(&self) -> &'static str {
        self.source.as_deref().map_or("i", preprocessed_ext)
    }
}

const C_EXTS: &[&str] = &["c"];
const CXX_EXTS: &[&str] = &["cc", "cpp", "cxx", "c++", "C", "cp"];

pub fn preprocessed_ext(source: &Path) -> &'static str {
    match source.extension().and_then(|e| e.to_str()) {
        Some(e) if CXX_EXTS.contains(&e) => "ii",
        _ => "i",
    }
}

fn is_source(arg: &str) -> bool {
    Path::new(arg)
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| C_EXTS.contains(&e) || CXX_EXTS.contains(&e))
}

/// Flags whose value is the next argument.
const TAKES_VALUE: &[&str] = &[
    "-o",
    "-I",
    "-D",
    "-U",
    "-include",
    "-imacros",
    "-isystem",
    "-iquote",
    "-idirafter",
    "-isysroot",
    "-x",
    "-MF",
    "-MT",
    "-MQ",
    "-arch",
    "-target",
    "-Xclang",
    "-Xpreprocessor",
    "-Xassembler",
    "-Xlinker",
    "-L",
    "-l",
    "-aux-info",
];

/// Consumed by the preprocessor; meaningless on preprocessed input.
const PREPROCESSOR_ONLY: &[&str] = &[
    "-I",
    "-D",
    "-U",
    "-include",
    "-imacros",
    "-isystem",
    "-iquote",
    "-idirafter",
    "-Xpreprocessor",
];
const PREPROCESSOR_ONLY_BARE: &[&str] = &["-nostdinc", "-nostdinc++", "-undef"];

fn blocklisted(flag: &str) -> Option<&'static str> {
    const EXACT: &[(&str, &str)] = &[
        ("-E", "preprocess only"),
        ("-S", "assembly output"),
        ("-M", "dependency listing"),
        ("-MM", "dependency listing"),
        ("-MD", "dependency side output"),
        ("-MMD", "dependency side output"),
        ("-fsyntax-only", "syntax check only"),
        ("-fprofile-arcs", "profiling instrumentation"),
        ("-ftest-coverage", "profiling instrumentation"),
        ("--coverage", "profiling instrumentation"),
        ("-x", "explicit language"),
        ("-", "standard input"),
        ("-###", "dry run"),
    ];
    const PREFIX: &[(&str, &str)] = &[
        ("-fprofile-generate", "profiling instrumentation"),
        ("-fprofile-instr-generate", "profiling instrumentation"),
        ("-save-temps", "keeps intermediate files"),
        ("-fdump-", "compiler dumps"),
        ("-fplugin", "compiler plugin"),
        ("@", "response file"),
        ("-fmodules", "module cache"),
    ];
    EXACT
        .iter()
        .find(|(f, _)| *f == flag)
        .or_else(|| PREFIX.iter().find(|(p, _)| flag.starts_with(p)))
        .map(|(_, why)| *why)
}

/// Splits `-Ifoo` style joined flags from their separated form.
fn joined_value<'a>(arg: &'a str, flags: &[&str]) -> Option<&'a str> {
    flags
        .iter()
        .find(|f| f.len() == 2 && arg.len() > 2 && arg.starts_with(*f))
        .map(|_| &arg[2..])
}

/// Decides whether `argv` (compiler first) is a single-unit compile that can
/// be shipped.
pub fn classify_invocation(argv: &[String]) -> InvocationPlan {
    let mut plan = InvocationPlan {
        kind: PlanKind::LocalOnly,
        reason: None,
        compiler: argv.first().cloned().unwrap_or_default(),
        source: None,
        output: None,
        preprocess_flags: Vec::new(),
        compile_flags: Vec::new(),
        passthrough_argv: argv.to_vec(),
    };
    let local = |mut plan: InvocationPlan, why: &'static str| {
        plan.kind = PlanKind::LocalOnly;
        plan.reason = Some(why);
        plan
    };
    if argv.len() < 2 {
        return local(plan, "no arguments");
    }
    let mut sources = Vec::new();
    let mut compile_only = false;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].as_str();
        if let Some(why) = blocklisted(arg) {
            return local(plan, why);
        }
        if arg == "-c" {
            compile_only = true;
        } else if TAKES_VALUE.contains(&arg) {
            let Some(value) = argv.get(i + 1) else {
                return local(plan, "flag missing its value");
            };
            if arg == "-o" {
                plan.output = Some(PathBuf::from(value));
            } else {
                plan.preprocess_flags
                    .extend([arg.to_owned(), value.clone()]);
                if !PREPROCESSOR_ONLY.contains(&arg) {
                    plan.compile_flags.extend([arg.to_owned(), value.clone()]);
                }
            }
            i += 1;
        } else if let Some(out) = arg.strip_prefix("-o") {
            plan.output = Some(PathBuf::from(out));
        } else if arg.starts_with('-') {
            plan.preprocess_flags.push(arg.to_owned());
            let pp_only = joined_value(arg, PREPROCESSOR_ONLY).is_some()
                || PREPROCESSOR_ONLY_BARE.contains(&arg)
                || arg.starts_with("-Wp,");
            if !pp_only {
                plan.compile_flags.push(arg.to_owned());
            }
        } else if is_source(arg) {
            sources.push(PathBuf::from(arg));
        } else {
            return local(plan, "non-source input");
        }
        i += 1;
    }
    if !compile_only {
        return local(plan, "links");
    }
    match sources.len() {
        0 => local(plan, "no source input"),
        1 => {
            plan.source = sources.pop();
            plan.kind = PlanKind::DistributableCompile;
            plan
        }
        _ => local(plan, "multiple sources"),
    }
}

/// Runs the local preprocessor and returns a self-contained unit.
/// Macros that expand to paths or build times are neutralized so identical
/// inputs give identical bytes.
pub fn preprocess(
    compiler: &str,
    source: &Path,
    flags: &[String],
    cwd: &Path,
) -> Result<Vec<u8>, ClientError> {
    let abs_cwd = std::fs::canonicalize(cwd).unwrap_or_else(|_| cwd.to_path_buf());
    let out = Command::new(compiler)
        .args(flags)
        .arg("-E")
        .arg(format!("-fmacro-prefix-map={}=.", abs_cwd.display()))
        .arg(source)
        .current_dir(cwd)
        .env("SOURCE_DATE_EPOCH", "0")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| ClientError::PreprocessFailed {
            tu: source.display().to_string(),
            stderr: format!("{compiler}: {e}"),
        })?;
    if !out.status.success() {
        return Err(ClientError::PreprocessFailed {
            tu: source.display().to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    Ok(out.stdout)
}
