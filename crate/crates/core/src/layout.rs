//! Run directory convention and compact run labels.
//!
//! One profile per configuration, stored at
//! `<benchmark>/<application>/<cores>/<CpuFullName>/<mem>GB/[ruby/]callstack.json`
//! and labeled `<cores><CPU><mem>[r]`, e.g. `1AS3r`.

use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use walkdir::WalkDir;

pub const PROFILE_FILE: &str = "callstack.json";
const RUBY_DIR: &str = "ruby";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("directory not found: {}", .0.display())]
    DirNotFound(PathBuf),
    #[error("invalid run metadata: {0}")]
    InvalidMeta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CpuType {
    AtomicSimple,
    TimingSimple,
    O3,
}

impl CpuType {
    pub const ALL: [CpuType; 3] = [CpuType::AtomicSimple, CpuType::TimingSimple, CpuType::O3];

    pub fn abbrev(self) -> &'static str {
        match self {
            CpuType::AtomicSimple => "AS",
            CpuType::TimingSimple => "TS",
            CpuType::O3 => "O3",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            CpuType::AtomicSimple => "AtomicSimpleCPU",
            CpuType::TimingSimple => "TimingSimpleCPU",
            CpuType::O3 => "O3CPU",
        }
    }
}

impl FromStr for CpuType {
    type Err = LayoutError;

    /// Accepts either the abbreviation or the full name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CpuType::ALL
            .into_iter()
            .find(|c| c.abbrev() == s || c.full_name() == s)
            .ok_or_else(|| LayoutError::InvalidMeta(format!("unknown CPU type `{s}`")))
    }
}

impl fmt::Display for CpuType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.full_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RunMeta {
    pub benchmark: String,
    pub application: String,
    pub cores: u32,
    pub cpu_type: CpuType,
    pub memory_gb: u32,
    pub ruby: bool,
}

impl RunMeta {
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (what, value) in [("benchmark", &self.benchmark), ("application", &self.application)] {
            if !is_plain_segment(value) {
                return Err(LayoutError::InvalidMeta(format!(
                    "{what} `{value}` is not a single path segment"
                )));
            }
        }
        if self.cores == 0 {
            return Err(LayoutError::InvalidMeta("cores must be at least 1".into()));
        }
        if self.memory_gb == 0 {
            return Err(LayoutError::InvalidMeta("memory must be at least 1 GB".into()));
        }
        Ok(())
    }
}

fn is_plain_segment(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains('/') && !s.contains('\0')
}

/// Compact, display-only configuration tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunLabel(String);

impl RunLabel {
    pub fn new(label: impl Into<String>) -> Self {
        RunLabel(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Relative path of the profile for `meta`.
pub fn layout_path(meta: &RunMeta) -> PathBuf {
    let mut path = PathBuf::from(&meta.benchmark);
    path.push(&meta.application);
    path.push(meta.cores.to_string());
    path.push(meta.cpu_type.full_name());
    path.push(format!("{}GB", meta.memory_gb));
    if meta.ruby {
        path.push(RUBY_DIR);
    }
    path.push(PROFILE_FILE);
    path
}

pub fn label(meta: &RunMeta) -> RunLabel {
    RunLabel(format!(
        "{}{}{}{}",
        meta.cores,
        meta.cpu_type.abbrev(),
        meta.memory_gb,
        if meta.ruby { "r" } else { "" }
    ))
}

fn parse_positive(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok().filter(|&n| n >= 1)
}

/// Decodes exactly the six or seven segments of a layout path.
fn parse_segments(segments: &[&str]) -> Option<RunMeta> {
    let (&file, rest) = segments.split_last()?;
    if file != PROFILE_FILE {
        return None;
    }
    let (ruby, rest) = match rest.split_last() {
        Some((&RUBY_DIR, head)) if head.len() == 5 => (true, head),
        _ => (false, rest),
    };
    let [benchmark, application, cores, cpu, mem] = rest else {
        return None;
    };
    let meta = RunMeta {
        benchmark: benchmark.to_string(),
        application: application.to_string(),
        cores: parse_positive(cores)?,
        cpu_type: cpu.parse().ok()?,
        memory_gb: parse_positive(mem.strip_suffix("GB")?)?,
        ruby,
    };
    meta.validate().ok()?;
    Some(meta)
}

fn segments(path: &Path) -> Option<Vec<&str>> {
    path.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_str()),
            _ => None,
        })
        .collect()
}

/// Decodes a path relative to a runs root.
pub fn parse_layout_path(relative: &Path) -> Option<RunMeta> {
    parse_segments(&segments(relative)?)
}

/// Decodes the trailing segments of any path that ends in the layout,
/// e.g. `/data/runs/parsec-3.0/.../callstack.json`.
pub fn meta_from_path(path: &Path) -> Option<RunMeta> {
    let segs = segments(path)?;
    [7, 6]
        .into_iter()
        .filter(|&n| segs.len() >= n)
        .find_map(|n| parse_segments(&segs[segs.len() - n..]))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Discovery {
    /// Decoded runs, sorted by path.
    pub runs: Vec<(RunMeta, PathBuf)>,
    /// One message per skipped file.
    pub warnings: Vec<String>,
}

/// Finds every conforming `callstack.json` under `root`.
pub fn discover_runs(root: &Path) -> Result<Discovery, LayoutError> {
    if !root.is_dir() {
        return Err(LayoutError::DirNotFound(root.to_path_buf()));
    }
    let mut out = Discovery::default();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                out.warnings.push(format!("skipped unreadable entry: {e}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let relative = entry.path().strip_prefix(root).unwrap_or(entry.path());
        match parse_layout_path(relative) {
            Some(meta) => out.runs.push((meta, entry.path().to_path_buf())),
            None => out.warnings.push(format!(
                "skipped {}: not in the run layout",
                relative.display()
            )),
        }
    }
    Ok(out)
}
