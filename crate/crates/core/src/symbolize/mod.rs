//! Address to function-name resolution.
//!
//! A [`SymbolIndex`] is a sorted, non-overlapping set of address ranges,
//! each carrying a demangled, parameter-free function name. Lookups that miss
//! every range fall back to the hex spelling of the address, so resolution is
//! total.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::source::{Frame, RawSample};

mod demangle;
mod elf;
mod maps;

pub use demangle::{demangle, display_name};

#[derive(Debug, Error)]
pub enum SymbolError {
    /// Nothing could be symbolized. The carried index is still usable; every
    /// lookup in it falls back to hex.
    #[error("no symbols found for {target}")]
    NoSymbols { target: String, index: SymbolIndex },
    #[error("target not found: {0}")]
    TargetNotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SymbolError {
    /// Recovers a usable index when the error is `NoSymbols`.
    pub fn into_index(self) -> Result<SymbolIndex, SymbolError> {
        match self {
            SymbolError::NoSymbols { index, .. } => Ok(index),
            other => Err(other),
        }
    }
}

/// What to build an index from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolSource {
    /// A running process: its executable and every mapped shared object,
    /// at their runtime addresses.
    Pid(u32),
    /// An executable or shared object at its link-time addresses.
    Executable(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameName {
    pub display: Arc<str>,
    /// False when `display` is the `0x…` fallback.
    pub resolved: bool,
}

impl FrameName {
    pub fn resolved(name: impl Into<Arc<str>>) -> Self {
        FrameName {
            display: name.into(),
            resolved: true,
        }
    }

    pub fn unresolved(addr: u64) -> Self {
        FrameName {
            display: Arc::from(format!("{addr:#x}")),
            resolved: false,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.display
    }
}

impl fmt::Display for FrameName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SymbolRange {
    start: u64,
    end: u64,
    name: Arc<str>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolIndex {
    ranges: Vec<SymbolRange>,
}

impl SymbolIndex {
    pub fn empty() -> Self {
        SymbolIndex::default()
    }

    /// Builds an index from `(start, end, name)` triples. Names are used as
    /// given. Where ranges overlap, the one starting first (then the longer,
    /// then the lexicographically smaller name) owns the overlap.
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = (u64, u64, S)>,
        S: Into<Arc<str>>,
    {
        let mut raw: Vec<SymbolRange> = symbols
            .into_iter()
            .filter(|(start, end, _)| end > start)
            .map(|(start, end, name)| SymbolRange {
                start,
                end,
                name: name.into(),
            })
            .collect();
        raw.sort_by(|a, b| {
            a.start
                .cmp(&b.start)
                .then(b.end.cmp(&a.end))
                .then_with(|| a.name.cmp(&b.name))
        });
        let mut ranges: Vec<SymbolRange> = Vec::with_capacity(raw.len());
        for mut range in raw {
            if let Some(prev) = ranges.last() {
                if range.end <= prev.end {
                    continue;
                }
                if range.start < prev.end {
                    range.start = prev.end;
                }
            }
            ranges.push(range);
        }
        SymbolIndex { ranges }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    /// Name of the function covering `addr`, if any.
    pub fn lookup(&self, addr: u64) -> Option<&Arc<str>> {
        let idx = self.ranges.partition_point(|r| r.start <= addr);
        let range = self.ranges.get(idx.checked_sub(1)?)?;
        (addr < range.end).then_some(&range.name)
    }

    pub fn name_for(&self, addr: u64) -> FrameName {
        match self.lookup(addr) {
            Some(name) => FrameName {
                display: Arc::clone(name),
                resolved: true,
            },
            None => FrameName::unresolved(addr),
        }
    }

    fn name_for_frame(&self, frame: &Frame, is_return_address: bool) -> FrameName {
        match frame {
            Frame::Name(name) => FrameName::resolved(Arc::clone(name)),
            Frame::Addr(addr) => {
                let probe = if is_return_address {
                    addr.saturating_sub(1)
                } else {
                    *addr
                };
                match self.lookup(probe) {
                    Some(name) => FrameName::resolved(Arc::clone(name)),
                    None => FrameName::unresolved(*addr),
                }
            }
        }
    }

    fn extend(&mut self, other: SymbolIndex) {
        let mut all = std::mem::take(&mut self.ranges);
        all.extend(other.ranges);
        *self = SymbolIndex::from_symbols(all.into_iter().map(|r| (r.start, r.end, r.name)));
    }
}

/// Builds an index for a running process or an on-disk executable.
pub fn build_symbol_index(source: &SymbolSource) -> Result<SymbolIndex, SymbolError> {
    let (target, index) = match source {
        SymbolSource::Pid(pid) => (format!("pid {pid}"), maps::index_for_pid(*pid)?),
        SymbolSource::Executable(path) => {
            if !path.exists() {
                return Err(SymbolError::TargetNotFound(path.display().to_string()));
            }
            let image = elf::ElfImage::load(path)?;
            (path.display().to_string(), image.index_at_bias(0, None))
        }
    };
    if index.is_empty() {
        return Err(SymbolError::NoSymbols { target, index });
    }
    Ok(index)
}

/// Adds kernel text symbols from `/proc/kallsyms` to `index`. Does nothing
/// when addresses are hidden by `kptr_restrict`.
pub fn add_kernel_symbols(index: &mut SymbolIndex) -> Result<(), SymbolError> {
    let text = std::fs::read_to_string("/proc/kallsyms")?;
    index.extend(maps::parse_kallsyms(&text));
    Ok(())
}

/// Names every frame exactly at its address. Output is leaf-first like the
/// input and always the same length.
pub fn resolve(index: &SymbolIndex, sample: &RawSample) -> Vec<FrameName> {
    sample
        .frames
        .iter()
        .map(|f| index.name_for_frame(f, false))
        .collect()
}

/// Like [`resolve`], but for kernel-captured callchains: every frame after
/// the first is a return address, which points one past the call and may
/// already lie in the next function, so it is looked up at `addr - 1`.
/// Fallback names still show the original address.
pub fn resolve_callchain(index: &SymbolIndex, sample: &RawSample) -> Vec<FrameName> {
    sample
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| index.name_for_frame(f, i > 0))
        .collect()
}

/// Per-process index cache for sessions that see many pids (cgroup
/// targets). A pid whose index cannot be built gets an empty one.
#[derive(Debug, Default)]
pub struct ProcessSymbolizer {
    indexes: HashMap<u32, SymbolIndex>,
    fallback: SymbolIndex,
    include_kernel: bool,
    kernel: Option<SymbolIndex>,
}

impl ProcessSymbolizer {
    pub fn new(include_kernel: bool) -> Self {
        ProcessSymbolizer {
            include_kernel,
            ..Default::default()
        }
    }

    /// Seeds the cache, e.g. with an index built before sampling started.
    pub fn insert(&mut self, pid: u32, index: SymbolIndex) {
        self.indexes.insert(pid, index);
    }

    pub fn index_for(&mut self, pid: Option<u32>) -> &SymbolIndex {
        let Some(pid) = pid else {
            return &self.fallback;
        };
        let include_kernel = self.include_kernel;
        let kernel = &mut self.kernel;
        self.indexes.entry(pid).or_insert_with(|| {
            let mut index = build_symbol_index(&SymbolSource::Pid(pid))
                .or_else(SymbolError::into_index)
                .unwrap_or_default();
            if include_kernel {
                let k = kernel.get_or_insert_with(|| {
                    let mut k = SymbolIndex::empty();
                    let _ = add_kernel_symbols(&mut k);
                    k
                });
                index.extend(k.clone());
            }
            index
        })
    }

    pub fn resolve(&mut self, sample: &RawSample) -> Vec<FrameName> {
        resolve_callchain(self.index_for(sample.pid), sample)
    }
}
