use std::path::Path;
use std::sync::Arc;

use object::{Object, ObjectSegment, ObjectSymbol, SymbolKind};

use super::{display_name, SymbolIndex};

#[derive(Debug, Clone, Copy)]
struct Segment {
    offset: u64,
    filesz: u64,
    vaddr: u64,
}

/// Function symbols and loadable segments of one object file, at link-time
/// addresses.
#[derive(Debug, Default)]
pub(super) struct ElfImage {
    symbols: Vec<(u64, u64, Arc<str>)>,
    segments: Vec<Segment>,
}

impl ElfImage {
    /// Reads `path`. A file that is not a parseable object yields an empty
    /// image rather than an error.
    pub(super) fn load(path: &Path) -> std::io::Result<Self> {
        let data = std::fs::read(path)?;
        Ok(Self::parse(&data))
    }

    fn parse(data: &[u8]) -> Self {
        let Ok(file) = object::File::parse(data) else {
            return ElfImage::default();
        };
        let mut raw: Vec<(u64, u64, &str)> = file
            .symbols()
            .chain(file.dynamic_symbols())
            .filter(|s| s.kind() == SymbolKind::Text && s.address() != 0)
            .filter_map(|s| Some((s.address(), s.size(), s.name().ok()?)))
            .filter(|(_, _, name)| !name.is_empty())
            .collect();
        raw.sort_unstable();
        raw.dedup();

        let mut symbols = Vec::with_capacity(raw.len());
        for (i, &(addr, size, name)) in raw.iter().enumerate() {
            let size = if size > 0 {
                size
            } else {
                // Unsized symbols run up to the next distinct address.
                match raw[i + 1..].iter().find(|(next, _, _)| *next > addr) {
                    Some((next, _, _)) => next - addr,
                    None => continue,
                }
            };
            symbols.push((addr, size, Arc::from(display_name(name))));
        }

        let segments = file
            .segments()
            .filter_map(|seg| {
                let (offset, filesz) = seg.file_range();
                (filesz > 0).then_some(Segment {
                    offset,
                    filesz,
                    vaddr: seg.address(),
                })
            })
            .collect();
        ElfImage { symbols, segments }
    }

    /// Load bias for a mapping of this file at `map_start` from file offset
    /// `map_offset`.
    pub(super) fn bias_for_mapping(&self, map_start: u64, map_offset: u64) -> u64 {
        const PAGE_MASK: u64 = 0xfff;
        // Adjacent segments can share a file page, so a segment whose aligned
        // start is exactly the mapping offset wins over one merely covering it.
        let seg = self
            .segments
            .iter()
            .find(|s| s.offset & !PAGE_MASK == map_offset)
            .or_else(|| {
                self.segments.iter().find(|s| {
                    let lo = s.offset & !PAGE_MASK;
                    map_offset >= lo && map_offset < s.offset + s.filesz
                })
            });
        let vaddr_at_map_start = match seg {
            Some(s) => s.vaddr.wrapping_sub(s.offset).wrapping_add(map_offset),
            None => map_offset,
        };
        map_start.wrapping_sub(vaddr_at_map_start)
    }

    /// Symbols shifted by `bias`, optionally restricted to those starting
    /// inside `window`.
    pub(super) fn index_at_bias(&self, bias: u64, window: Option<(u64, u64)>) -> SymbolIndex {
        SymbolIndex::from_symbols(self.ranges_at_bias(bias, window))
    }

    pub(super) fn ranges_at_bias(
        &self,
        bias: u64,
        window: Option<(u64, u64)>,
    ) -> impl Iterator<Item = (u64, u64, Arc<str>)> + '_ {
        self.symbols.iter().filter_map(move |(addr, size, name)| {
            let start = addr.wrapping_add(bias);
            let end = start.checked_add(*size)?;
            if let Some((lo, hi)) = window {
                if start < lo || start >= hi {
                    return None;
                }
            }
            Some((start, end, Arc::clone(name)))
        })
    }
}
