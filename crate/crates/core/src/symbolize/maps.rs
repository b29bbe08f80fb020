use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::elf::ElfImage;
use super::{SymbolError, SymbolIndex};

#[derive(Debug, PartialEq, Eq)]
struct Mapping {
    start: u64,
    end: u64,
    offset: u64,
    path: PathBuf,
}

/// Executable, file-backed lines of a `/proc/<pid>/maps` listing.
fn parse_maps(text: &str) -> Vec<Mapping> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut fields = line.splitn(6, ' ');
        let (Some(range), Some(perms), Some(offset), Some(_dev), Some(_inode)) = (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) else {
            continue;
        };
        if !perms.contains('x') {
            continue;
        }
        let path = fields.next().unwrap_or("").trim_start();
        if !path.starts_with('/') {
            continue;
        }
        let path = path.strip_suffix(" (deleted)").unwrap_or(path);
        let Some((start, end)) = range.split_once('-') else {
            continue;
        };
        let (Ok(start), Ok(end), Ok(offset)) = (
            u64::from_str_radix(start, 16),
            u64::from_str_radix(end, 16),
            u64::from_str_radix(offset, 16),
        ) else {
            continue;
        };
        out.push(Mapping {
            start,
            end,
            offset,
            path: PathBuf::from(path),
        });
    }
    out
}

fn load_image(pid: u32, path: &Path) -> Option<ElfImage> {
    // Prefer the target's own mount namespace view.
    let rooted = PathBuf::from(format!("/proc/{pid}/root")).join(path.strip_prefix("/").ok()?);
    match ElfImage::load(&rooted).or_else(|_| ElfImage::load(path)) {
        Ok(image) => Some(image),
        Err(e) => {
            log::debug!("pid {pid}: cannot read {}: {e}", path.display());
            None
        }
    }
}

pub(super) fn index_for_pid(pid: u32) -> Result<SymbolIndex, SymbolError> {
    let text = match std::fs::read_to_string(format!("/proc/{pid}/maps")) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SymbolError::TargetNotFound(format!("pid {pid}")))
        }
        Err(e) => return Err(e.into()),
    };
    let mut images: HashMap<PathBuf, Option<ElfImage>> = HashMap::new();
    let mut ranges: Vec<(u64, u64, Arc<str>)> = Vec::new();
    for map in parse_maps(&text) {
        let image = images
            .entry(map.path.clone())
            .or_insert_with(|| load_image(pid, &map.path));
        if let Some(image) = image {
            let bias = image.bias_for_mapping(map.start, map.offset);
            ranges.extend(image.ranges_at_bias(bias, Some((map.start, map.end))));
        }
    }
    log::debug!("pid {pid}: {} symbol ranges from {} images", ranges.len(), images.len());
    Ok(SymbolIndex::from_symbols(ranges))
}

pub(super) fn parse_kallsyms(text: &str) -> SymbolIndex {
    let mut syms: Vec<(u64, &str)> = text
        .lines()
        .filter_map(|line| {
            let mut parts = line.split_whitespace();
            let addr = u64::from_str_radix(parts.next()?, 16).ok()?;
            let kind = parts.next()?;
            let name = parts.next()?;
            (addr != 0 && matches!(kind, "t" | "T" | "w" | "W")).then_some((addr, name))
        })
        .collect();
    syms.sort_unstable();
    let ranges = syms.windows(2).filter_map(|w| {
        let (start, name) = w[0];
        let (next, _) = w[1];
        (next > start).then(|| (start, next, Arc::<str>::from(name)))
    });
    SymbolIndex::from_symbols(ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_lines_filter_to_executable_files() {
        let text = "\
55d0c0a00000-55d0c0a20000 r--p 00000000 08:01 123 /usr/bin/gem5.opt
55d0c0a20000-55d0c0f00000 r-xp 00020000 08:01 123 /usr/bin/gem5.opt
7ffd1c9f0000-7ffd1ca11000 rw-p 00000000 00:00 0 [stack]
7ffd1cbfb000-7ffd1cbfd000 r-xp 00000000 00:00 0 [vdso]
7f00aa000000-7f00aa100000 r-xp 00001000 08:01 77 /tmp/lib with space.so (deleted)
";
        let maps = parse_maps(text);
        assert_eq!(maps.len(), 2);
        assert_eq!(maps[0].start, 0x55d0c0a20000);
        assert_eq!(maps[0].offset, 0x20000);
        assert_eq!(maps[0].path, PathBuf::from("/usr/bin/gem5.opt"));
        assert_eq!(maps[1].path, PathBuf::from("/tmp/lib with space.so"));
    }

    #[test]
    fn kallsyms_ranges_end_at_next_symbol() {
        let text = "\
ffffffff81000000 T _stext
ffffffff81000100 t helper
ffffffff81000200 D some_data
0000000000000000 T hidden
ffffffff81000300 T last
";
        let index = parse_kallsyms(text);
        assert_eq!(index.lookup(0xffffffff81000050).map(|s| &**s), Some("_stext"));
        assert_eq!(index.lookup(0xffffffff81000250).map(|s| &**s), Some("helper"));
        assert_eq!(index.lookup(0xffffffff81000300), None);
    }

    #[inline(never)]
    fn marker_function(x: u64) -> u64 {
        std::hint::black_box(x.wrapping_mul(31).rotate_left(7))
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn own_process_resolves_a_known_function() {
        let addr = marker_function as fn(u64) -> u64 as usize as u64;
        assert_eq!(marker_function(1), marker_function(1));
        let index = index_for_pid(std::process::id()).unwrap();
        let name = index.lookup(addr).expect("marker should be symbolized");
        assert!(name.ends_with("marker_function"), "got {name}");
        assert_eq!(index.lookup(addr + 1), Some(name));
    }

    #[test]
    fn missing_pid_is_not_found() {
        assert!(matches!(
            index_for_pid(4_194_305),
            Err(SymbolError::TargetNotFound(_))
        ));
    }
}
