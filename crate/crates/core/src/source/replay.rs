//! Collapsed-stack replay files.
//!
//! One sample per line, root first: `main;run;tick 3`. The optional trailing
//! integer repeats the line. `#` starts a comment line. A frame spelled
//! `0x<hex>` is kept as an address so it can be symbolized later; anything
//! else is taken as a function name verbatim.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::{Frame, PollBatch, RawSample, SourceError};

pub(super) struct ReplayBackend {
    pending: VecDeque<RawSample>,
}

impl ReplayBackend {
    pub(super) fn open(
        path: &Path,
        max_stack_depth: usize,
        interval: Duration,
    ) -> Result<Self, SourceError> {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(SourceError::FileNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let samples = parse_collapsed(&text, max_stack_depth, interval)?;
        Ok(ReplayBackend {
            pending: samples.into(),
        })
    }

    pub(super) fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub(super) fn drain(&mut self) -> PollBatch {
        PollBatch {
            samples: self.pending.drain(..).collect(),
            dropped: 0,
        }
    }
}

/// Parses collapsed-stack text into leaf-first samples.
pub fn parse_collapsed(
    text: &str,
    max_stack_depth: usize,
    interval: Duration,
) -> Result<Vec<RawSample>, SourceError> {
    let step = u64::try_from(interval.as_nanos()).unwrap_or(u64::MAX);
    let mut samples = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (stack, repeat) = split_count(line);
        if repeat == 0 {
            return Err(SourceError::MalformedReplay {
                line: line_no,
                reason: "repeat count must be at least 1".into(),
            });
        }
        let mut frames = Vec::new();
        for part in stack.split(';') {
            let name = part.trim();
            if name.is_empty() {
                return Err(SourceError::MalformedReplay {
                    line: line_no,
                    reason: "empty frame".into(),
                });
            }
            frames.push(parse_frame(name));
        }
        frames.reverse();
        let truncated = frames.len() > max_stack_depth;
        frames.truncate(max_stack_depth);
        for _ in 0..repeat {
            let timestamp = step.saturating_mul(samples.len() as u64);
            samples.push(RawSample {
                frames: frames.clone(),
                timestamp,
                truncated,
                pid: None,
            });
        }
    }
    Ok(samples)
}

fn split_count(line: &str) -> (&str, u64) {
    if let Some((stack, last)) = line.rsplit_once(char::is_whitespace) {
        if let Ok(n) = last.parse::<u64>() {
            return (stack.trim_end(), n);
        }
    }
    (line, 1)
}

fn parse_frame(name: &str) -> Frame {
    if let Some(hex) = name.strip_prefix("0x") {
        if !hex.is_empty() && hex.len() <= 16 && hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            if let Ok(addr) = u64::from_str_radix(hex, 16) {
                return Frame::Addr(addr);
            }
        }
    }
    Frame::Name(Arc::from(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(sample: &RawSample) -> Vec<String> {
        sample.frames.iter().map(|f| f.to_string()).collect()
    }

    const MS: Duration = Duration::from_millis(10);

    #[test]
    fn two_lines_become_leaf_first_samples() {
        let samples = parse_collapsed("a;b;c\na;d\n", 127, MS).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(names(&samples[0]), ["c", "b", "a"]);
        assert_eq!(names(&samples[1]), ["d", "a"]);
        assert!(!samples[0].truncated);
    }

    #[test]
    fn empty_text_yields_nothing() {
        assert!(parse_collapsed("", 127, MS).unwrap().is_empty());
        assert!(parse_collapsed("# only a comment\n\n", 127, MS)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_frame_is_malformed_with_line_number() {
        let err = parse_collapsed("a;b\na;;c\n", 127, MS).unwrap_err();
        match err {
            SourceError::MalformedReplay { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(parse_collapsed(";a", 127, MS).is_err());
        assert!(parse_collapsed("a; 3", 127, MS).is_err());
    }

    #[test]
    fn repeat_count_expands() {
        let samples = parse_collapsed("main;work 3\nmain 1", 127, MS).unwrap();
        assert_eq!(samples.len(), 4);
        assert!(samples[..3].iter().all(|s| names(s) == ["work", "main"]));
        assert_eq!(names(&samples[3]), ["main"]);
    }

    #[test]
    fn zero_repeat_is_malformed() {
        assert!(matches!(
            parse_collapsed("a;b 0", 127, MS),
            Err(SourceError::MalformedReplay { line: 1, .. })
        ));
    }

    #[test]
    fn names_with_spaces_survive() {
        let samples = parse_collapsed("main;operator new(unsigned long) 2", 127, MS).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(names(&samples[0])[0], "operator new(unsigned long)");
        let samples = parse_collapsed("main;do work", 127, MS).unwrap();
        assert_eq!(names(&samples[0]), ["do work", "main"]);
    }

    #[test]
    fn hex_frames_become_addresses() {
        let samples = parse_collapsed("0x2000;0x1010", 127, MS).unwrap();
        assert_eq!(
            samples[0].frames,
            vec![Frame::Addr(0x1010), Frame::Addr(0x2000)]
        );
        let samples = parse_collapsed("0x;0xzz", 127, MS).unwrap();
        assert!(matches!(samples[0].frames[0], Frame::Name(_)));
    }

    #[test]
    fn long_chains_are_cut_on_the_root_side() {
        let samples = parse_collapsed("a;b;c;d;e", 3, MS).unwrap();
        assert_eq!(names(&samples[0]), ["e", "d", "c"]);
        assert!(samples[0].truncated);
        let exact = parse_collapsed("a;b;c", 3, MS).unwrap();
        assert!(!exact[0].truncated);
    }

    #[test]
    fn timestamps_step_by_interval() {
        let samples = parse_collapsed("a 2\nb", 127, MS).unwrap();
        let ts: Vec<u64> = samples.iter().map(|s| s.timestamp).collect();
        assert_eq!(ts, [0, 10_000_000, 20_000_000]);
    }
}
