//! Stack sample acquisition.
//!
//! A [`SamplerSession`] yields batches of [`RawSample`]s. Two backends exist:
//! a live one built on `perf_event_open(2)` (Linux only) and a replay one that
//! reads collapsed-stack text files. Everything downstream of this module
//! treats both identically.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

#[cfg(target_os = "linux")]
mod live;
#[cfg(target_os = "linux")]
mod perf_sys;
mod replay;

pub use replay::parse_collapsed;

/// Default sampling interval.
pub const DEFAULT_INTERVAL: Duration = Duration::from_millis(1000);

/// Default frame limit; matches the kernel's stock `perf_event_max_stack`.
pub const DEFAULT_MAX_STACK_DEPTH: usize = 127;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid session spec: {0}")]
    InvalidSpec(String),
    #[error("target not found: {0}")]
    TargetNotFound(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("live sampling is not supported on this platform")]
    UnsupportedPlatform,
    #[error("session already closed")]
    SessionClosed,
    #[error("replay file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("malformed replay at line {line}: {reason}")]
    MalformedReplay { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a live session attaches to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// All tasks of a process.
    Pid(u32),
    /// All tasks in a cgroup (path to the cgroup directory).
    Cgroup(PathBuf),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Pid(pid) => write!(f, "pid {pid}"),
            Target::Cgroup(path) => write!(f, "cgroup {}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSpec {
    pub target: Target,
    pub interval: Duration,
    pub max_stack_depth: usize,
    /// Record kernel frames as well as user frames.
    pub include_kernel: bool,
}

impl SessionSpec {
    pub fn new(target: Target) -> Self {
        SessionSpec {
            target,
            interval: DEFAULT_INTERVAL,
            max_stack_depth: DEFAULT_MAX_STACK_DEPTH,
            include_kernel: false,
        }
    }

    /// Builds a spec from optional pid/cgroup selectors, exactly one of which
    /// must be present.
    pub fn from_selectors(
        pid: Option<u32>,
        cgroup: Option<PathBuf>,
        interval: Duration,
        max_stack_depth: usize,
    ) -> Result<Self, SourceError> {
        let target = match (pid, cgroup) {
            (Some(pid), None) => Target::Pid(pid),
            (None, Some(path)) => Target::Cgroup(path),
            (Some(_), Some(_)) => {
                return Err(SourceError::InvalidSpec(
                    "pid and cgroup are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(SourceError::InvalidSpec(
                    "one of pid or cgroup is required".into(),
                ))
            }
        };
        let spec = SessionSpec {
            target,
            interval,
            max_stack_depth,
            include_kernel: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_interval(mut self, interval: Duration) -> Self {
        self.interval = interval;
        self
    }

    pub fn with_max_stack_depth(mut self, depth: usize) -> Self {
        self.max_stack_depth = depth;
        self
    }

    pub fn with_kernel_frames(mut self, include: bool) -> Self {
        self.include_kernel = include;
        self
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if self.interval.is_zero() {
            return Err(SourceError::InvalidSpec("interval must be positive".into()));
        }
        if self.max_stack_depth < 2 {
            return Err(SourceError::InvalidSpec(
                "max_stack_depth must be at least 2".into(),
            ));
        }
        if let Target::Pid(0) = self.target {
            return Err(SourceError::InvalidSpec("pid must be non-zero".into()));
        }
        Ok(())
    }
}

/// One frame of a sampled chain: either a raw code address (live sampling)
/// or a name that is already symbolic (replay files).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frame {
    Addr(u64),
    Name(Arc<str>),
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Addr(addr) => write!(f, "{addr:#x}"),
            Frame::Name(name) => f.write_str(name),
        }
    }
}

/// A single stack sample. `frames[0]` is the function that was executing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub frames: Vec<Frame>,
    /// Nanoseconds since the session started.
    pub timestamp: u64,
    /// The chain was cut at the depth limit; the root side is missing.
    pub truncated: bool,
    /// Process the sample came from, when known.
    pub pid: Option<u32>,
}

/// Result of one poll: surviving samples plus how many the kernel had to
/// drop since the previous poll.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PollBatch {
    pub samples: Vec<RawSample>,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSummary {
    /// Delivered plus dropped samples over all polls.
    pub total_samples: u64,
    pub dropped_samples: u64,
    pub wall_duration: Duration,
}

enum Backend {
    Replay(replay::ReplayBackend),
    #[cfg(target_os = "linux")]
    Live(live::LiveBackend),
}

/// An armed sampling session. Owned by one thread; poll and close take
/// `&mut self`.
pub struct SamplerSession {
    spec: Option<SessionSpec>,
    backend: Option<Backend>,
    started: Instant,
    delivered: u64,
    dropped: u64,
    last_timestamp: u64,
    summary: Option<SessionSummary>,
}

impl SamplerSession {
    fn with_backend(spec: Option<SessionSpec>, backend: Backend) -> Self {
        SamplerSession {
            spec,
            backend: Some(backend),
            started: Instant::now(),
            delivered: 0,
            dropped: 0,
            last_timestamp: 0,
            summary: None,
        }
    }

    /// Spec of a live session; replay sessions have none.
    pub fn spec(&self) -> Option<&SessionSpec> {
        self.spec.as_ref()
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.backend, Some(Backend::Replay(_)))
    }

    /// True once a replay session has handed out every recorded sample.
    /// Live sessions are never exhausted.
    pub fn is_exhausted(&self) -> bool {
        match &self.backend {
            Some(Backend::Replay(r)) => r.is_empty(),
            #[cfg(target_os = "linux")]
            Some(Backend::Live(_)) => false,
            None => true,
        }
    }

    /// Drains everything buffered since the previous poll, in timestamp
    /// order. Never blocks.
    pub fn poll_samples(&mut self) -> Result<PollBatch, SourceError> {
        let backend = self.backend.as_mut().ok_or(SourceError::SessionClosed)?;
        let mut batch = match backend {
            Backend::Replay(r) => r.drain(),
            #[cfg(target_os = "linux")]
            Backend::Live(l) => l.drain()?,
        };
        batch.samples.sort_by_key(|s| s.timestamp);
        // Per-thread buffers are read one after another; clamp so the
        // session-wide sequence never goes backwards.
        for sample in &mut batch.samples {
            sample.timestamp = sample.timestamp.max(self.last_timestamp);
            self.last_timestamp = sample.timestamp;
        }
        self.delivered += batch.samples.len() as u64;
        self.dropped += batch.dropped;
        Ok(batch)
    }

    /// Releases OS resources. Calling it again returns the same summary.
    /// Samples still buffered and not polled are discarded.
    pub fn close(&mut self) -> SessionSummary {
        if let Some(summary) = self.summary {
            return summary;
        }
        self.backend = None;
        let summary = SessionSummary {
            total_samples: self.delivered + self.dropped,
            dropped_samples: self.dropped,
            wall_duration: self.started.elapsed(),
        };
        self.summary = Some(summary);
        summary
    }
}

impl fmt::Debug for SamplerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerSession")
            .field("spec", &self.spec)
            .field("replay", &self.is_replay())
            .field("delivered", &self.delivered)
            .field("dropped", &self.dropped)
            .field("closed", &self.summary.is_some())
            .finish()
    }
}

/// Arms a live session against a process or cgroup.
pub fn open_session(spec: SessionSpec) -> Result<SamplerSession, SourceError> {
    spec.validate()?;
    #[cfg(target_os = "linux")]
    {
        let backend = live::LiveBackend::open(&spec)?;
        Ok(SamplerSession::with_backend(Some(spec), Backend::Live(backend)))
    }
    #[cfg(not(target_os = "linux"))]
    {
        Err(SourceError::UnsupportedPlatform)
    }
}

/// Opens a collapsed-stack replay file with default depth and interval.
pub fn open_replay(path: impl AsRef<Path>) -> Result<SamplerSession, SourceError> {
    open_replay_with(path, DEFAULT_MAX_STACK_DEPTH, DEFAULT_INTERVAL)
}

/// Opens a replay file. Sample `i` is stamped `i * interval`, since the
/// collapsed format carries no timing.
pub fn open_replay_with(
    path: impl AsRef<Path>,
    max_stack_depth: usize,
    interval: Duration,
) -> Result<SamplerSession, SourceError> {
    if max_stack_depth < 2 {
        return Err(SourceError::InvalidSpec(
            "max_stack_depth must be at least 2".into(),
        ));
    }
    if interval.is_zero() {
        return Err(SourceError::InvalidSpec("interval must be positive".into()));
    }
    let backend = replay::ReplayBackend::open(path.as_ref(), max_stack_depth, interval)?;
    Ok(SamplerSession::with_backend(None, Backend::Replay(backend)))
}

/// Whether this host lets us open a sampling event on our own process.
pub fn live_supported() -> bool {
    #[cfg(target_os = "linux")]
    {
        live::probe_self()
    }
    #[cfg(not(target_os = "linux"))]
    {
        false
    }
}
