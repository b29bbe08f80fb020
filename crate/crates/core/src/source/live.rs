//! Live sampling through `perf_event_open(2)`.
//!
//! A process target gets one task-clock event per thread, each with its own
//! ring buffer. The kernel refuses to map inherited per-thread events, so
//! threads spawned later are picked up by rescanning `/proc/<pid>/task` on
//! every drain. A cgroup target gets one cpu-clock event per online CPU
//! scoped to that cgroup.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::os::fd::{AsRawFd, OwnedFd};
use std::path::Path;
use std::ptr;
use std::sync::atomic::{fence, AtomicU64, Ordering};

use super::perf_sys::*;
use super::{Frame, PollBatch, RawSample, SessionSpec, SourceError, Target};

const RING_PAGES: usize = 64;

pub(super) struct LiveBackend {
    rings: Vec<Ring>,
    attr: PerfEventAttr,
    /// Process target and the threads already attached.
    threads: Option<(u32, BTreeSet<libc::pid_t>)>,
    start_ns: u64,
    max_depth: usize,
    /// Effective kernel-side cap; a chain reaching it was probably cut.
    kernel_cap: usize,
}

impl LiveBackend {
    pub(super) fn open(spec: &SessionSpec) -> Result<Self, SourceError> {
        let kernel_cap = read_sysctl_max_stack().unwrap_or(127).min(spec.max_stack_depth);
        let mut attr = PerfEventAttr {
            type_: PERF_TYPE_SOFTWARE,
            size: std::mem::size_of::<PerfEventAttr>() as u32,
            sample_period: u64::try_from(spec.interval.as_nanos()).unwrap_or(u64::MAX),
            sample_type: PERF_SAMPLE_IP | PERF_SAMPLE_TID | PERF_SAMPLE_TIME | PERF_SAMPLE_CALLCHAIN,
            flags: FLAG_DISABLED | FLAG_EXCLUDE_HV | FLAG_USE_CLOCKID,
            clockid: libc::CLOCK_MONOTONIC,
            sample_max_stack: kernel_cap.min(u16::MAX as usize) as u16,
            ..Default::default()
        };
        if !spec.include_kernel {
            attr.flags |= FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_CALLCHAIN_KERNEL;
        }

        let start_ns = monotonic_now_ns();
        let mut threads = None;
        let fds = match &spec.target {
            Target::Pid(pid) => {
                attr.config = PERF_COUNT_SW_TASK_CLOCK;
                let attached = open_for_process(&attr, *pid)?;
                threads = Some((*pid, attached.iter().map(|(tid, _)| *tid).collect()));
                attached.into_iter().map(|(_, fd)| fd).collect()
            }
            Target::Cgroup(path) => {
                attr.config = PERF_COUNT_SW_CPU_CLOCK;
                open_for_cgroup(&attr, path)?
            }
        };

        let mut rings = Vec::with_capacity(fds.len());
        for fd in fds {
            rings.push(Ring::map(fd)?);
        }
        for ring in &rings {
            ioctl(ring.fd.as_raw_fd(), PERF_EVENT_IOC_ENABLE)?;
        }
        Ok(LiveBackend {
            rings,
            attr,
            threads,
            start_ns,
            max_depth: spec.max_stack_depth,
            kernel_cap,
        })
    }

    /// Attaches threads that appeared since the last scan. Failures are
    /// ignored: the thread may already be gone.
    fn attach_new_threads(&mut self) {
        let Some((pid, known)) = &mut self.threads else {
            return;
        };
        for tid in list_tasks(*pid).unwrap_or_default() {
            if known.contains(&tid) {
                continue;
            }
            let Ok(fd) = perf_event_open(&self.attr, tid, -1, -1, PERF_FLAG_FD_CLOEXEC) else {
                continue;
            };
            let Ok(ring) = Ring::map(fd) else { continue };
            if ioctl(ring.fd.as_raw_fd(), PERF_EVENT_IOC_ENABLE).is_ok() {
                log::debug!("pid {pid}: attached new thread {tid}");
                known.insert(tid);
                self.rings.push(ring);
            }
        }
    }

    pub(super) fn drain(&mut self) -> Result<PollBatch, SourceError> {
        self.attach_new_threads();
        let mut batch = PollBatch::default();
        let mut record = Vec::new();
        for ring in &mut self.rings {
            ring.for_each_record(&mut record, |kind, body| match kind {
                PERF_RECORD_SAMPLE => {
                    if let Some(sample) =
                        decode_sample(body, self.start_ns, self.max_depth, self.kernel_cap)
                    {
                        batch.samples.push(sample);
                    }
                }
                // Body is { id, lost }.
                PERF_RECORD_LOST if body.len() >= 16 => batch.dropped += read_u64(body, 8),
                _ => {}
            });
        }
        Ok(batch)
    }
}

fn list_tasks(pid: u32) -> io::Result<Vec<libc::pid_t>> {
    let mut tids: Vec<libc::pid_t> = fs::read_dir(format!("/proc/{pid}/task"))?
        .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
        .collect();
    tids.sort_unstable();
    Ok(tids)
}

fn open_for_process(
    attr: &PerfEventAttr,
    pid: u32,
) -> Result<Vec<(libc::pid_t, OwnedFd)>, SourceError> {
    let tids = match list_tasks(pid) {
        Ok(tids) => tids,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(SourceError::TargetNotFound(format!("pid {pid}")))
        }
        Err(e) => return Err(e.into()),
    };

    let mut fds = Vec::with_capacity(tids.len());
    for tid in tids {
        match perf_event_open(attr, tid, -1, -1, PERF_FLAG_FD_CLOEXEC) {
            Ok(fd) => fds.push((tid, fd)),
            // Thread exited between listing and attaching.
            Err(e) if e.raw_os_error() == Some(libc::ESRCH) => continue,
            Err(e) => return Err(map_open_error(e, &format!("pid {pid}"))),
        }
    }
    if fds.is_empty() {
        return Err(SourceError::TargetNotFound(format!("pid {pid}")));
    }
    Ok(fds)
}

fn open_for_cgroup(attr: &PerfEventAttr, path: &Path) -> Result<Vec<OwnedFd>, SourceError> {
    let dir = match fs::File::open(path) {
        Ok(dir) => dir,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(SourceError::TargetNotFound(format!("cgroup {}", path.display())))
        }
        Err(e) => return Err(map_open_error(e, &path.display().to_string())),
    };
    if !dir.metadata()?.is_dir() {
        return Err(SourceError::TargetNotFound(format!(
            "cgroup {} is not a directory",
            path.display()
        )));
    }
    let mut fds = Vec::new();
    for cpu in online_cpus() {
        let fd = perf_event_open(
            attr,
            dir.as_raw_fd(),
            cpu as libc::c_int,
            -1,
            PERF_FLAG_PID_CGROUP | PERF_FLAG_FD_CLOEXEC,
        )
        .map_err(|e| map_open_error(e, &format!("cgroup {}", path.display())))?;
        fds.push(fd);
    }
    Ok(fds)
}

fn map_open_error(e: io::Error, what: &str) -> SourceError {
    match e.raw_os_error() {
        Some(libc::EACCES) | Some(libc::EPERM) => {
            SourceError::PermissionDenied(format!("{what}: {e}"))
        }
        Some(libc::ESRCH) => SourceError::TargetNotFound(what.to_string()),
        // EBADF from a cgroup fd means the directory is not in a
        // perf_event-capable hierarchy.
        Some(libc::EBADF) => {
            SourceError::TargetNotFound(format!("{what} is not a perf_event cgroup"))
        }
        Some(libc::ENOSYS) | Some(libc::ENOENT) | Some(libc::EOPNOTSUPP) => {
            SourceError::UnsupportedPlatform
        }
        _ => SourceError::Io(e),
    }
}

fn read_sysctl_max_stack() -> Option<usize> {
    fs::read_to_string("/proc/sys/kernel/perf_event_max_stack")
        .ok()?
        .trim()
        .parse()
        .ok()
}

fn online_cpus() -> Vec<usize> {
    if let Ok(text) = fs::read_to_string("/sys/devices/system/cpu/online") {
        if let Some(cpus) = parse_cpu_list(text.trim()) {
            return cpus;
        }
    }
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    (0..n).collect()
}

fn parse_cpu_list(text: &str) -> Option<Vec<usize>> {
    let mut cpus = Vec::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (usize, usize) = (lo.parse().ok()?, hi.parse().ok()?);
                cpus.extend(lo..=hi);
            }
            None => cpus.push(part.parse().ok()?),
        }
    }
    Some(cpus)
}

fn read_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_ne_bytes(buf[at..at + 8].try_into().unwrap())
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_ne_bytes(buf[at..at + 4].try_into().unwrap())
}

/// Decodes a `PERF_RECORD_SAMPLE` body laid out for
/// `IP | TID | TIME | CALLCHAIN`.
fn decode_sample(
    body: &[u8],
    start_ns: u64,
    max_depth: usize,
    kernel_cap: usize,
) -> Option<RawSample> {
    if body.len() < 32 {
        return None;
    }
    let ip = read_u64(body, 0);
    let pid = read_u32(body, 8);
    let time = read_u64(body, 16);
    let nr = read_u64(body, 24) as usize;
    if body.len() < 32 + nr * 8 {
        return None;
    }
    let mut frames: Vec<Frame> = (0..nr)
        .map(|i| read_u64(body, 32 + i * 8))
        .filter(|&addr| addr < PERF_CONTEXT_MAX && addr != 0)
        .map(Frame::Addr)
        .collect();
    if frames.is_empty() {
        if ip == 0 || ip >= PERF_CONTEXT_MAX {
            return None;
        }
        frames.push(Frame::Addr(ip));
    }
    let mut truncated = frames.len() >= kernel_cap;
    if frames.len() > max_depth {
        frames.truncate(max_depth);
        truncated = true;
    }
    Some(RawSample {
        frames,
        timestamp: time.saturating_sub(start_ns),
        truncated,
        pid: Some(pid),
    })
}

pub(super) fn probe_self() -> bool {
    let attr = PerfEventAttr {
        type_: PERF_TYPE_SOFTWARE,
        size: std::mem::size_of::<PerfEventAttr>() as u32,
        config: PERF_COUNT_SW_TASK_CLOCK,
        sample_period: 10_000_000,
        sample_type: PERF_SAMPLE_IP | PERF_SAMPLE_TID | PERF_SAMPLE_TIME | PERF_SAMPLE_CALLCHAIN,
        flags: FLAG_DISABLED | FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_HV | FLAG_USE_CLOCKID,
        clockid: libc::CLOCK_MONOTONIC,
        sample_max_stack: 16,
        ..Default::default()
    };
    perf_event_open(&attr, 0, -1, -1, PERF_FLAG_FD_CLOEXEC).is_ok()
}

struct Ring {
    fd: OwnedFd,
    base: *mut u8,
    map_len: usize,
    data_offset: usize,
    data_size: usize,
}

// The mapping is only touched through &mut self.
unsafe impl Send for Ring {}

impl Ring {
    fn map(fd: OwnedFd) -> Result<Self, SourceError> {
        // SAFETY: sysconf has no preconditions.
        let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) } as usize;
        let map_len = page * (1 + RING_PAGES);
        // SAFETY: fresh shared mapping of a perf fd; checked for MAP_FAILED.
        let base = unsafe {
            libc::mmap(
                ptr::null_mut(),
                map_len,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_SHARED,
                fd.as_raw_fd(),
                0,
            )
        };
        if base == libc::MAP_FAILED {
            return Err(io::Error::last_os_error().into());
        }
        let base = base as *mut u8;
        let header = base as *const MmapPageHeader;
        // SAFETY: the first page is the header page.
        let (offset, size) = unsafe { ((*header).data_offset, (*header).data_size) };
        let (data_offset, data_size) = if size == 0 {
            (page, page * RING_PAGES)
        } else {
            (offset as usize, size as usize)
        };
        Ok(Ring {
            fd,
            base,
            map_len,
            data_offset,
            data_size,
        })
    }

    fn head_tail(&self) -> (&AtomicU64, &AtomicU64) {
        let header = self.base as *mut MmapPageHeader;
        // SAFETY: both fields are 8-byte aligned u64s inside the live header page.
        unsafe {
            (
                &*(ptr::addr_of_mut!((*header).data_head) as *const AtomicU64),
                &*(ptr::addr_of_mut!((*header).data_tail) as *const AtomicU64),
            )
        }
    }

    fn copy_out(&self, pos: u64, len: usize, out: &mut Vec<u8>) {
        out.clear();
        out.reserve(len);
        let start = (pos % self.data_size as u64) as usize;
        let first = len.min(self.data_size - start);
        // SAFETY: both ranges lie inside the data area.
        unsafe {
            let data = self.base.add(self.data_offset);
            out.extend_from_slice(std::slice::from_raw_parts(data.add(start), first));
            if first < len {
                out.extend_from_slice(std::slice::from_raw_parts(data, len - first));
            }
        }
    }

    fn for_each_record(&mut self, scratch: &mut Vec<u8>, mut f: impl FnMut(u32, &[u8])) {
        let (head_ref, tail_ref) = self.head_tail();
        let head = head_ref.load(Ordering::Acquire);
        let mut tail = tail_ref.load(Ordering::Relaxed);
        while tail + 8 <= head {
            self.copy_out(tail, 8, scratch);
            let kind = read_u32(scratch, 0);
            let size = u16::from_ne_bytes([scratch[6], scratch[7]]) as u64;
            if size < 8 || tail + size > head {
                break;
            }
            self.copy_out(tail + 8, size as usize - 8, scratch);
            f(kind, scratch);
            tail += size;
        }
        fence(Ordering::SeqCst);
        let (_, tail_ref) = self.head_tail();
        tail_ref.store(tail, Ordering::Release);
    }
}

impl Drop for Ring {
    fn drop(&mut self) {
        let _ = ioctl(self.fd.as_raw_fd(), PERF_EVENT_IOC_DISABLE);
        // SAFETY: base/map_len came from our own successful mmap.
        unsafe {
            libc::munmap(self.base as *mut libc::c_void, self.map_len);
        }
    }
}
