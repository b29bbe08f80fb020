#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

/// Live tests measure CPU-clock samples, so they must not compete with each
/// other for CPU time.
static LIVE: Mutex<()> = Mutex::new(());

pub fn live_lock() -> MutexGuard<'static, ()> {
    LIVE.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn stacksurgeon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stacksurgeon"))
}

/// A running synthetic workload, killed on drop.
pub struct Workload {
    pub child: Child,
}

impl Workload {
    pub fn spawn(seconds: u64) -> Self {
        let child = Command::new(env!("CARGO_BIN_EXE_synthetic-workload"))
            .arg(seconds.to_string())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn synthetic workload");
        // Let it exec and map its image before anyone reads /proc/<pid>/maps.
        std::thread::sleep(Duration::from_millis(200));
        Workload { child }
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    /// Waits for the workload to run out its time and returns the split it
    /// reports on exit.
    pub fn finish(mut self) -> String {
        let mut text = String::new();
        if let Some(mut err) = self.child.stderr.take() {
            use std::io::Read;
            let _ = err.read_to_string(&mut text);
        }
        let _ = self.child.wait();
        text.trim().to_string()
    }
}

impl Drop for Workload {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn record_pid(pid: u32, interval: &str, duration: &str, out: &Path) -> Output {
    stacksurgeon()
        .args(["record", "--pid", &pid.to_string(), "--interval", interval, "--duration", duration, "-o"])
        .arg(out)
        .env("STACKSURGEON_NO_COLOR", "1")
        .output()
        .expect("run stacksurgeon")
}

/// Children-mode config for the synthetic workload.
pub const WORKLOAD_CONFIG: &str = "root synthetic_workload::drive\n\
cat seventy *::hot_seventy\n\
cat thirty *::hot_thirty\n\
mode children\n";

/// A private cgroup-v1 perf_event hierarchy with one child group, torn down
/// on drop.
pub struct PerfCgroup {
    mount: tempfile::TempDir,
    pub group: PathBuf,
}

impl PerfCgroup {
    /// `None` when the hierarchy cannot be mounted here.
    pub fn mount() -> Option<Self> {
        let mount = tempfile::tempdir().ok()?;
        let status = Command::new("mount")
            .args(["-t", "cgroup", "-o", "perf_event", "stacksurgeon-test"])
            .arg(mount.path())
            .stderr(Stdio::null())
            .status()
            .ok()?;
        if !status.success() {
            return None;
        }
        let group = mount.path().join("workload");
        if std::fs::create_dir(&group).is_err() {
            let _ = Command::new("umount").arg(mount.path()).status();
            return None;
        }
        Some(PerfCgroup { mount, group })
    }

    pub fn add(&self, pid: u32) -> std::io::Result<()> {
        std::fs::write(self.group.join("tasks"), pid.to_string())
    }
}

impl Drop for PerfCgroup {
    fn drop(&mut self) {
        // Move leftovers back to the hierarchy root so the group can go.
        if let Ok(tasks) = std::fs::read_to_string(self.group.join("tasks")) {
            for pid in tasks.lines() {
                let _ = std::fs::write(self.mount.path().join("tasks"), pid);
            }
        }
        let _ = std::fs::remove_dir(&self.group);
        let _ = Command::new("umount").arg(self.mount.path()).status();
    }
}
