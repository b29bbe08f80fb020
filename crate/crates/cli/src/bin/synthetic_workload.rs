//! CPU-bound fixture for live profiling tests.
//!
//! `drive` alternates between `hot_seventy` and `hot_thirty`, which run the
//! same inner loop for 7 and 3 units of work, so roughly 70% and 30% of CPU
//! time lands in each. The loop makes no calls in any build profile, so
//! every sample inside it unwinds through the function that owns it.
//!
//! Usage: `synthetic-workload [SECONDS]` (default 120). On exit the measured
//! split is printed to stderr.

use std::time::{Duration, Instant};

const UNIT: u64 = 20_000;

/// Keeps `v` opaque to the optimizer without a function call.
#[inline(always)]
fn opaque(mut v: u64) -> u64 {
    #[cfg(any(target_arch = "x86_64", target_arch = "aarch64"))]
    // SAFETY: empty asm that only claims to modify a register.
    unsafe {
        std::arch::asm!("/* {0} */", inout(reg) v, options(nomem, nostack, preserves_flags));
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    {
        v = std::hint::black_box(v);
    }
    v
}

#[inline(always)]
fn spin(iterations: u64, mut state: u64) -> u64 {
    let mut i = 0;
    while i < iterations {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state = opaque(state);
        i += 1;
    }
    state
}

#[inline(never)]
fn hot_seventy(seed: u64) -> u64 {
    spin(7 * UNIT, seed)
}

#[inline(never)]
fn hot_thirty(seed: u64) -> u64 {
    spin(3 * UNIT, seed)
}

#[inline(never)]
fn drive(deadline: Instant) -> (u64, Duration, Duration) {
    let mut state = 0x9e37_79b9_7f4a_7c15;
    let (mut seventy, mut thirty) = (Duration::ZERO, Duration::ZERO);
    let mut now = Instant::now();
    while now < deadline {
        state = hot_seventy(state | 1);
        let mid = Instant::now();
        state = hot_thirty(state | 1);
        let end = Instant::now();
        seventy += mid - now;
        thirty += end - mid;
        now = end;
    }
    (state, seventy, thirty)
}

fn main() {
    let seconds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);
    let (state, seventy, thirty) = drive(Instant::now() + Duration::from_secs(seconds));
    let total = (seventy + thirty).as_secs_f64().max(f64::EPSILON);
    eprintln!(
        "hot_seventy {:.2}% hot_thirty {:.2}% (state {state:x})",
        100.0 * seventy.as_secs_f64() / total,
        100.0 * thirty.as_secs_f64() / total
    );
}
