//! Sampling callchain profiler and call-tree breakdown analysis.
//!
//! The pipeline has five stages, each in its own module:
//!
//! - [`source`] acquires leaf-first stack samples, live through
//!   `perf_event_open(2)` or from a collapsed-stack replay file.
//! - [`symbolize`] turns frame addresses into function names.
//! - [`calltree`] folds named chains into an inclusive-count call tree and
//!   reads/writes the `callstack.json` format.
//! - [`analyze`] anchors on a root function, groups what runs beneath it
//!   into configured categories, and computes percentage breakdowns.
//! - [`layout`] and [`report`] map runs onto the on-disk directory
//!   convention and render the breakdowns as CSV, text, or stacked-bar SVG.
//!
//! With the default `parallel` feature, batch entry points ([`par`]) fan
//! work out over rayon; without it they run sequentially with identical
//! results.

pub mod analyze;
pub mod calltree;
pub mod layout;
pub mod par;
pub mod report;
pub mod source;
pub mod symbolize;

pub use analyze::{AnalysisConfig, CategoryBreakdown, Mode};
pub use calltree::{CallNode, CallTree};
pub use layout::{CpuType, RunLabel, RunMeta};
pub use source::{RawSample, SamplerSession, SessionSpec};
pub use symbolize::{FrameName, SymbolIndex};
