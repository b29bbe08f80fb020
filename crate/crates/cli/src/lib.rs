//! `stacksurgeon` subcommands.
//!
//! - `record`  sample a process, cgroup or replay file into `callstack.json`
//! - `analyze` apply a breakdown config to one or more trees
//! - `chart`   discover runs under a layout root and draw stacked bars
//!
//! Exit codes: 0 ok, 1 runtime error, 2 I/O error, 64 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use stacksurgeon::analyze::{self, AnalysisConfig, BreakdownTable};
use stacksurgeon::calltree::{self, CallTree};
use stacksurgeon::layout::{self, RunLabel, RunMeta};
use stacksurgeon::report::{self, ChartSpec, OutputFormat};
use stacksurgeon::source::{self, SamplerSession, SessionSpec, Target};
use stacksurgeon::symbolize::{self, ProcessSymbolizer, SymbolIndex, SymbolSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Disables ANSI styling in text tables when set.
pub const NO_COLOR_ENV: &str = "STACKSURGEON_NO_COLOR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationResult {
    pub exit_code: i32,
    pub diagnostics: Vec<Diagnostic>,
}

impl InvocationResult {
    fn new() -> Self {
        InvocationResult {
            exit_code: EXIT_OK,
            diagnostics: Vec::new(),
        }
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
        });
    }

    fn fail(mut self, code: i32, message: impl Into<String>) -> Self {
        self.exit_code = code;
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            message: message.into(),
        });
        self
    }

    pub fn errors(&self) -> impl Iterator<Item = &str> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.message.as_str())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Warning)
            .map(|d| d.message.as_str())
    }
}

#[derive(Debug, Parser)]
#[command(name = "stacksurgeon", version, about = "Sampling callchain profiler and call-tree breakdowns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a process, cgroup or replay file into a callstack.json
    Record(RecordArgs),
    /// Break one or more call trees down by configured categories
    Analyze(AnalyzeArgs),
    /// Chart every run found under a layout root as stacked bars
    Chart(ChartArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["pid", "cgroup", "replay"])))]
pub struct RecordArgs {
    /// Process to sample (all of its threads)
    #[arg(long)]
    pub pid: Option<u32>,
    /// cgroup directory whose tasks are sampled
    #[arg(long)]
    pub cgroup: Option<PathBuf>,
    /// Collapsed-stack file to replay instead of sampling
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Sampling interval, e.g. 10ms or 1s
    #[arg(long, default_value = "1000ms", value_parser = humantime::parse_duration)]
    pub interval: Duration,
    /// How long to sample a live target
    #[arg(long, default_value = "60s", value_parser = humantime::parse_duration)]
    pub duration: Duration,
    /// Maximum frames per sample
    #[arg(long, default_value_t = source::DEFAULT_MAX_STACK_DEPTH)]
    pub depth: usize,
    /// Also record kernel frames
    #[arg(long)]
    pub kernel: bool,
    /// Executable whose symbols resolve hex frames in a replay file
    #[arg(long, requires = "replay")]
    pub symbols: Option<PathBuf>,
    /// Output path for callstack.json
    #[arg(short, long, default_value = layout::PROFILE_FILE)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// callstack.json files to analyze
    #[arg(required = true)]
    pub trees: Vec<PathBuf>,
    /// Breakdown config file
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output format: txt, csv or svg
    #[arg(long, default_value = "txt")]
    pub format: OutputFormat,
    /// Write to a file instead of stdout
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Chart title for svg output
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    /// Root of the run directory layout
    pub runs_root: PathBuf,
    /// Breakdown config file
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output SVG path
    #[arg(short, long, default_value = "breakdown.svg")]
    pub out: PathBuf,
    /// Chart title
    #[arg(long)]
    pub title: Option<String>,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Primary output goes to `stdout`; diagnostics are returned. `color`
/// allows ANSI styling, which `STACKSURGEON_NO_COLOR` can still veto.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, color: bool) -> InvocationResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return InvocationResult::new();
            }
            let text = e.render().to_string();
            let text = text.trim_end();
            return InvocationResult::new().fail(EXIT_USAGE, text.strip_prefix("error: ").unwrap_or(text));
        }
    };
    let color = color && std::env::var_os(NO_COLOR_ENV).is_none();
    match cli.command {
        Command::Record(args) => cmd_record(&args, stdout),
        Command::Analyze(args) => cmd_analyze(&args, stdout, color),
        Command::Chart(args) => cmd_chart(&args, stdout),
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

/// Routes SIGINT to a flag for the lifetime of the guard.
struct InterruptGuard {
    previous: libc::sighandler_t,
}

impl InterruptGuard {
    fn install() -> Self {
        INTERRUPTED.store(false, Ordering::SeqCst);
        // SAFETY: the handler only stores to an atomic.
        let previous = unsafe { libc::signal(libc::SIGINT, on_sigint as *const () as libc::sighandler_t) };
        InterruptGuard { previous }
    }
}

impl Drop for InterruptGuard {
    fn drop(&mut self) {
        // SAFETY: restores whatever was installed before.
        unsafe { libc::signal(libc::SIGINT, self.previous) };
    }
}

enum Names {
    /// Replay: named frames pass through, hex frames use an optional index.
    Static(SymbolIndex),
    /// Live: per-process indexes built on first sight.
    Live(ProcessSymbolizer),
}

/// A pid target is gone once `/proc/<pid>` disappears or it is a zombie
/// waiting to be reaped.
fn target_alive(session: &SamplerSession) -> bool {
    let Some(Target::Pid(pid)) = session.spec().map(|s| &s.target) else {
        return true;
    };
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        // The state letter follows the parenthesised command name.
        Ok(stat) => !matches!(
            stat.rsplit_once(')').and_then(|(_, rest)| rest.trim_start().chars().next()),
            Some('Z' | 'X')
        ),
        Err(_) => false,
    }
}

pub fn cmd_record(args: &RecordArgs, stdout: &mut dyn Write) -> InvocationResult {
    let mut result = InvocationResult::new();

    let (mut session, mut names) = if let Some(path) = &args.replay {
        let session = match source::open_replay_with(path, args.depth, args.interval) {
            Ok(s) => s,
            Err(e) => return result.fail(EXIT_RUNTIME, format!("cannot open replay: {e}")),
        };
        let index = match &args.symbols {
            None => SymbolIndex::empty(),
            Some(exe) => match symbolize::build_symbol_index(&SymbolSource::Executable(exe.clone()))
                .or_else(symbolize::SymbolError::into_index)
            {
                Ok(index) => {
                    if index.is_empty() {
                        result.warn(format!("no symbols in {}", exe.display()));
                    }
                    index
                }
                Err(e) => return result.fail(EXIT_RUNTIME, format!("cannot load symbols: {e}")),
            },
        };
        (session, Names::Static(index))
    } else {
        let spec = match SessionSpec::from_selectors(
            args.pid,
            args.cgroup.clone(),
            args.interval,
            args.depth,
        ) {
            Ok(spec) => spec.with_kernel_frames(args.kernel),
            Err(e) => return result.fail(EXIT_USAGE, e.to_string()),
        };
        let mut symbolizer = ProcessSymbolizer::new(args.kernel);
        if let Target::Pid(pid) = spec.target {
            // Build before sampling so short-lived targets still resolve.
            match symbolize::build_symbol_index(&SymbolSource::Pid(pid)) {
                Ok(index) => symbolizer.insert(pid, index),
                Err(symbolize::SymbolError::NoSymbols { index, .. }) => {
                    result.warn(format!("no symbols for pid {pid}; frames stay hex"));
                    symbolizer.insert(pid, index);
                }
                Err(e) => return result.fail(EXIT_RUNTIME, format!("cannot open target: {e}")),
            }
        }
        let session = match source::open_session(spec) {
            Ok(s) => s,
            Err(e) => return result.fail(EXIT_RUNTIME, format!("cannot open session: {e}")),
        };
        (session, Names::Live(symbolizer))
    };

    let guard = InterruptGuard::install();
    let started = Instant::now();
    let mut tree = CallTree::new();
    // The ring holds far more than one poll period of samples at any sane interval.
    let tick = Duration::from_millis(100);
    loop {
        match session.poll_samples() {
            Ok(batch) => {
                log::debug!("poll: {} samples, {} dropped", batch.samples.len(), batch.dropped);
                match &mut names {
                    Names::Static(index) => {
                        let part = stacksurgeon::par::tree_from_samples(index, &batch.samples, false);
                        tree.merge_from(&part);
                    }
                    Names::Live(symbolizer) => {
                        for sample in &batch.samples {
                            let chain = symbolizer.resolve(sample);
                            tree.ingest(chain.iter().rev().map(|n| n.as_str()));
                        }
                    }
                }
            }
            Err(e) => {
                result.warn(format!("sampling stopped early: {e}"));
                break;
            }
        }
        if session.is_replay() {
            if session.is_exhausted() {
                break;
            }
            continue;
        }
        if INTERRUPTED.load(Ordering::SeqCst) {
            result.warn("interrupted; writing partial profile");
            break;
        }
        let elapsed = started.elapsed();
        if elapsed >= args.duration {
            break;
        }
        if !target_alive(&session) {
            result.warn("target exited before the duration elapsed");
            // One last drain below picks up whatever it left behind.
            break;
        }
        std::thread::sleep(tick.min(args.duration - elapsed));
    }
    if !session.is_replay() {
        if let Ok(batch) = session.poll_samples() {
            if let Names::Live(symbolizer) = &mut names {
                for sample in &batch.samples {
                    let chain = symbolizer.resolve(sample);
                    tree.ingest(chain.iter().rev().map(|n| n.as_str()));
                }
            }
        }
    }
    drop(guard);
    let summary = session.close();

    if summary.dropped_samples > 0 {
        result.warn(format!(
            "{} samples were dropped by the kernel ring buffer",
            summary.dropped_samples
        ));
    }
    if let Err(e) = write_output(&args.out, &calltree::serialize(&tree)) {
        return result.fail(EXIT_IO, format!("cannot write {}: {e}", args.out.display()));
    }
    let _ = writeln!(
        stdout,
        "samples: {} (dropped {}) in {:.2}s -> {}",
        summary.total_samples,
        summary.dropped_samples,
        summary.wall_duration.as_secs_f64(),
        args.out.display()
    );
    result
}

fn write_output(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}

fn load_config(path: &Path) -> Result<AnalysisConfig, (i32, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    analyze::parse_config(&text).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

fn load_tree(path: &Path) -> Result<CallTree, (i32, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    calltree::deserialize(&text).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

/// Labels for trees given on the command line: the run label when the path
/// follows the layout, otherwise the file stem. Any label that would repeat
/// falls back to the full path.
fn labels_for_paths(paths: &[PathBuf]) -> Vec<RunLabel> {
    let first: Vec<String> = paths
        .iter()
        .map(|p| match layout::meta_from_path(p) {
            Some(meta) => layout::label(&meta).to_string(),
            None => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        })
        .collect();
    first
        .iter()
        .zip(paths)
        .map(|(label, path)| {
            if first.iter().filter(|l| *l == label).count() > 1 {
                RunLabel::new(path.display().to_string())
            } else {
                RunLabel::new(label.clone())
            }
        })
        .collect()
}

fn note_breakdown_warnings(result: &mut InvocationResult, table: &BreakdownTable) {
    for (label, b) in &table.rows {
        if b.matched_roots == 0 {
            result.warn(format!("{label}: root pattern matched nothing"));
        }
        if !b.uncategorized_names.is_empty() {
            result.warn(format!(
                "{label}: {} uncategorized function(s): {}",
                b.uncategorized_names.len(),
                b.uncategorized_names.join(", ")
            ));
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write, color: bool) -> InvocationResult {
    let mut result = InvocationResult::new();
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err((code, msg)) => return result.fail(code, msg),
    };
    let mut runs = Vec::with_capacity(args.trees.len());
    for (label, path) in labels_for_paths(&args.trees).into_iter().zip(&args.trees) {
        match load_tree(path) {
            Ok(tree) => runs.push((label, tree)),
            Err((code, msg)) => return result.fail(code, msg),
        }
    }
    let table = match analyze::breakdown_for_runs(&runs, &config) {
        Ok(t) => t,
        Err(e) => return result.fail(EXIT_RUNTIME, e.to_string()),
    };
    note_breakdown_warnings(&mut result, &table);

    let spec = ChartSpec {
        title: args
            .title
            .clone()
            .unwrap_or_else(|| format!("Breakdown of {}", config.root)),
        category_order: Vec::new(),
        format: args.format,
    };
    let ansi = color && args.out.is_none() && args.format == OutputFormat::Txt;
    let rendered = match report::render(&table, &spec, ansi) {
        Ok(text) => text,
        Err(e) => return result.fail(EXIT_RUNTIME, e.to_string()),
    };
    match &args.out {
        Some(path) => {
            if let Err(e) = write_output(path, &rendered) {
                return result.fail(EXIT_IO, format!("cannot write {}: {e}", path.display()));
            }
        }
        None => {
            if let Err(e) = stdout.write_all(rendered.as_bytes()) {
                return result.fail(EXIT_IO, format!("cannot write output: {e}"));
            }
        }
    }
    result
}

/// Labels for discovered runs, widened with the application (and then the
/// benchmark) until unique.
fn labels_for_runs(metas: &[RunMeta]) -> Vec<RunLabel> {
    let spell = |level: u8, m: &RunMeta| {
        let short = layout::label(m).to_string();
        match level {
            0 => short,
            1 => format!("{}/{short}", m.application),
            _ => format!("{}/{}/{short}", m.benchmark, m.application),
        }
    };
    for level in 0..=2u8 {
        let labels: Vec<String> = metas.iter().map(|m| spell(level, m)).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() == labels.len() || level == 2 {
            return labels.into_iter().map(RunLabel::new).collect();
        }
    }
    unreachable!()
}

pub fn cmd_chart(args: &ChartArgs, stdout: &mut dyn Write) -> InvocationResult {
    let mut result = InvocationResult::new();
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err((code, msg)) => return result.fail(code, msg),
    };
    let discovery = match layout::discover_runs(&args.runs_root) {
        Ok(d) => d,
        Err(e) => return result.fail(EXIT_IO, e.to_string()),
    };
    for w in &discovery.warnings {
        result.warn(w.clone());
    }
    if discovery.runs.is_empty() {
        return result.fail(
            EXIT_RUNTIME,
            format!("no runs found under {}", args.runs_root.display()),
        );
    }
    let metas: Vec<RunMeta> = discovery.runs.iter().map(|(m, _)| m.clone()).collect();
    let mut runs = Vec::with_capacity(metas.len());
    for (label, (_, path)) in labels_for_runs(&metas).into_iter().zip(&discovery.runs) {
        match load_tree(path) {
            Ok(tree) => runs.push((label, tree)),
            Err((code, msg)) => return result.fail(code, msg),
        }
    }
    runs.sort_by(|a, b| a.0.cmp(&b.0));

    let table = match analyze::breakdown_for_runs(&runs, &config) {
        Ok(t) => t,
        Err(e) => return result.fail(EXIT_RUNTIME, e.to_string()),
    };
    note_breakdown_warnings(&mut result, &table);
    let spec = ChartSpec::new(
        args.title
            .clone()
            .unwrap_or_else(|| format!("Breakdown of {}", config.root)),
    );
    let svg = match report::emit_stacked_bars(&table, &spec) {
        Ok(svg) => svg,
        Err(e) => return result.fail(EXIT_RUNTIME, e.to_string()),
    };
    if let Err(e) = write_output(&args.out, &svg) {
        return result.fail(EXIT_IO, format!("cannot write {}: {e}", args.out.display()));
    }
    let _ = writeln!(
        stdout,
        "charted {} run(s) -> {}",
        table.rows.len(),
        args.out.display()
    );
    result
}
