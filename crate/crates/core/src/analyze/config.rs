use std::fmt;
use std::str::FromStr;

use super::pattern::Pattern;
use super::{AnalysisError, SELF_CATEGORY, UNCATEGORIZED_CATEGORY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Break each matched root down by its direct children.
    #[default]
    Children,
    /// Attribute every node's self time under each matched root.
    Flatten,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "children" => Ok(Mode::Children),
            "flatten" => Ok(Mode::Flatten),
            other => Err(format!("unknown mode `{other}` (expected children or flatten)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Children => "children",
            Mode::Flatten => "flatten",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncategorizedPolicy {
    /// Collect unmatched names into an `uncategorized` bucket.
    #[default]
    Bucket,
    /// Fail the analysis if any name is unmatched.
    Error,
}

impl FromStr for UncategorizedPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bucket" => Ok(UncategorizedPolicy::Bucket),
            "error" => Ok(UncategorizedPolicy::Error),
            other => Err(format!(
                "unknown uncategorized policy `{other}` (expected bucket or error)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhitelistEntry {
    pub pattern: Pattern,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub root: Pattern,
    /// Earlier entries win.
    pub whitelist: Vec<WhitelistEntry>,
    pub blacklist: Vec<Pattern>,
    pub mode: Mode,
    pub uncategorized: UncategorizedPolicy,
}

impl AnalysisConfig {
    pub fn new(root: impl Into<String>) -> Self {
        AnalysisConfig {
            root: Pattern::new(root),
            whitelist: Vec::new(),
            blacklist: Vec::new(),
            mode: Mode::Children,
            uncategorized: UncategorizedPolicy::Bucket,
        }
    }

    pub fn category(mut self, category: impl Into<String>, pattern: impl Into<String>) -> Self {
        self.whitelist.push(WhitelistEntry {
            pattern: Pattern::new(pattern),
            category: category.into(),
        });
        self
    }

    pub fn deny(mut self, pattern: impl Into<String>) -> Self {
        self.blacklist.push(Pattern::new(pattern));
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn uncategorized(mut self, policy: UncategorizedPolicy) -> Self {
        self.uncategorized = policy;
        self
    }

    /// Distinct whitelist categories in order of first appearance.
    pub fn categories(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for entry in &self.whitelist {
            if !seen.contains(&entry.category.as_str()) {
                seen.push(&entry.category);
            }
        }
        seen
    }
}

fn syntax(line: usize, message: impl Into<String>) -> AnalysisError {
    AnalysisError::Syntax {
        line,
        message: message.into(),
    }
}

/// Parses the line-oriented config format:
///
/// ```text
/// # comment
/// root tick
/// cat Ruby RubyPort::*
/// deny pybind11*
/// mode children
/// uncategorized bucket
/// ```
///
/// A pattern runs to the end of its line, so it may contain spaces.
pub fn parse_config(text: &str) -> Result<AnalysisConfig, AnalysisError> {
    let mut root: Option<Pattern> = None;
    let mut whitelist = Vec::new();
    let mut blacklist = Vec::new();
    let mut mode: Option<Mode> = None;
    let mut policy: Option<UncategorizedPolicy> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (directive, rest) = match line.split_once(char::is_whitespace) {
            Some((d, r)) => (d, r.trim()),
            None => (line, ""),
        };
        if rest.is_empty() {
            return Err(syntax(line_no, format!("`{directive}` needs an argument")));
        }
        match directive {
            "root" => {
                if root.is_some() {
                    return Err(syntax(line_no, "duplicate `root`"));
                }
                root = Some(Pattern::new(rest));
            }
            "cat" => {
                let Some((category, pattern)) = rest.split_once(char::is_whitespace) else {
                    return Err(syntax(line_no, "`cat` needs a category and a pattern"));
                };
                if category == SELF_CATEGORY || category == UNCATEGORIZED_CATEGORY {
                    return Err(syntax(
                        line_no,
                        format!("category name `{category}` is reserved"),
                    ));
                }
                whitelist.push(WhitelistEntry {
                    pattern: Pattern::new(pattern.trim()),
                    category: category.to_string(),
                });
            }
            "deny" => blacklist.push(Pattern::new(rest)),
            "mode" => {
                if mode.is_some() {
                    return Err(syntax(line_no, "duplicate `mode`"));
                }
                mode = Some(rest.parse().map_err(|e| syntax(line_no, e))?);
            }
            "uncategorized" => {
                if policy.is_some() {
                    return Err(syntax(line_no, "duplicate `uncategorized`"));
                }
                policy = Some(rest.parse().map_err(|e| syntax(line_no, e))?);
            }
            other => return Err(syntax(line_no, format!("unknown directive `{other}`"))),
        }
    }

    Ok(AnalysisConfig {
        root: root.ok_or(AnalysisError::MissingRoot)?,
        whitelist,
        blacklist,
        mode: mode.unwrap_or_default(),
        uncategorized: policy.unwrap_or_default(),
    })
}
