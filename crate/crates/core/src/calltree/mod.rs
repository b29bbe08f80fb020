//! Inclusive-count call trees.
//!
//! Every ingested chain bumps the count of each node along its root-first
//! path, so a node's count is the number of samples whose chain passes
//! through it and a root's count is the number of samples under it.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

mod json;

pub use json::{deserialize, serialize};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CallTreeError {
    #[error("empty chain")]
    EmptyChain,
    #[error("share of zero total")]
    ZeroTotal,
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("invalid JSON: {0}")]
    Json(String),
}

pub type Children = BTreeMap<Arc<str>, CallNode>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallNode {
    count: u64,
    children: Children,
}

impl CallNode {
    /// A node with no children. Used to build trees by hand.
    pub fn leaf(count: u64) -> Self {
        CallNode {
            count,
            children: Children::new(),
        }
    }

    /// Adds (or replaces) a child. Used to build trees by hand; call
    /// [`CallTree::from_roots`] afterwards to validate.
    pub fn with_child(mut self, name: impl Into<Arc<str>>, child: CallNode) -> Self {
        self.children.insert(name.into(), child);
        self
    }

    /// Inclusive sample count.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn children(&self) -> &Children {
        &self.children
    }

    pub fn child(&self, name: &str) -> Option<&CallNode> {
        self.children.get(name)
    }

    pub fn children_total(&self) -> u64 {
        self.children.values().map(|c| c.count).sum()
    }

    /// Samples whose chain ended at this node.
    pub fn self_count(&self) -> u64 {
        self.count.saturating_sub(self.children_total())
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn merge_from(&mut self, other: &CallNode) {
        self.count += other.count;
        for (name, theirs) in &other.children {
            match self.children.get_mut(name) {
                Some(ours) => ours.merge_from(theirs),
                None => {
                    self.children.insert(Arc::clone(name), theirs.clone());
                }
            }
        }
    }

    fn validate(&self, path: &mut Vec<Arc<str>>) -> Result<(), CallTreeError> {
        if self.count == 0 {
            return Err(violation(path, "count must be at least 1"));
        }
        if self.children_total() > self.count {
            return Err(violation(path, "children counts exceed parent count"));
        }
        for (name, child) in &self.children {
            path.push(Arc::clone(name));
            child.validate(path)?;
            path.pop();
        }
        Ok(())
    }
}

fn violation(path: &[Arc<str>], reason: &str) -> CallTreeError {
    CallTreeError::SchemaViolation {
        path: json_path(path),
        reason: reason.to_string(),
    }
}

pub(crate) fn json_path(path: &[Arc<str>]) -> String {
    if path.is_empty() {
        return "/".to_string();
    }
    path.iter().fold(String::new(), |mut acc, p| {
        acc.push('/');
        acc.push_str(p);
        acc
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallTree {
    roots: Children,
    total_samples: u64,
}

impl CallTree {
    pub fn new() -> Self {
        CallTree::default()
    }

    /// Assembles a tree from hand-built roots, checking the node invariants.
    pub fn from_roots<I, S>(roots: I) -> Result<Self, CallTreeError>
    where
        I: IntoIterator<Item = (S, CallNode)>,
        S: Into<Arc<str>>,
    {
        let roots: Children = roots.into_iter().map(|(n, c)| (n.into(), c)).collect();
        let mut path = Vec::new();
        for (name, node) in &roots {
            path.push(Arc::clone(name));
            node.validate(&mut path)?;
            path.pop();
        }
        let total_samples = roots.values().map(|r| r.count).sum();
        Ok(CallTree {
            roots,
            total_samples,
        })
    }

    pub fn roots(&self) -> &Children {
        &self.roots
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Adds one sample along a root-first chain. An empty chain is ignored.
    pub fn ingest<I, S>(&mut self, chain: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.ingest_n(chain, 1);
    }

    /// Adds `n` identical samples along a root-first chain.
    pub fn ingest_n<I, S>(&mut self, chain: I, n: u64)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if n == 0 {
            return;
        }
        let mut level = &mut self.roots;
        let mut touched = false;
        for name in chain {
            let name = name.as_ref();
            if !level.contains_key(name) {
                level.insert(Arc::from(name), CallNode::default());
            }
            let node = level.get_mut(name).expect("just inserted");
            node.count += n;
            level = &mut node.children;
            touched = true;
        }
        if touched {
            self.total_samples += n;
        }
    }

    /// Adds every node count of `other` into `self`.
    pub fn merge_from(&mut self, other: &CallTree) {
        for (name, theirs) in &other.roots {
            match self.roots.get_mut(name) {
                Some(ours) => ours.merge_from(theirs),
                None => {
                    self.roots.insert(Arc::clone(name), theirs.clone());
                }
            }
        }
        self.total_samples += other.total_samples;
    }

    /// Node at a root-first path of names.
    pub fn node<S: AsRef<str>>(&self, path: &[S]) -> Option<&CallNode> {
        let (first, rest) = path.split_first()?;
        let mut node = self.roots.get(first.as_ref())?;
        for name in rest {
            node = node.children.get(name.as_ref())?;
        }
        Some(node)
    }

    /// Visits every node depth-first (children in name order) with its
    /// root-first path.
    pub fn walk<'a>(&'a self, mut visit: impl FnMut(&[&'a str], &'a CallNode)) {
        fn go<'a>(
            name: &'a str,
            node: &'a CallNode,
            path: &mut Vec<&'a str>,
            visit: &mut dyn FnMut(&[&'a str], &'a CallNode),
        ) {
            path.push(name);
            visit(path, node);
            for (child_name, child) in &node.children {
                go(child_name, child, path, visit);
            }
            path.pop();
        }
        let mut path = Vec::new();
        for (name, node) in &self.roots {
            go(name, node, &mut path, &mut visit);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(|_, _| n += 1);
        n
    }
}

/// Reverses a leaf-first chain into root-first order.
pub fn reverse_chain<T: Clone>(chain: &[T]) -> Result<Vec<T>, CallTreeError> {
    if chain.is_empty() {
        return Err(CallTreeError::EmptyChain);
    }
    Ok(chain.iter().rev().cloned().collect())
}

/// Node-wise sum of two trees.
pub fn merge(a: &CallTree, b: &CallTree) -> CallTree {
    let mut out = a.clone();
    out.merge_from(b);
    out
}

/// Percentage of `total_samples` represented by `count`.
pub fn share(count: u64, total_samples: u64) -> Result<f64, CallTreeError> {
    if total_samples == 0 {
        return Err(CallTreeError::ZeroTotal);
    }
    Ok(100.0 * count as f64 / total_samples as f64)
}
