//! `callstack.json` reading and writing.
//!
//! The top level maps root names to nodes. A node is an object with an
//! integer `count` followed by one member per child. A function literally
//! named `count` is written as `count#fn`; `count#fn` becomes `count#fn#fn`,
//! and so on, so the escape is reversible.

use std::fmt::Write;
use std::sync::Arc;

use serde_json::{Map, Value};

use super::{json_path, CallNode, CallTree, CallTreeError, Children};

const COUNT_KEY: &str = "count";
const ESCAPE_SUFFIX: &str = "#fn";

fn needs_escape(name: &str) -> bool {
    let mut rest = name;
    while let Some(stripped) = rest.strip_suffix(ESCAPE_SUFFIX) {
        rest = stripped;
    }
    rest == COUNT_KEY
}

fn escape(name: &str) -> std::borrow::Cow<'_, str> {
    if needs_escape(name) {
        format!("{name}{ESCAPE_SUFFIX}").into()
    } else {
        name.into()
    }
}

fn unescape(key: &str) -> &str {
    match key.strip_suffix(ESCAPE_SUFFIX) {
        Some(inner) if needs_escape(inner) => inner,
        _ => key,
    }
}

fn push_key(out: &mut String, key: &str) {
    // serde_json string escaping cannot fail for &str.
    out.push_str(&serde_json::to_string(key).expect("string serialization"));
}

fn write_node(out: &mut String, node: &CallNode) {
    write!(out, "{{\"{COUNT_KEY}\": {}", node.count).expect("write to String");
    for (name, child) in &node.children {
        out.push_str(", ");
        push_key(out, &escape(name));
        out.push_str(": ");
        write_node(out, child);
    }
    out.push('}');
}

/// Renders a tree as `callstack.json`. Output is deterministic: `count`
/// first, then children in name order, `", "` and `": "` separators, no
/// trailing newline.
pub fn serialize(tree: &CallTree) -> String {
    let mut out = String::from("{");
    for (i, (name, node)) in tree.roots.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_key(&mut out, &escape(name));
        out.push_str(": ");
        write_node(&mut out, node);
    }
    out.push('}');
    out
}

/// Parses and validates `callstack.json` text.
pub fn deserialize(text: &str) -> Result<CallTree, CallTreeError> {
    let mut de = serde_json::Deserializer::from_str(text);
    // Nesting depth equals stack depth, which is bounded by the sampler.
    de.disable_recursion_limit();
    let value: Value =
        serde::Deserialize::deserialize(&mut de).map_err(|e| CallTreeError::Json(e.to_string()))?;
    de.end().map_err(|e| CallTreeError::Json(e.to_string()))?;

    let Value::Object(top) = value else {
        return Err(schema("/", "top level must be an object"));
    };
    let mut path: Vec<Arc<str>> = Vec::new();
    let roots = read_children(top, &mut path)?;
    CallTree::from_roots(roots)
}

fn schema(path: &str, reason: &str) -> CallTreeError {
    CallTreeError::SchemaViolation {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

fn read_children(
    members: Map<String, Value>,
    path: &mut Vec<Arc<str>>,
) -> Result<Children, CallTreeError> {
    let mut children = Children::new();
    for (key, value) in members {
        let name: Arc<str> = Arc::from(unescape(&key));
        path.push(Arc::clone(&name));
        let node = read_node(value, path)?;
        path.pop();
        children.insert(name, node);
    }
    Ok(children)
}

fn read_node(value: Value, path: &mut Vec<Arc<str>>) -> Result<CallNode, CallTreeError> {
    let Value::Object(mut members) = value else {
        return Err(schema(&json_path(path), "node must be an object"));
    };
    let count = match members.remove(COUNT_KEY) {
        None => return Err(schema(&json_path(path), "missing \"count\"")),
        Some(Value::Number(n)) => match n.as_u64() {
            Some(c) => c,
            None if n.as_i64().is_some() => {
                return Err(schema(&json_path(path), "negative count"))
            }
            None => return Err(schema(&json_path(path), "count must be an integer")),
        },
        Some(_) => return Err(schema(&json_path(path), "count must be an integer")),
    };
    if count == 0 {
        return Err(schema(&json_path(path), "count must be at least 1"));
    }
    let children = read_children(members, path)?;
    let node = CallNode { count, children };
    if node.children_total() > count {
        return Err(schema(
            &json_path(path),
            "children counts exceed parent count",
        ));
    }
    Ok(node)
}
