//! Strict config loading: every violation is reported, not just the first.

use serde_json::{Map, Value};

/// A config that failed validation, one message per violation.
#[derive(Debug)]
pub struct Invalid(pub Vec<String>);

/// Line of the first `"key"` in the source text, if any.
fn line_of(text: Option<&str>, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text?.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn at(text: Option<&str>, key: &str, msg: String) -> String {
    match line_of(text, key) {
        Some(l) => format!("line {l}: {msg}"),
        None => msg,
    }
}

fn unknown_keys(user: &Map<String, Value>, default: &Map<String, Value>, path: &str, out: &mut Vec<String>, text: Option<&str>) {
    for (k, v) in user {
        let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match default.get(k) {
            None => {
                let mut known: Vec<&str> = default.keys().map(String::as_str).collect();
                known.sort_unstable();
                out.push(at(text, k, format!("unknown field `{p}`; expected one of {}", known.join(", "))));
            }
            Some(Value::Object(d)) => {
                if let Value::Object(u) = v {
                    unknown_keys(u, d, &p, out, text);
                }
            }
            Some(_) => {}
        }
    }
}

/// Checks `user` against the defaults of a command. `resolve` turns a full
/// config into its typed form and back; it is tried once per top-level field
/// so that type errors in different fields are all reported.
pub fn validate<F>(user: &Value, default: &Value, text: Option<&str>, resolve: F) -> Result<Value, Invalid>
where
    F: Fn(Value) -> Result<Value, String>,
{
    let (Value::Object(u), Value::Object(d)) = (user, default) else {
        return Err(Invalid(vec!["config must be a JSON object".into()]));
    };
    let mut out = Vec::new();
    unknown_keys(u, d, "", &mut out, text);
    for (k, v) in u {
        if !d.contains_key(k) || out.iter().any(|m| m.contains(&format!("`{k}."))) {
            continue;
        }
        let mut probe = d.clone();
        probe.insert(k.clone(), v.clone());
        if let Err(e) = resolve(Value::Object(probe)) {
            out.push(at(text, k, format!("field `{k}`: {e}")));
        }
    }
    if !out.is_empty() {
        return Err(Invalid(out));
    }
    resolve(user.clone()).map_err(|e| Invalid(vec![e]))
}

/// Parses config text, reporting syntax errors with their position.
pub fn parse_text(text: &str) -> Result<Value, Invalid> {
    serde_json::from_str(text).map_err(|e| Invalid(vec![format!("line {} column {}: {e}", e.line(), e.column())]))
}

/// Every `*seed*` entry of a config, by path.
pub fn seeds(v: &Value) -> Map<String, Value> {
    fn walk(v: &Value, path: &str, out: &mut Map<String, Value>) {
        if let Value::Object(m) = v {
            for (k, x) in m {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if k.contains("seed") && !x.is_object() {
                    out.insert(p, x.clone());
                } else {
                    walk(x, &p, out);
                }
            }
        }
    }
    let mut out = Map::new();
    walk(v, "", &mut out);
    out
}
