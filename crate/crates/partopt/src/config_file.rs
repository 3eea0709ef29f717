//! TOML configuration files.
//!
//! ```toml
//! name = "pinned_angle"
//! vars = ["x", "y", "z"]      # optional; defaults to x, y, z, w, u or x1..xk
//! dims = [2, 2, 2]            # or `d = 2` with the variable count taken from `vars` or `k`
//! components = [
//!   "div(norm(sub(x, z)), norm(sub(x, y)))",
//! ]
//! p = 1                       # optional consistency check
//! guard = 1e-9                # optional domain guard
//! ```
//!
//! Errors carry the file line and column, including errors inside a
//! component expression.

use std::fmt;
use std::path::Path;

use partopt_core::expr::default_var_names;
use partopt_core::expr::parse::{line_column, parse_component};
use partopt_core::ConfigSpec;
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    vars: Option<Vec<String>>,
    dims: Option<Vec<usize>>,
    d: Option<usize>,
    k: Option<usize>,
    p: Option<usize>,
    guard: Option<f64>,
    components: Spanned<Vec<Spanned<String>>>,
}

/// A configuration file error at a 1-based line and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFileError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path, self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigFileError {}

pub fn load(path: &Path) -> anyhow::Result<ConfigSpec> {
    let src = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("config");
    Ok(parse_str(&src, &path.display().to_string(), stem)?)
}

/// Parses file contents. `label` names the source in errors; `default_name`
/// is used when the file has no `name`.
pub fn parse_str(src: &str, label: &str, default_name: &str) -> Result<ConfigSpec, ConfigFileError> {
    let err_at = |offset: usize, message: String| {
        let (line, column) = line_column(src, offset);
        ConfigFileError {
            path: label.to_string(),
            line,
            column,
            message,
        }
    };
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        err_at(offset, e.message().trim().to_string())
    })?;
    let comp_span = raw.components.span().start;

    let k = match (&raw.dims, &raw.vars, raw.k) {
        (Some(dims), _, _) => dims.len(),
        (None, Some(v), _) => v.len(),
        (None, None, Some(k)) => k,
        (None, None, None) => return Err(err_at(0, "need `dims`, or `d` with `vars` or `k`".into())),
    };
    let dims = match (raw.dims, raw.d) {
        (Some(_), Some(_)) => return Err(err_at(0, "give either `dims` or `d`, not both".into())),
        (Some(dims), None) => dims,
        (None, Some(d)) => vec![d; k],
        (None, None) => return Err(err_at(0, "need `dims` or `d`".into())),
    };
    if raw.k.is_some_and(|rk| rk != dims.len()) {
        return Err(err_at(0, format!("`k` does not match the {} dimensions", dims.len())));
    }
    let names = raw.vars.unwrap_or_else(|| default_var_names(dims.len()));
    if names.len() != dims.len() {
        return Err(err_at(0, format!("{} variable names for {} dimensions", names.len(), dims.len())));
    }

    let mut components = Vec::new();
    for c in raw.components.into_inner() {
        let span = c.span();
        // skip the opening quote(s) so offsets land inside the string
        let open = if src[span.start..].starts_with("\"\"\"") || src[span.start..].starts_with("'''") {
            3
        } else {
            1
        };
        let body = c.into_inner();
        let node = parse_component(&body, &names, &dims)
            .map_err(|e| err_at(span.start + open + e.offset, e.message.clone()))?;
        components.push(node);
    }
    if components.is_empty() {
        return Err(err_at(comp_span, "need at least one component".into()));
    }
    if raw.p.is_some_and(|p| p != components.len()) {
        return Err(err_at(comp_span, format!("`p` does not match the {} components", components.len())));
    }
    let name = raw.name.unwrap_or_else(|| default_name.to_string());
    let spec = ConfigSpec::with_names(name, names, dims, components).map_err(|e| err_at(0, e.to_string()))?;
    Ok(match raw.guard {
        Some(g) if g >= 0.0 && g.is_finite() => spec.with_guard(g),
        Some(g) => return Err(err_at(0, format!("guard must be finite and nonnegative, got {g}"))),
        None => spec,
    })
}
