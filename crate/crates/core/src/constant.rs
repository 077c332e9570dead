//! Constants: database values and labeled nulls.
//!
//! The derived ordering is the one every chase step relies on: all domain
//! constants precede all fresh constants, domain constants compare byte-wise
//! by name and fresh constants compare by creation index.

use std::fmt;
use std::sync::Arc;

/// A value occurring in a fact.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constant {
    /// A constant of the database domain.
    Domain(Arc<str>),
    /// A labeled null created by the inclusion dependency rule, rendered `_f<k>`.
    Fresh(u64),
}

impl Constant {
    pub fn domain(name: impl AsRef<str>) -> Self {
        Constant::Domain(Arc::from(name.as_ref()))
    }

    pub fn is_fresh(&self) -> bool {
        matches!(self, Constant::Fresh(_))
    }

    pub fn is_domain(&self) -> bool {
        matches!(self, Constant::Domain(_))
    }

    /// Name of a domain constant, `None` for fresh ones.
    pub fn name(&self) -> Option<&str> {
        match self {
            Constant::Domain(name) => Some(name),
            Constant::Fresh(_) => None,
        }
    }

    /// External rendering without DSL quoting: the bare name, or `_f<k>`.
    pub fn label(&self) -> String {
        match self {
            Constant::Domain(name) => name.to_string(),
            Constant::Fresh(k) => format!("_f{k}"),
        }
    }
}

/// Byte-wise comparison for domain constants, index order for fresh ones,
/// and every domain constant before every fresh constant.
pub fn compare_constants(a: &Constant, b: &Constant) -> std::cmp::Ordering {
    a.cmp(b)
}

/// True if `name` may be written without quotes in any of the text formats.
pub(crate) fn is_bare_constant(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_ident_char)
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// Names reserved for labeled nulls (`_f<k>`) and frozen query variables
/// (`_frz<k>`). Input files may not use them.
pub fn is_reserved_name(name: &str) -> bool {
    let digits = |rest: &str| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit());
    name.strip_prefix("_frz").is_some_and(digits) || name.strip_prefix("_f").is_some_and(digits)
}

impl fmt::Display for Constant {
    /// DSL rendering: bare when possible, double-quoted otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Domain(name) if is_bare_constant(name) => f.write_str(name),
            Constant::Domain(name) => {
                f.write_str("\"")?;
                for c in name.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Constant::Fresh(k) => write!(f, "_f{k}"),
        }
    }
}
