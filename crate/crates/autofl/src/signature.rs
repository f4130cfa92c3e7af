//! Method signatures and their canonical text form.
//!
//! The canonical rendering is `ClassName.MethodName(ArgType1, ArgType2, ...)`:
//! a single `, ` between argument types and no other whitespace. Everything
//! that crosses the LLM boundary (prompts, tool responses, answer parsing)
//! uses this form, so parsing the canonical rendering must round-trip.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identity of a method: class, name, and ordered argument type names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodSignature {
    /// Dotted class identifier, e.g. `EqualsBuilder` or `org.example.Outer.Inner`.
    pub class_name: String,
    /// Bare method name.
    pub method_name: String,
    /// Argument type names in declaration order; empty for nullary methods.
    pub arg_types: Vec<String>,
}

impl MethodSignature {
    pub fn new(
        class_name: impl Into<String>,
        method_name: impl Into<String>,
        arg_types: Vec<String>,
    ) -> Self {
        Self {
            class_name: class_name.into(),
            method_name: method_name.into(),
            arg_types,
        }
    }

    /// Renders `ClassName.MethodName(ArgType1, ArgType2, ...)`.
    pub fn canonical(&self) -> String {
        format!(
            "{}.{}({})",
            self.class_name,
            self.method_name,
            self.arg_types.join(", ")
        )
    }

    /// Parses a canonical rendering back into a signature.
    ///
    /// Returns `None` when the text is not of the canonical shape (no dot
    /// before the method name, missing parentheses, or trailing garbage).
    pub fn parse_canonical(text: &str) -> Option<Self> {
        let query = SignatureQuery::parse(text)?;
        let class_name = query.class_name?;
        let arg_types = query.arg_types?;
        Some(Self::new(class_name, query.method_name, arg_types))
    }

    /// Strips any dotted qualifier from the class segment, keeping the last
    /// component. Used when a snapshot declares simple-name mode.
    pub fn with_simple_class_name(mut self) -> Self {
        if let Some(last) = self.class_name.rsplit('.').next() {
            self.class_name = last.to_string();
        }
        self
    }
}

impl fmt::Display for MethodSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// A partially specified signature as it appears in free-form queries:
/// `Class.method(args)`, `Class.method`, `method(args)`, or a bare `method`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureQuery {
    pub class_name: Option<String>,
    pub method_name: String,
    /// `None` when the query omits the parenthesized argument list.
    pub arg_types: Option<Vec<String>>,
}

impl SignatureQuery {
    /// Parses a query string, tolerating surrounding whitespace and missing
    /// parts. Returns `None` for empty or structurally hopeless input
    /// (unbalanced parentheses, empty method name).
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        let (name_part, arg_types) = match text.find('(') {
            Some(open) => {
                let rest = &text[open..];
                if !rest.ends_with(')') {
                    return None;
                }
                let inner = &rest[1..rest.len() - 1];
                (&text[..open], Some(split_arg_types(inner)))
            }
            None => (text, None),
        };
        let name_part = name_part.trim();
        let (class_name, method_name) = match name_part.rfind('.') {
            Some(dot) => (
                Some(name_part[..dot].trim().to_string()),
                name_part[dot + 1..].trim().to_string(),
            ),
            None => (None, name_part.to_string()),
        };
        if method_name.is_empty() {
            return None;
        }
        if let Some(class) = &class_name {
            if class.is_empty() {
                return None;
            }
        }
        Some(Self {
            class_name,
            method_name,
            arg_types,
        })
    }

    /// True when the query carries class, method, and argument list, i.e.
    /// could match at the exact level of the resolution cascade.
    pub fn is_fully_specified(&self) -> bool {
        self.class_name.is_some() && self.arg_types.is_some()
    }
}

/// Splits an argument-type list on commas at nesting depth zero, so generic
/// types like `Map<String, List<Integer>>` stay intact.
fn split_arg_types(inner: &str) -> Vec<String> {
    let inner = inner.trim();
    if inner.is_empty() {
        return Vec::new();
    }
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '<' | '(' | '[' => depth += 1,
            '>' | ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(inner[start..i].trim().to_string());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(inner[start..].trim().to_string());
    parts
}
