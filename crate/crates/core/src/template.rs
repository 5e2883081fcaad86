//! Minimal `{{name}}` placeholder templates.
//!
//! A template file is UTF-8 text. If it contains a line that is exactly
//! `---`, everything before that line is the system message and everything
//! after is the body; otherwise the whole file is the body and the system
//! message is empty. Placeholder names are lowercase `[a-z0-9_]+`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};

/// A parsed prompt template with its declared placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub system_message: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    /// Parses raw template text, splitting off the system block and
    /// collecting placeholder names from both parts.
    pub fn parse(template_id: &str, raw: &str) -> Self {
        let (system, body) = match split_system_block(raw) {
            Some((s, b)) => (s.trim().to_string(), b.trim_start_matches('\n').to_string()),
            None => (String::new(), raw.to_string()),
        };
        let mut required = BTreeSet::new();
        collect_placeholders(&system, &mut required);
        collect_placeholders(&body, &mut required);
        Self {
            template_id: template_id.to_string(),
            system_message: system,
            body,
            required_placeholders: required,
        }
    }

    /// Substitutes every placeholder in the body; all placeholders must be
    /// bound.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        substitute(&self.body, bindings).map_err(|name| TemplateError::Unbound {
            template_id: self.template_id.clone(),
            name,
        })
    }

    /// Substitutes placeholders in the system message.
    pub fn render_system(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        substitute(&self.system_message, bindings).map_err(|name| TemplateError::Unbound {
            template_id: self.template_id.clone(),
            name,
        })
    }
}

fn split_system_block(raw: &str) -> Option<(&str, &str)> {
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if line.trim_end_matches(['\r', '\n']) == "---" {
            return Some((&raw[..offset], &raw[offset + line.len()..]));
        }
        offset += line.len();
    }
    None
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'
}

/// Finds the next `{{name}}` marker at or after `from`.
fn next_placeholder(text: &str, from: usize) -> Option<(usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i + 3 < bytes.len() {
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            let start = i + 2;
            let mut end = start;
            while end < bytes.len() && is_name_byte(bytes[end]) {
                end += 1;
            }
            if end > start && end + 1 < bytes.len() && bytes[end] == b'}' && bytes[end + 1] == b'}' {
                return Some((i, end + 2, &text[start..end]));
            }
        }
        i += 1;
    }
    None
}

fn collect_placeholders(text: &str, out: &mut BTreeSet<String>) {
    let mut pos = 0;
    while let Some((start, end, name)) = next_placeholder(text, pos) {
        out.insert(name.to_string());
        let _ = start;
        pos = end;
    }
}

fn substitute(text: &str, bindings: &BTreeMap<&str, String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    while let Some((start, end, name)) = next_placeholder(text, pos) {
        out.push_str(&text[pos..start]);
        match bindings.get(name) {
            Some(value) => out.push_str(value),
            None => return Err(name.to_string()),
        }
        pos = end;
    }
    out.push_str(&text[pos..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template_id}: placeholder {{{{{name}}}}} is not bound")]
    Unbound { template_id: String, name: String },
    #[error("unknown template id {0}")]
    UnknownTemplate(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn bind<'a>(pairs: &[(&'a str, &str)]) -> BTreeMap<&'a str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn splits_system_block() {
        let t = PromptTemplate::parse("t", "You are an expert.\n---\nHello {{name}}.");
        assert_eq!(t.system_message, "You are an expert.");
        assert_eq!(t.body, "Hello {{name}}.");
        assert_eq!(
            t.required_placeholders.iter().collect::<Vec<_>>(),
            ["name"]
        );
    }

    #[test]
    fn no_separator_means_empty_system() {
        let t = PromptTemplate::parse("t", "just a body with {{x}} and {{y}}");
        assert_eq!(t.system_message, "");
        assert_eq!(t.required_placeholders.len(), 2);
    }

    #[test]
    fn renders_all_placeholders() {
        let t = PromptTemplate::parse("t", "A {{x}} B {{y}} C {{x}}");
        let out = t.render(&bind(&[("x", "1"), ("y", "2")])).unwrap();
        assert_eq!(out, "A 1 B 2 C 1");
        assert!(!out.contains("{{"));
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let t = PromptTemplate::parse("t", "A {{x}}");
        let err = t.render(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TemplateError::Unbound { name, .. } if name == "x"));
    }

    #[test]
    fn malformed_markers_pass_through() {
        let t = PromptTemplate::parse("t", "{ {x}} {{X}} {{}} {{ok}}");
        assert_eq!(t.required_placeholders.iter().collect::<Vec<_>>(), ["ok"]);
        let out = t.render(&bind(&[("ok", "v")])).unwrap();
        assert_eq!(out, "{ {x}} {{X}} {{}} v");
    }
}
