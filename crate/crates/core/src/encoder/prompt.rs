use std::path::Path;

use super::context::{render_context, ColumnContext};
use super::EncoderError;

const BUILTIN: &str = include_str!("../../resources/prompt_template_v1.txt");
const QUERY_SLOT: &str = "{q}";
const CONTEXT_SLOT: &str = "{context(c)}";

/// The relevance prompt with `{q}` and `{context(c)}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { text: BUILTIN.to_string() }
    }
}

impl PromptTemplate {
    pub fn builtin() -> Self {
        Self::default()
    }

    pub fn from_text(text: impl Into<String>) -> Result<Self, EncoderError> {
        let text = text.into();
        if !text.contains(QUERY_SLOT) || !text.contains(CONTEXT_SLOT) {
            return Err(EncoderError::Template(format!("template must contain {QUERY_SLOT} and {CONTEXT_SLOT}")));
        }
        Ok(Self { text })
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EncoderError::Template(format!("{}: {e}", path.display())))?;
        Self::from_text(text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Fills both slots in one left-to-right pass, so slot-like text inside the
    /// query or context is never substituted again.
    pub fn render(&self, query: &str, context: &ColumnContext) -> String {
        let ctx = render_context(context);
        let mut out = String::with_capacity(self.text.len() + query.len() + ctx.len());
        let mut rest = self.text.as_str();
        loop {
            let q = rest.find(QUERY_SLOT);
            let c = rest.find(CONTEXT_SLOT);
            let (at, slot, value) = match (q, c) {
                (Some(q), Some(c)) if q < c => (q, QUERY_SLOT, query),
                (Some(q), None) => (q, QUERY_SLOT, query),
                (_, Some(c)) => (c, CONTEXT_SLOT, ctx.as_str()),
                (None, None) => break,
            };
            out.push_str(&rest[..at]);
            out.push_str(value);
            rest = &rest[at + slot.len()..];
        }
        out.push_str(rest);
        out
    }
}

pub fn render_prompt(query: &str, context: &ColumnContext) -> String {
    PromptTemplate::builtin().render(query, context)
}
