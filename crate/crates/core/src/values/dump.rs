use std::path::Path;

use super::ValueError;
use crate::schema::ColumnRef;

/// Parses a value dump: one `table<TAB>column<TAB>value` row per line.
///
/// Blank lines are skipped. In the value field `\t`, `\n` and `\\` are unescaped.
pub fn parse_value_dump(text: &str, origin: &str) -> Result<Vec<(ColumnRef, String)>, ValueError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(table), Some(column), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ValueError::Dump {
                origin: origin.to_string(),
                line: i + 1,
                message: "expected three tab-separated fields".into(),
            });
        };
        if table.is_empty() || column.is_empty() {
            return Err(ValueError::Dump {
                origin: origin.to_string(),
                line: i + 1,
                message: "empty table or column name".into(),
            });
        }
        rows.push((ColumnRef::new(table, column), unescape(value)));
    }
    Ok(rows)
}

pub fn read_value_dump(path: &Path) -> Result<Vec<(ColumnRef, String)>, ValueError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ValueError::Io(origin.clone(), e))?;
    parse_value_dump(&text, &origin)
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}
