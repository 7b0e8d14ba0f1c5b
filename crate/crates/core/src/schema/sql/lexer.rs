use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// Bare word; keywords are recognised by the parser.
    Word(String),
    /// Backtick or bracket quoted identifier.
    QuotedIdent(String),
    /// Double-quoted text: an identifier when it resolves, otherwise a string.
    DoubleQuoted(String),
    Str(String),
    Number(String),
    Symbol(&'static str),
    /// `?`, `:name`, `@name`, `$1`.
    Param,
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

const SYMBOLS: [&str; 22] = [
    "<>", "!=", "<=", ">=", "||", "==", "::", "(", ")", ",", ".", ";", "*", "+", "-", "/", "%", "=", "<", ">", "~", "&",
];

fn quoted(chars: &[(usize, char)], start: usize, close: char) -> Result<(String, usize), SqlError> {
    let mut out = String::new();
    let mut i = start + 1;
    while i < chars.len() {
        let c = chars[i].1;
        if c == close {
            if i + 1 < chars.len() && chars[i + 1].1 == close && close != ']' {
                out.push(close);
                i += 2;
                continue;
            }
            return Ok((out, i + 1));
        }
        if c == '\\' && close == '\'' && i + 1 < chars.len() {
            out.push(chars[i + 1].1);
            i += 2;
            continue;
        }
        out.push(c);
        i += 1;
    }
    Err(SqlError::Syntax { offset: chars[start].0, message: format!("unterminated {close}-quoted text") })
}

/// Splits SQL text into tokens. Comments are dropped.
pub fn tokenize(sql: &str) -> Result<Vec<Spanned>, SqlError> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).map(|p| p.1);
        if c == '-' && next == Some('-') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i].1 == '*' && chars.get(i + 1).map(|p| p.1) == Some('/')) {
                i += 1;
            }
            if i >= chars.len() {
                return Err(SqlError::Syntax { offset, message: "unterminated block comment".into() });
            }
            i += 2;
            continue;
        }
        let token = match c {
            '\'' => {
                let (s, end) = quoted(&chars, i, '\'')?;
                i = end;
                Token::Str(s)
            }
            '"' => {
                let (s, end) = quoted(&chars, i, '"')?;
                i = end;
                Token::DoubleQuoted(s)
            }
            '`' => {
                let (s, end) = quoted(&chars, i, '`')?;
                i = end;
                Token::QuotedIdent(s)
            }
            '[' => {
                let (s, end) = quoted(&chars, i, ']')?;
                i = end;
                Token::QuotedIdent(s)
            }
            '?' => {
                i += 1;
                Token::Param
            }
            ':' | '@' | '$' if next.is_some_and(|n| n.is_alphanumeric() || n == '_') => {
                i += 1;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                Token::Param
            }
            c if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) => {
                let start = i;
                let mut seen_exp = false;
                while i < chars.len() {
                    let ch = chars[i].1;
                    if ch.is_ascii_digit() || ch == '.' {
                        i += 1;
                    } else if (ch == 'e' || ch == 'E') && !seen_exp {
                        seen_exp = true;
                        i += 1;
                        if i < chars.len() && (chars[i].1 == '+' || chars[i].1 == '-') {
                            i += 1;
                        }
                    } else {
                        break;
                    }
                }
                Token::Number(chars[start..i].iter().map(|p| p.1).collect())
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_' || chars[i].1 == '$') {
                    i += 1;
                }
                Token::Word(chars[start..i].iter().map(|p| p.1).collect())
            }
            _ => {
                let rest = &sql[offset..];
                match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                    Some(sym) => {
                        i += sym.chars().count();
                        Token::Symbol(sym)
                    }
                    None => return Err(SqlError::Syntax { offset, message: format!("unexpected character `{c}`") }),
                }
            }
        };
        out.push(Spanned { token, offset });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(sql: &str) -> Vec<Token> {
        tokenize(sql).unwrap().into_iter().map(|t| t.token).collect()
    }

    #[test]
    fn strings_comments_and_symbols() {
        let toks = kinds("SELECT a -- note\n FROM t /* x */ WHERE b <> 'it''s' AND c >= 1.5e3");
        assert_eq!(
            toks,
            vec![
                Token::Word("SELECT".into()),
                Token::Word("a".into()),
                Token::Word("FROM".into()),
                Token::Word("t".into()),
                Token::Word("WHERE".into()),
                Token::Word("b".into()),
                Token::Symbol("<>"),
                Token::Str("it's".into()),
                Token::Word("AND".into()),
                Token::Word("c".into()),
                Token::Symbol(">="),
                Token::Number("1.5e3".into()),
            ]
        );
    }

    #[test]
    fn quoted_identifiers() {
        let toks = kinds("`my col` [other] \"dq\"");
        assert_eq!(
            toks,
            vec![Token::QuotedIdent("my col".into()), Token::QuotedIdent("other".into()), Token::DoubleQuoted("dq".into())]
        );
    }

    #[test]
    fn unterminated_string_is_an_error() {
        assert!(matches!(tokenize("SELECT 'abc"), Err(SqlError::Syntax { .. })));
    }
}
