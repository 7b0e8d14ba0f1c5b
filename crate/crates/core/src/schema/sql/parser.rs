//! Recursive-descent parser for the SELECT subset used by benchmark gold queries.
//!
//! The tree only keeps what column extraction needs: column references,
//! scopes (FROM items, aliases) and nested queries. Operators are flattened
//! into [`Expr::Compound`].

use super::lexer::{tokenize, Spanned, Token};
use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub body: SetExpr,
    pub order_by: Vec<Expr>,
    pub limit: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetExpr {
    Select(Box<Select>),
    Nested(Box<Query>),
    SetOp(Box<SetExpr>, Box<SetExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(String),
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromItem {
    pub base: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { name: String, alias: Option<String> },
    Derived { query: Box<Query>, alias: Option<String> },
    Nested(Box<FromItem>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub factor: TableFactor,
    pub constraint: JoinConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinConstraint {
    On(Expr),
    Using(Vec<String>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column { qualifier: Option<String>, name: String },
    /// `"text"`: a column if one resolves, otherwise a string literal (SQLite rule).
    DoubleQuoted(String),
    Literal,
    /// `*` inside an aggregate such as `COUNT(*)`.
    Star,
    Compound(Vec<Expr>),
    Subquery(Box<Query>),
}

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "order", "by", "having", "limit", "offset", "union", "intersect", "except",
    "minus", "join", "inner", "left", "right", "full", "outer", "cross", "natural", "on", "using", "as", "and", "or",
    "not", "in", "is", "like", "glob", "between", "case", "when", "then", "else", "end", "distinct", "all", "with",
    "exists", "asc", "desc", "over", "window", "qualify", "escape", "collate", "regexp", "ilike", "nulls", "lateral",
    "pivot", "unpivot", "values", "returning", "into",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word.to_ascii_lowercase().as_str())
}

pub fn parse_statement(sql: &str) -> Result<Query, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0, end: sql.len() };
    let query = p.query()?;
    while p.eat_symbol(";") {}
    if let Some(tok) = p.peek() {
        return Err(match tok {
            Token::Word(w) if w.eq_ignore_ascii_case("select") || w.eq_ignore_ascii_case("with") => {
                SqlError::Unsupported("multiple statements".into())
            }
            _ => p.error("unexpected trailing input"),
        });
    }
    Ok(query)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.token)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Token> {
        self.tokens.get(self.pos + ahead).map(|t| &t.token)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn error(&self, message: &str) -> SqlError {
        let found = match self.peek() {
            Some(t) => format!("{t:?}"),
            None => "end of input".into(),
        };
        SqlError::Syntax { offset: self.offset(), message: format!("{message} (found {found})") }
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.token.clone());
        self.pos += 1;
        t
    }

    fn is_kw_at(&self, ahead: usize, kw: &str) -> bool {
        matches!(self.peek_at(ahead), Some(Token::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.is_kw_at(0, kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {}", kw.to_uppercase())))
        }
    }

    fn is_symbol(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token::Symbol(s)) if *s == sym)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        if self.is_symbol(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_symbol(&mut self, sym: &str) -> Result<(), SqlError> {
        if self.eat_symbol(sym) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{sym}`")))
        }
    }

    fn starts_query(&self) -> bool {
        self.is_kw("select") || self.is_kw("with")
    }

    /// Identifier in a name position (table, alias, qualifier).
    fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek().cloned() {
            Some(Token::Word(w)) if !is_reserved(&w) => {
                self.pos += 1;
                Ok(w)
            }
            Some(Token::QuotedIdent(w)) | Some(Token::DoubleQuoted(w)) => {
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_kw("as") {
            return match self.peek().cloned() {
                Some(Token::Str(s)) => {
                    self.pos += 1;
                    Ok(Some(s))
                }
                _ => self.ident().map(Some),
            };
        }
        match self.peek() {
            Some(Token::Word(w)) if !is_reserved(w) => self.ident().map(Some),
            Some(Token::QuotedIdent(_)) | Some(Token::DoubleQuoted(_)) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        if self.is_kw("with") {
            return Err(SqlError::Unsupported("common table expressions (WITH)".into()));
        }
        let body = self.set_expr()?;
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                order_by.push(self.expr()?);
                let _ = self.eat_kw("asc") || self.eat_kw("desc");
                if self.eat_kw("nulls") {
                    let _ = self.eat_kw("first") || self.eat_kw("last");
                }
                if !self.eat_symbol(",") {
                    break;
                }
            }
        }
        let mut limit = Vec::new();
        if self.eat_kw("limit") {
            limit.push(self.expr()?);
            if self.eat_symbol(",") || self.eat_kw("offset") {
                limit.push(self.expr()?);
            }
        } else if self.eat_kw("offset") {
            limit.push(self.expr()?);
        }
        if self.is_kw("fetch") {
            return Err(SqlError::Unsupported("FETCH clause".into()));
        }
        Ok(Query { body, order_by, limit })
    }

    fn set_expr(&mut self) -> Result<SetExpr, SqlError> {
        let mut left = self.set_operand()?;
        loop {
            if self.eat_kw("union") || self.eat_kw("intersect") || self.eat_kw("except") || self.eat_kw("minus") {
                let _ = self.eat_kw("all") || self.eat_kw("distinct");
                let right = self.set_operand()?;
                left = SetExpr::SetOp(Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn set_operand(&mut self) -> Result<SetExpr, SqlError> {
        if self.is_symbol("(") {
            self.pos += 1;
            let q = self.query()?;
            self.expect_symbol(")")?;
            return Ok(SetExpr::Nested(Box::new(q)));
        }
        if self.is_kw("values") {
            return Err(SqlError::Unsupported("VALUES lists".into()));
        }
        self.expect_kw("select")?;
        Ok(SetExpr::Select(Box::new(self.select_body()?)))
    }

    fn select_body(&mut self) -> Result<Select, SqlError> {
        let _ = self.eat_kw("distinct") || self.eat_kw("all");
        if self.eat_kw("top") {
            self.operand()?;
        }
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        let mut from = Vec::new();
        if self.eat_kw("from") {
            loop {
                from.push(self.from_item()?);
                if !self.eat_symbol(",") {
                    break;
                }
            }
        }
        let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_symbol(",") {
                    break;
                }
            }
        }
        let having = if self.eat_kw("having") { Some(self.expr()?) } else { None };
        if self.is_kw("window") || self.is_kw("qualify") {
            return Err(SqlError::Unsupported("window functions".into()));
        }
        Ok(Select { items, from, selection, group_by, having })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat_symbol("*") {
            if self.is_kw("except") || self.is_kw("replace") {
                return Err(SqlError::Unsupported("SELECT * EXCEPT/REPLACE".into()));
            }
            return Ok(SelectItem::Wildcard);
        }
        // t.* (possibly with a dotted qualifier)
        let mut ahead = 0;
        loop {
            match (self.peek_at(ahead), self.peek_at(ahead + 1)) {
                (Some(Token::Word(_) | Token::QuotedIdent(_) | Token::DoubleQuoted(_)), Some(Token::Symbol("."))) => {
                    if matches!(self.peek_at(ahead + 2), Some(Token::Symbol("*"))) {
                        let mut parts = Vec::new();
                        while !self.is_symbol("*") {
                            if !self.eat_symbol(".") {
                                parts.push(self.ident()?);
                            }
                        }
                        self.pos += 1;
                        return Ok(SelectItem::QualifiedWildcard(parts.join(".")));
                    }
                    ahead += 2;
                }
                _ => break,
            }
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn table_name(&mut self) -> Result<String, SqlError> {
        let mut name = self.ident()?;
        while self.is_symbol(".") {
            self.pos += 1;
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    fn table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat_kw("lateral") {
            return Err(SqlError::Unsupported("LATERAL".into()));
        }
        if self.is_symbol("(") {
            let is_query = self.is_kw_at(1, "select") || self.is_kw_at(1, "with") || {
                // ((SELECT ...) ...) : look through nested parentheses.
                let mut i = 1;
                while matches!(self.peek_at(i), Some(Token::Symbol("("))) {
                    i += 1;
                }
                self.is_kw_at(i, "select") && i > 1 && !self.paren_holds_join(1)
            };
            self.pos += 1;
            if is_query {
                let query = self.query()?;
                self.expect_symbol(")")?;
                let alias = self.optional_alias()?;
                return Ok(TableFactor::Derived { query: Box::new(query), alias });
            }
            let inner = self.from_item()?;
            self.expect_symbol(")")?;
            return Ok(TableFactor::Nested(Box::new(inner)));
        }
        let name = self.table_name()?;
        if self.is_symbol("(") {
            return Err(SqlError::Unsupported(format!("table-valued function `{name}`")));
        }
        let alias = self.optional_alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    /// Whether the parenthesised group starting at `ahead` contains a JOIN at depth one.
    fn paren_holds_join(&self, ahead: usize) -> bool {
        let mut depth = 1;
        let mut i = ahead;
        while let Some(t) = self.peek_at(i) {
            match t {
                Token::Symbol("(") => depth += 1,
                Token::Symbol(")") => {
                    depth -= 1;
                    if depth == 0 {
                        return false;
                    }
                }
                Token::Word(w) if depth == 1 && w.eq_ignore_ascii_case("join") => return true,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn from_item(&mut self) -> Result<FromItem, SqlError> {
        let base = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            if self.is_kw("natural") {
                return Err(SqlError::Unsupported("NATURAL JOIN".into()));
            }
            let start = self.pos;
            let _ = self.eat_kw("inner")
                || self.eat_kw("cross")
                || ((self.eat_kw("left") || self.eat_kw("right") || self.eat_kw("full")) && {
                    let _ = self.eat_kw("outer");
                    true
                });
            if !self.eat_kw("join") {
                self.pos = start;
                break;
            }
            let factor = self.table_factor()?;
            let constraint = if self.eat_kw("on") {
                JoinConstraint::On(self.expr()?)
            } else if self.eat_kw("using") {
                self.expect_symbol("(")?;
                let mut cols = Vec::new();
                loop {
                    cols.push(self.ident()?);
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                self.expect_symbol(")")?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join { factor, constraint });
        }
        Ok(FromItem { base, joins })
    }

    fn is_binary_symbol(&self) -> bool {
        matches!(
            self.peek(),
            Some(Token::Symbol("=" | "==" | "!=" | "<>" | "<" | ">" | "<=" | ">=" | "||" | "+" | "-" | "*" | "/" | "%" | "&"))
        )
    }

    pub(super) fn expr(&mut self) -> Result<Expr, SqlError> {
        let mut parts = vec![self.operand()?];
        loop {
            if self.is_binary_symbol() {
                self.pos += 1;
                parts.push(self.operand()?);
            } else if self.eat_symbol("::") {
                self.type_name()?;
            } else if self.eat_kw("is") {
                let _ = self.eat_kw("not");
                if self.eat_kw("distinct") {
                    self.expect_kw("from")?;
                }
                parts.push(self.operand()?);
            } else if self.is_kw("not")
                && ["like", "in", "between", "glob", "regexp", "ilike"].iter().any(|k| self.is_kw_at(1, k))
            {
                self.pos += 1;
            } else if self.eat_kw("in") {
                self.expect_symbol("(")?;
                if self.starts_query() {
                    parts.push(Expr::Subquery(Box::new(self.query()?)));
                } else if !self.is_symbol(")") {
                    loop {
                        parts.push(self.expr()?);
                        if !self.eat_symbol(",") {
                            break;
                        }
                    }
                }
                self.expect_symbol(")")?;
            } else if ["and", "or", "like", "glob", "between", "regexp", "ilike", "escape"]
                .iter()
                .any(|k| self.is_kw(k))
            {
                self.pos += 1;
                parts.push(self.operand()?);
            } else if self.eat_kw("collate") {
                self.ident()?;
            } else {
                break;
            }
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Expr::Compound(parts) })
    }

    fn type_name(&mut self) -> Result<(), SqlError> {
        self.ident()?;
        while matches!(self.peek(), Some(Token::Word(w)) if !is_reserved(w)) {
            self.pos += 1;
        }
        if self.eat_symbol("(") {
            while !self.eat_symbol(")") {
                if self.advance().is_none() {
                    return Err(self.error("unterminated type arguments"));
                }
            }
        }
        Ok(())
    }

    fn call_args(&mut self, name: &str) -> Result<Vec<Expr>, SqlError> {
        let mut args = Vec::new();
        if name.eq_ignore_ascii_case("extract") {
            self.ident()?;
            self.expect_kw("from")?;
            args.push(self.expr()?);
            self.expect_symbol(")")?;
            return Ok(args);
        }
        let _ = self.eat_kw("distinct") || self.eat_kw("all");
        if self.eat_symbol("*") {
            args.push(Expr::Star);
        } else if self.starts_query() {
            args.push(Expr::Subquery(Box::new(self.query()?)));
        } else if !self.is_symbol(")") {
            loop {
                args.push(self.expr()?);
                if self.eat_kw("as") {
                    // CAST(x AS type)
                    self.type_name()?;
                }
                if self.eat_kw("order") {
                    self.expect_kw("by")?;
                    args.push(self.expr()?);
                    let _ = self.eat_kw("asc") || self.eat_kw("desc");
                }
                if !self.eat_symbol(",") {
                    break;
                }
            }
        }
        self.expect_symbol(")")?;
        if self.is_kw("over") {
            return Err(SqlError::Unsupported("window functions".into()));
        }
        if self.is_kw("filter") || self.is_kw("within") {
            return Err(SqlError::Unsupported(format!("aggregate modifier after `{name}`")));
        }
        Ok(args)
    }

    fn operand(&mut self) -> Result<Expr, SqlError> {
        let token = self.peek().cloned().ok_or_else(|| self.error("expected expression"))?;
        match token {
            Token::Symbol("-" | "+" | "~") => {
                self.pos += 1;
                Ok(Expr::Compound(vec![self.operand()?]))
            }
            Token::Symbol("(") => {
                self.pos += 1;
                if self.starts_query() {
                    let q = self.query()?;
                    self.expect_symbol(")")?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let mut items = vec![self.expr()?];
                while self.eat_symbol(",") {
                    items.push(self.expr()?);
                }
                self.expect_symbol(")")?;
                Ok(if items.len() == 1 { items.pop().expect("one item") } else { Expr::Compound(items) })
            }
            Token::Symbol("*") => {
                self.pos += 1;
                Ok(Expr::Star)
            }
            Token::Str(_) | Token::Number(_) | Token::Param => {
                self.pos += 1;
                Ok(Expr::Literal)
            }
            Token::DoubleQuoted(s) => {
                if matches!(self.peek_at(1), Some(Token::Symbol("."))) {
                    return self.column_ref();
                }
                self.pos += 1;
                Ok(Expr::DoubleQuoted(s))
            }
            Token::QuotedIdent(_) => self.column_ref(),
            Token::Word(w) => {
                let lw = w.to_ascii_lowercase();
                match lw.as_str() {
                    "null" | "true" | "false" | "current_date" | "current_time" | "current_timestamp" => {
                        self.pos += 1;
                        Ok(Expr::Literal)
                    }
                    "not" => {
                        self.pos += 1;
                        Ok(Expr::Compound(vec![self.operand()?]))
                    }
                    "exists" => {
                        self.pos += 1;
                        self.expect_symbol("(")?;
                        let q = self.query()?;
                        self.expect_symbol(")")?;
                        Ok(Expr::Subquery(Box::new(q)))
                    }
                    "case" => self.case_expr(),
                    "date" | "time" | "timestamp" | "interval" if matches!(self.peek_at(1), Some(Token::Str(_))) => {
                        self.pos += 2;
                        if lw == "interval" {
                            if let Some(Token::Word(unit)) = self.peek() {
                                if !is_reserved(unit) {
                                    self.pos += 1;
                                }
                            }
                        }
                        Ok(Expr::Literal)
                    }
                    "interval" => {
                        self.pos += 1;
                        let e = self.operand()?;
                        self.ident()?;
                        Ok(e)
                    }
                    _ if is_reserved(&w) => Err(self.error("unexpected keyword")),
                    _ => {
                        if matches!(self.peek_at(1), Some(Token::Symbol("("))) {
                            self.pos += 2;
                            return Ok(Expr::Compound(self.call_args(&w)?));
                        }
                        self.column_ref()
                    }
                }
            }
            _ => Err(self.error("expected expression")),
        }
    }

    fn case_expr(&mut self) -> Result<Expr, SqlError> {
        self.expect_kw("case")?;
        let mut parts = Vec::new();
        if !self.is_kw("when") {
            parts.push(self.expr()?);
        }
        while self.eat_kw("when") {
            parts.push(self.expr()?);
            self.expect_kw("then")?;
            parts.push(self.expr()?);
        }
        if self.eat_kw("else") {
            parts.push(self.expr()?);
        }
        self.expect_kw("end")?;
        Ok(Expr::Compound(parts))
    }

    /// `col`, `t.col`, `schema.t.col`.
    fn column_ref(&mut self) -> Result<Expr, SqlError> {
        let mut parts = vec![self.ident()?];
        while self.is_symbol(".") {
            self.pos += 1;
            parts.push(self.ident()?);
        }
        let name = parts.pop().expect("at least one part");
        let qualifier = if parts.is_empty() { None } else { Some(parts.join(".")) };
        Ok(Expr::Column { qualifier, name })
    }
}
