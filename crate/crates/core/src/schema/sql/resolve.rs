//! Scope resolution: maps every column reference in a parsed statement to a schema column.

use std::collections::BTreeSet;

use super::parser::{Expr, FromItem, JoinConstraint, Query, Select, SelectItem, SetExpr, TableFactor};
use super::SqlError;
use crate::schema::model::{fold, ColumnRef, DatabaseSchema};

#[derive(Debug, Clone)]
enum Source {
    Table(usize),
    /// Output column names of a derived table; `None` marks an unnamed expression.
    Derived(Vec<Option<String>>),
}

#[derive(Debug, Clone)]
struct Binding {
    name: String,
    source: Source,
}

pub(super) struct Scope<'p> {
    bindings: Vec<Binding>,
    aliases: Vec<String>,
    parent: Option<&'p Scope<'p>>,
}

pub(super) struct Resolver<'s> {
    schema: &'s DatabaseSchema,
    pub(super) found: BTreeSet<ColumnRef>,
}

enum Lookup {
    Hit(Option<ColumnRef>),
    Miss,
}

impl<'s> Resolver<'s> {
    pub(super) fn new(schema: &'s DatabaseSchema) -> Self {
        Self { schema, found: BTreeSet::new() }
    }

    fn column_of(&self, table: usize, name: &str) -> Option<ColumnRef> {
        let t = &self.schema.tables[table];
        t.column(name).map(|c| ColumnRef::new(t.name.clone(), c.name.clone()))
    }

    fn find_table(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.schema.table_index(name) {
            return Some(i);
        }
        // `project.dataset.table` -> try shorter suffixes.
        let mut rest = name;
        while let Some((_, tail)) = rest.split_once('.') {
            if let Some(i) = self.schema.table_index(tail) {
                return Some(i);
            }
            rest = tail;
        }
        None
    }

    pub(super) fn query(&mut self, q: &Query, parent: Option<&Scope<'_>>) -> Result<Vec<Option<String>>, SqlError> {
        match &q.body {
            SetExpr::Select(sel) if !q.order_by.is_empty() || !q.limit.is_empty() => {
                self.select(sel, parent, &q.order_by, &q.limit)
            }
            body => {
                let outputs = self.set_expr(body, parent)?;
                if !q.order_by.is_empty() || !q.limit.is_empty() {
                    // ORDER BY over a compound query names output columns of the leftmost branch.
                    let leftmost = leftmost_select(body);
                    let scope = match leftmost {
                        Some(sel) => self.scope_for(sel, parent)?,
                        None => Scope { bindings: Vec::new(), aliases: Vec::new(), parent },
                    };
                    let mut scope = scope;
                    scope.aliases.extend(outputs.iter().flatten().map(|s| fold(s)));
                    for e in q.order_by.iter().chain(&q.limit) {
                        self.expr(e, &scope)?;
                    }
                }
                Ok(outputs)
            }
        }
    }

    fn set_expr(&mut self, body: &SetExpr, parent: Option<&Scope<'_>>) -> Result<Vec<Option<String>>, SqlError> {
        match body {
            SetExpr::Select(sel) => self.select(sel, parent, &[], &[]),
            SetExpr::Nested(q) => self.query(q, parent),
            SetExpr::SetOp(l, r) => {
                let out = self.set_expr(l, parent)?;
                self.set_expr(r, parent)?;
                Ok(out)
            }
        }
    }

    fn bind_factor<'p>(
        &mut self,
        factor: &TableFactor,
        parent: Option<&'p Scope<'p>>,
        bindings: &mut Vec<Binding>,
    ) -> Result<(), SqlError> {
        match factor {
            TableFactor::Table { name, alias } => {
                let idx = self.find_table(name).ok_or_else(|| SqlError::UnknownTable(name.clone()))?;
                let bind = alias.clone().unwrap_or_else(|| self.schema.tables[idx].name.clone());
                bindings.push(Binding { name: fold(&bind), source: Source::Table(idx) });
                // Also expose the bare table name for `dataset.table` references.
                if alias.is_none() && name.contains('.') {
                    bindings.push(Binding { name: fold(name), source: Source::Table(idx) });
                }
            }
            TableFactor::Derived { query, alias } => {
                let outputs = self.query(query, parent)?;
                bindings.push(Binding {
                    name: alias.as_deref().map(fold).unwrap_or_default(),
                    source: Source::Derived(outputs),
                });
            }
            TableFactor::Nested(item) => self.bind_item(item, parent, bindings)?,
        }
        Ok(())
    }

    fn bind_item<'p>(
        &mut self,
        item: &FromItem,
        parent: Option<&'p Scope<'p>>,
        bindings: &mut Vec<Binding>,
    ) -> Result<(), SqlError> {
        self.bind_factor(&item.base, parent, bindings)?;
        for join in &item.joins {
            self.bind_factor(&join.factor, parent, bindings)?;
        }
        Ok(())
    }

    fn scope_for<'p>(&mut self, sel: &Select, parent: Option<&'p Scope<'p>>) -> Result<Scope<'p>, SqlError> {
        let mut bindings = Vec::new();
        for item in &sel.from {
            self.bind_item(item, parent, &mut bindings)?;
        }
        let aliases = sel
            .items
            .iter()
            .filter_map(|i| match i {
                SelectItem::Expr { alias: Some(a), .. } => Some(fold(a)),
                _ => None,
            })
            .collect();
        Ok(Scope { bindings, aliases, parent })
    }

    fn select(
        &mut self,
        sel: &Select,
        parent: Option<&Scope<'_>>,
        order_by: &[Expr],
        limit: &[Expr],
    ) -> Result<Vec<Option<String>>, SqlError> {
        let scope = self.scope_for(sel, parent)?;
        for item in &sel.from {
            self.join_constraints(item, &scope)?;
        }
        let mut outputs = Vec::new();
        for item in &sel.items {
            match item {
                SelectItem::Wildcard => {
                    for b in &scope.bindings {
                        outputs.extend(self.expand(b));
                    }
                }
                SelectItem::QualifiedWildcard(q) => {
                    let key = fold(q);
                    let b = scope
                        .bindings
                        .iter()
                        .find(|b| b.name == key)
                        .cloned()
                        .ok_or_else(|| SqlError::UnknownTable(q.clone()))?;
                    outputs.extend(self.expand(&b));
                }
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr, &scope)?;
                    outputs.push(alias.clone().or_else(|| match expr {
                        Expr::Column { name, .. } => Some(name.clone()),
                        _ => None,
                    }));
                }
            }
        }
        for e in sel.selection.iter().chain(&sel.group_by).chain(&sel.having).chain(order_by).chain(limit) {
            self.expr(e, &scope)?;
        }
        Ok(outputs)
    }

    /// Records every column a wildcard expands to and returns their names.
    fn expand(&mut self, b: &Binding) -> Vec<Option<String>> {
        match &b.source {
            Source::Table(t) => {
                let table = &self.schema.tables[*t];
                table
                    .columns
                    .iter()
                    .map(|c| {
                        self.found.insert(ColumnRef::new(table.name.clone(), c.name.clone()));
                        Some(c.name.clone())
                    })
                    .collect()
            }
            Source::Derived(cols) => cols.clone(),
        }
    }

    fn join_constraints(&mut self, item: &FromItem, scope: &Scope<'_>) -> Result<(), SqlError> {
        if let TableFactor::Nested(inner) = &item.base {
            self.join_constraints(inner, scope)?;
        }
        for join in &item.joins {
            if let TableFactor::Nested(inner) = &join.factor {
                self.join_constraints(inner, scope)?;
            }
            match &join.constraint {
                JoinConstraint::On(e) => self.expr(e, scope)?,
                JoinConstraint::Using(cols) => {
                    for col in cols {
                        let mut hits = 0;
                        for b in &scope.bindings {
                            if let Source::Table(t) = b.source {
                                if let Some(c) = self.column_of(t, col) {
                                    self.found.insert(c);
                                    hits += 1;
                                }
                            }
                        }
                        if hits == 0 {
                            return Err(SqlError::UnknownColumn(col.clone()));
                        }
                    }
                }
                JoinConstraint::None => {}
            }
        }
        Ok(())
    }

    fn lookup(&self, qualifier: Option<&str>, name: &str, scope: &Scope<'_>) -> Result<Lookup, SqlError> {
        let key = fold(name);
        match qualifier {
            Some(q) => {
                let qk = fold(q);
                let binding = scope.bindings.iter().find(|b| b.name == qk).or_else(|| {
                    // `dataset.table.col` written against an unaliased `table`.
                    qk.rsplit_once('.').and_then(|(_, tail)| scope.bindings.iter().find(|b| b.name == tail))
                });
                let Some(b) = binding else { return Ok(Lookup::Miss) };
                match &b.source {
                    Source::Table(t) => match self.column_of(*t, name) {
                        Some(c) => Ok(Lookup::Hit(Some(c))),
                        None => Err(SqlError::UnknownColumn(format!("{q}.{name}"))),
                    },
                    Source::Derived(_) => Ok(Lookup::Hit(None)),
                }
            }
            None => {
                let mut hits: Vec<Option<ColumnRef>> = Vec::new();
                for b in &scope.bindings {
                    match &b.source {
                        Source::Table(t) => {
                            if let Some(c) = self.column_of(*t, name) {
                                if !hits.contains(&Some(c.clone())) {
                                    hits.push(Some(c));
                                }
                            }
                        }
                        Source::Derived(cols) => {
                            if cols.iter().flatten().any(|c| fold(c) == key) {
                                hits.push(None);
                            }
                        }
                    }
                }
                match hits.len() {
                    0 if scope.aliases.contains(&key) => Ok(Lookup::Hit(None)),
                    0 => Ok(Lookup::Miss),
                    1 => Ok(Lookup::Hit(hits.pop().expect("one hit"))),
                    _ => Err(SqlError::Ambiguous {
                        column: name.to_string(),
                        candidates: hits
                            .into_iter()
                            .map(|h| h.map_or_else(|| "<derived>".to_string(), |c| c.to_string()))
                            .collect(),
                    }),
                }
            }
        }
    }

    fn resolve(&mut self, qualifier: Option<&str>, name: &str, scope: &Scope<'_>) -> Result<bool, SqlError> {
        let mut current = Some(scope);
        while let Some(s) = current {
            if let Lookup::Hit(col) = self.lookup(qualifier, name, s)? {
                if let Some(c) = col {
                    self.found.insert(c);
                }
                return Ok(true);
            }
            current = s.parent;
        }
        Ok(false)
    }

    fn expr(&mut self, e: &Expr, scope: &Scope<'_>) -> Result<(), SqlError> {
        match e {
            Expr::Column { qualifier, name } => {
                if !self.resolve(qualifier.as_deref(), name, scope)? {
                    return Err(match qualifier {
                        Some(q) if !scope_has_binding(scope, q) => SqlError::UnknownTable(q.clone()),
                        Some(q) => SqlError::UnknownColumn(format!("{q}.{name}")),
                        None => SqlError::UnknownColumn(name.clone()),
                    });
                }
            }
            Expr::DoubleQuoted(text) => {
                // Literal unless it names a visible column; ambiguity still counts as a literal.
                let _ = self.resolve(None, text, scope).unwrap_or(false);
            }
            Expr::Compound(parts) => {
                for p in parts {
                    self.expr(p, scope)?;
                }
            }
            Expr::Subquery(q) => {
                self.query(q, Some(scope))?;
            }
            Expr::Literal | Expr::Star => {}
        }
        Ok(())
    }
}

fn scope_has_binding(scope: &Scope<'_>, q: &str) -> bool {
    let key = fold(q);
    let mut current = Some(scope);
    while let Some(s) = current {
        if s.bindings.iter().any(|b| b.name == key) {
            return true;
        }
        current = s.parent;
    }
    false
}

fn leftmost_select(body: &SetExpr) -> Option<&Select> {
    match body {
        SetExpr::Select(s) => Some(s),
        SetExpr::Nested(q) => leftmost_select(&q.body),
        SetExpr::SetOp(l, _) => leftmost_select(l),
    }
}
