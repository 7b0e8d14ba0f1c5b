use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::SchemaError;

/// Lower-cased form used for all identifier matching.
pub fn fold(ident: &str) -> String {
    ident.to_lowercase()
}

/// A fully qualified column. Equality, ordering and hashing ignore ASCII/Unicode case;
/// the original spelling is kept for display.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self { table: table.into(), column: column.into() }
    }

    /// Parses `table.column`. The split happens at the last dot so dotted table
    /// names (`dataset.table.column`) keep their prefix.
    pub fn parse(text: &str) -> Option<Self> {
        let (table, column) = text.trim().rsplit_once('.')?;
        if table.is_empty() || column.is_empty() {
            return None;
        }
        Some(Self::new(table, column))
    }

    pub fn key(&self) -> (String, String) {
        (fold(&self.table), fold(&self.column))
    }
}

impl PartialEq for ColumnRef {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for ColumnRef {}

impl Hash for ColumnRef {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for ColumnRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ColumnRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Sqlite,
    Bigquery,
    Snowflake,
    #[default]
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Declared,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub source: ColumnRef,
    pub target: ColumnRef,
    pub provenance: Provenance,
}

impl ForeignKey {
    pub fn declared(source: ColumnRef, target: ColumnRef) -> Self {
        Self { source, target, provenance: Provenance::Declared }
    }

    pub fn predicted(source: ColumnRef, target: ColumnRef) -> Self {
        Self { source, target, provenance: Provenance::Predicted }
    }

    /// Same endpoints, provenance ignored.
    pub fn same_link(&self, other: &ForeignKey) -> bool {
        self.source == other.source && self.target == other.target
    }
}

impl fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnDef {
    pub name: String,
    pub sql_type: String,
    pub description: Option<String>,
    pub value_description: Option<String>,
    pub nullable_flag: bool,
    pub sample_values: Vec<String>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, sql_type: impl Into<String>) -> Self {
        Self { name: name.into(), sql_type: sql_type.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableDef {
    pub name: String,
    pub description: Option<String>,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Vec<String>,
}

impl TableDef {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        let key = fold(name);
        self.columns.iter().find(|c| fold(&c.name) == key)
    }

    pub fn is_primary_key(&self, column: &str) -> bool {
        let key = fold(column);
        self.primary_key.iter().any(|p| fold(p) == key)
    }
}

/// A relational database: tables, their columns and the foreign-key set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<ForeignKey>,
    pub dialect: Dialect,
}

impl DatabaseSchema {
    pub fn new(db_id: impl Into<String>) -> Self {
        Self { db_id: db_id.into(), ..Self::default() }
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        let key = fold(name);
        self.tables.iter().find(|t| fold(&t.name) == key)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        let key = fold(name);
        self.tables.iter().position(|t| fold(&t.name) == key)
    }

    pub fn column(&self, col: &ColumnRef) -> Option<&ColumnDef> {
        self.table(&col.table)?.column(&col.column)
    }

    pub fn contains(&self, col: &ColumnRef) -> bool {
        self.column(col).is_some()
    }

    /// Canonical reference (original spelling from the schema) for a column.
    pub fn canonical(&self, col: &ColumnRef) -> Option<ColumnRef> {
        let table = self.table(&col.table)?;
        let column = table.column(&col.column)?;
        Some(ColumnRef::new(table.name.clone(), column.name.clone()))
    }

    /// All columns in table order, then column order.
    pub fn column_refs(&self) -> Vec<ColumnRef> {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnRef::new(t.name.clone(), c.name.clone())))
            .collect()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Whether the column is a primary-key member or participates in any foreign key.
    pub fn is_key_column(&self, col: &ColumnRef) -> bool {
        self.table(&col.table).is_some_and(|t| t.is_primary_key(&col.column))
            || self.foreign_keys.iter().any(|fk| fk.source == *col || fk.target == *col)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen_tables = HashSet::new();
        for table in &self.tables {
            if table.name.trim().is_empty() {
                return Err(SchemaError::Invalid(format!("empty table name in `{}`", self.db_id)));
            }
            if !seen_tables.insert(fold(&table.name)) {
                return Err(SchemaError::Invalid(format!("duplicate table `{}`", table.name)));
            }
            let mut seen_cols = HashSet::new();
            for col in &table.columns {
                if col.name.trim().is_empty() {
                    return Err(SchemaError::Invalid(format!("empty column name in table `{}`", table.name)));
                }
                if !seen_cols.insert(fold(&col.name)) {
                    return Err(SchemaError::Invalid(format!(
                        "duplicate column `{}` in table `{}`",
                        col.name, table.name
                    )));
                }
            }
            for pk in &table.primary_key {
                if table.column(pk).is_none() {
                    return Err(SchemaError::DanglingReference(format!(
                        "primary key member `{}.{}` does not exist",
                        table.name, pk
                    )));
                }
            }
        }
        for fk in &self.foreign_keys {
            for end in [&fk.source, &fk.target] {
                if !self.contains(end) {
                    return Err(SchemaError::DanglingReference(format!(
                        "foreign key `{fk}` references missing column `{end}`"
                    )));
                }
            }
            if fk.source == fk.target {
                return Err(SchemaError::Invalid(format!("foreign key `{fk}` references itself")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_ref_matching_ignores_case() {
        let a = ColumnRef::new("Courses", "Dept_ID");
        let b = ColumnRef::new("courses", "dept_id");
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "Courses.Dept_ID");
        let set: HashSet<_> = [a, b].into_iter().collect();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn parse_splits_at_last_dot() {
        let c = ColumnRef::parse("ds.events.user_id").unwrap();
        assert_eq!(c.table, "ds.events");
        assert_eq!(c.column, "user_id");
        assert!(ColumnRef::parse("nodot").is_none());
        assert!(ColumnRef::parse(".x").is_none());
    }

    #[test]
    fn validate_rejects_self_fk_and_dangling_pk() {
        let mut s = DatabaseSchema::new("x");
        let mut t = TableDef::new("t");
        t.columns.push(ColumnDef::new("a", "int"));
        t.primary_key.push("b".into());
        s.tables.push(t);
        assert!(matches!(s.validate(), Err(SchemaError::DanglingReference(_))));
        s.tables[0].primary_key = vec!["a".into()];
        s.foreign_keys.push(ForeignKey::declared(ColumnRef::new("t", "a"), ColumnRef::new("T", "A")));
        assert!(matches!(s.validate(), Err(SchemaError::Invalid(_))));
    }
}
