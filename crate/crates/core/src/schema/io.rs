//! Schema file ingestion.
//!
//! Native layout (one JSON document per database):
//!
//! ```text
//! { "db_id": "...", "dialect": "sqlite|bigquery|snowflake|generic",
//!   "tables": [ { "name", "description", "primary_key": [..],
//!                 "columns": [ { "name", "type", "description", "value_description",
//!                                "nullable", "sample_values": [..] } ] } ],
//!   "foreign_keys": [ { "source": "Table.column", "target": "Table.column",
//!                       "provenance": "declared|predicted" } ] }
//! ```
//!
//! The Spider `tables.json` manifest (a list of databases with
//! `table_names_original`, `column_names_original`, `column_types`,
//! `primary_keys`, `foreign_keys`) is mapped onto the same model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ColumnDef, ColumnRef, DatabaseSchema, Dialect, ForeignKey, Provenance, TableDef};
use super::SchemaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaFormat {
    Native,
    SpiderManifest,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    db_id: String,
    #[serde(default)]
    dialect: Dialect,
    #[serde(default)]
    tables: Vec<TableDoc>,
    #[serde(default)]
    foreign_keys: Vec<ForeignKeyDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default)]
    columns: Vec<ColumnDoc>,
    #[serde(default)]
    primary_key: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnDoc {
    name: String,
    #[serde(rename = "type", default)]
    sql_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_description: Option<String>,
    #[serde(default)]
    nullable: bool,
    #[serde(default)]
    sample_values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForeignKeyDoc {
    source: String,
    target: String,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Deserialize)]
struct SpiderDb {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    #[serde(default)]
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<SpiderKey>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpiderKey {
    Single(usize),
    Composite(Vec<usize>),
}

fn parse_error(origin: &str, err: serde_json::Error) -> SchemaError {
    SchemaError::Parse { origin: origin.to_string(), line: err.line(), column: err.column(), message: err.to_string() }
}

fn parse_ref(origin: &str, field: &str, text: &str) -> Result<ColumnRef, SchemaError> {
    ColumnRef::parse(text).ok_or_else(|| SchemaError::Parse {
        origin: origin.to_string(),
        line: 0,
        column: 0,
        message: format!("field `{field}`: expected `table.column`, got `{text}`"),
    })
}

fn from_doc(origin: &str, doc: SchemaDoc) -> Result<DatabaseSchema, SchemaError> {
    let mut schema = DatabaseSchema::new(doc.db_id);
    schema.dialect = doc.dialect;
    for t in doc.tables {
        schema.tables.push(TableDef {
            name: t.name,
            description: t.description,
            primary_key: t.primary_key,
            columns: t
                .columns
                .into_iter()
                .map(|c| ColumnDef {
                    name: c.name,
                    sql_type: c.sql_type,
                    description: c.description,
                    value_description: c.value_description,
                    nullable_flag: c.nullable,
                    sample_values: c.sample_values,
                })
                .collect(),
        });
    }
    for (i, fk) in doc.foreign_keys.into_iter().enumerate() {
        let source = parse_ref(origin, &format!("foreign_keys[{i}].source"), &fk.source)?;
        let target = parse_ref(origin, &format!("foreign_keys[{i}].target"), &fk.target)?;
        schema.foreign_keys.push(ForeignKey { source, target, provenance: fk.provenance });
    }
    schema.validate()?;
    Ok(schema)
}

fn to_doc(schema: &DatabaseSchema) -> SchemaDoc {
    SchemaDoc {
        db_id: schema.db_id.clone(),
        dialect: schema.dialect,
        tables: schema
            .tables
            .iter()
            .map(|t| TableDoc {
                name: t.name.clone(),
                description: t.description.clone(),
                primary_key: t.primary_key.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnDoc {
                        name: c.name.clone(),
                        sql_type: c.sql_type.clone(),
                        description: c.description.clone(),
                        value_description: c.value_description.clone(),
                        nullable: c.nullable_flag,
                        sample_values: c.sample_values.clone(),
                    })
                    .collect(),
            })
            .collect(),
        foreign_keys: schema
            .foreign_keys
            .iter()
            .map(|fk| ForeignKeyDoc {
                source: fk.source.to_string(),
                target: fk.target.to_string(),
                provenance: fk.provenance,
            })
            .collect(),
    }
}

/// Parses a native schema document held in memory.
pub fn parse_schema(text: &str, origin: &str) -> Result<DatabaseSchema, SchemaError> {
    let doc: SchemaDoc = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
    from_doc(origin, doc)
}

pub fn serialize_schema(schema: &DatabaseSchema) -> String {
    serde_json::to_string_pretty(&to_doc(schema)).expect("schema documents always serialize")
}

fn spider_to_schema(db: SpiderDb, origin: &str) -> Result<DatabaseSchema, SchemaError> {
    let mut schema = DatabaseSchema::new(db.db_id);
    schema.dialect = Dialect::Sqlite;
    schema.tables = db.table_names_original.iter().map(TableDef::new).collect();
    // Column 0 is the `*` pseudo-column with table index -1.
    let mut owners: Vec<Option<(usize, usize)>> = Vec::with_capacity(db.column_names_original.len());
    for (i, (table_idx, name)) in db.column_names_original.iter().enumerate() {
        if *table_idx < 0 {
            owners.push(None);
            continue;
        }
        let t = *table_idx as usize;
        let table = schema.tables.get_mut(t).ok_or_else(|| SchemaError::Parse {
            origin: origin.to_string(),
            line: 0,
            column: 0,
            message: format!("column_names_original[{i}] names table index {t} which does not exist"),
        })?;
        let sql_type = db.column_types.get(i).cloned().unwrap_or_default();
        owners.push(Some((t, table.columns.len())));
        table.columns.push(ColumnDef::new(name.clone(), sql_type));
    }
    let resolve = |idx: usize, field: &str| -> Result<ColumnRef, SchemaError> {
        match owners.get(idx).copied().flatten() {
            Some((t, c)) => {
                let table = &schema.tables[t];
                Ok(ColumnRef::new(table.name.clone(), table.columns[c].name.clone()))
            }
            None => Err(SchemaError::DanglingReference(format!("{field} references column index {idx}"))),
        }
    };
    let mut pk_members = Vec::new();
    for key in &db.primary_keys {
        let idxs = match key {
            SpiderKey::Single(i) => vec![*i],
            SpiderKey::Composite(v) => v.clone(),
        };
        for i in idxs {
            pk_members.push(resolve(i, "primary_keys")?);
        }
    }
    let mut fks = Vec::new();
    for (a, b) in &db.foreign_keys {
        let source = resolve(*a, "foreign_keys")?;
        let target = resolve(*b, "foreign_keys")?;
        if source != target && !fks.iter().any(|f: &ForeignKey| f.source == source && f.target == target) {
            fks.push(ForeignKey::declared(source, target));
        }
    }
    for pk in pk_members {
        let table = schema.tables.iter_mut().find(|t| t.name == pk.table).expect("resolved above");
        if !table.is_primary_key(&pk.column) {
            table.primary_key.push(pk.column);
        }
    }
    schema.foreign_keys = fks;
    schema.validate()?;
    Ok(schema)
}

pub fn parse_spider_manifest(text: &str, origin: &str) -> Result<Vec<DatabaseSchema>, SchemaError> {
    let dbs: Vec<SpiderDb> = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
    dbs.into_iter().map(|db| spider_to_schema(db, origin)).collect()
}

/// Loads every database in a schema file. Native files hold exactly one.
pub fn load_schemas(path: &Path, format: SchemaFormat) -> Result<Vec<DatabaseSchema>, SchemaError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| SchemaError::Io { origin: origin.clone(), source: e })?;
    match format {
        SchemaFormat::Native => Ok(vec![parse_schema(&text, &origin)?]),
        SchemaFormat::SpiderManifest => parse_spider_manifest(&text, &origin),
    }
}

/// Loads a single database. A Spider manifest must contain exactly one database.
pub fn load_schema(path: &Path, format: SchemaFormat) -> Result<DatabaseSchema, SchemaError> {
    let mut all = load_schemas(path, format)?;
    match all.len() {
        1 => Ok(all.pop().expect("length checked")),
        n => Err(SchemaError::Invalid(format!(
            "{} holds {n} databases; select one with load_schemas",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n  \"db_id\": \"x\",\n  \"tables\": [ { \"nme\": \"t\" } ]\n}";
        match parse_schema(text, "mem") {
            Err(SchemaError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("nme"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_fk_reference_syntax_names_field() {
        let text = r#"{"db_id":"x","tables":[],"foreign_keys":[{"source":"nodot","target":"a.b"}]}"#;
        let err = parse_schema(text, "mem").unwrap_err();
        assert!(err.to_string().contains("foreign_keys[0].source"), "{err}");
    }

    #[test]
    fn spider_manifest_maps_keys() {
        let text = r#"[{
            "db_id": "concert",
            "table_names_original": ["stadium", "concert"],
            "table_names": ["stadium", "concert"],
            "column_names_original": [[-1, "*"], [0, "Stadium_ID"], [0, "Name"], [1, "concert_ID"], [1, "Stadium_ID"]],
            "column_names": [[-1, "*"], [0, "stadium id"], [0, "name"], [1, "concert id"], [1, "stadium id"]],
            "column_types": ["text", "number", "text", "number", "text"],
            "primary_keys": [1, [3]],
            "foreign_keys": [[4, 1]]
        }]"#;
        let dbs = parse_spider_manifest(text, "mem").unwrap();
        assert_eq!(dbs.len(), 1);
        let s = &dbs[0];
        assert_eq!(s.tables[0].primary_key, vec!["Stadium_ID"]);
        assert_eq!(s.tables[1].primary_key, vec!["concert_ID"]);
        assert_eq!(s.tables[0].columns[0].sql_type, "number");
        assert_eq!(s.foreign_keys[0].to_string(), "concert.Stadium_ID -> stadium.Stadium_ID");
    }
}
