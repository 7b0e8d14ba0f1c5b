//! Recovery of undeclared primary and foreign keys.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::schema::{fold, ColumnRef, DatabaseSchema, ForeignKey, Provenance, TableDef};

/// Keys proposed for a schema, either by the naming heuristic or an external predictor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyPrediction {
    pub primary_keys: BTreeMap<String, Vec<String>>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl KeyPrediction {
    pub fn is_empty(&self) -> bool {
        self.primary_keys.is_empty() && self.foreign_keys.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionDoc {
    #[serde(default)]
    primary_keys: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    foreign_keys: Vec<LinkDoc>,
}

#[derive(Serialize, Deserialize)]
struct LinkDoc {
    source: String,
    target: String,
}

/// Parses a key-prediction file: `{"primary_keys": {table: [cols]}, "foreign_keys": [{"source", "target"}]}`.
pub fn parse_key_prediction(text: &str) -> Result<KeyPrediction, GraphError> {
    let doc: PredictionDoc =
        serde_json::from_str(text).map_err(|e| GraphError::Prediction(format!("line {}: {e}", e.line())))?;
    let mut foreign_keys = Vec::new();
    for link in doc.foreign_keys {
        let parse = |s: &str| {
            ColumnRef::parse(s).ok_or_else(|| GraphError::Prediction(format!("expected `table.column`, got `{s}`")))
        };
        foreign_keys.push(ForeignKey::predicted(parse(&link.source)?, parse(&link.target)?));
    }
    Ok(KeyPrediction { primary_keys: doc.primary_keys, foreign_keys })
}

pub fn serialize_key_prediction(pred: &KeyPrediction) -> String {
    let doc = PredictionDoc {
        primary_keys: pred.primary_keys.clone(),
        foreign_keys: pred
            .foreign_keys
            .iter()
            .map(|fk| LinkDoc { source: fk.source.to_string(), target: fk.target.to_string() })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("predictions always serialize")
}

pub fn singular(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ies") {
        format!("{stem}y")
    } else if ["sses", "xes", "ches", "shes"].iter().any(|s| word.ends_with(s)) {
        word[..word.len() - 2].to_string()
    } else if word.ends_with('s') && !word.ends_with("ss") && word.len() > 1 {
        word[..word.len() - 1].to_string()
    } else {
        word.to_string()
    }
}

pub fn stems(table: &str) -> Vec<String> {
    let t = fold(table);
    let s = singular(&t);
    if s == t {
        vec![t]
    } else {
        vec![t, s]
    }
}

pub fn guess_primary_key(table: &TableDef) -> Option<String> {
    let stems = stems(&table.name);
    let mut patterns = vec!["id".to_string()];
    for s in &stems {
        patterns.push(format!("{s}_id"));
        patterns.push(format!("{s}id"));
    }
    patterns
        .iter()
        .find_map(|p| table.columns.iter().find(|c| fold(&c.name) == *p))
        .map(|c| c.name.clone())
}

/// Naming-convention key recovery.
///
/// A table without a declared primary key gets `id`, `<table>_id` or `<table>id`
/// (singular or plural table stem) when such a column exists. A column that is not
/// already a foreign-key source is linked to table `v` when it is named
/// `<v-stem>_<pk>` / `<v-stem><pk>`, or reuses `v`'s distinctive primary-key name.
pub fn infer_keys_heuristic(schema: &DatabaseSchema) -> KeyPrediction {
    let mut pred = KeyPrediction::default();
    let mut effective: Vec<Vec<String>> = Vec::with_capacity(schema.tables.len());
    for table in &schema.tables {
        if table.primary_key.is_empty() {
            if let Some(pk) = guess_primary_key(table) {
                pred.primary_keys.insert(table.name.clone(), vec![pk.clone()]);
                effective.push(vec![pk]);
                continue;
            }
        }
        effective.push(table.primary_key.clone());
    }

    for (u, table_u) in schema.tables.iter().enumerate() {
        let own_pk = &effective[u];
        for col in &table_u.columns {
            let source = ColumnRef::new(table_u.name.clone(), col.name.clone());
            if schema.foreign_keys.iter().any(|fk| fk.source == source) {
                continue;
            }
            let cu = fold(&col.name);
            let is_own_single_pk = own_pk.len() == 1 && fold(&own_pk[0]) == cu;
            let target = schema.tables.iter().enumerate().find_map(|(v, table_v)| {
                if v == u || effective[v].len() != 1 {
                    return None;
                }
                let pk = fold(&effective[v][0]);
                let by_pattern = stems(&table_v.name).iter().any(|s| cu == format!("{s}_{pk}") || cu == format!("{s}{pk}"));
                let by_reuse = pk != "id" && cu == pk && !is_own_single_pk;
                (by_pattern || by_reuse).then(|| ColumnRef::new(table_v.name.clone(), effective[v][0].clone()))
            });
            if let Some(target) = target {
                pred.foreign_keys.push(ForeignKey::predicted(source, target));
            }
        }
    }
    pred
}

/// A predicted primary key that disagrees with a declared one. The declared key is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyConflict {
    pub table: String,
    pub declared: Vec<String>,
    pub predicted: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub schema: DatabaseSchema,
    pub conflicts: Vec<KeyConflict>,
}

/// Adds predicted keys where none are declared. Declared keys always win.
pub fn merge_keys(schema: &DatabaseSchema, predicted: &KeyPrediction) -> Result<MergeOutcome, GraphError> {
    let mut merged = schema.clone();
    let mut conflicts = Vec::new();
    for (table_name, pk) in &predicted.primary_keys {
        let idx = merged
            .table_index(table_name)
            .ok_or_else(|| GraphError::Prediction(format!("predicted key for unknown table `{table_name}`")))?;
        let table = &mut merged.tables[idx];
        for c in pk {
            if table.column(c).is_none() {
                return Err(GraphError::Prediction(format!("predicted key `{table_name}.{c}` does not exist")));
            }
        }
        if table.primary_key.is_empty() {
            table.primary_key = pk.iter().map(|c| table.column(c).expect("checked").name.clone()).collect();
        } else {
            let same = table.primary_key.len() == pk.len()
                && table.primary_key.iter().zip(pk).all(|(a, b)| fold(a) == fold(b));
            if !same {
                log::warn!(
                    "{}: predicted primary key {:?} for `{}` contradicts declared {:?}; keeping declared",
                    schema.db_id,
                    pk,
                    table.name,
                    table.primary_key
                );
                conflicts.push(KeyConflict {
                    table: table.name.clone(),
                    declared: table.primary_key.clone(),
                    predicted: pk.clone(),
                });
            }
        }
    }
    for fk in &predicted.foreign_keys {
        let (Some(source), Some(target)) = (merged.canonical(&fk.source), merged.canonical(&fk.target)) else {
            return Err(GraphError::Prediction(format!("predicted foreign key `{fk}` references a missing column")));
        };
        if source == target || merged.foreign_keys.iter().any(|f| f.source == source && f.target == target) {
            continue;
        }
        merged.foreign_keys.push(ForeignKey { source, target, provenance: Provenance::Predicted });
    }
    Ok(MergeOutcome { schema: merged, conflicts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_forms() {
        assert_eq!(singular("categories"), "category");
        assert_eq!(singular("classes"), "class");
        assert_eq!(singular("boxes"), "box");
        assert_eq!(singular("cards"), "card");
        assert_eq!(singular("address"), "address");
    }

    #[test]
    fn prediction_file_round_trip() {
        let text = r#"{"primary_keys": {"cards": ["id"]}, "foreign_keys": [{"source": "cards.location_id", "target": "locations.id"}]}"#;
        let pred = parse_key_prediction(text).unwrap();
        assert_eq!(pred.foreign_keys[0].provenance, Provenance::Predicted);
        assert_eq!(parse_key_prediction(&serialize_key_prediction(&pred)).unwrap(), pred);
    }
}
