//! Seeded synthetic schemas and question sets for tests and benchmarks.
//!
//! The planted corpus gives every non-key column a unique pseudo-word; a
//! question names the columns it needs by those words and walks a foreign-key
//! path between their tables. Gold labels are the named columns plus every
//! join key on the path. Key columns are named from a disjoint vocabulary
//! (`pk`, `ref<n>`), so only the graph can recover them.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::DatasetRecord;
use crate::schema::{ColumnDef, ColumnRef, DatabaseSchema, ForeignKey, TableDef};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Words {
    fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), used: HashSet::new() }
    }

    fn fresh(&mut self) -> String {
        loop {
            let w: String = (0..3)
                .flat_map(|_| {
                    [*CONSONANTS.choose(&mut self.rng).unwrap() as char, *VOWELS.choose(&mut self.rng).unwrap() as char]
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedConfig {
    pub databases: usize,
    pub tables: usize,
    pub columns_per_table: usize,
    pub questions: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self { databases: 5, tables: 20, columns_per_table: 10, questions: 50, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub schemas: Vec<DatabaseSchema>,
    pub questions: Vec<DatasetRecord>,
}

/// Table `i > 0` references a random earlier table through `ref<parent>`; the result is a tree.
fn tree_schema(db_id: &str, words: &mut Words, rng: &mut ChaCha8Rng, tables: usize, columns: &[usize]) -> (DatabaseSchema, Vec<Option<usize>>) {
    let mut schema = DatabaseSchema::new(db_id);
    let mut parent = vec![None; tables];
    for t in 0..tables {
        let name = words.fresh();
        let mut def = TableDef::new(name.clone());
        def.description = Some(format!("{name} records"));
        let mut pk = ColumnDef::new("pk", "integer");
        pk.description = Some("identifier".into());
        def.columns.push(pk);
        def.primary_key = vec!["pk".into()];
        if t > 0 {
            let p = rng.random_range(0..t);
            parent[t] = Some(p);
            let mut fk = ColumnDef::new(format!("ref{p}"), "integer");
            fk.description = Some("reference".into());
            def.columns.push(fk);
        }
        while def.columns.len() < columns[t] {
            let w = words.fresh();
            let mut c = ColumnDef::new(w.clone(), "text");
            c.description = Some(format!("{w} value"));
            def.columns.push(c);
        }
        schema.tables.push(def);
    }
    for (t, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            schema.foreign_keys.push(ForeignKey::declared(
                ColumnRef::new(schema.tables[t].name.clone(), format!("ref{p}")),
                ColumnRef::new(schema.tables[p].name.clone(), "pk"),
            ));
        }
    }
    (schema, parent)
}

fn path_to_root(parent: &[Option<usize>], mut t: usize) -> Vec<usize> {
    let mut path = vec![t];
    while let Some(p) = parent[t] {
        path.push(p);
        t = p;
    }
    path
}

/// Tables on the tree path from `a` to `b`, inclusive.
fn tree_path(parent: &[Option<usize>], a: usize, b: usize) -> Vec<usize> {
    let (pa, pb) = (path_to_root(parent, a), path_to_root(parent, b));
    let meet = *pa.iter().find(|t| pb.contains(t)).expect("one tree");
    let mut path: Vec<usize> = pa.iter().copied().take_while(|&t| t != meet).collect();
    path.push(meet);
    let tail: Vec<usize> = pb.iter().copied().take_while(|&t| t != meet).collect();
    path.extend(tail.into_iter().rev());
    path
}

pub fn planted_corpus(config: &PlantedConfig) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut words = Words::new(config.seed ^ 0x9e37_79b9);
    let mut schemas = Vec::new();
    let mut parents = Vec::new();
    for d in 0..config.databases {
        let cols = vec![config.columns_per_table; config.tables];
        let (s, p) = tree_schema(&format!("planted_{d}"), &mut words, &mut rng, config.tables, &cols);
        schemas.push(s);
        parents.push(p);
    }
    let pair = ["list the {} and {} entries", "show every {} along with {}", "which {} have {} recorded", "give {} paired with {}"];
    let single = ["list the {} entries", "show every {}", "which {} are recorded", "give all {}"];
    let questions = (0..config.questions)
        .map(|i| {
            let d = i % config.databases;
            let (schema, parent) = (&schemas[d], &parents[d]);
            let a = rng.random_range(0..config.tables);
            // Neighbour or neighbour-of-neighbour, so paths span one or two joins.
            let mut b = a;
            for _ in 0..rng.random_range(1..=2) {
                let mut adjacent: Vec<usize> = (0..config.tables).filter(|&t| parent[t] == Some(b)).collect();
                adjacent.extend(parent[b]);
                b = *adjacent.choose(&mut rng).unwrap_or(&b);
            }
            let named = |t: usize, rng: &mut ChaCha8Rng| {
                let plain: Vec<&ColumnDef> = schema.tables[t].columns.iter().filter(|c| c.name != "pk" && !c.name.starts_with("ref")).collect();
                plain.choose(rng).expect("table has plain columns").name.clone()
            };
            let (wa, wb) = (named(a, &mut rng), if a == b { String::new() } else { named(b, &mut rng) });
            let mut gold = vec![format!("{}.{wa}", schema.tables[a].name)];
            if a != b {
                gold.push(format!("{}.{wb}", schema.tables[b].name));
            }
            let path = tree_path(parent, a, b);
            for pair in path.windows(2) {
                let (child, up) = if parent[pair[0]] == Some(pair[1]) { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
                gold.push(format!("{}.ref{up}", schema.tables[child].name));
                gold.push(format!("{}.pk", schema.tables[up].name));
            }
            gold.sort();
            gold.dedup();
            let question = if a == b {
                single[i % single.len()].replace("{}", &wa)
            } else {
                pair[i % pair.len()].replacen("{}", &wa, 1).replacen("{}", &wb, 1)
            };
            DatasetRecord { db_id: schema.db_id.clone(), question, gold_sql: Vec::new(), gold_columns: gold }
        })
        .collect();
    PlantedCorpus { schemas, questions }
}

/// A tree-shaped schema with exactly `columns` columns spread as evenly as possible over `tables`.
pub fn wide_schema(db_id: &str, tables: usize, columns: usize, seed: u64) -> DatabaseSchema {
    assert!(tables >= 1 && columns >= 2 * tables, "need at least two columns per table");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Words::new(seed ^ 0x5151);
    let per: Vec<usize> = (0..tables).map(|t| columns / tables + usize::from(t < columns % tables)).collect();
    tree_schema(db_id, &mut words, &mut rng, tables, &per).0
}

/// A question mentioning a few random non-key columns of `schema`.
pub fn random_question(schema: &DatabaseSchema, rng: &mut impl Rng) -> String {
    let plain: Vec<&str> = schema
        .tables
        .iter()
        .flat_map(|t| t.columns.iter())
        .map(|c| c.name.as_str())
        .filter(|n| *n != "pk" && !n.starts_with("ref"))
        .collect();
    let picks: Vec<&str> = (0..3).filter_map(|_| plain.choose(rng).copied()).collect();
    format!("show {} for each record", picks.join(" and "))
}
