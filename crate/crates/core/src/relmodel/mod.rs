//! Row-oriented in-memory tables, `.tbl` ingestion and synthetic data
//! generation.

mod gen;
mod tbl;
pub mod tpch;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::value::{DataType, Value};

pub use gen::{example_schemas, generate, generate_example, GenConfig, GEN_PRNG};
pub use tbl::{load_dir, load_tbl, write_dir, write_tbl};

/// One record. Records are shared, never mutated after construction.
pub type Row = Arc<[Value]>;

#[derive(Debug, Error)]
pub enum RelError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: cannot parse {text:?} as {ty}")]
    Parse {
        line: usize,
        column: usize,
        text: String,
        ty: DataType,
    },
    #[error("line {line}: missing trailing '|'")]
    MissingTerminator { line: usize },
    #[error("row {row}, column {column}: text contains the '|' delimiter")]
    DelimiterCollision { row: usize, column: usize },
    #[error("row {row}: {detail}")]
    SchemaViolation { row: usize, detail: String },
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("no table named {0:?}")]
    UnknownTable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named, typed column. `relation` qualifies the column once it flows
/// through a plan (table name or alias).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub relation: Option<String>,
    pub name: String,
    pub ty: DataType,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: DataType) -> Field {
        Field {
            relation: None,
            name: name.into(),
            ty,
        }
    }

    pub fn qualified(relation: impl Into<String>, name: impl Into<String>, ty: DataType) -> Field {
        Field {
            relation: Some(relation.into()),
            name: name.into(),
            ty,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.relation {
            Some(r) => write!(f, "{r}.{}: {}", self.name, self.ty),
            None => write!(f, "{}: {}", self.name, self.ty),
        }
    }
}

/// Ordered column list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    /// Builds a table schema; column names must be unique.
    pub fn new(fields: Vec<Field>) -> Result<Schema, RelError> {
        for (i, f) in fields.iter().enumerate() {
            if fields[..i]
                .iter()
                .any(|g| g.name.eq_ignore_ascii_case(&f.name) && g.relation == f.relation)
            {
                return Err(RelError::DuplicateColumn(f.name.clone()));
            }
        }
        Ok(Schema { fields })
    }

    /// Builds a derived schema (join outputs may repeat unqualified names).
    pub fn derived(fields: Vec<Field>) -> Schema {
        Schema { fields }
    }

    pub fn of(cols: &[(&str, DataType)]) -> Schema {
        Schema::new(cols.iter().map(|(n, t)| Field::new(*n, *t)).collect())
            .expect("static schema has unique names")
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn types(&self) -> Vec<DataType> {
        self.fields.iter().map(|f| f.ty).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }

    /// Same columns, every field requalified with `relation`.
    pub fn with_relation(&self, relation: &str) -> Schema {
        Schema {
            fields: self
                .fields
                .iter()
                .map(|f| Field {
                    relation: Some(relation.to_string()),
                    ..f.clone()
                })
                .collect(),
        }
    }

    pub fn join(&self, other: &Schema) -> Schema {
        let mut fields = self.fields.clone();
        fields.extend(other.fields.iter().cloned());
        Schema { fields }
    }

    /// Case-insensitive column lookup. Returns every matching ordinal so
    /// callers can report ambiguity.
    pub fn lookup(&self, relation: Option<&str>, name: &str) -> Vec<usize> {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                f.name.eq_ignore_ascii_case(name)
                    && match relation {
                        None => true,
                        Some(r) => f
                            .relation
                            .as_deref()
                            .is_some_and(|fr| fr.eq_ignore_ascii_case(r)),
                    }
            })
            .map(|(i, _)| i)
            .collect()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{field}")?;
        }
        f.write_str(")")
    }
}

/// A named table of records.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub name: String,
    pub schema: Schema,
    rows: Vec<Row>,
}

impl TableData {
    /// Checks every record's arity and per-position types.
    pub fn new(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> Result<TableData, RelError> {
        let types = schema.types();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != types.len() {
                return Err(RelError::SchemaViolation {
                    row: i,
                    detail: format!("arity {} does not match schema arity {}", row.len(), types.len()),
                });
            }
            for (c, (v, t)) in row.iter().zip(&types).enumerate() {
                if !v.is_null() && v.data_type() != *t {
                    return Err(RelError::SchemaViolation {
                        row: i,
                        detail: format!("column {c}: {} value in {t} column", v.data_type()),
                    });
                }
            }
        }
        Ok(TableData {
            name: name.into(),
            schema,
            rows,
        })
    }

    pub(crate) fn new_unchecked(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> TableData {
        TableData {
            name: name.into(),
            schema,
            rows,
        }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Source of table schemas for planning.
pub trait Catalog {
    fn table_schema(&self, name: &str) -> Option<Schema>;
}

/// Tables keyed by lower-cased name. Immutable once handed to an engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    tables: BTreeMap<String, Arc<TableData>>,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn insert(&mut self, table: TableData) {
        self.tables
            .insert(table.name.to_ascii_lowercase(), Arc::new(table));
    }

    pub fn table(&self, name: &str) -> Option<&TableData> {
        self.tables.get(&name.to_ascii_lowercase()).map(|t| t.as_ref())
    }

    pub fn get(&self, name: &str) -> Result<&TableData, RelError> {
        self.table(name)
            .ok_or_else(|| RelError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableData> {
        self.tables.values().map(|t| t.as_ref())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Copy of this database with one table's rows replaced by nothing.
    pub fn with_empty_table(&self, name: &str) -> Result<Database, RelError> {
        let t = self.get(name)?;
        let mut db = self.clone();
        db.insert(TableData::new_unchecked(t.name.clone(), t.schema.clone(), Vec::new()));
        Ok(db)
    }
}

impl Catalog for Database {
    fn table_schema(&self, name: &str) -> Option<Schema> {
        self.table(name).map(|t| t.schema.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_duplicate_names() {
        let err = Schema::new(vec![
            Field::new("a", DataType::Int64),
            Field::new("A", DataType::Text),
        ])
        .unwrap_err();
        assert!(matches!(err, RelError::DuplicateColumn(_)));
    }

    #[test]
    fn table_checks_types() {
        let schema = Schema::of(&[("a", DataType::Int64)]);
        let bad: Row = Arc::from(vec![Value::text("x")]);
        assert!(TableData::new("t", schema.clone(), vec![bad]).is_err());
        let ok: Row = Arc::from(vec![Value::Int(1)]);
        assert_eq!(TableData::new("t", schema, vec![ok]).unwrap().len(), 1);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let mut db = Database::new();
        db.insert(TableData::new("LineItem", Schema::of(&[("x", DataType::Int64)]), vec![]).unwrap());
        assert!(db.table("lineitem").is_some());
        assert!(db.table("LINEITEM").is_some());
        assert_eq!(db.table_schema("lineItem").unwrap().lookup(None, "X"), vec![0]);
    }
}
