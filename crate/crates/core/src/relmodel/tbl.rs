//! The pipe-delimited `.tbl` dump format: one record per line, each field
//! followed by `|`, no header, dates as `YYYY-MM-DD`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Catalog, Database, RelError, Row, Schema, TableData};
use crate::value::{format_date, parse_date_days, DataType, Value};

/// Loads a `.tbl` file. The table is named after the file stem.
pub fn load_tbl(path: impl AsRef<Path>, schema: &Schema) -> Result<TableData, RelError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    let rows = parse_lines(reader, schema)?;
    Ok(TableData::new_unchecked(name, schema.clone(), rows))
}

pub(crate) fn parse_lines(reader: impl BufRead, schema: &Schema) -> Result<Vec<Row>, RelError> {
    let types = schema.types();
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let body = line
            .strip_suffix('|')
            .ok_or(RelError::MissingTerminator { line: line_no })?;
        let fields: Vec<&str> = body.split('|').collect();
        if fields.len() != types.len() {
            return Err(RelError::Arity {
                line: line_no,
                expected: types.len(),
                found: fields.len(),
            });
        }
        let mut record = Vec::with_capacity(types.len());
        for (col, (text, ty)) in fields.iter().zip(&types).enumerate() {
            let value = parse_field(text, *ty).ok_or_else(|| RelError::Parse {
                line: line_no,
                column: col + 1,
                text: text.to_string(),
                ty: *ty,
            })?;
            record.push(value);
        }
        rows.push(Arc::from(record));
    }
    Ok(rows)
}

fn parse_field(text: &str, ty: DataType) -> Option<Value> {
    if text.is_empty() && ty != DataType::Text {
        return Some(Value::Null);
    }
    match ty {
        DataType::Int64 => text.trim().parse().ok().map(Value::Int),
        DataType::Float64 => text.trim().parse().ok().map(Value::Float),
        DataType::Text => Some(Value::text(text)),
        DataType::Date => parse_date_days(text).map(Value::Date),
        DataType::Bool => match text.trim() {
            "true" | "t" | "1" => Some(Value::Bool(true)),
            "false" | "f" | "0" => Some(Value::Bool(false)),
            _ => None,
        },
        DataType::Null => None,
    }
}

/// Writes a table in `.tbl` format. Text containing `|` or a line break
/// cannot be represented and is rejected before anything is written.
pub fn write_tbl(table: &TableData, path: impl AsRef<Path>) -> Result<(), RelError> {
    for (r, row) in table.rows().iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Value::Text(s) = v {
                if s.contains(['|', '\n', '\r']) {
                    return Err(RelError::DelimiterCollision { row: r, column: c });
                }
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for row in table.rows() {
        for v in row.iter() {
            match v {
                Value::Null => {}
                Value::Date(d) => out.write_all(format_date(*d).as_bytes())?,
                // `{:?}` keeps the shortest round-tripping representation
                // and always marks the value as floating point.
                Value::Float(f) => write!(out, "{f:?}")?,
                other => write!(out, "{other}")?,
            }
            out.write_all(b"|")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes every table of `db` to `dir/<name>.tbl`, creating `dir`.
pub fn write_dir(db: &Database, dir: impl AsRef<Path>) -> Result<(), RelError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for t in db.tables() {
        write_tbl(t, dir.join(format!("{}.tbl", t.name)))?;
    }
    Ok(())
}

/// Loads every `.tbl` file in `dir` whose stem names a table of `catalog`.
/// Other files are ignored.
pub fn load_dir(dir: impl AsRef<Path>, catalog: &dyn Catalog) -> Result<Database, RelError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.sort();
    let mut db = Database::new();
    for path in paths {
        if path.extension().is_none_or(|e| e != "tbl") {
            continue;
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(schema) = catalog.table_schema(&stem) {
            db.insert(load_tbl(&path, &schema)?);
        }
    }
    Ok(db)
}
