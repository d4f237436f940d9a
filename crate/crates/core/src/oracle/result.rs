use std::fmt;

use crate::plan::ResultOrdering;
use crate::relmodel::{Row, Schema};
use crate::value::Value;

/// Query output: schema, records and the ordering contract the records
/// satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub schema: Schema,
    pub rows: Vec<Row>,
    pub ordering: ResultOrdering,
}

impl ResultSet {
    pub fn new(schema: Schema, rows: Vec<Row>, ordering: ResultOrdering) -> ResultSet {
        ResultSet { schema, rows, ordering }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows sorted by the total value order, column by column.
    pub fn canonical_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| cmp_rows(a, b));
        rows
    }

    /// Order-insensitive digest of the contents, used as a benchmark sink.
    pub fn checksum(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut acc = self.rows.len() as u64;
        for row in &self.rows {
            let mut h = std::collections::hash_map::DefaultHasher::new();
            row.hash(&mut h);
            acc = acc.wrapping_add(h.finish());
        }
        acc
    }
}

pub(crate) fn cmp_rows(a: &[Value], b: &[Value]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

impl fmt::Display for ResultSet {
    /// Plain-text table, at most 50 rows.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 50;
        let header: Vec<String> = self.schema.names().iter().map(|s| s.to_string()).collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .take(SHOWN)
            .map(|r| r.iter().map(|v| v.to_string()).collect())
            .collect();
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for r in &body {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String], f: &mut fmt::Formatter<'_>| -> fmt::Result {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            writeln!(f, "{}", parts.join(" | ").trim_end())
        };
        line(&header, f)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(f, "{}", rule.join("-+-"))?;
        for r in &body {
            line(r, f)?;
        }
        if self.rows.len() > SHOWN {
            writeln!(f, "... {} more rows", self.rows.len() - SHOWN)?;
        }
        write!(f, "({} rows)", self.rows.len())
    }
}
