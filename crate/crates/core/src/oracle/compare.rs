use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::plan::{OrderKey, ResultOrdering};
use crate::relmodel::Row;
use crate::value::Value;

use super::{cmp_rows, ResultSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Equal,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("schema mismatch: actual {actual}, expected {expected}")]
pub struct CompareError {
    pub actual: String,
    pub expected: String,
}

/// Outcome of comparing an engine result with the reference result.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub verdict: Verdict,
    /// Expected rows with no counterpart in the actual result.
    pub missing: Vec<Row>,
    /// Actual rows with no counterpart in the expected result.
    pub extra: Vec<Row>,
    /// Largest relative difference among matched floating-point cells.
    pub worst_float_deviation: f64,
    /// Positions `i` where actual rows `i - 1, i` violate the ordering.
    pub order_violations: Vec<usize>,
    /// Top-N cut whose sort-key multiset differs from the expected one.
    pub key_multiset_mismatch: bool,
}

impl CompareReport {
    pub fn is_equal(&self) -> bool {
        self.verdict == Verdict::Equal
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.verdict {
            Verdict::Equal => write!(
                f,
                "Equal (worst float deviation {:.3e})",
                self.worst_float_deviation
            ),
            Verdict::Mismatch => {
                write!(
                    f,
                    "Mismatch: {} missing, {} extra, {} order violations",
                    self.missing.len(),
                    self.extra.len(),
                    self.order_violations.len()
                )?;
                if self.key_multiset_mismatch {
                    f.write_str(", top-N key multiset differs")?;
                }
                for r in self.missing.iter().take(3) {
                    write!(f, "\n  missing {}", fmt_row(r))?;
                }
                for r in self.extra.iter().take(3) {
                    write!(f, "\n  extra   {}", fmt_row(r))?;
                }
                Ok(())
            }
        }
    }
}

fn fmt_row(r: &[Value]) -> String {
    let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
    format!("({})", cells.join(", "))
}

/// Relative deviation of two cells, `None` when they cannot match.
fn deviation(a: &Value, b: &Value, tol: f64) -> Option<f64> {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            if x == y || (x.is_nan() && y.is_nan()) {
                return Some(0.0);
            }
            let scale = x.abs().max(y.abs());
            let d = (x - y).abs();
            (d <= tol * scale).then_some(d / scale)
        }
        _ => (a == b).then_some(0.0),
    }
}

fn rows_match(a: &[Value], b: &[Value], tol: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        worst = worst.max(deviation(x, y, tol)?);
    }
    Some(worst)
}

/// Multiset comparison with float tolerance. Returns (missing, extra,
/// worst deviation).
fn multiset_diff(actual: &[Row], expected: &[Row], tol: f64) -> (Vec<Row>, Vec<Row>, f64) {
    let mut a = actual.to_vec();
    let mut e = expected.to_vec();
    a.sort_by(|x, y| cmp_rows(x, y));
    e.sort_by(|x, y| cmp_rows(x, y));
    let mut worst = 0.0f64;
    if a.len() == e.len() {
        let mut all = true;
        for (x, y) in a.iter().zip(&e) {
            match rows_match(x, y, tol) {
                Some(d) => worst = worst.max(d),
                None => {
                    all = false;
                    break;
                }
            }
        }
        if all {
            return (Vec::new(), Vec::new(), worst);
        }
    }
    // Canonical order can interleave rows that differ within tolerance;
    // fall back to explicit matching.
    worst = 0.0;
    let mut used = vec![false; a.len()];
    let mut missing = Vec::new();
    for y in &e {
        let start = a.partition_point(|x| cmp_rows(x, y) == Ordering::Less);
        let found = (start..a.len())
            .chain(0..start)
            .find(|&i| !used[i] && rows_match(&a[i], y, tol).is_some());
        match found {
            Some(i) => {
                used[i] = true;
                worst = worst.max(rows_match(&a[i], y, tol).unwrap_or(0.0));
            }
            None => missing.push(y.clone()),
        }
    }
    let extra = a
        .into_iter()
        .zip(used)
        .filter(|(_, u)| !u)
        .map(|(r, _)| r)
        .collect();
    (missing, extra, worst)
}

fn cmp_on_keys(a: &[Value], b: &[Value], keys: &[OrderKey]) -> Ordering {
    for k in keys {
        let o = a[k.column].total_cmp(&b[k.column]);
        let o = if k.descending { o.reverse() } else { o };
        if o.is_ne() {
            return o;
        }
    }
    Ordering::Equal
}

fn project(r: &[Value], keys: &[OrderKey]) -> Row {
    keys.iter().map(|k| r[k.column].clone()).collect::<Vec<_>>().into()
}

/// Compares an engine result against the expected result.
///
/// Unordered results compare as multisets. Ordered results must also be
/// sorted by the expected keys. When the expected result is a top-N cut,
/// rows tied with the last expected key may differ, but the key multisets
/// must agree.
pub fn compare(actual: &ResultSet, expected: &ResultSet, float_tol: f64) -> Result<CompareReport, CompareError> {
    if actual.schema.types() != expected.schema.types() {
        return Err(CompareError {
            actual: actual.schema.to_string(),
            expected: expected.schema.to_string(),
        });
    }
    let mut report = CompareReport {
        verdict: Verdict::Equal,
        missing: Vec::new(),
        extra: Vec::new(),
        worst_float_deviation: 0.0,
        order_violations: Vec::new(),
        key_multiset_mismatch: false,
    };
    match &expected.ordering {
        ResultOrdering::Unordered => {
            let (m, x, w) = multiset_diff(&actual.rows, &expected.rows, float_tol);
            report.missing = m;
            report.extra = x;
            report.worst_float_deviation = w;
        }
        ResultOrdering::OrderedBy { keys, limited } => {
            report.order_violations = (1..actual.rows.len())
                .filter(|&i| cmp_on_keys(&actual.rows[i - 1], &actual.rows[i], keys) == Ordering::Greater)
                .collect();
            let boundary = expected.rows.last().filter(|_| *limited).map(|r| project(r, keys));
            match boundary {
                None => {
                    let (m, x, w) = multiset_diff(&actual.rows, &expected.rows, float_tol);
                    report.missing = m;
                    report.extra = x;
                    report.worst_float_deviation = w;
                }
                Some(b) => {
                    let ak: Vec<Row> = actual.rows.iter().map(|r| project(r, keys)).collect();
                    let ek: Vec<Row> = expected.rows.iter().map(|r| project(r, keys)).collect();
                    let (km, kx, _) = multiset_diff(&ak, &ek, float_tol);
                    report.key_multiset_mismatch = !km.is_empty() || !kx.is_empty();
                    let off_boundary = |rows: &[Row]| -> Vec<Row> {
                        rows.iter()
                            .filter(|r| rows_match(&project(r, keys), &b, float_tol).is_none())
                            .cloned()
                            .collect()
                    };
                    let (m, x, w) =
                        multiset_diff(&off_boundary(&actual.rows), &off_boundary(&expected.rows), float_tol);
                    report.missing = m;
                    report.extra = x;
                    report.worst_float_deviation = w;
                }
            }
        }
    }
    if !report.missing.is_empty()
        || !report.extra.is_empty()
        || !report.order_violations.is_empty()
        || report.key_multiset_mismatch
    {
        report.verdict = Verdict::Mismatch;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relmodel::{Field, Schema};
    use crate::value::DataType;

    fn rs(rows: Vec<Vec<Value>>, ordering: ResultOrdering) -> ResultSet {
        let schema = Schema::derived(vec![Field::new("k", DataType::Int64), Field::new("v", DataType::Float64)]);
        ResultSet::new(schema, rows.into_iter().map(Row::from).collect(), ordering)
    }

    fn r(k: i64, v: f64) -> Vec<Value> {
        vec![Value::Int(k), Value::Float(v)]
    }

    #[test]
    fn unordered_ignores_row_order() {
        let a = rs(vec![r(1, 1.0), r(2, 2.0)], ResultOrdering::Unordered);
        let b = rs(vec![r(2, 2.0), r(1, 1.0)], ResultOrdering::Unordered);
        assert!(compare(&a, &b, 1e-9).unwrap().is_equal());
        assert!(compare(&b, &a, 1e-9).unwrap().is_equal());
    }

    #[test]
    fn float_tolerance() {
        let a = rs(vec![r(1, 1.0 + 1e-12)], ResultOrdering::Unordered);
        let b = rs(vec![r(1, 1.0)], ResultOrdering::Unordered);
        let rep = compare(&a, &b, 1e-6).unwrap();
        assert!(rep.is_equal());
        assert!(rep.worst_float_deviation > 0.0);
        let c = rs(vec![r(1, 1.001)], ResultOrdering::Unordered);
        let rep = compare(&c, &b, 1e-6).unwrap();
        assert_eq!(rep.verdict, Verdict::Mismatch);
        assert_eq!((rep.missing.len(), rep.extra.len()), (1, 1));
    }

    #[test]
    fn boundary_ties_may_differ() {
        let top2 = ResultOrdering::OrderedBy {
            keys: vec![OrderKey {
                column: 0,
                descending: true,
            }],
            limited: true,
        };
        // Input keys [5, 5, 3]: either 5-row is a valid second row.
        let expected = rs(vec![r(5, 1.0), r(5, 2.0)], top2.clone());
        let actual = rs(vec![r(5, 2.0), r(5, 7.0)], top2.clone());
        assert!(compare(&actual, &expected, 1e-9).unwrap().is_equal());
        let wrong = rs(vec![r(5, 1.0), r(3, 0.0)], top2.clone());
        let rep = compare(&wrong, &expected, 1e-9).unwrap();
        assert!(rep.key_multiset_mismatch);
        let unsorted = rs(vec![r(5, 1.0), r(6, 0.0)], top2);
        assert!(!compare(&unsorted, &expected, 1e-9).unwrap().order_violations.is_empty());
    }

    #[test]
    fn reflexive_and_schema_checked() {
        let a = rs(vec![r(1, 0.5), r(1, 0.5)], ResultOrdering::Unordered);
        assert!(compare(&a, &a, 0.0).unwrap().is_equal());
        let other = ResultSet::new(
            Schema::derived(vec![Field::new("k", DataType::Text)]),
            vec![],
            ResultOrdering::Unordered,
        );
        assert!(compare(&a, &other, 1e-9).is_err());
    }

    #[test]
    fn duplicates_count() {
        let a = rs(vec![r(1, 0.5), r(1, 0.5)], ResultOrdering::Unordered);
        let b = rs(vec![r(1, 0.5)], ResultOrdering::Unordered);
        let rep = compare(&a, &b, 1e-9).unwrap();
        assert_eq!(rep.extra.len(), 1);
    }
}
