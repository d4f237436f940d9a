//! Reference interpreter and result comparison.
//!
//! The interpreter walks the plan one operator at a time over fully
//! materialized inputs: nested-loop joins, ordered-map grouping, tree-walk
//! expression evaluation. It shares no execution code with the engines.

mod compare;
mod result;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::plan::expr::{eval, is_true, EvalError};
use crate::plan::{output_ordering, resolve, AggFunc, AggSpec, Expr, JoinKind, LogicalPlan, PlanError};
use crate::relmodel::{Database, Row};
use crate::value::{DataType, Value};

pub use compare::{compare, CompareError, CompareReport, Verdict};
pub use result::ResultSet;

pub(crate) use result::cmp_rows;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no table named {0:?}")]
    UnknownTable(String),
}

/// Evaluates `plan` over `db` with the reference semantics.
pub fn evaluate(plan: &LogicalPlan, db: &Database) -> Result<ResultSet, OracleError> {
    let (resolved, schema) = resolve(plan, db)?;
    let rows = run(&resolved, db)?;
    Ok(ResultSet::new(schema, rows, output_ordering(&resolved)))
}

/// Key wrapper ordered by the total value order.
#[derive(Debug, Clone)]
struct OrdKey(Vec<Value>);

impl PartialEq for OrdKey {
    fn eq(&self, other: &OrdKey) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OrdKey {}

impl PartialOrd for OrdKey {
    fn partial_cmp(&self, other: &OrdKey) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdKey {
    fn cmp(&self, other: &OrdKey) -> Ordering {
        cmp_rows(&self.0, &other.0)
    }
}

fn eval_all(exprs: &[Expr], row: &[Value]) -> Result<Vec<Value>, EvalError> {
    exprs.iter().map(|e| eval(e, row)).collect()
}

fn keys_equal(a: &[Value], b: &[Value]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.sql_cmp(y) == Some(Ordering::Equal))
}

fn run(plan: &LogicalPlan, db: &Database) -> Result<Vec<Row>, OracleError> {
    use LogicalPlan as L;
    Ok(match plan {
        L::Scan { table, .. } => db
            .table(table)
            .ok_or_else(|| OracleError::UnknownTable(table.clone()))?
            .rows()
            .to_vec(),
        L::Filter { input, predicates } => {
            let mut out = Vec::new();
            'rows: for row in run(input, db)? {
                for p in predicates {
                    if !is_true(&eval(p, &row)?) {
                        continue 'rows;
                    }
                }
                out.push(row);
            }
            out
        }
        L::Project { input, exprs } => {
            let exprs: Vec<Expr> = exprs.iter().map(|n| n.expr.clone()).collect();
            run(input, db)?
                .iter()
                .map(|row| eval_all(&exprs, row).map(Row::from))
                .collect::<Result<_, _>>()?
        }
        L::Join {
            kind,
            build,
            probe,
            build_keys,
            probe_keys,
        } => {
            let build_rows = run(build, db)?;
            let build_width = resolve(build, db)?.1.len();
            let build_keyed: Vec<(Vec<Value>, Row)> = build_rows
                .into_iter()
                .map(|r| Ok((eval_all(build_keys, &r)?, r)))
                .collect::<Result<_, EvalError>>()?;
            let mut out = Vec::new();
            for p in run(probe, db)? {
                let pk = eval_all(probe_keys, &p)?;
                let mut matched = false;
                for (bk, b) in &build_keyed {
                    if !keys_equal(bk, &pk) {
                        continue;
                    }
                    matched = true;
                    match kind {
                        JoinKind::Inner | JoinKind::Left => {
                            out.push(b.iter().chain(p.iter()).cloned().collect::<Vec<_>>().into());
                        }
                        JoinKind::Semi | JoinKind::Anti => break,
                    }
                }
                match (kind, matched) {
                    (JoinKind::Left, false) => {
                        let mut padded = vec![Value::Null; build_width];
                        padded.extend(p.iter().cloned());
                        out.push(padded.into());
                    }
                    (JoinKind::Semi, true) | (JoinKind::Anti, false) => out.push(p.clone()),
                    _ => {}
                }
            }
            out
        }
        L::Sort { input, keys } => {
            let mut keyed: Vec<(Vec<Value>, Row)> = run(input, db)?
                .into_iter()
                .map(|r| {
                    let k = keys.iter().map(|k| eval(&k.expr, &r)).collect::<Result<Vec<_>, _>>()?;
                    Ok((k, r))
                })
                .collect::<Result<_, EvalError>>()?;
            keyed.sort_by(|(a, _), (b, _)| {
                for ((x, y), k) in a.iter().zip(b).zip(keys) {
                    let o = x.total_cmp(y);
                    let o = if k.descending { o.reverse() } else { o };
                    if o.is_ne() {
                        return o;
                    }
                }
                Ordering::Equal
            });
            keyed.into_iter().map(|(_, r)| r).collect()
        }
        L::Limit { input, count } => {
            let mut rows = run(input, db)?;
            rows.truncate(usize::try_from(*count).unwrap_or(usize::MAX));
            rows
        }
        L::Skip { input, count } => {
            let rows = run(input, db)?;
            let n = usize::try_from(*count).unwrap_or(usize::MAX).min(rows.len());
            rows[n..].to_vec()
        }
        L::GroupAggregate { input, keys, aggs } => {
            let in_schema = resolve(input, db)?.1;
            let key_exprs: Vec<Expr> = keys.iter().map(|k| k.expr.clone()).collect();
            let mut groups: BTreeMap<OrdKey, Vec<Row>> = BTreeMap::new();
            let rows = run(input, db)?;
            for r in &rows {
                let k = eval_all(&key_exprs, r)?;
                groups.entry(OrdKey(k)).or_default().push(r.clone());
            }
            if keys.is_empty() && groups.is_empty() {
                groups.insert(OrdKey(Vec::new()), Vec::new());
            }
            let mut out = Vec::with_capacity(groups.len());
            for (OrdKey(k), members) in groups {
                let mut row = k;
                for a in aggs {
                    let arg_ty = match &a.arg {
                        Some(e) => Some(e.data_type(&in_schema)?),
                        None => None,
                    };
                    row.push(aggregate(a, arg_ty, &members)?);
                }
                out.push(row.into());
            }
            out
        }
        L::Distinct { input } => {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for r in run(input, db)? {
                if seen.insert(OrdKey(r.to_vec())) {
                    out.push(r);
                }
            }
            out
        }
        L::SubqueryAlias { input, .. } => run(input, db)?,
    })
}

fn aggregate(spec: &AggSpec, arg_ty: Option<DataType>, rows: &[Row]) -> Result<Value, EvalError> {
    let Some(arg) = &spec.arg else {
        return Ok(Value::Int(rows.len() as i64));
    };
    let mut vals = Vec::with_capacity(rows.len());
    for r in rows {
        let v = eval(arg, r)?;
        if !v.is_null() {
            vals.push(v);
        }
    }
    let int = arg_ty == Some(DataType::Int64);
    Ok(match spec.func {
        AggFunc::Count => Value::Int(vals.len() as i64),
        _ if vals.is_empty() => Value::Null,
        AggFunc::Sum if int => Value::Int(vals.iter().fold(0i64, |s, v| s.wrapping_add(v.as_i64().unwrap_or(0)))),
        AggFunc::Sum => Value::Float(vals.iter().filter_map(Value::as_f64).sum()),
        AggFunc::Avg if int => {
            let s = vals.iter().fold(0i64, |s, v| s.wrapping_add(v.as_i64().unwrap_or(0)));
            Value::Float(s as f64 / vals.len() as f64)
        }
        AggFunc::Avg => Value::Float(vals.iter().filter_map(Value::as_f64).sum::<f64>() / vals.len() as f64),
        AggFunc::Min => vals.iter().min_by(|a, b| a.total_cmp(b)).cloned().unwrap_or(Value::Null),
        AggFunc::Max => vals.iter().max_by(|a, b| a.total_cmp(b)).cloned().unwrap_or(Value::Null),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{col, lit, NamedExpr, PlanBuilder};
    use crate::relmodel::{Schema, TableData};

    fn orders(n: i64, p: i64) -> Database {
        let schema = Schema::of(&[("id", DataType::Int64), ("p", DataType::Int64)]);
        let rows = (0..n).map(|i| Row::from(vec![Value::Int(i), Value::Int(p)])).collect();
        let mut db = Database::new();
        db.insert(TableData::new("orders", schema, rows).unwrap());
        db
    }

    #[test]
    fn onefield_by_hand() {
        let db = orders(10, 1);
        let plan = PlanBuilder::scan(&db, "orders")
            .unwrap()
            .group_by(
                vec![NamedExpr::new(col("id").modulo(lit(3i64)), "g")],
                vec![AggSpec::sum(col("p"), "s"), AggSpec::count_star("c")],
            )
            .unwrap()
            .build();
        let rs = evaluate(&plan, &db).unwrap();
        let got: Vec<Vec<Value>> = rs.canonical_rows().iter().map(|r| r.to_vec()).collect();
        let want: Vec<Vec<Value>> = [(0, 4), (1, 3), (2, 3)]
            .iter()
            .map(|&(g, s)| vec![Value::Int(g), Value::Int(s), Value::Int(s)])
            .collect();
        assert_eq!(got, want);
    }

    fn two_tables(build_rows: i64) -> Database {
        let mut db = orders(5, 1);
        let schema = Schema::of(&[("k", DataType::Int64), ("tag", DataType::Text)]);
        let rows = (0..build_rows)
            .map(|i| Row::from(vec![Value::Int(i), Value::text(format!("t{i}"))]))
            .collect();
        db.insert(TableData::new("dim", schema, rows).unwrap());
        db
    }

    fn join(db: &Database, kind: JoinKind) -> LogicalPlan {
        PlanBuilder::scan(db, "dim")
            .unwrap()
            .join(PlanBuilder::scan(db, "orders").unwrap(), kind, vec![col("k")], vec![col("id")])
            .unwrap()
            .build()
    }

    #[test]
    fn anti_join_all_matching_is_empty() {
        let db = two_tables(5);
        assert!(evaluate(&join(&db, JoinKind::Anti), &db).unwrap().is_empty());
        assert_eq!(evaluate(&join(&db, JoinKind::Semi), &db).unwrap().len(), 5);
    }

    #[test]
    fn left_join_with_empty_build_pads_everything() {
        let db = two_tables(0);
        let rs = evaluate(&join(&db, JoinKind::Left), &db).unwrap();
        assert_eq!(rs.len(), 5);
        for r in &rs.rows {
            assert_eq!(&r[..2], &[Value::Null, Value::Null]);
        }
    }

    #[test]
    fn scalar_aggregate_over_nothing() {
        let db = orders(0, 1);
        let plan = PlanBuilder::scan(&db, "orders")
            .unwrap()
            .group_by(vec![], vec![AggSpec::count_star("c"), AggSpec::sum(col("p"), "s")])
            .unwrap()
            .build();
        let rs = evaluate(&plan, &db).unwrap();
        assert_eq!(rs.rows, vec![Row::from(vec![Value::Int(0), Value::Null])]);
    }
}
