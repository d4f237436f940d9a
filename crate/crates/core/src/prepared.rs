//! Closure-compiled expressions and the prepared plan shared by both
//! execution backends.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::plan::expr::{arith, compare, extract_year, in_list, is_true, like_match, CmpOp, EvalError};
use crate::plan::{
    hoist_probe_aggregates, output_ordering, resolve, AggFunc, ColumnRef, Expr, JoinKind, LogicalPlan, PlanError,
    ResultOrdering,
};
use crate::relmodel::{Catalog, Schema};
use crate::value::{DataType, Value};

type ValueFn = Box<dyn Fn(&[Value]) -> Result<Value, EvalError> + Send + Sync>;
type PredFn = Box<dyn Fn(&[Value]) -> Result<bool, EvalError> + Send + Sync>;

/// A resolved expression compiled to closures. `test` is the predicate
/// form: true only when the value is `Bool(true)`.
pub struct PreparedExpr {
    source: Expr,
    value: ValueFn,
    pred: PredFn,
}

/// Shared handle to a prepared expression. Both backends hold the same
/// handles for the same plan node.
pub type Evaluator = Arc<PreparedExpr>;

impl PreparedExpr {
    pub fn new(expr: &Expr) -> Result<PreparedExpr, PlanError> {
        Ok(PreparedExpr {
            source: expr.clone(),
            value: compile_value(expr)?,
            pred: compile_pred(expr)?,
        })
    }

    #[inline]
    pub fn eval(&self, row: &[Value]) -> Result<Value, EvalError> {
        (self.value)(row)
    }

    #[inline]
    pub fn test(&self, row: &[Value]) -> Result<bool, EvalError> {
        (self.pred)(row)
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }
}

impl fmt::Debug for PreparedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prepared({})", self.source)
    }
}

impl fmt::Display for PreparedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)
    }
}

fn index_of(c: &ColumnRef) -> Result<usize, PlanError> {
    c.index.ok_or_else(|| PlanError::UnknownColumn(c.name.clone()))
}

#[inline]
fn cell(row: &[Value], i: usize) -> Result<&Value, EvalError> {
    row.get(i).ok_or(EvalError::OutOfRange {
        index: i,
        arity: row.len(),
    })
}

fn compile_value(expr: &Expr) -> Result<ValueFn, PlanError> {
    Ok(match expr {
        Expr::Column(c) => {
            let i = index_of(c)?;
            Box::new(move |row| cell(row, i).cloned())
        }
        Expr::Literal(v) => {
            let v = v.clone();
            Box::new(move |_| Ok(v.clone()))
        }
        Expr::Arith { op, left, right } => {
            let op = *op;
            match (left.as_ref(), right.as_ref()) {
                (Expr::Column(c), Expr::Literal(v)) => {
                    let (i, v) = (index_of(c)?, v.clone());
                    Box::new(move |row| arith(op, cell(row, i)?, &v))
                }
                (Expr::Column(a), Expr::Column(b)) => {
                    let (i, j) = (index_of(a)?, index_of(b)?);
                    Box::new(move |row| arith(op, cell(row, i)?, cell(row, j)?))
                }
                _ => {
                    let (l, r) = (compile_value(left)?, compile_value(right)?);
                    Box::new(move |row| arith(op, &l(row)?, &r(row)?))
                }
            }
        }
        Expr::Counted(counter, inner) => {
            let counter = counter.clone();
            let f = compile_value(inner)?;
            Box::new(move |row| {
                counter.bump();
                f(row)
            })
        }
        Expr::ExtractYear(inner) => {
            let f = compile_value(inner)?;
            Box::new(move |row| extract_year(&f(row)?))
        }
        Expr::InList { expr, list, negated } => {
            let f = compile_value(expr)?;
            let (list, negated) = (list.clone(), *negated);
            Box::new(move |row| Ok(in_list(&f(row)?, &list, negated)))
        }
        Expr::Compare { op, left, right } => {
            let op = *op;
            let (l, r) = (compile_value(left)?, compile_value(right)?);
            Box::new(move |row| Ok(compare(op, &l(row)?, &r(row)?)))
        }
        Expr::Like { expr: inner, pattern, negated } => {
            let f = compile_value(inner)?;
            let matcher = like_matcher(pattern);
            let negated = *negated;
            Box::new(move |row| {
                Ok(match f(row)? {
                    Value::Text(s) => Value::Bool(matcher(&s) != negated),
                    _ => Value::Null,
                })
            })
        }
        Expr::And(l, r) => {
            let (l, r) = (compile_value(l)?, compile_value(r)?);
            Box::new(move |row| {
                let lv = l(row)?;
                if lv == Value::Bool(false) {
                    return Ok(lv);
                }
                Ok(match (lv, r(row)?) {
                    (_, Value::Bool(false)) => Value::Bool(false),
                    (Value::Bool(true), Value::Bool(true)) => Value::Bool(true),
                    _ => Value::Null,
                })
            })
        }
        Expr::Or(l, r) => {
            let (l, r) = (compile_value(l)?, compile_value(r)?);
            Box::new(move |row| {
                let lv = l(row)?;
                if lv == Value::Bool(true) {
                    return Ok(lv);
                }
                Ok(match (lv, r(row)?) {
                    (_, Value::Bool(true)) => Value::Bool(true),
                    (Value::Bool(false), Value::Bool(false)) => Value::Bool(false),
                    _ => Value::Null,
                })
            })
        }
        Expr::Not(inner) => {
            let f = compile_value(inner)?;
            Box::new(move |row| {
                Ok(match f(row)? {
                    Value::Bool(b) => Value::Bool(!b),
                    _ => Value::Null,
                })
            })
        }
        Expr::Between { expr, low, high } => {
            let (e, lo, hi) = (compile_value(expr)?, compile_value(low)?, compile_value(high)?);
            Box::new(move |row| {
                let v = e(row)?;
                let ge = compare(CmpOp::GtEq, &v, &lo(row)?);
                if ge == Value::Bool(false) {
                    return Ok(ge);
                }
                Ok(match (ge, compare(CmpOp::LtEq, &v, &hi(row)?)) {
                    (_, Value::Bool(false)) => Value::Bool(false),
                    (Value::Bool(true), Value::Bool(true)) => Value::Bool(true),
                    _ => Value::Null,
                })
            })
        }
    })
}

#[derive(Clone, Copy)]
enum LikeShape {
    Contains,
    Prefix,
    Suffix,
    Exact,
}

fn like_shape(pattern: &str) -> Option<(LikeShape, String)> {
    if pattern.contains('_') {
        return None;
    }
    let inner = pattern.trim_matches('%');
    if inner.contains('%') {
        return None;
    }
    let lead = pattern.starts_with('%');
    let trail = pattern.ends_with('%') && pattern.len() > 1;
    let shape = match (lead, trail) {
        (true, true) => LikeShape::Contains,
        (false, true) => LikeShape::Prefix,
        (true, false) => LikeShape::Suffix,
        (false, false) => LikeShape::Exact,
    };
    Some((shape, inner.to_string()))
}

type Matcher = Box<dyn Fn(&str) -> bool + Send + Sync>;

fn like_matcher(pattern: &str) -> Matcher {
    match like_shape(pattern) {
        Some((LikeShape::Contains, s)) => Box::new(move |t| t.contains(s.as_str())),
        Some((LikeShape::Prefix, s)) => Box::new(move |t| t.starts_with(s.as_str())),
        Some((LikeShape::Suffix, s)) => Box::new(move |t| t.ends_with(s.as_str())),
        Some((LikeShape::Exact, s)) => Box::new(move |t| t == s),
        None => {
            let p = pattern.to_string();
            Box::new(move |t| like_match(t, &p))
        }
    }
}

fn compile_pred(expr: &Expr) -> Result<PredFn, PlanError> {
    Ok(match expr {
        Expr::Compare { op, left, right } => {
            let op = *op;
            let test = move |a: &Value, b: &Value| a.sql_cmp(b).is_some_and(|o: Ordering| op.holds(o));
            match (left.as_ref(), right.as_ref()) {
                (Expr::Column(c), Expr::Literal(v)) => {
                    let (i, v) = (index_of(c)?, v.clone());
                    Box::new(move |row| Ok(test(cell(row, i)?, &v)))
                }
                (Expr::Column(a), Expr::Column(b)) => {
                    let (i, j) = (index_of(a)?, index_of(b)?);
                    Box::new(move |row| Ok(test(cell(row, i)?, cell(row, j)?)))
                }
                _ => {
                    let (l, r) = (compile_value(left)?, compile_value(right)?);
                    Box::new(move |row| Ok(test(&l(row)?, &r(row)?)))
                }
            }
        }
        Expr::Like {
            expr: inner,
            pattern,
            negated,
        } => {
            let negated = *negated;
            let matcher = like_matcher(pattern);
            match inner.as_ref() {
                Expr::Column(c) => {
                    let i = index_of(c)?;
                    Box::new(move |row| {
                        Ok(match cell(row, i)? {
                            Value::Text(s) => matcher(s) != negated,
                            _ => false,
                        })
                    })
                }
                _ => {
                    let f = compile_value(inner)?;
                    Box::new(move |row| {
                        Ok(match f(row)? {
                            Value::Text(s) => matcher(&s) != negated,
                            _ => false,
                        })
                    })
                }
            }
        }
        Expr::And(l, r) => {
            let (l, r) = (compile_pred(l)?, compile_pred(r)?);
            Box::new(move |row| Ok(l(row)? && r(row)?))
        }
        Expr::Or(l, r) => {
            let (l, r) = (compile_pred(l)?, compile_pred(r)?);
            Box::new(move |row| Ok(l(row)? || r(row)?))
        }
        Expr::Counted(counter, inner) => {
            let counter = counter.clone();
            let f = compile_pred(inner)?;
            Box::new(move |row| {
                counter.bump();
                f(row)
            })
        }
        _ => {
            let f = compile_value(expr)?;
            Box::new(move |row| Ok(is_true(&f(row)?)))
        }
    })
}

/// Aggregate state layout chosen from the argument type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggKind {
    CountStar,
    Count,
    SumInt,
    SumFloat,
    AvgInt,
    AvgFloat,
    Min,
    Max,
}

#[derive(Debug, Clone)]
pub struct PreparedAgg {
    pub kind: AggKind,
    pub arg: Option<Evaluator>,
    pub arg_type: Option<DataType>,
    pub name: String,
}

/// Plan tree with every expression replaced by a shared evaluator.
/// Subquery aliases are gone; they only affect name resolution.
#[derive(Debug, Clone)]
pub enum PreparedPlan {
    Scan {
        table: String,
    },
    Filter {
        input: Box<PreparedPlan>,
        predicates: Vec<Evaluator>,
    },
    Project {
        input: Box<PreparedPlan>,
        exprs: Vec<Evaluator>,
    },
    Join {
        kind: JoinKind,
        build: Box<PreparedPlan>,
        probe: Box<PreparedPlan>,
        build_keys: Vec<Evaluator>,
        probe_keys: Vec<Evaluator>,
        build_width: usize,
    },
    Sort {
        input: Box<PreparedPlan>,
        keys: Vec<(Evaluator, bool)>,
    },
    Limit {
        input: Box<PreparedPlan>,
        count: u64,
    },
    Skip {
        input: Box<PreparedPlan>,
        count: u64,
    },
    GroupAggregate {
        input: Box<PreparedPlan>,
        keys: Vec<Evaluator>,
        aggs: Vec<PreparedAgg>,
    },
    Distinct {
        input: Box<PreparedPlan>,
    },
}

/// A plan ready for execution, with its output contract.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub root: PreparedPlan,
    pub schema: Schema,
    pub ordering: ResultOrdering,
}

/// Resolves, applies the probe-side aggregate rewrite and compiles every
/// expression once.
pub fn prepare(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<PreparedQuery, PlanError> {
    let (resolved, schema) = resolve(plan, catalog)?;
    let ordering = output_ordering(&resolved);
    let rewritten = hoist_probe_aggregates(&resolved, catalog)?;
    let root = build(&rewritten, catalog)?;
    Ok(PreparedQuery { root, schema, ordering })
}

fn ev(e: &Expr) -> Result<Evaluator, PlanError> {
    Ok(Arc::new(PreparedExpr::new(e)?))
}

fn build(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<PreparedPlan, PlanError> {
    use LogicalPlan as L;
    let sub = |p: &LogicalPlan| build(p, catalog).map(Box::new);
    Ok(match plan {
        L::Scan { table, .. } => PreparedPlan::Scan { table: table.clone() },
        L::Filter { input, predicates } => PreparedPlan::Filter {
            input: sub(input)?,
            predicates: predicates.iter().map(ev).collect::<Result<_, _>>()?,
        },
        L::Project { input, exprs } => PreparedPlan::Project {
            input: sub(input)?,
            exprs: exprs.iter().map(|n| ev(&n.expr)).collect::<Result<_, _>>()?,
        },
        L::Join {
            kind,
            build: b,
            probe,
            build_keys,
            probe_keys,
        } => PreparedPlan::Join {
            kind: *kind,
            build_width: resolve(b, catalog)?.1.len(),
            build: sub(b)?,
            probe: sub(probe)?,
            build_keys: build_keys.iter().map(ev).collect::<Result<_, _>>()?,
            probe_keys: probe_keys.iter().map(ev).collect::<Result<_, _>>()?,
        },
        L::Sort { input, keys } => PreparedPlan::Sort {
            input: sub(input)?,
            keys: keys
                .iter()
                .map(|k| Ok((ev(&k.expr)?, k.descending)))
                .collect::<Result<_, PlanError>>()?,
        },
        L::Limit { input, count } => PreparedPlan::Limit {
            input: sub(input)?,
            count: *count,
        },
        L::Skip { input, count } => PreparedPlan::Skip {
            input: sub(input)?,
            count: *count,
        },
        L::GroupAggregate { input, keys, aggs } => {
            let in_schema = resolve(input, catalog)?.1;
            let mut prepared = Vec::with_capacity(aggs.len());
            for a in aggs {
                let arg_ty = match &a.arg {
                    Some(e) => Some(e.data_type(&in_schema)?),
                    None => None,
                };
                let int = arg_ty == Some(DataType::Int64);
                let kind = match (a.func, &a.arg) {
                    (AggFunc::Count, None) => AggKind::CountStar,
                    (AggFunc::Count, Some(_)) => AggKind::Count,
                    (AggFunc::Sum, _) if int => AggKind::SumInt,
                    (AggFunc::Sum, _) => AggKind::SumFloat,
                    (AggFunc::Avg, _) if int => AggKind::AvgInt,
                    (AggFunc::Avg, _) => AggKind::AvgFloat,
                    (AggFunc::Min, _) => AggKind::Min,
                    (AggFunc::Max, _) => AggKind::Max,
                };
                prepared.push(PreparedAgg {
                    kind,
                    arg: a.arg.as_ref().map(ev).transpose()?,
                    arg_type: arg_ty,
                    name: a.name.clone(),
                });
            }
            PreparedPlan::GroupAggregate {
                input: sub(input)?,
                keys: keys.iter().map(|k| ev(&k.expr)).collect::<Result<_, _>>()?,
                aggs: prepared,
            }
        }
        L::Distinct { input } => PreparedPlan::Distinct { input: sub(input)? },
        L::SubqueryAlias { input, .. } => build(input, catalog)?,
    })
}

/// Evaluates every evaluator into `out`, reusing its allocation.
#[inline]
pub(crate) fn eval_into(evals: &[Evaluator], row: &[Value], out: &mut Vec<Value>) -> Result<(), EvalError> {
    out.clear();
    for e in evals {
        out.push(e.eval(row)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::expr::eval;
    use crate::plan::{col, lit, EvalCounter};
    use crate::relmodel::Field;
    use crate::value::ymd;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::derived(vec![
            Field::new("i", DataType::Int64),
            Field::new("f", DataType::Float64),
            Field::new("t", DataType::Text),
            Field::new("d", DataType::Date),
        ])
    }

    fn exprs() -> Vec<Expr> {
        vec![
            col("i").gt_eq(lit(3i64)),
            col("i").mul(col("f")).sub(lit(1.5)),
            col("t").like("%ee%"),
            col("t").like("gr%"),
            col("t").like("_r%n"),
            col("d").year().eq(lit(2024i64)),
            col("i").between(lit(1i64), lit(5i64)).not(),
            col("f").lt(lit(2.0)).or(col("t").eq(lit("x"))),
            col("i").in_list(vec![Value::Int(1), Value::Int(4)]),
            col("i").modulo(lit(3i64)),
            lit(Value::Null).lt(col("i")).not(),
            col("i").eq(col("i")).and(lit(Value::Null).eq(lit(1i64))),
        ]
    }

    proptest! {
        #[test]
        fn closures_agree_with_interpreter(
            i in -10i64..10,
            f in -5.0f64..5.0,
            t in prop::sample::select(vec!["green", "grain", "agreed", "", "x"]),
            y in 2022i32..2026,
            null_mask in 0u8..16,
        ) {
            let mut row = vec![Value::Int(i), Value::Float(f), Value::text(t), Value::Date(ymd(y, 2, 1))];
            for (k, v) in row.iter_mut().enumerate() {
                if null_mask & (1 << k) != 0 {
                    *v = Value::Null;
                }
            }
            for e in exprs() {
                let r = e.resolve(&schema()).unwrap();
                let p = PreparedExpr::new(&r).unwrap();
                let want = eval(&r, &row);
                prop_assert_eq!(p.eval(&row), want.clone(), "{}", r);
                if let Ok(v) = want {
                    if r.data_type(&schema()).unwrap() == DataType::Bool {
                        prop_assert_eq!(p.test(&row).unwrap(), is_true(&v), "{}", r);
                    }
                }
            }
        }
    }

    #[test]
    fn counted_predicate_bumps_once_per_test() {
        let c = EvalCounter::new();
        let e = col("i").gt(lit(0i64)).counted(&c).resolve(&schema()).unwrap();
        let p = PreparedExpr::new(&e).unwrap();
        let row = [Value::Int(1), Value::Null, Value::Null, Value::Null];
        assert!(p.test(&row).unwrap());
        assert!(!p.test(&[Value::Int(0), Value::Null, Value::Null, Value::Null]).unwrap());
        assert_eq!(c.get(), 2);
    }
}
