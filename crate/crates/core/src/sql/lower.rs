//! Lowering of the syntax tree to a logical plan.
//!
//! WHERE conjuncts are classified in textual order: single-relation
//! conjuncts are pushed below the joins onto their relation, equalities
//! between two relations become join keys, uncorrelated `IN (SELECT ...)`
//! becomes a semi (or anti) join, and everything else is filtered after the
//! joins. Comma-separated relations are joined left-deep, taking the next
//! connected relation in textual order, with the accumulated side as build.

use std::collections::{BTreeSet, HashSet};

use chrono::Months;

use super::ast::*;
use super::{DiagCategory, ParseDiag, Span};
use crate::plan::{col, lit, qcol, resolve, AggFunc, AggSpec, Expr, JoinKind, LogicalPlan, NamedExpr, PlanError, SortKey};
use crate::relmodel::{Catalog, Schema};
use crate::value::{date_to_days, days_to_date, Value};

type Scope = Vec<(String, Schema)>;
type Hook<'h> = &'h mut dyn FnMut(&SqlExpr) -> Option<Result<Expr, ParseDiag>>;
/// Join kind, index of the joined relation and its ON condition.
type JoinStep<'q> = (SqlJoinKind, usize, &'q SqlExpr);

pub(super) fn lower(q: &Query, catalog: &dyn Catalog) -> Result<LogicalPlan, ParseDiag> {
    let mut cx = Lowerer {
        catalog,
        ctes: Vec::new(),
        subqueries: 0,
    };
    let plan = cx.query(q, &[])?;
    resolve(&plan, catalog)
        .map(|(p, _)| p)
        .map_err(|e| plan_diag(q.body.span, e))
}

fn syntax(span: Span, msg: impl Into<String>) -> ParseDiag {
    ParseDiag::new(span, DiagCategory::Syntax, msg)
}

fn unsupported(span: Span, msg: impl Into<String>) -> ParseDiag {
    ParseDiag::new(span, DiagCategory::Unsupported, msg)
}

fn plan_diag(span: Span, e: PlanError) -> ParseDiag {
    syntax(span, e.to_string())
}

struct Lowerer<'a> {
    catalog: &'a dyn Catalog,
    ctes: Vec<(String, LogicalPlan)>,
    subqueries: usize,
}

enum RelOp {
    Filter(Expr),
    Semi {
        kind: JoinKind,
        build: LogicalPlan,
        build_key: Expr,
        probe_key: Expr,
    },
}

struct Rel {
    name: String,
    plan: LogicalPlan,
    schema: Schema,
    /// Right side of a LEFT JOIN; WHERE conjuncts on it stay above the join.
    nullable: bool,
    ops: Vec<RelOp>,
}

/// A join clause of an explicit `JOIN ... ON`.
struct Clause {
    kind: SqlJoinKind,
    rel: usize,
    /// (expression over the joined-so-far side, expression over `rel`).
    keys: Vec<(Expr, Expr)>,
    post: Vec<Expr>,
}

struct KeyCandidate {
    position: usize,
    rels: (usize, usize),
    exprs: (Expr, Expr),
    whole: Expr,
    used: bool,
}

fn apply_ops(mut plan: LogicalPlan, ops: Vec<RelOp>) -> LogicalPlan {
    let mut pending: Vec<Expr> = Vec::new();
    let flush = |plan: LogicalPlan, pending: &mut Vec<Expr>| {
        if pending.is_empty() {
            plan
        } else {
            LogicalPlan::Filter {
                input: Box::new(plan),
                predicates: std::mem::take(pending),
            }
        }
    };
    for op in ops {
        match op {
            RelOp::Filter(e) => pending.push(e),
            RelOp::Semi {
                kind,
                build,
                build_key,
                probe_key,
            } => {
                plan = flush(plan, &mut pending);
                plan = LogicalPlan::Join {
                    kind,
                    build: Box::new(build),
                    probe: Box::new(plan),
                    build_keys: vec![build_key],
                    probe_keys: vec![probe_key],
                };
            }
        }
    }
    flush(plan, &mut pending)
}

fn column_expr(table: &Option<String>, name: &str) -> Expr {
    match table {
        Some(t) => qcol(t, name),
        None => col(name),
    }
}

fn contains_subquery(e: &SqlExpr) -> bool {
    matches!(e, SqlExpr::InSubquery { .. }) || e.children().into_iter().any(contains_subquery)
}

fn shift_date(days: i32, value: i64, unit: IntervalUnit, span: Span) -> Result<i32, ParseDiag> {
    let overflow = || syntax(span, "date arithmetic out of range");
    let date = days_to_date(days).ok_or_else(overflow)?;
    let shifted = match unit {
        IntervalUnit::Day => date.checked_add_signed(chrono::Duration::days(value)),
        IntervalUnit::Month | IntervalUnit::Year => {
            let months = if unit == IntervalUnit::Year { value.checked_mul(12) } else { Some(value) };
            let months = months.ok_or_else(overflow)?;
            let m = Months::new(u32::try_from(months.unsigned_abs()).map_err(|_| overflow())?);
            if months >= 0 {
                date.checked_add_months(m)
            } else {
                date.checked_sub_months(m)
            }
        }
    };
    shifted.map(date_to_days).ok_or_else(overflow)
}

/// Converts a scalar expression. `hook` may claim any subtree first.
fn convert(e: &SqlExpr, span: Span, hook: Hook<'_>) -> Result<Expr, ParseDiag> {
    if let Some(r) = hook(e) {
        return r;
    }
    let mut go = |x: &SqlExpr| convert(x, span, &mut *hook);
    Ok(match e {
        SqlExpr::Column { table, name } => column_expr(table, name),
        SqlExpr::Int(v) => lit(Value::Int(*v)),
        SqlExpr::Float(v) => lit(Value::Float(*v)),
        SqlExpr::Str(s) => lit(Value::text(s)),
        SqlExpr::Date(d) => lit(Value::Date(*d)),
        SqlExpr::Bool(b) => lit(Value::Bool(*b)),
        SqlExpr::Null => lit(Value::Null),
        SqlExpr::Interval { .. } => return Err(syntax(span, "INTERVAL outside of date arithmetic")),
        SqlExpr::Neg(x) => lit(Value::Int(0)).sub(go(x)?),
        SqlExpr::Not(x) => go(x)?.not(),
        SqlExpr::Binary { op, left, right } => {
            if let SqlExpr::Interval { value, unit } = right.as_ref() {
                let sign = match op {
                    BinOp::Add => 1,
                    BinOp::Sub => -1,
                    _ => return Err(syntax(span, "INTERVAL outside of date arithmetic")),
                };
                return match go(left)? {
                    Expr::Literal(Value::Date(d)) => Ok(lit(Value::Date(shift_date(d, sign * value, *unit, span)?))),
                    _ => Err(unsupported(span, "date arithmetic on a non-constant date")),
                };
            }
            let (l, r) = (go(left)?, go(right)?);
            match op {
                BinOp::Add => l.add(r),
                BinOp::Sub => l.sub(r),
                BinOp::Mul => l.mul(r),
                BinOp::Div => l.div(r),
                BinOp::Mod => l.modulo(r),
                BinOp::Eq => l.eq(r),
                BinOp::NotEq => l.not_eq(r),
                BinOp::Lt => l.lt(r),
                BinOp::LtEq => l.lt_eq(r),
                BinOp::Gt => l.gt(r),
                BinOp::GtEq => l.gt_eq(r),
                BinOp::And => l.and(r),
                BinOp::Or => l.or(r),
            }
        }
        SqlExpr::Between {
            expr,
            low,
            high,
            negated,
        } => {
            let b = go(expr)?.between(go(low)?, go(high)?);
            if *negated {
                b.not()
            } else {
                b
            }
        }
        SqlExpr::InList { expr, list, negated } => {
            let x = go(expr)?;
            let mut values = Vec::with_capacity(list.len());
            for item in list {
                match go(item)? {
                    Expr::Literal(v) => values.push(v),
                    _ => return Err(unsupported(span, "IN list with non-constant elements")),
                }
            }
            Expr::InList {
                expr: Box::new(x),
                list: values,
                negated: *negated,
            }
        }
        SqlExpr::InSubquery { .. } => {
            return Err(unsupported(span, "IN subquery outside a top-level WHERE conjunct"))
        }
        SqlExpr::Like { expr, pattern, negated } => Expr::Like {
            expr: Box::new(go(expr)?),
            pattern: pattern.clone(),
            negated: *negated,
        },
        SqlExpr::Func { name, .. } if e.is_aggregate() => {
            return Err(syntax(span, format!("aggregate {} not allowed here", name.to_ascii_uppercase())))
        }
        SqlExpr::Func { name, .. } => {
            return Err(unsupported(span, format!("function {}", name.to_ascii_uppercase())))
        }
        SqlExpr::ExtractYear(x) => go(x)?.year(),
    })
}

fn plain(e: &SqlExpr, span: Span) -> Result<Expr, ParseDiag> {
    convert(e, span, &mut |_| None)
}

fn agg_func(name: &str) -> AggFunc {
    match name {
        "count" => AggFunc::Count,
        "sum" => AggFunc::Sum,
        "avg" => AggFunc::Avg,
        "min" => AggFunc::Min,
        _ => AggFunc::Max,
    }
}

fn collect_aggregates<'e>(e: &'e SqlExpr, out: &mut Vec<&'e SqlExpr>) {
    if e.is_aggregate() {
        out.push(e);
    } else {
        for c in e.children() {
            collect_aggregates(c, out);
        }
    }
}

fn unique_name(base: &str, used: &mut HashSet<String>) -> String {
    let mut name = base.to_string();
    let mut n = 2;
    while used.contains(&name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    used.insert(name.clone());
    name
}

/// Splits a WHERE clause into conjuncts, breaking a top-level BETWEEN into
/// its two comparisons.
fn where_conjuncts(e: &SqlExpr) -> Vec<SqlExpr> {
    let mut out = Vec::new();
    for c in e.conjuncts() {
        match c {
            SqlExpr::Between {
                expr,
                low,
                high,
                negated: false,
            } => {
                out.push(SqlExpr::Binary {
                    op: BinOp::GtEq,
                    left: expr.clone(),
                    right: low.clone(),
                });
                out.push(SqlExpr::Binary {
                    op: BinOp::LtEq,
                    left: expr.clone(),
                    right: high.clone(),
                });
            }
            other => out.push(other.clone()),
        }
    }
    out
}

impl Lowerer<'_> {
    fn schema_of(&self, plan: &LogicalPlan, span: Span) -> Result<Schema, ParseDiag> {
        resolve(plan, self.catalog)
            .map(|(_, s)| s)
            .map_err(|e| plan_diag(span, e))
    }

    fn query(&mut self, q: &Query, outer: &[Scope]) -> Result<LogicalPlan, ParseDiag> {
        let saved = self.ctes.len();
        let result = (|| {
            for cte in &q.with {
                let plan = self.query(&cte.query, outer)?;
                self.ctes.push((cte.name.clone(), plan));
            }
            self.select(q, outer)
        })();
        self.ctes.truncate(saved);
        result
    }

    fn factor(&mut self, tf: &TableFactor, outer: &[Scope], span: Span) -> Result<Rel, ParseDiag> {
        let (name, plan) = match tf {
            TableFactor::Table { name, alias } => {
                let rel = alias.clone().unwrap_or_else(|| name.clone());
                let cte = self.ctes.iter().rev().find(|(n, _)| n == name);
                let plan = match cte {
                    Some((_, p)) => LogicalPlan::SubqueryAlias {
                        input: Box::new(p.clone()),
                        name: rel.clone(),
                    },
                    None if self.catalog.table_schema(name).is_some() => LogicalPlan::Scan {
                        table: name.clone(),
                        alias: alias.clone(),
                    },
                    None => return Err(syntax(span, format!("unknown table {name}"))),
                };
                (rel, plan)
            }
            TableFactor::Derived { query, alias } => {
                let inner = self.query(query, outer)?;
                (
                    alias.clone(),
                    LogicalPlan::SubqueryAlias {
                        input: Box::new(inner),
                        name: alias.clone(),
                    },
                )
            }
        };
        Ok(Rel {
            schema: self.schema_of(&plan, span)?,
            name,
            plan,
            nullable: false,
            ops: Vec::new(),
        })
    }

    /// Relations referenced by `e`, by index into `rels`.
    fn owners(&self, e: &SqlExpr, rels: &[Rel], outer: &[Scope], span: Span) -> Result<BTreeSet<usize>, ParseDiag> {
        let mut out = BTreeSet::new();
        let mut stack = vec![e];
        while let Some(x) = stack.pop() {
            if let SqlExpr::Column { table, name } = x {
                let matches: Vec<usize> = rels
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        table.as_ref().is_none_or(|t| *t == r.name) && !r.schema.lookup(None, name).is_empty()
                    })
                    .map(|(i, _)| i)
                    .collect();
                match matches.len() {
                    1 => {
                        out.insert(matches[0]);
                    }
                    0 => {
                        let in_outer = outer.iter().flatten().any(|(rel, schema)| {
                            table.as_ref().is_none_or(|t| t == rel) && !schema.lookup(None, name).is_empty()
                        });
                        return Err(if in_outer {
                            unsupported(span, format!("correlated subquery (reference to outer column {x})"))
                        } else {
                            syntax(span, format!("unknown column {x}"))
                        });
                    }
                    _ => return Err(syntax(span, format!("ambiguous column {x}"))),
                }
            }
            if !matches!(x, SqlExpr::InSubquery { .. }) {
                stack.extend(x.children());
            } else if let SqlExpr::InSubquery { expr, .. } = x {
                stack.push(expr);
            }
        }
        Ok(out)
    }

    fn subquery_build(&mut self, q: &Query, scopes: &[Scope], span: Span) -> Result<(LogicalPlan, Expr), ParseDiag> {
        let sub = self.query(q, scopes)?;
        let schema = self.schema_of(&sub, span)?;
        if schema.len() != 1 {
            return Err(syntax(span, format!("IN subquery returns {} columns, expected 1", schema.len())));
        }
        let name = format!("__sq{}", self.subqueries);
        self.subqueries += 1;
        let key = qcol(&name, &schema.fields()[0].name);
        Ok((
            LogicalPlan::SubqueryAlias {
                input: Box::new(sub),
                name,
            },
            key,
        ))
    }

    fn select(&mut self, q: &Query, outer: &[Scope]) -> Result<LogicalPlan, ParseDiag> {
        let sel = &q.body;
        let span = sel.span;
        if sel.from.is_empty() {
            return Err(unsupported(span, "SELECT without FROM"));
        }

        let mut rels: Vec<Rel> = Vec::new();
        let mut items: Vec<(usize, Vec<JoinStep>)> = Vec::new();
        for item in &sel.from {
            let first = rels.len();
            rels.push(self.factor(&item.relation, outer, span)?);
            let mut joins = Vec::new();
            for j in &item.joins {
                let mut rel = self.factor(&j.relation, outer, span)?;
                rel.nullable = j.kind == SqlJoinKind::Left;
                joins.push((j.kind, rels.len(), &j.on));
                rels.push(rel);
            }
            items.push((first, joins));
        }
        for (i, r) in rels.iter().enumerate() {
            if rels[..i].iter().any(|o| o.name == r.name) {
                return Err(syntax(span, format!("relation name {} used twice", r.name)));
            }
        }
        let mut scopes: Vec<Scope> = vec![rels.iter().map(|r| (r.name.clone(), r.schema.clone())).collect()];
        scopes.extend(outer.iter().cloned());

        // ON clauses.
        let mut clauses: Vec<Vec<Clause>> = Vec::new();
        for (first, joins) in &items {
            let mut bound: BTreeSet<usize> = BTreeSet::from([*first]);
            let mut out = Vec::new();
            for (kind, r, on) in joins {
                let mut clause = Clause {
                    kind: *kind,
                    rel: *r,
                    keys: Vec::new(),
                    post: Vec::new(),
                };
                for c in where_conjuncts(on) {
                    if contains_subquery(&c) {
                        return Err(unsupported(span, "IN subquery in a JOIN condition"));
                    }
                    if c.contains_aggregate() {
                        return Err(syntax(span, "aggregate in a JOIN condition"));
                    }
                    let owners = self.owners(&c, &rels, outer, span)?;
                    if let Some(pair) = self.key_pair(&c, &rels, outer, span, |a, b| bound.contains(&a) && b == *r)? {
                        clause.keys.push(pair);
                        continue;
                    }
                    let e = plain(&c, span)?;
                    match kind {
                        SqlJoinKind::Left if owners.len() == 1 && owners.contains(r) => {
                            rels[*r].ops.push(RelOp::Filter(e))
                        }
                        SqlJoinKind::Left => {
                            return Err(unsupported(
                                span,
                                "LEFT JOIN condition other than key equalities and predicates on the joined table",
                            ))
                        }
                        SqlJoinKind::Inner if owners.len() == 1 => {
                            let o = *owners.iter().next().unwrap();
                            if rels[o].nullable && o != *r {
                                clause.post.push(e);
                            } else {
                                rels[o].ops.push(RelOp::Filter(e));
                            }
                        }
                        SqlJoinKind::Inner => clause.post.push(e),
                    }
                }
                if clause.keys.is_empty() {
                    return Err(unsupported(span, "JOIN without an equality condition"));
                }
                bound.insert(*r);
                out.push(clause);
            }
            clauses.push(out);
        }

        // WHERE conjuncts.
        let mut candidates: Vec<KeyCandidate> = Vec::new();
        let mut above: Vec<(usize, RelOp)> = Vec::new();
        let conjuncts = sel.selection.as_ref().map(where_conjuncts).unwrap_or_default();
        for (position, c) in conjuncts.iter().enumerate() {
            if c.contains_aggregate() {
                return Err(syntax(span, "aggregate in WHERE; use HAVING"));
            }
            if let SqlExpr::InSubquery { expr, query, negated } = c {
                if contains_subquery(expr) {
                    return Err(unsupported(span, "nested IN subquery"));
                }
                let owners = self.owners(expr, &rels, outer, span)?;
                let (build, build_key) = self.subquery_build(query, &scopes, span)?;
                let op = RelOp::Semi {
                    kind: if *negated { JoinKind::Anti } else { JoinKind::Semi },
                    build,
                    build_key,
                    probe_key: plain(expr, span)?,
                };
                match owners.iter().next() {
                    Some(&o) if owners.len() == 1 && !rels[o].nullable => rels[o].ops.push(op),
                    _ => above.push((position, op)),
                }
                continue;
            }
            if contains_subquery(c) {
                return Err(unsupported(span, "IN subquery nested inside another expression"));
            }
            let owners = self.owners(c, &rels, outer, span)?;
            let e = plain(c, span)?;
            if let Some(&o) = owners.iter().next() {
                if owners.len() == 1 && !rels[o].nullable {
                    rels[o].ops.push(RelOp::Filter(e));
                    continue;
                }
            }
            if let SqlExpr::Binary {
                op: BinOp::Eq,
                left,
                right,
            } = c
            {
                let (lo, ro) = (
                    self.owners(left, &rels, outer, span)?,
                    self.owners(right, &rels, outer, span)?,
                );
                if lo.len() == 1 && ro.len() == 1 && lo != ro {
                    let (a, b) = (*lo.iter().next().unwrap(), *ro.iter().next().unwrap());
                    if !rels[a].nullable && !rels[b].nullable {
                        candidates.push(KeyCandidate {
                            position,
                            rels: (a, b),
                            exprs: (plain(left, span)?, plain(right, span)?),
                            whole: e,
                            used: false,
                        });
                        continue;
                    }
                }
            }
            above.push((position, RelOp::Filter(e)));
        }

        // Assemble each FROM item, then join the items.
        let mut plans: Vec<Option<LogicalPlan>> = rels
            .iter_mut()
            .map(|r| Some(apply_ops(r.plan.clone(), std::mem::take(&mut r.ops))))
            .collect();
        let mut units: Vec<(BTreeSet<usize>, LogicalPlan)> = Vec::new();
        for ((first, _), item_clauses) in items.iter().zip(clauses) {
            let mut set = BTreeSet::from([*first]);
            let mut acc = plans[*first].take().expect("relation used once");
            for clause in item_clauses {
                let rel = plans[clause.rel].take().expect("relation used once");
                let (outer_keys, rel_keys): (Vec<Expr>, Vec<Expr>) = clause.keys.into_iter().unzip();
                acc = match clause.kind {
                    SqlJoinKind::Inner => LogicalPlan::Join {
                        kind: JoinKind::Inner,
                        build: Box::new(acc),
                        probe: Box::new(rel),
                        build_keys: outer_keys,
                        probe_keys: rel_keys,
                    },
                    SqlJoinKind::Left => LogicalPlan::Join {
                        kind: JoinKind::Left,
                        build: Box::new(rel),
                        probe: Box::new(acc),
                        build_keys: rel_keys,
                        probe_keys: outer_keys,
                    },
                };
                if !clause.post.is_empty() {
                    acc = LogicalPlan::Filter {
                        input: Box::new(acc),
                        predicates: clause.post,
                    };
                }
                set.insert(clause.rel);
            }
            units.push((set, acc));
        }
        let (mut set, mut plan) = units.remove(0);
        while !units.is_empty() {
            let connects = |k: &KeyCandidate, a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
                !k.used
                    && ((a.contains(&k.rels.0) && b.contains(&k.rels.1))
                        || (a.contains(&k.rels.1) && b.contains(&k.rels.0)))
            };
            let Some(pos) = units
                .iter()
                .position(|(u, _)| candidates.iter().any(|k| connects(k, &set, u)))
            else {
                return Err(unsupported(span, "cross join without an equality condition"));
            };
            let (uset, uplan) = units.remove(pos);
            let (mut build_keys, mut probe_keys) = (Vec::new(), Vec::new());
            for k in candidates.iter_mut() {
                if connects(k, &set, &uset) {
                    let (l, r) = k.exprs.clone();
                    if set.contains(&k.rels.0) {
                        build_keys.push(l);
                        probe_keys.push(r);
                    } else {
                        build_keys.push(r);
                        probe_keys.push(l);
                    }
                    k.used = true;
                }
            }
            plan = LogicalPlan::Join {
                kind: JoinKind::Inner,
                build: Box::new(plan),
                probe: Box::new(uplan),
                build_keys,
                probe_keys,
            };
            set.extend(uset);
        }
        above.extend(
            candidates
                .into_iter()
                .filter(|k| !k.used)
                .map(|k| (k.position, RelOp::Filter(k.whole))),
        );
        above.sort_by_key(|(p, _)| *p);
        plan = apply_ops(plan, above.into_iter().map(|(_, op)| op).collect());

        let (plan, names) = self.project(sel, plan, &rels, outer, span)?;
        let mut plan = if sel.distinct {
            LogicalPlan::Distinct { input: Box::new(plan) }
        } else {
            plan
        };
        if !q.order_by.is_empty() {
            let keys = self.order_keys(q, &plan, &names.0, &names.1, span)?;
            plan = LogicalPlan::Sort {
                input: Box::new(plan),
                keys,
            };
        }
        if let Some(n) = q.offset {
            plan = LogicalPlan::Skip {
                input: Box::new(plan),
                count: n,
            };
        }
        if let Some(n) = q.limit {
            plan = LogicalPlan::Limit {
                input: Box::new(plan),
                count: n,
            };
        }
        Ok(plan)
    }

    /// `a = b` where one side reads only a relation accepted by `side`'s
    /// first argument and the other only one accepted as second. Returns
    /// the pair oriented (first, second).
    fn key_pair(
        &self,
        c: &SqlExpr,
        rels: &[Rel],
        outer: &[Scope],
        span: Span,
        side: impl Fn(usize, usize) -> bool,
    ) -> Result<Option<(Expr, Expr)>, ParseDiag> {
        let SqlExpr::Binary {
            op: BinOp::Eq,
            left,
            right,
        } = c
        else {
            return Ok(None);
        };
        let lo = self.owners(left, rels, outer, span)?;
        let ro = self.owners(right, rels, outer, span)?;
        if lo.len() != 1 || ro.len() != 1 {
            return Ok(None);
        }
        let (a, b) = (*lo.iter().next().unwrap(), *ro.iter().next().unwrap());
        if side(a, b) {
            Ok(Some((plain(left, span)?, plain(right, span)?)))
        } else if side(b, a) {
            Ok(Some((plain(right, span)?, plain(left, span)?)))
        } else {
            Ok(None)
        }
    }

    /// Grouping, HAVING and the select list. Returns the plan and, per
    /// output column, its name and source expression.
    #[allow(clippy::type_complexity)]
    fn project(
        &self,
        sel: &Select,
        plan: LogicalPlan,
        rels: &[Rel],
        outer: &[Scope],
        span: Span,
    ) -> Result<(LogicalPlan, (Vec<String>, Vec<Option<SqlExpr>>)), ParseDiag> {
        let aggregated = !sel.group_by.is_empty()
            || sel.having.is_some()
            || sel.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate()));
        let input_schema = self.schema_of(&plan, span)?;

        if !aggregated {
            let mut exprs = Vec::new();
            let mut sources = Vec::new();
            for item in &sel.items {
                match item {
                    SelectItem::Wildcard => {
                        for r in rels {
                            for f in r.schema.fields() {
                                exprs.push(NamedExpr::new(qcol(&r.name, &f.name), &f.name));
                                sources.push(Some(SqlExpr::Column {
                                    table: Some(r.name.clone()),
                                    name: f.name.clone(),
                                }));
                            }
                        }
                    }
                    SelectItem::Expr { expr, alias } => {
                        if contains_subquery(expr) {
                            return Err(unsupported(span, "IN subquery in the select list"));
                        }
                        self.owners(expr, rels, outer, span)?;
                        let name = alias.clone().unwrap_or_else(|| match expr {
                            SqlExpr::Column { name, .. } => name.clone(),
                            other => other.to_string(),
                        });
                        exprs.push(NamedExpr::new(plain(expr, span)?, &name));
                        sources.push(Some(expr.clone()));
                    }
                }
            }
            let names = exprs.iter().map(|e| e.name.clone()).collect();
            let identity = exprs.len() == input_schema.len()
                && exprs.iter().enumerate().all(|(i, ne)| {
                    matches!(ne.expr.resolve(&input_schema), Ok(Expr::Column(c)) if c.index == Some(i))
                        && ne.name == input_schema.fields()[i].name
                });
            let plan = if identity {
                plan
            } else {
                LogicalPlan::Project {
                    input: Box::new(plan),
                    exprs,
                }
            };
            return Ok((plan, (names, sources)));
        }

        let mut used: HashSet<String> = HashSet::new();
        let items: Vec<(&SqlExpr, Option<&String>)> = sel
            .items
            .iter()
            .map(|i| match i {
                SelectItem::Wildcard => Err(syntax(span, "SELECT * with aggregation")),
                SelectItem::Expr { expr, alias } => Ok((expr, alias.as_ref())),
            })
            .collect::<Result<_, _>>()?;

        // Group keys, resolving aliases and ordinals.
        let mut keys: Vec<(SqlExpr, NamedExpr)> = Vec::new();
        for (i, g) in sel.group_by.iter().enumerate() {
            let g = match g {
                SqlExpr::Int(k) if *k >= 1 && (*k as usize) <= items.len() => items[*k as usize - 1].0.clone(),
                SqlExpr::Column { table: None, name } if self.owners(g, rels, outer, span).is_err() => {
                    match items.iter().find(|(_, a)| a.is_some_and(|a| a == name)) {
                        Some((e, _)) => (*e).clone(),
                        None => g.clone(),
                    }
                }
                other => other.clone(),
            };
            if g.contains_aggregate() {
                return Err(syntax(span, "aggregate in GROUP BY"));
            }
            self.owners(&g, rels, outer, span)?;
            let base = items
                .iter()
                .find(|(e, a)| **e == g && a.is_some())
                .and_then(|(_, a)| a.cloned())
                .or_else(|| match &g {
                    SqlExpr::Column { name, .. } => Some(name.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| format!("__key{i}"));
            let name = if used.contains(&base) {
                unique_name(&format!("__key{i}"), &mut used)
            } else {
                unique_name(&base, &mut used)
            };
            let expr = plain(&g, span)?;
            keys.push((g, NamedExpr::new(expr, &name)));
        }

        // Aggregates: select list first, then HAVING-only ones.
        let mut aggs: Vec<(SqlExpr, AggSpec)> = Vec::new();
        let add = |call: &SqlExpr, name: String, aggs: &mut Vec<(SqlExpr, AggSpec)>| -> Result<(), ParseDiag> {
            let SqlExpr::Func { name: f, args, star } = call else {
                unreachable!("aggregate is a call")
            };
            if args.iter().any(|a| a.contains_aggregate()) {
                return Err(syntax(span, "nested aggregate"));
            }
            if args.iter().any(contains_subquery) {
                return Err(unsupported(span, "IN subquery inside an aggregate"));
            }
            let spec = if *star {
                AggSpec::count_star(&name)
            } else {
                self.owners(&args[0], rels, outer, span)?;
                AggSpec::new(agg_func(f), plain(&args[0], span)?, &name)
            };
            aggs.push((call.clone(), spec));
            Ok(())
        };
        for (expr, alias) in &items {
            let mut calls = Vec::new();
            collect_aggregates(expr, &mut calls);
            for call in calls {
                if aggs.iter().any(|(c, _)| c == call) {
                    continue;
                }
                let base = match alias {
                    Some(a) if *expr == call => (*a).clone(),
                    _ => match call {
                        SqlExpr::Func { name, .. } => name.clone(),
                        _ => unreachable!(),
                    },
                };
                let name = unique_name(&base, &mut used);
                add(call, name, &mut aggs)?;
            }
        }
        if let Some(h) = &sel.having {
            let mut calls = Vec::new();
            collect_aggregates(h, &mut calls);
            for call in calls {
                if aggs.iter().any(|(c, _)| c == call) {
                    continue;
                }
                let name = unique_name(&format!("__having{}", aggs.len()), &mut used);
                add(call, name, &mut aggs)?;
            }
        }

        let key_index = |e: &SqlExpr| -> Option<usize> {
            let Ok(Expr::Column(c)) = plain(e, span).and_then(|x| x.resolve(&input_schema).map_err(|err| plan_diag(span, err))) else {
                return None;
            };
            c.index
        };
        let key_indices: Vec<Option<usize>> = keys.iter().map(|(g, _)| key_index(g)).collect();
        let mut hook = |e: &SqlExpr| -> Option<Result<Expr, ParseDiag>> {
            if let Some((_, ne)) = keys.iter().find(|(g, _)| g == e) {
                return Some(Ok(col(&ne.name)));
            }
            if let Some((_, a)) = aggs.iter().find(|(c, _)| c == e) {
                return Some(Ok(col(&a.name)));
            }
            if let SqlExpr::Column { .. } = e {
                let idx = key_index(e);
                return Some(match key_indices.iter().position(|k| k.is_some() && *k == idx) {
                    Some(k) => Ok(col(&keys[k].1.name)),
                    None => Err(syntax(
                        span,
                        format!("column {e} must appear in GROUP BY or inside an aggregate"),
                    )),
                });
            }
            None
        };

        let mut plan = LogicalPlan::GroupAggregate {
            input: Box::new(plan),
            keys: keys.iter().map(|(_, k)| k.clone()).collect(),
            aggs: aggs.iter().map(|(_, a)| a.clone()).collect(),
        };
        if let Some(h) = &sel.having {
            let predicates = h
                .conjuncts()
                .into_iter()
                .map(|c| convert(c, span, &mut hook))
                .collect::<Result<Vec<_>, _>>()?;
            plan = LogicalPlan::Filter {
                input: Box::new(plan),
                predicates,
            };
        }
        let group_names: Vec<String> = keys
            .iter()
            .map(|(_, k)| k.name.clone())
            .chain(aggs.iter().map(|(_, a)| a.name.clone()))
            .collect();
        let mut exprs = Vec::new();
        let mut sources = Vec::new();
        for (expr, alias) in &items {
            let converted = convert(expr, span, &mut hook)?;
            let name = match alias {
                Some(a) => (*a).clone(),
                None => match (&converted, expr) {
                    (Expr::Column(c), _) if c.relation.is_none() => c.name.clone(),
                    (_, SqlExpr::Column { name, .. }) => name.clone(),
                    _ => expr.to_string(),
                },
            };
            exprs.push(NamedExpr::new(converted, &name));
            sources.push(Some((*expr).clone()));
        }
        let identity = exprs.len() == group_names.len()
            && exprs
                .iter()
                .zip(&group_names)
                .all(|(ne, g)| ne.name == *g && ne.expr == col(g));
        let names = exprs.iter().map(|e| e.name.clone()).collect();
        if !identity {
            plan = LogicalPlan::Project {
                input: Box::new(plan),
                exprs,
            };
        }
        Ok((plan, (names, sources)))
    }

    fn order_keys(
        &self,
        q: &Query,
        plan: &LogicalPlan,
        names: &[String],
        sources: &[Option<SqlExpr>],
        span: Span,
    ) -> Result<Vec<SortKey>, ParseDiag> {
        let schema = self.schema_of(plan, span)?;
        let mut keys = Vec::new();
        for o in &q.order_by {
            let by_name = |n: &str| {
                let hits = schema.lookup(None, n);
                match hits.len() {
                    1 => Ok(col(n)),
                    0 => Err(unsupported(span, format!("ORDER BY {} not in the select list", o.expr))),
                    _ => Err(syntax(span, format!("ambiguous ORDER BY column {n}"))),
                }
            };
            let expr = match &o.expr {
                SqlExpr::Int(k) => {
                    let k = usize::try_from(*k).ok().filter(|k| (1..=names.len()).contains(k));
                    match k {
                        Some(k) => by_name(&names[k - 1])?,
                        None => return Err(syntax(span, format!("ORDER BY position {} out of range", o.expr))),
                    }
                }
                SqlExpr::Column { table: None, name } if names.contains(name) => by_name(name)?,
                e => match sources.iter().position(|s| s.as_ref() == Some(e)) {
                    Some(i) => by_name(&names[i])?,
                    None => {
                        let x = plain(e, span)?;
                        if x.resolve(&schema).is_err() {
                            return Err(unsupported(span, format!("ORDER BY {e} not in the select list")));
                        }
                        x
                    }
                },
            };
            keys.push(SortKey {
                expr,
                descending: o.desc,
            });
        }
        Ok(keys)
    }
}
