//! Expressions, logical plans, the programmatic builder and validation.

mod builder;
mod explain;
pub mod expr;
mod rewrite;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::relmodel::{Catalog, Field, Schema};
use crate::value::DataType;

pub use builder::PlanBuilder;
pub use explain::explain;
pub use expr::{col, eval, lit, qcol, ArithOp, CmpOp, ColumnRef, EvalCounter, EvalError, Expr};
pub use rewrite::hoist_probe_aggregates;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("ambiguous column {0:?}")]
    AmbiguousColumn(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("join keys: {0}")]
    JoinKeys(String),
    #[error("filter with no predicates")]
    EmptyFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JoinKind {
    Inner,
    /// Keeps every probe record, padding the build columns with Null.
    Left,
    Semi,
    Anti,
}

impl JoinKind {
    pub fn name(self) -> &'static str {
        match self {
            JoinKind::Inner => "Inner",
            JoinKind::Left => "Left",
            JoinKind::Semi => "Semi",
            JoinKind::Anti => "Anti",
        }
    }

    /// Whether the output carries the build-side columns.
    pub fn emits_build(self) -> bool {
        matches!(self, JoinKind::Inner | JoinKind::Left)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub expr: Expr,
    pub descending: bool,
}

impl SortKey {
    pub fn asc(expr: Expr) -> SortKey {
        SortKey {
            expr,
            descending: false,
        }
    }

    pub fn desc(expr: Expr) -> SortKey {
        SortKey {
            expr,
            descending: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

/// One aggregate. `arg = None` is `COUNT(*)`; `COUNT(e)` skips Nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct AggSpec {
    pub func: AggFunc,
    pub arg: Option<Expr>,
    pub name: String,
}

impl AggSpec {
    pub fn new(func: AggFunc, arg: Expr, name: &str) -> AggSpec {
        AggSpec {
            func,
            arg: Some(arg),
            name: name.to_string(),
        }
    }

    pub fn count_star(name: &str) -> AggSpec {
        AggSpec {
            func: AggFunc::Count,
            arg: None,
            name: name.to_string(),
        }
    }

    pub fn sum(arg: Expr, name: &str) -> AggSpec {
        AggSpec::new(AggFunc::Sum, arg, name)
    }

    pub fn avg(arg: Expr, name: &str) -> AggSpec {
        AggSpec::new(AggFunc::Avg, arg, name)
    }

    pub fn min(arg: Expr, name: &str) -> AggSpec {
        AggSpec::new(AggFunc::Min, arg, name)
    }

    pub fn max(arg: Expr, name: &str) -> AggSpec {
        AggSpec::new(AggFunc::Max, arg, name)
    }

    pub fn output_type(&self, input: &Schema) -> Result<DataType, PlanError> {
        let arg_ty = match &self.arg {
            Some(e) => e.data_type(input)?,
            None => return Ok(DataType::Int64),
        };
        match self.func {
            AggFunc::Count => Ok(DataType::Int64),
            AggFunc::Sum | AggFunc::Avg if !arg_ty.is_numeric() => Err(PlanError::Type(format!(
                "{} over {arg_ty} in {self}",
                self.func.name()
            ))),
            AggFunc::Sum => Ok(arg_ty),
            AggFunc::Avg => Ok(DataType::Float64),
            AggFunc::Min | AggFunc::Max if arg_ty == DataType::Bool => Err(PlanError::Type(format!(
                "{} over Bool in {self}",
                self.func.name()
            ))),
            AggFunc::Min | AggFunc::Max => Ok(arg_ty),
        }
    }
}

impl fmt::Display for AggSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(e) => write!(f, "{}({e}) AS {}", self.func.name(), self.name),
            None => write!(f, "{}(*) AS {}", self.func.name(), self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedExpr {
    pub expr: Expr,
    pub name: String,
}

impl NamedExpr {
    pub fn new(expr: Expr, name: &str) -> NamedExpr {
        NamedExpr {
            expr,
            name: name.to_string(),
        }
    }
}

impl fmt::Display for NamedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} AS {}", self.expr, self.name)
    }
}

/// One node per line, children indented below their parent; a join lists
/// its build side first.
impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_tree(f, 0)
    }
}

/// Relational operator tree. The join's `build` child is materialized into
/// a hash map; `probe` streams against it.
#[derive(Debug, Clone, PartialEq)]
pub enum LogicalPlan {
    Scan {
        table: String,
        alias: Option<String>,
    },
    Filter {
        input: Box<LogicalPlan>,
        predicates: Vec<Expr>,
    },
    Project {
        input: Box<LogicalPlan>,
        exprs: Vec<NamedExpr>,
    },
    Join {
        kind: JoinKind,
        build: Box<LogicalPlan>,
        probe: Box<LogicalPlan>,
        build_keys: Vec<Expr>,
        probe_keys: Vec<Expr>,
    },
    Sort {
        input: Box<LogicalPlan>,
        keys: Vec<SortKey>,
    },
    Limit {
        input: Box<LogicalPlan>,
        count: u64,
    },
    Skip {
        input: Box<LogicalPlan>,
        count: u64,
    },
    GroupAggregate {
        input: Box<LogicalPlan>,
        keys: Vec<NamedExpr>,
        aggs: Vec<AggSpec>,
    },
    Distinct {
        input: Box<LogicalPlan>,
    },
    /// Requalifies every output column with `name` (derived tables, CTEs).
    SubqueryAlias {
        input: Box<LogicalPlan>,
        name: String,
    },
}

fn joined<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

impl LogicalPlan {
    fn fmt_tree(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        use LogicalPlan as L;
        write!(f, "{:width$}", "", width = depth * 2)?;
        match self {
            L::Scan { table, alias: Some(a) } => writeln!(f, "Scan {table} AS {a}")?,
            L::Scan { table, alias: None } => writeln!(f, "Scan {table}")?,
            L::Filter { predicates, .. } => writeln!(f, "Filter [{}]", joined(predicates))?,
            L::Project { exprs, .. } => writeln!(f, "Project [{}]", joined(exprs))?,
            L::Join {
                kind,
                build_keys,
                probe_keys,
                ..
            } => writeln!(
                f,
                "{}Join build [{}] = probe [{}]",
                kind.name(),
                joined(build_keys),
                joined(probe_keys)
            )?,
            L::Sort { keys, .. } => {
                let ks: Vec<String> = keys
                    .iter()
                    .map(|k| if k.descending { format!("{} DESC", k.expr) } else { k.expr.to_string() })
                    .collect();
                writeln!(f, "Sort [{}]", ks.join(", "))?
            }
            L::Limit { count, .. } => writeln!(f, "Limit {count}")?,
            L::Skip { count, .. } => writeln!(f, "Skip {count}")?,
            L::GroupAggregate { keys, aggs, .. } => {
                writeln!(f, "GroupAggregate keys [{}] aggs [{}]", joined(keys), joined(aggs))?
            }
            L::Distinct { .. } => writeln!(f, "Distinct")?,
            L::SubqueryAlias { name, .. } => writeln!(f, "SubqueryAlias {name}")?,
        }
        for c in self.children() {
            c.fmt_tree(f, depth + 1)?;
        }
        Ok(())
    }

    pub fn scan(table: &str) -> LogicalPlan {
        LogicalPlan::Scan {
            table: table.to_string(),
            alias: None,
        }
    }

    pub fn children(&self) -> Vec<&LogicalPlan> {
        match self {
            LogicalPlan::Scan { .. } => vec![],
            LogicalPlan::Join { build, probe, .. } => vec![build, probe],
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Project { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. }
            | LogicalPlan::Skip { input, .. }
            | LogicalPlan::GroupAggregate { input, .. }
            | LogicalPlan::Distinct { input }
            | LogicalPlan::SubqueryAlias { input, .. } => vec![input],
        }
    }

    /// Whether any node satisfies `pred`.
    pub fn any(&self, pred: &dyn Fn(&LogicalPlan) -> bool) -> bool {
        pred(self) || self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn has_grouping_or_distinct(&self) -> bool {
        self.any(&|p| matches!(p, LogicalPlan::GroupAggregate { .. } | LogicalPlan::Distinct { .. }))
    }

    /// Tables referenced by scans, in first-reference order.
    pub fn tables(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(p: &LogicalPlan, out: &mut Vec<String>) {
            if let LogicalPlan::Scan { table, .. } = p {
                if !out.iter().any(|t: &String| t.eq_ignore_ascii_case(table)) {
                    out.push(table.clone());
                }
            }
            for c in p.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Output schema of `plan`.
pub fn validate(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<Schema, PlanError> {
    resolve(plan, catalog).map(|(_, s)| s)
}

/// Resolves every column reference to an ordinal, type-checks the tree and
/// returns the annotated plan with its output schema. Idempotent.
pub fn resolve(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<(LogicalPlan, Schema), PlanError> {
    use LogicalPlan as P;
    let boxed = |p: LogicalPlan| Box::new(p);
    Ok(match plan {
        P::Scan { table, alias } => {
            let schema = catalog
                .table_schema(table)
                .ok_or_else(|| PlanError::UnknownTable(table.clone()))?;
            let rel = alias.as_deref().unwrap_or(table);
            (plan.clone(), schema.with_relation(rel))
        }
        P::Filter { input, predicates } => {
            let (input, schema) = resolve(input, catalog)?;
            if predicates.is_empty() {
                return Err(PlanError::EmptyFilter);
            }
            let mut resolved = Vec::with_capacity(predicates.len());
            for p in predicates {
                let r = p.resolve(&schema)?;
                match r.data_type(&schema)? {
                    DataType::Bool | DataType::Null => resolved.push(r),
                    other => {
                        return Err(PlanError::Type(format!(
                            "filter predicate {p} has type {other}, expected Bool"
                        )))
                    }
                }
            }
            (
                P::Filter {
                    input: boxed(input),
                    predicates: resolved,
                },
                schema,
            )
        }
        P::Project { input, exprs } => {
            let (input, schema) = resolve(input, catalog)?;
            let mut fields = Vec::with_capacity(exprs.len());
            let mut resolved = Vec::with_capacity(exprs.len());
            for ne in exprs {
                let e = ne.expr.resolve(&schema)?;
                fields.push(output_field(&e, &ne.name, e.data_type(&schema)?, &schema));
                resolved.push(NamedExpr {
                    expr: e,
                    name: ne.name.clone(),
                });
            }
            (
                P::Project {
                    input: boxed(input),
                    exprs: resolved,
                },
                Schema::derived(fields),
            )
        }
        P::Join {
            kind,
            build,
            probe,
            build_keys,
            probe_keys,
        } => {
            let (build, bs) = resolve(build, catalog)?;
            let (probe, ps) = resolve(probe, catalog)?;
            if build_keys.len() != probe_keys.len() {
                return Err(PlanError::JoinKeys(format!(
                    "{} build keys vs {} probe keys",
                    build_keys.len(),
                    probe_keys.len()
                )));
            }
            if build_keys.is_empty() {
                return Err(PlanError::JoinKeys("a join needs at least one key pair".into()));
            }
            let mut bk = Vec::new();
            let mut pk = Vec::new();
            for (b, p) in build_keys.iter().zip(probe_keys) {
                let (rb, rp) = (b.resolve(&bs)?, p.resolve(&ps)?);
                let (tb, tp) = (rb.data_type(&bs)?, rp.data_type(&ps)?);
                if tb != tp {
                    return Err(PlanError::JoinKeys(format!(
                        "key {b} has type {tb} but {p} has type {tp}"
                    )));
                }
                bk.push(rb);
                pk.push(rp);
            }
            let schema = if kind.emits_build() { bs.join(&ps) } else { ps };
            (
                P::Join {
                    kind: *kind,
                    build: boxed(build),
                    probe: boxed(probe),
                    build_keys: bk,
                    probe_keys: pk,
                },
                schema,
            )
        }
        P::Sort { input, keys } => {
            let (input, schema) = resolve(input, catalog)?;
            let mut resolved = Vec::new();
            for k in keys {
                let e = k.expr.resolve(&schema)?;
                e.data_type(&schema)?;
                resolved.push(SortKey {
                    expr: e,
                    descending: k.descending,
                });
            }
            (
                P::Sort {
                    input: boxed(input),
                    keys: resolved,
                },
                schema,
            )
        }
        P::Limit { input, count } => {
            let (input, schema) = resolve(input, catalog)?;
            (
                P::Limit {
                    input: boxed(input),
                    count: *count,
                },
                schema,
            )
        }
        P::Skip { input, count } => {
            let (input, schema) = resolve(input, catalog)?;
            (
                P::Skip {
                    input: boxed(input),
                    count: *count,
                },
                schema,
            )
        }
        P::GroupAggregate { input, keys, aggs } => {
            let (input, schema) = resolve(input, catalog)?;
            let mut fields = Vec::new();
            let mut rkeys = Vec::new();
            for k in keys {
                let e = k.expr.resolve(&schema)?;
                fields.push(output_field(&e, &k.name, e.data_type(&schema)?, &schema));
                rkeys.push(NamedExpr {
                    expr: e,
                    name: k.name.clone(),
                });
            }
            let mut raggs = Vec::new();
            for a in aggs {
                let r = AggSpec {
                    func: a.func,
                    arg: a.arg.as_ref().map(|e| e.resolve(&schema)).transpose()?,
                    name: a.name.clone(),
                };
                fields.push(Field::new(a.name.clone(), r.output_type(&schema)?));
                raggs.push(r);
            }
            (
                P::GroupAggregate {
                    input: boxed(input),
                    keys: rkeys,
                    aggs: raggs,
                },
                Schema::derived(fields),
            )
        }
        P::Distinct { input } => {
            let (input, schema) = resolve(input, catalog)?;
            (P::Distinct { input: boxed(input) }, schema)
        }
        P::SubqueryAlias { input, name } => {
            let (input, schema) = resolve(input, catalog)?;
            (
                P::SubqueryAlias {
                    input: boxed(input),
                    name: name.clone(),
                },
                schema.with_relation(name),
            )
        }
    })
}

/// A passthrough column keeps its qualifier so later references such as
/// `c.name` still resolve.
fn output_field(e: &Expr, name: &str, ty: DataType, input: &Schema) -> Field {
    let relation = match e {
        Expr::Column(c) => c
            .index
            .and_then(|i| input.fields().get(i))
            .and_then(|f| f.relation.clone()),
        _ => None,
    };
    Field {
        relation,
        name: name.to_string(),
        ty,
    }
}

/// One output ordering key: column ordinal and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderKey {
    pub column: usize,
    pub descending: bool,
}

/// Ordering contract of a result.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ResultOrdering {
    #[default]
    Unordered,
    /// `limited` marks a top-N cut, where rows tied at the boundary may
    /// legitimately differ.
    OrderedBy { keys: Vec<OrderKey>, limited: bool },
}

/// Ordering guaranteed by the root of a resolved plan. Sort keys that are
/// not plain output columns end the observable key prefix.
pub fn output_ordering(plan: &LogicalPlan) -> ResultOrdering {
    fn go(plan: &LogicalPlan) -> Option<(Vec<OrderKey>, bool)> {
        match plan {
            LogicalPlan::Sort { keys, .. } => {
                let mapped: Vec<OrderKey> = keys
                    .iter()
                    .map_while(|k| match &k.expr {
                        Expr::Column(ColumnRef { index: Some(i), .. }) => Some(OrderKey {
                            column: *i,
                            descending: k.descending,
                        }),
                        _ => None,
                    })
                    .collect();
                (!mapped.is_empty()).then_some((mapped, false))
            }
            LogicalPlan::Limit { input, .. } | LogicalPlan::Skip { input, .. } => {
                go(input).map(|(k, _)| (k, true))
            }
            LogicalPlan::Filter { input, .. } | LogicalPlan::SubqueryAlias { input, .. } => go(input),
            LogicalPlan::Project { input, exprs } => {
                let (keys, limited) = go(input)?;
                let mapped: Vec<OrderKey> = keys
                    .iter()
                    .map_while(|k| {
                        exprs
                            .iter()
                            .position(|ne| {
                                matches!(&ne.expr, Expr::Column(ColumnRef { index: Some(i), .. }) if *i == k.column)
                            })
                            .map(|column| OrderKey {
                                column,
                                descending: k.descending,
                            })
                    })
                    .collect();
                (!mapped.is_empty()).then_some((mapped, limited))
            }
            _ => None,
        }
    }
    match go(plan) {
        Some((keys, limited)) => ResultOrdering::OrderedBy { keys, limited },
        None => ResultOrdering::Unordered,
    }
}

/// A fixed set of schemas, usable wherever a catalog is expected.
#[derive(Debug, Clone, Default)]
pub struct SchemaCatalog {
    tables: BTreeMap<String, Schema>,
}

impl SchemaCatalog {
    pub fn new() -> SchemaCatalog {
        SchemaCatalog::default()
    }

    pub fn with(mut self, name: &str, schema: Schema) -> SchemaCatalog {
        self.insert(name, schema);
        self
    }

    pub fn insert(&mut self, name: &str, schema: Schema) {
        self.tables.insert(name.to_ascii_lowercase(), schema);
    }

    /// Catalog of the eight TPC-H tables.
    pub fn tpch() -> SchemaCatalog {
        let mut c = SchemaCatalog::new();
        for t in crate::relmodel::tpch::TABLES {
            c.insert(t, crate::relmodel::tpch::schema(t).expect("known table"));
        }
        c
    }

    fn merge(&mut self, other: &SchemaCatalog) {
        for (k, v) in &other.tables {
            self.tables.insert(k.clone(), v.clone());
        }
    }
}

impl Catalog for SchemaCatalog {
    fn table_schema(&self, name: &str) -> Option<Schema> {
        self.tables.get(&name.to_ascii_lowercase()).cloned()
    }
}
