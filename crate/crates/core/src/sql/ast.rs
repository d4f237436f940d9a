//! Syntax tree of the supported subset. `Display` prints SQL that parses
//! back to an equal tree.

use std::fmt;

use super::Span;
use crate::value::format_date;

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub with: Vec<Cte>,
    pub body: Select,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: String,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub selection: Option<SqlExpr>,
    pub group_by: Vec<SqlExpr>,
    pub having: Option<SqlExpr>,
    /// Position of the SELECT keyword; used for diagnostics raised after
    /// parsing.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: SqlExpr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromItem {
    pub relation: TableFactor,
    pub joins: Vec<JoinClause>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { name: String, alias: Option<String> },
    Derived { query: Box<Query>, alias: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlJoinKind {
    Inner,
    Left,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinClause {
    pub kind: SqlJoinKind,
    pub relation: TableFactor,
    pub on: SqlExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: SqlExpr,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "=",
            BinOp::NotEq => "<>",
            BinOp::Lt => "<",
            BinOp::LtEq => "<=",
            BinOp::Gt => ">",
            BinOp::GtEq => ">=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalUnit {
    Day,
    Month,
    Year,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqlExpr {
    Column { table: Option<String>, name: String },
    Int(i64),
    Float(f64),
    Str(String),
    Date(i32),
    Bool(bool),
    Null,
    Interval { value: i64, unit: IntervalUnit },
    Neg(Box<SqlExpr>),
    Not(Box<SqlExpr>),
    Binary { op: BinOp, left: Box<SqlExpr>, right: Box<SqlExpr> },
    Between { expr: Box<SqlExpr>, low: Box<SqlExpr>, high: Box<SqlExpr>, negated: bool },
    InList { expr: Box<SqlExpr>, list: Vec<SqlExpr>, negated: bool },
    InSubquery { expr: Box<SqlExpr>, query: Box<Query>, negated: bool },
    Like { expr: Box<SqlExpr>, pattern: String, negated: bool },
    /// Function call; `COUNT(*)` has `star` set and no arguments.
    Func { name: String, args: Vec<SqlExpr>, star: bool },
    ExtractYear(Box<SqlExpr>),
}

pub const AGGREGATES: [&str; 5] = ["count", "sum", "avg", "min", "max"];

impl SqlExpr {
    pub fn is_aggregate(&self) -> bool {
        matches!(self, SqlExpr::Func { name, .. } if AGGREGATES.contains(&name.as_str()))
    }

    /// Whether any aggregate call occurs in the tree.
    pub fn contains_aggregate(&self) -> bool {
        self.is_aggregate() || self.children().iter().any(|c| c.contains_aggregate())
    }

    pub fn children(&self) -> Vec<&SqlExpr> {
        match self {
            SqlExpr::Neg(e) | SqlExpr::Not(e) | SqlExpr::ExtractYear(e) => vec![e],
            SqlExpr::Binary { left, right, .. } => vec![left, right],
            SqlExpr::Between { expr, low, high, .. } => vec![expr, low, high],
            SqlExpr::InList { expr, list, .. } => std::iter::once(expr.as_ref()).chain(list).collect(),
            SqlExpr::InSubquery { expr, .. } | SqlExpr::Like { expr, .. } => vec![expr],
            SqlExpr::Func { args, .. } => args.iter().collect(),
            _ => vec![],
        }
    }

    /// Top-level AND operands, left to right.
    pub fn conjuncts(&self) -> Vec<&SqlExpr> {
        match self {
            SqlExpr::Binary {
                op: BinOp::And,
                left,
                right,
            } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            other => vec![other],
        }
    }
}

fn atomic(e: &SqlExpr) -> bool {
    matches!(
        e,
        SqlExpr::Column { .. }
            | SqlExpr::Int(_)
            | SqlExpr::Float(_)
            | SqlExpr::Str(_)
            | SqlExpr::Date(_)
            | SqlExpr::Bool(_)
            | SqlExpr::Null
            | SqlExpr::Interval { .. }
            | SqlExpr::Func { .. }
            | SqlExpr::ExtractYear(_)
    ) && !matches!(e, SqlExpr::Int(v) if *v < 0)
        && !matches!(e, SqlExpr::Float(v) if v.is_sign_negative())
}

struct Child<'a>(&'a SqlExpr);

impl fmt::Display for Child<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if atomic(self.0) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

impl fmt::Display for SqlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let not = |n: bool| if n { "NOT " } else { "" };
        match self {
            SqlExpr::Column { table: Some(t), name } => write!(f, "{t}.{name}"),
            SqlExpr::Column { table: None, name } => f.write_str(name),
            SqlExpr::Int(v) => write!(f, "{v}"),
            SqlExpr::Float(v) => write!(f, "{v:?}"),
            SqlExpr::Str(s) => f.write_str(&quote(s)),
            SqlExpr::Date(d) => write!(f, "DATE '{}'", format_date(*d)),
            SqlExpr::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            SqlExpr::Null => f.write_str("NULL"),
            SqlExpr::Interval { value, unit } => {
                let u = match unit {
                    IntervalUnit::Day => "DAY",
                    IntervalUnit::Month => "MONTH",
                    IntervalUnit::Year => "YEAR",
                };
                write!(f, "INTERVAL '{value}' {u}")
            }
            SqlExpr::Neg(e) => write!(f, "-{}", Child(e)),
            SqlExpr::Not(e) => write!(f, "NOT {}", Child(e)),
            SqlExpr::Binary { op, left, right } => {
                write!(f, "{} {} {}", Child(left), op.symbol(), Child(right))
            }
            SqlExpr::Between {
                expr,
                low,
                high,
                negated,
            } => write!(
                f,
                "{} {}BETWEEN {} AND {}",
                Child(expr),
                not(*negated),
                Child(low),
                Child(high)
            ),
            SqlExpr::InList { expr, list, negated } => {
                let items: Vec<String> = list.iter().map(|e| e.to_string()).collect();
                write!(f, "{} {}IN ({})", Child(expr), not(*negated), items.join(", "))
            }
            SqlExpr::InSubquery { expr, query, negated } => {
                write!(f, "{} {}IN ({query})", Child(expr), not(*negated))
            }
            SqlExpr::Like { expr, pattern, negated } => {
                write!(f, "{} {}LIKE {}", Child(expr), not(*negated), quote(pattern))
            }
            SqlExpr::Func { name, star: true, .. } => write!(f, "{}(*)", name.to_ascii_uppercase()),
            SqlExpr::Func { name, args, .. } => {
                let a: Vec<String> = args.iter().map(|e| e.to_string()).collect();
                write!(f, "{}({})", name.to_ascii_uppercase(), a.join(", "))
            }
            SqlExpr::ExtractYear(e) => write!(f, "EXTRACT(YEAR FROM {e})"),
        }
    }
}

impl fmt::Display for TableFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableFactor::Table { name, alias: None } => f.write_str(name),
            TableFactor::Table { name, alias: Some(a) } => write!(f, "{name} AS {a}"),
            TableFactor::Derived { query, alias } => write!(f, "({query}) AS {alias}"),
        }
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        let items: Vec<String> = self
            .items
            .iter()
            .map(|i| match i {
                SelectItem::Wildcard => "*".to_string(),
                SelectItem::Expr { expr, alias: None } => expr.to_string(),
                SelectItem::Expr { expr, alias: Some(a) } => format!("{expr} AS {a}"),
            })
            .collect();
        f.write_str(&items.join(", "))?;
        if !self.from.is_empty() {
            f.write_str(" FROM ")?;
            for (i, item) in self.from.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", item.relation)?;
                for j in &item.joins {
                    let kw = match j.kind {
                        SqlJoinKind::Inner => "JOIN",
                        SqlJoinKind::Left => "LEFT JOIN",
                    };
                    write!(f, " {kw} {} ON {}", j.relation, j.on)?;
                }
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            let g: Vec<String> = self.group_by.iter().map(|e| e.to_string()).collect();
            write!(f, " GROUP BY {}", g.join(", "))?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.with.is_empty() {
            f.write_str("WITH ")?;
            for (i, c) in self.with.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{} AS ({})", c.name, c.query)?;
            }
            f.write_str(" ")?;
        }
        write!(f, "{}", self.body)?;
        if !self.order_by.is_empty() {
            let o: Vec<String> = self
                .order_by
                .iter()
                .map(|o| format!("{}{}", o.expr, if o.desc { " DESC" } else { "" }))
                .collect();
            write!(f, " ORDER BY {}", o.join(", "))?;
        }
        if let Some(l) = self.limit {
            write!(f, " LIMIT {l}")?;
        }
        if let Some(o) = self.offset {
            write!(f, " OFFSET {o}")?;
        }
        Ok(())
    }
}
