//! Scalar expressions, their static typing and the reference evaluator.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use thiserror::Error;

use crate::relmodel::Schema;
use crate::value::{year_of, DataType, Value};

use super::PlanError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("column {0:?} was not resolved before evaluation")]
    Unresolved(String),
    #[error("column ordinal {index} out of range for a record of arity {arity}")]
    OutOfRange { index: usize, arity: usize },
    #[error("{op} is not defined for {left} and {right}")]
    Type {
        op: &'static str,
        left: DataType,
        right: DataType,
    },
    #[error("year out of the representable date range")]
    DateRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    LtEq,
    Eq,
    GtEq,
    Gt,
    NotEq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Eq => "=",
            CmpOp::GtEq => ">=",
            CmpOp::Gt => ">",
            CmpOp::NotEq => "<>",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::LtEq => ord != Greater,
            CmpOp::Eq => ord == Equal,
            CmpOp::GtEq => ord != Less,
            CmpOp::Gt => ord == Greater,
            CmpOp::NotEq => ord != Equal,
        }
    }
}

/// A reference to an input column. `index` is filled in by plan
/// resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub relation: Option<String>,
    pub name: String,
    pub index: Option<usize>,
}

/// Shared evaluation counter for instrumented expressions.
#[derive(Debug, Clone, Default)]
pub struct EvalCounter(Arc<AtomicU64>);

impl EvalCounter {
    pub fn new() -> EvalCounter {
        EvalCounter::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(AtomicOrdering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, AtomicOrdering::Relaxed);
    }

    pub(crate) fn bump(&self) {
        self.0.fetch_add(1, AtomicOrdering::Relaxed);
    }
}

impl PartialEq for EvalCounter {
    fn eq(&self, other: &EvalCounter) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Value),
    Arith {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Compare {
        op: CmpOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    ExtractYear(Box<Expr>),
    /// `%` matches any run of characters, `_` exactly one.
    Like {
        expr: Box<Expr>,
        pattern: String,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Value>,
        negated: bool,
    },
    /// Evaluates `inner`, bumping `counter` each time. Instrumentation only.
    Counted(EvalCounter, Box<Expr>),
}

pub fn col(name: &str) -> Expr {
    match name.split_once('.') {
        Some((rel, n)) => qcol(rel, n),
        None => Expr::Column(ColumnRef {
            relation: None,
            name: name.to_string(),
            index: None,
        }),
    }
}

pub fn qcol(relation: &str, name: &str) -> Expr {
    Expr::Column(ColumnRef {
        relation: Some(relation.to_string()),
        name: name.to_string(),
        index: None,
    })
}

pub fn lit(v: impl Into<Value>) -> Expr {
    Expr::Literal(v.into())
}

impl From<i64> for Value {
    fn from(v: i64) -> Value {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Value {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Value {
        Value::text(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Value {
        Value::Bool(v)
    }
}

macro_rules! binary_builders {
    ($($fn_name:ident => $variant:ident :: $op:ident),* $(,)?) => {
        $(
            #[allow(clippy::should_implement_trait)]
            pub fn $fn_name(self, other: Expr) -> Expr {
                Expr::$variant {
                    op: $op,
                    left: Box::new(self),
                    right: Box::new(other),
                }
            }
        )*
    };
}

use ArithOp::{Add, Div, Mul, Sub};
use CmpOp::{Eq as CEq, Gt, GtEq, Lt, LtEq, NotEq};

impl Expr {
    binary_builders! {
        add => Arith::Add,
        sub => Arith::Sub,
        mul => Arith::Mul,
        div => Arith::Div,
        lt => Compare::Lt,
        lt_eq => Compare::LtEq,
        eq => Compare::CEq,
        gt_eq => Compare::GtEq,
        gt => Compare::Gt,
        not_eq => Compare::NotEq,
    }

    pub fn and(self, other: Expr) -> Expr {
        Expr::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Expr) -> Expr {
        Expr::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Not(Box::new(self))
    }

    pub fn year(self) -> Expr {
        Expr::ExtractYear(Box::new(self))
    }

    pub fn like(self, pattern: &str) -> Expr {
        Expr::Like {
            expr: Box::new(self),
            pattern: pattern.to_string(),
            negated: false,
        }
    }

    pub fn between(self, low: Expr, high: Expr) -> Expr {
        Expr::Between {
            expr: Box::new(self),
            low: Box::new(low),
            high: Box::new(high),
        }
    }

    pub fn in_list(self, list: Vec<Value>) -> Expr {
        Expr::InList {
            expr: Box::new(self),
            list,
            negated: false,
        }
    }

    /// `self MOD divisor`, written as `self - (self / divisor) * divisor`
    /// over integers.
    pub fn modulo(self, divisor: Expr) -> Expr {
        self.clone().sub(self.div(divisor.clone()).mul(divisor))
    }

    pub fn counted(self, counter: &EvalCounter) -> Expr {
        Expr::Counted(counter.clone(), Box::new(self))
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) | Expr::Literal(_) => vec![],
            Expr::Arith { left, right, .. } | Expr::Compare { left, right, .. } => {
                vec![left, right]
            }
            Expr::And(l, r) | Expr::Or(l, r) => vec![l, r],
            Expr::Not(e) | Expr::ExtractYear(e) | Expr::Counted(_, e) => vec![e],
            Expr::Like { expr, .. } | Expr::InList { expr, .. } => vec![expr],
            Expr::Between { expr, low, high } => vec![expr, low, high],
        }
    }

    /// Applies `f` to every node, bottom-up, rebuilding the tree.
    pub fn transform(&self, f: &mut dyn FnMut(Expr) -> Result<Expr, PlanError>) -> Result<Expr, PlanError> {
        let rebuilt = match self {
            Expr::Column(_) | Expr::Literal(_) => self.clone(),
            Expr::Arith { op, left, right } => Expr::Arith {
                op: *op,
                left: Box::new(left.transform(f)?),
                right: Box::new(right.transform(f)?),
            },
            Expr::Compare { op, left, right } => Expr::Compare {
                op: *op,
                left: Box::new(left.transform(f)?),
                right: Box::new(right.transform(f)?),
            },
            Expr::And(l, r) => Expr::And(Box::new(l.transform(f)?), Box::new(r.transform(f)?)),
            Expr::Or(l, r) => Expr::Or(Box::new(l.transform(f)?), Box::new(r.transform(f)?)),
            Expr::Not(e) => Expr::Not(Box::new(e.transform(f)?)),
            Expr::ExtractYear(e) => Expr::ExtractYear(Box::new(e.transform(f)?)),
            Expr::Counted(c, e) => Expr::Counted(c.clone(), Box::new(e.transform(f)?)),
            Expr::Like {
                expr,
                pattern,
                negated,
            } => Expr::Like {
                expr: Box::new(expr.transform(f)?),
                pattern: pattern.clone(),
                negated: *negated,
            },
            Expr::Between { expr, low, high } => Expr::Between {
                expr: Box::new(expr.transform(f)?),
                low: Box::new(low.transform(f)?),
                high: Box::new(high.transform(f)?),
            },
            Expr::InList {
                expr,
                list,
                negated,
            } => Expr::InList {
                expr: Box::new(expr.transform(f)?),
                list: list.clone(),
                negated: *negated,
            },
        };
        f(rebuilt)
    }

    /// Every column reference in the tree.
    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        if let Expr::Column(c) = self {
            out.push(c);
        }
        for child in self.children() {
            child.collect_columns(out);
        }
    }

    /// Resolves column references against `schema` and returns the
    /// expression with ordinals filled in.
    pub fn resolve(&self, schema: &Schema) -> Result<Expr, PlanError> {
        self.transform(&mut |e| match e {
            Expr::Column(c) => Ok(Expr::Column(resolve_column(&c, schema)?)),
            other => Ok(other),
        })
    }

    /// Static type of a resolved expression.
    pub fn data_type(&self, schema: &Schema) -> Result<DataType, PlanError> {
        let ty = |e: &Expr| e.data_type(schema);
        match self {
            Expr::Column(c) => {
                let i = c.index.ok_or_else(|| PlanError::UnknownColumn(c.name.clone()))?;
                schema
                    .fields()
                    .get(i)
                    .map(|f| f.ty)
                    .ok_or_else(|| PlanError::UnknownColumn(c.name.clone()))
            }
            Expr::Literal(v) => Ok(v.data_type()),
            Expr::Arith { op, left, right } => {
                let (l, r) = (ty(left)?, ty(right)?);
                arith_type(*op, l, r).ok_or_else(|| PlanError::Type(format!(
                    "arithmetic {} over {l} and {r} in {self}",
                    op.symbol()
                )))
            }
            Expr::Compare { left, right, .. } => {
                let (l, r) = (ty(left)?, ty(right)?);
                if l.comparable_with(r) {
                    Ok(DataType::Bool)
                } else {
                    Err(PlanError::Type(format!("cannot compare {l} with {r} in {self}")))
                }
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                expect_bool(ty(l)?, l)?;
                expect_bool(ty(r)?, r)?;
                Ok(DataType::Bool)
            }
            Expr::Not(e) => {
                expect_bool(ty(e)?, e)?;
                Ok(DataType::Bool)
            }
            Expr::ExtractYear(e) => match ty(e)? {
                DataType::Date | DataType::Null => Ok(DataType::Int64),
                other => Err(PlanError::Type(format!("EXTRACT(YEAR) over {other} in {self}"))),
            },
            Expr::Like { expr, .. } => match ty(expr)? {
                DataType::Text | DataType::Null => Ok(DataType::Bool),
                other => Err(PlanError::Type(format!("LIKE over {other} in {self}"))),
            },
            Expr::Between { expr, low, high } => {
                let t = ty(expr)?;
                for bound in [ty(low)?, ty(high)?] {
                    if !t.comparable_with(bound) {
                        return Err(PlanError::Type(format!("cannot compare {t} with {bound} in {self}")));
                    }
                }
                Ok(DataType::Bool)
            }
            Expr::InList { expr, list, .. } => {
                let t = ty(expr)?;
                for v in list {
                    if !t.comparable_with(v.data_type()) {
                        return Err(PlanError::Type(format!(
                            "IN list value {v} is not comparable with {t}"
                        )));
                    }
                }
                Ok(DataType::Bool)
            }
            Expr::Counted(_, e) => ty(e),
        }
    }
}

fn expect_bool(t: DataType, e: &Expr) -> Result<(), PlanError> {
    match t {
        DataType::Bool | DataType::Null => Ok(()),
        other => Err(PlanError::Type(format!("expected Bool, found {other} in {e}"))),
    }
}

pub(crate) fn resolve_column(c: &ColumnRef, schema: &Schema) -> Result<ColumnRef, PlanError> {
    let matches = schema.lookup(c.relation.as_deref(), &c.name);
    let display = match &c.relation {
        Some(r) => format!("{r}.{}", c.name),
        None => c.name.clone(),
    };
    let index = match (matches.as_slice(), c.index) {
        ([], _) => return Err(PlanError::UnknownColumn(display)),
        ([i], _) => *i,
        (many, Some(prev)) if many.contains(&prev) => prev,
        _ => return Err(PlanError::AmbiguousColumn(display)),
    };
    Ok(ColumnRef {
        relation: c.relation.clone(),
        name: c.name.clone(),
        index: Some(index),
    })
}

pub(crate) fn arith_type(op: ArithOp, l: DataType, r: DataType) -> Option<DataType> {
    use DataType::*;
    let _ = op;
    match (l, r) {
        (Int64, Int64) => Some(Int64),
        (Int64 | Float64, Int64 | Float64) => Some(Float64),
        (Null, t) | (t, Null) if t.is_numeric() || t == Null => Some(t),
        _ => None,
    }
}

// Scalar kernels shared by every evaluator.

pub fn arith(op: ArithOp, l: &Value, r: &Value) -> Result<Value, EvalError> {
    use Value::*;
    match (l, r) {
        (Null, _) | (_, Null) => Ok(Null),
        (Int(a), Int(b)) => Ok(Int(match op {
            ArithOp::Add => a.wrapping_add(*b),
            ArithOp::Sub => a.wrapping_sub(*b),
            ArithOp::Mul => a.wrapping_mul(*b),
            ArithOp::Div => {
                if *b == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.wrapping_div(*b)
            }
        })),
        (Int(_) | Float(_), Int(_) | Float(_)) => {
            let (a, b) = (l.as_f64().unwrap(), r.as_f64().unwrap());
            Ok(Float(match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a / b
                }
            }))
        }
        _ => Err(EvalError::Type {
            op: op.symbol(),
            left: l.data_type(),
            right: r.data_type(),
        }),
    }
}

pub fn compare(op: CmpOp, l: &Value, r: &Value) -> Value {
    match l.sql_cmp(r) {
        Some(ord) => Value::Bool(op.holds(ord)),
        None => Value::Null,
    }
}

pub fn extract_year(v: &Value) -> Result<Value, EvalError> {
    match v {
        Value::Date(d) => year_of(*d).map(Value::Int).ok_or(EvalError::DateRange),
        Value::Null => Ok(Value::Null),
        other => Err(EvalError::Type {
            op: "EXTRACT(YEAR)",
            left: other.data_type(),
            right: DataType::Null,
        }),
    }
}

/// SQL `LIKE` with `%` (any run) and `_` (one character).
pub fn like_match(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '%')
}

pub fn in_list(v: &Value, list: &[Value], negated: bool) -> Value {
    if v.is_null() {
        return Value::Null;
    }
    let found = list
        .iter()
        .any(|item| v.sql_cmp(item) == Some(std::cmp::Ordering::Equal));
    Value::Bool(found != negated)
}

/// Truth of a predicate result; `Null` rejects.
pub fn is_true(v: &Value) -> bool {
    matches!(v, Value::Bool(true))
}

/// Reference evaluator: a direct tree walk over a resolved expression.
pub fn eval(expr: &Expr, row: &[Value]) -> Result<Value, EvalError> {
    match expr {
        Expr::Column(c) => {
            let i = c.index.ok_or_else(|| EvalError::Unresolved(c.name.clone()))?;
            row.get(i).cloned().ok_or(EvalError::OutOfRange {
                index: i,
                arity: row.len(),
            })
        }
        Expr::Literal(v) => Ok(v.clone()),
        Expr::Arith { op, left, right } => arith(*op, &eval(left, row)?, &eval(right, row)?),
        Expr::Compare { op, left, right } => Ok(compare(*op, &eval(left, row)?, &eval(right, row)?)),
        Expr::And(l, r) => {
            let lv = eval(l, row)?;
            if lv == Value::Bool(false) {
                return Ok(lv);
            }
            let rv = eval(r, row)?;
            Ok(match (lv, rv) {
                (_, Value::Bool(false)) => Value::Bool(false),
                (Value::Bool(true), Value::Bool(true)) => Value::Bool(true),
                _ => Value::Null,
            })
        }
        Expr::Or(l, r) => {
            let lv = eval(l, row)?;
            if lv == Value::Bool(true) {
                return Ok(lv);
            }
            let rv = eval(r, row)?;
            Ok(match (lv, rv) {
                (_, Value::Bool(true)) => Value::Bool(true),
                (Value::Bool(false), Value::Bool(false)) => Value::Bool(false),
                _ => Value::Null,
            })
        }
        Expr::Not(e) => Ok(match eval(e, row)? {
            Value::Bool(b) => Value::Bool(!b),
            _ => Value::Null,
        }),
        Expr::ExtractYear(e) => extract_year(&eval(e, row)?),
        Expr::Like {
            expr,
            pattern,
            negated,
        } => Ok(match eval(expr, row)? {
            Value::Text(s) => Value::Bool(like_match(&s, pattern) != *negated),
            _ => Value::Null,
        }),
        Expr::Between { expr, low, high } => {
            let v = eval(expr, row)?;
            let ge = compare(CmpOp::GtEq, &v, &eval(low, row)?);
            if ge == Value::Bool(false) {
                return Ok(ge);
            }
            let le = compare(CmpOp::LtEq, &v, &eval(high, row)?);
            Ok(match (ge, le) {
                (_, Value::Bool(false)) => Value::Bool(false),
                (Value::Bool(true), Value::Bool(true)) => Value::Bool(true),
                _ => Value::Null,
            })
        }
        Expr::InList {
            expr,
            list,
            negated,
        } => Ok(in_list(&eval(expr, row)?, list, *negated)),
        Expr::Counted(counter, e) => {
            counter.bump();
            eval(e, row)
        }
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Column(_) | Expr::Literal(_) | Expr::ExtractYear(_) | Expr::Counted(..) => write!(f, "{e}"),
        _ => write!(f, "({e})"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => match &c.relation {
                Some(r) => write!(f, "{r}.{}", c.name),
                None => f.write_str(&c.name),
            },
            Expr::Literal(v) => fmt_literal(f, v),
            Expr::Arith { op, left, right } => {
                fmt_child(f, left)?;
                write!(f, " {} ", op.symbol())?;
                fmt_child(f, right)
            }
            Expr::Compare { op, left, right } => {
                fmt_child(f, left)?;
                write!(f, " {} ", op.symbol())?;
                fmt_child(f, right)
            }
            Expr::And(l, r) => {
                fmt_child(f, l)?;
                f.write_str(" AND ")?;
                fmt_child(f, r)
            }
            Expr::Or(l, r) => {
                fmt_child(f, l)?;
                f.write_str(" OR ")?;
                fmt_child(f, r)
            }
            Expr::Not(e) => {
                f.write_str("NOT ")?;
                fmt_child(f, e)
            }
            Expr::ExtractYear(e) => write!(f, "EXTRACT(YEAR FROM {e})"),
            Expr::Like {
                expr,
                pattern,
                negated,
            } => {
                fmt_child(f, expr)?;
                let not = if *negated { " NOT" } else { "" };
                write!(f, "{not} LIKE '{}'", pattern.replace('\'', "''"))
            }
            Expr::Between { expr, low, high } => {
                fmt_child(f, expr)?;
                f.write_str(" BETWEEN ")?;
                fmt_child(f, low)?;
                f.write_str(" AND ")?;
                fmt_child(f, high)
            }
            Expr::InList {
                expr,
                list,
                negated,
            } => {
                fmt_child(f, expr)?;
                f.write_str(if *negated { " NOT IN (" } else { " IN (" })?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    fmt_literal(f, v)?;
                }
                f.write_str(")")
            }
            Expr::Counted(_, e) => write!(f, "{e}"),
        }
    }
}

pub(crate) fn fmt_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        Value::Date(_) => write!(f, "DATE '{v}'"),
        Value::Float(x) => write!(f, "{x:?}"),
        other => write!(f, "{other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ymd;

    fn row() -> Vec<Value> {
        vec![Value::Int(7), Value::Float(2.5), Value::text("dim green tin"), Value::Date(ymd(2024, 3, 5))]
    }

    fn c(i: usize) -> Expr {
        Expr::Column(ColumnRef {
            relation: None,
            name: format!("c{i}"),
            index: Some(i),
        })
    }

    #[test]
    fn extract_year() {
        assert_eq!(eval(&c(3).year(), &row()).unwrap(), Value::Int(2024));
    }

    #[test]
    fn like_wildcards() {
        assert!(!like_match("PROMO BURNISHED", "%green%"));
        assert!(like_match("dim green tin", "%green%"));
        assert!(like_match("green", "green"));
        assert!(like_match("abc", "a_c"));
        assert!(like_match("", "%"));
        assert!(!like_match("abc", "a_"));
        assert!(like_match("aXbXc", "%b%c"));
        assert_eq!(eval(&c(2).like("%green%"), &row()).unwrap(), Value::Bool(true));
    }

    #[test]
    fn and_short_circuits() {
        let counter = EvalCounter::new();
        let e = lit(false).and(c(0).gt(lit(1i64)).counted(&counter));
        assert_eq!(eval(&e, &row()).unwrap(), Value::Bool(false));
        assert_eq!(counter.get(), 0);
        let e = lit(true).or(lit(true).counted(&counter));
        assert_eq!(eval(&e, &row()).unwrap(), Value::Bool(true));
        assert_eq!(counter.get(), 0);
        let e = lit(true).and(lit(true).counted(&counter));
        assert_eq!(eval(&e, &row()).unwrap(), Value::Bool(true));
        assert_eq!(counter.get(), 1);
    }

    #[test]
    fn arithmetic_rules() {
        assert_eq!(eval(&c(0).mul(c(1)), &row()).unwrap(), Value::Float(17.5));
        assert_eq!(eval(&c(0).div(lit(2i64)), &row()).unwrap(), Value::Int(3));
        assert_eq!(eval(&c(0).modulo(lit(3i64)), &row()).unwrap(), Value::Int(1));
        assert_eq!(eval(&c(0).div(lit(0i64)), &row()), Err(EvalError::DivisionByZero));
        assert_eq!(eval(&c(1).div(lit(0.0)), &row()), Err(EvalError::DivisionByZero));
        assert_eq!(eval(&c(0).add(lit(Value::Null)), &row()).unwrap(), Value::Null);
    }

    #[test]
    fn null_rejects_predicates() {
        let e = lit(Value::Null).gt_eq(lit(0i64));
        assert!(!is_true(&eval(&e, &row()).unwrap()));
        assert_eq!(in_list(&Value::Null, &[Value::Int(1)], false), Value::Null);
    }

    #[test]
    fn between_and_in() {
        assert_eq!(eval(&c(0).between(lit(7i64), lit(9i64)), &row()).unwrap(), Value::Bool(true));
        assert_eq!(eval(&c(0).between(lit(8i64), lit(9i64)), &row()).unwrap(), Value::Bool(false));
        assert_eq!(
            eval(&c(0).in_list(vec![Value::Int(1), Value::Int(7)]), &row()).unwrap(),
            Value::Bool(true)
        );
    }
}
