//! Scalar values and their type tags.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};

/// Days between 0001-01-01 (CE day 1) and 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

/// Type tag of a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Int64,
    Float64,
    Text,
    Date,
    Bool,
    /// Type of an untyped `NULL` literal; compatible with every other type.
    Null,
}

impl DataType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }

    /// Whether two types may be compared with each other.
    pub fn comparable_with(self, other: DataType) -> bool {
        self == other
            || self == DataType::Null
            || other == DataType::Null
            || (self.is_numeric() && other.is_numeric())
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Int64 => "Int64",
            DataType::Float64 => "Float64",
            DataType::Text => "Text",
            DataType::Date => "Date",
            DataType::Bool => "Bool",
            DataType::Null => "Null",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single cell value.
///
/// `Float64` equality and hashing operate on the bit pattern with `-0.0`
/// folded into `0.0` and every NaN folded into one canonical NaN, so values
/// can serve as grouping and join keys. `Null` equals `Null` for grouping and
/// distinct purposes; comparison predicates never hold on `Null` (see
/// [`crate::plan::eval`]).
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(Arc<str>),
    /// Days since 1970-01-01.
    Date(i32),
    Bool(bool),
    Null,
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Value::Int(_) => DataType::Int64,
            Value::Float(_) => DataType::Float64,
            Value::Text(_) => DataType::Text,
            Value::Date(_) => DataType::Date,
            Value::Bool(_) => DataType::Bool,
            Value::Null => DataType::Null,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Date(d) => Some(i64::from(*d)),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Total order used for sorting, grouping in the oracle and result
    /// canonicalization. `Null` sorts first; Int and Float compare
    /// numerically; otherwise values order by type tag.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Null, _) => Ordering::Less,
            (_, Null) => Ordering::Greater,
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => canonical_f64(*a).total_cmp(&canonical_f64(*b)),
            (Int(a), Float(b)) => cmp_int_float(*a, *b),
            (Float(a), Int(b)) => cmp_int_float(*b, *a).reverse(),
            (Text(a), Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Date(a), Date(b)) => a.cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    /// SQL comparison: `None` when either side is `Null` or the types are
    /// not comparable.
    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        use Value::*;
        match (self, other) {
            (Null, _) | (_, Null) => None,
            (Int(_), Int(_))
            | (Float(_), Float(_))
            | (Int(_), Float(_))
            | (Float(_), Int(_))
            | (Text(_), Text(_))
            | (Date(_), Date(_))
            | (Bool(_), Bool(_)) => Some(self.total_cmp(other)),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Float(_) => 2,
            Value::Date(_) => 3,
            Value::Text(_) => 4,
        }
    }

    /// Parses `YYYY-MM-DD` into a `Date` value.
    pub fn parse_date(s: &str) -> Option<Value> {
        parse_date_days(s).map(Value::Date)
    }
}

fn cmp_int_float(a: i64, b: f64) -> Ordering {
    (a as f64).total_cmp(&canonical_f64(b))
}

pub(crate) fn canonical_f64(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if v.is_nan() {
        f64::NAN
    } else {
        v
    }
}

fn canonical_bits(v: f64) -> u64 {
    canonical_f64(v).to_bits()
}

impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => canonical_bits(*a) == canonical_bits(*b),
            (Text(a), Text(b)) => a == b,
            (Date(a), Date(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Null, Null) => true,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(v) => {
                state.write_u8(1);
                state.write_i64(*v);
            }
            Value::Float(v) => {
                state.write_u8(2);
                state.write_u64(canonical_bits(*v));
            }
            Value::Text(s) => {
                state.write_u8(3);
                s.hash(state);
            }
            Value::Date(d) => {
                state.write_u8(4);
                state.write_i32(*d);
            }
            Value::Bool(b) => {
                state.write_u8(5);
                state.write_u8(*b as u8);
            }
            Value::Null => state.write_u8(0),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::Date(d) => f.write_str(&format_date(*d)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Null => f.write_str("NULL"),
        }
    }
}

pub fn days_to_date(days: i32) -> Option<NaiveDate> {
    NaiveDate::from_num_days_from_ce_opt(days.checked_add(UNIX_EPOCH_CE_DAYS)?)
}

pub fn date_to_days(date: NaiveDate) -> i32 {
    date.num_days_from_ce() - UNIX_EPOCH_CE_DAYS
}

pub fn parse_date_days(s: &str) -> Option<i32> {
    let s = s.trim();
    // Strict shape check: chrono accepts unpadded fields.
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(date_to_days)
}

pub fn format_date(days: i32) -> String {
    match days_to_date(days) {
        Some(d) => d.format("%Y-%m-%d").to_string(),
        None => format!("<date {days}>"),
    }
}

/// Calendar year of a day count.
pub fn year_of(days: i32) -> Option<i64> {
    days_to_date(days).map(|d| i64::from(d.year()))
}

pub fn ymd(y: i32, m: u32, d: u32) -> i32 {
    date_to_days(NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date"))
}
