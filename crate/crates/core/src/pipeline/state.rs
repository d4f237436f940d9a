//! Hash maps and aggregate accumulators shared by both backends.

use std::cmp::Ordering as CmpOrdering;
use std::hash::BuildHasherDefault;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};

use indexmap::IndexMap;
use parking_lot::Mutex;
use rustc_hash::{FxHashMap, FxHasher};

use crate::plan::expr::EvalError;
use crate::prepared::{AggKind, PreparedAgg};
use crate::relmodel::Row;
use crate::value::{canonical_f64, DataType, Value};

/// Composite grouping or join key.
pub type Key = Box<[Value]>;

pub type FxBuild = BuildHasherDefault<FxHasher>;

/// Groups in first-insertion order.
pub type GroupTable = IndexMap<Key, GroupAccumulator, FxBuild>;

/// Build side of a hash join: key to every build record with that key, in
/// arrival order. Must be sealed before any lookup.
#[derive(Debug, Default)]
pub struct JoinMap {
    map: FxHashMap<Key, Vec<Row>>,
    sealed: bool,
}

impl JoinMap {
    pub fn new() -> JoinMap {
        JoinMap::default()
    }

    /// Records with a Null key component never match and are not stored.
    pub fn insert(&mut self, key: &[Value], row: Row) {
        assert!(!self.sealed, "JoinMap mutated after sealing");
        if key.iter().any(Value::is_null) {
            return;
        }
        match self.map.get_mut(key) {
            Some(list) => list.push(row),
            None => {
                self.map.insert(key.into(), vec![row]);
            }
        }
    }

    /// Appends `other`'s lists after this map's lists.
    pub fn absorb(&mut self, other: JoinMap) {
        assert!(!self.sealed, "JoinMap mutated after sealing");
        for (k, mut rows) in other.map {
            self.map.entry(k).or_default().append(&mut rows);
        }
    }

    pub(crate) fn from_map(map: FxHashMap<Key, Vec<Row>>) -> JoinMap {
        JoinMap { map, sealed: false }
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    #[inline]
    pub fn get(&self, key: &[Value]) -> &[Row] {
        debug_assert!(self.sealed, "JoinMap probed before sealing");
        if key.iter().any(Value::is_null) {
            return &[];
        }
        self.map.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of distinct keys.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn row_count(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }
}

/// Running state of one aggregate.
#[derive(Debug, Clone, PartialEq)]
pub enum AggState {
    Count(i64),
    SumInt { sum: i64, seen: bool },
    SumFloat { sum: f64, seen: bool },
    AvgInt { sum: i64, n: i64 },
    AvgFloat { sum: f64, n: i64 },
    Min(Option<Value>),
    Max(Option<Value>),
}

impl AggState {
    pub fn new(kind: AggKind) -> AggState {
        match kind {
            AggKind::CountStar | AggKind::Count => AggState::Count(0),
            AggKind::SumInt => AggState::SumInt { sum: 0, seen: false },
            AggKind::SumFloat => AggState::SumFloat { sum: 0.0, seen: false },
            AggKind::AvgInt => AggState::AvgInt { sum: 0, n: 0 },
            AggKind::AvgFloat => AggState::AvgFloat { sum: 0.0, n: 0 },
            AggKind::Min => AggState::Min(None),
            AggKind::Max => AggState::Max(None),
        }
    }

    /// Folds one argument value in. `None` is the `COUNT(*)` case.
    #[inline]
    pub fn update(&mut self, v: Option<&Value>) {
        let v = match v {
            None => {
                if let AggState::Count(c) = self {
                    *c += 1;
                }
                return;
            }
            Some(Value::Null) => return,
            Some(v) => v,
        };
        match self {
            AggState::Count(c) => *c += 1,
            AggState::SumInt { sum, seen } => {
                if let Value::Int(x) = v {
                    *sum = sum.wrapping_add(*x);
                    *seen = true;
                }
            }
            AggState::SumFloat { sum, seen } => {
                if let Some(x) = v.as_f64() {
                    *sum += x;
                    *seen = true;
                }
            }
            AggState::AvgInt { sum, n } => {
                if let Value::Int(x) = v {
                    *sum = sum.wrapping_add(*x);
                    *n += 1;
                }
            }
            AggState::AvgFloat { sum, n } => {
                if let Some(x) = v.as_f64() {
                    *sum += x;
                    *n += 1;
                }
            }
            AggState::Min(cur) => {
                if cur.as_ref().is_none_or(|c| v.total_cmp(c) == CmpOrdering::Less) {
                    *cur = Some(v.clone());
                }
            }
            AggState::Max(cur) => {
                if cur.as_ref().is_none_or(|c| v.total_cmp(c) == CmpOrdering::Greater) {
                    *cur = Some(v.clone());
                }
            }
        }
    }

    pub fn merge(&mut self, other: &AggState) {
        match (self, other) {
            (AggState::Count(a), AggState::Count(b)) => *a += b,
            (AggState::SumInt { sum, seen }, AggState::SumInt { sum: s2, seen: n2 }) => {
                *sum = sum.wrapping_add(*s2);
                *seen |= n2;
            }
            (AggState::SumFloat { sum, seen }, AggState::SumFloat { sum: s2, seen: n2 }) => {
                *sum += s2;
                *seen |= n2;
            }
            (AggState::AvgInt { sum, n }, AggState::AvgInt { sum: s2, n: n2 }) => {
                *sum = sum.wrapping_add(*s2);
                *n += n2;
            }
            (AggState::AvgFloat { sum, n }, AggState::AvgFloat { sum: s2, n: n2 }) => {
                *sum += s2;
                *n += n2;
            }
            (AggState::Min(a), AggState::Min(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|x| b.total_cmp(x) == CmpOrdering::Less) {
                        *a = Some(b.clone());
                    }
                }
            }
            (AggState::Max(a), AggState::Max(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|x| b.total_cmp(x) == CmpOrdering::Greater) {
                        *a = Some(b.clone());
                    }
                }
            }
            (a, b) => panic!("merging mismatched aggregate states {a:?} and {b:?}"),
        }
    }

    pub fn finish(&self) -> Value {
        match self {
            AggState::Count(c) => Value::Int(*c),
            AggState::SumInt { sum, seen } => {
                if *seen {
                    Value::Int(*sum)
                } else {
                    Value::Null
                }
            }
            AggState::SumFloat { sum, seen } => {
                if *seen {
                    Value::Float(*sum)
                } else {
                    Value::Null
                }
            }
            AggState::AvgInt { sum, n } => {
                if *n == 0 {
                    Value::Null
                } else {
                    Value::Float(*sum as f64 / *n as f64)
                }
            }
            AggState::AvgFloat { sum, n } => {
                if *n == 0 {
                    Value::Null
                } else {
                    Value::Float(*sum / *n as f64)
                }
            }
            AggState::Min(v) | AggState::Max(v) => v.clone().unwrap_or(Value::Null),
        }
    }
}

/// Per-group state: row count plus one state per aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccumulator {
    pub count: i64,
    pub states: Vec<AggState>,
}

impl GroupAccumulator {
    pub fn new(aggs: &[PreparedAgg]) -> GroupAccumulator {
        GroupAccumulator {
            count: 0,
            states: aggs.iter().map(|a| AggState::new(a.kind)).collect(),
        }
    }

    #[inline]
    pub fn update(&mut self, aggs: &[PreparedAgg], row: &[Value]) -> Result<(), EvalError> {
        self.count += 1;
        for (state, agg) in self.states.iter_mut().zip(aggs) {
            match &agg.arg {
                None => state.update(None),
                Some(e) => state.update(Some(&e.eval(row)?)),
            }
        }
        Ok(())
    }

    /// Combines two partial states. Associative and commutative apart from
    /// floating-point rounding in sums.
    pub fn merge(&mut self, other: &GroupAccumulator) {
        self.count += other.count;
        for (a, b) in self.states.iter_mut().zip(&other.states) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> Vec<Value> {
        self.states.iter().map(AggState::finish).collect()
    }
}

/// Merges `right` into `left` key by key. New keys keep `right`'s order
/// after `left`'s keys.
pub fn merge_groups(mut left: GroupTable, right: GroupTable) -> GroupTable {
    for (k, acc) in right {
        match left.get_mut(&k) {
            Some(existing) => existing.merge(&acc),
            None => {
                left.insert(k, acc);
            }
        }
    }
    left
}

/// Output records of a group table: keys followed by finished aggregates.
pub fn group_rows<'a>(groups: impl IntoIterator<Item = (&'a Key, &'a GroupAccumulator)>) -> Vec<Row> {
    groups
        .into_iter()
        .map(|(k, acc)| {
            let mut out = Vec::with_capacity(k.len() + acc.states.len());
            out.extend(k.iter().cloned());
            out.extend(acc.finish());
            Row::from(out)
        })
        .collect()
}

#[inline]
fn f64_add(cell: &AtomicU64, x: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) + x).to_bits();
        match cell.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed) {
            Ok(_) => return,
            Err(actual) => cur = actual,
        }
    }
}

#[inline]
fn f64_extreme(cell: &AtomicU64, x: f64, want: CmpOrdering) {
    let x = canonical_f64(x);
    let mut cur = cell.load(Ordering::Relaxed);
    while x.total_cmp(&f64::from_bits(cur)) == want {
        match cell.compare_exchange_weak(cur, x.to_bits(), Ordering::AcqRel, Ordering::Relaxed) {
            Ok(_) => return,
            Err(actual) => cur = actual,
        }
    }
}

/// One aggregate's state as atomic cells.
#[derive(Debug)]
enum AtomicCell {
    Count(AtomicI64),
    SumInt { sum: AtomicI64, seen: AtomicBool },
    SumFloat { bits: AtomicU64, seen: AtomicBool },
    AvgInt { sum: AtomicI64, n: AtomicI64 },
    AvgFloat { bits: AtomicU64, n: AtomicI64 },
    /// Int64 or Date min/max via `fetch_min` / `fetch_max`.
    ExtremeInt { v: AtomicI64, has: AtomicBool, max: bool, date: bool },
    /// Float64 min/max via a compare-and-swap loop on the bit pattern.
    ExtremeFloat { bits: AtomicU64, has: AtomicBool, max: bool },
    /// Text and untyped extremes have no atomic representation.
    Locked(Mutex<AggState>),
}

impl AtomicCell {
    fn new(agg: &PreparedAgg) -> AtomicCell {
        let ty = agg.arg_type.unwrap_or(DataType::Null);
        match agg.kind {
            AggKind::CountStar | AggKind::Count => AtomicCell::Count(AtomicI64::new(0)),
            AggKind::SumInt => AtomicCell::SumInt {
                sum: AtomicI64::new(0),
                seen: AtomicBool::new(false),
            },
            AggKind::SumFloat => AtomicCell::SumFloat {
                bits: AtomicU64::new(0f64.to_bits()),
                seen: AtomicBool::new(false),
            },
            AggKind::AvgInt => AtomicCell::AvgInt {
                sum: AtomicI64::new(0),
                n: AtomicI64::new(0),
            },
            AggKind::AvgFloat => AtomicCell::AvgFloat {
                bits: AtomicU64::new(0f64.to_bits()),
                n: AtomicI64::new(0),
            },
            AggKind::Min | AggKind::Max => {
                let max = agg.kind == AggKind::Max;
                match ty {
                    DataType::Int64 | DataType::Date => AtomicCell::ExtremeInt {
                        v: AtomicI64::new(if max { i64::MIN } else { i64::MAX }),
                        has: AtomicBool::new(false),
                        max,
                        date: ty == DataType::Date,
                    },
                    // Sentinels sit at the ends of the total order.
                    DataType::Float64 => AtomicCell::ExtremeFloat {
                        bits: AtomicU64::new(if max { (-f64::NAN).to_bits() } else { f64::NAN.to_bits() }),
                        has: AtomicBool::new(false),
                        max,
                    },
                    _ => AtomicCell::Locked(Mutex::new(AggState::new(agg.kind))),
                }
            }
        }
    }

    #[inline]
    fn update(&self, v: Option<&Value>) {
        let v = match v {
            None => {
                if let AtomicCell::Count(c) = self {
                    c.fetch_add(1, Ordering::Relaxed);
                }
                return;
            }
            Some(Value::Null) => return,
            Some(v) => v,
        };
        match self {
            AtomicCell::Count(c) => {
                c.fetch_add(1, Ordering::Relaxed);
            }
            AtomicCell::SumInt { sum, seen } => {
                if let Value::Int(x) = v {
                    sum.fetch_add(*x, Ordering::Relaxed);
                    seen.store(true, Ordering::Relaxed);
                }
            }
            AtomicCell::SumFloat { bits, seen } => {
                if let Some(x) = v.as_f64() {
                    f64_add(bits, x);
                    seen.store(true, Ordering::Relaxed);
                }
            }
            AtomicCell::AvgInt { sum, n } => {
                if let Value::Int(x) = v {
                    sum.fetch_add(*x, Ordering::Relaxed);
                    n.fetch_add(1, Ordering::Relaxed);
                }
            }
            AtomicCell::AvgFloat { bits, n } => {
                if let Some(x) = v.as_f64() {
                    f64_add(bits, x);
                    n.fetch_add(1, Ordering::Relaxed);
                }
            }
            AtomicCell::ExtremeInt { v: cell, has, max, .. } => {
                if let Some(x) = v.as_i64() {
                    if *max {
                        cell.fetch_max(x, Ordering::Relaxed);
                    } else {
                        cell.fetch_min(x, Ordering::Relaxed);
                    }
                    has.store(true, Ordering::Relaxed);
                }
            }
            AtomicCell::ExtremeFloat { bits, has, max } => {
                if let Some(x) = v.as_f64() {
                    let want = if *max { CmpOrdering::Greater } else { CmpOrdering::Less };
                    f64_extreme(bits, x, want);
                    has.store(true, Ordering::Relaxed);
                }
            }
            AtomicCell::Locked(state) => state.lock().update(Some(v)),
        }
    }

    fn finish(&self) -> Value {
        let ld = |c: &AtomicI64| c.load(Ordering::Acquire);
        match self {
            AtomicCell::Count(c) => Value::Int(ld(c)),
            AtomicCell::SumInt { sum, seen } => {
                if seen.load(Ordering::Acquire) {
                    Value::Int(ld(sum))
                } else {
                    Value::Null
                }
            }
            AtomicCell::SumFloat { bits, seen } => {
                if seen.load(Ordering::Acquire) {
                    Value::Float(f64::from_bits(bits.load(Ordering::Acquire)))
                } else {
                    Value::Null
                }
            }
            AtomicCell::AvgInt { sum, n } => match ld(n) {
                0 => Value::Null,
                n => Value::Float(ld(sum) as f64 / n as f64),
            },
            AtomicCell::AvgFloat { bits, n } => match ld(n) {
                0 => Value::Null,
                n => Value::Float(f64::from_bits(bits.load(Ordering::Acquire)) / n as f64),
            },
            AtomicCell::ExtremeInt { v, has, date, .. } => {
                if !has.load(Ordering::Acquire) {
                    Value::Null
                } else if *date {
                    Value::Date(ld(v) as i32)
                } else {
                    Value::Int(ld(v))
                }
            }
            AtomicCell::ExtremeFloat { bits, has, .. } => {
                if has.load(Ordering::Acquire) {
                    Value::Float(f64::from_bits(bits.load(Ordering::Acquire)))
                } else {
                    Value::Null
                }
            }
            AtomicCell::Locked(state) => state.lock().finish(),
        }
    }
}

/// Group state updated without locks: counts and integer sums by
/// fetch-add, float sums and extremes by compare-and-swap loops.
#[derive(Debug)]
pub struct AtomicGroupAccumulator {
    count: AtomicI64,
    cells: Box<[AtomicCell]>,
}

impl AtomicGroupAccumulator {
    pub fn new(aggs: &[PreparedAgg]) -> AtomicGroupAccumulator {
        AtomicGroupAccumulator {
            count: AtomicI64::new(0),
            cells: aggs.iter().map(AtomicCell::new).collect(),
        }
    }

    #[inline]
    pub fn update(&self, aggs: &[PreparedAgg], row: &[Value]) -> Result<(), EvalError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        for (cell, agg) in self.cells.iter().zip(aggs) {
            match &agg.arg {
                None => cell.update(None),
                Some(e) => cell.update(Some(&e.eval(row)?)),
            }
        }
        Ok(())
    }

    pub fn count(&self) -> i64 {
        self.count.load(Ordering::Acquire)
    }

    pub fn finish(&self) -> Vec<Value> {
        self.cells.iter().map(AtomicCell::finish).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ColumnRef, Expr};
    use crate::prepared::PreparedExpr;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn agg(kind: AggKind, ty: DataType) -> PreparedAgg {
        let col = Expr::Column(ColumnRef {
            relation: None,
            name: "x".into(),
            index: Some(0),
        });
        PreparedAgg {
            kind,
            arg: (kind != AggKind::CountStar).then(|| Arc::new(PreparedExpr::new(&col).unwrap())),
            arg_type: Some(ty),
            name: "a".into(),
        }
    }

    fn int_aggs() -> Vec<PreparedAgg> {
        vec![
            agg(AggKind::CountStar, DataType::Int64),
            agg(AggKind::SumInt, DataType::Int64),
            agg(AggKind::Min, DataType::Int64),
            agg(AggKind::Max, DataType::Int64),
            agg(AggKind::Count, DataType::Int64),
        ]
    }

    fn acc_of(aggs: &[PreparedAgg], xs: &[Option<i64>]) -> GroupAccumulator {
        let mut acc = GroupAccumulator::new(aggs);
        for x in xs {
            let v = x.map(Value::Int).unwrap_or(Value::Null);
            acc.update(aggs, &[v]).unwrap();
        }
        acc
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            a in prop::collection::vec(prop::option::of(-1000i64..1000), 0..20),
            b in prop::collection::vec(prop::option::of(-1000i64..1000), 0..20),
            c in prop::collection::vec(prop::option::of(-1000i64..1000), 0..20),
        ) {
            let aggs = int_aggs();
            let (x, y, z) = (acc_of(&aggs, &a), acc_of(&aggs, &b), acc_of(&aggs, &c));
            let mut left = x.clone();
            left.merge(&y);
            left.merge(&z);
            let mut yz = y.clone();
            yz.merge(&z);
            let mut right = x.clone();
            right.merge(&yz);
            prop_assert_eq!(left.finish(), right.finish());
            prop_assert_eq!(left.count, right.count);
            let mut xy = x.clone();
            xy.merge(&y);
            let mut yx = y.clone();
            yx.merge(&x);
            prop_assert_eq!(xy.finish(), yx.finish());
            let all: Vec<_> = a.iter().chain(&b).chain(&c).copied().collect();
            prop_assert_eq!(left.finish(), acc_of(&aggs, &all).finish());
        }

        #[test]
        fn atomic_matches_plain(xs in prop::collection::vec(prop::option::of(-50i64..50), 0..40)) {
            let aggs = int_aggs();
            let atomic = AtomicGroupAccumulator::new(&aggs);
            for x in &xs {
                atomic.update(&aggs, &[x.map(Value::Int).unwrap_or(Value::Null)]).unwrap();
            }
            prop_assert_eq!(atomic.finish(), acc_of(&aggs, &xs).finish());
        }
    }

    #[test]
    fn float_and_text_extremes() {
        let aggs = vec![
            agg(AggKind::Min, DataType::Float64),
            agg(AggKind::Max, DataType::Float64),
            agg(AggKind::AvgFloat, DataType::Float64),
            agg(AggKind::SumFloat, DataType::Float64),
        ];
        let atomic = AtomicGroupAccumulator::new(&aggs);
        let mut plain = GroupAccumulator::new(&aggs);
        for x in [2.5, -1.0, 7.25, 0.0] {
            atomic.update(&aggs, &[Value::Float(x)]).unwrap();
            plain.update(&aggs, &[Value::Float(x)]).unwrap();
        }
        assert_eq!(atomic.finish(), plain.finish());
        assert_eq!(plain.finish()[0], Value::Float(-1.0));
        assert_eq!(plain.finish()[1], Value::Float(7.25));

        let text = vec![agg(AggKind::Min, DataType::Text), agg(AggKind::Max, DataType::Text)];
        let atomic = AtomicGroupAccumulator::new(&text);
        for s in ["pear", "apple", "zucchini"] {
            atomic.update(&text, &[Value::text(s)]).unwrap();
        }
        assert_eq!(atomic.finish(), vec![Value::text("apple"), Value::text("zucchini")]);
    }

    #[test]
    fn empty_states_finish_to_null_or_zero() {
        let aggs = int_aggs();
        let acc = GroupAccumulator::new(&aggs);
        assert_eq!(
            acc.finish(),
            vec![Value::Int(0), Value::Null, Value::Null, Value::Null, Value::Int(0)]
        );
        assert_eq!(AtomicGroupAccumulator::new(&aggs).finish(), acc.finish());
    }

    #[test]
    fn join_map_keeps_list_order_and_skips_null_keys() {
        let mut m = JoinMap::new();
        let r = |i: i64| Row::from(vec![Value::Int(i)]);
        m.insert(&[Value::Int(1)], r(10));
        m.insert(&[Value::Int(1)], r(11));
        m.insert(&[Value::Null], r(12));
        m.seal();
        assert!(m.is_sealed());
        assert_eq!(m.get(&[Value::Int(1)]), &[r(10), r(11)]);
        assert!(m.get(&[Value::Null]).is_empty());
        assert_eq!(m.row_count(), 2);
    }

    #[test]
    #[should_panic(expected = "after sealing")]
    fn sealed_map_rejects_inserts() {
        let mut m = JoinMap::new();
        m.seal();
        m.insert(&[Value::Int(1)], Row::from(vec![]));
    }
}
