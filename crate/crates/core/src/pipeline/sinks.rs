//! Push-based stage objects. Every stage forwards records to the next one
//! through a `dyn Sink` call, so a pipeline of k stages pays k indirect
//! calls per record.

use std::iter;
use std::sync::Arc;

use dashmap::{DashMap, DashSet};
use indexmap::IndexSet;
use parking_lot::Mutex;
use rustc_hash::FxHashSet;

use super::state::{AtomicGroupAccumulator, FxBuild, GroupAccumulator, GroupTable, JoinMap, Key};
use super::{EmitMode, ExecError};
use crate::plan::expr::EvalError;
use crate::plan::JoinKind;
use crate::prepared::{eval_into, Evaluator, PreparedAgg};
use crate::relmodel::Row;
use crate::value::Value;

/// What a terminal stage hands back when the stream ends.
pub(crate) enum Output {
    Rows(Vec<Row>),
    Groups(GroupTable),
    Scalar(GroupAccumulator),
    Map(JoinMap),
    Set(IndexSet<Row, FxBuild>),
    /// Results live in a structure shared between tasks.
    Shared,
}

pub(crate) trait Sink {
    fn accept(&mut self, row: &Row) -> Result<(), EvalError>;

    /// True once no further input can change the output.
    fn full(&self) -> bool {
        false
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError>;
}

pub(crate) type BoxSink<'a> = Box<dyn Sink + 'a>;

#[inline]
pub(crate) fn concat(build: &[Value], probe: &[Value]) -> Row {
    let mut v = Vec::with_capacity(build.len() + probe.len());
    v.extend_from_slice(build);
    v.extend_from_slice(probe);
    Row::from(v)
}

pub(crate) fn null_padded(build_width: usize, probe: &[Value]) -> Row {
    let mut v = Vec::with_capacity(build_width + probe.len());
    v.resize(build_width, Value::Null);
    v.extend_from_slice(probe);
    Row::from(v)
}

/// Emits the join output for one probe record.
///
/// `Flat` builds a boxed iterator over the output records and drains it,
/// the analog of flattening a nested stream per element. `Multi` calls
/// `emit` directly for each match. Both produce the same records in the
/// same order: the build-side list order.
pub fn probe_emit(
    row: &Row,
    key: &[Value],
    map: &JoinMap,
    kind: JoinKind,
    build_width: usize,
    mode: EmitMode,
    emit: &mut dyn FnMut(&Row) -> Result<(), EvalError>,
) -> Result<(), EvalError> {
    let matches = map.get(key);
    match mode {
        EmitMode::Flat => {
            let nested: Box<dyn Iterator<Item = Row> + '_> = match kind {
                JoinKind::Inner => Box::new(matches.iter().map(move |b| concat(b, row))),
                JoinKind::Left if matches.is_empty() => Box::new(iter::once(null_padded(build_width, row))),
                JoinKind::Left => Box::new(matches.iter().map(move |b| concat(b, row))),
                JoinKind::Semi if !matches.is_empty() => Box::new(iter::once(row.clone())),
                JoinKind::Anti if matches.is_empty() => Box::new(iter::once(row.clone())),
                JoinKind::Semi | JoinKind::Anti => Box::new(iter::empty()),
            };
            for out in nested {
                emit(&out)?;
            }
        }
        EmitMode::Multi => match kind {
            JoinKind::Inner | JoinKind::Left => {
                if matches.is_empty() && kind == JoinKind::Left {
                    emit(&null_padded(build_width, row))?;
                }
                for b in matches {
                    emit(&concat(b, row))?;
                }
            }
            JoinKind::Semi => {
                if !matches.is_empty() {
                    emit(row)?;
                }
            }
            JoinKind::Anti => {
                if matches.is_empty() {
                    emit(row)?;
                }
            }
        },
    }
    Ok(())
}

/// Stable sort on evaluated keys; Null first ascending.
pub(crate) fn sort_rows(rows: Vec<Row>, keys: &[(Evaluator, bool)], parallel: bool) -> Result<Vec<Row>, EvalError> {
    use rayon::prelude::*;
    let key_of = |r: &Row| -> Result<Vec<Value>, EvalError> { keys.iter().map(|(e, _)| e.eval(r)).collect() };
    let mut keyed: Vec<(Vec<Value>, Row)> = if parallel {
        rows.into_par_iter()
            .map(|r| Ok((key_of(&r)?, r)))
            .collect::<Result<_, EvalError>>()?
    } else {
        rows.into_iter()
            .map(|r| Ok((key_of(&r)?, r)))
            .collect::<Result<_, EvalError>>()?
    };
    let cmp = |a: &(Vec<Value>, Row), b: &(Vec<Value>, Row)| {
        for ((x, y), (_, desc)) in a.0.iter().zip(&b.0).zip(keys) {
            let o = x.total_cmp(y);
            let o = if *desc { o.reverse() } else { o };
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    };
    if parallel {
        keyed.par_sort_by(cmp);
    } else {
        keyed.sort_by(cmp);
    }
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

// Intermediate stages.

pub(crate) struct FilterSink<'a> {
    pub preds: &'a [Evaluator],
    pub next: BoxSink<'a>,
}

impl Sink for FilterSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        for p in self.preds {
            if !p.test(row)? {
                return Ok(());
            }
        }
        self.next.accept(row)
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

pub(crate) struct MapSink<'a> {
    pub exprs: &'a [Evaluator],
    pub next: BoxSink<'a>,
}

impl Sink for MapSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        let mut out = Vec::with_capacity(self.exprs.len());
        for e in self.exprs {
            out.push(e.eval(row)?);
        }
        self.next.accept(&Row::from(out))
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

pub(crate) struct ProbeSink<'a> {
    pub map: Arc<JoinMap>,
    pub keys: &'a [Evaluator],
    pub kind: JoinKind,
    pub mode: EmitMode,
    pub build_width: usize,
    pub scratch: Vec<Value>,
    pub next: BoxSink<'a>,
}

impl Sink for ProbeSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        let next = &mut self.next;
        probe_emit(
            row,
            &self.scratch,
            &self.map,
            self.kind,
            self.build_width,
            self.mode,
            &mut |r| next.accept(r),
        )
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

pub(crate) struct SortSink<'a> {
    pub keys: &'a [(Evaluator, bool)],
    pub buf: Vec<Row>,
    pub next: BoxSink<'a>,
}

impl Sink for SortSink<'_> {
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.buf.push(row.clone());
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        let SortSink { keys, buf, mut next } = *self;
        for row in sort_rows(buf, keys, false)? {
            if next.full() {
                break;
            }
            next.accept(&row)?;
        }
        next.finish()
    }
}

pub(crate) struct LimitSink<'a> {
    pub limit: u64,
    pub seen: u64,
    pub next: BoxSink<'a>,
}

impl Sink for LimitSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        if self.seen < self.limit {
            self.seen += 1;
            self.next.accept(row)?;
        }
        Ok(())
    }

    fn full(&self) -> bool {
        self.seen >= self.limit || self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

pub(crate) struct SkipSink<'a> {
    pub skip: u64,
    pub skipped: u64,
    pub next: BoxSink<'a>,
}

impl Sink for SkipSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        if self.skipped < self.skip {
            self.skipped += 1;
            Ok(())
        } else {
            self.next.accept(row)
        }
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

pub(crate) struct DistinctSink<'a> {
    pub seen: FxHashSet<Row>,
    pub next: BoxSink<'a>,
}

impl Sink for DistinctSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        if self.seen.insert(row.clone()) {
            self.next.accept(row)?;
        }
        Ok(())
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

/// Distinct over a set shared by all tasks; no order guarantee.
pub(crate) struct SharedDistinctSink<'a> {
    pub seen: &'a DashSet<Row, FxBuild>,
    pub next: BoxSink<'a>,
}

impl Sink for SharedDistinctSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        if !self.seen.contains(row) && self.seen.insert(row.clone()) {
            self.next.accept(row)?;
        }
        Ok(())
    }

    fn full(&self) -> bool {
        self.next.full()
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.next.finish()
    }
}

// Terminal stages.

#[derive(Default)]
pub(crate) struct CollectSink {
    pub rows: Vec<Row>,
}

impl Sink for CollectSink {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.rows.push(row.clone());
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Rows(self.rows))
    }
}

/// Insertion-ordered set of distinct records, one per task.
#[derive(Default)]
pub(crate) struct OrderedSetSink {
    pub set: IndexSet<Row, FxBuild>,
}

impl Sink for OrderedSetSink {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        if !self.set.contains(row) {
            self.set.insert(row.clone());
        }
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Set(self.set))
    }
}

pub(crate) struct GroupSink<'a> {
    pub keys: &'a [Evaluator],
    pub aggs: &'a [PreparedAgg],
    pub table: GroupTable,
    pub scratch: Vec<Value>,
}

impl<'a> GroupSink<'a> {
    pub fn new(keys: &'a [Evaluator], aggs: &'a [PreparedAgg]) -> GroupSink<'a> {
        GroupSink {
            keys,
            aggs,
            table: GroupTable::default(),
            scratch: Vec::with_capacity(keys.len()),
        }
    }
}

impl Sink for GroupSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        match self.table.get_mut(self.scratch.as_slice()) {
            Some(acc) => acc.update(self.aggs, row),
            None => {
                let mut acc = GroupAccumulator::new(self.aggs);
                acc.update(self.aggs, row)?;
                self.table.insert(Key::from(self.scratch.as_slice()), acc);
                Ok(())
            }
        }
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Groups(self.table))
    }
}

pub(crate) struct ScalarSink<'a> {
    pub aggs: &'a [PreparedAgg],
    pub acc: GroupAccumulator,
}

impl Sink for ScalarSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.acc.update(self.aggs, row)
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Scalar(self.acc))
    }
}

pub(crate) struct JoinMapSink<'a> {
    pub keys: &'a [Evaluator],
    pub map: JoinMap,
    pub scratch: Vec<Value>,
}

impl Sink for JoinMapSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        self.map.insert(&self.scratch, row.clone());
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Map(self.map))
    }
}

/// Grouping into one shared map, each entry behind its own lock.
pub(crate) struct LockedGroupSink<'a> {
    pub keys: &'a [Evaluator],
    pub aggs: &'a [PreparedAgg],
    pub shared: &'a DashMap<Key, Mutex<GroupAccumulator>, FxBuild>,
    pub scratch: Vec<Value>,
}

impl Sink for LockedGroupSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        if let Some(entry) = self.shared.get(self.scratch.as_slice()) {
            return entry.lock().update(self.aggs, row);
        }
        let entry = self
            .shared
            .entry(Key::from(self.scratch.as_slice()))
            .or_insert_with(|| Mutex::new(GroupAccumulator::new(self.aggs)));
        let result = entry.lock().update(self.aggs, row);
        result
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Shared)
    }
}

/// Grouping into one shared map of lock-free accumulators.
pub(crate) struct AtomicGroupSink<'a> {
    pub keys: &'a [Evaluator],
    pub aggs: &'a [PreparedAgg],
    pub shared: &'a DashMap<Key, AtomicGroupAccumulator, FxBuild>,
    pub scratch: Vec<Value>,
}

impl Sink for AtomicGroupSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        if let Some(entry) = self.shared.get(self.scratch.as_slice()) {
            return entry.update(self.aggs, row);
        }
        let entry = self
            .shared
            .entry(Key::from(self.scratch.as_slice()))
            .or_insert_with(|| AtomicGroupAccumulator::new(self.aggs))
            .downgrade();
        entry.update(self.aggs, row)
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Shared)
    }
}

pub(crate) struct LockedScalarSink<'a> {
    pub aggs: &'a [PreparedAgg],
    pub shared: &'a Mutex<GroupAccumulator>,
}

impl Sink for LockedScalarSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.shared.lock().update(self.aggs, row)
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Shared)
    }
}

pub(crate) struct AtomicScalarSink<'a> {
    pub aggs: &'a [PreparedAgg],
    pub shared: &'a AtomicGroupAccumulator,
}

impl Sink for AtomicScalarSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.shared.update(self.aggs, row)
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Shared)
    }
}

/// Join build into one shared map; CG locks per entry, CGCC appends under
/// the map's shard lock.
pub(crate) struct SharedJoinMapSink<'a> {
    pub keys: &'a [Evaluator],
    pub locked: Option<&'a DashMap<Key, Mutex<Vec<Row>>, FxBuild>>,
    pub direct: Option<&'a DashMap<Key, Vec<Row>, FxBuild>>,
    pub scratch: Vec<Value>,
}

impl Sink for SharedJoinMapSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        eval_into(self.keys, row, &mut self.scratch)?;
        if self.scratch.iter().any(Value::is_null) {
            return Ok(());
        }
        if let Some(m) = self.locked {
            if let Some(e) = m.get(self.scratch.as_slice()) {
                e.lock().push(row.clone());
                return Ok(());
            }
            m.entry(Key::from(self.scratch.as_slice()))
                .or_default()
                .lock()
                .push(row.clone());
        } else if let Some(m) = self.direct {
            m.entry(Key::from(self.scratch.as_slice()))
                .or_default()
                .push(row.clone());
        }
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        Ok(Output::Shared)
    }
}

/// Per-task collector whose rows are appended to a shared list when the
/// task ends, so chunks land in completion order.
pub(crate) struct CompletionCollectSink<'a> {
    pub rows: Vec<Row>,
    pub shared: &'a Mutex<Vec<Row>>,
}

impl Sink for CompletionCollectSink<'_> {
    #[inline]
    fn accept(&mut self, row: &Row) -> Result<(), EvalError> {
        self.rows.push(row.clone());
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Output, ExecError> {
        self.shared.lock().extend(self.rows);
        Ok(Output::Shared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[i64]) -> Row {
        v.iter().map(|x| Value::Int(*x)).collect::<Vec<_>>().into()
    }

    fn map() -> JoinMap {
        let mut m = JoinMap::new();
        m.insert(&[Value::Int(1)], row(&[1, 100]));
        m.insert(&[Value::Int(1)], row(&[1, 101]));
        m.insert(&[Value::Int(2)], row(&[2, 200]));
        m.seal();
        m
    }

    fn emit_all(kind: JoinKind, mode: EmitMode, key: i64) -> Vec<Row> {
        let m = map();
        let mut out = Vec::new();
        let probe = row(&[key, 9]);
        probe_emit(&probe, &[Value::Int(key)], &m, kind, 2, mode, &mut |r| {
            out.push(r.clone());
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn absent_key() {
        for mode in [EmitMode::Flat, EmitMode::Multi] {
            assert!(emit_all(JoinKind::Inner, mode, 7).is_empty());
            let left = emit_all(JoinKind::Left, mode, 7);
            assert_eq!(left.len(), 1);
            assert_eq!(left[0].as_ref(), &[Value::Null, Value::Null, Value::Int(7), Value::Int(9)]);
            assert_eq!(emit_all(JoinKind::Anti, mode, 7).len(), 1);
            assert!(emit_all(JoinKind::Semi, mode, 7).is_empty());
        }
    }

    #[test]
    fn two_matches_in_list_order_both_modes() {
        for kind in [JoinKind::Inner, JoinKind::Left, JoinKind::Semi, JoinKind::Anti] {
            assert_eq!(emit_all(kind, EmitMode::Flat, 1), emit_all(kind, EmitMode::Multi, 1));
        }
        let out = emit_all(JoinKind::Inner, EmitMode::Flat, 1);
        assert_eq!(out, vec![row(&[1, 100, 1, 9]), row(&[1, 101, 1, 9])]);
        assert_eq!(emit_all(JoinKind::Semi, EmitMode::Multi, 1), vec![row(&[1, 9])]);
    }
}
