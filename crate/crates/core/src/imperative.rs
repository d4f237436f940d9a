//! The imperative backend: a plan lowered to a short list of phases, each
//! one loop over its input with every operator inlined into the loop body.
//! Operators are matched by enum, not called through trait objects.

use std::fmt;

use rustc_hash::FxHashSet;

use crate::oracle::ResultSet;
use crate::pipeline::state::{group_rows, GroupTable};
use crate::pipeline::{concat, null_padded, sort_rows, source_rows, ExecError, GroupAccumulator, JoinMap, Key};
use crate::plan::expr::EvalError;
use crate::plan::{JoinKind, LogicalPlan, PlanError, ResultOrdering};
use crate::prepared::{eval_into, prepare, Evaluator, PreparedAgg, PreparedPlan, PreparedQuery};
use crate::relmodel::{Catalog, Database, Row, Schema};
use crate::value::Value;

#[derive(Debug, Clone)]
enum Input {
    Table(String),
    Buffer(usize),
}

#[derive(Debug, Clone)]
enum Op {
    /// Short-circuit conjunction of every predicate.
    Filter(Vec<Evaluator>),
    Map(Vec<Evaluator>),
    Probe {
        map: usize,
        keys: Vec<Evaluator>,
        kind: JoinKind,
        build_width: usize,
    },
    Limit(u64),
    Skip(u64),
    Distinct,
}

#[derive(Debug, Clone)]
enum SinkSpec {
    Buffer(usize),
    /// Sorted buffer; `skip` then `limit` applied after sorting.
    Sort {
        buffer: usize,
        keys: Vec<(Evaluator, bool)>,
        skip: u64,
        limit: Option<u64>,
    },
    JoinMap {
        map: usize,
        keys: Vec<Evaluator>,
    },
    Group {
        buffer: usize,
        keys: Vec<Evaluator>,
        aggs: Vec<PreparedAgg>,
    },
    Scalar {
        buffer: usize,
        aggs: Vec<PreparedAgg>,
    },
}

#[derive(Debug, Clone)]
struct Phase {
    input: Input,
    ops: Vec<Op>,
    sink: SinkSpec,
}

/// A plan lowered to loops. Phases run in order; each reads a table or an
/// earlier phase's buffer and writes a buffer or a join map.
#[derive(Debug, Clone)]
pub struct FusedProgram {
    phases: Vec<Phase>,
    buffers: usize,
    maps: usize,
    result: usize,
    pub schema: Schema,
    pub ordering: ResultOrdering,
}

/// Prepares `plan` and lowers it to loops.
pub fn compile_fused(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<FusedProgram, PlanError> {
    Ok(compile_fused_prepared(&prepare(plan, catalog)?))
}

/// Lowers an already prepared query; the program shares its evaluators.
pub fn compile_fused_prepared(query: &PreparedQuery) -> FusedProgram {
    let mut b = Lowering::default();
    let (input, ops) = b.open(&query.root);
    let result = b.buffer();
    b.phases.push(Phase {
        input,
        ops,
        sink: SinkSpec::Buffer(result),
    });
    FusedProgram {
        phases: b.phases,
        buffers: b.buffers,
        maps: b.maps,
        result,
        schema: query.schema.clone(),
        ordering: query.ordering.clone(),
    }
}

#[derive(Default)]
struct Lowering {
    phases: Vec<Phase>,
    buffers: usize,
    maps: usize,
}

impl Lowering {
    fn buffer(&mut self) -> usize {
        self.buffers += 1;
        self.buffers - 1
    }

    /// Lowers `plan` to an open loop: its input plus the operators applied
    /// so far. Pipeline breakers close the loop as a phase of their own.
    fn open(&mut self, plan: &PreparedPlan) -> (Input, Vec<Op>) {
        use PreparedPlan as P;
        match plan {
            P::Scan { table } => (Input::Table(table.clone()), Vec::new()),
            P::Filter { input, predicates } => {
                let (src, mut ops) = self.open(input);
                ops.push(Op::Filter(predicates.clone()));
                (src, ops)
            }
            P::Project { input, exprs } => {
                let (src, mut ops) = self.open(input);
                ops.push(Op::Map(exprs.clone()));
                (src, ops)
            }
            P::Join {
                kind,
                build,
                probe,
                build_keys,
                probe_keys,
                build_width,
            } => {
                let (src, mut ops) = self.open(probe);
                let (bsrc, bops) = self.open(build);
                let map = self.maps;
                self.maps += 1;
                self.phases.push(Phase {
                    input: bsrc,
                    ops: bops,
                    sink: SinkSpec::JoinMap {
                        map,
                        keys: build_keys.clone(),
                    },
                });
                ops.push(Op::Probe {
                    map,
                    keys: probe_keys.clone(),
                    kind: *kind,
                    build_width: *build_width,
                });
                (src, ops)
            }
            P::Sort { input, keys } => {
                let (src, ops) = self.open(input);
                let buffer = self.buffer();
                self.phases.push(Phase {
                    input: src,
                    ops,
                    sink: SinkSpec::Sort {
                        buffer,
                        keys: keys.clone(),
                        skip: 0,
                        limit: None,
                    },
                });
                (Input::Buffer(buffer), Vec::new())
            }
            P::Limit { input, count } => {
                let (src, mut ops) = self.open(input);
                if let Some(SinkSpec::Sort { limit: l @ None, .. }) = self.fold_target(&src, &ops) {
                    *l = Some(*count);
                } else {
                    ops.push(Op::Limit(*count));
                }
                (src, ops)
            }
            P::Skip { input, count } => {
                let (src, mut ops) = self.open(input);
                match self.fold_target(&src, &ops) {
                    Some(SinkSpec::Sort { skip, limit: None, .. }) => *skip += *count,
                    _ => ops.push(Op::Skip(*count)),
                }
                (src, ops)
            }
            P::GroupAggregate { input, keys, aggs } => {
                let (src, ops) = self.open(input);
                let buffer = self.buffer();
                let sink = if keys.is_empty() {
                    SinkSpec::Scalar {
                        buffer,
                        aggs: aggs.clone(),
                    }
                } else {
                    SinkSpec::Group {
                        buffer,
                        keys: keys.clone(),
                        aggs: aggs.clone(),
                    }
                };
                self.phases.push(Phase { input: src, ops, sink });
                (Input::Buffer(buffer), Vec::new())
            }
            P::Distinct { input } => {
                let (src, mut ops) = self.open(input);
                ops.push(Op::Distinct);
                (src, ops)
            }
        }
    }

    /// The sort sink a trailing limit or skip can fold into: the loop reads
    /// the sorted buffer directly, with no operators in between.
    fn fold_target(&mut self, src: &Input, ops: &[Op]) -> Option<&mut SinkSpec> {
        let Input::Buffer(b) = src else { return None };
        if !ops.is_empty() {
            return None;
        }
        self.phases
            .iter_mut()
            .map(|p| &mut p.sink)
            .find(|s| matches!(s, SinkSpec::Sort { buffer, .. } if buffer == b))
    }
}

/// Mutable state of one operator.
enum OpState {
    None,
    Count(u64),
    Seen(FxHashSet<Row>),
    Scratch(Vec<Value>),
}

enum SinkState {
    Rows(Vec<Row>),
    Map(JoinMap, Vec<Value>),
    Groups(GroupTable, Vec<Value>),
    Scalar(GroupAccumulator),
}

struct Loop<'a> {
    ops: &'a [Op],
    state: Vec<OpState>,
    maps: &'a [JoinMap],
    sink: &'a SinkSpec,
    out: SinkState,
    /// Set once a limit is exhausted; nothing further can reach the sink.
    done: bool,
}

impl Loop<'_> {
    fn push(&mut self, i: usize, row: &Row) -> Result<(), EvalError> {
        let Some(op) = self.ops.get(i) else {
            return self.emit(row);
        };
        match op {
            Op::Filter(preds) => {
                for p in preds {
                    if !p.test(row)? {
                        return Ok(());
                    }
                }
                self.push(i + 1, row)
            }
            Op::Map(exprs) => {
                let mut out = Vec::with_capacity(exprs.len());
                for e in exprs {
                    out.push(e.eval(row)?);
                }
                self.push(i + 1, &Row::from(out))
            }
            Op::Probe {
                map,
                keys,
                kind,
                build_width,
            } => {
                let OpState::Scratch(mut key) = std::mem::replace(&mut self.state[i], OpState::None) else {
                    unreachable!("probe state")
                };
                let r = eval_into(keys, row, &mut key);
                let maps = self.maps;
                let matches = match r {
                    Ok(()) => maps[*map].get(&key),
                    Err(e) => {
                        self.state[i] = OpState::Scratch(key);
                        return Err(e);
                    }
                };
                self.state[i] = OpState::Scratch(key);
                match kind {
                    JoinKind::Inner | JoinKind::Left => {
                        if matches.is_empty() && *kind == JoinKind::Left {
                            return self.push(i + 1, &null_padded(*build_width, row));
                        }
                        for b in matches {
                            self.push(i + 1, &concat(b, row))?;
                        }
                        Ok(())
                    }
                    JoinKind::Semi if !matches.is_empty() => self.push(i + 1, row),
                    JoinKind::Anti if matches.is_empty() => self.push(i + 1, row),
                    JoinKind::Semi | JoinKind::Anti => Ok(()),
                }
            }
            Op::Limit(n) => {
                let OpState::Count(seen) = &mut self.state[i] else {
                    unreachable!("limit state")
                };
                if *seen >= *n {
                    self.done = true;
                    return Ok(());
                }
                *seen += 1;
                if *seen == *n {
                    self.done = true;
                }
                self.push(i + 1, row)
            }
            Op::Skip(n) => {
                let OpState::Count(skipped) = &mut self.state[i] else {
                    unreachable!("skip state")
                };
                if *skipped < *n {
                    *skipped += 1;
                    return Ok(());
                }
                self.push(i + 1, row)
            }
            Op::Distinct => {
                let OpState::Seen(seen) = &mut self.state[i] else {
                    unreachable!("distinct state")
                };
                if seen.insert(row.clone()) {
                    self.push(i + 1, row)
                } else {
                    Ok(())
                }
            }
        }
    }

    #[inline]
    fn emit(&mut self, row: &Row) -> Result<(), EvalError> {
        match (&mut self.out, self.sink) {
            (SinkState::Rows(rows), _) => rows.push(row.clone()),
            (SinkState::Map(map, key), SinkSpec::JoinMap { keys, .. }) => {
                eval_into(keys, row, key)?;
                map.insert(key, row.clone());
            }
            (SinkState::Groups(table, key), SinkSpec::Group { keys, aggs, .. }) => {
                eval_into(keys, row, key)?;
                match table.get_mut(key.as_slice()) {
                    Some(acc) => acc.update(aggs, row)?,
                    None => {
                        let mut acc = GroupAccumulator::new(aggs);
                        acc.update(aggs, row)?;
                        table.insert(Key::from(key.as_slice()), acc);
                    }
                }
            }
            (SinkState::Scalar(acc), SinkSpec::Scalar { aggs, .. }) => acc.update(aggs, row)?,
            _ => unreachable!("sink state does not match its spec"),
        }
        Ok(())
    }
}

/// Runs the program on one thread.
pub fn run_fused(program: &FusedProgram, db: &Database) -> Result<ResultSet, ExecError> {
    let mut buffers: Vec<Option<Vec<Row>>> = vec![None; program.buffers];
    let mut maps: Vec<JoinMap> = Vec::with_capacity(program.maps);
    for phase in &program.phases {
        let (rows, label): (&[Row], String) = match &phase.input {
            Input::Table(t) => (source_rows(db, t)?, format!("table {t}")),
            Input::Buffer(b) => (
                buffers[*b].as_deref().expect("buffer filled by an earlier phase"),
                format!("buffer {b}"),
            ),
        };
        let state = phase
            .ops
            .iter()
            .map(|op| match op {
                Op::Limit(_) | Op::Skip(_) => OpState::Count(0),
                Op::Distinct => OpState::Seen(FxHashSet::default()),
                Op::Probe { keys, .. } => OpState::Scratch(Vec::with_capacity(keys.len())),
                Op::Filter(_) | Op::Map(_) => OpState::None,
            })
            .collect();
        let out = match &phase.sink {
            SinkSpec::Buffer(_) | SinkSpec::Sort { .. } => SinkState::Rows(Vec::new()),
            SinkSpec::JoinMap { keys, .. } => SinkState::Map(JoinMap::new(), Vec::with_capacity(keys.len())),
            SinkSpec::Group { keys, .. } => SinkState::Groups(GroupTable::default(), Vec::with_capacity(keys.len())),
            SinkSpec::Scalar { aggs, .. } => SinkState::Scalar(GroupAccumulator::new(aggs)),
        };
        let mut lp = Loop {
            ops: &phase.ops,
            state,
            maps: &maps,
            sink: &phase.sink,
            out,
            done: false,
        };
        for (i, row) in rows.iter().enumerate() {
            lp.push(0, row)
                .map_err(|e| ExecError::from(e).at(|| format!("{label} row {i}")))?;
            if lp.done {
                break;
            }
        }
        let out = lp.out;
        match (&phase.sink, out) {
            (SinkSpec::Buffer(b), SinkState::Rows(rows)) => buffers[*b] = Some(rows),
            (
                SinkSpec::Sort {
                    buffer,
                    keys,
                    skip,
                    limit,
                },
                SinkState::Rows(rows),
            ) => {
                let mut sorted = sort_rows(rows, keys, false)?;
                let skip = usize::try_from(*skip).unwrap_or(usize::MAX).min(sorted.len());
                sorted.drain(..skip);
                if let Some(l) = limit {
                    sorted.truncate(usize::try_from(*l).unwrap_or(usize::MAX));
                }
                buffers[*buffer] = Some(sorted);
            }
            (SinkSpec::JoinMap { .. }, SinkState::Map(mut m, _)) => {
                m.seal();
                maps.push(m);
            }
            (SinkSpec::Group { buffer, .. }, SinkState::Groups(table, _)) => {
                buffers[*buffer] = Some(group_rows(&table));
            }
            (SinkSpec::Scalar { buffer, .. }, SinkState::Scalar(acc)) => {
                buffers[*buffer] = Some(vec![Row::from(acc.finish())]);
            }
            _ => unreachable!("sink state does not match its spec"),
        }
    }
    let rows = buffers[program.result].take().unwrap_or_default();
    Ok(ResultSet::new(program.schema.clone(), rows, program.ordering.clone()))
}

impl FusedProgram {
    /// One line per phase: input, inlined operators and sink.
    pub fn phase_summaries(&self) -> Vec<String> {
        self.phases.iter().map(|p| p.to_string()).collect()
    }

    /// Every evaluator the loops invoke, in phase order.
    pub fn evaluators(&self) -> Vec<Evaluator> {
        let mut out = Vec::new();
        for p in &self.phases {
            for op in &p.ops {
                match op {
                    Op::Filter(e) | Op::Map(e) => out.extend(e.iter().cloned()),
                    Op::Probe { keys, .. } => out.extend(keys.iter().cloned()),
                    Op::Limit(_) | Op::Skip(_) | Op::Distinct => {}
                }
            }
            match &p.sink {
                SinkSpec::Buffer(_) => {}
                SinkSpec::Sort { keys, .. } => out.extend(keys.iter().map(|(e, _)| e.clone())),
                SinkSpec::JoinMap { keys, .. } => out.extend(keys.iter().cloned()),
                SinkSpec::Group { keys, aggs, .. } => {
                    out.extend(keys.iter().cloned());
                    out.extend(aggs.iter().filter_map(|a| a.arg.clone()));
                }
                SinkSpec::Scalar { aggs, .. } => out.extend(aggs.iter().filter_map(|a| a.arg.clone())),
            }
        }
        out
    }

    pub fn explain(&self) -> String {
        let mut s = String::from("fused program\n");
        for (i, p) in self.phases.iter().enumerate() {
            s.push_str(&format!("  phase {i}: {p}\n"));
        }
        s
    }
}

fn list(evals: &[Evaluator], sep: &str) -> String {
    evals.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.input {
            Input::Table(t) => write!(f, "for row in {t}")?,
            Input::Buffer(b) => write!(f, "for row in buffer {b}")?,
        }
        for op in &self.ops {
            match op {
                Op::Filter(p) => write!(f, " | if {}", list(p, " && "))?,
                Op::Map(e) => write!(f, " | row = ({})", list(e, ", "))?,
                Op::Probe { map, kind, .. } => write!(f, " | {} probe map {map}", kind.name())?,
                Op::Limit(n) => write!(f, " | limit {n}")?,
                Op::Skip(n) => write!(f, " | skip {n}")?,
                Op::Distinct => write!(f, " | distinct")?,
            }
        }
        match &self.sink {
            SinkSpec::Buffer(b) => write!(f, " -> buffer {b}"),
            SinkSpec::Sort {
                buffer, skip, limit, ..
            } => {
                write!(f, " -> sort into buffer {buffer}")?;
                if *skip > 0 {
                    write!(f, ", skip {skip}")?;
                }
                match limit {
                    Some(l) => write!(f, ", limit {l}"),
                    None => Ok(()),
                }
            }
            SinkSpec::JoinMap { map, .. } => write!(f, " -> join map {map}"),
            SinkSpec::Group { buffer, .. } => write!(f, " -> group map into buffer {buffer}"),
            SinkSpec::Scalar { buffer, .. } => write!(f, " -> accumulator into buffer {buffer}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{col, lit, AggSpec, PlanBuilder, SortKey};
    use crate::relmodel::TableData;
    use crate::value::DataType;

    fn db() -> Database {
        let schema = Schema::of(&[("k", DataType::Int64), ("v", DataType::Float64)]);
        let rows = [3, 1, 3, 2, 1]
            .iter()
            .enumerate()
            .map(|(i, k)| Row::from(vec![Value::Int(*k), Value::Float(i as f64)]))
            .collect();
        let mut db = Database::new();
        db.insert(TableData::new("t", schema, rows).unwrap());
        db
    }

    #[test]
    fn scan_only_copies_rows() {
        let db = db();
        let plan = PlanBuilder::scan(&db, "t").unwrap().build();
        let prog = compile_fused(&plan, &db).unwrap();
        assert_eq!(prog.phases.len(), 1);
        let rs = run_fused(&prog, &db).unwrap();
        assert_eq!(rs.rows, db.table("t").unwrap().rows().to_vec());
    }

    #[test]
    fn sort_limit_folds_into_sort_phase() {
        let db = db();
        let plan = PlanBuilder::scan(&db, "t")
            .unwrap()
            .sort(vec![SortKey::desc(col("v"))])
            .unwrap()
            .skip(1)
            .unwrap()
            .limit(2)
            .unwrap()
            .build();
        let prog = compile_fused(&plan, &db).unwrap();
        assert_eq!(prog.phase_summaries()[0], "for row in t -> sort into buffer 0, skip 1, limit 2");
        let rs = run_fused(&prog, &db).unwrap();
        let vs: Vec<Value> = rs.rows.iter().map(|r| r[1].clone()).collect();
        assert_eq!(vs, vec![Value::Float(3.0), Value::Float(2.0)]);
    }

    #[test]
    fn empty_input_scalar_aggregate() {
        let mut db = db();
        db.insert(TableData::new("e", Schema::of(&[("x", DataType::Float64)]), vec![]).unwrap());
        let plan = PlanBuilder::scan(&db, "e")
            .unwrap()
            .filter(vec![col("x").gt(lit(0.0))])
            .unwrap()
            .group_by(vec![], vec![AggSpec::sum(col("x"), "s"), AggSpec::count_star("n")])
            .unwrap()
            .build();
        let rs = run_fused(&compile_fused(&plan, &db).unwrap(), &db).unwrap();
        assert_eq!(rs.rows, vec![Row::from(vec![Value::Null, Value::Int(0)])]);
    }

    #[test]
    fn distinct_keeps_first_encounter_order() {
        let db = db();
        let plan = PlanBuilder::scan(&db, "t")
            .unwrap()
            .project(vec![crate::plan::NamedExpr::new(col("k"), "k")])
            .unwrap()
            .distinct()
            .unwrap()
            .build();
        let rs = run_fused(&compile_fused(&plan, &db).unwrap(), &db).unwrap();
        let ks: Vec<Value> = rs.rows.iter().map(|r| r[0].clone()).collect();
        assert_eq!(ks, vec![Value::Int(3), Value::Int(1), Value::Int(2)]);
    }
}
