use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use dashmap::{DashMap, DashSet};
use parking_lot::Mutex;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use super::sinks::{
    sort_rows, AtomicGroupSink, AtomicScalarSink, BoxSink, CollectSink, CompletionCollectSink, DistinctSink,
    FilterSink, GroupSink, JoinMapSink, LimitSink, LockedGroupSink, LockedScalarSink, MapSink, OrderedSetSink,
    Output, ProbeSink, ScalarSink, SharedDistinctSink, SharedJoinMapSink, SkipSink, SortSink,
};
use super::state::{group_rows, merge_groups, FxBuild, GroupTable};
use super::{ExecError, Pipeline, Segment, Source, Stage, Strategy, Terminal};
use super::{AtomicGroupAccumulator, GroupAccumulator, JoinMap, Key};
use crate::oracle::ResultSet;
use crate::relmodel::{Database, Row};

/// Worker pools, one per worker count, created on first use.
pub(crate) fn pool(workers: usize) -> Result<Arc<ThreadPool>, ExecError> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let workers = workers.max(1);
    let mut pools = POOLS.get_or_init(Default::default).lock();
    if let Some(p) = pools.get(&workers) {
        return Ok(p.clone());
    }
    let p = ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("qstream-worker-{i}"))
        .build()
        .map_err(|e| ExecError::Pool(e.to_string()))?;
    let p = Arc::new(p);
    pools.insert(workers, p.clone());
    Ok(p)
}

pub(crate) fn source_rows<'d>(db: &'d Database, table: &str) -> Result<&'d [Row], ExecError> {
    db.table(table)
        .map(|t| t.rows())
        .ok_or_else(|| ExecError::UnknownTable(table.to_string()))
}

/// Executes the pipeline to completion. Parallel strategies run on a
/// worker pool sized by `options.workers`.
pub fn run(p: &Pipeline, db: &Database) -> Result<ResultSet, ExecError> {
    let ctx = Ctx {
        db,
        chunk: p.options.chunk_size.max(1),
        parallel_build: p.options.parallel_build,
    };
    let out = if p.strategy == Strategy::Seq {
        exec(&p.root, &ctx, Strategy::Seq)?
    } else {
        pool(p.options.workers)?.install(|| exec(&p.root, &ctx, p.strategy))?
    };
    Ok(ResultSet::new(p.schema.clone(), out.into_rows(), p.ordering.clone()))
}

struct Ctx<'d> {
    db: &'d Database,
    chunk: usize,
    parallel_build: bool,
}

enum SegOut {
    Rows(Vec<Row>),
    Map(JoinMap),
}

impl SegOut {
    fn into_rows(self) -> Vec<Row> {
        match self {
            SegOut::Rows(r) => r,
            SegOut::Map(_) => unreachable!("join build segment used as a row source"),
        }
    }

    fn into_map(self) -> JoinMap {
        match self {
            SegOut::Map(m) => m,
            SegOut::Rows(_) => unreachable!("row segment used as a join build"),
        }
    }
}

fn from_output(out: Output) -> SegOut {
    match out {
        Output::Rows(r) => SegOut::Rows(r),
        Output::Groups(g) => SegOut::Rows(group_rows(&g)),
        Output::Scalar(acc) => SegOut::Rows(vec![Row::from(acc.finish())]),
        Output::Map(m) => SegOut::Map(m),
        Output::Set(s) => SegOut::Rows(s.into_iter().collect()),
        Output::Shared => unreachable!("shared output has no local result"),
    }
}

type Maps = [Option<Arc<JoinMap>>];
type Sets = [Option<DashSet<Row, FxBuild>>];

/// Links `stages` in front of `terminal`. Distinct stages use the shared
/// set at the same index when one is given.
fn chain<'a>(stages: &'a [Stage], maps: &'a Maps, sets: &'a Sets, terminal: BoxSink<'a>) -> BoxSink<'a> {
    let mut next = terminal;
    for (i, st) in stages.iter().enumerate().rev() {
        next = match st {
            Stage::Filter(preds) => Box::new(FilterSink { preds, next }),
            Stage::Map(exprs) => Box::new(MapSink { exprs, next }),
            Stage::Probe {
                kind,
                keys,
                mode,
                build_width,
                ..
            } => Box::new(ProbeSink {
                map: maps[i].clone().expect("join map built before probing"),
                keys,
                kind: *kind,
                mode: *mode,
                build_width: *build_width,
                scratch: Vec::with_capacity(keys.len()),
                next,
            }),
            Stage::Sort(keys) => Box::new(SortSink {
                keys,
                buf: Vec::new(),
                next,
            }),
            Stage::Limit(limit) => Box::new(LimitSink {
                limit: *limit,
                seen: 0,
                next,
            }),
            Stage::Skip(skip) => Box::new(SkipSink {
                skip: *skip,
                skipped: 0,
                next,
            }),
            Stage::Distinct => match sets.get(i).and_then(Option::as_ref) {
                Some(seen) => Box::new(SharedDistinctSink { seen, next }),
                None => Box::new(DistinctSink {
                    seen: Default::default(),
                    next,
                }),
            },
        };
    }
    next
}

fn local_terminal(t: &Terminal) -> BoxSink<'_> {
    match t {
        Terminal::Collect => Box::new(CollectSink::default()),
        Terminal::Grouped { keys, aggs } => Box::new(GroupSink::new(keys, aggs)),
        Terminal::Scalar { aggs } => Box::new(ScalarSink {
            aggs,
            acc: GroupAccumulator::new(aggs),
        }),
        Terminal::JoinMap { keys } => Box::new(JoinMapSink {
            keys,
            map: JoinMap::new(),
            scratch: Vec::with_capacity(keys.len()),
        }),
    }
}

fn drive(rows: &[Row], base: usize, label: &str, mut sink: BoxSink<'_>, check_full: bool) -> Result<Output, ExecError> {
    for (i, row) in rows.iter().enumerate() {
        if check_full && sink.full() {
            break;
        }
        sink.accept(row)
            .map_err(|e| ExecError::from(e).at(|| format!("{label} row {}", base + i)))?;
    }
    sink.finish()
}

fn exec(seg: &Segment, ctx: &Ctx<'_>, strategy: Strategy) -> Result<SegOut, ExecError> {
    let owned: Vec<Row>;
    let (rows, label): (&[Row], String) = match &seg.source {
        Source::Table(t) => (source_rows(ctx.db, t)?, format!("table {t}")),
        Source::Segment(s) => {
            owned = exec(s, ctx, strategy)?.into_rows();
            (&owned, "grouped input".to_string())
        }
    };
    let build_strategy = if ctx.parallel_build { strategy } else { Strategy::Seq };
    let maps = seg
        .stages
        .iter()
        .map(|st| match st {
            Stage::Probe { build, .. } => {
                let mut m = exec(build, ctx, build_strategy)?.into_map();
                m.seal();
                Ok(Some(Arc::new(m)))
            }
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>, ExecError>>()?;
    if strategy == Strategy::Seq {
        let check_full = seg.stages.iter().any(|s| matches!(s, Stage::Limit(_)));
        let sink = chain(&seg.stages, &maps, &[], local_terminal(&seg.terminal));
        return Ok(from_output(drive(rows, 0, &label, sink, check_full)?));
    }
    exec_parallel(seg, rows, &label, &maps, ctx.chunk, strategy)
}

/// Where a parallel phase ends.
enum End<'a> {
    /// A barrier that needs the full row list.
    Collect,
    /// An order-preserving distinct barrier.
    OrderedSet,
    Terminal(&'a Terminal),
}

/// Runs the stages in parallel phases separated by barriers. Sort, limit
/// and skip always need every row of the preceding phase; distinct does
/// when the stream is ordered.
fn exec_parallel(
    seg: &Segment,
    rows: &[Row],
    label: &str,
    maps: &Maps,
    chunk: usize,
    strategy: Strategy,
) -> Result<SegOut, ExecError> {
    let stages = &seg.stages;
    let mut ordered = strategy == Strategy::P;
    let mut input: Cow<'_, [Row]> = Cow::Borrowed(rows);
    let mut start = 0;
    loop {
        let barrier = (start..stages.len()).find(|&i| match &stages[i] {
            Stage::Sort(_) | Stage::Limit(_) | Stage::Skip(_) => true,
            Stage::Distinct => ordered,
            _ => false,
        });
        let ph = Phase::new(&stages[start..barrier.unwrap_or(stages.len())], &maps[start..], chunk, label);
        let Some(b) = barrier else {
            return ph.run(&input, End::Terminal(&seg.terminal), strategy, ordered);
        };
        let mut out = if ph.stages.is_empty() && !matches!(stages[b], Stage::Distinct) {
            input.into_owned()
        } else {
            let end = if matches!(stages[b], Stage::Distinct) {
                End::OrderedSet
            } else {
                End::Collect
            };
            ph.run(&input, end, strategy, ordered)?.into_rows()
        };
        match &stages[b] {
            Stage::Sort(keys) => {
                out = sort_rows(out, keys, true)?;
                ordered = true;
            }
            Stage::Limit(n) => out.truncate(usize::try_from(*n).unwrap_or(usize::MAX)),
            Stage::Skip(n) => {
                let n = usize::try_from(*n).unwrap_or(usize::MAX).min(out.len());
                out.drain(..n);
            }
            Stage::Distinct => {}
            _ => unreachable!("not a barrier"),
        }
        input = Cow::Owned(out);
        start = b + 1;
    }
}

struct Phase<'p> {
    stages: &'p [Stage],
    maps: &'p Maps,
    sets: Vec<Option<DashSet<Row, FxBuild>>>,
    chunk: usize,
    label: &'p str,
}

fn expect<T>(out: Output, pick: impl FnOnce(Output) -> Option<T>) -> T {
    pick(out).expect("terminal produced an unexpected output kind")
}

impl<'p> Phase<'p> {
    fn new(stages: &'p [Stage], maps: &'p Maps, chunk: usize, label: &'p str) -> Phase<'p> {
        Phase {
            stages,
            maps,
            sets: stages
                .iter()
                .map(|s| matches!(s, Stage::Distinct).then(DashSet::default))
                .collect(),
            chunk,
            label,
        }
    }

    /// Runs one chunk through a fresh chain ending in `term`.
    fn task<'s>(&'s self, ci: usize, rows: &[Row], term: BoxSink<'s>) -> Result<Output, ExecError> {
        let sink = chain(self.stages, &self.maps[..self.stages.len()], &self.sets, term);
        drive(rows, ci * self.chunk, self.label, sink, false)
    }

    fn run(&self, input: &[Row], end: End<'_>, strategy: Strategy, ordered: bool) -> Result<SegOut, ExecError> {
        let chunks = || input.par_chunks(self.chunk).enumerate();
        let rows = match end {
            End::Collect | End::Terminal(Terminal::Collect) if ordered => {
                let parts = chunks()
                    .map(|(ci, c)| {
                        let out = self.task(ci, c, Box::new(CollectSink::default()))?;
                        Ok(expect(out, |o| match o {
                            Output::Rows(r) => Some(r),
                            _ => None,
                        }))
                    })
                    .collect::<Result<Vec<Vec<Row>>, ExecError>>()?;
                parts.concat()
            }
            End::Collect | End::Terminal(Terminal::Collect) => {
                let shared = Mutex::new(Vec::new());
                chunks().try_for_each(|(ci, c)| {
                    let term = Box::new(CompletionCollectSink {
                        rows: Vec::new(),
                        shared: &shared,
                    });
                    self.task(ci, c, term).map(drop)
                })?;
                shared.into_inner()
            }
            End::OrderedSet => {
                let set = chunks()
                    .map(|(ci, c)| {
                        let out = self.task(ci, c, Box::new(OrderedSetSink::default()))?;
                        Ok::<_, ExecError>(expect(out, |o| match o {
                            Output::Set(s) => Some(s),
                            _ => None,
                        }))
                    })
                    .try_reduce_with(|mut a, b| {
                        a.extend(b);
                        Ok(a)
                    })
                    .transpose()?
                    .unwrap_or_default();
                set.into_iter().collect()
            }
            End::Terminal(Terminal::Grouped { keys, aggs }) => match strategy {
                Strategy::Seq | Strategy::P => {
                    let table = chunks()
                        .map(|(ci, c)| Ok::<_, ExecError>(groups_of(self.task(ci, c, Box::new(GroupSink::new(keys, aggs)))?)))
                        .try_reduce_with(|a, b| Ok(merge_groups(a, b)))
                        .transpose()?
                        .unwrap_or_default();
                    group_rows(&table)
                }
                Strategy::PU => {
                    let shared = Mutex::new(GroupTable::default());
                    chunks().try_for_each(|(ci, c)| {
                        let local = groups_of(self.task(ci, c, Box::new(GroupSink::new(keys, aggs)))?);
                        let mut s = shared.lock();
                        let cur = std::mem::take(&mut *s);
                        *s = merge_groups(cur, local);
                        Ok::<_, ExecError>(())
                    })?;
                    group_rows(&shared.into_inner())
                }
                Strategy::CG => {
                    let shared: DashMap<Key, Mutex<GroupAccumulator>, FxBuild> = DashMap::default();
                    chunks().try_for_each(|(ci, c)| {
                        let term = Box::new(LockedGroupSink {
                            keys,
                            aggs,
                            shared: &shared,
                            scratch: Vec::with_capacity(keys.len()),
                        });
                        self.task(ci, c, term).map(drop)
                    })?;
                    shared
                        .into_iter()
                        .map(|(k, acc)| key_row(&k, acc.into_inner().finish()))
                        .collect()
                }
                Strategy::CGCC => {
                    let shared: DashMap<Key, AtomicGroupAccumulator, FxBuild> = DashMap::default();
                    chunks().try_for_each(|(ci, c)| {
                        let term = Box::new(AtomicGroupSink {
                            keys,
                            aggs,
                            shared: &shared,
                            scratch: Vec::with_capacity(keys.len()),
                        });
                        self.task(ci, c, term).map(drop)
                    })?;
                    shared.into_iter().map(|(k, acc)| key_row(&k, acc.finish())).collect()
                }
            },
            End::Terminal(Terminal::Scalar { aggs }) => {
                let local = || {
                    Box::new(ScalarSink {
                        aggs,
                        acc: GroupAccumulator::new(aggs),
                    })
                };
                let scalar_of = |o: Output| {
                    expect(o, |o| match o {
                        Output::Scalar(a) => Some(a),
                        _ => None,
                    })
                };
                let values = match strategy {
                    Strategy::Seq | Strategy::P => chunks()
                        .map(|(ci, c)| Ok::<_, ExecError>(scalar_of(self.task(ci, c, local())?)))
                        .try_reduce_with(|mut a, b| {
                            a.merge(&b);
                            Ok(a)
                        })
                        .transpose()?
                        .unwrap_or_else(|| GroupAccumulator::new(aggs))
                        .finish(),
                    Strategy::PU => {
                        let shared = Mutex::new(GroupAccumulator::new(aggs));
                        chunks().try_for_each(|(ci, c)| {
                            let acc = scalar_of(self.task(ci, c, local())?);
                            shared.lock().merge(&acc);
                            Ok::<_, ExecError>(())
                        })?;
                        shared.into_inner().finish()
                    }
                    Strategy::CG => {
                        let shared = Mutex::new(GroupAccumulator::new(aggs));
                        chunks().try_for_each(|(ci, c)| {
                            let term = Box::new(LockedScalarSink { aggs, shared: &shared });
                            self.task(ci, c, term).map(drop)
                        })?;
                        shared.into_inner().finish()
                    }
                    Strategy::CGCC => {
                        let shared = AtomicGroupAccumulator::new(aggs);
                        chunks().try_for_each(|(ci, c)| {
                            let term = Box::new(AtomicScalarSink { aggs, shared: &shared });
                            self.task(ci, c, term).map(drop)
                        })?;
                        shared.finish()
                    }
                };
                vec![Row::from(values)]
            }
            End::Terminal(Terminal::JoinMap { keys }) => {
                let local = || {
                    Box::new(JoinMapSink {
                        keys,
                        map: JoinMap::new(),
                        scratch: Vec::with_capacity(keys.len()),
                    })
                };
                let map_of = |o: Output| {
                    expect(o, |o| match o {
                        Output::Map(m) => Some(m),
                        _ => None,
                    })
                };
                let map = match strategy {
                    Strategy::Seq | Strategy::P => chunks()
                        .map(|(ci, c)| Ok::<_, ExecError>(map_of(self.task(ci, c, local())?)))
                        .try_reduce_with(|mut a, b| {
                            a.absorb(b);
                            Ok(a)
                        })
                        .transpose()?
                        .unwrap_or_default(),
                    Strategy::PU => {
                        let shared = Mutex::new(JoinMap::new());
                        chunks().try_for_each(|(ci, c)| {
                            let m = map_of(self.task(ci, c, local())?);
                            shared.lock().absorb(m);
                            Ok::<_, ExecError>(())
                        })?;
                        shared.into_inner()
                    }
                    Strategy::CG => {
                        let shared: DashMap<Key, Mutex<Vec<Row>>, FxBuild> = DashMap::default();
                        chunks().try_for_each(|(ci, c)| {
                            let term = Box::new(SharedJoinMapSink {
                                keys,
                                locked: Some(&shared),
                                direct: None,
                                scratch: Vec::with_capacity(keys.len()),
                            });
                            self.task(ci, c, term).map(drop)
                        })?;
                        JoinMap::from_map(shared.into_iter().map(|(k, v)| (k, v.into_inner())).collect())
                    }
                    Strategy::CGCC => {
                        let shared: DashMap<Key, Vec<Row>, FxBuild> = DashMap::default();
                        chunks().try_for_each(|(ci, c)| {
                            let term = Box::new(SharedJoinMapSink {
                                keys,
                                locked: None,
                                direct: Some(&shared),
                                scratch: Vec::with_capacity(keys.len()),
                            });
                            self.task(ci, c, term).map(drop)
                        })?;
                        JoinMap::from_map(shared.into_iter().collect())
                    }
                };
                return Ok(SegOut::Map(map));
            }
        };
        Ok(SegOut::Rows(rows))
    }
}

fn groups_of(out: Output) -> GroupTable {
    expect(out, |o| match o {
        Output::Groups(g) => Some(g),
        _ => None,
    })
}

fn key_row(key: &[crate::value::Value], aggs: Vec<crate::value::Value>) -> Row {
    let mut v = key.to_vec();
    v.extend(aggs);
    Row::from(v)
}
