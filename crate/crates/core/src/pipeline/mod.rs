//! The pipeline backend: a plan compiled to chains of dynamically
//! dispatched stages, run sequentially or under one of four parallel
//! strategies.

mod run;
mod sinks;
pub mod state;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::plan::expr::EvalError;
use crate::plan::{JoinKind, LogicalPlan, PlanError, ResultOrdering};
use crate::prepared::{prepare, Evaluator, PreparedAgg, PreparedPlan, PreparedQuery};
use crate::relmodel::{Catalog, Schema};

pub use run::run;
pub use sinks::probe_emit;
pub use state::{AggState, AtomicGroupAccumulator, GroupAccumulator, JoinMap, Key};

pub(crate) use run::source_rows;
pub(crate) use sinks::{concat, null_padded, sort_rows};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{source}{}", at.as_deref().map(|a| format!(" at {a}")).unwrap_or_default())]
    Eval { source: EvalError, at: Option<String> },
    #[error("no table named {0:?}")]
    UnknownTable(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<EvalError> for ExecError {
    fn from(source: EvalError) -> ExecError {
        ExecError::Eval { source, at: None }
    }
}

impl ExecError {
    pub(crate) fn at(self, place: impl FnOnce() -> String) -> ExecError {
        match self {
            ExecError::Eval { source, at: None } => ExecError::Eval {
                source,
                at: Some(place()),
            },
            other => other,
        }
    }
}

/// Parallel evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One thread, records in source order.
    Seq,
    /// Ordered parallel: task-local state merged in chunk order.
    P,
    /// Unordered parallel: task-local state, no order guarantee.
    PU,
    /// One shared concurrent map, per-entry locks.
    CG,
    /// One shared concurrent map, atomic accumulator cells.
    CGCC,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Seq, Strategy::P, Strategy::PU, Strategy::CG, Strategy::CGCC];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Seq => "Seq",
            Strategy::P => "P",
            Strategy::PU => "PU",
            Strategy::CG => "CG",
            Strategy::CGCC => "CGCC",
        }
    }

    pub fn is_ordered(self) -> bool {
        matches!(self, Strategy::Seq | Strategy::P)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Strategy, String> {
        match s.to_ascii_lowercase().as_str() {
            "seq" => Ok(Strategy::Seq),
            "p" => Ok(Strategy::P),
            "pu" => Ok(Strategy::PU),
            "cg" => Ok(Strategy::CG),
            "cgcc" => Ok(Strategy::CGCC),
            other => Err(format!("unknown strategy {other:?} (expected seq, p, pu, cg or cgcc)")),
        }
    }
}

/// How a join probe hands matches downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmitMode {
    /// A nested sequence per probe record, flattened.
    Flat,
    /// An emitter callback invoked once per match.
    Multi,
}

/// Variant selector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenOptions {
    /// One filter stage for the whole predicate list.
    pub fuse_filters: bool,
    pub multi_emit_join: bool,
    pub strategy: Strategy,
    pub workers: usize,
    pub chunk_size: usize,
    /// Run join build sides under `strategy` rather than sequentially.
    pub parallel_build: bool,
}

pub const DEFAULT_CHUNK_SIZE: usize = 8192;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl Default for GenOptions {
    fn default() -> GenOptions {
        GenOptions {
            fuse_filters: false,
            multi_emit_join: false,
            strategy: Strategy::Seq,
            workers: default_workers(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            parallel_build: true,
        }
    }
}

impl GenOptions {
    pub fn seq() -> GenOptions {
        GenOptions::default()
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> GenOptions {
        self.strategy = strategy;
        self
    }

    pub fn fused(mut self, on: bool) -> GenOptions {
        self.fuse_filters = on;
        self
    }

    pub fn multi_emit(mut self, on: bool) -> GenOptions {
        self.multi_emit_join = on;
        self
    }

    pub fn emit_mode(&self) -> EmitMode {
        if self.multi_emit_join {
            EmitMode::Multi
        } else {
            EmitMode::Flat
        }
    }
}

impl fmt::Display for GenOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = |b: bool| if b { "on" } else { "off" };
        write!(
            f,
            "strategy={} fuse={} multi_emit={}",
            self.strategy,
            on(self.fuse_filters),
            on(self.multi_emit_join)
        )?;
        if self.strategy != Strategy::Seq {
            write!(f, " workers={} chunk={}", self.workers, self.chunk_size)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Source {
    Table(String),
    /// Output of a closed sub-pipeline (a grouping below other operators).
    Segment(Box<Segment>),
}

#[derive(Debug, Clone)]
pub(crate) enum Stage {
    Filter(Vec<Evaluator>),
    Map(Vec<Evaluator>),
    Probe {
        build: Box<Segment>,
        kind: JoinKind,
        keys: Vec<Evaluator>,
        mode: EmitMode,
        build_width: usize,
    },
    Sort(Vec<(Evaluator, bool)>),
    Limit(u64),
    Skip(u64),
    Distinct,
}

#[derive(Debug, Clone)]
pub(crate) enum Terminal {
    Collect,
    Grouped { keys: Vec<Evaluator>, aggs: Vec<PreparedAgg> },
    Scalar { aggs: Vec<PreparedAgg> },
    JoinMap { keys: Vec<Evaluator> },
}

/// One source, a chain of stages and exactly one terminal.
#[derive(Debug, Clone)]
pub(crate) struct Segment {
    pub source: Source,
    pub stages: Vec<Stage>,
    pub terminal: Terminal,
}

/// A compiled, immutable pipeline.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub(crate) root: Segment,
    pub options: GenOptions,
    /// Strategy actually used after any degradation.
    pub strategy: Strategy,
    pub schema: Schema,
    pub ordering: ResultOrdering,
    pub notices: Vec<String>,
}

/// Prepares `plan` against `catalog` and compiles it.
pub fn compile(plan: &LogicalPlan, catalog: &dyn Catalog, options: &GenOptions) -> Result<Pipeline, PlanError> {
    Ok(compile_prepared(&prepare(plan, catalog)?, options))
}

fn has_grouping_or_distinct(p: &PreparedPlan) -> bool {
    use PreparedPlan as P;
    match p {
        P::GroupAggregate { .. } | P::Distinct { .. } => true,
        P::Scan { .. } => false,
        P::Join { build, probe, .. } => has_grouping_or_distinct(build) || has_grouping_or_distinct(probe),
        P::Filter { input, .. }
        | P::Project { input, .. }
        | P::Sort { input, .. }
        | P::Limit { input, .. }
        | P::Skip { input, .. } => has_grouping_or_distinct(input),
    }
}

/// Compiles an already prepared query; the pipeline shares its evaluators.
pub fn compile_prepared(query: &PreparedQuery, options: &GenOptions) -> Pipeline {
    let mut notices = Vec::new();
    let mut strategy = options.strategy;
    if matches!(strategy, Strategy::CG | Strategy::CGCC) && !has_grouping_or_distinct(&query.root) {
        notices.push(format!(
            "{strategy} needs a grouping or distinct operator; running as PU"
        ));
        strategy = Strategy::PU;
    }
    Pipeline {
        root: segment(&query.root, options),
        options: options.clone(),
        strategy,
        schema: query.schema.clone(),
        ordering: query.ordering.clone(),
        notices,
    }
}

fn segment(plan: &PreparedPlan, options: &GenOptions) -> Segment {
    let (input, terminal) = match plan {
        PreparedPlan::GroupAggregate { input, keys, aggs } if keys.is_empty() => {
            (input.as_ref(), Terminal::Scalar { aggs: aggs.clone() })
        }
        PreparedPlan::GroupAggregate { input, keys, aggs } => (
            input.as_ref(),
            Terminal::Grouped {
                keys: keys.clone(),
                aggs: aggs.clone(),
            },
        ),
        other => (other, Terminal::Collect),
    };
    let mut stages = Vec::new();
    let source = lower(input, options, &mut stages);
    Segment {
        source,
        stages,
        terminal,
    }
}

/// Appends the stages for `plan` (source first) and returns its source.
fn lower(plan: &PreparedPlan, options: &GenOptions, stages: &mut Vec<Stage>) -> Source {
    use PreparedPlan as P;
    match plan {
        P::Scan { table } => Source::Table(table.clone()),
        P::GroupAggregate { .. } => Source::Segment(Box::new(segment(plan, options))),
        P::Filter { input, predicates } => {
            let src = lower(input, options, stages);
            if options.fuse_filters {
                stages.push(Stage::Filter(predicates.clone()));
            } else {
                stages.extend(predicates.iter().map(|p| Stage::Filter(vec![p.clone()])));
            }
            src
        }
        P::Project { input, exprs } => {
            let src = lower(input, options, stages);
            stages.push(Stage::Map(exprs.clone()));
            src
        }
        P::Join {
            kind,
            build,
            probe,
            build_keys,
            probe_keys,
            build_width,
        } => {
            let src = lower(probe, options, stages);
            let mut build_stages = Vec::new();
            let build_source = lower(build, options, &mut build_stages);
            stages.push(Stage::Probe {
                build: Box::new(Segment {
                    source: build_source,
                    stages: build_stages,
                    terminal: Terminal::JoinMap {
                        keys: build_keys.clone(),
                    },
                }),
                kind: *kind,
                keys: probe_keys.clone(),
                mode: options.emit_mode(),
                build_width: *build_width,
            });
            src
        }
        P::Sort { input, keys } => {
            let src = lower(input, options, stages);
            stages.push(Stage::Sort(keys.clone()));
            src
        }
        P::Limit { input, count } => {
            let src = lower(input, options, stages);
            stages.push(Stage::Limit(*count));
            src
        }
        P::Skip { input, count } => {
            let src = lower(input, options, stages);
            stages.push(Stage::Skip(*count));
            src
        }
        P::Distinct { input } => {
            let src = lower(input, options, stages);
            stages.push(Stage::Distinct);
            src
        }
    }
}

impl Stage {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Stage::Filter(_) => "filter",
            Stage::Map(_) => "map",
            Stage::Probe {
                mode: EmitMode::Flat, ..
            } => "flat-emit join probe",
            Stage::Probe {
                mode: EmitMode::Multi, ..
            } => "multi-emit join probe",
            Stage::Sort(_) => "sort",
            Stage::Limit(_) => "limit",
            Stage::Skip(_) => "skip",
            Stage::Distinct => "distinct",
        }
    }
}

impl Terminal {
    fn name(&self) -> &'static str {
        match self {
            Terminal::Collect => "list collector",
            Terminal::Grouped { .. } => "grouped collector",
            Terminal::Scalar { .. } => "scalar collector",
            Terminal::JoinMap { .. } => "joinmap collector",
        }
    }
}

fn join_evals(evals: &[Evaluator], sep: &str) -> String {
    evals.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(sep)
}

impl Pipeline {
    /// Stage names of the outermost segment, terminal included.
    pub fn stage_names(&self) -> Vec<&'static str> {
        self.root
            .stages
            .iter()
            .map(Stage::name)
            .chain(std::iter::once(self.root.terminal.name()))
            .collect()
    }

    /// Stage names of the build segment feeding the `n`-th probe stage of
    /// the outermost segment.
    pub fn build_stage_names(&self, n: usize) -> Option<Vec<&'static str>> {
        self.root
            .stages
            .iter()
            .filter_map(|s| match s {
                Stage::Probe { build, .. } => Some(build),
                _ => None,
            })
            .nth(n)
            .map(|b| {
                b.stages
                    .iter()
                    .map(Stage::name)
                    .chain(std::iter::once(b.terminal.name()))
                    .collect()
            })
    }

    /// Every evaluator reachable from the pipeline, in stage order.
    pub fn evaluators(&self) -> Vec<Evaluator> {
        let mut out = Vec::new();
        collect_evaluators(&self.root, &mut out);
        out
    }

    /// Human-readable stage listing with variant annotations.
    pub fn explain(&self) -> String {
        let mut out = format!("pipeline {}", self.options);
        if self.strategy != self.options.strategy {
            out.push_str(&format!(" (running as {})", self.strategy));
        }
        out.push('\n');
        for n in &self.notices {
            out.push_str(&format!("notice: {n}\n"));
        }
        explain_segment(&self.root, self.strategy, 0, &mut out);
        out
    }
}

fn collect_evaluators(seg: &Segment, out: &mut Vec<Evaluator>) {
    if let Source::Segment(s) = &seg.source {
        collect_evaluators(s, out);
    }
    for st in &seg.stages {
        match st {
            Stage::Filter(e) | Stage::Map(e) => out.extend(e.iter().cloned()),
            Stage::Probe { build, keys, .. } => {
                collect_evaluators(build, out);
                out.extend(keys.iter().cloned());
            }
            Stage::Sort(keys) => out.extend(keys.iter().map(|(e, _)| e.clone())),
            Stage::Limit(_) | Stage::Skip(_) | Stage::Distinct => {}
        }
    }
    match &seg.terminal {
        Terminal::Collect => {}
        Terminal::Grouped { keys, aggs } => {
            out.extend(keys.iter().cloned());
            out.extend(aggs.iter().filter_map(|a| a.arg.clone()));
        }
        Terminal::Scalar { aggs } => out.extend(aggs.iter().filter_map(|a| a.arg.clone())),
        Terminal::JoinMap { keys } => out.extend(keys.iter().cloned()),
    }
}

fn explain_segment(seg: &Segment, strategy: Strategy, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match &seg.source {
        Source::Table(t) => out.push_str(&format!("{pad}source {t}\n")),
        Source::Segment(s) => {
            out.push_str(&format!("{pad}source materialized:\n"));
            explain_segment(s, strategy, depth + 1, out);
        }
    }
    let mut ordered = strategy.is_ordered();
    for st in &seg.stages {
        let tag = if ordered { "" } else { " (unordered)" };
        let detail = match st {
            Stage::Filter(p) => format!(" [{}]", join_evals(p, " && ")),
            Stage::Map(e) => format!(" [{}]", join_evals(e, ", ")),
            Stage::Probe { kind, keys, .. } => format!(" {} keys=[{}]", kind.name(), join_evals(keys, ", ")),
            Stage::Sort(k) => {
                let ks: Vec<String> = k
                    .iter()
                    .map(|(e, d)| format!("{e} {}", if *d { "DESC" } else { "ASC" }))
                    .collect();
                format!(" [{}]", ks.join(", "))
            }
            Stage::Limit(n) | Stage::Skip(n) => format!(" {n}"),
            Stage::Distinct => String::new(),
        };
        out.push_str(&format!("{pad}  {}{detail}{tag}\n", st.name()));
        if let Stage::Probe { build, .. } = st {
            out.push_str(&format!("{pad}    build:\n"));
            explain_segment(build, strategy, depth + 3, out);
        }
        if matches!(st, Stage::Sort(_)) {
            ordered = true;
        }
    }
    let detail = match &seg.terminal {
        Terminal::Collect => String::new(),
        Terminal::Grouped { keys, aggs } => format!(
            " keys=[{}] aggs=[{}]",
            join_evals(keys, ", "),
            aggs.iter().map(agg_text).collect::<Vec<_>>().join(", ")
        ),
        Terminal::Scalar { aggs } => format!(" aggs=[{}]", aggs.iter().map(agg_text).collect::<Vec<_>>().join(", ")),
        Terminal::JoinMap { keys } => format!(" keys=[{}]", join_evals(keys, ", ")),
    };
    out.push_str(&format!("{pad}  {}{detail}\n", seg.terminal.name()));
}

fn agg_text(a: &PreparedAgg) -> String {
    match &a.arg {
        Some(e) => format!("{:?}({e}) AS {}", a.kind, a.name),
        None => format!("CountStar AS {}", a.name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{compare, evaluate};
    use crate::plan::{col, lit, AggSpec, EvalCounter, NamedExpr, PlanBuilder, SortKey};
    use crate::relmodel::{Database, Row, TableData};
    use crate::value::{DataType, Value};

    fn db(keys: &[i64]) -> Database {
        let schema = Schema::of(&[("k", DataType::Int64), ("v", DataType::Float64)]);
        let rows = keys
            .iter()
            .enumerate()
            .map(|(i, k)| Row::from(vec![Value::Int(*k), Value::Float(i as f64 * 0.5)]))
            .collect();
        let mut db = Database::new();
        db.insert(TableData::new("t", schema, rows).unwrap());
        db
    }

    fn opts(strategy: Strategy) -> GenOptions {
        GenOptions {
            strategy,
            workers: 3,
            chunk_size: 2,
            ..GenOptions::default()
        }
    }

    fn distinct_plan(db: &Database) -> LogicalPlan {
        PlanBuilder::scan(db, "t")
            .unwrap()
            .project(vec![NamedExpr::new(col("k"), "k")])
            .unwrap()
            .distinct()
            .unwrap()
            .build()
    }

    #[test]
    fn ordered_distinct_keeps_first_encounter_order() {
        let db = db(&[3, 1, 3, 2, 1]);
        for s in [Strategy::Seq, Strategy::P] {
            let p = compile(&distinct_plan(&db), &db, &opts(s)).unwrap();
            let ks: Vec<Value> = run(&p, &db).unwrap().rows.iter().map(|r| r[0].clone()).collect();
            assert_eq!(ks, vec![Value::Int(3), Value::Int(1), Value::Int(2)], "{s}");
        }
        for s in [Strategy::PU, Strategy::CG, Strategy::CGCC] {
            let p = compile(&distinct_plan(&db), &db, &opts(s)).unwrap();
            let mut ks: Vec<Value> = run(&p, &db).unwrap().rows.iter().map(|r| r[0].clone()).collect();
            ks.sort_by(|a, b| a.total_cmp(b));
            assert_eq!(ks, vec![Value::Int(1), Value::Int(2), Value::Int(3)], "{s}");
        }
    }

    #[test]
    fn chained_and_fused_filters_evaluate_equally_often() {
        let db = db(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let (c1, c2) = (EvalCounter::new(), EvalCounter::new());
        let plan = PlanBuilder::scan(&db, "t")
            .unwrap()
            .filter(vec![
                col("k").gt_eq(lit(4i64)).counted(&c1),
                col("k").lt(lit(8i64)).counted(&c2),
            ])
            .unwrap()
            .build();
        let mut names = Vec::new();
        for fuse in [false, true] {
            c1.reset();
            c2.reset();
            let p = compile(&plan, &db, &GenOptions::seq().fused(fuse)).unwrap();
            names.push(p.stage_names());
            assert_eq!(run(&p, &db).unwrap().len(), 4);
            assert_eq!((c1.get(), c2.get()), (10, 6));
        }
        assert_eq!(names[0], vec!["filter", "filter", "list collector"]);
        assert_eq!(names[1], vec!["filter", "list collector"]);
    }

    #[test]
    fn strategies_agree_with_reference_on_grouping_and_sort() {
        let keys: Vec<i64> = (0..50).map(|i| (i * 7) % 5).collect();
        let db = db(&keys);
        let grouped = PlanBuilder::scan(&db, "t")
            .unwrap()
            .group_by(
                vec![NamedExpr::new(col("k"), "k")],
                vec![
                    AggSpec::sum(col("v"), "s"),
                    AggSpec::count_star("n"),
                    AggSpec::min(col("v"), "lo"),
                    AggSpec::avg(col("k"), "a"),
                ],
            )
            .unwrap()
            .sort(vec![SortKey::desc(col("s"))])
            .unwrap()
            .limit(3)
            .unwrap()
            .build();
        let scalar = PlanBuilder::scan(&db, "t")
            .unwrap()
            .group_by(vec![], vec![AggSpec::sum(col("v"), "s"), AggSpec::max(col("k"), "m")])
            .unwrap()
            .build();
        for plan in [grouped, scalar] {
            let want = evaluate(&plan, &db).unwrap();
            for s in Strategy::ALL {
                for multi in [false, true] {
                    let p = compile(&plan, &db, &opts(s).multi_emit(multi)).unwrap();
                    let got = run(&p, &db).unwrap();
                    let rep = compare(&got, &want, 1e-9).unwrap();
                    assert!(rep.is_equal(), "{s}: {rep}");
                }
            }
        }
    }

    #[test]
    fn cg_without_grouping_degrades_with_notice() {
        let db = db(&[1, 2]);
        let plan = PlanBuilder::scan(&db, "t").unwrap().build();
        let p = compile(&plan, &db, &opts(Strategy::CGCC)).unwrap();
        assert_eq!(p.strategy, Strategy::PU);
        assert_eq!(p.notices.len(), 1);
        assert!(p.explain().contains("running as PU"));
    }

    #[test]
    fn division_by_zero_reports_row() {
        let db = db(&[1, 0]);
        let plan = PlanBuilder::scan(&db, "t")
            .unwrap()
            .project(vec![NamedExpr::new(lit(1i64).div(col("k")), "q")])
            .unwrap()
            .build();
        let err = run(&compile(&plan, &db, &GenOptions::seq()).unwrap(), &db).unwrap_err();
        assert!(err.to_string().contains("table t row 1"), "{err}");
    }
}
