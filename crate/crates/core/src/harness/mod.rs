//! Verification against the reference interpreter, the benchmark driver,
//! statistics and reporting.

mod report;
mod stats;

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::imperative::{compile_fused_prepared, run_fused, FusedProgram};
use crate::oracle::{compare, evaluate, CompareError, CompareReport, OracleError, ResultSet};
use crate::pipeline::{compile_prepared, run, ExecError, GenOptions, Pipeline, Strategy};
use crate::plan::{LogicalPlan, PlanError};
use crate::prepared::prepare;
use crate::relmodel::Database;

pub use report::{environment_comments, markdown_table, write_csv, CSV_HEADER};
pub use stats::{geometric_mean, speedup, Summary};

/// Relative float tolerance for sequential execution.
pub const SEQUENTIAL_TOLERANCE: f64 = 1e-9;
/// Relative float tolerance for parallel strategies, whose summation
/// order varies.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("reference interpreter: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Schema(#[from] CompareError),
    #[error("{query} under {variant} does not match the reference: {report}")]
    Verification {
        query: String,
        variant: String,
        report: Box<CompareReport>,
    },
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("statistics: {0}")]
    Stats(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Pipeline,
    Imperative,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Pipeline => "pipeline",
            Backend::Imperative => "imperative",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Backend, String> {
        match s.to_ascii_lowercase().as_str() {
            "pipeline" => Ok(Backend::Pipeline),
            "imperative" => Ok(Backend::Imperative),
            other => Err(format!("unknown backend {other:?} (expected pipeline or imperative)")),
        }
    }
}

/// One executable configuration. The imperative backend ignores the
/// pipeline options other than recording them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variant {
    pub backend: Backend,
    pub options: GenOptions,
}

impl Variant {
    pub fn pipeline(options: GenOptions) -> Variant {
        Variant {
            backend: Backend::Pipeline,
            options,
        }
    }

    pub fn imperative() -> Variant {
        Variant {
            backend: Backend::Imperative,
            options: GenOptions::seq(),
        }
    }

    /// Every variant of the differential matrix: the pipeline under each
    /// filter mode, join emit mode and strategy, and the imperative backend
    /// under each option pair (sequential only).
    pub fn matrix() -> Vec<Variant> {
        let mut out = Vec::new();
        for fuse in [false, true] {
            for multi in [false, true] {
                for s in Strategy::ALL {
                    out.push(Variant::pipeline(
                        GenOptions::seq().fused(fuse).multi_emit(multi).with_strategy(s),
                    ));
                }
                out.push(Variant {
                    backend: Backend::Imperative,
                    options: GenOptions::seq().fused(fuse).multi_emit(multi),
                });
            }
        }
        out
    }

    /// Same variant with the given worker count and chunk size.
    pub fn with_parallelism(mut self, workers: usize, chunk_size: usize) -> Variant {
        self.options.workers = workers;
        self.options.chunk_size = chunk_size;
        self
    }

    pub fn is_sequential(&self) -> bool {
        self.backend == Backend::Imperative || self.options.strategy == Strategy::Seq
    }

    pub fn tolerance(&self) -> f64 {
        if self.is_sequential() {
            SEQUENTIAL_TOLERANCE
        } else {
            PARALLEL_TOLERANCE
        }
    }

    /// Whether this is the sequential, unfused, flat-emit pipeline all
    /// speedups are relative to.
    pub fn is_baseline(&self) -> bool {
        self.backend == Backend::Pipeline
            && self.options.strategy == Strategy::Seq
            && !self.options.fuse_filters
            && !self.options.multi_emit_join
    }

    /// Short column label, e.g. `pipeline/P/fuse/multi`.
    pub fn label(&self) -> String {
        if self.backend == Backend::Imperative {
            return "imperative".to_string();
        }
        let mut s = format!("pipeline/{}", self.options.strategy);
        if self.options.fuse_filters {
            s.push_str("/fuse");
        }
        if self.options.multi_emit_join {
            s.push_str("/multi");
        }
        s
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.backend {
            Backend::Pipeline => write!(f, "pipeline {}", self.options),
            Backend::Imperative => f.write_str("imperative"),
        }
    }
}

/// A compiled query ready to run repeatedly.
#[derive(Debug, Clone)]
pub enum Executable {
    Pipeline(Pipeline),
    Fused(FusedProgram),
}

impl Executable {
    pub fn compile(plan: &LogicalPlan, db: &Database, variant: &Variant) -> Result<Executable, HarnessError> {
        let prepared = prepare(plan, db)?;
        Ok(match variant.backend {
            Backend::Pipeline => Executable::Pipeline(compile_prepared(&prepared, &variant.options)),
            Backend::Imperative => Executable::Fused(compile_fused_prepared(&prepared)),
        })
    }

    pub fn run(&self, db: &Database) -> Result<ResultSet, ExecError> {
        match self {
            Executable::Pipeline(p) => run(p, db),
            Executable::Fused(f) => run_fused(f, db),
        }
    }

    pub fn explain(&self) -> String {
        match self {
            Executable::Pipeline(p) => p.explain(),
            Executable::Fused(f) => f.explain(),
        }
    }
}

/// Runs `plan` under `variant` and compares with `expected`.
pub fn check_variant(
    query: &str,
    plan: &LogicalPlan,
    db: &Database,
    variant: &Variant,
    expected: &ResultSet,
) -> Result<CompareReport, HarnessError> {
    let actual = Executable::compile(plan, db, variant)?.run(db)?;
    let report = compare(&actual, expected, variant.tolerance())?;
    if report.is_equal() {
        Ok(report)
    } else {
        Err(HarnessError::Verification {
            query: query.to_string(),
            variant: variant.to_string(),
            report: Box::new(report),
        })
    }
}

/// Evaluates the reference result and checks `variant` against it.
pub fn verify(query: &str, plan: &LogicalPlan, db: &Database, variant: &Variant) -> Result<CompareReport, HarnessError> {
    let expected = evaluate(plan, db)?;
    check_variant(query, plan, db, variant, &expected)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub warmup_iters: usize,
    pub measure_iters: usize,
    pub iter_duration: Duration,
}

impl Default for BenchConfig {
    fn default() -> BenchConfig {
        BenchConfig {
            warmup_iters: 5,
            measure_iters: 5,
            iter_duration: Duration::from_secs(10),
        }
    }
}

impl BenchConfig {
    pub fn new(warmup_iters: usize, measure_iters: usize, iter_duration: Duration) -> Result<BenchConfig, HarnessError> {
        let c = BenchConfig {
            warmup_iters,
            measure_iters,
            iter_duration,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.warmup_iters == 0 || self.measure_iters == 0 || self.iter_duration.is_zero() {
            return Err(HarnessError::Config(format!(
                "warmup, measure and iteration time must be positive (got {} / {} / {:?})",
                self.warmup_iters, self.measure_iters, self.iter_duration
            )));
        }
        Ok(())
    }
}

/// What to benchmark: a query plan, its identifier and the data parameter
/// (scale factor or microbenchmark setting) shown in reports.
#[derive(Debug, Clone)]
pub struct BenchQuery<'a> {
    pub id: String,
    pub plan: LogicalPlan,
    pub param: String,
    /// Data the variant is verified on before timing. `None` verifies on
    /// the benchmark data itself.
    pub verify_on: Option<&'a Database>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub query: String,
    pub variant: Variant,
    pub param: String,
    /// Mean time per execution in each measured iteration.
    pub iteration_ms: Vec<f64>,
    pub mean_ms: f64,
    pub moe_ms: f64,
    /// Executions across the measured iterations.
    pub ops: u64,
    /// Opaque digest of every result produced, so no execution is elided.
    pub checksum: u64,
}

impl BenchResult {
    /// Builds a result from measured iteration means.
    pub fn from_iterations(
        query: &str,
        variant: Variant,
        param: &str,
        iteration_ms: Vec<f64>,
        ops: u64,
        checksum: u64,
    ) -> Result<BenchResult, HarnessError> {
        let s = Summary::of(&iteration_ms)?;
        Ok(BenchResult {
            query: query.to_string(),
            variant,
            param: param.to_string(),
            iteration_ms,
            mean_ms: s.mean,
            moe_ms: s.margin_of_error,
            ops,
            checksum,
        })
    }

    pub fn speedup_over(&self, baseline: &BenchResult) -> Result<f64, HarnessError> {
        speedup(baseline.mean_ms, self.mean_ms)
    }
}

/// Verifies the variant, then times it: each iteration runs the query back
/// to back until `iter_duration` has elapsed and records the mean time per
/// run. Warmup iterations are discarded.
pub fn run_bench(
    query: &BenchQuery<'_>,
    variant: &Variant,
    db: &Database,
    config: &BenchConfig,
) -> Result<BenchResult, HarnessError> {
    config.validate()?;
    let expected = evaluate(&query.plan, query.verify_on.unwrap_or(db))?;
    run_bench_against(query, variant, db, config, &expected)
}

/// [`run_bench`] with the reference result supplied by the caller, so one
/// interpreter run can serve many variants. `expected` must be the
/// reference answer on `query.verify_on` (or `db` when that is `None`).
pub fn run_bench_against(
    query: &BenchQuery<'_>,
    variant: &Variant,
    db: &Database,
    config: &BenchConfig,
    expected: &ResultSet,
) -> Result<BenchResult, HarnessError> {
    config.validate()?;
    check_variant(&query.id, &query.plan, query.verify_on.unwrap_or(db), variant, expected)?;
    let exe = Executable::compile(&query.plan, db, variant)?;
    let mut checksum = 0u64;
    let mut iteration_ms = Vec::with_capacity(config.measure_iters);
    let mut ops = 0u64;
    for i in 0..config.warmup_iters + config.measure_iters {
        let start = Instant::now();
        let mut n = 0u64;
        loop {
            let rs = exe.run(black_box(db))?;
            checksum = checksum.wrapping_add(black_box(rs.checksum()));
            n += 1;
            if start.elapsed() >= config.iter_duration {
                break;
            }
        }
        let elapsed = start.elapsed();
        if i >= config.warmup_iters {
            iteration_ms.push(elapsed.as_secs_f64() * 1e3 / n as f64);
            ops += n;
        }
    }
    BenchResult::from_iterations(&query.id, variant.clone(), &query.param, iteration_ms, ops, checksum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{col, lit, PlanBuilder};
    use crate::relmodel::{Schema, TableData};
    use crate::value::{DataType, Value};
    use std::sync::Arc;

    fn tiny() -> (Database, LogicalPlan) {
        let schema = Schema::of(&[("a", DataType::Int64)]);
        let rows = (0..100).map(|i| Arc::from(vec![Value::Int(i)])).collect();
        let mut db = Database::new();
        db.insert(TableData::new("t", schema, rows).unwrap());
        let plan = PlanBuilder::scan(&db, "t")
            .unwrap()
            .filter(vec![col("a").lt(lit(10i64))])
            .unwrap()
            .build();
        (db, plan)
    }

    #[test]
    fn single_measured_iteration() {
        let (db, plan) = tiny();
        let q = BenchQuery {
            id: "tiny".into(),
            plan,
            param: "n=100".into(),
            verify_on: None,
        };
        let cfg = BenchConfig::new(1, 1, Duration::from_millis(100)).unwrap();
        let r = run_bench(&q, &Variant::pipeline(GenOptions::seq()), &db, &cfg).unwrap();
        assert_eq!(r.iteration_ms.len(), 1);
        assert_eq!(r.moe_ms, 0.0);
        assert!(r.ops >= 1 && r.mean_ms > 0.0);
    }

    #[test]
    fn refuses_incorrect_variant() {
        let (db, plan) = tiny();
        let q = BenchQuery {
            id: "tiny".into(),
            plan: plan.clone(),
            param: String::new(),
            verify_on: None,
        };
        let mut wrong = evaluate(&plan, &db).unwrap();
        wrong.rows.pop();
        let cfg = BenchConfig::new(1, 1, Duration::from_millis(10)).unwrap();
        for v in Variant::matrix() {
            let r = run_bench_against(&q, &v, &db, &cfg, &wrong);
            assert!(matches!(r, Err(HarnessError::Verification { .. })), "{v}");
        }
    }

    #[test]
    fn config_must_be_positive() {
        assert!(BenchConfig::new(0, 1, Duration::from_secs(1)).is_err());
        assert!(BenchConfig::new(1, 1, Duration::ZERO).is_err());
        assert_eq!(BenchConfig::default().measure_iters, 5);
    }

    #[test]
    fn injected_iterations() {
        let r = BenchResult::from_iterations("q", Variant::imperative(), "", vec![10.0; 5], 5, 0).unwrap();
        assert_eq!((r.mean_ms, r.moe_ms), (10.0, 0.0));
    }

    #[test]
    fn matrix_shape() {
        let m = Variant::matrix();
        assert_eq!(m.len(), 24);
        assert_eq!(m.iter().filter(|v| v.is_baseline()).count(), 1);
        assert!(m.iter().filter(|v| v.backend == Backend::Imperative).all(|v| v.is_sequential()));
    }
}
