use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qstream_core::harness::{
    check_variant, environment_comments, geometric_mean, markdown_table, run_bench_against, write_csv, Backend,
    BenchConfig, BenchQuery, BenchResult, Variant,
};
use qstream_core::oracle::evaluate;
use qstream_core::plan::SchemaCatalog;
use qstream_core::relmodel::{example_schemas, generate, generate_example, load_dir, write_dir, GenConfig};
use qstream_core::suite::{lookup, make_micro_db, registry, render_plan, Dataset, MicroKind, MicrobenchSpec, QueryEntry, SWEEP_POINTS};
use qstream_core::{Database, GenOptions, Strategy};

/// `println!` that exits quietly once stdout is closed, e.g. by `head`.
macro_rules! say {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

#[derive(Parser)]
#[command(name = "qstream", version, about = "Query engine with pipeline and fused-loop backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write it as .tbl files
    GenData {
        #[arg(long, default_value_t = 0.01)]
        sf: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DataKind::Tpch)]
        dataset: DataKind,
    },
    /// Load a .tbl directory and print table sizes
    Load {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = DataKind::Tpch)]
        dataset: DataKind,
    },
    /// List the query registry
    List,
    /// Show the logical plan and the compiled form of a query
    Explain {
        query: String,
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Check every variant against the reference interpreter
    Verify {
        #[arg(long, default_value_t = 0.01)]
        sf: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Restrict to these registry ids
        #[arg(long, value_delimiter = ',')]
        query: Vec<String>,
    },
    /// Benchmark one query under one variant (or the whole matrix)
    Bench {
        query: String,
        #[command(flatten)]
        variant: VariantArgs,
        /// Run every variant instead of the one selected by the flags
        #[arg(long)]
        matrix: bool,
        #[arg(long)]
        sf: Option<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Load the data from a .tbl directory instead of generating it
        #[arg(long)]
        data: Option<PathBuf>,
        /// Verify on generated data at this scale instead of the benchmark
        /// data; defaults to 0.01 for generated TPC-H and example data above
        /// that scale
        #[arg(long)]
        verify_sf: Option<f64>,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a microbenchmark, optionally sweeping its parameter
    Micro {
        #[arg(value_parser = parse_micro)]
        kind: MicroKind,
        #[arg(long, default_value_t = 10_000_000)]
        n: i64,
        #[arg(long, default_value_t = 500)]
        d: i64,
        #[arg(long, default_value_t = 500)]
        m: i64,
        /// Sweep D or M over the default points
        #[arg(long)]
        sweep: bool,
        /// Strategies to compare
        #[arg(long, value_delimiter = ',', default_values_t = Strategy::ALL.map(StrategyArg::from))]
        strategies: Vec<StrategyArg>,
        #[arg(long)]
        fuse: bool,
        #[arg(long)]
        multi: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Tpch,
    Example,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Pipeline,
    Imperative,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Seq,
    P,
    Pu,
    Cg,
    Cgcc,
}

impl From<Strategy> for StrategyArg {
    fn from(s: Strategy) -> StrategyArg {
        match s {
            Strategy::Seq => StrategyArg::Seq,
            Strategy::P => StrategyArg::P,
            Strategy::PU => StrategyArg::Pu,
            Strategy::CG => StrategyArg::Cg,
            Strategy::CGCC => StrategyArg::Cgcc,
        }
    }
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Seq => Strategy::Seq,
            StrategyArg::P => Strategy::P,
            StrategyArg::Pu => Strategy::PU,
            StrategyArg::Cg => Strategy::CG,
            StrategyArg::Cgcc => Strategy::CGCC,
        }
    }
}

impl std::fmt::Display for StrategyArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&Strategy::from(*self).name().to_ascii_lowercase())
    }
}

fn parse_micro(s: &str) -> Result<MicroKind, String> {
    s.parse()
}

#[derive(Args)]
struct VariantArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Pipeline)]
    backend: BackendArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::Seq)]
    strategy: StrategyArg,
    /// Fuse the filter predicates into one stage
    #[arg(long)]
    fuse: bool,
    /// Multi-emit join probes
    #[arg(long)]
    multi: bool,
    #[arg(long)]
    workers: Option<usize>,
}

impl VariantArgs {
    fn variant(&self) -> Variant {
        let mut options = GenOptions::seq()
            .with_strategy(self.strategy.into())
            .fused(self.fuse)
            .multi_emit(self.multi);
        if let Some(w) = self.workers {
            options.workers = w.max(1);
        }
        match self.backend {
            BackendArg::Pipeline => Variant::pipeline(options),
            BackendArg::Imperative => Variant {
                backend: Backend::Imperative,
                options,
            },
        }
    }
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    measure: usize,
    /// Seconds per iteration
    #[arg(long, default_value_t = 10.0)]
    iter_time: f64,
}

impl TimingArgs {
    fn config(&self) -> Result<BenchConfig> {
        if !(self.iter_time.is_finite() && self.iter_time > 0.0) {
            bail!("--iter-time must be positive, got {}", self.iter_time);
        }
        Ok(BenchConfig::new(
            self.warmup,
            self.measure,
            Duration::from_secs_f64(self.iter_time),
        )?)
    }
}

fn catalog_for(kind: DataKind) -> SchemaCatalog {
    match kind {
        DataKind::Tpch => SchemaCatalog::tpch(),
        DataKind::Example => {
            let mut c = SchemaCatalog::new();
            for (name, schema) in example_schemas() {
                c.insert(name, schema);
            }
            c
        }
    }
}

fn entry_data(entry: &QueryEntry, sf: f64, seed: u64, dir: Option<&Path>) -> Result<Database> {
    let t = Instant::now();
    let db = match dir {
        Some(d) => load_dir(d, &entry.catalog()).with_context(|| format!("loading {}", d.display()))?,
        None => entry.database(sf, seed)?,
    };
    eprintln!(
        "data for {}: {} rows in {} tables ({:.1}s)",
        entry.id,
        db.tables().map(|t| t.len()).sum::<usize>(),
        db.len(),
        t.elapsed().as_secs_f64()
    );
    Ok(db)
}

fn save_results(out: Option<&Path>, workers: usize, results: &[BenchResult]) -> Result<()> {
    say!("{}", markdown_table(results));
    let speedups: Vec<f64> = results
        .iter()
        .filter(|r| !r.variant.is_baseline())
        .filter_map(|r| {
            let base = results
                .iter()
                .find(|b| b.variant.is_baseline() && b.query == r.query && b.param == r.param)?;
            r.speedup_over(base).ok()
        })
        .collect();
    if !speedups.is_empty() {
        say!("geometric mean speedup: {:.3}x", geometric_mean(&speedups)?);
    }
    for r in results {
        eprintln!("{} {}: {} runs, checksum {:016x}", r.query, r.variant.label(), r.ops, r.checksum);
    }
    if let Some(path) = out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(BufWriter::new(file), &environment_comments(workers), results)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn bench_matrix(base: &Variant) -> Vec<Variant> {
    let mut vs: Vec<Variant> = Variant::matrix()
        .into_iter()
        .filter(|v| v.backend == Backend::Pipeline)
        .map(|mut v| {
            v.options.workers = base.options.workers;
            v
        })
        .collect();
    vs.push(Variant::imperative());
    vs
}

fn run() -> Result<bool> {
    match Cli::parse().command {
        Command::GenData { sf, seed, out, dataset } => {
            let config = GenConfig::new(sf, seed);
            let db = match dataset {
                DataKind::Tpch => generate(&config)?,
                DataKind::Example => generate_example(&config)?,
            };
            write_dir(&db, &out)?;
            for t in db.tables() {
                say!("{:<10} {:>10} rows", t.name, t.len());
            }
            say!("wrote {} tables to {}", db.len(), out.display());
        }
        Command::Load { dir, dataset } => {
            let db = load_dir(&dir, &catalog_for(dataset))?;
            if db.is_empty() {
                bail!("no known .tbl files in {}", dir.display());
            }
            for t in db.tables() {
                say!("{:<10} {:>10} rows  {}", t.name, t.len(), t.schema);
            }
        }
        Command::List => {
            for e in registry() {
                say!("{:<11} {}", e.id, e.description);
            }
        }
        Command::Explain { query, variant } => {
            let entry = lookup(&query)?;
            let catalog = entry.catalog();
            let plan = entry.plan(&catalog)?;
            let v = variant.variant();
            say!("-- {}\n{}\n", entry.id, entry.sql.trim());
            say!("logical plan:\n{plan}");
            match v.backend {
                Backend::Pipeline => {
                    say!("{}", qstream_core::pipeline::compile(&plan, &catalog, &v.options)?.explain());
                    say!("{}", render_plan(&plan, &catalog, &v.options)?);
                }
                Backend::Imperative => say!("{}", qstream_core::imperative::compile_fused(&plan, &catalog)?.explain()),
            }
        }
        Command::Verify { sf, seed, query } => {
            let mut ok = true;
            let mut tpch: Option<Database> = None;
            for entry in registry() {
                if !query.is_empty() && !query.contains(&entry.id) {
                    continue;
                }
                let t = Instant::now();
                let owned;
                let db = match entry.dataset {
                    Dataset::Tpch => match &mut tpch {
                        Some(db) => &*db,
                        slot => &*slot.insert(entry.database(sf, seed)?),
                    },
                    _ => {
                        owned = entry.database(sf, seed)?;
                        &owned
                    }
                };
                let plan = entry.plan(db)?;
                let expected = evaluate(&plan, db)?;
                let mut failures = Vec::new();
                let matrix = Variant::matrix();
                for v in &matrix {
                    if let Err(e) = check_variant(&entry.id, &plan, db, v, &expected) {
                        failures.push(e.to_string());
                    }
                }
                let secs = t.elapsed().as_secs_f64();
                if failures.is_empty() {
                    say!("ok   {:<11} {} variants, {} rows ({secs:.1}s)", entry.id, matrix.len(), expected.len());
                } else {
                    ok = false;
                    say!("FAIL {:<11} {}/{} variants differ", entry.id, failures.len(), matrix.len());
                    for f in failures {
                        say!("     {f}");
                    }
                }
            }
            return Ok(ok);
        }
        Command::Bench {
            query,
            variant,
            matrix,
            sf,
            seed,
            data,
            verify_sf,
            timing,
            out,
        } => {
            let config = timing.config()?;
            let entry = lookup(&query)?;
            let sf = sf.unwrap_or(entry.default_sf);
            let db = entry_data(&entry, sf, seed, data.as_deref())?;
            // The reference interpreter joins by nested loops; past sf 0.01
            // verify on a small generated copy unless told otherwise.
            let verify_sf = verify_sf.or_else(|| {
                let joins = matches!(entry.dataset, Dataset::Tpch | Dataset::Example);
                (joins && data.is_none() && sf > 0.01).then_some(0.01)
            });
            if let Some(v) = verify_sf {
                eprintln!("verifying on generated data at sf {v}");
            }
            let verify_db = match verify_sf {
                Some(v) => Some(entry.database(v, seed)?),
                None => None,
            };
            let plan = entry.plan(&db)?;
            let reference = verify_db.as_ref().unwrap_or(&db);
            let t = Instant::now();
            let expected = evaluate(&plan, reference)?;
            eprintln!("reference result: {} rows ({:.1}s)", expected.len(), t.elapsed().as_secs_f64());
            let q = BenchQuery {
                id: entry.id.clone(),
                plan,
                param: data.as_ref().map(|d| d.display().to_string()).unwrap_or_else(|| sf.to_string()),
                verify_on: verify_db.as_ref(),
            };
            let base = variant.variant();
            let variants = if matrix { bench_matrix(&base) } else { vec![base.clone()] };
            let mut results = Vec::new();
            for v in &variants {
                eprintln!("benchmarking {} / {v}", entry.id);
                results.push(run_bench_against(&q, v, &db, &config, &expected)?);
            }
            save_results(out.as_deref(), base.options.workers, &results)?;
        }
        Command::Micro {
            kind,
            n,
            d,
            m,
            sweep,
            strategies,
            fuse,
            multi,
            workers,
            seed,
            timing,
            out,
        } => {
            let config = timing.config()?;
            let base = MicrobenchSpec::new(kind).elements(n).with_distinct(d).with_modulo(m).with_seed(seed);
            let points: Vec<i64> = match (sweep, kind) {
                (true, MicroKind::Distinct) => SWEEP_POINTS.iter().copied().filter(|p| *p <= n).collect(),
                (true, MicroKind::OneField | MicroKind::ManyFields) => SWEEP_POINTS.to_vec(),
                (true, MicroKind::Pred7) => bail!("pred7 has no parameter to sweep"),
                (false, MicroKind::Distinct) => vec![d],
                (false, _) => vec![m],
            };
            let mut results = Vec::new();
            let mut seen_workers = 0;
            for p in points {
                let spec = match kind {
                    MicroKind::Distinct => base.clone().with_distinct(p),
                    _ => base.clone().with_modulo(p),
                };
                spec.validate()?;
                let t = Instant::now();
                let db = make_micro_db(&spec)?;
                let plan = qstream_core::sql::parse(&spec.sql(), &db).map_err(|e| anyhow::anyhow!("{e}"))?;
                let expected = evaluate(&plan, &db)?;
                let param = match kind {
                    MicroKind::Distinct => format!("N={n} D={p}"),
                    MicroKind::Pred7 => format!("N={n}"),
                    _ => format!("N={n} M={p}"),
                };
                eprintln!("{kind} {param}: data and reference in {:.1}s", t.elapsed().as_secs_f64());
                let q = BenchQuery {
                    id: kind.name().to_string(),
                    plan,
                    param,
                    verify_on: None,
                };
                for s in &strategies {
                    let mut options = GenOptions::seq().with_strategy((*s).into()).fused(fuse).multi_emit(multi);
                    if let Some(w) = workers {
                        options.workers = w.max(1);
                    }
                    seen_workers = options.workers;
                    let v = Variant::pipeline(options);
                    eprintln!("benchmarking {} / {v}", q.param);
                    results.push(run_bench_against(&q, &v, &db, &config, &expected)?);
                }
            }
            save_results(out.as_deref(), seen_workers, &results)?;
        }
    }
    Ok(true)
}

fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(args).and_then(|_| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing to stdout: {e}");
        std::process::exit(1);
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
