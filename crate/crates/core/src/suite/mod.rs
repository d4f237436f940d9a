//! Shipped benchmark queries, microbenchmark data generators and the
//! pseudo-source plan renderer.

mod render;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::plan::{LogicalPlan, SchemaCatalog};
use crate::relmodel::{example_schemas, generate, generate_example, Catalog, Database, GenConfig, RelError, Schema, TableData};
use crate::sql::{parse, ParseDiag};
use crate::value::{DataType, Value};

pub use render::render_plan;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown query {0:?}")]
    UnknownQuery(String),
    #[error("invalid microbenchmark parameters: {0}")]
    Invalid(String),
    #[error("query {id}: {diag}")]
    Parse { id: String, diag: ParseDiag },
    #[error(transparent)]
    Rel(#[from] RelError),
}

/// Data a query runs against.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Tpch,
    /// The two-table purchase data of the running example.
    Example,
    /// Synthetic table of a microbenchmark. `element_count` is the size at
    /// scale factor 1.
    Micro(MicrobenchSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEntry {
    pub id: String,
    pub sql: String,
    pub default_sf: f64,
    pub description: String,
    pub dataset: Dataset,
}

impl QueryEntry {
    /// Schemas of the entry's dataset, without data.
    pub fn catalog(&self) -> SchemaCatalog {
        match &self.dataset {
            Dataset::Tpch => SchemaCatalog::tpch(),
            Dataset::Example => {
                let mut c = SchemaCatalog::new();
                for (name, schema) in example_schemas() {
                    c.insert(name, schema);
                }
                c
            }
            Dataset::Micro(spec) => spec.catalog(),
        }
    }

    pub fn plan(&self, catalog: &dyn Catalog) -> Result<LogicalPlan, SuiteError> {
        parse(&self.sql, catalog).map_err(|diag| SuiteError::Parse {
            id: self.id.clone(),
            diag,
        })
    }

    /// Generates the entry's data at scale factor `sf`. Microbenchmark
    /// sizes scale linearly, with distinct and group parameters clamped to
    /// the element count.
    pub fn database(&self, sf: f64, seed: u64) -> Result<Database, SuiteError> {
        let config = GenConfig::new(sf, seed);
        match &self.dataset {
            Dataset::Tpch => Ok(generate(&config)?),
            Dataset::Example => Ok(generate_example(&config)?),
            Dataset::Micro(spec) => make_micro_db(&spec.scaled(sf, seed)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MicroKind {
    Pred7,
    Distinct,
    OneField,
    ManyFields,
}

impl MicroKind {
    pub fn name(self) -> &'static str {
        match self {
            MicroKind::Pred7 => "pred7",
            MicroKind::Distinct => "distinct",
            MicroKind::OneField => "onefield",
            MicroKind::ManyFields => "manyfields",
        }
    }
}

impl fmt::Display for MicroKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MicroKind {
    type Err = String;

    fn from_str(s: &str) -> Result<MicroKind, String> {
        match s.to_ascii_lowercase().as_str() {
            "pred7" => Ok(MicroKind::Pred7),
            "distinct" => Ok(MicroKind::Distinct),
            "onefield" => Ok(MicroKind::OneField),
            "manyfields" => Ok(MicroKind::ManyFields),
            other => Err(format!("unknown microbenchmark {other:?}")),
        }
    }
}

/// Values of the `p` column in the grouping microbenchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Payload {
    /// Uniform integers in `0..=99`.
    #[default]
    Uniform,
    /// `p = id`, so per-group sums are arithmetic series.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrobenchSpec {
    pub kind: MicroKind,
    pub element_count: i64,
    /// Distinct values of `x` (Distinct only).
    pub distinct: i64,
    /// Group divisor (OneField and ManyFields only).
    pub modulo: i64,
    pub seed: u64,
    pub payload: Payload,
}

pub const DEFAULT_ELEMENTS: i64 = 10_000_000;
pub const DEFAULT_SEED: u64 = 42;

/// Default values of D and M swept by the microbenchmarks.
pub const SWEEP_POINTS: [i64; 8] = [1, 2, 10, 100, 500, 10_000, 100_000, 500_000];

impl MicrobenchSpec {
    pub fn new(kind: MicroKind) -> MicrobenchSpec {
        MicrobenchSpec {
            kind,
            element_count: DEFAULT_ELEMENTS,
            distinct: 500,
            modulo: 500,
            seed: DEFAULT_SEED,
            payload: Payload::Uniform,
        }
    }

    pub fn elements(mut self, n: i64) -> MicrobenchSpec {
        self.element_count = n;
        self
    }

    pub fn with_distinct(mut self, d: i64) -> MicrobenchSpec {
        self.distinct = d;
        self
    }

    pub fn with_modulo(mut self, m: i64) -> MicrobenchSpec {
        self.modulo = m;
        self
    }

    pub fn with_payload(mut self, payload: Payload) -> MicrobenchSpec {
        self.payload = payload;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> MicrobenchSpec {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        let bad = |m: String| Err(SuiteError::Invalid(m));
        if self.element_count < 1 {
            return bad(format!("element count {} < 1", self.element_count));
        }
        match self.kind {
            MicroKind::Distinct if !(1..=self.element_count).contains(&self.distinct) => bad(format!(
                "D = {} outside 1..={}",
                self.distinct, self.element_count
            )),
            MicroKind::OneField | MicroKind::ManyFields if self.modulo < 1 => bad(format!("M = {} < 1", self.modulo)),
            _ => Ok(()),
        }
    }

    /// This microbenchmark at scale `sf`: `element_count × sf` elements, D clamped.
    pub fn scaled(&self, sf: f64, seed: u64) -> Result<MicrobenchSpec, SuiteError> {
        if !(sf.is_finite() && sf > 0.0) {
            return Err(SuiteError::Invalid(format!("scale factor must be > 0, got {sf}")));
        }
        let n = ((self.element_count as f64 * sf).round() as i64).max(1);
        let s = MicrobenchSpec {
            element_count: n,
            distinct: self.distinct.min(n),
            seed,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sql(&self) -> String {
        match self.kind {
            MicroKind::Pred7 => PRED7.to_string(),
            MicroKind::Distinct => "SELECT DISTINCT x FROM orders".to_string(),
            MicroKind::OneField => format!("SELECT SUM(p) FROM orders GROUP BY MOD(id, {})", self.modulo),
            MicroKind::ManyFields => format!(
                "SELECT COUNT(*), SUM(p), AVG(p), MIN(p), MAX(p) FROM orders GROUP BY MOD(id, {})",
                self.modulo
            ),
        }
    }

    pub fn catalog(&self) -> SchemaCatalog {
        match self.kind {
            MicroKind::Pred7 => SchemaCatalog::tpch(),
            MicroKind::Distinct => SchemaCatalog::new().with("orders", distinct_schema()),
            MicroKind::OneField | MicroKind::ManyFields => SchemaCatalog::new().with("orders", grouping_schema()),
        }
    }

    /// Registry-style entry running this microbenchmark at its own size (`sf = 1`).
    pub fn entry(&self) -> QueryEntry {
        let param = match self.kind {
            MicroKind::Distinct => format!(" D={}", self.distinct),
            MicroKind::OneField | MicroKind::ManyFields => format!(" M={}", self.modulo),
            MicroKind::Pred7 => String::new(),
        };
        QueryEntry {
            id: self.kind.name().to_string(),
            sql: self.sql(),
            default_sf: 1.0,
            description: format!("{} microbenchmark, N={}{param}", self.kind, self.element_count),
            dataset: Dataset::Micro(self.clone()),
        }
    }
}

fn distinct_schema() -> Schema {
    Schema::of(&[("x", DataType::Int64)])
}

fn grouping_schema() -> Schema {
    Schema::of(&[("id", DataType::Int64), ("p", DataType::Int64)])
}

/// Generates the table of a microbenchmark.
///
/// Distinct: `orders(x)` with exactly D distinct values, the first D rows
/// holding each value once in a seeded order. OneField and ManyFields:
/// `orders(id, p)` with `id = 0..N-1`. Pred7: `lineitem` alone, at the
/// scale factor giving about N lines.
pub fn make_micro_db(spec: &MicrobenchSpec) -> Result<Database, SuiteError> {
    spec.validate()?;
    let n = spec.element_count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut db = Database::new();
    match spec.kind {
        MicroKind::Pred7 => {
            let sf = (n as f64 / 6_000_000.0).max(1e-4);
            let full = generate(&GenConfig::new(sf, spec.seed))?;
            db.insert(full.get("lineitem")?.clone());
        }
        MicroKind::Distinct => {
            let d = spec.distinct;
            let mut first: Vec<i64> = (0..d).collect();
            first.shuffle(&mut rng);
            let rows = first
                .into_iter()
                .chain((d..n).map(|_| rng.random_range(0..d)))
                .map(|x| Arc::from(vec![Value::Int(x)]))
                .collect();
            db.insert(TableData::new("orders", distinct_schema(), rows)?);
        }
        MicroKind::OneField | MicroKind::ManyFields => {
            let rows = (0..n)
                .map(|id| {
                    let p = match spec.payload {
                        Payload::Uniform => rng.random_range(0..100),
                        Payload::Sequential => id,
                    };
                    Arc::from(vec![Value::Int(id), Value::Int(p)])
                })
                .collect();
            db.insert(TableData::new("orders", grouping_schema(), rows)?);
        }
    }
    Ok(db)
}

/// Sum of `p = id` over ids `0..n` congruent to `r` modulo `m`.
pub fn sequential_group_sum(n: i64, m: i64, r: i64) -> i64 {
    if r >= n {
        return 0;
    }
    let k = (n - r + m - 1) / m;
    k * r + m * k * (k - 1) / 2
}

/// Number of ids in `0..n` congruent to `r` modulo `m`.
pub fn group_size(n: i64, m: i64, r: i64) -> i64 {
    if r >= n {
        0
    } else {
        (n - r + m - 1) / m
    }
}

pub const PRED7: &str = "SELECT COUNT(*) AS counter FROM lineitem
WHERE l_orderkey >= 0 AND l_linenumber >= 0
AND l_quantity >= 0 AND l_extendedprice >= 0
AND l_suppkey >= 0 AND l_partkey >= 0 AND l_tax >= 0";

const Q01: &str = "SELECT l_returnflag, l_linestatus,
    SUM(l_quantity) AS sum_qty,
    SUM(l_extendedprice) AS sum_base_price,
    SUM(l_extendedprice * (1 - l_discount)) AS sum_disc_price,
    SUM(l_extendedprice * (1 - l_discount) * (1 + l_tax)) AS sum_charge,
    AVG(l_quantity) AS avg_qty,
    AVG(l_extendedprice) AS avg_price,
    AVG(l_discount) AS avg_disc,
    COUNT(*) AS count_order
FROM lineitem
WHERE l_shipdate <= DATE '1998-12-01' - INTERVAL '90' DAY
GROUP BY l_returnflag, l_linestatus
ORDER BY l_returnflag, l_linestatus";

const Q03: &str = "SELECT l_orderkey,
    SUM(l_extendedprice * (1 - l_discount)) AS revenue,
    o_orderdate, o_shippriority
FROM customer, orders, lineitem
WHERE c_mktsegment = 'BUILDING'
    AND c_custkey = o_custkey
    AND l_orderkey = o_orderkey
    AND o_orderdate < DATE '1995-03-15'
    AND l_shipdate > DATE '1995-03-15'
GROUP BY l_orderkey, o_orderdate, o_shippriority
ORDER BY revenue DESC, o_orderdate
LIMIT 10";

const Q06: &str = "SELECT SUM(l_extendedprice * l_discount) AS revenue
FROM lineitem
WHERE l_shipdate >= DATE '1994-01-01'
    AND l_shipdate < DATE '1994-01-01' + INTERVAL '1' YEAR
    AND l_discount BETWEEN 0.05 AND 0.07
    AND l_quantity < 24";

// FROM order chosen so every relation connects to the ones before it.
const Q09: &str = "SELECT nation, o_year, SUM(amount) AS sum_profit
FROM (
    SELECT n_name AS nation,
        EXTRACT(YEAR FROM o_orderdate) AS o_year,
        l_extendedprice * (1 - l_discount) - ps_supplycost * l_quantity AS amount
    FROM part, lineitem, supplier, partsupp, orders, nation
    WHERE s_suppkey = l_suppkey
        AND ps_suppkey = l_suppkey
        AND ps_partkey = l_partkey
        AND p_partkey = l_partkey
        AND o_orderkey = l_orderkey
        AND s_nationkey = n_nationkey
        AND p_name LIKE '%green%'
) AS profit
GROUP BY nation, o_year
ORDER BY nation, o_year DESC";

const Q18: &str = "SELECT c_name, c_custkey, o_orderkey, o_orderdate, o_totalprice,
    SUM(l_quantity) AS sum_qty
FROM customer, orders, lineitem
WHERE o_orderkey IN (
        SELECT l_orderkey FROM lineitem
        GROUP BY l_orderkey HAVING SUM(l_quantity) > 300)
    AND c_custkey = o_custkey
    AND o_orderkey = l_orderkey
GROUP BY c_name, c_custkey, o_orderkey, o_orderdate, o_totalprice
ORDER BY o_totalprice DESC, o_orderdate
LIMIT 100";

pub const EXAMPLE: &str = "WITH high_value_purchases AS (
    SELECT * FROM orders
    WHERE EXTRACT(YEAR FROM odate) >= 2024
    AND shipcountry = \"Brasil\"
    ORDER BY amount DESC
    LIMIT 100
)
SELECT C.name, SUM(P.amount * P.discount)
FROM customer C, high_value_purchases P
WHERE C.id = P.customer_id
GROUP BY C.name";

fn entry(id: &str, sql: &str, default_sf: f64, description: &str, dataset: Dataset) -> QueryEntry {
    QueryEntry {
        id: id.to_string(),
        sql: sql.to_string(),
        default_sf,
        description: description.to_string(),
        dataset,
    }
}

/// Every shipped query, in listing order.
pub fn registry() -> Vec<QueryEntry> {
    vec![
        entry(
            "q01",
            Q01,
            1.0,
            "TPC-H Q01: low-cardinality grouped aggregation (4 groups) with many arithmetic aggregates",
            Dataset::Tpch,
        ),
        entry(
            "q03",
            Q03,
            1.0,
            "TPC-H Q03: join-intensive, three-way join with grouping and top-10",
            Dataset::Tpch,
        ),
        entry(
            "q06",
            Q06,
            1.0,
            "TPC-H Q06: scalar aggregate, dominated by predicate execution",
            Dataset::Tpch,
        ),
        entry(
            "q09",
            Q09,
            1.0,
            "TPC-H Q09: join-intensive, six-way join over a derived table",
            Dataset::Tpch,
        ),
        entry(
            "q18",
            Q18,
            1.0,
            "TPC-H Q18: high-cardinality grouped aggregation; IN-subquery as semi join",
            Dataset::Tpch,
        ),
        entry(
            "example",
            EXAMPLE,
            1.0,
            "Running example: top-100 purchases per CTE joined with customers, grouped by name",
            Dataset::Example,
        ),
        entry(
            "pred7",
            PRED7,
            1.0,
            "COUNT(*) over lineitem behind 7 conjuncted, non-selective predicates",
            Dataset::Tpch,
        ),
        entry(
            "distinct",
            &MicrobenchSpec::new(MicroKind::Distinct).sql(),
            1.0,
            "SELECT DISTINCT over a column with D = 500 distinct values",
            Dataset::Micro(MicrobenchSpec::new(MicroKind::Distinct)),
        ),
        entry(
            "onefield",
            &MicrobenchSpec::new(MicroKind::OneField).sql(),
            1.0,
            "grouped aggregation of a single field into M = 500 groups",
            Dataset::Micro(MicrobenchSpec::new(MicroKind::OneField)),
        ),
        entry(
            "manyfields",
            &MicrobenchSpec::new(MicroKind::ManyFields).sql(),
            1.0,
            "grouped aggregation of five fields into M = 500 groups",
            Dataset::Micro(MicrobenchSpec::new(MicroKind::ManyFields)),
        ),
    ]
}

pub fn lookup(id: &str) -> Result<QueryEntry, SuiteError> {
    registry()
        .into_iter()
        .find(|e| e.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| SuiteError::UnknownQuery(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::validate;

    #[test]
    fn registry_ids_and_descriptions() {
        let ids: Vec<String> = registry().into_iter().map(|e| e.id).collect();
        assert_eq!(
            ids,
            ["q01", "q03", "q06", "q09", "q18", "example", "pred7", "distinct", "onefield", "manyfields"]
        );
        assert!(lookup("q01").unwrap().description.contains("low-cardinality grouped aggregation"));
        assert!(lookup("q06").unwrap().description.contains("scalar aggregate"));
        assert!(lookup("q06").unwrap().description.contains("predicate"));
        assert!(lookup("q18").unwrap().description.contains("high-cardinality grouped aggregation"));
    }

    #[test]
    fn every_entry_parses_and_validates() {
        for e in registry() {
            let cat = e.catalog();
            let plan = e.plan(&cat).unwrap_or_else(|err| panic!("{err}"));
            validate(&plan, &cat).unwrap();
        }
    }

    #[test]
    fn one_field_groups() {
        let spec = MicrobenchSpec::new(MicroKind::OneField).elements(10).with_modulo(3);
        let db = make_micro_db(&spec).unwrap();
        let plan = spec.entry().plan(&db).unwrap();
        let rs = crate::oracle::evaluate(&plan, &db).unwrap();
        assert_eq!(rs.rows.len(), 3);
        assert_eq!([group_size(10, 3, 0), group_size(10, 3, 1), group_size(10, 3, 2)], [4, 3, 3]);
    }

    #[test]
    fn single_group_counts_everything() {
        let spec = MicrobenchSpec::new(MicroKind::ManyFields).elements(1000).with_modulo(1);
        let db = make_micro_db(&spec).unwrap();
        let rs = crate::oracle::evaluate(&spec.entry().plan(&db).unwrap(), &db).unwrap();
        assert_eq!(rs.rows.len(), 1);
        assert!(rs.rows[0].contains(&Value::Int(1000)));
    }

    #[test]
    fn distinct_data_has_exact_cardinality() {
        for d in [1, 7, 1000] {
            let spec = MicrobenchSpec::new(MicroKind::Distinct).elements(5000).with_distinct(d);
            let db = make_micro_db(&spec).unwrap();
            let rs = crate::oracle::evaluate(&spec.entry().plan(&db).unwrap(), &db).unwrap();
            assert_eq!(rs.rows.len() as i64, d);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = MicrobenchSpec::new(MicroKind::Distinct).elements(10).with_distinct(11);
        assert!(matches!(make_micro_db(&s), Err(SuiteError::Invalid(_))));
        let s = MicrobenchSpec::new(MicroKind::OneField).with_modulo(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn closed_form_sums() {
        let (n, m) = (103, 7);
        for r in 0..m {
            let direct: i64 = (0..n).filter(|i| i % m == r).sum();
            assert_eq!(sequential_group_sum(n, m, r), direct);
        }
    }
}
