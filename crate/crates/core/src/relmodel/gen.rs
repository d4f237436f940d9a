//! Deterministic, schema-faithful TPC-H-shaped data.
//!
//! Cardinalities follow the usual scale-factor rule; value distributions
//! approximate dbgen but are not bit-compatible with it. Every table draws
//! from its own ChaCha8 stream keyed by the configured seed, so a
//! [`GenConfig`] fully determines the output.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tpch::{self, *};
use super::{Database, RelError, Row, Schema, TableData};
use crate::value::{ymd, DataType, Value};

/// The pseudo-random generator behind [`generate`]; changing it changes
/// every generated dataset.
pub const GEN_PRNG: &str = "ChaCha8 (rand_chacha 0.9), one stream per table";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub sf: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(sf: f64, seed: u64) -> GenConfig {
        GenConfig { sf, seed }
    }

    /// `round(base × sf)` for a variable-size table.
    pub fn rows_for(&self, base: u64) -> u64 {
        (base as f64 * self.sf).round() as u64
    }

    fn check(&self) -> Result<(), RelError> {
        if !(self.sf.is_finite() && self.sf > 0.0) {
            return Err(RelError::Config(format!("scale factor must be > 0, got {}", self.sf)));
        }
        for (table, base) in BASE_ROWS {
            if self.rows_for(base) == 0 {
                return Err(RelError::Config(format!(
                    "scale factor {} yields zero rows for {table}",
                    self.sf
                )));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig { sf: 0.01, seed: 7 }
    }
}

const START_DATE: (i32, u32, u32) = (1992, 1, 1);
/// Last order date: end of the date range minus the longest ship and
/// receipt delay.
const LAST_ORDER_DATE: (i32, u32, u32) = (1998, 8, 2);
/// Lines received up to this date carry a return flag; lines shipped after
/// it are still open.
const CURRENT_DATE: (i32, u32, u32) = (1995, 6, 17);

/// Generates the eight TPC-H tables.
pub fn generate(config: &GenConfig) -> Result<Database, RelError> {
    config.check()?;
    let n_supp = config.rows_for(10_000);
    let n_part = config.rows_for(200_000);
    let n_ps = config.rows_for(800_000);
    let n_cust = config.rows_for(150_000);
    let n_orders = config.rows_for(1_500_000);
    let n_lines = config.rows_for(6_000_000);

    let mut db = Database::new();
    db.insert(region(config));
    db.insert(nation(config));
    db.insert(supplier(config, n_supp));
    db.insert(part(config, n_part));
    db.insert(partsupp(config, n_ps, n_part, n_supp));
    db.insert(customer(config, n_cust));
    let (orders, lineitem) = orders_and_lines(config, n_orders, n_lines, n_cust, n_part, n_supp);
    db.insert(orders);
    db.insert(lineitem);
    Ok(db)
}

fn table(name: &str, rows: Vec<Row>) -> TableData {
    let schema = tpch::schema(name).expect("known table");
    TableData::new_unchecked(name, schema, rows)
}

fn row(values: Vec<Value>) -> Row {
    Arc::from(values)
}

fn comment(rng: &mut ChaCha8Rng) -> Value {
    let n = rng.random_range(2..=5);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    Value::text(words.join(" "))
}

fn address(rng: &mut ChaCha8Rng) -> Value {
    let len = rng.random_range(10..=25);
    let s: String = (0..len)
        .map(|_| {
            let c = rng.random_range(0..36u8);
            if c < 10 {
                (b'0' + c) as char
            } else {
                (b'a' + c - 10) as char
            }
        })
        .collect();
    Value::text(s)
}

fn phone(rng: &mut ChaCha8Rng, nation: i64) -> Value {
    Value::text(format!(
        "{}-{}-{}-{}",
        nation + 10,
        rng.random_range(100..1000),
        rng.random_range(100..1000),
        rng.random_range(1000..10000)
    ))
}

fn cents(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> f64 {
    rng.random_range(lo..=hi) as f64 / 100.0
}

fn region(config: &GenConfig) -> TableData {
    let mut rng = config.rng(1);
    let rows = REGIONS
        .iter()
        .enumerate()
        .map(|(k, name)| row(vec![Value::Int(k as i64), Value::text(name), comment(&mut rng)]))
        .collect();
    table("region", rows)
}

fn nation(config: &GenConfig) -> TableData {
    let mut rng = config.rng(2);
    let rows = NATIONS
        .iter()
        .enumerate()
        .map(|(k, (name, region))| {
            row(vec![
                Value::Int(k as i64),
                Value::text(name),
                Value::Int(*region),
                comment(&mut rng),
            ])
        })
        .collect();
    table("nation", rows)
}

fn supplier(config: &GenConfig, n: u64) -> TableData {
    let mut rng = config.rng(3);
    let rows = (1..=n as i64)
        .map(|k| {
            let nation = rng.random_range(0..25);
            row(vec![
                Value::Int(k),
                Value::text(format!("Supplier#{k:09}")),
                address(&mut rng),
                Value::Int(nation),
                phone(&mut rng, nation),
                Value::Float(cents(&mut rng, -99_999, 999_999)),
                comment(&mut rng),
            ])
        })
        .collect();
    table("supplier", rows)
}

fn retail_price(partkey: i64) -> f64 {
    (90_000 + (partkey / 10) % 20_001 + 100 * (partkey % 1_000)) as f64 / 100.0
}

fn part(config: &GenConfig, n: u64) -> TableData {
    let mut rng = config.rng(4);
    let rows = (1..=n as i64)
        .map(|k| {
            let name: Vec<&str> = COLORS.choose_multiple(&mut rng, 5).copied().collect();
            let mfgr = rng.random_range(1..=5);
            let brand = rng.random_range(1..=5);
            let ty = format!(
                "{} {} {}",
                TYPE_S1.choose(&mut rng).unwrap(),
                TYPE_S2.choose(&mut rng).unwrap(),
                TYPE_S3.choose(&mut rng).unwrap()
            );
            let container = format!(
                "{} {}",
                CONTAINER_S1.choose(&mut rng).unwrap(),
                CONTAINER_S2.choose(&mut rng).unwrap()
            );
            row(vec![
                Value::Int(k),
                Value::text(name.join(" ")),
                Value::text(format!("Manufacturer#{mfgr}")),
                Value::text(format!("Brand#{mfgr}{brand}")),
                Value::text(ty),
                Value::Int(rng.random_range(1..=50)),
                Value::text(container),
                Value::Float(retail_price(k)),
                comment(&mut rng),
            ])
        })
        .collect();
    table("part", rows)
}

/// The `i`-th (0..4) supplier of a part; lineitem draws its supplier from
/// the same formula so every (part, supplier) pair exists in partsupp.
fn part_supplier(partkey: i64, i: i64, n_supp: i64) -> i64 {
    (partkey + i * (n_supp / 4 + (partkey - 1) / n_supp)) % n_supp + 1
}

fn partsupp(config: &GenConfig, n: u64, n_part: u64, n_supp: u64) -> TableData {
    let mut rng = config.rng(5);
    let rows = (0..n as i64)
        .map(|j| {
            let partkey = (j / 4) % n_part as i64 + 1;
            let suppkey = part_supplier(partkey, j % 4, n_supp as i64);
            row(vec![
                Value::Int(partkey),
                Value::Int(suppkey),
                Value::Int(rng.random_range(1..=9_999)),
                Value::Float(cents(&mut rng, 100, 100_000)),
                comment(&mut rng),
            ])
        })
        .collect();
    table("partsupp", rows)
}

fn customer(config: &GenConfig, n: u64) -> TableData {
    let mut rng = config.rng(6);
    let rows = (1..=n as i64)
        .map(|k| {
            let nation = rng.random_range(0..25);
            row(vec![
                Value::Int(k),
                Value::text(format!("Customer#{k:09}")),
                address(&mut rng),
                Value::Int(nation),
                phone(&mut rng, nation),
                Value::Float(cents(&mut rng, -99_999, 999_999)),
                Value::text(SEGMENTS.choose(&mut rng).unwrap()),
                comment(&mut rng),
            ])
        })
        .collect();
    table("customer", rows)
}

fn orders_and_lines(
    config: &GenConfig,
    n_orders: u64,
    n_lines: u64,
    n_cust: u64,
    n_part: u64,
    n_supp: u64,
) -> (TableData, TableData) {
    let mut rng = config.rng(7);
    let start = ymd(START_DATE.0, START_DATE.1, START_DATE.2);
    let last = ymd(LAST_ORDER_DATE.0, LAST_ORDER_DATE.1, LAST_ORDER_DATE.2);
    let current = ymd(CURRENT_DATE.0, CURRENT_DATE.1, CURRENT_DATE.2);
    let n_cust = n_cust as i64;

    let mut orders = Vec::with_capacity(n_orders as usize);
    let mut lines = Vec::with_capacity(n_lines as usize);
    let mut lines_left = n_lines as i64;
    for k in 1..=n_orders as i64 {
        // 1..=7 lines per order, clamped so the table total is exact.
        let orders_left = n_orders as i64 - k + 1;
        let lo = (lines_left - 7 * (orders_left - 1)).max(1);
        let hi = (lines_left - (orders_left - 1)).min(7).max(lo);
        let n_here = rng.random_range(1..=7).clamp(lo, hi).min(lines_left.max(0));
        lines_left -= n_here;

        let mut custkey = rng.random_range(1..=n_cust);
        if n_cust >= 3 && custkey % 3 == 0 {
            custkey -= 1;
        }
        let odate = rng.random_range(start..=last);
        let mut total = 0.0;
        let mut open = 0;
        for ln in 1..=n_here {
            let partkey = rng.random_range(1..=n_part as i64);
            let suppkey = part_supplier(partkey, rng.random_range(0..4), n_supp as i64);
            let qty = rng.random_range(1..=50) as f64;
            let price = (qty * retail_price(partkey) * 100.0).round() / 100.0;
            let discount = rng.random_range(0..=10) as f64 / 100.0;
            let tax = rng.random_range(0..=8) as f64 / 100.0;
            let ship = odate + rng.random_range(1..=121);
            let commit = odate + rng.random_range(30..=90);
            let receipt = ship + rng.random_range(1..=30);
            let returnflag = if receipt <= current {
                if rng.random_bool(0.5) {
                    "R"
                } else {
                    "A"
                }
            } else {
                "N"
            };
            let linestatus = if ship > current { "O" } else { "F" };
            if linestatus == "O" {
                open += 1;
            }
            total += price * (1.0 + tax) * (1.0 - discount);
            lines.push(row(vec![
                Value::Int(k),
                Value::Int(partkey),
                Value::Int(suppkey),
                Value::Int(ln),
                Value::Float(qty),
                Value::Float(price),
                Value::Float(discount),
                Value::Float(tax),
                Value::text(returnflag),
                Value::text(linestatus),
                Value::Date(ship),
                Value::Date(commit),
                Value::Date(receipt),
                Value::text(SHIP_INSTRUCT.choose(&mut rng).unwrap()),
                Value::text(SHIP_MODES.choose(&mut rng).unwrap()),
                comment(&mut rng),
            ]));
        }
        let status = if open == 0 {
            "F"
        } else if open == n_here {
            "O"
        } else {
            "P"
        };
        orders.push(row(vec![
            Value::Int(k),
            Value::Int(custkey),
            Value::text(status),
            Value::Float((total * 100.0).round() / 100.0),
            Value::Date(odate),
            Value::text(PRIORITIES.choose(&mut rng).unwrap()),
            Value::text(format!("Clerk#{:09}", rng.random_range(1..=1_000))),
            Value::Int(0),
            comment(&mut rng),
        ]));
    }
    (table("orders", orders), table("lineitem", lines))
}

const FIRST_NAMES: [&str; 12] = [
    "Ana", "Bruno", "Carla", "Diego", "Elena", "Felipe", "Gabriela", "Hugo", "Isabel", "Joao",
    "Lucia", "Mateo",
];
const LAST_NAMES: [&str; 10] = [
    "Silva", "Santos", "Oliveira", "Souza", "Lima", "Pereira", "Costa", "Rodrigues", "Almeida",
    "Gomes",
];
const COUNTRIES: [&str; 6] = ["Brasil", "Argentina", "Chile", "Peru", "Uruguay", "Colombia"];

/// Schema of the two-table purchase dataset behind the running example:
/// `customer(id, name)` and `orders(id, odate, shipcountry, amount,
/// discount, customer_id)`.
pub fn example_schemas() -> [(&'static str, Schema); 2] {
    [
        (
            "customer",
            Schema::of(&[("id", DataType::Int64), ("name", DataType::Text)]),
        ),
        (
            "orders",
            Schema::of(&[
                ("id", DataType::Int64),
                ("odate", DataType::Date),
                ("shipcountry", DataType::Text),
                ("amount", DataType::Float64),
                ("discount", DataType::Float64),
                ("customer_id", DataType::Int64),
            ]),
        ),
    ]
}

/// Generates the purchase dataset. Sizes follow the customer and orders
/// base cardinalities; order amounts are pairwise distinct so
/// `ORDER BY amount ... LIMIT` has a unique answer.
pub fn generate_example(config: &GenConfig) -> Result<Database, RelError> {
    config.check()?;
    let n_cust = config.rows_for(150_000) as i64;
    let n_orders = config.rows_for(1_500_000) as i64;
    let [(_, cust_schema), (_, orders_schema)] = example_schemas();

    let mut rng = config.rng(11);
    let customers = (1..=n_cust)
        .map(|k| {
            let name = format!(
                "{} {}",
                FIRST_NAMES.choose(&mut rng).unwrap(),
                LAST_NAMES.choose(&mut rng).unwrap()
            );
            row(vec![Value::Int(k), Value::text(name)])
        })
        .collect();

    let mut rng = config.rng(12);
    let mut amounts: Vec<i64> = (1..=n_orders).map(|k| 1_000 + k * 37).collect();
    amounts.shuffle(&mut rng);
    let start = ymd(2019, 1, 1);
    let end = ymd(2025, 12, 31);
    let orders = amounts
        .into_iter()
        .enumerate()
        .map(|(i, amount)| {
            row(vec![
                Value::Int(i as i64 + 1),
                Value::Date(rng.random_range(start..=end)),
                Value::text(COUNTRIES.choose(&mut rng).unwrap()),
                Value::Float(amount as f64 / 100.0),
                Value::Float(rng.random_range(0..=30) as f64 / 100.0),
                Value::Int(rng.random_range(1..=n_cust)),
            ])
        })
        .collect();

    let mut db = Database::new();
    db.insert(TableData::new_unchecked("customer", cust_schema, customers));
    db.insert(TableData::new_unchecked("orders", orders_schema, orders));
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn col(t: &TableData, name: &str) -> usize {
        t.schema.lookup(None, name)[0]
    }

    #[test]
    fn scale_law_and_fixed_tables() {
        let cfg = GenConfig::new(0.001, 7);
        let db = generate(&cfg).unwrap();
        assert_eq!(db.get("lineitem").unwrap().len(), 6_000);
        for (name, base) in BASE_ROWS {
            assert_eq!(db.get(name).unwrap().len() as u64, cfg.rows_for(base), "{name}");
        }
        assert_eq!(db.get("nation").unwrap().len(), 25);
        assert_eq!(db.get("region").unwrap().len(), 5);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig::new(0.001, 7);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&GenConfig::new(0.001, 8)).unwrap();
        assert_ne!(generate(&cfg).unwrap(), other);
    }

    #[test]
    fn rejects_tiny_scale() {
        assert!(matches!(generate(&GenConfig::new(1e-6, 1)), Err(RelError::Config(_))));
        assert!(matches!(generate(&GenConfig::new(0.0, 1)), Err(RelError::Config(_))));
        assert!(matches!(generate(&GenConfig::new(-1.0, 1)), Err(RelError::Config(_))));
    }

    #[test]
    fn referential_integrity() {
        let db = generate(&GenConfig::new(0.002, 3)).unwrap();
        let keys = |t: &str, c: &str| -> HashSet<Vec<Value>> {
            let t = db.get(t).unwrap();
            let i = col(t, c);
            t.rows().iter().map(|r| vec![r[i].clone()]).collect()
        };
        let fk = |t: &str, c: &str, rt: &str, rc: &str| {
            let refs = keys(rt, rc);
            for k in keys(t, c) {
                assert!(refs.contains(&k), "{t}.{c} = {k:?} missing in {rt}.{rc}");
            }
        };
        fk("lineitem", "l_orderkey", "orders", "o_orderkey");
        fk("lineitem", "l_partkey", "part", "p_partkey");
        fk("lineitem", "l_suppkey", "supplier", "s_suppkey");
        fk("orders", "o_custkey", "customer", "c_custkey");
        fk("customer", "c_nationkey", "nation", "n_nationkey");
        fk("supplier", "s_nationkey", "nation", "n_nationkey");
        fk("nation", "n_regionkey", "region", "r_regionkey");
        fk("partsupp", "ps_partkey", "part", "p_partkey");
        fk("partsupp", "ps_suppkey", "supplier", "s_suppkey");

        let ps = db.get("partsupp").unwrap();
        let pairs: HashSet<(Value, Value)> = ps
            .rows()
            .iter()
            .map(|r| (r[0].clone(), r[1].clone()))
            .collect();
        let li = db.get("lineitem").unwrap();
        for r in li.rows() {
            assert!(pairs.contains(&(r[1].clone(), r[2].clone())));
        }
    }

    #[test]
    fn dates_in_range_and_four_flag_groups() {
        let db = generate(&GenConfig::new(0.01, 7)).unwrap();
        let li = db.get("lineitem").unwrap();
        let lo = ymd(1992, 1, 1);
        let hi = ymd(1998, 12, 31);
        let mut flags = HashSet::new();
        for r in li.rows() {
            for c in ["l_shipdate", "l_commitdate", "l_receiptdate"] {
                let Value::Date(d) = r[col(li, c)] else { panic!() };
                assert!((lo..=hi).contains(&d));
            }
            flags.insert((r[8].clone(), r[9].clone()));
        }
        assert_eq!(flags.len(), 4);
    }

    #[test]
    fn example_amounts_are_unique() {
        let db = generate_example(&GenConfig::new(0.01, 7)).unwrap();
        let orders = db.get("orders").unwrap();
        assert_eq!(orders.len(), 15_000);
        let amounts: HashSet<Value> = orders.rows().iter().map(|r| r[3].clone()).collect();
        assert_eq!(amounts.len(), orders.len());
        let ids: HashSet<Value> = db.get("customer").unwrap().rows().iter().map(|r| r[0].clone()).collect();
        assert!(orders.rows().iter().all(|r| ids.contains(&r[5])));
    }
}
