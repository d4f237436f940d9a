//! Every registry query under every variant against the reference
//! interpreter.

use std::time::Instant;

use qstream_core::harness::{check_variant, Variant};
use qstream_core::oracle::evaluate;
use qstream_core::suite::{registry, Dataset};
use qstream_core::Database;

const SF: f64 = 0.01;
const SEED: u64 = 7;

#[test]
fn registry_matrix_matches_oracle() {
    let mut tpch: Option<Database> = None;
    for entry in registry() {
        let t = Instant::now();
        let owned;
        let db = match entry.dataset {
            Dataset::Tpch => tpch.get_or_insert_with(|| entry.database(SF, SEED).unwrap()),
            _ => {
                owned = entry.database(SF, SEED).unwrap();
                &owned
            }
        };
        let plan = entry.plan(db).unwrap();
        let expected = evaluate(&plan, db).unwrap();
        let oracle_ms = t.elapsed().as_millis();
        for v in Variant::matrix() {
            // More workers than cores and small chunks, so parallel
            // strategies really merge partial state.
            let v = v.with_parallelism(4, 512);
            if let Err(e) = check_variant(&entry.id, &plan, db, &v, &expected) {
                panic!("{e}");
            }
        }
        eprintln!(
            "{}: {} rows, oracle+data {} ms, total {} ms",
            entry.id,
            expected.len(),
            oracle_ms,
            t.elapsed().as_millis()
        );
    }
}
