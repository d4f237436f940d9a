//! Criterion benchmarks of the registry queries under the main variants.
//!
//! Scale with `QSTREAM_BENCH_SF` (default 0.01). Every variant is checked
//! against the reference interpreter before it is timed.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qstream_core::harness::{check_variant, Executable, Variant};
use qstream_core::oracle::evaluate;
use qstream_core::suite::registry;
use qstream_core::{GenOptions, Strategy};

fn variants() -> Vec<Variant> {
    let mut v = vec![
        Variant::pipeline(GenOptions::seq()),
        Variant::pipeline(GenOptions::seq().fused(true)),
        Variant::pipeline(GenOptions::seq().multi_emit(true)),
        Variant::pipeline(GenOptions::seq().fused(true).multi_emit(true)),
    ];
    for s in [Strategy::P, Strategy::PU, Strategy::CG, Strategy::CGCC] {
        v.push(Variant::pipeline(GenOptions::seq().with_strategy(s)));
    }
    v.push(Variant::imperative());
    v
}

fn registry_variants(c: &mut Criterion) {
    let sf: f64 = std::env::var("QSTREAM_BENCH_SF")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.01);
    for entry in registry() {
        let db = entry.database(sf, 42).expect("data generation");
        let plan = entry.plan(&db).expect("registry query parses");
        let expected = evaluate(&plan, &db).expect("reference result");
        let mut group = c.benchmark_group(entry.id.as_str());
        for v in variants() {
            check_variant(&entry.id, &plan, &db, &v, &expected).expect("variant verifies");
            let exe = Executable::compile(&plan, &db, &v).expect("compiles");
            group.bench_with_input(BenchmarkId::from_parameter(v.label()), &exe, |b, exe| {
                b.iter(|| black_box(exe.run(black_box(&db)).expect("runs").checksum()))
            });
        }
        group.finish();
    }
}

criterion_group!(benches, registry_variants);
criterion_main!(benches);
