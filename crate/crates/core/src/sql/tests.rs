use proptest::prelude::*;

use super::ast::*;
use super::*;
use crate::plan::{col, lit, qcol, AggSpec, JoinKind, NamedExpr, PlanBuilder, SchemaCatalog, SortKey};
use crate::relmodel::{example_schemas, generate_example, GenConfig};
use crate::value::{ymd, DataType};

fn example_catalog() -> SchemaCatalog {
    let mut c = SchemaCatalog::new();
    for (name, schema) in example_schemas() {
        c.insert(name, schema);
    }
    c
}

const FIG1: &str = r#"
WITH high_value_purchases AS (
    SELECT * FROM orders
    WHERE EXTRACT(YEAR FROM odate) >= 2024
    AND shipcountry = "Brasil"
    ORDER BY amount DESC
    LIMIT 100
)
SELECT C.name, SUM(P.amount * P.discount)
FROM customer C, high_value_purchases P
WHERE C.id = P.customer_id
GROUP BY C.name;
"#;

#[test]
fn running_example_plan() {
    let cat = example_catalog();
    let cte = PlanBuilder::scan(&cat, "orders")
        .unwrap()
        .filter(vec![col("odate").year().gt_eq(lit(2024i64)), col("shipcountry").eq(lit("Brasil"))])
        .unwrap()
        .sort(vec![SortKey::desc(col("amount"))])
        .unwrap()
        .limit(100)
        .unwrap()
        .alias("p")
        .unwrap();
    let expected = PlanBuilder::scan_as(&cat, "customer", "c")
        .unwrap()
        .join(cte, JoinKind::Inner, vec![qcol("c", "id")], vec![qcol("p", "customer_id")])
        .unwrap()
        .group_by(
            vec![NamedExpr::new(qcol("c", "name"), "name")],
            vec![AggSpec::sum(qcol("p", "amount").mul(qcol("p", "discount")), "sum")],
        )
        .unwrap()
        .build();
    assert_eq!(parse(FIG1, &cat).unwrap(), expected);
}

#[test]
fn running_example_matches_oracle() {
    let db = generate_example(&GenConfig::new(0.001, 3)).unwrap();
    let plan = parse(FIG1, &db).unwrap();
    let rs = crate::oracle::evaluate(&plan, &db).unwrap();
    assert!(!rs.rows.is_empty());
    assert_eq!(rs.schema.types(), vec![DataType::Text, DataType::Float64]);
}

#[test]
fn seven_predicate_count() {
    let sql = "SELECT COUNT(*) AS counter FROM lineitem
        WHERE l_orderkey >= 0 AND l_linenumber >= 0
        AND l_quantity >= 0 AND l_extendedprice >= 0
        AND l_suppkey >= 0 AND l_partkey >= 0 AND l_tax >= 0";
    let plan = parse(sql, &SchemaCatalog::tpch()).unwrap();
    let LogicalPlan::GroupAggregate { input, keys, aggs } = &plan else {
        panic!("{plan:?}")
    };
    assert!(keys.is_empty());
    assert_eq!(aggs.len(), 1);
    assert_eq!(aggs[0].to_string(), "COUNT(*) AS counter");
    let LogicalPlan::Filter { input, predicates } = input.as_ref() else {
        panic!()
    };
    assert_eq!(predicates.len(), 7);
    assert!(matches!(input.as_ref(), LogicalPlan::Scan { table, .. } if table == "lineitem"));
}

#[test]
fn one_field_grouping() {
    let cat = SchemaCatalog::new().with("orders", crate::relmodel::Schema::of(&[("id", DataType::Int64), ("p", DataType::Int64)]));
    let plan = parse("SELECT SUM(p) FROM orders GROUP BY MOD(id, 500)", &cat).unwrap();
    let LogicalPlan::Project { input, exprs } = &plan else {
        panic!("{plan:?}")
    };
    assert_eq!(exprs.len(), 1);
    let LogicalPlan::GroupAggregate { keys, aggs, .. } = input.as_ref() else {
        panic!()
    };
    assert_eq!(keys.len(), 1);
    let m = crate::plan::expr::eval(&keys[0].expr, &[crate::Value::Int(1234), crate::Value::Int(0)]).unwrap();
    assert_eq!(m, crate::Value::Int(234));
    assert_eq!(aggs[0].to_string(), "SUM(p) AS sum");
}

#[test]
fn between_splits_and_dates_fold() {
    let sql = "SELECT SUM(l_extendedprice * l_discount) AS revenue FROM lineitem
        WHERE l_shipdate >= DATE '1994-01-01' AND l_shipdate < DATE '1994-01-01' + INTERVAL '1' YEAR
        AND l_discount BETWEEN 0.06 - 0.01 AND 0.06 + 0.01 AND l_quantity < 24";
    let plan = parse(sql, &SchemaCatalog::tpch()).unwrap();
    let LogicalPlan::GroupAggregate { input, .. } = &plan else {
        panic!()
    };
    let LogicalPlan::Filter { predicates, .. } = input.as_ref() else {
        panic!()
    };
    assert_eq!(predicates.len(), 5);
    assert!(predicates[1].to_string().contains("1995-01-01"), "{}", predicates[1]);
}

#[test]
fn comma_join_keys_and_pushdown() {
    let sql = "SELECT o_orderkey FROM customer, orders, lineitem
        WHERE c_mktsegment = 'BUILDING' AND c_custkey = o_custkey
        AND l_orderkey = o_orderkey AND o_orderdate < DATE '1995-03-15'";
    let plan = parse(sql, &SchemaCatalog::tpch()).unwrap();
    let LogicalPlan::Project { input, .. } = &plan else {
        panic!()
    };
    let LogicalPlan::Join { build, probe, build_keys, .. } = input.as_ref() else {
        panic!("{input:?}")
    };
    assert!(matches!(probe.as_ref(), LogicalPlan::Scan { table, .. } if table == "lineitem"));
    assert_eq!(build_keys[0].to_string(), "o_orderkey");
    let LogicalPlan::Join { build, probe, .. } = build.as_ref() else {
        panic!()
    };
    assert!(matches!(build.as_ref(), LogicalPlan::Filter { .. }));
    assert!(matches!(probe.as_ref(), LogicalPlan::Filter { .. }));
}

#[test]
fn in_subquery_becomes_semi_join() {
    let sql = "SELECT o_orderkey FROM orders WHERE o_orderkey IN (
            SELECT l_orderkey FROM lineitem GROUP BY l_orderkey HAVING SUM(l_quantity) > 300)";
    let plan = parse(sql, &SchemaCatalog::tpch()).unwrap();
    assert!(plan.any(&|p| matches!(p, LogicalPlan::Join { kind: JoinKind::Semi, .. })));
    let anti = parse(&sql.replace(" IN (", " NOT IN ("), &SchemaCatalog::tpch()).unwrap();
    assert!(anti.any(&|p| matches!(p, LogicalPlan::Join { kind: JoinKind::Anti, .. })));
}

#[test]
fn left_join_keeps_outer_rows() {
    let sql = "SELECT c.name, o.amount FROM customer c LEFT JOIN orders o ON c.id = o.customer_id AND o.amount > 10";
    let plan = parse(sql, &example_catalog()).unwrap();
    assert!(plan.any(&|p| matches!(
        p,
        LogicalPlan::Join { kind: JoinKind::Left, probe, .. }
            if matches!(probe.as_ref(), LogicalPlan::Scan { table, .. } if table == "customer")
    )));
}

#[test]
fn unsupported_constructs() {
    let cat = SchemaCatalog::tpch();
    let cases = [
        (
            "SELECT o_orderkey FROM orders WHERE o_orderkey IN (SELECT l_orderkey FROM lineitem WHERE l_suppkey = o_custkey)",
            "correlated subquery",
        ),
        ("SELECT (SELECT 1) FROM orders", "scalar subquery"),
        ("SELECT o_orderkey FROM orders RIGHT JOIN customer ON o_custkey = c_custkey", "RIGHT OUTER JOIN"),
        ("SELECT SUM(o_totalprice) OVER () FROM orders", "window function"),
        ("SELECT o_orderkey FROM orders UNION SELECT l_orderkey FROM lineitem", "set operation"),
        ("SELECT o_orderkey FROM orders, customer", "cross join"),
        ("WITH RECURSIVE r AS (SELECT 1) SELECT * FROM r", "recursive WITH"),
        ("SELECT COUNT(DISTINCT o_custkey) FROM orders", "COUNT(DISTINCT"),
    ];
    for (sql, what) in cases {
        let d = parse(sql, &cat).unwrap_err();
        assert!(d.is_unsupported(), "{sql}: {d}");
        assert!(d.message.contains(what), "{sql}: {d}");
    }
}

#[test]
fn semantic_errors_are_syntax_diags() {
    let cat = SchemaCatalog::tpch();
    for sql in [
        "SELECT nope FROM orders",
        "SELECT o_orderkey FROM nowhere",
        "SELECT o_orderkey, COUNT(*) FROM orders",
        "SELECT o_orderkey FROM orders WHERE SUM(o_totalprice) > 1",
    ] {
        let d = parse(sql, &cat).unwrap_err();
        assert_eq!(d.category, DiagCategory::Syntax, "{sql}: {d}");
    }
}

#[test]
fn order_by_alias_and_position() {
    let cat = SchemaCatalog::tpch();
    let a = parse("SELECT o_custkey AS k, COUNT(*) AS n FROM orders GROUP BY o_custkey ORDER BY n DESC, k", &cat).unwrap();
    let b = parse("SELECT o_custkey AS k, COUNT(*) AS n FROM orders GROUP BY o_custkey ORDER BY 2 DESC, 1", &cat).unwrap();
    assert_eq!(a, b);
    assert!(matches!(crate::plan::output_ordering(&a), crate::plan::ResultOrdering::OrderedBy { .. }));
}

// Random queries over the purchase table for the print/parse fixpoint.

fn numeric() -> impl Strategy<Value = SqlExpr> {
    let leaf = prop_oneof![
        Just(SqlExpr::Column { table: None, name: "id".into() }),
        Just(SqlExpr::Column { table: Some("orders".into()), name: "amount".into() }),
        Just(SqlExpr::Column { table: None, name: "discount".into() }),
        (-1000i64..1000).prop_map(SqlExpr::Int),
        (-1.0e6f64..1.0e6).prop_map(SqlExpr::Float),
        Just(SqlExpr::ExtractYear(Box::new(SqlExpr::Column { table: None, name: "odate".into() }))),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)]).prop_map(
                |(l, r, op)| SqlExpr::Binary {
                    op,
                    left: Box::new(l),
                    right: Box::new(r),
                }
            ),
            inner.prop_map(|e| match e {
                SqlExpr::Int(_) | SqlExpr::Float(_) => e,
                other => SqlExpr::Neg(Box::new(other)),
            }),
        ]
    })
}

fn predicate() -> impl Strategy<Value = SqlExpr> {
    let cmp = prop_oneof![
        Just(BinOp::Eq),
        Just(BinOp::NotEq),
        Just(BinOp::Lt),
        Just(BinOp::LtEq),
        Just(BinOp::Gt),
        Just(BinOp::GtEq)
    ];
    let leaf = prop_oneof![
        (numeric(), cmp.clone(), numeric()).prop_map(|(l, op, r)| SqlExpr::Binary {
            op,
            left: Box::new(l),
            right: Box::new(r),
        }),
        (numeric(), numeric(), numeric(), any::<bool>()).prop_map(|(e, lo, hi, negated)| SqlExpr::Between {
            expr: Box::new(e),
            low: Box::new(lo),
            high: Box::new(hi),
            negated,
        }),
        (prop::collection::vec(-50i64..50, 1..4), any::<bool>()).prop_map(|(v, negated)| SqlExpr::InList {
            expr: Box::new(SqlExpr::Column { table: None, name: "id".into() }),
            list: v.into_iter().map(SqlExpr::Int).collect(),
            negated,
        }),
        ("[a-z%_' ]{0,6}", any::<bool>()).prop_map(|(p, negated)| SqlExpr::Like {
            expr: Box::new(SqlExpr::Column { table: None, name: "shipcountry".into() }),
            pattern: p,
            negated,
        }),
        (cmp, 0i32..20000).prop_map(|(op, d)| SqlExpr::Binary {
            op,
            left: Box::new(SqlExpr::Column { table: None, name: "odate".into() }),
            right: Box::new(SqlExpr::Date(d)),
        }),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| SqlExpr::Binary {
                op: BinOp::And,
                left: Box::new(l),
                right: Box::new(r),
            }),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| SqlExpr::Binary {
                op: BinOp::Or,
                left: Box::new(l),
                right: Box::new(r),
            }),
            inner.prop_map(|e| SqlExpr::Not(Box::new(e))),
        ]
    })
}

fn query_text() -> impl Strategy<Value = String> {
    (numeric(), predicate(), any::<bool>(), 0u8..3, proptest::option::of(1u64..50)).prop_map(
        |(item, pred, grouped, order, limit)| {
            let mut sql = if grouped {
                format!("SELECT customer_id, SUM({item}) AS total, COUNT(*) FROM orders WHERE {pred} GROUP BY customer_id")
            } else {
                format!("SELECT id, {item} AS v FROM orders WHERE {pred}")
            };
            match (order, grouped) {
                (1, true) => sql.push_str(" ORDER BY total DESC, customer_id"),
                (1, false) => sql.push_str(" ORDER BY v, id DESC"),
                (2, _) => sql.push_str(" ORDER BY 1"),
                _ => {}
            }
            if let Some(n) = limit {
                sql.push_str(&format!(" LIMIT {n}"));
            }
            sql
        },
    )
}

proptest! {
    #[test]
    fn print_parse_fixpoint(sql in query_text()) {
        let cat = example_catalog();
        let ast = parse_query(&sql).unwrap();
        let first = lower_query(&ast, &cat).unwrap();
        let printed = ast.to_string();
        let second = parse(&printed, &cat).unwrap();
        prop_assert_eq!(first, second, "printed: {}", printed);
    }

    #[test]
    fn expression_print_parse_roundtrip(e in predicate()) {
        let text = format!("SELECT id FROM orders WHERE {e}");
        let q = parse_query(&text).unwrap();
        prop_assert_eq!(q.body.selection.as_ref(), Some(&e));
    }
}

#[test]
fn fixed_texts_reach_fixpoint() {
    let cat = example_catalog();
    let ast = parse_query(FIG1).unwrap();
    let again = parse(&ast.to_string(), &cat).unwrap();
    assert_eq!(lower_query(&ast, &cat).unwrap(), again);
    let d = ymd(2024, 1, 1);
    assert_eq!(SqlExpr::Date(d).to_string(), "DATE '2024-01-01'");
}
