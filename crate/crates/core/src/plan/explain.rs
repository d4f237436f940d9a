use std::fmt::Write;

use super::{Expr, LogicalPlan};

fn list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn exprs(items: &[Expr]) -> String {
    list(items)
}

/// Pretty-prints a plan, one node per line, children indented by two
/// spaces. The build side of a join is printed before the probe side.
pub fn explain(plan: &LogicalPlan) -> String {
    let mut out = String::new();
    node(plan, 0, &mut out);
    out
}

fn node(plan: &LogicalPlan, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let line = match plan {
        LogicalPlan::Scan { table, alias } => match alias {
            Some(a) => format!("Scan {table} AS {a}"),
            None => format!("Scan {table}"),
        },
        LogicalPlan::Filter { predicates, .. } => format!("Filter [{}]", exprs(predicates)),
        LogicalPlan::Project { exprs, .. } => format!("Project [{}]", list(exprs)),
        LogicalPlan::Join {
            kind,
            build_keys,
            probe_keys,
            ..
        } => format!(
            "Join {} build=[{}] probe=[{}]",
            kind.name(),
            exprs(build_keys),
            exprs(probe_keys)
        ),
        LogicalPlan::Sort { keys, .. } => {
            let ks: Vec<String> = keys
                .iter()
                .map(|k| format!("{} {}", k.expr, if k.descending { "DESC" } else { "ASC" }))
                .collect();
            format!("Sort [{}]", ks.join(", "))
        }
        LogicalPlan::Limit { count, .. } => format!("Limit {count}"),
        LogicalPlan::Skip { count, .. } => format!("Skip {count}"),
        LogicalPlan::GroupAggregate { keys, aggs, .. } => {
            format!("GroupAggregate keys=[{}] aggs=[{}]", list(keys), list(aggs))
        }
        LogicalPlan::Distinct { .. } => "Distinct".to_string(),
        LogicalPlan::SubqueryAlias { name, .. } => format!("SubqueryAlias {name}"),
    };
    let _ = writeln!(out, "{pad}{line}");
    for c in plan.children() {
        node(c, depth + 1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{col, lit};

    #[test]
    fn indents_children() {
        let plan = LogicalPlan::Limit {
            input: Box::new(LogicalPlan::Filter {
                input: Box::new(LogicalPlan::scan("t")),
                predicates: vec![col("a").gt(lit(1i64))],
            }),
            count: 3,
        };
        assert_eq!(explain(&plan), "Limit 3\n  Filter [a > 1]\n    Scan t\n");
    }
}
