use crate::relmodel::Catalog;

use super::{resolve, ColumnRef, Expr, LogicalPlan, NamedExpr, PlanError};

/// Moves computed aggregate arguments that read only probe-side columns
/// below the join, into a projection over the probe input. The join output
/// then carries the computed value as an extra trailing column.
///
/// `SUM(p.amount * p.discount)` over `customer ⋈ p` thus becomes a `map`
/// stage on the probe stream followed by a plain column sum.
pub fn hoist_probe_aggregates(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<LogicalPlan, PlanError> {
    let (resolved, _) = resolve(plan, catalog)?;
    let rewritten = rewrite(&resolved, catalog)?;
    Ok(resolve(&rewritten, catalog)?.0)
}

fn rewrite(plan: &LogicalPlan, catalog: &dyn Catalog) -> Result<LogicalPlan, PlanError> {
    let mut out = map_children(plan, &mut |c| rewrite(c, catalog))?;
    if let LogicalPlan::GroupAggregate { input, keys, aggs } = &out {
        if let LogicalPlan::Join {
            kind,
            build,
            probe,
            build_keys,
            probe_keys,
        } = input.as_ref()
        {
            if !kind.emits_build() {
                return Ok(out);
            }
            let build_width = resolve(build, catalog)?.1.len();
            let probe_schema = resolve(probe, catalog)?.1;
            let probe_width = probe_schema.len();
            let mut hoisted: Vec<NamedExpr> = Vec::new();
            let mut new_aggs = aggs.clone();
            for agg in new_aggs.iter_mut() {
                let Some(arg) = &agg.arg else { continue };
                let cols = arg.columns();
                let probe_only = !cols.is_empty()
                    && cols.iter().all(|c| c.index.is_some_and(|i| i >= build_width));
                if matches!(arg, Expr::Column(_)) || !probe_only {
                    continue;
                }
                let shifted = arg.transform(&mut |e| match e {
                    Expr::Column(c) => Ok(Expr::Column(ColumnRef {
                        index: c.index.map(|i| i - build_width),
                        ..c
                    })),
                    other => Ok(other),
                })?;
                let name = format!("__agg{}", hoisted.len());
                agg.arg = Some(Expr::Column(ColumnRef {
                    relation: None,
                    name: name.clone(),
                    index: Some(build_width + probe_width + hoisted.len()),
                }));
                hoisted.push(NamedExpr { expr: shifted, name });
            }
            if hoisted.is_empty() {
                return Ok(out);
            }
            let mut exprs: Vec<NamedExpr> = probe_schema
                .fields()
                .iter()
                .enumerate()
                .map(|(i, f)| NamedExpr {
                    expr: Expr::Column(ColumnRef {
                        relation: f.relation.clone(),
                        name: f.name.clone(),
                        index: Some(i),
                    }),
                    name: f.name.clone(),
                })
                .collect();
            exprs.extend(hoisted);
            out = LogicalPlan::GroupAggregate {
                input: Box::new(LogicalPlan::Join {
                    kind: *kind,
                    build: build.clone(),
                    probe: Box::new(LogicalPlan::Project {
                        input: probe.clone(),
                        exprs,
                    }),
                    build_keys: build_keys.clone(),
                    probe_keys: probe_keys.clone(),
                }),
                keys: keys.clone(),
                aggs: new_aggs,
            };
        }
    }
    Ok(out)
}

pub(crate) fn map_children(
    plan: &LogicalPlan,
    f: &mut dyn FnMut(&LogicalPlan) -> Result<LogicalPlan, PlanError>,
) -> Result<LogicalPlan, PlanError> {
    use LogicalPlan as P;
    Ok(match plan {
        P::Scan { .. } => plan.clone(),
        P::Filter { input, predicates } => P::Filter {
            input: Box::new(f(input)?),
            predicates: predicates.clone(),
        },
        P::Project { input, exprs } => P::Project {
            input: Box::new(f(input)?),
            exprs: exprs.clone(),
        },
        P::Join {
            kind,
            build,
            probe,
            build_keys,
            probe_keys,
        } => P::Join {
            kind: *kind,
            build: Box::new(f(build)?),
            probe: Box::new(f(probe)?),
            build_keys: build_keys.clone(),
            probe_keys: probe_keys.clone(),
        },
        P::Sort { input, keys } => P::Sort {
            input: Box::new(f(input)?),
            keys: keys.clone(),
        },
        P::Limit { input, count } => P::Limit {
            input: Box::new(f(input)?),
            count: *count,
        },
        P::Skip { input, count } => P::Skip {
            input: Box::new(f(input)?),
            count: *count,
        },
        P::GroupAggregate { input, keys, aggs } => P::GroupAggregate {
            input: Box::new(f(input)?),
            keys: keys.clone(),
            aggs: aggs.clone(),
        },
        P::Distinct { input } => P::Distinct {
            input: Box::new(f(input)?),
        },
        P::SubqueryAlias { input, name } => P::SubqueryAlias {
            input: Box::new(f(input)?),
            name: name.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{col, validate, AggSpec, JoinKind, PlanBuilder, SchemaCatalog};

    #[test]
    fn hoists_probe_only_expression() {
        let cat = SchemaCatalog::tpch();
        let plan = PlanBuilder::scan(&cat, "nation")
            .unwrap()
            .join(
                PlanBuilder::scan(&cat, "supplier").unwrap(),
                JoinKind::Inner,
                vec![col("n_nationkey")],
                vec![col("s_nationkey")],
            )
            .unwrap()
            .group_by(
                vec![NamedExpr::new(col("n_name"), "n")],
                vec![
                    AggSpec::sum(col("s_acctbal").mul(col("s_acctbal")), "sq"),
                    AggSpec::sum(col("s_acctbal"), "plain"),
                    AggSpec::sum(col("s_acctbal").add(col("n_regionkey")), "mixed"),
                ],
            )
            .unwrap()
            .build();
        let out = hoist_probe_aggregates(&plan, &cat).unwrap();
        assert_eq!(validate(&out, &cat).unwrap(), validate(&plan, &cat).unwrap());
        let LogicalPlan::GroupAggregate { input, aggs, .. } = &out else { panic!() };
        let LogicalPlan::Join { probe, .. } = input.as_ref() else { panic!() };
        let LogicalPlan::Project { exprs, .. } = probe.as_ref() else { panic!() };
        assert_eq!(exprs.len(), 7 + 1);
        assert!(matches!(&aggs[0].arg, Some(Expr::Column(c)) if c.index == Some(4 + 7)));
        assert_eq!(aggs[1], match &plan {
            LogicalPlan::GroupAggregate { aggs, .. } => aggs[1].clone(),
            _ => unreachable!(),
        });
    }
}
