use crate::relmodel::{Catalog, Schema};

use super::{
    resolve, AggSpec, Expr, JoinKind, LogicalPlan, NamedExpr, PlanError, SchemaCatalog, SortKey,
};

/// Builds validated plans step by step. Every step resolves the new node,
/// so errors surface where the offending expression was added.
#[derive(Debug, Clone)]
pub struct PlanBuilder {
    plan: LogicalPlan,
    schema: Schema,
    catalog: SchemaCatalog,
}

impl PlanBuilder {
    pub fn scan(catalog: &dyn Catalog, table: &str) -> Result<PlanBuilder, PlanError> {
        Self::scan_node(catalog, table, None)
    }

    pub fn scan_as(catalog: &dyn Catalog, table: &str, alias: &str) -> Result<PlanBuilder, PlanError> {
        Self::scan_node(catalog, table, Some(alias))
    }

    fn scan_node(catalog: &dyn Catalog, table: &str, alias: Option<&str>) -> Result<PlanBuilder, PlanError> {
        let schema = catalog
            .table_schema(table)
            .ok_or_else(|| PlanError::UnknownTable(table.to_string()))?;
        let mut tables = SchemaCatalog::new();
        tables.insert(table, schema);
        PlanBuilder::finish(
            LogicalPlan::Scan {
                table: table.to_string(),
                alias: alias.map(str::to_string),
            },
            tables,
        )
    }

    /// Wraps an existing plan, validating it against `catalog`.
    pub fn from_plan(plan: LogicalPlan, catalog: &dyn Catalog) -> Result<PlanBuilder, PlanError> {
        let mut tables = SchemaCatalog::new();
        for t in plan.tables() {
            let s = catalog
                .table_schema(&t)
                .ok_or_else(|| PlanError::UnknownTable(t.clone()))?;
            tables.insert(&t, s);
        }
        PlanBuilder::finish(plan, tables)
    }

    fn finish(plan: LogicalPlan, catalog: SchemaCatalog) -> Result<PlanBuilder, PlanError> {
        let (plan, schema) = resolve(&plan, &catalog)?;
        Ok(PlanBuilder { plan, schema, catalog })
    }

    fn wrap(self, f: impl FnOnce(Box<LogicalPlan>) -> LogicalPlan) -> Result<PlanBuilder, PlanError> {
        let plan = f(Box::new(self.plan));
        PlanBuilder::finish(plan, self.catalog)
    }

    pub fn filter(self, predicates: Vec<Expr>) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Filter { input, predicates })
    }

    /// A filter over the output of `group_by`.
    pub fn having(self, predicates: Vec<Expr>) -> Result<PlanBuilder, PlanError> {
        self.filter(predicates)
    }

    pub fn project(self, exprs: Vec<NamedExpr>) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Project { input, exprs })
    }

    /// Joins with `self` as the build side and `probe` as the probe side.
    pub fn join(
        self,
        probe: PlanBuilder,
        kind: JoinKind,
        build_keys: Vec<Expr>,
        probe_keys: Vec<Expr>,
    ) -> Result<PlanBuilder, PlanError> {
        let mut catalog = self.catalog;
        catalog.merge(&probe.catalog);
        let plan = LogicalPlan::Join {
            kind,
            build: Box::new(self.plan),
            probe: Box::new(probe.plan),
            build_keys,
            probe_keys,
        };
        PlanBuilder::finish(plan, catalog)
    }

    pub fn sort(self, keys: Vec<SortKey>) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Sort { input, keys })
    }

    pub fn limit(self, count: u64) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Limit { input, count })
    }

    pub fn skip(self, count: u64) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Skip { input, count })
    }

    pub fn group_by(self, keys: Vec<NamedExpr>, aggs: Vec<AggSpec>) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::GroupAggregate { input, keys, aggs })
    }

    pub fn distinct(self) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::Distinct { input })
    }

    pub fn alias(self, name: &str) -> Result<PlanBuilder, PlanError> {
        self.wrap(|input| LogicalPlan::SubqueryAlias {
            input,
            name: name.to_string(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn plan(&self) -> &LogicalPlan {
        &self.plan
    }

    pub fn build(self) -> LogicalPlan {
        self.plan
    }
}
