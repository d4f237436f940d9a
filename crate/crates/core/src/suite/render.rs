use crate::pipeline::{compile, EmitMode, GenOptions, Pipeline, Segment, Source, Stage, Strategy, Terminal};
use crate::plan::{LogicalPlan, PlanError};
use crate::prepared::{Evaluator, PreparedAgg};
use crate::relmodel::Catalog;

/// Renders the pipeline a variant compiles to as stream-style pseudo
/// source, one stage per line. Build sides and materialized inputs come
/// first as named variables.
pub fn render_plan(plan: &LogicalPlan, catalog: &dyn Catalog, options: &GenOptions) -> Result<String, PlanError> {
    Ok(render_pipeline(&compile(plan, catalog, options)?))
}

pub(crate) fn render_pipeline(p: &Pipeline) -> String {
    let mut r = Renderer {
        strategy: p.strategy,
        prelude: Vec::new(),
        builds: 0,
        inputs: 0,
    };
    let body = r.segment(&p.root, "result");
    let mut out = format!("// {}\n", p.options);
    for n in &p.notices {
        out.push_str(&format!("// notice: {n}\n"));
    }
    for block in r.prelude {
        out.push_str(&block);
    }
    out.push_str(&body);
    out
}

struct Renderer {
    strategy: Strategy,
    prelude: Vec<String>,
    builds: usize,
    inputs: usize,
}

fn list(evals: &[Evaluator], sep: &str) -> String {
    evals.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(sep)
}

fn aggs(aggs: &[PreparedAgg]) -> String {
    aggs.iter()
        .map(|a| match &a.arg {
            Some(e) => format!("{}({e})", format!("{:?}", a.kind).to_ascii_lowercase()),
            None => "count()".to_string(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl Renderer {
    fn open(&self) -> &'static str {
        match self.strategy {
            Strategy::Seq => ".stream()",
            Strategy::P => ".parallelStream()",
            Strategy::PU | Strategy::CG | Strategy::CGCC => ".parallelStream().unordered()",
        }
    }

    fn segment(&mut self, seg: &Segment, var: &str) -> String {
        let source = match &seg.source {
            Source::Table(t) => t.clone(),
            Source::Segment(inner) => {
                let name = format!("input{}", self.inputs);
                self.inputs += 1;
                let text = self.segment(inner, &name);
                self.prelude.push(text);
                name
            }
        };
        let mut lines = vec![format!("var {var} = {source}{}", self.open())];
        for st in &seg.stages {
            let line = match st {
                Stage::Filter(p) => format!(".filter(r -> {})", list(p, " && ")),
                Stage::Map(e) => format!(".map(r -> row({}))", list(e, ", ")),
                Stage::Probe {
                    build,
                    kind,
                    keys,
                    mode,
                    ..
                } => {
                    let name = format!("build{}", self.builds);
                    self.builds += 1;
                    let text = self.segment(build, &name);
                    self.prelude.push(text);
                    match mode {
                        EmitMode::Flat => format!(
                            ".flatMap(r -> {name}.probe({}).stream())   // flat-emit {} join",
                            list(keys, ", "),
                            kind.name()
                        ),
                        EmitMode::Multi => format!(
                            ".mapMulti((r, sink) -> {name}.probe({}, sink))   // multi-emit {} join",
                            list(keys, ", "),
                            kind.name()
                        ),
                    }
                }
                Stage::Sort(keys) => {
                    let ks: Vec<String> = keys
                        .iter()
                        .map(|(e, d)| if *d { format!("{e} desc") } else { e.to_string() })
                        .collect();
                    format!(".sorted(by({}))", ks.join(", "))
                }
                Stage::Limit(n) => format!(".limit({n})"),
                Stage::Skip(n) => format!(".skip({n})"),
                Stage::Distinct => ".distinct()".to_string(),
            };
            lines.push(line);
        }
        let concurrent = matches!(self.strategy, Strategy::CG | Strategy::CGCC);
        let terminal = match &seg.terminal {
            Terminal::Collect => ".collect(toList());".to_string(),
            Terminal::Grouped { keys, aggs: a } => match self.strategy {
                Strategy::CG => format!(".collect(groupingByConcurrent(key({}), locked({})));", list(keys, ", "), aggs(a)),
                Strategy::CGCC => format!(".collect(groupingByConcurrent(key({}), atomic({})));", list(keys, ", "), aggs(a)),
                _ => format!(".collect(groupingBy(key({}), {}));", list(keys, ", "), aggs(a)),
            },
            Terminal::Scalar { aggs: a } => format!(".collect(reducing({}));", aggs(a)),
            Terminal::JoinMap { keys } if concurrent => {
                format!(".collect(toConcurrentJoinMap({}));", list(keys, ", "))
            }
            Terminal::JoinMap { keys } => format!(".collect(toJoinMap({}));", list(keys, ", ")),
        };
        lines.push(terminal);
        let mut text = lines[0].clone();
        text.push('\n');
        for l in &lines[1..] {
            text.push_str(&format!("    {l}\n"));
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::SchemaCatalog;
    use crate::sql::parse;
    use crate::suite::{EXAMPLE, PRED7};

    fn pred7(fuse: bool) -> String {
        let cat = SchemaCatalog::tpch();
        let plan = parse(PRED7, &cat).unwrap();
        render_plan(&plan, &cat, &GenOptions::seq().fused(fuse)).unwrap()
    }

    #[test]
    fn fused_filter_is_one_line() {
        let text = pred7(true);
        let filters: Vec<&str> = text.lines().filter(|l| l.contains(".filter(")).collect();
        assert_eq!(filters.len(), 1, "{text}");
        assert_eq!(filters[0].matches(" && ").count(), 6);
    }

    #[test]
    fn chained_filters_one_per_line() {
        let text = pred7(false);
        assert_eq!(text.lines().filter(|l| l.contains(".filter(")).count(), 7, "{text}");
        assert!(!text.contains("&&"));
    }

    #[test]
    fn join_stage_labels() {
        let cat = crate::suite::lookup("example").unwrap().catalog();
        let plan = parse(EXAMPLE, &cat).unwrap();
        let multi = render_plan(&plan, &cat, &GenOptions::seq().multi_emit(true)).unwrap();
        assert!(multi.contains("multi-emit"), "{multi}");
        let flat = render_plan(&plan, &cat, &GenOptions::seq()).unwrap();
        assert!(flat.contains("flat-emit") && !flat.contains("multi-emit"));
        assert_eq!(flat, render_plan(&plan, &cat, &GenOptions::seq()).unwrap());
    }
}
