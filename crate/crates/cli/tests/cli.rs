use std::process::{Command, Output};

fn qstream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstream"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_prints_registry() {
    let o = qstream(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 10);
    assert!(text.starts_with("q01"));
}

#[test]
fn explain_shows_variant_structure() {
    let fused = stdout(&qstream(&["explain", "pred7", "--fuse"]));
    let chained = stdout(&qstream(&["explain", "pred7"]));
    assert_eq!(fused.matches(".filter(").count(), 1, "{fused}");
    assert_eq!(chained.matches(".filter(").count(), 7, "{chained}");
    let multi = stdout(&qstream(&["explain", "example", "--multi", "--strategy", "cg"]));
    assert!(multi.contains("multi-emit") && multi.contains("groupingByConcurrent"), "{multi}");
    let fusedloop = qstream(&["explain", "q03", "--backend", "imperative"]);
    assert!(fusedloop.status.success());
}

#[test]
fn generated_data_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tpch");
    let out = out.to_str().unwrap();
    assert!(qstream(&["gen-data", "--sf", "0.001", "--seed", "3", "--out", out]).status.success());
    let o = qstream(&["load", "--dir", out]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("lineitem") && text.contains("6000 rows"), "{text}");
}

#[test]
fn verify_and_bench_write_results() {
    let o = qstream(&["verify", "--sf", "0.002", "--query", "q06,distinct"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("ok ").count(), 2);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q06.csv");
    let o = qstream(&[
        "bench", "q06", "--sf", "0.002", "--fuse", "--warmup", "1", "--measure", "2", "--iter-time", "0.02", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# workers: ")));
    assert!(text.contains("query,backend,fuse,multi_emit,strategy,workers,sf_or_param,mean_ms,moe_ms,speedup_vs_baseline"));
    assert!(text.contains("q06,pipeline,true,false,Seq"));
}

#[test]
fn micro_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let o = qstream(&[
        "micro", "distinct", "--n", "2000", "--sweep", "--strategies", "seq,pu", "--warmup", "1", "--measure", "1",
        "--iter-time", "0.01", "--out", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap().lines().filter(|l| l.starts_with("distinct,")).count();
    // D points up to N = 2000: 1, 2, 10, 100, 500; two strategies each.
    assert_eq!(rows, 10);
}

#[test]
fn bad_input_fails_cleanly() {
    let o = qstream(&["explain", "q99"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown query"));
    assert!(!qstream(&["bench", "q06", "--iter-time", "0"]).status.success());
    assert!(!qstream(&["micro", "pred7", "--sweep"]).status.success());
}
