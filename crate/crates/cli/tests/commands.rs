use std::fs;

use ampsched_cli::app::{bench_config, run_cli, Cli};
use ampsched_cli::bench::measure;
use ampsched_cli::files::{cmd_trace, summarize};
use ampsched_cli::simulate::CostKind;
use ampsched_cli::{cmd_bench, cmd_dag, cmd_simulate, BenchConfig, BenchRow, CliError, SimRow, SimulateConfig};
use ampsched_core::runtime::default_workers;
use ampsched_core::{build_cholesky_dag, make_spd, run, BlockedMatrix, Policy, PolicyKind, RunOptions, Trace};
use clap::Parser;

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("ampsched").chain(args.iter().copied())).unwrap()
}

#[test]
fn bench_single_point() {
    let cfg = BenchConfig { workers: 1, repetitions: 1, ..BenchConfig::new(256, 64, Policy::oblivious()) };
    let rows = cmd_bench(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].row, "run");
    assert!(rows[0].residual <= 1e-13, "{}", rows[0].residual);
}

#[test]
fn bench_sweep_adds_best_row() {
    let cfg = BenchConfig { bs: vec![64, 128], repetitions: 1, ..BenchConfig::new(256, 64, Policy::oblivious()) };
    let rows = cmd_bench(&cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.row).collect::<Vec<_>>(), ["run", "run", "best"]);
    let best = rows[..2].iter().max_by(|a, b| a.gflops.total_cmp(&b.gflops)).unwrap();
    assert_eq!(rows[2].b, best.b);
}

#[test]
fn bench_rate_formula() {
    let cfg = BenchConfig { repetitions: 2, ..BenchConfig::new(64, 64, Policy::oblivious()) };
    let r = &cmd_bench(&cfg).unwrap()[0];
    let expect = 64f64.powi(3) / 3.0 / r.seconds_min / 1e9;
    assert!((r.gflops - expect).abs() <= 1e-9 * expect);
}

#[test]
fn bench_reports_min_of_exactly_r_runs() {
    for reps in [1, 4] {
        let cfg = BenchConfig { repetitions: reps, ..BenchConfig::new(128, 32, Policy::new(PolicyKind::Cats)) };
        let m = measure(&BenchConfig { workers: 2, ..cfg }, 128, 32).unwrap();
        assert_eq!(m.seconds.len(), reps);
        assert_eq!(m.seconds_min(), m.seconds.iter().copied().fold(f64::MAX, f64::min));
    }
}

#[test]
fn bench_flop_accounting_is_monotonic() {
    let cfg = BenchConfig { ns: vec![64, 128, 256], repetitions: 1, ..BenchConfig::new(64, 32, Policy::oblivious()) };
    let rows = cmd_bench(&cfg).unwrap();
    // Same time, larger n: strictly more flops per second.
    let rate = |n: usize| ampsched_core::runtime::gflops(n, 1.0).unwrap();
    assert!(rate(64) < rate(128) && rate(128) < rate(256));
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r.gflops > 0.0 && r.gflops.is_finite());
    }
}

#[test]
fn bench_residual_failure_is_verification_error() {
    let cfg = BenchConfig { tolerance: 1e-300, repetitions: 1, ..BenchConfig::new(64, 32, Policy::oblivious()) };
    let err = cmd_bench(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Verification(_)), "{err}");
    assert_ne!(err.exit_code(), 0);
}

#[test]
fn invalid_bench_config() {
    for cfg in [
        BenchConfig::new(64, 128, Policy::oblivious()),
        BenchConfig { repetitions: 0, ..BenchConfig::new(64, 32, Policy::oblivious()) },
        BenchConfig { workers: 0, ..BenchConfig::new(64, 32, Policy::oblivious()) },
    ] {
        let err = cmd_bench(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn config_file_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.cfg");
    fs::write(&path, "n = 128\nb = 32,64\nworkers = 3\nreps = 5\npolicy = cats\n").unwrap();
    let p = path.to_str().unwrap();

    let Cli { command: ampsched_cli::app::Command::Bench(args) } =
        parse(&["bench", "--config", p, "--workers", "2", "--b", "16"])
    else {
        panic!("not bench")
    };
    let (cfg, _) = bench_config(&args, None).unwrap();
    assert_eq!((cfg.ns.clone(), cfg.bs.clone(), cfg.workers, cfg.repetitions), (vec![128], vec![16], 2, 5));
    assert_eq!(cfg.policy.kind, PolicyKind::Cats);
    let (cfg, _) = bench_config(&args, Some("7")).unwrap();
    assert_eq!(cfg.workers, 7);
    assert!(bench_config(&args, Some("many")).is_err());

    fs::write(&path, "n = 128\nbogus = 1\n").unwrap();
    let err = bench_config(&args, None).unwrap_err().to_string();
    assert!(err.contains(":2"), "{err}");
}

#[test]
fn bench_cli_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let cli = parse(&[
        "bench",
        "--n",
        "128",
        "--b",
        "32,64",
        "--reps",
        "1",
        "--workers",
        "2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    run_cli(cli, None).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], BenchRow::HEADER.join(","));
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("best,128,"));
}

#[test]
fn simulate_vc_row() {
    let rows = cmd_simulate(&SimulateConfig::new(6144, 448, vec![Policy::vc()])).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].makespan_ns > 0);
    assert_eq!(rows[0].view, "vc");
    assert_eq!(rows[0].tasks, 560);
}

#[test]
fn simulate_three_policies_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("t.json");
    let cfg = SimulateConfig {
        trace: Some(base.clone()),
        cost: CostKind::Flops,
        ..SimulateConfig::new(1024, 256, PolicyKind::ALL.map(Policy::new).to_vec())
    };
    let rows = cmd_simulate(&cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.policy.as_str()).collect::<Vec<_>>(), ["oblivious", "cats", "vc"]);
    for r in &rows {
        assert!(r.makespan_ns as f64 >= r.bound_ns - 1.0);
        let t =
            Trace::from_json(&fs::read_to_string(dir.path().join(format!("t.{}.json", r.policy))).unwrap()).unwrap();
        assert_eq!(t.makespan_ns(), r.makespan_ns);
        t.check(&build_cholesky_dag(4).unwrap()).unwrap();
    }
}

#[test]
fn simulate_rejects_mismatched_view() {
    let cfg =
        SimulateConfig { view: Some(ampsched_core::View::Gts), ..SimulateConfig::new(896, 448, vec![Policy::vc()]) };
    assert!(cmd_simulate(&cfg).is_err());
    let cli = parse(&["simulate", "--n", "896", "--b", "448", "--machine", "pi4"]);
    assert_eq!(run_cli(cli, None).unwrap_err().exit_code(), 2);
}

#[test]
fn simulate_external_dag_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (dot, json, csv) = (dir.path().join("g.dot"), dir.path().join("g.json"), dir.path().join("s.csv"));
    cmd_dag(3, &dot, Some(&json)).unwrap();
    let cli = parse(&[
        "simulate",
        "--n",
        "1344",
        "--b",
        "448",
        "--policy",
        "cats",
        "--dag",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    run_cli(cli, None).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), SimRow::HEADER.join(","));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn dag_export_has_twenty_nodes_for_s4() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    assert_eq!(cmd_dag(4, &dot, None).unwrap(), 20);
    let text = fs::read_to_string(&dot).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("[label=")).count(), 20);
}

#[test]
fn one_task_trace_has_no_idle() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.json");
    fs::write(&input, r#"[{"worker":0,"task":0,"kind":"C","k":0,"i":0,"j":0,"start_ns":500,"end_ns":1500}]"#).unwrap();
    let (rows, kinds) = cmd_trace(&input, &dir.path().join("s.csv"), &dir.path().join("k.csv"), None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].idle_pct, 0.0);
    assert_eq!(kinds[0].mean_ms, 1e-3);
    let text = fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert_eq!(text, "worker,kind,count,mean_ms\n0,C,1,0.001\n");
}

#[test]
fn trace_parse_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.json");
    fs::write(&input, "[\n{\"worker\": 0,\n oops}]").unwrap();
    let err = cmd_trace(&input, &dir.path().join("s"), &dir.path().join("k"), None).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn runtime_trace_round_trip() {
    let workers = 4;
    let a = make_spd(256, 9).unwrap();
    let g = build_cholesky_dag(4).unwrap();
    let ws = default_workers(PolicyKind::Oblivious, workers);
    let (_, trace) =
        run(&g, BlockedMatrix::partition(&a, 64).unwrap(), &Policy::oblivious(), &ws, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.json");
    fs::write(&input, trace.to_json()).unwrap();
    let cli = parse(&[
        "trace",
        "--in",
        input.to_str().unwrap(),
        "--summary",
        dir.path().join("s.csv").to_str().unwrap(),
        "--workers",
        "4",
    ]);
    run_cli(cli, None).unwrap();
    let summary = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + workers);
    assert!(dir.path().join("s.kinds.csv").exists());
    let direct = summarize(&Trace::new(workers, trace.events.clone())).unwrap();
    assert_eq!(direct.iter().map(|r| r.tasks).sum::<usize>(), g.len());
}
