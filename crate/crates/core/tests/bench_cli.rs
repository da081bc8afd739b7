use std::path::Path;
use std::process::{Command, Output};

use hetpar::bench::{parse_json, render_json, run_bench, BenchConfig, Experiment, Shape};
use hetpar::{CoreSet, Pinning, TimingClock};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetpar-bench"))
        .args(args)
        .env_remove("HETPAR_CORES")
        .output()
        .expect("spawn hetpar-bench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn success_writes_csv_with_expected_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = bench(&[
        "gemm", "--shape", "4x64x32", "--cores", "0,1", "--iters", "4", "--warmup", "1",
        "--pinning", "off", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("output checksum"));
    let text = read(&out);
    assert!(text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "iteration,mode,makespan_s,core_0_elapsed_s,core_1_elapsed_s,core_0_units,core_1_units,core_0_ratio,core_1_ratio"
    );
    assert_eq!(lines.len(), 4);
    for (i, row) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 2 + 1 + 2 + 2 + 2);
        assert_eq!(f[0], (i + 1).to_string());
        assert_eq!(f[1], "dynamic");
        let units: usize = f[5].parse::<usize>().unwrap() + f[6].parse::<usize>().unwrap();
        assert_eq!(units, 64);
        for v in &f[2..] {
            v.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn config_errors_exit_2() {
    let cases: &[&[&str]] = &[
        &["gemm", "--shape", "4x0x8", "--cores", "0"],
        &["gemm", "--shape", "banana", "--cores", "0"],
        &["gemm", "--iters", "3", "--warmup", "3", "--cores", "0"],
        &["gemm", "--cores", "0,1,2,3", "--emulate", "1,1"],
        &["gemm", "--cores", "0,,1"],
        &["gemv", "--shape", "1x64x33", "--cores", "0"],
        &["gemm", "--alpha", "1.5", "--cores", "0"],
        &["frobnicate"],
        &["gemm", "--no-such-flag"],
    ];
    for args in cases {
        let o = bench(args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing_dir = dir.path().join("nope").join("r.csv");
    let missing_weights = dir.path().join("absent.q40");
    let cases: Vec<Vec<&str>> = vec![
        vec!["gemm", "--shape", "2x8x8", "--cores", "0,4095", "--pinning", "strict"],
        vec![
            "gemm", "--shape", "2x8x8", "--cores", "0", "--iters", "2", "--warmup", "0",
            "--out", missing_dir.to_str().unwrap(),
        ],
        vec!["gemv", "--cores", "0", "--weights", missing_weights.to_str().unwrap()],
    ];
    for args in &cases {
        let o = bench(args);
        assert_eq!(code(&o), 3, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn json_report_round_trips() {
    let mut config = BenchConfig::new(Experiment::Compare, CoreSet::first_n(2).unwrap());
    config.pinning = Pinning::Off;
    config.shape = Shape { m: 2, n: 32, k: 16 };
    config.iterations = 4;
    config.warmup = 1;
    config.emulation = Some("1,2".into());
    let r = run_bench(&config).unwrap();
    assert_eq!(r.records.len(), 6);
    let text = render_json(&r);
    assert!(text.ends_with('\n'));
    assert_eq!(parse_json(&text).unwrap(), r);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = bench(&[
        "compare", "--shape", "2x32x16", "--cores", "0,1", "--iters", "4", "--warmup", "1",
        "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let parsed = parse_json(&read(&out)).unwrap();
    assert_eq!(parse_json(&render_json(&parsed)).unwrap(), parsed);
    assert!(parsed.summary.unwrap().speedup.is_some());
}

#[test]
fn trace_ratios_stabilize_under_constant_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = bench(&[
        "trace", "--kernel", "gemm", "--shape", "128x1024x512", "--cores", "0,1,2,3",
        "--emulate", "1,1,3,3", "--clock", "auto", "--iters", "30", "--warmup", "0",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iteration,kernel_class,core_0,core_1,core_2,core_3");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() >= 20, "only {} updates", rows.len());
    let tail = &rows[rows.len() - 10..];
    for c in 0..4 {
        let v: Vec<f64> = tail.iter().map(|r| r[c]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(sd / mean <= 0.05, "core {c}: cv {} over {v:?}", sd / mean);
    }
}

#[test]
fn gemv_bandwidth_is_physically_plausible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gemv.json");
    let o = bench(&[
        "gemv", "--shape", "1x4096x4096", "--iters", "4", "--warmup", "1", "--format", "json",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = parse_json(&read(&out)).unwrap();
    let bw = r.summary.unwrap().modes[0].bandwidth_bytes_per_s.unwrap();
    // Well above any desktop or server memory system.
    assert!(bw > 0.0 && bw < 2e12, "bandwidth {bw}");
}

#[test]
fn cores_default_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_hetpar-bench"))
        .args(["copy", "--shape", "1x8x8", "--iters", "2", "--warmup", "0", "--pinning", "off"])
        .args(["--out", out.to_str().unwrap()])
        .env("HETPAR_CORES", "0,1,2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&out).lines().next().unwrap().ends_with("core_2_ratio"));

    let bad = Command::new(env!("CARGO_BIN_EXE_hetpar-bench"))
        .args(["copy", "--shape", "1x8x8"])
        .env("HETPAR_CORES", "0,x")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

fn checksum(path: &Path) -> String {
    parse_json(&read(path)).unwrap().summary.unwrap().output_checksum
}

#[test]
fn saved_weights_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.q40");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let common = ["gemv", "--shape", "1x64x128", "--cores", "0,1", "--iters", "2", "--warmup", "0", "--format", "json", "--seed", "9"];
    let o = bench(&[&common[..], &["--save-weights", w.to_str().unwrap(), "--out", a.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::metadata(&w).unwrap().len(), 12 + 64 * 4 * 18);
    let o = bench(&[&common[..], &["--weights", w.to_str().unwrap(), "--out", b.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(checksum(&a), checksum(&b));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let run = |cores: &str| {
        let mut c = BenchConfig::new(Experiment::Gemm, cores.parse().unwrap());
        c.pinning = Pinning::Off;
        c.clock = TimingClock::for_workers(c.cores.len());
        c.shape = Shape { m: 3, n: 40, k: 24 };
        c.iterations = 3;
        c.warmup = 0;
        c.seed = 1234;
        run_bench(&c).unwrap().summary.unwrap().output_checksum
    };
    assert_eq!(run("0"), run("0,1,2"));
}
