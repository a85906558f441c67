use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conntree::graph::{tree_cost, LabeledTree};
use conntree::io::{load_degrees, load_matrix, read_results, ResultFormat};
use conntree::lb::LBCertificate;

fn conntree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conntree"))
        .args(args)
        .env_remove("CONNTREE_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> (String, String) {
    let prefix = dir.join(name);
    let mut args = vec!["gen", "--out", path(&prefix)];
    args.extend_from_slice(extra);
    let out = conntree(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (
        format!("{}.matrix", path(&prefix)),
        format!("{}.degrees", path(&prefix)),
    )
}

#[test]
fn gen_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--kind", "rank-one", "--n", "50", "--beta", "1", "--seed", "7",
    ];
    let (m1, d1) = gen(dir.path(), "a", &args);
    let (m2, d2) = gen(dir.path(), "b", &args);
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    assert_eq!(fs::read(&d1).unwrap(), fs::read(&d2).unwrap());
    let (m3, _) = gen(
        dir.path(),
        "c",
        &["--kind", "rank-one", "--n", "50", "--seed", "8"],
    );
    assert_ne!(fs::read(&m1).unwrap(), fs::read(&m3).unwrap());
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (flag, _) = gen(
        dir.path(),
        "flag",
        &["--kind", "random", "--n", "10", "--seed", "42"],
    );
    let prefix = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_conntree"))
        .args([
            "gen",
            "--kind",
            "random",
            "--n",
            "10",
            "--out",
            path(&prefix),
        ])
        .env("CONNTREE_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(flag).unwrap(),
        fs::read(dir.path().join("env.matrix")).unwrap()
    );
}

#[test]
fn random_density_follows_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = gen(
        dir.path(),
        "r",
        &[
            "--kind", "random", "--n", "50", "--beta", "2", "--sigma", "0.5", "--seed", "3",
        ],
    );
    let a = load_matrix(m).unwrap();
    let mut nonzero = 0;
    for i in 0..50 {
        for j in 0..i {
            if a.get(i, j) != 0.0 {
                nonzero += 1;
            }
        }
    }
    let pairs: f64 = 50.0 * 49.0 / 2.0;
    let sd = (0.25 / pairs).sqrt();
    assert!(
        (nonzero as f64 / pairs - 0.5).abs() < 4.0 * sd,
        "{nonzero} of {pairs}"
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = conntree(&[
        "gen",
        "--kind",
        "random",
        "--n",
        "1",
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let missing = dir.path().join("missing.matrix");
    let out = conntree(&[
        "lb",
        "--matrix",
        path(&missing),
        "--degrees",
        path(&missing),
        "--out",
        "c.json",
    ]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(conntree(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn lb_on_rank_one_matches_the_best_tree() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = gen(
        dir.path(),
        "r1",
        &["--kind", "rank-one", "--n", "20", "--seed", "11"],
    );
    let out_dir = dir.path().join("heur");
    let out = conntree(&[
        "heur",
        "--matrix",
        &m,
        "--degrees",
        &d,
        "--out-dir",
        path(&out_dir),
        "--n-random",
        "20",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let a = load_matrix(&m).unwrap();
    let degrees = load_degrees(&d).unwrap();
    let mut best = f64::INFINITY;
    for name in ["heur1", "heur2", "bfs"] {
        let tree = LabeledTree::parse_edge_list(
            &fs::read_to_string(out_dir.join(format!("{name}.edges"))).unwrap(),
        )
        .unwrap();
        assert!(tree.matches(&degrees), "{name}");
        best = best.min(tree_cost(&a, &tree).unwrap());
    }
    let cert_path = dir.path().join("cert.json");
    let out = conntree(&[
        "lb",
        "--matrix",
        &m,
        "--degrees",
        &d,
        "--out",
        path(&cert_path),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("lb "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(stdout.contains("cg_rounds") && stdout.contains("mmad_rounds"));
    assert!((best - printed) / best <= 1e-3, "lb {printed}, best {best}");

    let cert = LBCertificate::from_json(&fs::read_to_string(cert_path).unwrap()).unwrap();
    assert_eq!(cert.lb, printed);
    assert!((cert.recompute(&a).unwrap() - printed).abs() <= 1e-9 * printed);
}

#[test]
fn heur_report_recomputes_from_its_costs() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = gen(
        dir.path(),
        "r",
        &[
            "--kind", "random", "--n", "14", "--beta", "1", "--sigma", "0.7", "--seed", "2",
        ],
    );
    let out_dir = dir.path().join("h");
    let out = conntree(&[
        "heur",
        "--matrix",
        &m,
        "--degrees",
        &d,
        "--out-dir",
        path(&out_dir),
        "--format",
        "json",
        "--normalize",
        "--n-random",
        "30",
    ]);
    assert!(out.status.success());
    let rows = read_results(out_dir.join("results.json"), ResultFormat::Json).unwrap();
    assert_eq!(rows.len(), 2);
    let (raw, scaled) = (&rows[0], &rows[1]);
    assert!(!raw.normalized && scaled.normalized);
    let best = raw.heur1.min(raw.heur2).min(raw.bfs);
    assert_eq!(raw.delta_lb, (best - raw.lb) / raw.lb);
    assert_eq!(raw.delta_bfs, (raw.bfs - best) / best);
    assert_eq!(raw.delta_avg, (raw.c_avg - best) / best);
    assert_eq!(raw.delta_lb, scaled.delta_lb);
    let factor = 14.0 * 14.0 * 14f64.ln();
    assert!((scaled.bfs * factor - raw.bfs).abs() <= 1e-12 * raw.bfs);
}

#[test]
fn uniform_flows_close_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = gen(
        dir.path(),
        "b0",
        &[
            "--kind", "random", "--n", "16", "--beta", "0", "--seed", "5",
        ],
    );
    let out_dir = dir.path().join("h");
    let out = conntree(&[
        "heur",
        "--matrix",
        &m,
        "--degrees",
        &d,
        "--out-dir",
        path(&out_dir),
        "--n-random",
        "10",
    ]);
    assert!(out.status.success());
    let rows = read_results(out_dir.join("results.csv"), ResultFormat::Csv).unwrap();
    assert!(rows[0].delta_lb.abs() <= 1e-6, "{:?}", rows[0]);
}

#[test]
fn od_input_draws_degrees_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let od = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/sample_od.csv");
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = conntree(&[
            "heur",
            "--od",
            od,
            "--seed",
            "9",
            "--out-dir",
            path(&out_dir),
            "--n-random",
            "10",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read_to_string(out_dir.join("results.csv")).unwrap()
    };
    let first = run("a");
    assert!(first.contains("sample_od,14,"));
    assert_eq!(first, run("b"));
}

#[test]
fn bench_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = conntree(&[
            "bench",
            "--kind",
            "random",
            "--n",
            "8,10",
            "--beta",
            "0,1",
            "--instances",
            "2",
            "--seed",
            "4",
            "--n-random",
            "10",
            "--workers",
            workers,
            "--out",
            path(&out),
        ]);
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        fs::read_to_string(out).unwrap()
    };
    let one = run("1", "one.csv");
    assert_eq!(one, run("3", "three.csv"));
    assert_eq!(one.lines().count(), 1 + 8);
}

#[test]
fn bench_over_rank_one_instances_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r1.csv");
    let status = conntree(&[
        "bench",
        "--kind",
        "rank-one",
        "--n",
        "12",
        "--instances",
        "4",
        "--seed",
        "1",
        "--n-random",
        "10",
        "--out",
        path(&out),
    ]);
    assert!(status.status.success());
    for row in read_results(&out, ResultFormat::Csv).unwrap() {
        assert!(row.delta_lb <= 1e-3, "{row:?}");
    }
}

#[test]
fn validate_rejects_an_inflated_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = gen(
        dir.path(),
        "v",
        &["--kind", "rank-one", "--n", "10", "--seed", "3"],
    );
    let cert_path = dir.path().join("cert.json");
    assert!(conntree(&[
        "lb",
        "--matrix",
        &m,
        "--degrees",
        &d,
        "--out",
        path(&cert_path)
    ])
    .status
    .success());

    let honest = conntree(&[
        "validate",
        "--seeds",
        "1",
        "--certificate",
        path(&cert_path),
        "--matrix",
        &m,
    ]);
    assert!(
        honest.status.success(),
        "{}",
        String::from_utf8_lossy(&honest.stdout)
    );

    let mut cert = LBCertificate::from_json(&fs::read_to_string(&cert_path).unwrap()).unwrap();
    cert.lb *= 1.2;
    let bad = dir.path().join("bad.json");
    fs::write(&bad, cert.to_json().unwrap()).unwrap();
    let out = conntree(&[
        "validate",
        "--seeds",
        "1",
        "--certificate",
        path(&bad),
        "--matrix",
        &m,
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FAIL lb_soundness"), "{stdout}");
    assert!(stdout.contains("PASS huffman_vs_enumeration"));
}
