use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sbm_cli::output::body;

fn sbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbm"))
        .args(args)
        .env_remove(sbm_cli::WORKERS_ENV)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_lines(p: &Path) -> Vec<String> {
    body(&fs::read_to_string(p).unwrap())
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn sample_figure1_has_200_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbm(&[
        "sample",
        "--preset",
        "figure1",
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(out.status.success());
    assert_eq!(data_lines(&dir.path().join("graph.edges"))[0], "n=200");
    assert_eq!(data_lines(&dir.path().join("labels.txt")).len(), 200);
    let text = fs::read_to_string(dir.path().join("graph.edges")).unwrap();
    assert!(text.starts_with("# tool=sbm "));
    assert!(text.contains("# config_sha256="));
    assert!(text.contains("# master_seed=20120601"));
}

#[test]
fn zero_theta_gives_empty_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    fs::write(
        &cfg,
        "[run]\nseed = 3\n[model]\ngenerator = \"planted\"\nk = 3\nblock_size = 4\ntheta_in = 0.0\nout_degree = 0.0\n",
    )
    .unwrap();
    let out = sbm(&[
        "sample",
        "--config",
        path(&cfg),
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(out.status.success());
    assert_eq!(data_lines(&dir.path().join("graph.edges")), vec!["n=12"]);
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "[run]\nseed = 3\n[model]\ngenerator = \"planted\"\nk = x\n",
    )
    .unwrap();
    let out = sbm(&[
        "sample",
        "--config",
        path(&cfg),
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
    assert_eq!(
        sbm(&["sample", "--preset", "nope", "--out-dir", path(dir.path())])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sbm(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn fit_two_cliques_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let mut edges = String::from("n=20\n");
    let mut labels = String::new();
    for c in 0..2 {
        for i in 0..10 {
            labels.push_str(&format!("{}\n", c + 1));
            for j in (i + 1)..10 {
                edges.push_str(&format!("{} {}\n", c * 10 + i + 1, c * 10 + j + 1));
            }
        }
    }
    let g = dir.path().join("g.edges");
    let t = dir.path().join("truth.txt");
    fs::write(&g, edges).unwrap();
    fs::write(&t, labels).unwrap();
    let out_dir = dir.path().join("fit");
    let out = sbm(&[
        "fit",
        "--graph",
        path(&g),
        "--k",
        "2",
        "--truth",
        path(&t),
        "--regularized",
        "--plain",
        "--dump-embedding",
        "--out-dir",
        path(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for m in ["mle", "rmle"] {
        let summary = data_lines(&out_dir.join(format!("{m}_summary.txt")));
        assert!(
            summary.contains(&"misclustered_fraction=0".to_owned()),
            "{summary:?}"
        );
        assert_eq!(data_lines(&out_dir.join(format!("{m}.labels"))).len(), 20);
        assert_eq!(data_lines(&out_dir.join(format!("{m}_theta.csv"))).len(), 2);
    }
    let emb = data_lines(&out_dir.join("embedding.csv"));
    assert_eq!(emb.len(), 20);
    assert!(emb.iter().all(|l| l.split(',').count() == 2));

    let only = dir.path().join("only");
    assert!(sbm(&[
        "fit",
        "--graph",
        path(&g),
        "--k",
        "2",
        "--regularized",
        "--out-dir",
        path(&only)
    ])
    .status
    .success());
    assert!(only.join("rmle.labels").exists() && !only.join("mle.labels").exists());

    let missing = sbm(&[
        "fit",
        "--graph",
        "/nonexistent.edges",
        "--k",
        "2",
        "--out-dir",
        path(&only),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn single_cell_single_replicate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let res = sbm(&[
        "sweep",
        "--preset",
        "figure1",
        "--replicates",
        "1",
        "--cells",
        "0",
        "--out",
        path(&out),
    ]);
    assert!(res.status.success());
    let lines = data_lines(&out);
    assert_eq!(lines[0], sbm_cli::sweep::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    for (line, method) in lines[1..].iter().zip(["init", "mle", "rmle"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(
            (f[0], f[1], f[2], f[3], f[5]),
            ("figure1", "10", method, "1", "0.000000")
        );
    }
}

#[test]
fn invalid_axis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("axis.toml");
    fs::write(
        &cfg,
        "[run]\nseed = 1\n[model]\ngenerator = \"planted\"\nk = 4\nblock_size = 5\ntheta_in = 0.4\nout_degree = 2.0\n[sweep]\naxis = \"alpha\"\nvalues = [0.2]\n",
    )
    .unwrap();
    let out = sbm(&[
        "sweep",
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theory_check_rows_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let ok = sbm(&["theory-check", "--out", path(&out)]);
    assert!(ok.status.success());
    let lines = data_lines(&out);
    assert_eq!(lines.len(), 201);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));

    let bad = sbm(&[
        "theory-check",
        "--instances",
        "10",
        "--inject-fault",
        "--out",
        path(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("seed "));
}
