//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary so the lines are always shown.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use sbm_cli::config::{Loaded, TheorySection};
use sbm_cli::output::body;
use sbm_cli::{sweep, theory_check};
use sbm_core::graph::{planted_theta, sample_sbm, BlockMatrix, Graph, Labeling, SbmSpec};
use sbm_core::likelihood::{
    exhaustive_rmle, log_likelihood, mle_theta, profile_loglik, regularized_profile_loglik,
    rmle_theta, BlockCounts,
};
use sbm_core::plfit::rmle_project;
use sbm_core::seed::{derive_seed, rng_from_seed};
use sbm_core::theory::{bias_gap_kl, lbar, lbar_reg, ProbMatrix};

type Outcome = Result<String, String>;

fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|_| rng.random_bool(p))
        .collect();
    Graph::from_edges(n, edges).unwrap()
}

fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Labeling {
    let labels = (0..n)
        .map(|i| if i < k { i } else { rng.random_range(0..k) })
        .collect();
    Labeling::new(labels, k).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = rng_from_seed(101);
    let z = Labeling::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = random_graph(&mut rng, 6, 0.5);
        let est = mle_theta(&g, &z).map_err(|e| e.to_string())?;
        for (a, b) in [(0, 0), (0, 1), (1, 1)] {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &t in &grid {
                let theta =
                    BlockMatrix::from_upper(2, |x, y| if (x, y) == (a, b) { t } else { 0.5 })
                        .unwrap();
                let l = log_likelihood(&g, &z, &theta).unwrap();
                if l > best.0 {
                    best = (l, t);
                }
            }
            worst = worst.max((est.get(a, b).unwrap() - best.1).abs());
        }
    }
    if worst <= 0.05 + 1e-12 {
        Ok(format!("max |mle - grid| = {worst:.4}"))
    } else {
        Err(format!(
            "max |mle - grid| = {worst:.4} exceeds one grid step"
        ))
    }
}

fn nesting() -> Outcome {
    let mut rng = rng_from_seed(102);
    for i in 0..1000 {
        let n = rng.random_range(4..20);
        let k = rng.random_range(2..6.min(n) + 1);
        let p = rng.random_range(0.02..0.98);
        let g = random_graph(&mut rng, n, p);
        let z = random_labels(&mut rng, n, k);
        let (full, reg) = (
            profile_loglik(&g, &z).unwrap(),
            regularized_profile_loglik(&g, &z).unwrap(),
        );
        if reg > full {
            return Err(format!("instance {i}: {reg} > {full}"));
        }
    }
    Ok("1000 instances".into())
}

fn closed_form_identity() -> Outcome {
    let mut rng = rng_from_seed(103);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(6..30);
        let k = rng.random_range(2..5);
        let p = rng.random_range(0.05..0.9);
        let g = random_graph(&mut rng, n, p);
        let z = random_labels(&mut rng, n, k);
        let projected = rmle_project(mle_theta(&g, &z).unwrap().theta(), &z).unwrap();
        let direct = rmle_theta(&g, &z).unwrap();
        for a in 0..k {
            for b in 0..k {
                if let Some(d) = direct.get(a, b) {
                    worst = worst.max((projected.get(a, b) - d).abs());
                }
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.1e}"))
    }
}

fn theory_sweep() -> Outcome {
    let cfg = TheorySection {
        instances: 200,
        max_n: 30,
        max_k: 4,
        c_const: 1.0,
    };
    let reports = theory_check::run(104, &cfg, None, false).map_err(|e| e.to_string())?;
    match theory_check::first_failure(&reports) {
        Some(msg) => Err(msg),
        None => {
            let triples: usize = reports.iter().map(|r| r.triples).sum();
            Ok(format!("{} instances, {triples} triples", reports.len()))
        }
    }
}

fn bias_gap_behavior() -> Outcome {
    let homo = SbmSpec::balanced(8, 20, planted_theta(8, 0.4, 5.0 / 160.0).unwrap()).unwrap();
    let gap = bias_gap_kl(&ProbMatrix::from_spec(&homo).unwrap(), &homo.labeling()).unwrap();
    if gap != 0.0 {
        return Err(format!("homogeneous gap {gap}"));
    }
    let mut ratios = Vec::new();
    for n in [400usize, 800, 1600] {
        let k = n / 20;
        let out = 5.0 / n as f64;
        let theta = BlockMatrix::from_upper(k, |a, b| match (a, b) {
            _ if a == b => 0.4,
            (0, 1) => 0.3,
            _ => out,
        })
        .unwrap();
        let spec = SbmSpec::balanced(k, 20, theta).unwrap();
        let p = ProbMatrix::from_spec(&spec).unwrap();
        let z = spec.labeling();
        let g = lbar(&p, &z).unwrap() - lbar_reg(&p, &z).unwrap();
        ratios.push(g / p.expected_edges());
    }
    let text = format!(
        "gap/M = {:.5} > {:.5} > {:.5}",
        ratios[0], ratios[1], ratios[2]
    );
    if ratios.windows(2).all(|w| w[1] < w[0]) {
        Ok(text)
    } else {
        Err(text)
    }
}

fn run_sweep(preset: &str, cells: &[usize]) -> Result<Vec<sweep::Row>, String> {
    let loaded = Loaded::from_preset(preset).map_err(|e| e.to_string())?;
    sweep::run(&loaded, Some(50), Some(cells), None).map_err(|e| e.to_string())
}

fn mean_of(rows: &[sweep::Row], value: f64, method: &str) -> f64 {
    rows.iter()
        .find(|r| r.axis_value == value && r.method == method)
        .map(|r| r.mean_error)
        .expect("row present")
}

fn figure1_trend() -> Outcome {
    // Cells 0, 1 and 3 of the preset are K = 10, 20, 40.
    let rows = run_sweep("figure1", &[0, 1, 3])?;
    let mut notes = Vec::new();
    let mut ok = true;
    for k in [10.0, 20.0, 40.0] {
        let (init, mle, rmle) = (
            mean_of(&rows, k, "init"),
            mean_of(&rows, k, "mle"),
            mean_of(&rows, k, "rmle"),
        );
        ok &= rmle <= init && mle <= init && rmle <= mle + 0.02;
        notes.push(format!("K={k}: init {init:.4} mle {mle:.4} rmle {rmle:.4}"));
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn figure2_direction() -> Outcome {
    // Cells 0 and 8 of the preset are p = 0.05 and p = 1.
    let rows = run_sweep("figure2-bernoulli", &[0, 8])?;
    let (m1, r1) = (mean_of(&rows, 1.0, "mle"), mean_of(&rows, 1.0, "rmle"));
    let (m0, r0) = (mean_of(&rows, 0.05, "mle"), mean_of(&rows, 0.05, "rmle"));
    let text = format!("p=1: mle {m1:.4} rmle {r1:.4}; p=0.05: mle {m0:.4} rmle {r0:.4}");
    if m1 - r1 >= 0.0 && m0 <= r0 + 0.02 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn sampler_statistics() -> Outcome {
    let theta =
        BlockMatrix::from_rows(&[&[0.5, 0.1, 0.02], &[0.1, 0.3, 0.2], &[0.02, 0.2, 0.7]]).unwrap();
    let spec = SbmSpec::new(vec![8, 12, 10], theta).unwrap();
    let mut edges = [0usize; 9];
    for r in 0..500 {
        let (g, z) = sample_sbm(&spec, derive_seed(108, &[r])).unwrap();
        let c = BlockCounts::new(&g, &z).unwrap();
        for a in 0..3 {
            for b in a..3 {
                edges[a * 3 + b] += c.edges(a, b);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in a..3 {
            let t = spec.theta.get(a, b);
            let trials = (500 * spec.pair_count(a, b)) as f64;
            let z = (edges[a * 3 + b] as f64 / trials - t).abs() / (t * (1.0 - t) / trials).sqrt();
            worst = worst.max(z);
        }
    }
    if worst <= 4.0 {
        Ok(format!("max |z| = {worst:.2}"))
    } else {
        Err(format!("max |z| = {worst:.2}"))
    }
}

fn exhaustive_recovery() -> Outcome {
    let spec = SbmSpec::balanced(2, 5, planted_theta(2, 0.9, 0.05).unwrap()).unwrap();
    let hits = (0..100)
        .filter(|&s| {
            let (g, z) = sample_sbm(&spec, derive_seed(109, &[s])).unwrap();
            exhaustive_rmle(&g, 2).unwrap().same_partition(&z)
        })
        .count();
    if hits >= 80 {
        Ok(format!("{hits}/100 recovered"))
    } else {
        Err(format!("{hits}/100 recovered"))
    }
}

fn sbm(args: &[&str], workers: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbm"));
    cmd.args(args).env_remove(sbm_cli::WORKERS_ENV);
    if let Some(w) = workers {
        cmd.env(sbm_cli::WORKERS_ENV, w);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "sbm {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// CSV body with the timing column dropped; timings are the only
/// nondeterministic values in a sweep.
fn sweep_body(path: &Path) -> String {
    body(&std::fs::read_to_string(path).unwrap())
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_owned() + "\n")
        .collect()
}

fn read_body(path: &Path) -> String {
    body(&std::fs::read_to_string(path).unwrap())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |name: &str| -> PathBuf { dir.path().join(name) };
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let mut checked = 0;

    for run in ["a", "b"] {
        sbm(
            &[
                "sample",
                "--preset",
                "figure1",
                "--out-dir",
                &s(d(&format!("sample_{run}"))),
            ],
            None,
        )?;
    }
    for f in ["graph.edges", "labels.txt", "theta.csv", "meta.txt"] {
        checked += 1;
        if read_body(&d("sample_a").join(f)) != read_body(&d("sample_b").join(f)) {
            return Err(format!("sample {f} differs"));
        }
    }

    let graph = s(d("sample_a").join("graph.edges"));
    let truth = s(d("sample_a").join("labels.txt"));
    for run in ["a", "b"] {
        let out = s(d(&format!("fit_{run}")));
        sbm(
            &[
                "fit",
                "--graph",
                &graph,
                "--k",
                "10",
                "--truth",
                &truth,
                "--dump-embedding",
                "--out-dir",
                &out,
            ],
            None,
        )?;
    }
    for entry in std::fs::read_dir(d("fit_a")).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        checked += 1;
        if read_body(&d("fit_a").join(&name)) != read_body(&d("fit_b").join(&name)) {
            return Err(format!("fit {name:?} differs"));
        }
    }

    let mut sweeps = Vec::new();
    let mut theories = Vec::new();
    for w in ["1", "3"] {
        let out = d(&format!("sweep_{w}.csv"));
        sbm(
            &[
                "sweep",
                "--preset",
                "figure2-gamma",
                "--replicates",
                "3",
                "--cells",
                "0,4",
                "--out",
                &s(out.clone()),
            ],
            Some(w),
        )?;
        sweeps.push(sweep_body(&out));
        let out = d(&format!("theory_{w}.csv"));
        sbm(
            &[
                "theory-check",
                "--instances",
                "60",
                "--workers",
                w,
                "--out",
                &s(out.clone()),
            ],
            None,
        )?;
        theories.push(read_body(&out));
    }
    checked += 2;
    if sweeps[0] != sweeps[1] {
        return Err("sweep differs across worker counts".into());
    }
    if theories[0] != theories[1] {
        return Err("theory-check differs across worker counts".into());
    }
    Ok(format!(
        "{checked} outputs identical across reruns and worker counts 1/3"
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    // `cargo test -- <filter>` passes extra args; this target has one case.
    let criteria = [
        Criterion {
            id: 1,
            name: "oracle equivalence",
            limit: Duration::from_secs(10),
            run: oracle_equivalence,
        },
        Criterion {
            id: 2,
            name: "nesting inequality",
            limit: Duration::from_secs(10),
            run: nesting,
        },
        Criterion {
            id: 3,
            name: "closed-form identity",
            limit: Duration::from_secs(10),
            run: closed_form_identity,
        },
        Criterion {
            id: 4,
            name: "theory sweep",
            limit: Duration::from_secs(60),
            run: theory_sweep,
        },
        Criterion {
            id: 5,
            name: "bias-gap behavior",
            limit: Duration::from_secs(30),
            run: bias_gap_behavior,
        },
        Criterion {
            id: 6,
            name: "figure-1 trend",
            limit: Duration::from_secs(20 * 60),
            run: figure1_trend,
        },
        Criterion {
            id: 7,
            name: "figure-2 direction",
            limit: Duration::from_secs(15 * 60),
            run: figure2_direction,
        },
        Criterion {
            id: 8,
            name: "sampler statistics",
            limit: Duration::from_secs(30),
            run: sampler_statistics,
        },
        Criterion {
            id: 9,
            name: "exhaustive recovery",
            limit: Duration::from_secs(5 * 60),
            run: exhaustive_recovery,
        },
        Criterion {
            id: 10,
            name: "determinism",
            limit: Duration::MAX,
            run: determinism,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > c.limit {
            outcome = Err(format!(
                "took {:.1}s, limit {}s",
                elapsed.as_secs_f64(),
                c.limit.as_secs()
            ));
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {:>2} {}: {detail} [{:.1}s]",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
