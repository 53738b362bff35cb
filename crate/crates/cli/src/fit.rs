use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sbm_core::graph::Labeling;
use sbm_core::io::{read_edge_list, read_labels, write_labels};
use sbm_core::metrics::misclustering;
use sbm_core::plfit::{fit_from_spectral, FitOptions, FitResult};
use sbm_core::seed::derive_seed;
use sbm_core::spectral::{spectral_init, EmbeddingMatrix, Tau};

use crate::config::sha256_hex;
use crate::output::{ensure_dir, write_with_header, Meta};
use crate::sample::theta_csv;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub graph: PathBuf,
    pub k: usize,
    pub truth: Option<PathBuf>,
    pub regularized: bool,
    pub plain: bool,
    pub dump_embedding: bool,
    pub tau: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn bad_input(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn embedding_csv(e: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    for i in 0..e.rows() {
        let row: Vec<String> = e.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn labels_text(z: &Labeling) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_labels(&mut buf, z)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

fn summary(
    name: &str,
    z: &Labeling,
    truth: Option<&Labeling>,
    fit: Option<&FitResult>,
) -> Result<String, CliError> {
    let mut s = String::new();
    writeln!(s, "method={name}").ok();
    writeln!(s, "k={}", z.k()).ok();
    writeln!(s, "nonempty_blocks={}", z.nonempty_blocks()).ok();
    if let Some(f) = fit {
        writeln!(s, "converged={}", f.converged).ok();
        writeln!(s, "iterations={}", f.iterations).ok();
        writeln!(s, "reseed_events={}", f.reseed_events.len()).ok();
        if let Some(obj) = f.trace.last() {
            writeln!(s, "objective={obj}").ok();
        }
        let mix: Vec<String> = f.mixing.iter().map(|v| v.to_string()).collect();
        writeln!(s, "mixing={}", mix.join(",")).ok();
    }
    if let Some(t) = truth {
        let m = misclustering(t, z)?;
        writeln!(s, "misclustered={}", m.count).ok();
        writeln!(s, "misclustered_fraction={}", m.count as f64 / z.n() as f64).ok();
        writeln!(s, "tied_classes={}", m.tied_classes).ok();
    }
    Ok(s)
}

/// Spectral initialization followed by the selected fits. With neither
/// `regularized` nor `plain` set, both run.
pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let g = read_edge_list(open(&args.graph)?).map_err(|e| bad_input(&args.graph, e))?;
    let truth = match &args.truth {
        Some(p) => {
            let z = read_labels(open(p)?, None).map_err(|e| bad_input(p, e))?;
            if z.n() != g.n() {
                return Err(bad_input(
                    p,
                    format!("{} labels for {} nodes", z.n(), g.n()),
                ));
            }
            Some(z)
        }
        None => None,
    };
    if args.k == 0 || args.k > g.n() {
        return Err(CliError::Usage(format!(
            "k = {} must be in 1..={}",
            args.k,
            g.n()
        )));
    }
    ensure_dir(&args.out_dir)?;
    let invocation = format!(
        "graph={} k={} tau={:?} regularized={} plain={}",
        std::fs::read(&args.graph)
            .map(|b| sha256_hex(&b))
            .unwrap_or_default(),
        args.k,
        args.tau,
        args.regularized,
        args.plain
    );
    let meta = Meta {
        command: "fit",
        config_sha256: sha256_hex(invocation.as_bytes()),
        seed: args.seed,
    };
    let out = |name: &str, body: &str| write_with_header(&args.out_dir.join(name), &meta, body);

    let tau = args.tau.map_or(Tau::Auto, Tau::Value);
    let init = spectral_init(&g, args.k, tau, derive_seed(args.seed, &[2]))?;
    out("init.labels", &labels_text(&init.labels)?)?;
    out(
        "init_summary.txt",
        &summary("init", &init.labels, truth.as_ref(), None)?,
    )?;
    if args.dump_embedding {
        out("embedding.csv", &embedding_csv(&init.embedding))?;
    }

    let both = !args.regularized && !args.plain;
    let mut methods = Vec::new();
    if args.plain || both {
        methods.push(("mle", FitOptions::mle(derive_seed(args.seed, &[3]))));
    }
    if args.regularized || both {
        methods.push(("rmle", FitOptions::rmle(derive_seed(args.seed, &[3]))));
    }
    for (name, opts) in methods {
        let f = fit_from_spectral(&g, &init, &opts)?;
        out(&format!("{name}.labels"), &labels_text(&f.labels)?)?;
        out(&format!("{name}_theta.csv"), &theta_csv(&f.theta))?;
        let mut trace = String::from("iteration,objective\n");
        for (i, v) in f.trace.iter().enumerate() {
            writeln!(trace, "{},{v}", i + 1).ok();
        }
        out(&format!("{name}_trace.csv"), &trace)?;
        let s = summary(name, &f.labels, truth.as_ref(), Some(&f))?;
        out(&format!("{name}_summary.txt"), &s)?;
        print!("{s}");
    }
    Ok(())
}
