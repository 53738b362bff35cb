use std::fmt::Write as _;
use std::path::Path;

use sbm_core::graph::{sample_sbm, BlockMatrix};
use sbm_core::io::{write_edge_list, write_labels};
use sbm_core::seed::derive_seed;

use crate::config::Loaded;
use crate::output::{ensure_dir, write_with_header, Meta};
use crate::CliError;

pub fn theta_csv(theta: &BlockMatrix) -> String {
    let k = theta.k();
    let mut out = String::new();
    for a in 0..k {
        let row: Vec<String> = (0..k).map(|b| theta.get(a, b).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes `graph.edges`, `labels.txt`, `theta.csv` and `meta.txt` into
/// `out_dir`.
pub fn run(loaded: &Loaded, out_dir: &Path) -> Result<(), CliError> {
    let model = loaded.model()?;
    let seed = loaded.config.run.seed;
    let (spec, clamped) = model.spec(derive_seed(seed, &[0]))?;
    let (g, z) = sample_sbm(&spec, derive_seed(seed, &[1]))?;
    ensure_dir(out_dir)?;
    let meta = Meta {
        command: "sample",
        config_sha256: loaded.sha256.clone(),
        seed,
    };

    let mut buf = Vec::new();
    write_edge_list(&mut buf, &g)?;
    write_with_header(
        &out_dir.join("graph.edges"),
        &meta,
        &String::from_utf8_lossy(&buf),
    )?;
    buf.clear();
    write_labels(&mut buf, &z)?;
    write_with_header(
        &out_dir.join("labels.txt"),
        &meta,
        &String::from_utf8_lossy(&buf),
    )?;
    write_with_header(&out_dir.join("theta.csv"), &meta, &theta_csv(&spec.theta))?;

    let mut info = String::new();
    writeln!(info, "n={}", g.n()).ok();
    writeln!(info, "k={}", spec.k()).ok();
    writeln!(info, "edges={}", g.edge_count()).ok();
    writeln!(info, "clamped={clamped}").ok();
    write_with_header(&out_dir.join("meta.txt"), &meta, &info)?;
    println!(
        "sampled n={} edges={} -> {}",
        g.n(),
        g.edge_count(),
        out_dir.display()
    );
    Ok(())
}
