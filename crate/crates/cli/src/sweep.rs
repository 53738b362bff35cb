//! Replicated misclustering sweeps over one model axis.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use sbm_core::graph::sample_sbm;
use sbm_core::metrics::misclustered_fraction;
use sbm_core::plfit::{fit_from_spectral, FitOptions};
use sbm_core::seed::derive_seed;
use sbm_core::spectral::spectral_init;

use crate::config::{Loaded, ModelSection, DEFAULT_REPLICATES};
use crate::output::{write_with_header, Meta};
use crate::{with_workers, CliError};

pub const CSV_HEADER: &str =
    "preset,axis_value,method,replicates,mean_error,stderr_error,mean_seconds";
pub const METHODS: [&str; 3] = ["init", "mle", "rmle"];

/// Misclustering fraction and wall time per method, in [`METHODS`] order.
#[derive(Debug, Clone, Copy)]
pub struct Replicate {
    pub errors: [f64; 3],
    pub seconds: [f64; 3],
}

/// One replicate: draw theta, sample, initialize spectrally, then fit both
/// estimators from the same initialization.
pub fn run_replicate(model: &ModelSection, seed: u64) -> Result<Replicate, CliError> {
    let (spec, _) = model.spec(derive_seed(seed, &[0]))?;
    let (g, z) = sample_sbm(&spec, derive_seed(seed, &[1]))?;
    let t = Instant::now();
    let init = spectral_init(&g, model.k, model.tau(), derive_seed(seed, &[2]))?;
    let t_init = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let mle = fit_from_spectral(&g, &init, &FitOptions::mle(derive_seed(seed, &[3])))?;
    let t_mle = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let rmle = fit_from_spectral(&g, &init, &FitOptions::rmle(derive_seed(seed, &[3])))?;
    let t_rmle = t.elapsed().as_secs_f64();
    Ok(Replicate {
        errors: [
            misclustered_fraction(&z, &init.labels)?,
            misclustered_fraction(&z, &mle.labels)?,
            misclustered_fraction(&z, &rmle.labels)?,
        ],
        seconds: [t_init, t_mle, t_rmle],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub preset: String,
    pub axis_value: f64,
    pub method: &'static str,
    pub replicates: usize,
    pub mean_error: f64,
    pub stderr_error: f64,
    pub mean_seconds: f64,
}

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.4}",
            self.preset,
            self.axis_value,
            self.method,
            self.replicates,
            self.mean_error,
            self.stderr_error,
            self.mean_seconds
        )
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Label for the `preset` column: the preset name or the config file stem.
pub fn source_label(loaded: &Loaded) -> String {
    loaded
        .source
        .strip_prefix("preset:")
        .map(str::to_owned)
        .unwrap_or_else(|| {
            Path::new(&loaded.source).file_stem().map_or_else(
                || loaded.source.clone(),
                |s| s.to_string_lossy().into_owned(),
            )
        })
}

/// Runs every (cell, replicate) job and aggregates per cell. Replicate
/// seeds are `derive_seed(master, [cell, replicate])`, so results do not
/// depend on scheduling.
pub fn run(
    loaded: &Loaded,
    replicates: Option<usize>,
    cells: Option<&[usize]>,
    workers: Option<usize>,
) -> Result<Vec<Row>, CliError> {
    let model = loaded.model()?;
    let sweep =
        loaded.config.sweep.as_ref().ok_or_else(|| {
            CliError::Usage(format!("{}: missing [sweep] section", loaded.source))
        })?;
    if sweep.values.is_empty() {
        return Err(CliError::Usage("sweep.values is empty".into()));
    }
    let reps = replicates
        .or(loaded.config.run.replicates)
        .unwrap_or(DEFAULT_REPLICATES);
    if reps == 0 {
        return Err(CliError::Usage("replicates must be at least 1".into()));
    }
    let selected: Vec<usize> = match cells {
        Some(c) => c.to_vec(),
        None => (0..sweep.values.len()).collect(),
    };
    let mut models = Vec::new();
    for &c in &selected {
        let v = *sweep
            .values
            .get(c)
            .ok_or_else(|| CliError::Usage(format!("cell {c} out of range")))?;
        models.push((c, v, model.with_axis(sweep.axis, v)?));
    }
    let master = loaded.config.run.seed;
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..reps).map(move |r| (m, r)))
        .collect();
    let results: Vec<Result<Replicate, CliError>> = with_workers(workers, || {
        jobs.par_iter()
            .map(|&(m, r)| {
                let (cell, _, ref model) = models[m];
                run_replicate(model, derive_seed(master, &[cell as u64, r as u64]))
            })
            .collect()
    })?;
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let label = source_label(loaded);
    let mut rows = Vec::new();
    for (m, (_, value, _)) in models.iter().enumerate() {
        let cell = &results[m * reps..(m + 1) * reps];
        for (j, method) in METHODS.iter().enumerate() {
            let errs: Vec<f64> = cell.iter().map(|r| r.errors[j]).collect();
            let secs: Vec<f64> = cell.iter().map(|r| r.seconds[j]).collect();
            let (mean_error, stderr_error) = mean_stderr(&errs);
            rows.push(Row {
                preset: label.clone(),
                axis_value: *value,
                method,
                replicates: reps,
                mean_error,
                stderr_error,
                mean_seconds: mean_stderr(&secs).0,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, loaded: &Loaded, rows: &[Row]) -> Result<(), CliError> {
    let mut body = format!("{CSV_HEADER}\n");
    for r in rows {
        writeln!(body, "{}", r.csv()).ok();
    }
    let meta = Meta {
        command: "sweep",
        config_sha256: loaded.sha256.clone(),
        seed: loaded.config.run.seed,
    };
    write_with_header(path, &meta, &body)
}
