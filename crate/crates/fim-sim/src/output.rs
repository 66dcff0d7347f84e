//! Artifact emission: an aggregated CSV table plus a JSON sidecar that
//! embeds the fully-resolved configuration and the raw per-trial records,
//! so every artifact can be re-run verbatim. Convergence runs instead emit
//! one per-iteration CSV per scheme.

use crate::runner::ExperimentResult;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("encoding results: {0}")]
    Json(#[from] serde_json::Error),
}

/// Writes the run's artifacts into `dir` (created if missing) and returns
/// the paths written. Sweep runs produce `sweep.csv` and `results.json`;
/// convergence runs produce only `convergence_<scheme>.csv` files. All
/// numeric formatting is fixed-width, so identical results yield
/// byte-identical files.
pub fn emit_results(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    if result.config.is_convergence_run() {
        for &scheme in &result.config.run.schemes {
            let path = dir.join(format!("convergence_{scheme}.csv"));
            let traces: Vec<_> = result
                .convergence
                .iter()
                .filter(|t| t.scheme == scheme)
                .collect();
            let elements = traces
                .iter()
                .flat_map(|t| t.displacements.iter())
                .map(Vec::len)
                .max()
                .unwrap_or(0);
            let mut csv = String::from("trial,iteration,power_dbm");
            for n in 1..=elements {
                write!(csv, ",y_{n}").expect("string write");
            }
            csv.push('\n');
            for trace in traces {
                for (i, (power, ys)) in trace
                    .powers_dbm
                    .iter()
                    .zip(&trace.displacements)
                    .enumerate()
                {
                    write!(csv, "{},{},{power:.6}", trace.trial, i + 1).expect("string write");
                    for y in ys {
                        write!(csv, ",{y:.9e}").expect("string write");
                    }
                    csv.push('\n');
                }
            }
            write_file(&path, csv.as_bytes())?;
            written.push(path);
        }
        return Ok(written);
    }

    let mut csv =
        String::from("sweep_value,scheme,mean_power_dbm,std_power_dbm,trials_ok,trials_failed\n");
    for row in &result.rows {
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{},{}",
            row.sweep_value,
            row.scheme,
            row.mean_power_dbm,
            row.std_power_dbm,
            row.trials_ok,
            row.trials_failed
        )
        .expect("string write");
    }
    let csv_path = dir.join("sweep.csv");
    write_file(&csv_path, csv.as_bytes())?;
    written.push(csv_path);

    let json_path = dir.join("results.json");
    let mut json = serde_json::to_vec_pretty(result)?;
    json.push(b'\n');
    write_file(&json_path, &json)?;
    written.push(json_path);
    Ok(written)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    std::fs::write(path, bytes).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}
