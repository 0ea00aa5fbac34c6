//! CSV and JSON sidecar writing. All floats are printed with 17 significant
//! digits so outputs round-trip bit-exactly; identical (config, seed) runs
//! produce byte-identical CSV files.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone)]
pub struct CsvReport {
    pub header: &'static str,
    pub rows: Vec<String>,
}

impl CsvReport {
    pub fn new(header: &'static str) -> Self {
        CsvReport { header, rows: Vec::new() }
    }

    pub fn push_row(&mut self, fields: &[String]) {
        self.rows.push(fields.join(","));
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Sidecar path `<out>.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

pub struct RunOutput {
    pub csv: CsvReport,
    /// Experiment-specific estimates and notes for the sidecar.
    pub meta: serde_json::Value,
}

pub fn write_outputs(
    out: &Path,
    experiment: &str,
    seed: u64,
    samples: u64,
    config_hash: &str,
    wall_clock_ms: u128,
    run: &RunOutput,
) -> Result<(), CliError> {
    let io_err =
        |e: std::io::Error| CliError::Config(format!("writing {}: {e}", out.display()));
    let mut f = std::fs::File::create(out).map_err(io_err)?;
    f.write_all(run.csv.render().as_bytes()).map_err(io_err)?;

    let meta = serde_json::json!({
        "experiment": experiment,
        "seed": seed,
        "samples": samples,
        "config_sha256": config_hash,
        "library_version": env!("CARGO_PKG_VERSION"),
        "wall_clock_ms": wall_clock_ms,
        "estimates": run.meta,
    });
    let mp = meta_path(out);
    let mut f = std::fs::File::create(&mp)
        .map_err(|e| CliError::Config(format!("writing {}: {e}", mp.display())))?;
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| CliError::Config(format!("writing {}: {e}", mp.display())))?;
    Ok(())
}
