use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::studies::Report;
use crate::CliError;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

/// The summary document; identical configs give byte-identical output.
pub fn summary_json(cfg: &RunConfig, report: &Report) -> String {
    let doc = json!({
        "study": report.study.name(),
        "config_hash": cfg.hash(),
        "status": if report.passed() { "pass" } else { "fail" },
        "checks": report.checks,
        "results": report.results,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `summary.json`, `series.csv` and the resolved `config.toml` into
/// `<out>/<config hash>/`, returning that directory.
pub fn write_report(
    cfg: &RunConfig,
    report: &Report,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let dir = cfg.run_dir(out);
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| io(&config_path, e))?;
    if cfg.output.formats.contains(&Format::Json) {
        let p = dir.join("summary.json");
        fs::write(&p, summary_json(cfg, report)).map_err(|e| io(&p, e))?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        let p = dir.join("series.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| io(&p, e))?;
        w.write_record(&report.series.header)
            .map_err(|e| io(&p, e))?;
        for row in &report.series.rows {
            w.write_record(row).map_err(|e| io(&p, e))?;
        }
        w.flush().map_err(|e| io(&p, e))?;
    }
    Ok(dir)
}
