use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde_json::Value;
use ssm_core::report::{render_report, ReportBundle, ReportFormat};

use crate::args::Format;

pub fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Table => ReportFormat::Table,
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
        Format::Plotdata => ReportFormat::PlotData,
    }
}

fn extension(f: Format) -> &'static str {
    match f {
        Format::Table => "txt",
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Plotdata => "plot.csv",
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ssm_core::Error {
    ssm_core::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(())
}

/// Write `{stem}.{ext}` in the requested format and echo it to stdout.
pub fn emit(dir: &Path, stem: &str, bundle: &ReportBundle, format: Format) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let text = render_report(bundle, report_format(format));
    let path = dir.join(format!("{stem}.{}", extension(format)));
    std::fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
    print!("{text}");
    Ok(path)
}

/// One JSON value per line.
pub fn write_jsonl<T: serde::Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    std::fs::write(&path, out).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| io_err(&path, e))?;
    Ok(path)
}
