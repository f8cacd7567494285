//! Persisting run records as JSON lines, profile CSV or plot data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::run::{RunRecord, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Jsonlines,
    Csv,
    Plotdata,
}

impl FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonlines" => Ok(Format::Jsonlines),
            "csv" => Ok(Format::Csv),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(LabError::parse("format", format!("unknown format `{other}` (jsonlines, csv, plotdata)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmitSummary {
    pub files: Vec<PathBuf>,
    /// Set when nothing was written.
    pub notice: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.to_path_buf(), source }
}

/// File-name-safe form of a record id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>, files: &mut Vec<PathBuf>) -> Result<()> {
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    files.push(path);
    Ok(())
}

/// One JSON object per line; serialization follows field declaration order
/// and sorted output keys, so identical runs give identical bytes.
pub fn to_jsonlines(records: &[RunRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

pub fn emit(records: &[RunRecord], timings: &[Timing], format: Format, out: &Path) -> Result<EmitSummary> {
    if records.is_empty() {
        return Ok(EmitSummary { files: Vec::new(), notice: Some("no records to emit (empty sweep); nothing written".into()) });
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = Vec::new();
    match format {
        Format::Jsonlines => {
            let body = to_jsonlines(records);
            write_file(out.join("records.jsonl"), |w| w.write_all(body.as_bytes()), &mut files)?;
            write_file(
                out.join("timings.jsonl"),
                |w| {
                    for t in timings {
                        writeln!(w, "{}", serde_json::to_string(t).expect("timings serialize"))?;
                    }
                    Ok(())
                },
                &mut files,
            )?;
        }
        Format::Csv => {
            write_file(
                out.join("outputs.csv"),
                |w| {
                    writeln!(w, "id,command,status,key,value,tol")?;
                    for r in records {
                        for (k, o) in &r.outputs {
                            let value = match &o.value {
                                serde_json::Value::String(s) => s.replace(',', ";"),
                                v => v.to_string().replace(',', ";"),
                            };
                            let tol = o.tol.map(|t| format!("{t:e}")).unwrap_or_default();
                            let status = serde_json::to_value(r.status).expect("status serializes");
                            writeln!(w, "{},{},{},{k},{value},{tol}", r.id, r.command, status.as_str().unwrap_or(""))?;
                        }
                    }
                    Ok(())
                },
                &mut files,
            )?;
            for r in records {
                if let Some(a) = &r.artifacts {
                    if let Some(profile) = &a.profile {
                        let path = out.join(format!("{}.profile.csv", file_stem(&r.id)));
                        write_file(path, |w| a.grid.write_profile_csv(profile, w), &mut files)?;
                    }
                }
            }
        }
        Format::Plotdata => {
            for r in records {
                let Some(a) = r.artifacts.as_ref().filter(|a| !a.plot.is_empty()) else { continue };
                let path = out.join(format!("{}.plot.csv", file_stem(&r.id)));
                write_file(
                    path,
                    |w| {
                        writeln!(w, "series,label,x,y")?;
                        for p in &a.plot {
                            writeln!(w, "{},{},{:.12e},{:.12e}", p.series, p.label, p.x, p.y)?;
                        }
                        Ok(())
                    },
                    &mut files,
                )?;
            }
        }
    }
    let notice = files.is_empty().then(|| format!("no {format:?} data in these records; nothing written"));
    Ok(EmitSummary { files, notice })
}
