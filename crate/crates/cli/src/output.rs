use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::args::Format;
use amspim::{Error, Result};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Files of one command invocation. Every file lands in `dir` through a
/// temporary sibling and a rename, so readers never see partial output.
pub struct OutDir {
    dir: Option<PathBuf>,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(io_err(d))?;
        }
        Ok(OutDir {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut bytes = Vec::new();
        fill(&mut bytes)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(&bytes).map_err(io_err(tmp.path()))?;
        let target = dir.join(name);
        tmp.persist(&target).map_err(|e| Error::Io {
            path: target.clone(),
            source: e.error,
        })?;
        self.written.push(target);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

/// Prints the command summary: pretty JSON, or `key,value` rows flattened
/// from the same JSON.
pub fn print_summary<T: Serialize>(format: Format, value: &T) -> Result<()> {
    match write_summary(format, value) {
        // a closed pipe (`| head`) is the reader's choice, not a failure
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn write_summary<T: Serialize>(format: Format, value: &T) -> Result<()> {
    let json = serde_json::to_value(value)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let e = io_err(Path::new("<stdout>"));
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&json)?).map_err(e),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", &json, &mut rows);
            writeln!(out, "key,value").map_err(&e)?;
            for (k, v) in rows {
                writeln!(out, "{k},{v}").map_err(&e)?;
            }
            Ok(())
        }
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_owned()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, rows)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, rows)),
        Value::String(s) if s.contains(',') || s.contains('"') => {
            rows.push((prefix.to_owned(), format!("\"{}\"", s.replace('"', "\"\""))))
        }
        Value::String(s) => rows.push((prefix.to_owned(), s.clone())),
        other => rows.push((prefix.to_owned(), other.to_string())),
    }
}
