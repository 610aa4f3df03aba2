use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Where an artifact goes: a file (written atomically) or standard output.
#[derive(Clone, Debug)]
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn new(out: Option<&Path>, out_dir: Option<&Path>) -> Self {
        match (out, out_dir) {
            (None, _) => Sink::Stdout,
            (Some(p), Some(dir)) if p.is_relative() => Sink::File(dir.join(p)),
            (Some(p), _) => Sink::File(p.to_path_buf()),
        }
    }

    /// `<out>.json` next to a file sink, nothing for stdout.
    pub fn sidecar(&self) -> Option<PathBuf> {
        match self {
            Sink::Stdout => None,
            Sink::File(p) => {
                let mut name = p.as_os_str().to_owned();
                name.push(".json");
                Some(PathBuf::from(name))
            }
        }
    }

    pub fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        match self {
            Sink::Stdout => {
                let mut out = io::stdout().lock();
                out.write_all(bytes)
                    .and_then(|()| out.flush())
                    .map_err(|source| CliError::Write {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })
            }
            Sink::File(p) => write_atomic(p, bytes),
        }
    }
}

/// Writes to a temporary file beside `path` and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text.into_bytes()
}

/// Thirteen significant digits; non-finite values become `nan`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        "nan".to_string()
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, values: impl IntoIterator<Item = String>) {
        let row: Vec<String> = values.into_iter().collect();
        self.text.push_str(&row.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Sends the JSON report to the sidecar of a file sink, or to stderr.
pub fn report<T: Serialize>(sink: &Sink, value: &T) -> Result<(), CliError> {
    let bytes = json(value);
    match sink.sidecar() {
        Some(path) => write_atomic(&path, &bytes),
        None => io::stderr().write_all(&bytes).map_err(|source| CliError::Write {
            path: PathBuf::from("<stderr>"),
            source,
        }),
    }
}
