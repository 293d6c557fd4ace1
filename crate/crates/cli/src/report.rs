use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

/// Writes through `body` into `dir/name` and returns the full path.
pub(crate) fn write_file<F>(dir: &Path, name: &str, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(io_error(&path))?;
    let mut writer = BufWriter::new(file);
    body(&mut writer)
        .and_then(|_| writer.flush())
        .map_err(io_error(&path))?;
    Ok(path)
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub(crate) fn open(path: &Path) -> Result<std::io::BufReader<fs::File>, CliError> {
    fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(io_error(path))
}

/// Reads the `x,count` columns of a histogram CSV; `#` lines are comments.
pub fn read_histogram(path: &Path) -> Result<Vec<u64>, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut histogram = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| CliError::Parse {
            path: path.to_path_buf(),
            reason: format!("line {}: {reason}", i + 1),
        };
        let mut cols = line.split(',');
        let x: usize = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad("bad click count"))?;
        let count: u64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad("bad frequency"))?;
        if x != histogram.len() {
            return Err(bad("click counts must start at 0 and increase by 1"));
        }
        histogram.push(count);
    }
    Ok(histogram)
}
