//! File helpers: transparent gzip on read, glob expansion, JSONL writing.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;

use crate::corpus::Document;

/// Open a file for buffered reading, decompressing `*.gz` on the fly.
pub fn open_reader(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Expand glob patterns into a sorted, de-duplicated file list.
pub fn expand_globs<S: AsRef<str>>(patterns: &[S]) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for pattern in patterns {
        let paths =
            glob::glob(pattern.as_ref()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        for entry in paths {
            let path = entry.map_err(|e| io::Error::other(e.to_string()))?;
            if path.is_file() {
                out.push(path);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Read every line of a (possibly gzipped) file as raw bytes, without the
/// trailing newline.
pub fn read_lines_raw(path: &Path) -> io::Result<Vec<Vec<u8>>> {
    let mut reader = open_reader(path)?;
    let mut lines = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        lines.push(buf.clone());
    }
    Ok(lines)
}

/// Write documents as JSONL.
pub fn write_documents<'a, I>(path: &Path, docs: I) -> io::Result<()>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut w = BufWriter::new(File::create(path)?);
    for doc in docs {
        w.write_all(doc.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
