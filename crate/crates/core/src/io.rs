//! Line-oriented text helpers shared by the checkpoint and dataset formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a value with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_row<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        w.write_all(fmt_real(v).as_bytes())?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes `bytes` to `path` via a sibling temp file and a rename, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Cursor over a whitespace-separated text document. Header lines are read
/// whole; numeric payloads may span any number of lines.
pub struct TextReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    pending: Vec<&'a str>,
    pending_line: usize,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        TextReader { lines, pos: 0, pending: Vec::new(), pending_line: 0 }
    }

    pub fn line_number(&self) -> usize {
        self.lines.get(self.pos).map_or_else(|| self.lines.last().map_or(0, |l| l.0), |l| l.0)
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line_number(), msg: msg.into() }
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_empty() && self.pos >= self.lines.len()
    }

    /// Next line whose first token is `keyword`; returns the remaining tokens.
    pub fn header(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        if !self.pending.is_empty() {
            return Err(Error::Parse {
                line: self.pending_line,
                msg: format!("unexpected trailing values before `{keyword}` header"),
            });
        }
        let (line, text) = *self
            .lines
            .get(self.pos)
            .ok_or_else(|| self.err(format!("unexpected end of input, expected `{keyword}`")))?;
        let mut toks = text.split_whitespace();
        if toks.next() != Some(keyword) {
            return Err(Error::Parse { line, msg: format!("expected `{keyword}` header, found `{text}`") });
        }
        self.pos += 1;
        Ok(toks.collect())
    }

    pub fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pending.is_empty() {
                let (line, text) = *self
                    .lines
                    .get(self.pos)
                    .ok_or_else(|| self.err(format!("expected {count} values, found {}", out.len())))?;
                self.pos += 1;
                self.pending_line = line;
                self.pending = text.split_whitespace().rev().collect();
            }
            let tok = self.pending.pop().expect("pending non-empty");
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: self.pending_line,
                msg: format!("invalid number `{tok}`"),
            })?;
            out.push(v);
        }
        Ok(out)
    }

    /// Values of exactly one line.
    pub fn line_values(&mut self) -> Result<Vec<f64>> {
        if !self.pending.is_empty() {
            return Err(Error::Parse { line: self.pending_line, msg: "unexpected trailing values".into() });
        }
        let (line, text) = *self.lines.get(self.pos).ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        text.split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse { line, msg: format!("invalid number `{t}`") }))
            .collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.is_done() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing content"))
        }
    }
}

pub(crate) fn parse_usize(tok: Option<&&str>, what: &str, reader: &TextReader<'_>) -> Result<usize> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| reader.err(format!("missing or invalid {what}")))
}

pub(crate) fn parse_f64(tok: Option<&&str>, what: &str, reader: &TextReader<'_>) -> Result<f64> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| reader.err(format!("missing or invalid {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_real_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn reader_spans_lines_for_values() {
        let mut r = TextReader::new("head 2\n1 2\n3\n\nnext\n");
        assert_eq!(r.header("head").unwrap(), vec!["2"]);
        assert_eq!(r.values(3).unwrap(), vec![1.0, 2.0, 3.0]);
        r.header("next").unwrap();
        r.finish().unwrap();
    }

    #[test]
    fn reader_rejects_wrong_header() {
        let mut r = TextReader::new("foo 1\n");
        assert!(matches!(r.header("bar"), Err(Error::Parse { line: 1, .. })));
    }
}
