//! Plain-text output helpers: CSV with 17 significant digits and LF endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory CSV table written in one go.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    buf: String,
}

pub enum Cell<'a> {
    F(f64),
    I(i64),
    U(usize),
    S(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell<'_> {
    fn from(x: usize) -> Self {
        Cell::U(x)
    }
}

impl From<i64> for Cell<'_> {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(x: &'a str) -> Self {
        Cell::S(x)
    }
}

impl Csv {
    pub fn with_header(columns: &[&str]) -> Self {
        let mut csv = Self::default();
        csv.buf.push_str(&columns.join(","));
        csv.buf.push('\n');
        csv
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::F(x) => self.buf.push_str(&fmt_f64(*x)),
                Cell::I(x) => {
                    let _ = write!(self.buf, "{x}");
                }
                Cell::U(x) => {
                    let _ = write!(self.buf, "{x}");
                }
                Cell::S(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.buf.as_bytes())?;
        Ok(())
    }
}

/// Parses a two-column numeric CSV with a header line.
pub fn read_xy(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse().ok()).ok_or_else(|| crate::Error::Parse {
                line: i + 1,
                message: format!("expected two numbers, got `{line}`"),
            })
        };
        let x = parse(it.next())?;
        let y = parse(it.next())?;
        out.push((x, y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::with_header(&["a", "b", "c"]);
        csv.row(&[1.5.into(), 3usize.into(), "x".into()]);
        assert_eq!(csv.as_str(), "a,b,c\n1.5000000000000000e0,3,x\n");
        let xy = read_xy("f,g\n1,2\n3.5,4e1\n").unwrap();
        assert_eq!(xy, vec![(1.0, 2.0), (3.5, 40.0)]);
    }
}
