//! Line-oriented text helpers shared by the model, head and CSV formats.

use crate::error::{Error, Result};

/// 17 significant digits; re-parses to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("{s:?}: {e}"),
    })
}

/// Parses a comma-separated list and checks its length.
pub fn parse_f64_list(s: &str, line: usize, expected: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = if s.trim().is_empty() {
        Vec::new()
    } else {
        s.split(',')
            .map(|t| parse_f64(t, line))
            .collect::<Result<_>>()?
    };
    if v.len() != expected {
        return Err(Error::Parse {
            line,
            msg: format!("expected {expected} values, got {}", v.len()),
        });
    }
    Ok(v)
}

/// Cursor over the lines of a document with 1-based line numbers.
pub struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    pub fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(Error::Parse {
                line: self.last + 1,
                msg: "unexpected end of input".into(),
            }),
        }
    }

    pub fn peek(&mut self) -> Option<&'a str> {
        self.inner.peek().map(|(_, l)| *l)
    }

    /// Skips blank lines.
    pub fn skip_blank(&mut self) {
        while matches!(self.peek(), Some(l) if l.trim().is_empty()) {
            self.inner.next();
        }
    }

    pub fn expect_exact(&mut self, want: &str) -> Result<usize> {
        let (n, l) = self.next_line()?;
        if l.trim() != want {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected {want:?}, found {l:?}"),
            });
        }
        Ok(n)
    }

    /// Reads `key value` and returns the value.
    pub fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next_line()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim())),
            _ => Err(Error::Parse {
                line: n,
                msg: format!("expected `{key} <value>`, found {l:?}"),
            }),
        }
    }

    pub fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let (n, v) = self.keyed(key)?;
        v.parse().map_err(|e| Error::Parse {
            line: n,
            msg: format!("{key}: {e}"),
        })
    }

    pub fn keyed_f64(&mut self, key: &str) -> Result<f64> {
        let (n, v) = self.keyed(key)?;
        parse_f64(v, n)
    }
}
