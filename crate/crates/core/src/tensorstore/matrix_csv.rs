//! Similarity matrices as CSV.
//!
//! ```text
//! # method=xsns
//! # seeds_averaged=3
//! # <attribute>=<value>
//! language,de,en,fr
//! de,1,0.42,...
//! ```
//!
//! Values carry 9 significant digits.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use super::FormatError;
use crate::lang::LanguageCode;
use crate::matrix::{Method, SimilarityMatrix};

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    const SIG: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_matrix_csv<W: Write>(m: &SimilarityMatrix, mut w: W) -> Result<(), FormatError> {
    let io = |source| FormatError::Io { offset: 0, source };
    writeln!(w, "# method={}", m.method).map_err(io)?;
    writeln!(w, "# seeds_averaged={}", m.seeds_averaged).map_err(io)?;
    for (k, v) in &m.attributes {
        writeln!(w, "# {k}={v}").map_err(io)?;
    }
    let header: Vec<&str> = m.languages.iter().map(|l| l.as_str()).collect();
    writeln!(w, "language,{}", header.join(",")).map_err(io)?;
    for (i, l) in m.languages.iter().enumerate() {
        let row: Vec<String> = (0..m.size()).map(|j| format_sig9(m.get(i, j))).collect();
        writeln!(w, "{},{}", l, row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix_csv<R: Read>(source: R) -> Result<SimilarityMatrix, FormatError> {
    let mut lines = BufReader::new(source).lines().enumerate();
    let mut method = None;
    let mut seeds_averaged = 1;
    let mut attributes = BTreeMap::new();
    let err = |line: usize, msg: String| FormatError::Csv(format!("line {}: {msg}", line + 1));

    let (header_no, header) = loop {
        let (no, line) = lines.next().ok_or_else(|| FormatError::Csv("missing header row".into()))?;
        let line = line.map_err(|source| FormatError::Io { offset: 0, source })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                match k {
                    "method" => method = Some(v.parse::<Method>().map_err(|e| err(no, e))?),
                    "seeds_averaged" => {
                        seeds_averaged = v.parse().map_err(|_| err(no, format!("bad seeds_averaged {v:?}")))?
                    }
                    _ => {
                        attributes.insert(k.to_string(), v.to_string());
                    }
                }
            }
            continue;
        }
        break (no, t.to_string());
    };
    let method = method.ok_or_else(|| FormatError::Csv("missing `# method=` header".into()))?;
    let mut cols = header.split(',');
    cols.next();
    let languages = cols
        .map(|c| LanguageCode::new(c.trim()).map_err(|e| err(header_no, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let n = languages.len();
    if n == 0 {
        return Err(err(header_no, "no language columns".into()));
    }
    let mut values = Vec::with_capacity(n * n);
    let mut row = 0;
    for (no, line) in lines {
        let line = line.map_err(|source| FormatError::Io { offset: 0, source })?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if row == n {
            return Err(err(no, "more rows than languages".into()));
        }
        let mut cells = t.split(',');
        let label = cells.next().unwrap_or_default().trim();
        if label != languages[row].as_str() {
            return Err(err(no, format!("row label {label:?} != column {:?}", languages[row].as_str())));
        }
        let before = values.len();
        for c in cells {
            let v: f64 = c.trim().parse().map_err(|_| err(no, format!("bad number {c:?}")))?;
            values.push(v);
        }
        if values.len() - before != n {
            return Err(err(no, format!("expected {n} values, found {}", values.len() - before)));
        }
        row += 1;
    }
    if row != n {
        return Err(FormatError::Csv(format!("expected {n} rows, found {row}")));
    }
    let mut m = SimilarityMatrix::new(languages, values, method, seeds_averaged);
    m.attributes = attributes;
    Ok(m)
}
