//! Trace files (CSV and two-port Touchstone) and canonical JSON output.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ComplexTrace;

pub const CSV_HEADER: [&str; 3] = ["freq_hz", "s21_re", "s21_im"];

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: cannot parse '{}' as a number", tok.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: non-finite value '{}'", tok.trim())));
    }
    Ok(v)
}

fn finish(freqs: Vec<f64>, s21: Vec<Complex64>, lines: &[usize]) -> Result<ComplexTrace> {
    if freqs.is_empty() {
        return Err(parse_err(lines.first().copied().unwrap_or(1), "no data rows"));
    }
    if let Some(k) = freqs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(parse_err(lines[k + 1], "frequencies must be strictly increasing"));
    }
    if let Some(k) = freqs.iter().position(|&f| f <= 0.0) {
        return Err(parse_err(lines[k], "frequencies must be positive"));
    }
    ComplexTrace::new(freqs, s21)
}

/// Parses the CSV trace format. LF and CRLF line endings are accepted.
pub fn parse_csv(text: &str) -> Result<ComplexTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != CSV_HEADER {
        return Err(parse_err(
            1,
            format!("expected header '{}', found '{}'", CSV_HEADER.join(","), names.join(",")),
        ));
    }
    let (mut freqs, mut s21, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 columns, found {}", rec.len())));
        }
        freqs.push(parse_f64(&rec[0], line, "freq_hz")?);
        s21.push(Complex64::new(
            parse_f64(&rec[1], line, "s21_re")?,
            parse_f64(&rec[2], line, "s21_im")?,
        ));
        lines.push(line);
    }
    finish(freqs, s21, &lines)
}

/// Writes the CSV trace format with shortest round-trip floats.
pub fn to_csv(trace: &ComplexTrace) -> String {
    let mut out = String::with_capacity(48 * trace.len() + 32);
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for (f, z) in trace.freqs.iter().zip(&trace.s21) {
        out.push_str(&format!("{f:e},{:e},{:e}\n", z.re, z.im));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TsFormat {
    Ri,
    Ma,
    Db,
}

/// Parses a two-port Touchstone file and extracts S21 (the second column pair).
pub fn parse_touchstone(text: &str) -> Result<ComplexTrace> {
    let mut scale = 1e9;
    let mut format = TsFormat::Ma;
    let mut seen_option = false;
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if seen_option {
                continue;
            }
            seen_option = true;
            let mut it = opts.split_whitespace().map(|s| s.to_ascii_uppercase());
            while let Some(tok) = it.next() {
                match tok.as_str() {
                    "HZ" => scale = 1.0,
                    "KHZ" => scale = 1e3,
                    "MHZ" => scale = 1e6,
                    "GHZ" => scale = 1e9,
                    "RI" => format = TsFormat::Ri,
                    "MA" => format = TsFormat::Ma,
                    "DB" => format = TsFormat::Db,
                    "S" => {}
                    "R" => {
                        it.next();
                    }
                    "Y" | "Z" | "H" | "G" => {
                        return Err(parse_err(line_no, format!("only S-parameters are supported, found '{tok}'")));
                    }
                    other => return Err(parse_err(line_no, format!("unknown option '{other}'"))),
                }
            }
            continue;
        }
        if line.starts_with('[') {
            return Err(parse_err(line_no, "Touchstone 2.0 keywords are not supported"));
        }
        tokens.extend(line.split_whitespace().map(|t| (line_no, t.to_string())));
    }
    if tokens.len() % 9 != 0 {
        let line = tokens.last().map(|t| t.0).unwrap_or(1);
        return Err(parse_err(line, format!("{} values is not a multiple of 9 (two-port rows)", tokens.len())));
    }
    let (mut freqs, mut s21, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for row in tokens.chunks(9) {
        let line = row[0].0;
        freqs.push(parse_f64(&row[0].1, line, "frequency")? * scale);
        let a = parse_f64(&row[3].1, row[3].0, "S21")?;
        let b = parse_f64(&row[4].1, row[4].0, "S21")?;
        s21.push(match format {
            TsFormat::Ri => Complex64::new(a, b),
            TsFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            TsFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        });
        lines.push(line);
    }
    finish(freqs, s21, &lines)
}

/// Reads a trace, choosing the parser from the extension (`.s2p` is Touchstone, anything else CSV).
pub fn read_trace(path: &Path) -> Result<ComplexTrace> {
    let text = fs::read_to_string(path)?;
    let is_touchstone = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("s2p"));
    let mut trace = if is_touchstone {
        parse_touchstone(&text)?
    } else {
        parse_csv(&text)?
    };
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        trace.label = stem.to_string();
    }
    Ok(trace)
}

pub fn write_csv(trace: &ComplexTrace, path: &Path) -> Result<()> {
    fs::write(path, to_csv(trace))?;
    Ok(())
}

/// Numeric value with units and an optional one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: &'static str,
    pub sigma: Option<f64>,
}

impl Quantity {
    pub fn new(value: f64, unit: &'static str) -> Self {
        Self { value, unit, sigma: None }
    }

    pub fn with_sigma(value: f64, sigma: f64, unit: &'static str) -> Self {
        Self {
            value,
            unit,
            sigma: Some(sigma),
        }
    }
}

/// Significant digits kept for every float in canonical output.
pub const CANONICAL_DIGITS: usize = 12;

/// Rounds to [`CANONICAL_DIGITS`] significant digits and prints in shortest exponent form.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", CANONICAL_DIGITS - 1, v).parse().expect("formatted float");
    format!("{rounded:e}")
}

fn write_canonical(v: &Value, out: &mut String, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_canonical(item, out, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                write_canonical(&map[*key], out, indent + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON: sorted keys, two-space indent, floats at 12 significant digits.
/// Re-serializing the parsed output reproduces it byte for byte.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out, 0);
    out.push('\n');
    out
}

/// Serializes any value through [`canonical_json`].
pub fn to_canonical_json<T: Serialize>(v: &T) -> Result<String> {
    let value = serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))?;
    Ok(canonical_json(&value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_csv() {
        let t = parse_csv("freq_hz,s21_re,s21_im\n1e9,1,0\n2e9,0.5,0.1\n3e9,1,0\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.freqs, vec![1e9, 2e9, 3e9]);
    }

    #[test]
    fn crlf_matches_lf() {
        let lf = "freq_hz,s21_re,s21_im\n1e9,1,0\n2e9,0.5,0.1\n";
        let crlf = lf.replace('\n', "\r\n");
        assert_eq!(parse_csv(lf).unwrap(), parse_csv(&crlf).unwrap());
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let e = parse_csv("freq_hz,s21_re,s21_im\n1e9,1,0\n2e9,NaN,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_csv("freq_hz,s21_re,s21_im\n2e9,1,0\n1e9,1,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_csv("f,re,im\n1e9,1,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let freqs = vec![1.0e9 + 0.1, 1.0e9 + 0.2, 1.0e9 + 0.3];
        let s21 = vec![
            Complex64::new(0.1 + 0.2, -1.0 / 3.0),
            Complex64::new(1e-300, 5e-324),
            Complex64::new(-0.0, 2.0f64.sqrt()),
        ];
        let t = ComplexTrace::new(freqs, s21).unwrap();
        let back = parse_csv(&to_csv(&t)).unwrap();
        assert_eq!(t.freqs, back.freqs);
        for (a, b) in t.s21.iter().zip(&back.s21) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn touchstone_formats_agree() {
        let ri = "! test\n# MHz S RI R 50\n1000 0 0 0.6 0.8 0 0 0 0\n1001 0 0 1 0 0 0 0 0\n";
        let ma = "# MHz S MA R 50\n1000 0 0 1 53.13010235415598 0 0 0 0\n1001 0 0 1 0 0 0 0 0\n";
        let db = "# MHz S DB R 50\n1000 0 0 0 53.13010235415598 0 0 0 0\n1001 0 0 0 0 0 0 0 0\n";
        let a = parse_touchstone(ri).unwrap();
        assert_eq!(a.freqs, vec![1e9, 1.001e9]);
        for other in [parse_touchstone(ma).unwrap(), parse_touchstone(db).unwrap()] {
            for (x, y) in a.s21.iter().zip(&other.s21) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_float_format() {
        assert_eq!(format_float(1.7537e9), "1.7537e9");
        assert_eq!(format_float(0.1 + 0.2), "3e-1");
        assert_eq!(format_float(-2.5e-7), "-2.5e-7");
        let v: Value = serde_json::from_str(r#"{"b": 1.0, "a": [0.30000000000000004, 2]}"#).unwrap();
        let s = canonical_json(&v);
        assert_eq!(s, "{\n  \"a\": [\n    3e-1,\n    2\n  ],\n  \"b\": 1e0\n}\n");
        let again = canonical_json(&serde_json::from_str(&s).unwrap());
        assert_eq!(s, again);
    }
}
