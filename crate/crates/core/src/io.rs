//! CSV export and import with `# key=value` comment headers.
//!
//! Numbers are written in Rust's shortest round-trip form, so a file read
//! back reproduces the values bit for bit.

use std::fmt::Write as _;

use crate::analysis::{Spectrum, TimeSeries};
use crate::error::{Error, Result};
use crate::liouville::Trajectory;

/// Shortest round-trip decimal form, in exponent notation outside
/// `1e-5 ≤ |v| < 1e16`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn comment_block(out: &mut String, preamble: &[String], metadata: &[(String, String)]) {
    for line in preamble {
        for l in line.lines() {
            let _ = writeln!(out, "# {l}");
        }
    }
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={}", v.replace('\n', " "));
    }
}

fn rows(out: &mut String, header: &[&str], data: impl Iterator<Item = Vec<f64>>) {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in data {
        w.write_record(r.iter().map(|&v| format_f64(v))).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output"));
}

/// `x,signal[,stderr]` with the series metadata as comments, preceded by
/// `preamble` lines (each prefixed with `# `).
pub fn timeseries_to_csv(ts: &TimeSeries, preamble: &[String]) -> String {
    let mut out = String::new();
    comment_block(&mut out, preamble, &ts.metadata);
    match &ts.stderr {
        Some(e) => rows(&mut out, &["x", "signal", "stderr"], (0..ts.len()).map(|k| vec![ts.t[k], ts.y[k], e[k]])),
        None => rows(&mut out, &["x", "signal"], (0..ts.len()).map(|k| vec![ts.t[k], ts.y[k]])),
    }
    out
}

/// Parse a `x,signal[,stderr]` file. `# key=value` comments become
/// metadata; other comment lines are ignored.
pub fn timeseries_from_csv(text: &str) -> Result<TimeSeries> {
    let mut metadata = Vec::new();
    let mut first_data_line = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim_start().split_once('=') {
                if !k.is_empty() && !k.contains(char::is_whitespace) {
                    metadata.push((k.to_string(), v.to_string()));
                }
            }
        } else if !line.trim().is_empty() {
            first_data_line = Some(i + 1);
            break;
        }
    }
    let header_line = first_data_line.ok_or(Error::Parse { line: 1, message: "missing header `x,signal`".into() })?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: header_line, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let with_err = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "signal"] => false,
        ["x", "signal", "stderr"] => true,
        _ => {
            return Err(Error::Parse {
                line: header_line,
                message: format!("expected header `x,signal[,stderr]`, found `{}`", header.join(",")),
            })
        }
    };
    let (mut t, mut y, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|err| Error::Parse {
            line: err.position().map_or(0, |p| p.line() as usize),
            message: err.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<f64> {
            let s = rec.get(k).ok_or(Error::Parse { line, message: format!("missing column {}", k + 1) })?;
            s.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("not a number: `{s}`") })
        };
        t.push(field(0)?);
        y.push(field(1)?);
        if with_err {
            e.push(field(2)?);
        }
    }
    let mut ts = TimeSeries::new(t, y)?;
    ts.stderr = with_err.then_some(e);
    ts.metadata = metadata;
    Ok(ts)
}

/// `freq_mhz,magnitude` over the one-sided spectrum.
pub fn spectrum_to_csv(spec: &Spectrum, preamble: &[String], metadata: &[(String, String)]) -> String {
    let mut out = String::new();
    comment_block(&mut out, preamble, metadata);
    rows(&mut out, &["freq_mhz", "magnitude"], spec.freq.iter().zip(&spec.magnitude).map(|(f, m)| vec![*f, *m]));
    out
}

/// `t_us,pop_1..pop_n,fluor`, one row per stored state.
pub fn trajectory_to_csv(traj: &Trajectory, fluorescence: &[f64], preamble: &[String]) -> Result<String> {
    let n = traj.states.first().map_or(fluorescence.len(), |s| s.dim());
    if fluorescence.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: fluorescence.len() });
    }
    let mut out = String::new();
    comment_block(&mut out, preamble, &[]);
    let mut header = vec!["t_us".to_string()];
    header.extend((1..=n).map(|k| format!("pop_{k}")));
    header.push("fluor".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    rows(
        &mut out,
        &header,
        traj.times.iter().zip(&traj.states).map(|(t, rho)| {
            let mut r = vec![*t];
            r.extend(rho.populations());
            r.push(crate::liouville::fluorescence_rate(rho, fluorescence));
            r
        }),
    );
    Ok(out)
}
