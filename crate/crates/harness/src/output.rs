//! CSV serialization of result rows.

use std::io::Write;
use std::path::Path;

use crate::sweep::ResultRow;
use crate::HarnessError;

pub const HEADER: [&str; 10] = [
    "scenario",
    "swept_parameter",
    "value",
    "method",
    "metric",
    "mean",
    "ci_lo",
    "ci_hi",
    "n_trials",
    "seed",
];

/// Nine significant digits, trailing zeros trimmed (like C's `%.9g`).
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.swept_parameter.clone(),
            format_float(r.value),
            r.method.clone(),
            r.metric.clone(),
            format_float(r.mean),
            format_float(r.ci_lo),
            format_float(r.ci_hi),
            r.n_trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_rows(rows, std::io::BufWriter::new(file))
}
