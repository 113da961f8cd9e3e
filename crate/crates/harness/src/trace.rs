//! Fixed-schema CSV traces. Every number is written with 17 significant
//! digits so that parsing a file back reproduces the in-memory values exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HarnessError, Result};

pub const TRACE_COLUMNS: [&str; 27] = [
    "t",
    "alpha",
    "phi",
    "beta",
    "theta",
    "alpha_meas",
    "phi_meas",
    "beta_meas",
    "theta_meas",
    "alpha_sp",
    "beta_sp",
    "u_alpha",
    "u_beta",
    "bx",
    "by",
    "bz",
    "i1",
    "i2",
    "i3",
    "i4",
    "i5",
    "i6",
    "i7",
    "i8",
    "phi_ss_hat",
    "u_d_hat_a",
    "u_d_hat_b",
];

/// One control step. `u_*` are the commanded field angles after offset
/// correction, `b*` the allocated field and `i*` the coil currents.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: f64,
    pub alpha: f64,
    pub phi: f64,
    pub beta: f64,
    pub theta: f64,
    pub alpha_meas: f64,
    pub phi_meas: f64,
    pub beta_meas: f64,
    pub theta_meas: f64,
    pub alpha_sp: f64,
    pub beta_sp: f64,
    pub u_alpha: f64,
    pub u_beta: f64,
    pub field: [f64; 3],
    pub currents: [f64; 8],
    pub phi_ss_hat: f64,
    pub u_d_hat_a: f64,
    pub u_d_hat_b: f64,
}

impl TraceRow {
    pub fn values(&self) -> [f64; 27] {
        let mut v = [0.0; 27];
        v[..13].copy_from_slice(&[
            self.t,
            self.alpha,
            self.phi,
            self.beta,
            self.theta,
            self.alpha_meas,
            self.phi_meas,
            self.beta_meas,
            self.theta_meas,
            self.alpha_sp,
            self.beta_sp,
            self.u_alpha,
            self.u_beta,
        ]);
        v[13..16].copy_from_slice(&self.field);
        v[16..24].copy_from_slice(&self.currents);
        v[24] = self.phi_ss_hat;
        v[25] = self.u_d_hat_a;
        v[26] = self.u_d_hat_b;
        v
    }

    pub fn from_values(v: &[f64; 27]) -> Self {
        let mut field = [0.0; 3];
        field.copy_from_slice(&v[13..16]);
        let mut currents = [0.0; 8];
        currents.copy_from_slice(&v[16..24]);
        Self {
            t: v[0],
            alpha: v[1],
            phi: v[2],
            beta: v[3],
            theta: v[4],
            alpha_meas: v[5],
            phi_meas: v[6],
            beta_meas: v[7],
            theta_meas: v[8],
            alpha_sp: v[9],
            beta_sp: v[10],
            u_alpha: v[11],
            u_beta: v[12],
            field,
            currents,
            phi_ss_hat: v[24],
            u_d_hat_a: v[25],
            u_d_hat_b: v[26],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv_string(&self) -> String {
        csv_string(&TRACE_COLUMNS, self.rows.iter().map(TraceRow::values))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rows = parse_csv(text, &TRACE_COLUMNS)?;
        Ok(Self {
            rows: rows
                .iter()
                .map(|r| {
                    let mut v = [0.0; 27];
                    v.copy_from_slice(r);
                    TraceRow::from_values(&v)
                })
                .collect(),
        })
    }
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header line followed by one line per row.
pub fn csv_string<R, I>(header: &[&str], rows: I) -> String
where
    R: AsRef<[f64]>,
    I: IntoIterator<Item = R>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, x) in row.as_ref().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

/// Parses a numeric CSV whose header must equal `header`.
pub fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| HarnessError::Csv("missing header".into()))?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(HarnessError::Csv(format!("unexpected header {first:?}")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Csv(format!("line {}: {e}", n + 2)))?;
            if row.len() != header.len() {
                return Err(HarnessError::Csv(format!(
                    "line {}: expected {} fields, got {}",
                    n + 2,
                    header.len(),
                    row.len()
                )));
            }
            Ok(row)
        })
        .collect()
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

pub fn export_trace(trace: &Trace, path: &Path) -> Result<()> {
    write_file(path, &trace.to_csv_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        let s = Trace::default().to_csv_string();
        assert_eq!(s, format!("{}\n", TRACE_COLUMNS.join(",")));
        assert!(Trace::from_csv_str(&s).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut v = [0.0; 27];
        for (i, x) in v.iter_mut().enumerate() {
            *x = (i as f64 + 0.1).sqrt() * 1e-3 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        v[3] = f64::MIN_POSITIVE;
        v[4] = 1.0 / 3.0;
        let trace = Trace {
            rows: vec![TraceRow::from_values(&v); 3],
        };
        let back = Trace::from_csv_str(&trace.to_csv_string()).unwrap();
        for (a, b) in trace.rows.iter().zip(&back.rows) {
            for (x, y) in a.values().iter().zip(b.values().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(Trace::from_csv_str("t,alpha\n1,2\n").is_err());
        let bad = format!("{}\n1,2\n", TRACE_COLUMNS.join(","));
        assert!(Trace::from_csv_str(&bad).is_err());
    }
}
