//! Positioning error statistics, CDF export, run comparison and the
//! per-(gNB, mode) report table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::positioning::{FixMethod, FixRow};

/// Thresholds of the three percentage rows, in meters.
pub const THRESHOLDS_M: [f64; 3] = [2.0, 1.0, 0.3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rms: f64,
    pub max: f64,
    pub pct_sub_2m: f64,
    pub pct_sub_1m: f64,
    pub pct_sub_30cm: f64,
    pub n: usize,
}

impl ErrorStats {
    /// Values in report row order.
    pub fn values(&self) -> [f64; 5] {
        [self.rms, self.max, self.pct_sub_2m, self.pct_sub_1m, self.pct_sub_30cm]
    }
}

pub const STAT_NAMES: [&str; 5] = ["RMS (m)", "Max (m)", "sub 2 m (%)", "sub 1 m (%)", "sub 30 cm (%)"];
const STAT_KEYS: [&str; 5] = ["rms_m", "max_m", "pct_sub_2m", "pct_sub_1m", "pct_sub_30cm"];

fn fraction(count: usize, n: usize) -> f64 {
    count as f64 / n as f64
}

fn check_errors(errors: &[f64]) -> Result<()> {
    if errors.is_empty() {
        return Err(Error::Data("no positioning errors to summarize".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::Data(format!("positioning error must be finite and >= 0, got {e}")));
    }
    Ok(())
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    check_errors(errors)?;
    let n = errors.len();
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let max = errors.iter().copied().fold(0.0, f64::max);
    let pct = |t: f64| 100.0 * fraction(errors.iter().filter(|&&e| e <= t).count(), n);
    Ok(ErrorStats {
        rms: mean_sq.sqrt(),
        max,
        pct_sub_2m: pct(THRESHOLDS_M[0]),
        pct_sub_1m: pct(THRESHOLDS_M[1]),
        pct_sub_30cm: pct(THRESHOLDS_M[2]),
        n,
    })
}

/// Sorted `(error, i/n)` pairs; the last fraction is exactly 1.
pub fn cdf_points(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_errors(errors)?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(sorted.into_iter().enumerate().map(|(i, e)| (e, fraction(i + 1, n))).collect())
}

/// Empirical CDF value at `x` read off `cdf_points` output.
pub fn cdf_at(points: &[(f64, f64)], x: f64) -> f64 {
    let k = points.partition_point(|(e, _)| *e <= x);
    if k == 0 {
        0.0
    } else {
        points[k - 1].1
    }
}

pub fn write_cdf_csv<W: Write>(mut w: W, points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("err_m,cum_frac\n");
    for (e, f) in points {
        let _ = writeln!(out, "{e},{f}");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Statistics of one run (one gNB association, one mode).
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub epochs: usize,
    pub fixes: usize,
    pub fallback_fixes: usize,
    pub all: Option<ErrorStats>,
    pub excluding_fallback: Option<ErrorStats>,
}

impl RunSummary {
    pub fn from_rows(label: impl Into<String>, rows: &[FixRow]) -> Self {
        let all: Vec<f64> = rows.iter().filter_map(FixRow::error).collect();
        let strict: Vec<f64> = rows
            .iter()
            .filter(|r| r.method != Some(FixMethod::FallbackStrongestTwo))
            .filter_map(FixRow::error)
            .collect();
        Self {
            label: label.into(),
            epochs: rows.len(),
            fixes: all.len(),
            fallback_fixes: all.len() - strict.len(),
            all: error_stats(&all).ok(),
            excluding_fallback: error_stats(&strict).ok(),
        }
    }

    pub fn availability_pct(&self) -> f64 {
        if self.epochs == 0 {
            0.0
        } else {
            100.0 * fraction(self.fixes, self.epochs)
        }
    }
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

fn stat_cells(s: Option<&ErrorStats>) -> [String; 5] {
    let v = s.map(ErrorStats::values);
    std::array::from_fn(|i| cell(v.map(|v| v[i]), if i < 2 { 3 } else { 1 }))
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let n_cols = header.len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let mut l = String::new();
        for (c, s) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(l, "{s:<w$}", w = widths[0]);
            } else {
                let _ = write!(l, "  {s:>w$}", w = widths[c]);
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header);
    for r in rows {
        line(r);
    }
    out
}

/// Error table of several runs: one column
/// per run, statistic rows in the order RMS, Max, sub-2m, sub-1m, sub-30cm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub runs: Vec<RunSummary>,
}

impl Report {
    pub fn render_text(&self) -> String {
        let mut header = vec![String::new()];
        header.extend(self.runs.iter().map(|r| r.label.clone()));
        let mut out = String::new();
        for (title, pick) in [
            ("All fixes", (|r: &RunSummary| r.all) as fn(&RunSummary) -> Option<ErrorStats>),
            ("Excluding fallback", |r: &RunSummary| r.excluding_fallback),
        ] {
            let cells: Vec<[String; 5]> = self.runs.iter().map(|r| stat_cells(pick(r).as_ref())).collect();
            let mut rows: Vec<Vec<String>> = (0..5)
                .map(|i| {
                    let mut row = vec![STAT_NAMES[i].to_string()];
                    row.extend(cells.iter().map(|c| c[i].clone()));
                    row
                })
                .collect();
            let mut n_row = vec!["n".to_string()];
            n_row.extend(self.runs.iter().map(|r| pick(r).map_or(0, |s| s.n).to_string()));
            rows.push(n_row);
            let _ = writeln!(out, "{title}");
            out.push_str(&render_table(&header, &rows));
            out.push('\n');
        }
        let mut rows = Vec::new();
        let mut avail = vec!["Availability (%)".to_string()];
        avail.extend(self.runs.iter().map(|r| format!("{:.1}", r.availability_pct())));
        rows.push(avail);
        let mut ep = vec!["Epochs".to_string()];
        ep.extend(self.runs.iter().map(|r| r.epochs.to_string()));
        rows.push(ep);
        let mut fb = vec!["Fallback fixes".to_string()];
        fb.extend(self.runs.iter().map(|r| r.fallback_fixes.to_string()));
        rows.push(fb);
        out.push_str(&render_table(&header, &rows));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("run,variant,n,availability_pct,{}\n", STAT_KEYS.join(","));
        for r in &self.runs {
            for (variant, s) in [("all", r.all), ("excluding_fallback", r.excluding_fallback)] {
                let vals = s.map_or_else(|| vec![String::new(); 5], |s| s.values().iter().map(f64::to_string).collect());
                let _ = writeln!(
                    out,
                    "{},{variant},{},{},{}",
                    r.label,
                    s.map_or(0, |s| s.n),
                    r.availability_pct(),
                    vals.join(",")
                );
            }
        }
        out
    }
}

/// Side-by-side statistics of two runs over the same epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub a: ErrorStats,
    pub b: ErrorStats,
    /// Epochs fixed by both runs.
    pub n: usize,
}

impl Comparison {
    /// `a − b` per statistic, in report row order.
    pub fn deltas(&self) -> [f64; 5] {
        let (a, b) = (self.a.values(), self.b.values());
        std::array::from_fn(|i| a[i] - b[i])
    }

    pub fn render_text(&self) -> String {
        let header = vec![String::new(), self.label_a.clone(), self.label_b.clone(), "delta".into()];
        let (a, b, d) = (self.a.values(), self.b.values(), self.deltas());
        let rows: Vec<Vec<String>> = (0..5)
            .map(|i| {
                let dec = if i < 2 { 3 } else { 1 };
                vec![
                    STAT_NAMES[i].to_string(),
                    format!("{:.dec$}", a[i]),
                    format!("{:.dec$}", b[i]),
                    format!("{:+.dec$}", d[i]),
                ]
            })
            .collect();
        render_table(&header, &rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("statistic,{},{},delta\n", self.label_a, self.label_b);
        let (a, b, d) = (self.a.values(), self.b.values(), self.deltas());
        for i in 0..5 {
            let _ = writeln!(out, "{},{},{},{}", STAT_KEYS[i], a[i], b[i], d[i]);
        }
        out
    }
}

fn epoch_keys(rows: &[FixRow]) -> BTreeSet<(u64, u32)> {
    rows.iter().map(|r| (r.t.to_bits(), r.gnb_id)).collect()
}

/// Statistics of two runs over the epochs where both produced a fix.
pub fn compare_runs(label_a: &str, a: &[FixRow], label_b: &str, b: &[FixRow]) -> Result<Comparison> {
    if epoch_keys(a) != epoch_keys(b) {
        return Err(Error::Data(format!("runs {label_a:?} and {label_b:?} cover different epochs")));
    }
    let b_errs: BTreeMap<(u64, u32), Option<f64>> = b.iter().map(|r| ((r.t.to_bits(), r.gnb_id), r.error())).collect();
    let (ea, eb): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|r| Some((r.error()?, b_errs[&(r.t.to_bits(), r.gnb_id)]?)))
        .unzip();
    Ok(Comparison {
        label_a: label_a.into(),
        label_b: label_b.into(),
        a: error_stats(&ea)?,
        b: error_stats(&eb)?,
        n: ea.len(),
    })
}
