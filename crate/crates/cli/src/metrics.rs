//! Metric records and their CSV / JSON emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Method, Mode};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    All,
    Low,
    High,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::All => "all",
            Band::Low => "low",
            Band::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub of: f64,
    pub lambda: f64,
    pub snr_db: Option<f64>,
    pub bits: Option<u32>,
    pub band: Band,
    /// Share of test signals whose NMSE is strictly below the classical ADC's.
    pub outperformance_pct: f64,
    /// Mean `10 log10(baseline / method)` NMSE ratio over outperforming signals.
    pub nmse_improvement_db: Option<f64>,
    /// Median per-signal recovery time.
    pub runtime_s: Option<f64>,
    pub count: usize,
    pub mean_nmse: f64,
    pub mean_baseline_nmse: f64,
}

/// Fixed CSV header; the fourth column is `snr_db` or `bits` by mode.
pub fn csv_header(mode: Mode) -> &'static str {
    match mode {
        Mode::Awgn => "method,of,lambda,snr_db,band,outperf_pct,improvement_db,runtime_s,count",
        Mode::TwoBand => "method,of,lambda,bits,band,outperf_pct,improvement_db,runtime_s,count",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn to_csv(mode: Mode, records: &[MetricsRecord]) -> String {
    let mut out = String::from(csv_header(mode));
    out.push('\n');
    for r in records {
        let level = match mode {
            Mode::Awgn => opt(r.snr_db),
            Mode::TwoBand => r.bits.map(|b| b.to_string()).unwrap_or_default(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.of,
            r.lambda,
            level,
            r.band.name(),
            r.outperformance_pct,
            opt(r.nmse_improvement_db),
            opt(r.runtime_s),
            r.count
        );
    }
    out
}

/// Writes `metrics.csv` and `summary.json` into `dir`.
pub fn write_metrics(dir: &Path, stem: &str, mode: Mode, records: &[MetricsRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, to_csv(mode, records)).map_err(|e| HarnessError::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(records).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(&json, text + "\n").map_err(|e| HarnessError::io(&json, e))?;
    Ok(())
}

/// Median of `times` after dropping the first `warmup` entries.
pub fn median_runtime(times: &[f64], warmup: usize) -> Option<f64> {
    let mut kept: Vec<f64> = if times.len() > warmup {
        times[warmup..].to_vec()
    } else {
        times.to_vec()
    };
    if kept.is_empty() {
        return None;
    }
    kept.sort_by(f64::total_cmp);
    let mid = kept.len() / 2;
    Some(if kept.len() % 2 == 0 {
        0.5 * (kept[mid - 1] + kept[mid])
    } else {
        kept[mid]
    })
}

/// Outperformance percentage and mean dB improvement over winning signals.
///
/// Ties count against the method.
pub fn compare(pairs: &[(f64, f64)]) -> (f64, Option<f64>) {
    if pairs.is_empty() {
        return (0.0, None);
    }
    let wins: Vec<f64> = pairs
        .iter()
        .filter(|(m, b)| m < b)
        .map(|&(m, b)| 10.0 * (b / m.max(f64::MIN_POSITIVE)).log10())
        .collect();
    let pct = 100.0 * wins.len() as f64 / pairs.len() as f64;
    let gain = (!wins.is_empty()).then(|| wins.iter().sum::<f64>() / wins.len() as f64);
    (pct, gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_do_not_count() {
        let (pct, gain) = compare(&[(0.0, 0.0), (0.1, 0.1)]);
        assert_eq!(pct, 0.0);
        assert_eq!(gain, None);
        let (pct, gain) = compare(&[(0.01, 0.1), (0.2, 0.1)]);
        assert_eq!(pct, 50.0);
        assert!((gain.unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn median_skips_warmup() {
        assert_eq!(median_runtime(&[9.0, 9.0, 9.0, 1.0, 3.0, 2.0], 3), Some(2.0));
        assert_eq!(median_runtime(&[4.0, 2.0], 3), Some(3.0));
        assert_eq!(median_runtime(&[], 3), None);
    }

    #[test]
    fn csv_layout() {
        let r = MetricsRecord {
            method: Method::B2r2,
            of: 2.0,
            lambda: 0.25,
            snr_db: Some(25.0),
            bits: None,
            band: Band::All,
            outperformance_pct: 0.0,
            nmse_improvement_db: None,
            runtime_s: None,
            count: 10,
            mean_nmse: 1.0,
            mean_baseline_nmse: 0.01,
        };
        let csv = to_csv(Mode::Awgn, &[r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], csv_header(Mode::Awgn));
        assert_eq!(lines[1], "b2r2,2,0.25,25,all,0,,,10");
    }
}
