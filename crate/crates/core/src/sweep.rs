//! Batch experiment: sample channels, run selectors over a range of `k`
//! and tabulate the achieved capacities.
//!
//! Channel `i` is generated with seed `generator.seed + i` (wrapping), so
//! any row can be regenerated on its own. Channels run in parallel; rows are
//! sorted by `(seed, k, method)` before they are returned.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{BoundMode, BoundOptions};
use crate::capacity::{blahut_arimoto, BaOptions};
use crate::error::{Error, Result};
use crate::gen::{sample_dmc, GeneratorConfig};
use crate::prob::nats_to_bits;
use crate::select::{select_with, Method, SelectOptions, DEFAULT_BUDGET};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RESULT_COLUMNS: [&str; 9] = [
    "seed",
    "k",
    "method",
    "capacity_bits",
    "full_capacity_bits",
    "bound_bits",
    "eta",
    "wall_time_s",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub generator: GeneratorConfig,
    pub k_values: Vec<usize>,
    pub num_channels: usize,
    pub methods: Vec<Method>,
    pub compute_bound: bool,
    pub bound_mode: BoundMode,
    pub exhaustive_budget: u128,
    /// Skip exhaustive search above this `k`.
    pub exhaustive_max_k: Option<usize>,
    pub tol_nats: f64,
    /// Fill the `wall_time_s` column; off by default so reruns are
    /// byte-identical.
    pub record_wall_time: bool,
    pub output_path: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            k_values: (2..=10).collect(),
            num_channels: 50,
            methods: vec![Method::Clustering, Method::Exhaustive],
            compute_bound: true,
            bound_mode: BoundMode::Surrogate,
            exhaustive_budget: DEFAULT_BUDGET,
            exhaustive_max_k: Some(5),
            tol_nats: 1e-9,
            record_wall_time: false,
            output_path: None,
        }
    }
}

impl SweepConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k_values.is_empty() {
            return bad("k_values must not be empty".into());
        }
        if !self.k_values.windows(2).all(|w| w[0] < w[1]) {
            return bad("k_values must be strictly increasing".into());
        }
        let nx = self.generator.num_inputs;
        if self.k_values[0] == 0 || *self.k_values.last().unwrap() > nx {
            return bad(format!("k_values must lie in [1, {nx}]"));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if !(self.tol_nats > 0.0) {
            return bad("tol_nats must be positive".into());
        }
        Ok(())
    }

    fn runs(&self, method: Method, k: usize) -> bool {
        method != Method::Exhaustive || self.exhaustive_max_k.is_none_or(|m| k <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub k: usize,
    pub method: Method,
    pub capacity_bits: Option<f64>,
    pub full_capacity_bits: Option<f64>,
    /// `None` when the certificate is unavailable or not requested.
    pub bound_bits: Option<f64>,
    pub eta: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub k: usize,
    pub method: Method,
    pub count: usize,
    pub mean_capacity_bits: f64,
    pub std_capacity_bits: f64,
    pub mean_full_capacity_bits: f64,
    pub bound_count: usize,
    pub mean_bound_bits: Option<f64>,
    pub std_bound_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

/// Formats with 12 significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.11e}")
}

/// Rounds to the precision written to CSV, so values read back compare
/// equal to the ones held in memory.
fn round12(v: f64) -> f64 {
    format_number(v).parse().expect("formatted float parses")
}

fn channel_rows(config: &SweepConfig, index: usize) -> Vec<SweepRow> {
    let seed = config.generator.seed.wrapping_add(index as u64);
    let ba = BaOptions::new(config.tol_nats, BaOptions::default().max_iter);
    let row = |k, method, error: String| SweepRow {
        seed,
        k,
        method,
        capacity_bits: None,
        full_capacity_bits: None,
        bound_bits: None,
        eta: None,
        wall_time_s: None,
        error: Some(error),
    };
    let tasks: Vec<(usize, Method)> = config
        .k_values
        .iter()
        .flat_map(|&k| config.methods.iter().map(move |&m| (k, m)))
        .filter(|&(k, m)| config.runs(m, k))
        .collect();

    let channel = match sample_dmc(&config.generator.with_seed(seed)) {
        Ok(c) => c,
        Err(e) => return tasks.into_iter().map(|(k, m)| row(k, m, e.to_string())).collect(),
    };
    let full = match blahut_arimoto(&channel, &ba) {
        Ok(r) => round12(nats_to_bits(r.capacity_nats)),
        Err(e) => return tasks.into_iter().map(|(k, m)| row(k, m, e.to_string())).collect(),
    };

    tasks
        .into_iter()
        .map(|(k, method)| {
            let opts = SelectOptions {
                ba,
                bound: config.compute_bound.then(|| BoundOptions {
                    mode: config.bound_mode,
                    ba,
                    ..BoundOptions::default()
                }),
                budget: config.exhaustive_budget,
                // distinct random-baseline stream per (channel, k)
                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64),
            };
            let start = Instant::now();
            match select_with(method, &channel, k, &opts) {
                Ok(sel) => {
                    let bound = sel.bound.as_ref();
                    SweepRow {
                        seed,
                        k,
                        method,
                        capacity_bits: Some(round12(nats_to_bits(sel.capacity_nats))),
                        full_capacity_bits: Some(full),
                        bound_bits: bound.and_then(|b| b.bound_bits()).map(round12),
                        eta: bound.map(|b| round12(b.eta)),
                        wall_time_s: config
                            .record_wall_time
                            .then(|| round12(start.elapsed().as_secs_f64())),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    full_capacity_bits: Some(full),
                    ..row(k, method, e.to_string())
                },
            }
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Mean and sample standard deviation per `(k, method)` over rows without
/// errors.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        if r.error.is_none() {
            groups.entry((r.k, r.method)).or_default().push(r);
        }
    }
    groups
        .into_iter()
        .map(|((k, method), rs)| {
            let caps: Vec<f64> = rs.iter().filter_map(|r| r.capacity_bits).collect();
            let fulls: Vec<f64> = rs.iter().filter_map(|r| r.full_capacity_bits).collect();
            let bounds: Vec<f64> = rs.iter().filter_map(|r| r.bound_bits).collect();
            let (mean, std) = mean_std(&caps);
            let bound = (!bounds.is_empty()).then(|| mean_std(&bounds));
            SummaryRow {
                k,
                method,
                count: caps.len(),
                mean_capacity_bits: mean,
                std_capacity_bits: std,
                mean_full_capacity_bits: mean_std(&fulls).0,
                bound_count: bounds.len(),
                mean_bound_bits: bound.map(|b| b.0),
                std_bound_bits: bound.map(|b| b.1),
            }
        })
        .collect()
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let mut rows: Vec<SweepRow> = (0..config.num_channels)
        .into_par_iter()
        .flat_map_iter(|i| channel_rows(config, i))
        .collect();
    rows.sort_by(|a, b| (a.seed, a.k, a.method).cmp(&(b.seed, b.k, b.method)));
    let summary = summarize(&rows);
    Ok(SweepOutput { rows, summary })
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.k.to_string(),
            r.method.to_string(),
            cell(r.capacity_bits),
            cell(r.full_capacity_bits),
            cell(r.bound_bits),
            cell(r.eta),
            cell(r.wall_time_s),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    finish_csv(w)
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "k",
        "method",
        "count",
        "mean_capacity_bits",
        "std_capacity_bits",
        "mean_full_capacity_bits",
        "bound_count",
        "mean_bound_bits",
        "std_bound_bits",
    ])?;
    for s in summary {
        w.write_record([
            s.k.to_string(),
            s.method.to_string(),
            s.count.to_string(),
            format_number(s.mean_capacity_bits),
            format_number(s.std_capacity_bits),
            format_number(s.mean_full_capacity_bits),
            s.bound_count.to_string(),
            cell(s.mean_bound_bits),
            cell(s.std_bound_bits),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        return Err(Error::Parse(format!("unexpected columns {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
        }
    };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}"))) };
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(SweepRow {
                seed: int(&rec[0])?,
                k: int(&rec[1])? as usize,
                method: rec[2].parse()?,
                capacity_bits: num(&rec[3])?,
                full_capacity_bits: num(&rec[4])?,
                bound_bits: num(&rec[5])?,
                eta: num(&rec[6])?,
                wall_time_s: num(&rec[7])?,
                error: (!rec[8].is_empty()).then(|| rec[8].to_string()),
            })
        })
        .collect()
}

/// Writes `results.csv` and `summary.csv` into `dir`.
pub fn write_sweep(dir: &Path, output: &SweepOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESULTS_FILE), rows_to_csv(&output.rows)?)?;
    fs::write(dir.join(SUMMARY_FILE), summary_to_csv(&output.summary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            generator: GeneratorConfig {
                num_prototypes: 3,
                ..GeneratorConfig::new(6, 5)
            },
            k_values: vec![1, 2, 3, 6],
            num_channels: 3,
            methods: Method::ALL.to_vec(),
            exhaustive_max_k: Some(3),
            ..SweepConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        let mut c = small();
        c.k_values = vec![3, 2];
        assert!(c.validate().is_err());
        c.k_values = vec![0, 2];
        assert!(c.validate().is_err());
        c.k_values = vec![2, 7];
        assert!(c.validate().is_err());
        let c = SweepConfig::from_json_str(
            r#"{"generator": {"num_inputs": 8, "num_outputs": 8, "num_prototypes": 3}, "k_values": [2, 3], "num_channels": 2}"#,
        )
        .unwrap();
        assert_eq!(c.methods, vec![Method::Clustering, Method::Exhaustive]);
        assert!(SweepConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rows_cover_grid_and_record_errors() {
        let out = run_sweep(&small()).unwrap();
        // greedy at k = 1 is an error row, exhaustive at k = 6 is skipped
        assert_eq!(out.rows.len(), 3 * (4 * 4 - 1));
        for r in &out.rows {
            match (r.method, r.k) {
                (Method::Greedy, 1) => assert!(r.error.is_some()),
                _ => {
                    assert!(r.error.is_none(), "{r:?}");
                    let tol = nats_to_bits(2e-9) + 1e-11;
                    assert!(r.capacity_bits.unwrap() <= r.full_capacity_bits.unwrap() + tol);
                }
            }
            assert!(r.wall_time_s.is_none());
        }
        let full_k = out.rows.iter().filter(|r| r.k == 6 && r.method == Method::Clustering);
        for r in full_k {
            assert!((r.capacity_bits.unwrap() - r.full_capacity_bits.unwrap()).abs() < 1e-8);
        }
        assert!(out.rows.windows(2).all(|w| (w[0].seed, w[0].k, w[0].method) < (w[1].seed, w[1].k, w[1].method)));
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let out = run_sweep(&small()).unwrap();
        let text = rows_to_csv(&out.rows).unwrap();
        let back = rows_from_csv(&text).unwrap();
        assert_eq!(back, out.rows);
        assert_eq!(rows_to_csv(&back).unwrap(), text);
        assert_eq!(summarize(&back), out.summary);
        for s in &out.summary {
            let caps: Vec<f64> = back
                .iter()
                .filter(|r| r.k == s.k && r.method == s.method && r.error.is_none())
                .map(|r| r.capacity_bits.unwrap())
                .collect();
            let m = caps.iter().sum::<f64>() / caps.len() as f64;
            assert!((m - s.mean_capacity_bits).abs() < 1e-12);
        }
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_sweep(&small()).unwrap();
        let b = run_sweep(&small()).unwrap();
        assert_eq!(rows_to_csv(&a.rows).unwrap(), rows_to_csv(&b.rows).unwrap());
        assert_eq!(summary_to_csv(&a.summary).unwrap(), summary_to_csv(&b.summary).unwrap());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
