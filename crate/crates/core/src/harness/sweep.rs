//! Parameter sweeps over Monte Carlo trials and the long-format metrics
//! table they produce.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{apply_parameter, run_trial_with, Variant};
use crate::dsp;
use crate::error::{Error, Result};
use crate::metrics::{self, Quantity, Source, TrialRecord};
use crate::scenario::Scene;
use crate::synth::derive_seed;

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "COOPSENSE_WORKERS";

/// Salt separating noise-only trial seeds from target-present ones.
const NULL_SALT: u64 = 0x4e55_4c4c_5f48_3030;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepKind {
    /// Error statistics of every estimate.
    Estimation,
    /// Empirical ROC at each false-alarm rate of the grid.
    Detection { pfa: Vec<f64> },
}

/// One curve family: a parameter swept over `values` with fixed overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub label: String,
    pub overrides: Vec<(String, f64)>,
    pub parameter: String,
    pub values: Vec<f64>,
    pub trials: usize,
    pub variants: Vec<Variant>,
    pub kind: SweepKind,
    pub seed: u64,
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub recipe: String,
    pub series: String,
    pub point: usize,
    pub parameter: String,
    pub value: f64,
    pub variant: String,
    pub metric: String,
    pub metric_value: f64,
    pub trials: usize,
    pub seed_base: u64,
}

/// Worker threads: `COOPSENSE_WORKERS` if set and positive, otherwise the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_trials(scene: &Scene, variant: Variant, seeds: &[u64], null: bool) -> Result<Vec<TrialRecord>> {
    seeds
        .par_iter()
        .map(|&s| run_trial_with(scene, variant, s, null))
        .collect()
}

/// Per-trial error of one (source, quantity) pair, `None` when the trial
/// produced no such estimate.
pub fn trial_error(record: &TrialRecord, source: Source, quantity: Quantity) -> Option<f64> {
    let est = record.values(source, quantity);
    if est.is_empty() {
        return None;
    }
    let truth: Vec<f64> = record.truths.iter().map(|t| quantity.truth(t)).collect();
    let s = if quantity.is_angle() {
        metrics::angle_mse(&est, &truth)
    } else {
        metrics::nmse(&est, &truth)
    };
    s.value.is_finite().then_some(s.value)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

const SOURCES: [Source; 4] = [Source::Active, Source::Passive, Source::PassiveCompensated, Source::Fused];
const QUANTITIES: [Quantity; 6] = [
    Quantity::Range,
    Quantity::BistaticRange,
    Quantity::Speed,
    Quantity::BistaticSpeed,
    Quantity::Omega,
    Quantity::OmegaFull,
];

/// Aggregate statistics of a batch of estimation trials as
/// `(metric, value, trials used)`.
pub fn summarize(records: &[TrialRecord]) -> Vec<(String, f64, usize)> {
    let n = records.len();
    let mut out = Vec::new();
    for q in QUANTITIES {
        for s in SOURCES {
            let errs: Vec<f64> = records.iter().filter_map(|r| trial_error(r, s, q)).collect();
            if errs.is_empty() {
                continue;
            }
            if q.is_angle() {
                out.push((format!("rmse_{q}_{s}"), mean(&errs).sqrt(), errs.len()));
            } else {
                out.push((format!("nmse_{q}_{s}_mean"), mean(&errs), errs.len()));
                out.push((format!("nmse_{q}_{s}_median"), dsp::median(&errs), errs.len()));
            }
        }
    }
    let rate = |f: &dyn Fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n.max(1) as f64;
    out.push(("extraction_failure_rate".into(), rate(&|r| r.diagnostics.extraction_failed), n));
    out.push(("fusion_failure_rate".into(), rate(&|r| r.diagnostics.fusion_failures > 0), n));
    out.push(("window_miss_rate".into(), rate(&|r| r.diagnostics.window_misses > 0), n));
    let matched: Vec<f64> = records.iter().map(|r| r.diagnostics.matched as f64).collect();
    out.push(("matched_mean".into(), mean(&matched), n));
    let dt: Vec<(f64, f64)> = records.iter().filter_map(|r| r.direct_term_mse).collect();
    if !dt.is_empty() {
        let raw: Vec<f64> = dt.iter().map(|d| d.0).collect();
        let norm: Vec<f64> = dt.iter().map(|d| d.1).filter(|v| v.is_finite()).collect();
        out.push(("direct_term_mse_mean".into(), mean(&raw), raw.len()));
        out.push(("direct_term_nmse_mean".into(), mean(&norm), norm.len()));
    }
    let with_aoa: Vec<&TrialRecord> = records.iter().filter(|r| r.spatial_mults.1 > 0).collect();
    if !with_aoa.is_empty() {
        let r: Vec<f64> = with_aoa.iter().map(|r| r.spatial_mults.0 as f64).collect();
        let f: Vec<f64> = with_aoa.iter().map(|r| r.spatial_mults.1 as f64).collect();
        out.push(("spatial_mults_restricted".into(), mean(&r), r.len()));
        out.push(("spatial_mults_full".into(), mean(&f), f.len()));
    }
    out
}

/// Runs every point of `spec` on top of `scene` and returns the metrics
/// rows, in a deterministic order independent of the worker count.
pub fn run_sweep(scene: &Scene, spec: &SweepSpec, recipe: &str) -> Result<Vec<MetricRow>> {
    run_sweep_with_workers(scene, spec, recipe, worker_count())
}

/// As [`run_sweep`] on a pool of exactly `workers` threads.
pub fn run_sweep_with_workers(scene: &Scene, spec: &SweepSpec, recipe: &str, workers: usize) -> Result<Vec<MetricRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| sweep_inner(scene, spec, recipe))
}

fn sweep_inner(scene: &Scene, spec: &SweepSpec, recipe: &str) -> Result<Vec<MetricRow>> {
    let mut base = scene.clone();
    for (name, v) in &spec.overrides {
        apply_parameter(&mut base, name, *v)?;
    }
    let mut rows = Vec::new();
    for (point, &value) in spec.values.iter().enumerate() {
        let mut s = base.clone();
        apply_parameter(&mut s, &spec.parameter, value)?;
        let seeds: Vec<u64> = (0..spec.trials as u64)
            .map(|t| derive_seed(spec.seed, &[point as u64, t]))
            .collect();
        let row = |variant: String, metric: String, metric_value: f64, trials: usize| MetricRow {
            recipe: recipe.to_string(),
            series: spec.label.clone(),
            point,
            parameter: spec.parameter.clone(),
            value,
            variant,
            metric,
            metric_value,
            trials,
            seed_base: spec.seed,
        };
        log::info!("{recipe}/{}: {} = {value} ({} trials)", spec.label, spec.parameter, spec.trials);
        match &spec.kind {
            SweepKind::Estimation => {
                let snr = 10f64.powf(s.config.snr_passive_db / 10.0);
                let crlb = metrics::crlb_reference(&s.config, snr);
                rows.push(row("reference".into(), "crlb_range_sigma_m".into(), crlb.range_sigma, 0));
                rows.push(row("reference".into(), "crlb_speed_sigma_mps".into(), crlb.speed_sigma, 0));
                for &variant in &spec.variants {
                    let records = run_trials(&s, variant, &seeds, false)?;
                    for (metric, v, used) in summarize(&records) {
                        rows.push(row(variant.to_string(), metric, v, used));
                    }
                }
            }
            SweepKind::Detection { pfa } => {
                let null_seeds: Vec<u64> = (0..spec.trials as u64)
                    .map(|t| derive_seed(spec.seed ^ NULL_SALT, &[point as u64, t]))
                    .collect();
                for &variant in &spec.variants {
                    let h1 = run_trials(&s, variant, &seeds, false)?;
                    let h0 = run_trials(&s, variant, &null_seeds, true)?;
                    let stat = |rs: &[TrialRecord], fused: bool| -> Vec<f64> {
                        rs.iter()
                            .map(|r| if fused { r.detection.fused } else { r.detection.active })
                            .collect()
                    };
                    for (name, fused) in [("active", false), ("fused", true)] {
                        let curve = metrics::roc(&stat(&h0, fused), &stat(&h1, fused), pfa)?;
                        for p in curve {
                            rows.push(row(variant.to_string(), format!("pd_{name}@pfa={}", p.pfa), p.pd, spec.trials));
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header line.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
