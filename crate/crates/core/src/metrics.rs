//! Error metrics, estimate-to-truth association, ROC construction and
//! bootstrap comparisons.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp;
use crate::error::{Error, Result};
use crate::scenario::{SceneConfig, TruthParams};

/// Processing chain an estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    /// Monostatic processing at SBS1.
    Active,
    /// Bistatic processing without offset mitigation.
    Passive,
    /// Bistatic echo moved onto monostatic coordinates by the correlation
    /// offset estimate.
    PassiveCompensated,
    /// Cooperative output: active and compensated passive combined where
    /// the correlation stage matched the target, the active estimate
    /// otherwise.
    Fused,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Active => "active",
            Source::Passive => "passive",
            Source::PassiveCompensated => "passive_compensated",
            Source::Fused => "fused",
        })
    }
}

/// Estimated quantity, each with its own ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantity {
    /// `R1`
    Range,
    /// `R1 + R2`
    BistaticRange,
    /// `v1`
    Speed,
    /// `v1 - v2`
    BistaticSpeed,
    /// `Omega` from the restricted spatial transform.
    Omega,
    /// `Omega` from the full spatial transform.
    OmegaFull,
}

impl Quantity {
    pub fn truth(self, t: &TruthParams) -> f64 {
        match self {
            Quantity::Range => t.range_active,
            Quantity::BistaticRange => t.bistatic_range(),
            Quantity::Speed => t.speed_active,
            Quantity::BistaticSpeed => t.bistatic_speed(),
            Quantity::Omega | Quantity::OmegaFull => t.omega,
        }
    }

    pub fn is_angle(self) -> bool {
        matches!(self, Quantity::Omega | Quantity::OmegaFull)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Range => "range",
            Quantity::BistaticRange => "bistatic_range",
            Quantity::Speed => "speed",
            Quantity::BistaticSpeed => "bistatic_speed",
            Quantity::Omega => "omega",
            Quantity::OmegaFull => "omega_full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub source: Source,
    pub quantity: Quantity,
    pub value: f64,
}

/// Counters for things that went wrong without aborting the trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub extraction_failed: bool,
    pub offsets_ambiguous: bool,
    pub matched: usize,
    pub unmatched_active: usize,
    pub fusion_failures: usize,
    pub doppler_inconsistent: usize,
    pub doppler_failures: usize,
    pub aoa_failures: usize,
    pub window_misses: usize,
    pub partial_range_sets: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectionStats {
    pub active: f64,
    pub fused: f64,
}

/// Everything one Monte Carlo trial produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub truths: Vec<TruthParams>,
    pub measurements: Vec<Measurement>,
    pub diagnostics: Diagnostics,
    pub detection: DetectionStats,
    /// `(raw, normalised)` MSE of the antenna-summed range correlation
    /// against its direct-term ideal.
    pub direct_term_mse: Option<(f64, f64)>,
    /// Complex multiplies of the restricted and full spatial transforms.
    pub spatial_mults: (u64, u64),
}

impl TrialRecord {
    pub fn values(&self, source: Source, quantity: Quantity) -> Vec<f64> {
        self.measurements
            .iter()
            .filter(|m| m.source == source && m.quantity == quantity)
            .map(|m| m.value)
            .collect()
    }
}

/// Assignment of estimates to truths minimising the total absolute error.
/// Returns `(estimate index, truth index)` pairs; surplus entries on either
/// side stay unassigned.
pub fn associate(estimates: &[f64], truths: &[f64], angular: bool) -> Vec<(usize, usize)> {
    let cost = |e: f64, t: f64| {
        if angular {
            wrap_angle(e - t).abs()
        } else {
            (e - t).abs()
        }
    };
    let (ne, nt) = (estimates.len(), truths.len());
    if ne == 0 || nt == 0 {
        return Vec::new();
    }
    // assign the smaller side; DP over subsets of the larger side
    let swap = ne > nt;
    let (small, large) = if swap { (nt, ne) } else { (ne, nt) };
    let c = |i: usize, j: usize| {
        if swap {
            cost(estimates[j], truths[i])
        } else {
            cost(estimates[i], truths[j])
        }
    };
    if large > 16 {
        // greedy fallback for unusually large target counts
        let mut pairs: Vec<(f64, usize, usize)> = (0..small)
            .flat_map(|i| (0..large).map(move |j| (i, j)))
            .map(|(i, j)| (c(i, j), i, j))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut ui, mut uj) = (vec![false; small], vec![false; large]);
        let mut out = Vec::new();
        for (_, i, j) in pairs {
            if !ui[i] && !uj[j] {
                ui[i] = true;
                uj[j] = true;
                out.push(if swap { (j, i) } else { (i, j) });
            }
        }
        out.sort();
        return out;
    }
    let full = 1usize << large;
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        let i = mask.count_ones() as usize;
        if i >= small || !best[mask].is_finite() {
            continue;
        }
        for j in 0..large {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                let v = best[mask] + c(i, j);
                if v < best[next] {
                    best[next] = v;
                    choice[next] = j;
                }
            }
        }
    }
    let end = (0..full)
        .filter(|m| m.count_ones() as usize == small)
        .min_by(|&a, &b| best[a].total_cmp(&best[b]))
        .expect("at least one complete assignment");
    let mut out = Vec::with_capacity(small);
    let mut mask = end;
    for i in (0..small).rev() {
        let j = choice[mask];
        out.push(if swap { (j, i) } else { (i, j) });
        mask &= !(1 << j);
    }
    out.sort();
    out
}

pub fn wrap_angle(x: f64) -> f64 {
    dsp::wrap_signed(x / (2.0 * PI), 1) * 2.0 * PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    /// Mean normalised squared error (or mean squared error for angles)
    /// over associated targets.
    pub value: f64,
    pub used: usize,
    /// Truths equal to zero, skipped because they cannot normalise.
    pub excluded_zero: usize,
    /// Truths left without an estimate.
    pub missing: usize,
}

/// `mean_l (est_l - true_l)^2 / true_l^2` after association.
pub fn nmse(estimates: &[f64], truths: &[f64]) -> ErrorSummary {
    let pairs = associate(estimates, truths, false);
    let mut acc = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for &(i, j) in &pairs {
        let t = truths[j];
        if t == 0.0 {
            excluded += 1;
            continue;
        }
        acc += ((estimates[i] - t) / t).powi(2);
        used += 1;
    }
    if excluded > 0 {
        log::warn!("{excluded} zero-valued truth(s) excluded from NMSE");
    }
    ErrorSummary {
        value: if used > 0 { acc / used as f64 } else { f64::NAN },
        used,
        excluded_zero: excluded,
        missing: truths.len() - pairs.len(),
    }
}

/// Mean squared (wrapped) angular error after association; the square root
/// of the aggregated value is the RMSE.
pub fn angle_mse(estimates: &[f64], truths: &[f64]) -> ErrorSummary {
    let pairs = associate(estimates, truths, true);
    let acc: f64 = pairs.iter().map(|&(i, j)| wrap_angle(estimates[i] - truths[j]).powi(2)).sum();
    ErrorSummary {
        value: if pairs.is_empty() { f64::NAN } else { acc / pairs.len() as f64 },
        used: pairs.len(),
        excluded_zero: 0,
        missing: truths.len() - pairs.len(),
    }
}

/// Root-mean-square angular error over a set of trials' estimates.
pub fn rmse_aoa(estimates: &[f64], truths: &[f64]) -> f64 {
    angle_mse(estimates, truths).value.sqrt()
}

/// `mean_n |measured(n) - ideal(n)|^2`.
pub fn mse_direct_term(measured: &[Complex64], ideal: &[Complex64]) -> Result<f64> {
    if measured.len() != ideal.len() || measured.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "direct-term lengths {} and {}",
            measured.len(),
            ideal.len()
        )));
    }
    Ok(measured.iter().zip(ideal).map(|(m, i)| (m - i).norm_sqr()).sum::<f64>() / measured.len() as f64)
}

/// Reference standard deviations `Delta R / sqrt(2 SNR)` and
/// `Delta V / sqrt(2 SNR)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbReference {
    pub range_sigma: f64,
    pub speed_sigma: f64,
}

pub fn crlb_reference(config: &SceneConfig, snr_linear: f64) -> CrlbReference {
    let s = (2.0 * snr_linear).sqrt();
    CrlbReference {
        range_sigma: config.range_resolution() / s,
        speed_sigma: config.velocity_resolution() / s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub pfa: f64,
    pub threshold: f64,
    /// False-alarm rate actually achieved on the noise-only set.
    pub achieved_pfa: f64,
    pub pd: f64,
}

/// Smallest trial count that resolves `pfa` with ten expected false alarms.
pub fn min_roc_trials(pfa: f64) -> usize {
    (10.0 / pfa).ceil() as usize
}

/// Empirical ROC: for each target false-alarm rate the threshold is the
/// noise-only order statistic that keeps the exceedance fraction at or
/// below `pfa`.
pub fn roc(h0: &[f64], h1: &[f64], pfa_grid: &[f64]) -> Result<Vec<RocPoint>> {
    let pfa_min = pfa_grid.iter().copied().fold(1.0, f64::min);
    let required = min_roc_trials(pfa_min);
    let got = h0.len().min(h1.len());
    if got < required {
        return Err(Error::InsufficientTrials { required, got });
    }
    let mut sorted = h0.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n0 = sorted.len();
    Ok(pfa_grid
        .iter()
        .map(|&pfa| {
            let k = ((pfa * n0 as f64).floor() as usize).min(n0 - 1);
            let threshold = sorted[k];
            let exceed = |v: &[f64]| v.iter().filter(|&&x| x > threshold).count() as f64 / v.len() as f64;
            RocPoint {
                pfa,
                threshold,
                achieved_pfa: exceed(h0),
                pd: exceed(h1),
            }
        })
        .collect())
}

/// Fraction of `resamples` index resamples (drawn with replacement from
/// `0..n`) on which `holds` is true.
pub fn bootstrap_fraction<F: FnMut(&[usize]) -> bool>(n: usize, resamples: usize, seed: u64, mut holds: F) -> f64 {
    if n == 0 || resamples == 0 {
        return f64::NAN;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut wins = 0usize;
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        wins += holds(&idx) as usize;
    }
    wins as f64 / resamples as f64
}

/// Median of `values` over the resampled indices.
pub fn resampled_median(values: &[f64], idx: &[usize]) -> f64 {
    let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    dsp::median(&v)
}

/// Fraction of paired bootstrap resamples in which `median(a) <= median(b)`.
pub fn paired_bootstrap_le(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = a.len().min(b.len());
    bootstrap_fraction(n, resamples, seed, |idx| resampled_median(a, idx) <= resampled_median(b, idx))
}
