//! Monte Carlo trial pipeline, parameter sweeps and the named experiment
//! recipes.

mod recipes;
mod sweep;

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aoa::{self, MulCounter};
use crate::cccs::{self, Axis};
use crate::error::{Error, Result};
use crate::estimate::{self, FusionWeights};
use crate::extract;
use crate::metrics::{self, DetectionStats, Diagnostics, Measurement, Quantity, Source, TrialRecord};
use crate::scenario::{validate_config, Scene, TruthParams};
use crate::synth::{self, stream, OffsetTrack, SymbolWindow};

pub use recipes::{apply_parameter, recipe, run_recipe, RECIPES};
pub use sweep::{run_sweep, run_sweep_with_workers, summarize, trial_error, worker_count, write_metrics_csv, MetricRow, SweepKind, SweepSpec, WORKERS_ENV};

/// Which processing chain a trial exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Monostatic processing only.
    ActiveOnly,
    /// Bistatic processing with the clock offsets left in place.
    PassiveOnly,
    /// Correlation-based offset mitigation and fusion.
    Cooperative,
    /// Offsets zeroed and the per-target offsets taken from ground truth;
    /// the correlation stage is never run.
    PerfectSync,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ActiveOnly,
        Variant::PassiveOnly,
        Variant::Cooperative,
        Variant::PerfectSync,
    ];

    fn reports_active(self) -> bool {
        self != Variant::PassiveOnly
    }

    fn reports_passive(self) -> bool {
        self != Variant::ActiveOnly
    }

    fn fuses(self) -> bool {
        matches!(self, Variant::Cooperative | Variant::PerfectSync)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::ActiveOnly => "active-only",
            Variant::PassiveOnly => "passive-only",
            Variant::Cooperative => "cooperative",
            Variant::PerfectSync => "perfect-sync",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::ConfigParse(format!("unknown variant `{s}`")))
    }
}

/// Per-target association of an active peak, a passive peak and the lumped
/// range offset between them.
#[derive(Debug, Clone, Copy)]
struct Track {
    active_delay: Option<f64>,
    passive_delay: Option<f64>,
    offset: Option<f64>,
    /// Ground-truth index, known only for the genie-aided variant.
    truth: Option<usize>,
    fused_delay: Option<f64>,
    fused_doppler: Option<f64>,
}

impl Track {
    fn new(active: Option<f64>, passive: Option<f64>, offset: Option<f64>, truth: Option<usize>) -> Self {
        Track {
            active_delay: active,
            passive_delay: passive,
            offset,
            truth,
            fused_delay: None,
            fused_doppler: None,
        }
    }
}

/// Search half-width, in resolution cells, when following per-symbol
/// timing offsets.
const TRACK_HALF_WIDTH_CELLS: f64 = 3.0;

fn amplitude(snr_db: f64) -> f64 {
    if snr_db.is_finite() {
        10f64.powf(snr_db / 20.0)
    } else {
        1.0
    }
}

fn expected_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoStableOffsets | Error::WindowMiss(_) | Error::InconsistentRanging(_) | Error::EmptyWindow(_)
    )
}

/// One Monte Carlo trial of `variant` on `scene` with the given seed.
pub fn run_trial(scene: &Scene, variant: Variant, seed: u64) -> Result<TrialRecord> {
    run_trial_with(scene, variant, seed, false)
}

/// As [`run_trial`]; with `null_hypothesis` every target gain is zeroed so
/// the grids hold noise only (detection trials).
pub fn run_trial_with(scene: &Scene, variant: Variant, seed: u64, null_hypothesis: bool) -> Result<TrialRecord> {
    let mut config = scene.config.clone();
    config.seed = seed;
    let report = validate_config(&config);
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report));
    }
    let p = config.processing.clone();
    let n_targets = scene.targets.len();
    let geometry = scene.truths().map_err(Error::at("scenario"))?;

    // gains scaled against unit noise variance
    let (a1, a2) = (amplitude(config.snr_active_db), amplitude(config.snr_passive_db));
    let truths: Vec<TruthParams> = geometry
        .iter()
        .map(|t| {
            let scale = if null_hypothesis { 0.0 } else { 1.0 };
            TruthParams {
                gain_active: t.gain_active * a1 * scale,
                gain_passive: t.gain_passive * a2 * scale,
                ..*t
            }
        })
        .collect();

    let offsets = match variant {
        Variant::PerfectSync => OffsetTrack::zero(config.n_symbols),
        _ => synth::sample_offsets(&config, &scene.offsets).map_err(Error::at("synth"))?,
    };
    let m0 = p.ref_symbol;
    let window = if p.stages.doppler {
        SymbolWindow::full(config.n_symbols)
    } else {
        SymbolWindow::single(m0)
    };

    // synthesis
    let (d1, d2) = {
        let at = Error::at("synth");
        let tx1 = synth::generate_tx(&config, stream::TX_ACTIVE, window);
        let tx2 = synth::generate_tx(&config, stream::TX_PASSIVE, window);
        let mut rx1 = synth::apply_active_channel(&tx1, &truths, &config).map_err(&at)?;
        let mut rx2 = synth::apply_passive_channel(&tx2, &truths, &offsets, &config).map_err(&at)?;
        if p.band_leakage_db.is_finite() {
            let leak = amplitude(p.band_leakage_db);
            let (c1, c2) = (rx1.clone(), rx2.clone());
            rx1.add_scaled(&c2, leak).map_err(&at)?;
            rx2.add_scaled(&c1, leak).map_err(&at)?;
        }
        if config.snr_active_db.is_finite() {
            synth::add_noise_variance(&mut rx1, 1.0, &mut synth::stream_rng(seed, stream::NOISE_ACTIVE));
        }
        if config.snr_passive_db.is_finite() {
            synth::add_noise_variance(&mut rx2, 1.0, &mut synth::stream_rng(seed, stream::NOISE_PASSIVE));
        }
        let at = Error::at("extract");
        (
            extract::divide(&rx1, &tx1).map_err(&at)?,
            extract::divide(&rx2, &tx2).map_err(&at)?,
        )
    };

    let mut record = TrialRecord {
        seed,
        truths: truths.clone(),
        measurements: Vec::new(),
        diagnostics: Diagnostics::default(),
        detection: DetectionStats::default(),
        direct_term_mse: None,
        spatial_mults: (0, 0),
    };
    let diag = &mut record.diagnostics;
    let mut push = |source, quantity, value| {
        record.measurements.push(Measurement {
            source,
            quantity,
            value,
        })
    };

    // range
    let at = Error::at("estimate");
    let k1 = extract::range_vectors(&d1, m0).map_err(&at)?;
    let k2 = extract::range_vectors(&d2, m0).map_err(&at)?;
    let prof1 = estimate::range_profile(&k1, &config).map_err(&at)?;
    let prof2 = estimate::range_profile(&k2, &config).map_err(&at)?;
    let est1 = estimate::read_estimates(&prof1, n_targets, &config);
    let est2 = estimate::read_estimates(&prof2, n_targets, &config);
    record.detection.active = prof1.values.iter().copied().fold(0.0, f64::max);
    let mut fused_stat: Option<f64> = None;

    if variant.reports_active() {
        for pk in &est1.peaks {
            push(Source::Active, Quantity::Range, estimate::range_from_delay(pk.coordinate));
        }
        diag.partial_range_sets += est1.is_partial() as usize;
    }
    if variant.reports_passive() {
        for pk in &est2.peaks {
            push(Source::Passive, Quantity::BistaticRange, estimate::bistatic_from_delay(pk.coordinate));
        }
        diag.partial_range_sets += est2.is_partial() as usize;
    }

    let mut tracks: Vec<Track> = match variant {
        Variant::ActiveOnly => est1.peaks.iter().map(|p| Track::new(Some(p.coordinate), None, None, None)).collect(),
        Variant::PassiveOnly => est2.peaks.iter().map(|p| Track::new(None, Some(p.coordinate), None, None)).collect(),
        Variant::Cooperative => {
            let corr = cccs::correlate(&k1, &k2, Axis::Range).map_err(Error::at("cccs"))?;
            let ideal = cccs::ideal_direct_term(&truths, &offsets, m0, &config);
            let measured = cccs::antenna_vector_sum(&corr);
            let raw = metrics::mse_direct_term(&measured, &ideal).map_err(Error::at("metrics"))?;
            let power = ideal.iter().map(Complex64::norm_sqr).sum::<f64>() / ideal.len() as f64;
            record.direct_term_mse = Some((raw, if power > 0.0 { raw / power } else { f64::NAN }));
            match cccs::extract_offsets(&corr, n_targets, &config) {
                Ok(set) => {
                    diag.offsets_ambiguous = set.ambiguous;
                    let offs = set.offsets();
                    let m = cccs::match_peaks(&est1.coordinates(), &offs, &est2.coordinates(), Axis::Range, &config);
                    diag.matched = m.triples.len();
                    diag.unmatched_active = m.unmatched_active.len();
                    let matched = m.triples.iter().map(|t| {
                        Track::new(
                            Some(est1.peaks[t.active].coordinate),
                            Some(est2.peaks[t.passive].coordinate),
                            Some(offs[t.offset]),
                            None,
                        )
                    });
                    let unmatched = m
                        .unmatched_active
                        .iter()
                        .map(|&i| Track::new(Some(est1.peaks[i].coordinate), None, None, None));
                    matched.chain(unmatched).collect()
                }
                Err(e) if expected_failure(&e) => {
                    diag.extraction_failed = true;
                    est1.peaks.iter().map(|p| Track::new(Some(p.coordinate), None, None, None)).collect()
                }
                Err(e) => return Err(Error::at("cccs")(e)),
            }
        }
        Variant::PerfectSync => {
            let tau1: Vec<f64> = truths.iter().map(|t| t.delay_active).collect();
            let tau2: Vec<f64> = truths.iter().map(|t| t.delay_passive).collect();
            let a = metrics::associate(&est1.coordinates(), &tau1, false);
            let b = metrics::associate(&est2.coordinates(), &tau2, false);
            (0..est1.peaks.len())
                .map(|i| {
                    let ta = Some(est1.peaks[i].coordinate);
                    let pair = a
                        .iter()
                        .find(|&&(i2, _)| i2 == i)
                        .and_then(|&(_, l)| Some((b.iter().find(|&&(_, l2)| l2 == l)?.0, l)));
                    match pair {
                        Some((j, l)) => Track::new(
                            ta,
                            Some(est2.peaks[j].coordinate),
                            Some(truths[l].delay_deviation()),
                            Some(l),
                        ),
                        None => Track::new(ta, None, None, None),
                    }
                })
                .collect()
        }
    };

    // compensation and fusion on the range axis
    let cell_bins = (config.delay_cell() / prof1.bin_width).round() as usize;
    if variant.fuses() {
        for tr in tracks.iter_mut() {
            let (Some(ta), Some(off)) = (tr.active_delay, tr.offset) else {
                // unmatched: the cooperative output keeps the active estimate
                if let Some(ta) = tr.active_delay {
                    push(Source::Fused, Quantity::Range, estimate::range_from_delay(ta));
                    tr.fused_delay = Some(ta);
                }
                continue;
            };
            let comp = estimate::compensate(&k2, off, Axis::Range, 0, &config);
            let aligned = estimate::align_phase(&k1, &comp, &config);
            let pc_prof = estimate::range_profile(&aligned, &config).map_err(&at)?;
            let pc = estimate::peak_near(&pc_prof, ta, cell_bins);
            let fused = estimate::fuse(&k1, &aligned, FusionWeights::default(), p.fusion, Axis::Range, &config)
                .map_err(&at)?;
            let pf = estimate::peak_near(&fused, ta, cell_bins);
            if (pc.coordinate - ta).abs() > config.delay_cell() {
                diag.fusion_failures += 1;
            }
            push(Source::PassiveCompensated, Quantity::Range, estimate::range_from_delay(pc.coordinate));
            push(Source::Fused, Quantity::Range, estimate::range_from_delay(pf.coordinate));
            tr.fused_delay = Some(pf.coordinate);
            let peak = fused.values.iter().copied().fold(0.0, f64::max) / SQRT_2;
            fused_stat = Some(fused_stat.map_or(peak, |s: f64| s.max(peak)));
        }
    }
    record.detection.fused = fused_stat.unwrap_or(record.detection.active);

    // Doppler, gated at each track's delay
    let mut gated_active: Vec<Option<Vec<Vec<Complex64>>>> = vec![None; tracks.len()];
    if p.stages.doppler {
        let at = Error::at("doppler");
        let dcell_bins = (config.doppler_cell() * config.symbol_period_s * p.dft_points as f64).round() as usize;
        let tracked_timing = variant == Variant::Cooperative && !scene.offsets.constant_timing();
        for (ti, tr) in tracks.iter_mut().enumerate() {
            let mut f1 = None;
            let mut g1 = None;
            if let Some(ta) = tr.active_delay {
                let g = extract::gated_doppler(&d1, &[ta], &config, p.taper).map_err(&at)?;
                let prof = estimate::doppler_profile(&g, &config).map_err(&at)?;
                if let Some(pk) = estimate::read_estimates(&prof, 1, &config).peaks.first() {
                    f1 = Some(pk.coordinate);
                    push(Source::Active, Quantity::Speed, estimate::speed_from_doppler(pk.coordinate, config.carrier_active_hz));
                }
                g1 = Some(g);
            }
            if let Some(tb) = tr.passive_delay {
                let g = extract::gated_doppler(&d2, &[tb], &config, p.taper).map_err(&at)?;
                let prof = estimate::doppler_profile(&g, &config).map_err(&at)?;
                if let Some(pk) = estimate::read_estimates(&prof, 1, &config).peaks.first() {
                    push(
                        Source::Passive,
                        Quantity::BistaticSpeed,
                        crate::scenario::SPEED_OF_LIGHT * pk.coordinate / config.carrier_passive_hz,
                    );
                }
            }
            if variant.fuses() {
                let (Some(g1v), Some(f1v), Some(ta), Some(tb), Some(off)) =
                    (g1.as_ref(), f1, tr.active_delay, tr.passive_delay, tr.offset)
                else {
                    if let Some(f) = f1 {
                        push(Source::Fused, Quantity::Speed, estimate::speed_from_doppler(f, config.carrier_active_hz));
                        tr.fused_doppler = Some(f);
                    }
                    gated_active[ti] = g1;
                    continue;
                };
                let g2 = if tracked_timing {
                    let x = cccs::track_symbol_offsets(
                        &d1,
                        &d2,
                        &[off],
                        TRACK_HALF_WIDTH_CELLS * config.delay_cell(),
                        &config,
                    )
                    .map_err(&at)?;
                    let delays: Vec<f64> = x[0].iter().map(|v| ta + v).collect();
                    extract::gated_doppler(&d2, &delays, &config, p.taper).map_err(&at)?
                } else {
                    extract::gated_doppler(&d2, &[tb], &config, p.taper).map_err(&at)?
                };
                let doff = if let Some(l) = tr.truth {
                    Some(truths[l].doppler_deviation())
                } else {
                    let corr = cccs::correlate(g1v, &g2, Axis::Doppler).map_err(&at)?;
                    match cccs::extract_doppler_offsets(&corr, 1, &config) {
                        Ok(set) => {
                            let o = set.peaks[0].offset;
                            let f2 = estimate::doppler_profile(&g2, &config)
                                .map(|pr| estimate::read_estimates(&pr, 1, &config).coordinates())
                                .map_err(&at)?;
                            if cccs::match_doppler(&[f1v], &[o], &f2, &config).triples.is_empty() {
                                diag.doppler_inconsistent += 1;
                            }
                            Some(o)
                        }
                        Err(e) if expected_failure(&e) => {
                            diag.doppler_failures += 1;
                            push(Source::Fused, Quantity::Speed, estimate::speed_from_doppler(f1v, config.carrier_active_hz));
                            tr.fused_doppler = Some(f1v);
                            None
                        }
                        Err(e) => return Err(at(e)),
                    }
                };
                if let Some(o) = doff {
                    let comp = estimate::compensate(&g2, o, Axis::Doppler, window.first, &config);
                    let aligned = estimate::align_phase(g1v, &comp, &config);
                    let pc_prof = estimate::doppler_profile(&aligned, &config).map_err(&at)?;
                    let pc = estimate::peak_near(&pc_prof, f1v, dcell_bins);
                    let fused = estimate::fuse(g1v, &aligned, FusionWeights::default(), p.fusion, Axis::Doppler, &config)
                        .map_err(&at)?;
                    let pf = estimate::peak_near(&fused, f1v, dcell_bins);
                    let fc = config.carrier_active_hz;
                    push(Source::PassiveCompensated, Quantity::Speed, estimate::speed_from_doppler(pc.coordinate, fc));
                    push(Source::Fused, Quantity::Speed, estimate::speed_from_doppler(pf.coordinate, fc));
                    tr.fused_doppler = Some(pf.coordinate);
                }
            }
            gated_active[ti] = g1;
        }
    }

    // angle of arrival
    if p.stages.aoa && variant.fuses() {
        let at = Error::at("aoa");
        for (tr, g) in tracks.iter().zip(gated_active) {
            let (Some(ta), Some(tb)) = (tr.active_delay, tr.passive_delay) else {
                diag.aoa_failures += 1;
                continue;
            };
            let r1 = estimate::range_from_delay(tr.fused_delay.unwrap_or(ta));
            let r2 = estimate::bistatic_from_delay(tb) - r1;
            let snapshot = match (g, tr.fused_doppler) {
                (Some(g), Some(f)) => extract::gated_snapshot(&g, window.first, Some(f), m0, &config),
                _ => {
                    let g = extract::gated_doppler(&d1, &[ta], &config, p.taper).map_err(&at)?;
                    extract::gated_snapshot(&g, window.first, None, m0, &config)
                }
            };
            let restricted = MulCounter::default();
            match aoa::estimate_aoa(&snapshot, r1, r2, &config, &restricted) {
                Ok(a) => push(Source::Fused, Quantity::Omega, a.omega),
                Err(Error::WindowMiss(_)) => diag.window_misses += 1,
                Err(e) if expected_failure(&e) => diag.aoa_failures += 1,
                Err(e) => return Err(at(e)),
            }
            let full = MulCounter::default();
            let spec = aoa::full_spatial_spectrum(&snapshot, p.spatial_oversampling, &full);
            let a = aoa::fine_aoa(&spec, &config).map_err(&at)?;
            push(Source::Fused, Quantity::OmegaFull, a.omega);
            record.spatial_mults.0 += restricted.get();
            record.spatial_mults.1 += full.get();
        }
    }
    Ok(record)
}
