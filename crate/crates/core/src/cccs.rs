//! Cross-correlation of the passive steering vectors against the active
//! ones. The per-target direct terms of the correlation carry the lumped
//! offsets (`delta tau_l + dtau` on the range axis, `delta f_D,l + df` on the
//! Doppler axis); the antenna-consistency test separates them from the
//! target-pair cross terms, and the matching step ties each offset to one
//! active and one passive peak.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;

use crate::dsp::{self, Direction};
use crate::error::{Error, Result};
use crate::scenario::{SceneConfig, TruthParams};
use crate::synth::{OffsetTrack, SymbolGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Range,
    Doppler,
}

impl Axis {
    /// Transform length, resolution cell and sign relating correlation
    /// bins to physical offsets.
    fn geometry(self, config: &SceneConfig) -> (usize, f64, f64) {
        let p = &config.processing;
        match self {
            // conj(k2) k1 ~ e^{+j 2 pi n df x}
            Axis::Range => (p.idft_points, 1.0 / config.subcarrier_spacing_hz, 1.0),
            // conj(g2) g1 ~ e^{-j 2 pi m T x}
            Axis::Doppler => (p.dft_points, 1.0 / config.symbol_period_s, -1.0),
        }
    }

    /// Size of one resolution cell in physical units.
    pub fn cell(self, config: &SceneConfig) -> f64 {
        match self {
            Axis::Range => config.delay_cell(),
            Axis::Doppler => config.doppler_cell(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Range => "range",
            Axis::Doppler => "doppler",
        })
    }
}

/// Per-antenna correlation vectors `rho(k) = conj(passive(k)) * active(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub axis: Axis,
    pub per_antenna: Vec<Vec<Complex64>>,
}

pub fn correlate(active: &[Vec<Complex64>], passive: &[Vec<Complex64>], axis: Axis) -> Result<Correlation> {
    if active.len() != passive.len() || active.iter().zip(passive).any(|(a, p)| a.len() != p.len()) {
        return Err(Error::DimensionMismatch(
            "active and passive steering vectors differ in shape".into(),
        ));
    }
    let per_antenna = active
        .iter()
        .zip(passive)
        .map(|(a, p)| a.iter().zip(p).map(|(x, y)| y.conj() * x).collect())
        .collect();
    Ok(Correlation { axis, per_antenna })
}

/// Sum of the correlation vectors over antennas. Direct terms add with
/// gain `N_t`; cross terms with `|sum_k e^{j (Omega_1 - Omega_2) k}|`.
pub fn antenna_vector_sum(corr: &Correlation) -> Vec<Complex64> {
    let len = corr.per_antenna.first().map_or(0, Vec::len);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for v in &corr.per_antenna {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out
}

/// `|sum_{k < n_t} e^{j delta_omega k}|`.
pub fn antenna_gain(delta_omega: f64, n_t: usize) -> f64 {
    (0..n_t)
        .map(|k| Complex64::from_polar(1.0, delta_omega * k as f64))
        .sum::<Complex64>()
        .norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetPeak {
    /// Integer bin of the reference-antenna spectrum.
    pub bin: usize,
    /// Real part of the reference-antenna spectrum at `bin`.
    pub value: f64,
    /// Magnitude of the antenna-summed spectrum at the refined peak bin.
    pub magnitude: f64,
    /// Interpolated bin on the antenna-summed spectrum, wrapped to
    /// `(-len/2, len/2]`.
    pub refined_bin: f64,
    /// Offset in seconds (range axis) or Hz (Doppler axis).
    pub offset: f64,
    /// Largest relative real-part change seen across antennas.
    pub instability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSet {
    pub axis: Axis,
    pub transform_len: usize,
    /// Surviving peaks, strongest first.
    pub peaks: Vec<OffsetPeak>,
    /// Candidates rejected as cross terms.
    pub removed: Vec<OffsetPeak>,
    /// Threshold actually applied (relative units).
    pub threshold: f64,
    /// More peaks survived than targets expected, e.g. two targets sharing
    /// an angle so their cross term is antenna-invariant.
    pub ambiguous: bool,
}

impl OffsetSet {
    pub fn offsets(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.offset).collect()
    }
}

/// Antenna-consistency extraction of the direct-term offsets.
///
/// Candidates are the `L^2` strongest peaks of the reference-antenna
/// spectrum. A candidate is discarded as soon as the real part of any other
/// antenna's spectrum at that bin moves by at least the threshold relative
/// to the largest real part of the reference spectrum. The threshold is
/// `eps_extract`, floored at `noise_guard` times the noise level estimated
/// from the reference spectrum's median magnitude so that noise alone does
/// not reject direct terms.
pub fn extract_offsets(corr: &Correlation, expected: usize, config: &SceneConfig) -> Result<OffsetSet> {
    let p = &config.processing;
    let (len, unit, sign) = corr.axis.geometry(config);
    let k_count = corr.per_antenna.len();
    if k_count == 0 || expected == 0 {
        return Err(Error::DimensionMismatch("empty correlation".into()));
    }
    let n = corr.per_antenna[0].len();
    let w = p.taper.weights(n);
    let spectra: Vec<Vec<Complex64>> = corr
        .per_antenna
        .iter()
        .map(|v| dsp::padded_transform(v, len, Some(&w), Direction::Forward))
        .collect::<Result<_>>()?;
    let summed = dsp::padded_transform(&antenna_vector_sum(corr), len, Some(&w), Direction::Forward)?;
    let sum_mag: Vec<f64> = summed.iter().map(|v| v.norm()).collect();

    let r0 = &spectra[0];
    let mag0: Vec<f64> = r0.iter().map(|v| v.norm()).collect();
    let med = dsp::median(&mag0);
    let max_re = r0.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    if max_re == 0.0 {
        return Err(Error::NoStableOffsets);
    }
    let noise = med / std::f64::consts::LN_2.sqrt();
    let threshold = p.eps_extract.max(p.noise_guard * noise / max_re);

    let cell_bins = (len / n).max(1);
    let floor = p.peak_floor * med;
    let cands = dsp::pick_peaks(&mag0, expected * expected, cell_bins, floor, true);

    let mut peaks = Vec::new();
    let mut removed = Vec::new();
    for q in cands {
        let instability = spectra[1..]
            .iter()
            .map(|r| (r[q].re - r0[q].re).abs() / max_re)
            .fold(0.0, f64::max);
        // refine on the antenna-summed spectrum near the candidate
        let mut best = q;
        for d in 1..=2 {
            for c in [(q + d) % len, (q + len - d) % len] {
                if sum_mag[c] > sum_mag[best] {
                    best = c;
                }
            }
        }
        let refined = dsp::wrap_signed(dsp::refine_peak(&sum_mag, best, true), len);
        let peak = OffsetPeak {
            bin: q,
            value: r0[q].re,
            magnitude: sum_mag[best],
            refined_bin: refined,
            offset: sign * refined * unit / len as f64,
            instability,
        };
        if instability >= threshold {
            removed.push(peak);
        } else {
            peaks.push(peak);
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoStableOffsets);
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    Ok(OffsetSet {
        axis: corr.axis,
        transform_len: len,
        ambiguous: peaks.len() > expected,
        peaks,
        removed,
        threshold,
    })
}

/// Doppler-axis variant of [`extract_offsets`].
pub fn extract_doppler_offsets(corr: &Correlation, expected: usize, config: &SceneConfig) -> Result<OffsetSet> {
    if corr.axis != Axis::Doppler {
        return Err(Error::DimensionMismatch("expected a Doppler-axis correlation".into()));
    }
    extract_offsets(corr, expected, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub active: usize,
    pub offset: usize,
    pub passive: usize,
    /// `|P_m + P_g - P_b|` in physical units.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet {
    pub axis: Axis,
    pub triples: Vec<Triple>,
    pub unmatched_active: Vec<usize>,
    pub unmatched_offset: Vec<usize>,
    pub unmatched_passive: Vec<usize>,
    /// Some element had more than one admissible partner.
    pub ambiguous: bool,
}

impl MatchedSet {
    pub fn for_active(&self, i: usize) -> Option<&Triple> {
        self.triples.iter().find(|t| t.active == i)
    }
}

/// Exhaustive consistency search `|P_m + P_g - P_b| <= eps_match * cell`
/// followed by greedy one-to-one assignment in order of residual.
pub fn match_peaks(active: &[f64], offsets: &[f64], passive: &[f64], axis: Axis, config: &SceneConfig) -> MatchedSet {
    let tol = config.processing.eps_match * axis.cell(config);
    let mut cands = Vec::new();
    for (i, a) in active.iter().enumerate() {
        for (j, g) in offsets.iter().enumerate() {
            for (k, b) in passive.iter().enumerate() {
                let residual = (a + g - b).abs();
                if residual <= tol {
                    cands.push(Triple {
                        active: i,
                        offset: j,
                        passive: k,
                        residual,
                    });
                }
            }
        }
    }
    cands.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then((a.active, a.offset, a.passive).cmp(&(b.active, b.offset, b.passive)))
    });
    let count = |f: &dyn Fn(&Triple) -> bool| cands.iter().filter(|t| f(t)).count();
    let mut used = (vec![false; active.len()], vec![false; offsets.len()], vec![false; passive.len()]);
    let mut triples = Vec::new();
    let mut ambiguous = false;
    for t in &cands {
        if used.0[t.active] || used.1[t.offset] || used.2[t.passive] {
            continue;
        }
        ambiguous |= count(&|c| c.active == t.active) > 1
            || count(&|c| c.offset == t.offset) > 1
            || count(&|c| c.passive == t.passive) > 1;
        used.0[t.active] = true;
        used.1[t.offset] = true;
        used.2[t.passive] = true;
        triples.push(*t);
    }
    let free = |u: &[bool]| u.iter().enumerate().filter(|(_, &x)| !x).map(|(i, _)| i).collect();
    MatchedSet {
        axis,
        unmatched_active: free(&used.0),
        unmatched_offset: free(&used.1),
        unmatched_passive: free(&used.2),
        triples,
        ambiguous,
    }
}

/// Doppler-axis variant of [`match_peaks`].
pub fn match_doppler(active: &[f64], offsets: &[f64], passive: &[f64], config: &SceneConfig) -> MatchedSet {
    match_peaks(active, offsets, passive, Axis::Doppler, config)
}

/// Noise-free antenna-summed range correlation restricted to direct terms:
/// `N_t sum_l a1_l conj(a2_l) e^{j 2 pi n df (delta tau_l + dtau(m0))}`
/// times the residual slow-time phase of symbol `m0`.
pub fn ideal_direct_term(truths: &[TruthParams], offsets: &OffsetTrack, m0: usize, config: &SceneConfig) -> Vec<Complex64> {
    let nt = config.n_antennas as f64;
    let df = config.subcarrier_spacing_hz;
    let t = config.symbol_period_s;
    (0..config.n_subcarriers)
        .map(|n| {
            truths
                .iter()
                .map(|tr| {
                    let x = tr.delay_deviation() + offsets.to[m0];
                    let slow = t * m0 as f64 * (tr.doppler_active - tr.doppler_passive - offsets.cfo[m0]);
                    tr.gain_active
                        * tr.gain_passive.conj()
                        * Complex64::from_polar(nt, 2.0 * PI * (n as f64 * df * x + slow))
                })
                .sum()
        })
        .collect()
}

/// Follows the per-symbol lumped timing offset of each target by searching
/// the antenna-summed single-symbol correlation within `half_width` of the
/// target's nominal offset.
pub fn track_symbol_offsets(
    active: &SymbolGrid,
    passive: &SymbolGrid,
    nominal: &[f64],
    half_width: f64,
    config: &SceneConfig,
) -> Result<Vec<Vec<f64>>> {
    if !active.same_shape(passive) {
        return Err(Error::DimensionMismatch("active and passive grids differ in shape".into()));
    }
    let n_sc = active.subcarriers;
    let df = config.subcarrier_spacing_hz;
    let w = config.processing.taper.weights(n_sc);
    let cell = config.delay_cell();
    let step = cell / 4.0;
    let steps = (half_width / step).ceil() as i64;
    let win = active.window;
    let mut out = vec![Vec::with_capacity(win.count); nominal.len()];
    let mut rho = vec![Complex64::new(0.0, 0.0); n_sc];
    for m in win.first..win.first + win.count {
        rho.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for k in 0..active.antennas {
            for (n, r) in rho.iter_mut().enumerate() {
                *r += passive.get(k, n, m).conj() * active.get(k, n, m);
            }
        }
        for (t, &x0) in out.iter_mut().zip(nominal) {
            let mag = |x: f64| dsp::dtft(&rho, &w, df * x).norm();
            let grid: Vec<f64> = (-steps..=steps).map(|i| mag(x0 + i as f64 * step)).collect();
            let best = grid
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(i, _)| i);
            let frac = dsp::refine_peak(&grid, best, false) - best as f64;
            t.push(x0 + (best as f64 - steps as f64 + frac) * step);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakOrigin {
    Active,
    Passive,
    Offset,
}

impl fmt::Display for PeakOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakOrigin::Active => "active",
            PeakOrigin::Passive => "passive",
            PeakOrigin::Offset => "offset",
        })
    }
}

/// One row of the peak debug dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakRecord {
    pub axis: Axis,
    pub origin: PeakOrigin,
    pub bin: usize,
    pub value: f64,
    pub refined_offset: f64,
}

impl OffsetSet {
    pub fn records(&self) -> Vec<PeakRecord> {
        self.peaks
            .iter()
            .map(|p| PeakRecord {
                axis: self.axis,
                origin: PeakOrigin::Offset,
                bin: p.bin,
                value: p.value,
                refined_offset: p.offset,
            })
            .collect()
    }
}

/// CSV with columns `axis,origin,bin,value,refined_offset`.
pub fn write_peak_csv<W: Write>(w: W, records: &[PeakRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["axis", "origin", "bin", "value", "refined_offset"])?;
    for r in records {
        out.write_record([
            r.axis.to_string(),
            r.origin.to_string(),
            r.bin.to_string(),
            r.value.to_string(),
            r.refined_offset.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
