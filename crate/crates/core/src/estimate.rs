//! Range and Doppler profiles, peak reading, offset compensation and
//! active/passive fusion.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::cccs::Axis;
use crate::dsp::{self, Direction};
use crate::error::{Error, Result};
use crate::scenario::{FusionMode, SceneConfig, SPEED_OF_LIGHT};

/// Magnitude profile over delay (range axis) or Doppler.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Physical units (s or Hz) per bin.
    pub bin_width: f64,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Physical coordinate of a fractional bin. Doppler bins past the
    /// midpoint are negative frequencies.
    pub fn coordinate(&self, bin: f64) -> f64 {
        match self.axis {
            Axis::Range => bin.rem_euclid(self.len() as f64) * self.bin_width,
            Axis::Doppler => dsp::wrap_signed(bin, self.len()) * self.bin_width,
        }
    }

    pub fn bin_of(&self, coordinate: f64) -> f64 {
        (coordinate / self.bin_width).rem_euclid(self.len() as f64)
    }

    /// Two-column CSV `coordinate,magnitude`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let unit = match self.axis {
            Axis::Range => "delay_s",
            Axis::Doppler => "doppler_hz",
        };
        out.write_record([unit, "magnitude"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([self.coordinate(i as f64).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn axis_transform(axis: Axis, config: &SceneConfig) -> (usize, Direction, f64) {
    let p = &config.processing;
    match axis {
        // e^{-j 2 pi n df tau} peaks at bin df * tau * N_I of the inverse DFT
        Axis::Range => (
            p.idft_points,
            Direction::Inverse,
            1.0 / (config.subcarrier_spacing_hz * p.idft_points as f64),
        ),
        // e^{+j 2 pi m T f} peaks at bin T f M_D of the forward DFT
        Axis::Doppler => (
            p.dft_points,
            Direction::Forward,
            1.0 / (config.symbol_period_s * p.dft_points as f64),
        ),
    }
}

/// Per-antenna zero-padded transforms of tapered steering vectors.
pub fn spectra(vectors: &[Vec<Complex64>], axis: Axis, config: &SceneConfig) -> Result<Vec<Vec<Complex64>>> {
    let (len, dir, _) = axis_transform(axis, config);
    vectors
        .iter()
        .map(|v| {
            let w = config.processing.taper.weights(v.len());
            dsp::padded_transform(v, len, Some(&w), dir)
        })
        .collect()
}

fn profile_from_spectra(sp: &[Vec<Complex64>], axis: Axis, config: &SceneConfig) -> Profile {
    let (_, _, bin_width) = axis_transform(axis, config);
    Profile {
        axis,
        values: dsp::rms_combine(sp),
        bin_width,
    }
}

/// Range profile: inverse DFT of each antenna's range vector to `N_I`
/// points, combined across antennas by RMS.
pub fn range_profile(vectors: &[Vec<Complex64>], config: &SceneConfig) -> Result<Profile> {
    Ok(profile_from_spectra(&spectra(vectors, Axis::Range, config)?, Axis::Range, config))
}

/// Doppler profile: forward DFT of each slow-time vector to `M_D` points.
pub fn doppler_profile(vectors: &[Vec<Complex64>], config: &SceneConfig) -> Result<Profile> {
    Ok(profile_from_spectra(&spectra(vectors, Axis::Doppler, config)?, Axis::Doppler, config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub bin: usize,
    pub refined_bin: f64,
    /// Delay in s or Doppler in Hz.
    pub coordinate: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub axis: Axis,
    /// Strongest first.
    pub peaks: Vec<PeakEstimate>,
    pub requested: usize,
}

impl EstimateSet {
    pub fn is_partial(&self) -> bool {
        self.peaks.len() < self.requested
    }

    pub fn coordinates(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.coordinate).collect()
    }
}

fn estimate_at(profile: &Profile, bin: usize) -> PeakEstimate {
    let refined = dsp::refine_peak(&profile.values, bin, true);
    PeakEstimate {
        bin,
        refined_bin: refined,
        coordinate: profile.coordinate(refined),
        magnitude: profile.values[bin],
    }
}

/// Up to `count` strongest peaks above `peak_floor` times the profile
/// median, at least one resolution cell apart, with parabolic refinement.
pub fn read_estimates(profile: &Profile, count: usize, config: &SceneConfig) -> EstimateSet {
    let cell = profile.axis.cell(config);
    let min_sep = ((cell / profile.bin_width).round() as usize).max(1);
    let floor = config.processing.peak_floor * dsp::median(&profile.values);
    let bins = dsp::pick_peaks(&profile.values, count, min_sep, floor, true);
    EstimateSet {
        axis: profile.axis,
        peaks: bins.into_iter().map(|b| estimate_at(profile, b)).collect(),
        requested: count,
    }
}

/// Strongest local peak within `half_width` bins of `coordinate`.
pub fn peak_near(profile: &Profile, coordinate: f64, half_width: usize) -> PeakEstimate {
    let n = profile.len();
    let centre = profile.bin_of(coordinate).round() as usize % n;
    let mut best = centre;
    for d in 1..=half_width {
        for c in [(centre + d) % n, (centre + n - d) % n] {
            if profile.values[c] > profile.values[best] {
                best = c;
            }
        }
    }
    estimate_at(profile, best)
}

/// `R1` from a monostatic delay.
pub fn range_from_delay(delay: f64) -> f64 {
    SPEED_OF_LIGHT * delay / 2.0
}

/// `R1 + R2` from a bistatic delay.
pub fn bistatic_from_delay(delay: f64) -> f64 {
    SPEED_OF_LIGHT * delay
}

/// Radial speed from a monostatic Doppler on carrier `fc`.
pub fn speed_from_doppler(doppler: f64, fc: f64) -> f64 {
    SPEED_OF_LIGHT * doppler / (2.0 * fc)
}

/// Removes a lumped offset from passive steering vectors, moving the
/// passive echo onto the active coordinates. For Doppler vectors
/// `first_symbol` anchors the slow-time phase.
pub fn compensate(
    vectors: &[Vec<Complex64>],
    offset: f64,
    axis: Axis,
    first_symbol: usize,
    config: &SceneConfig,
) -> Vec<Vec<Complex64>> {
    let len = vectors.first().map_or(0, Vec::len);
    let ramp: Vec<Complex64> = match axis {
        Axis::Range => dsp::phase_ramp(len, config.subcarrier_spacing_hz * offset),
        Axis::Doppler => (0..len)
            .map(|j| {
                let m = (first_symbol + j) as f64;
                Complex64::from_polar(1.0, -2.0 * PI * m * config.symbol_period_s * offset)
            })
            .collect(),
    };
    vectors
        .iter()
        .map(|v| v.iter().zip(&ramp).map(|(x, r)| x * r).collect())
        .collect()
}

/// Rotates `passive` onto the phase of its tapered inner product with
/// `active`, summed over antennas.
pub fn align_phase(active: &[Vec<Complex64>], passive: &[Vec<Complex64>], config: &SceneConfig) -> Vec<Vec<Complex64>> {
    let len = active.first().map_or(0, Vec::len);
    let w = config.processing.taper.weights(len);
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, p) in active.iter().zip(passive) {
        for ((x, y), wi) in a.iter().zip(p).zip(&w) {
            acc += y.conj() * x * wi;
        }
    }
    let rot = if acc.norm() > 0.0 {
        acc / acc.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    passive
        .iter()
        .map(|v| v.iter().map(|x| x * rot).collect())
        .collect()
}

/// Relative weights of the active and compensated passive contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub active: f64,
    pub passive: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            active: 1.0,
            passive: 1.0,
        }
    }
}

/// Fused profile of the active and (already compensated and aligned)
/// passive steering vectors. Coherent mode sums the complex vectors before
/// the transform so aligned echoes add in amplitude; noncoherent mode sums
/// the magnitude profiles.
pub fn fuse(
    active: &[Vec<Complex64>],
    passive: &[Vec<Complex64>],
    weights: FusionWeights,
    mode: FusionMode,
    axis: Axis,
    config: &SceneConfig,
) -> Result<Profile> {
    if active.len() != passive.len() || active.iter().zip(passive).any(|(a, p)| a.len() != p.len()) {
        return Err(Error::DimensionMismatch("fusion inputs differ in shape".into()));
    }
    match mode {
        FusionMode::Coherent => {
            let sum: Vec<Vec<Complex64>> = active
                .iter()
                .zip(passive)
                .map(|(a, p)| {
                    a.iter()
                        .zip(p)
                        .map(|(x, y)| x * weights.active + y * weights.passive)
                        .collect()
                })
                .collect();
            Ok(profile_from_spectra(&spectra(&sum, axis, config)?, axis, config))
        }
        FusionMode::Noncoherent => {
            let a = profile_from_spectra(&spectra(active, axis, config)?, axis, config);
            let p = profile_from_spectra(&spectra(passive, axis, config)?, axis, config);
            Ok(Profile {
                values: a
                    .values
                    .iter()
                    .zip(&p.values)
                    .map(|(x, y)| weights.active * x + weights.passive * y)
                    .collect(),
                ..a
            })
        }
    }
}
