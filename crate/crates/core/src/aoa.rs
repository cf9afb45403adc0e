//! Two-stage angle of arrival: a coarse angle from the monostatic and
//! bistatic ranges (law of cosines on the SBS1–target–SBS2 triangle), then
//! an oversampled spatial transform evaluated only inside a window around
//! the coarse steering phase.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp;
use crate::error::{Error, Result};
use crate::scenario::SceneConfig;

/// Cosine arguments this far outside `[-1, 1]` are clamped rather than
/// rejected.
pub const COS_TOLERANCE: f64 = 0.02;

/// Counts complex multiplications spent in spatial transforms.
#[derive(Debug, Default)]
pub struct MulCounter {
    count: Cell<u64>,
}

impl MulCounter {
    pub fn add(&self, n: u64) {
        self.count.set(self.count.get() + n);
    }

    pub fn get(&self) -> u64 {
        self.count.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseAoa {
    pub theta: f64,
    pub omega: f64,
    /// The cosine argument was slightly outside `[-1, 1]` and clamped.
    pub clamped: bool,
}

/// Angle at SBS1 between the baseline and the target from `R1`, `R2` and
/// the baseline length.
pub fn coarse_aoa(r1: f64, r2: f64, baseline: f64, config: &SceneConfig) -> Result<CoarseAoa> {
    if !(r1 > 0.0 && r2 > 0.0 && baseline > 0.0) {
        return Err(Error::InconsistentRanging(f64::NAN));
    }
    let c = (r1 * r1 + baseline * baseline - r2 * r2) / (2.0 * baseline * r1);
    if !c.is_finite() || c.abs() > 1.0 + COS_TOLERANCE {
        return Err(Error::InconsistentRanging(c));
    }
    let clamped = c.abs() > 1.0;
    let theta = c.clamp(-1.0, 1.0).acos();
    Ok(CoarseAoa {
        theta,
        omega: config.steering_phase(theta),
        clamped,
    })
}

/// Samples of `AoA(i) = sum_k s[k] e^{-j 2 pi k i / (N_t N_f)}` for the
/// consecutive (unwrapped) bins `start .. start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub len: usize,
    pub start: i64,
    pub values: Vec<Complex64>,
    /// The spectrum covers every bin and wraps around.
    pub circular: bool,
}

impl SpatialSpectrum {
    pub fn bin_omega(&self, bin: f64) -> f64 {
        2.0 * PI * bin / self.len as f64
    }
}

fn spatial_bin(snapshot: &[Complex64], len: usize, bin: i64, counter: &MulCounter) -> Complex64 {
    let i = bin.rem_euclid(len as i64) as usize;
    counter.add(snapshot.len() as u64);
    snapshot
        .iter()
        .enumerate()
        .map(|(k, s)| s * Complex64::from_polar(1.0, -2.0 * PI * ((k * i) % len) as f64 / len as f64))
        .sum()
}

/// Every bin of the `N_t N_f`-point spatial transform.
pub fn full_spatial_spectrum(snapshot: &[Complex64], n_f: usize, counter: &MulCounter) -> SpatialSpectrum {
    let len = snapshot.len() * n_f;
    SpatialSpectrum {
        len,
        start: 0,
        values: (0..len as i64).map(|i| spatial_bin(snapshot, len, i, counter)).collect(),
        circular: true,
    }
}

/// Bins `floor(len (Omega_c - W) / 2 pi) ..= floor(len (Omega_c + W) / 2 pi)`.
pub fn restricted_spatial_spectrum(
    snapshot: &[Complex64],
    omega_c: f64,
    half_width: f64,
    n_f: usize,
    counter: &MulCounter,
) -> Result<SpatialSpectrum> {
    let len = snapshot.len() * n_f;
    if len == 0 {
        return Err(Error::EmptyWindow("empty snapshot".into()));
    }
    let scale = len as f64 / (2.0 * PI);
    let i_s = (scale * (omega_c - half_width)).floor() as i64;
    let i_e = (scale * (omega_c + half_width)).floor() as i64;
    let count = i_e - i_s + 1;
    if count < 3 {
        return Err(Error::EmptyWindow(format!(
            "half-width {half_width} rad spans {count} bin(s) of a {len}-point transform; at least 3 are needed"
        )));
    }
    if count >= len as i64 {
        let mut full = full_spatial_spectrum(snapshot, n_f, counter);
        full.start = i_s;
        full.values.rotate_left(i_s.rem_euclid(len as i64) as usize);
        return Ok(full);
    }
    Ok(SpatialSpectrum {
        len,
        start: i_s,
        values: (i_s..=i_e).map(|i| spatial_bin(snapshot, len, i, counter)).collect(),
        circular: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaEstimate {
    /// Integer spatial bin `i_l` (unwrapped).
    pub bin: i64,
    /// `[2 pi i_l / len, 2 pi (i_l + 1) / len)`, shifted into `(-pi, pi]`
    /// by the same multiple of `2 pi` as the midpoint.
    pub omega_interval: (f64, f64),
    pub theta_interval: (f64, f64),
    /// Interval midpoint.
    pub omega: f64,
    pub theta: f64,
    /// Interpolated peak, for diagnostics.
    pub omega_refined: f64,
}

impl AoaEstimate {
    pub fn contains_omega(&self, omega: f64) -> bool {
        let (lo, hi) = self.omega_interval;
        let shift = (2.0 * PI) * ((omega - lo) / (2.0 * PI)).floor();
        let o = omega - shift;
        o >= lo && o < hi
    }
}

fn theta_from_omega(omega: f64, config: &SceneConfig) -> f64 {
    let c = omega * config.wavelength_m / (2.0 * PI * config.element_spacing_m);
    c.clamp(-1.0, 1.0).acos()
}

/// Peak of the (restricted) spatial spectrum, reported as the bin interval
/// containing the interpolated peak.
pub fn fine_aoa(spectrum: &SpatialSpectrum, config: &SceneConfig) -> Result<AoaEstimate> {
    let mag: Vec<f64> = spectrum.values.iter().map(|v| v.norm()).collect();
    let (j, _) = mag
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::EmptyWindow("no spatial bins".into()))?;
    if !spectrum.circular && (j == 0 || j + 1 == mag.len()) {
        return Err(Error::WindowMiss(spectrum.start + j as i64));
    }
    let refined = spectrum.start as f64 + dsp::refine_peak(&mag, j, spectrum.circular);
    let bin = refined.floor() as i64;
    let lo = spectrum.bin_omega(bin as f64);
    let hi = spectrum.bin_omega(bin as f64 + 1.0);
    let mid = 0.5 * (lo + hi);
    let wrapped_mid = dsp::wrap_signed(mid / (2.0 * PI), 1) * 2.0 * PI;
    let shift = wrapped_mid - mid;
    let (lo, hi) = (lo + shift, hi + shift);
    let refined_omega = dsp::wrap_signed(spectrum.bin_omega(refined) / (2.0 * PI), 1) * 2.0 * PI;
    Ok(AoaEstimate {
        bin,
        omega_interval: (lo, hi),
        theta_interval: (theta_from_omega(hi, config), theta_from_omega(lo, config)),
        omega: wrapped_mid,
        theta: theta_from_omega(wrapped_mid, config),
        omega_refined: refined_omega,
    })
}

/// Coarse angle from ranges, restricted transform around it, fine peak.
pub fn estimate_aoa(
    snapshot: &[Complex64],
    r1: f64,
    r2: f64,
    config: &SceneConfig,
    counter: &MulCounter,
) -> Result<AoaEstimate> {
    let coarse = coarse_aoa(r1, r2, config.baseline_m, config)?;
    let p = &config.processing;
    let spec = restricted_spatial_spectrum(snapshot, coarse.omega, p.aoa_window_rad, p.spatial_oversampling, counter)?;
    fine_aoa(&spec, config)
}
