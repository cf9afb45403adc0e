//! Scene description: OFDM numerology, the two-station geometry, targets and
//! the ground-truth delays/Dopplers they induce.
//!
//! SBS1 (the monostatic transceiver and the array) sits at the origin, SBS2
//! (the bistatic transmitter) at `(baseline, 0)`. The uniform linear array
//! lies along the baseline, so the angle of a target is measured from the
//! +x axis and `Omega = 2 pi d cos(theta) / lambda`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Taper;
use crate::error::{Error, Result};
use crate::synth::OffsetModel;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// How the compensated passive spectrum is combined with the active one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Coherent,
    Noncoherent,
}

/// Which optional stages a trial runs. Range processing always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub doppler: bool,
    pub aoa: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            doppler: true,
            aoa: true,
        }
    }
}

/// Receiver-side processing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Processing {
    /// Range transform length `N_I`.
    pub idft_points: usize,
    /// Doppler transform length `M_D`.
    pub dft_points: usize,
    /// Spatial oversampling `N_f`.
    pub spatial_oversampling: usize,
    /// Half-width of the restricted spatial window, radians of `Omega`.
    pub aoa_window_rad: f64,
    /// Relative real-part change that marks a correlation peak unstable.
    pub eps_extract: f64,
    /// Matching tolerance, in resolution cells of the axis.
    pub eps_match: f64,
    /// Noise multiple that floors the stability threshold.
    pub noise_guard: f64,
    /// Peaks must exceed this multiple of the profile median.
    pub peak_floor: f64,
    pub ref_symbol: usize,
    pub ref_subcarrier: usize,
    pub taper: Taper,
    pub fusion: FusionMode,
    /// Leakage of each band into the other, dB relative to the echo
    /// (`-inf` models ideal full-duplex separation).
    pub band_leakage_db: f64,
    pub stages: Stages,
}

impl Default for Processing {
    fn default() -> Self {
        Processing {
            idft_points: 10240,
            dft_points: 2560,
            spatial_oversampling: 10,
            aoa_window_rad: PI / 3.0,
            eps_extract: 0.01,
            eps_match: 0.1,
            noise_guard: 4.0,
            peak_floor: 3.0,
            ref_symbol: 0,
            ref_subcarrier: 0,
            taper: Taper::Hann,
            fusion: FusionMode::Coherent,
            band_leakage_db: f64::NEG_INFINITY,
            stages: Stages::default(),
        }
    }
}

/// OFDM numerology, array, geometry and link budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub symbol_period_s: f64,
    pub carrier_active_hz: f64,
    pub carrier_passive_hz: f64,
    pub bandwidth_hz: f64,
    pub n_antennas: usize,
    pub element_spacing_m: f64,
    pub wavelength_m: f64,
    pub baseline_m: f64,
    /// Per-entry SNR of the monostatic echo; `inf` disables noise.
    pub snr_active_db: f64,
    /// Per-entry SNR of the bistatic echo; `inf` disables noise.
    pub snr_passive_db: f64,
    pub seed: u64,
    pub processing: Processing,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 4.0e9;
        SceneConfig {
            n_subcarriers: 1024,
            n_symbols: 256,
            subcarrier_spacing_hz: 120e3,
            symbol_period_s: 10.38e-6,
            carrier_active_hz: 4.0e9,
            carrier_passive_hz: 4.2e9,
            bandwidth_hz: 123e6,
            n_antennas: 8,
            element_spacing_m: wavelength / 2.0,
            wavelength_m: wavelength,
            baseline_m: 200.0,
            snr_active_db: 0.0,
            snr_passive_db: 0.0,
            seed: 1,
            processing: Processing::default(),
        }
    }
}

impl SceneConfig {
    /// Range resolution `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    /// Velocity resolution `c / (2 T M f_c2)`.
    pub fn velocity_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.symbol_period_s * self.n_symbols as f64 * self.carrier_passive_hz)
    }

    /// Delay cell `1 / (N delta_f)`.
    pub fn delay_cell(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    /// Doppler cell `1 / (M T)`.
    pub fn doppler_cell(&self) -> f64 {
        1.0 / (self.n_symbols as f64 * self.symbol_period_s)
    }

    /// Largest unambiguous delay `1 / delta_f`.
    pub fn max_delay(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// `Omega` for a given angle.
    pub fn steering_phase(&self, theta: f64) -> f64 {
        2.0 * PI * self.element_spacing_m * theta.cos() / self.wavelength_m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        write!(f, "{}", self.violations.join("; "))
    }
}

/// Collects every numerology/geometry violation instead of stopping at the
/// first one.
pub fn validate_config(config: &SceneConfig) -> ValidationReport {
    let mut v = Vec::new();
    let p = &config.processing;
    let positive = [
        ("subcarrier spacing", config.subcarrier_spacing_hz),
        ("symbol period", config.symbol_period_s),
        ("active carrier", config.carrier_active_hz),
        ("passive carrier", config.carrier_passive_hz),
        ("bandwidth", config.bandwidth_hz),
        ("element spacing", config.element_spacing_m),
        ("wavelength", config.wavelength_m),
        ("baseline", config.baseline_m),
    ];
    for (name, x) in positive {
        if !(x.is_finite() && x > 0.0) {
            v.push(format!("{name} must be positive and finite (got {x})"));
        }
    }
    if config.n_subcarriers < 2 {
        v.push("at least two subcarriers are required".into());
    }
    if config.n_symbols < 2 {
        v.push("at least two symbols are required".into());
    }
    if config.n_antennas < 2 {
        v.push("at least two antennas are required".into());
    }
    if p.idft_points < config.n_subcarriers {
        v.push(format!(
            "idft_points below subcarrier count ({} < {})",
            p.idft_points, config.n_subcarriers
        ));
    }
    if p.dft_points < config.n_symbols {
        v.push(format!(
            "dft_points below symbol count ({} < {})",
            p.dft_points, config.n_symbols
        ));
    }
    if config.element_spacing_m > 0.5 * config.wavelength_m * (1.0 + 1e-12) {
        v.push(format!(
            "ambiguous array spacing: d = {} m exceeds lambda/2 = {} m",
            config.element_spacing_m,
            0.5 * config.wavelength_m
        ));
    }
    let occupied = config.n_subcarriers as f64 * config.subcarrier_spacing_hz;
    if config.bandwidth_hz > 0.0 && ((occupied - config.bandwidth_hz) / config.bandwidth_hz).abs() > 0.05 {
        v.push(format!(
            "bandwidth {} Hz inconsistent with N * delta_f = {} Hz",
            config.bandwidth_hz, occupied
        ));
    }
    if config.symbol_period_s * config.subcarrier_spacing_hz < 1.0 {
        v.push("symbol period shorter than the useful symbol 1/delta_f".into());
    }
    if p.spatial_oversampling < 1 {
        v.push("spatial_oversampling must be at least 1".into());
    }
    if !(p.aoa_window_rad > 0.0 && p.aoa_window_rad <= PI) {
        v.push(format!("aoa_window_rad must lie in (0, pi] (got {})", p.aoa_window_rad));
    }
    for (name, x) in [("eps_extract", p.eps_extract), ("eps_match", p.eps_match)] {
        if !(x > 0.0 && x < 1.0) {
            v.push(format!("{name} must lie in (0, 1) (got {x})"));
        }
    }
    if !(p.noise_guard >= 0.0 && p.peak_floor >= 0.0) {
        v.push("noise_guard and peak_floor must be non-negative".into());
    }
    if p.ref_symbol >= config.n_symbols {
        v.push(format!("ref_symbol {} out of range", p.ref_symbol));
    }
    if p.ref_subcarrier >= config.n_subcarriers {
        v.push(format!("ref_subcarrier {} out of range", p.ref_subcarrier));
    }
    for (name, x) in [
        ("snr_active_db", config.snr_active_db),
        ("snr_passive_db", config.snr_passive_db),
        ("band_leakage_db", p.band_leakage_db),
    ] {
        if x.is_nan() {
            v.push(format!("{name} is NaN"));
        }
    }
    ValidationReport { violations: v }
}

/// A point scatterer with a constant velocity over the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub gain_active: Complex64,
    pub gain_passive: Complex64,
}

impl Target {
    pub fn new(position: [f64; 2], velocity: [f64; 2]) -> Self {
        Target {
            position,
            velocity,
            gain_active: Complex64::new(1.0, 0.0),
            gain_passive: Complex64::new(1.0, 0.0),
        }
    }

    /// Target at `range` from SBS1 along `theta`, moving radially away from
    /// SBS1 at `radial_speed`.
    pub fn polar(range: f64, theta: f64, radial_speed: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Target::new([range * c, range * s], [radial_speed * c, radial_speed * s])
    }
}

/// Target list of the reference three-target scene.
pub fn reference_targets() -> Vec<Target> {
    [(70.0, 25.0, 15.0), (100.0, 30.0, 25.0), (130.0, 35.0, 35.0)]
        .iter()
        .map(|&(r, a, v)| Target::polar(r, f64::to_radians(a), v))
        .collect()
}

/// Noise-free parameters a target induces in both links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthParams {
    /// `R1`, SBS1 to target.
    pub range_active: f64,
    /// `R2`, target to SBS2.
    pub range_passive: f64,
    /// `v1`, velocity projected on SBS1 -> target.
    pub speed_active: f64,
    /// `v2`, velocity projected on target -> SBS2.
    pub speed_passive: f64,
    pub theta: f64,
    pub omega: f64,
    pub delay_active: f64,
    pub delay_passive: f64,
    pub doppler_active: f64,
    pub doppler_passive: f64,
    pub gain_active: Complex64,
    pub gain_passive: Complex64,
}

impl TruthParams {
    /// `R1 + R2`.
    pub fn bistatic_range(&self) -> f64 {
        self.range_active + self.range_passive
    }

    /// `v1 - v2`, the rate of change of the bistatic path.
    pub fn bistatic_speed(&self) -> f64 {
        self.speed_active - self.speed_passive
    }

    /// `delta tau = tau2 - tau1`.
    pub fn delay_deviation(&self) -> f64 {
        self.delay_passive - self.delay_active
    }

    /// `delta f_D = f_D2 - f_D1`.
    pub fn doppler_deviation(&self) -> f64 {
        self.doppler_passive - self.doppler_active
    }
}

pub fn derive_truth(target: &Target, config: &SceneConfig) -> Result<TruthParams> {
    let [x, y] = target.position;
    let r1 = x.hypot(y);
    let (dx2, dy2) = (config.baseline_m - x, -y);
    let r2 = dx2.hypot(dy2);
    let scale = config.baseline_m.max(r1);
    if r1 <= 1e-9 * scale || r2 <= 1e-9 * scale {
        return Err(Error::DegenerateGeometry(format!(
            "target at ({x}, {y}) coincides with a station"
        )));
    }
    if y.abs() <= 1e-9 * scale {
        return Err(Error::DegenerateGeometry(format!(
            "target at ({x}, {y}) lies on the array axis"
        )));
    }
    let u1 = [x / r1, y / r1];
    let u2 = [dx2 / r2, dy2 / r2];
    let [vx, vy] = target.velocity;
    let v1 = vx * u1[0] + vy * u1[1];
    let v2 = vx * u2[0] + vy * u2[1];
    let theta = u1[0].clamp(-1.0, 1.0).acos();
    let c = SPEED_OF_LIGHT;
    Ok(TruthParams {
        range_active: r1,
        range_passive: r2,
        speed_active: v1,
        speed_passive: v2,
        theta,
        omega: config.steering_phase(theta),
        delay_active: 2.0 * r1 / c,
        delay_passive: (r1 + r2) / c,
        doppler_active: 2.0 * v1 * config.carrier_active_hz / c,
        doppler_passive: (v1 - v2) * config.carrier_passive_hz / c,
        gain_active: target.gain_active,
        gain_passive: target.gain_passive,
    })
}

/// Everything a trial needs: configuration, clock-offset model and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub offsets: OffsetModel,
    pub targets: Vec<Target>,
}

impl Scene {
    pub fn truths(&self) -> Result<Vec<TruthParams>> {
        self.targets.iter().map(|t| derive_truth(t, &self.config)).collect()
    }

    /// The reference scene: default numerology, three targets, offsets
    /// `E(dtau) = 100 ns`, `V(dtau) = 100 ns^2`, `E(df) = 0.2 df`,
    /// `V(df) = 0.01 df`.
    pub fn reference() -> Self {
        let config = SceneConfig::default();
        let df = config.subcarrier_spacing_hz;
        Scene {
            offsets: OffsetModel::gaussian(100e-9, 100e-18, 0.2 * df, 0.01 * df),
            config,
            targets: reference_targets(),
        }
    }
}
