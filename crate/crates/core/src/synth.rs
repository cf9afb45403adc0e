//! Symbol-level synthesis of the monostatic and bistatic echoes on the
//! (antenna, subcarrier, symbol) grid, including the per-symbol timing and
//! carrier offsets of the unsynchronised bistatic link.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{SceneConfig, TruthParams};

/// Independent random streams derived from one scene seed.
pub mod stream {
    pub const TX_ACTIVE: u64 = 1;
    pub const TX_PASSIVE: u64 = 2;
    pub const OFFSETS: u64 = 3;
    pub const NOISE_ACTIVE: u64 = 4;
    pub const NOISE_PASSIVE: u64 = 5;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent seed mixing.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream]))
}

/// Contiguous range of OFDM symbols held by a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolWindow {
    pub first: usize,
    pub count: usize,
}

impl SymbolWindow {
    pub fn full(n_symbols: usize) -> Self {
        SymbolWindow {
            first: 0,
            count: n_symbols,
        }
    }

    pub fn single(m: usize) -> Self {
        SymbolWindow { first: m, count: 1 }
    }

    pub fn contains(&self, m: usize) -> bool {
        m >= self.first && m < self.first + self.count
    }
}

/// Complex values laid out row-major as (antenna, subcarrier, symbol).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub antennas: usize,
    pub subcarriers: usize,
    pub window: SymbolWindow,
    pub data: Vec<Complex64>,
}

impl SymbolGrid {
    pub fn zeros(antennas: usize, subcarriers: usize, window: SymbolWindow) -> Self {
        SymbolGrid {
            antennas,
            subcarriers,
            window,
            data: vec![Complex64::new(0.0, 0.0); antennas * subcarriers * window.count],
        }
    }

    #[inline]
    fn idx(&self, k: usize, n: usize, j: usize) -> usize {
        (k * self.subcarriers + n) * self.window.count + j
    }

    /// Entry at absolute symbol index `m`.
    pub fn get(&self, k: usize, n: usize, m: usize) -> Complex64 {
        self.data[self.idx(k, n, m - self.window.first)]
    }

    /// Samples of one subcarrier across the symbol window.
    pub fn row(&self, k: usize, n: usize) -> &[Complex64] {
        let s = self.idx(k, n, 0);
        &self.data[s..s + self.window.count]
    }

    pub fn row_mut(&mut self, k: usize, n: usize) -> &mut [Complex64] {
        let s = self.idx(k, n, 0);
        let c = self.window.count;
        &mut self.data[s..s + c]
    }

    /// Samples of one symbol across subcarriers.
    pub fn column(&self, k: usize, m: usize) -> Vec<Complex64> {
        let j = m - self.window.first;
        (0..self.subcarriers).map(|n| self.data[self.idx(k, n, j)]).collect()
    }

    pub fn same_shape(&self, other: &SymbolGrid) -> bool {
        self.antennas == other.antennas
            && self.subcarriers == other.subcarriers
            && self.window == other.window
    }

    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &SymbolGrid, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch("grids differ in shape".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
        Ok(())
    }
}

/// Unit-power QPSK symbols shared by all antennas (`antennas == 1`).
///
/// One generator word is spent per resource element, so any symbol window
/// reproduces exactly the corresponding slice of the full frame.
pub fn generate_tx(config: &SceneConfig, stream_id: u64, window: SymbolWindow) -> SymbolGrid {
    let mut rng = stream_rng(config.seed, stream_id);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut grid = SymbolGrid::zeros(1, config.n_subcarriers, window);
    let m_total = config.n_symbols as u128;
    for n in 0..config.n_subcarriers {
        rng.set_word_pos(n as u128 * m_total + window.first as u128);
        for v in grid.row_mut(0, n) {
            let bits = rng.next_u32();
            let re = if bits & 1 == 0 { a } else { -a };
            let im = if bits & 2 == 0 { a } else { -a };
            *v = Complex64::new(re, im);
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetKind {
    Constant,
    #[default]
    Gaussian,
}

/// Statistics of the bistatic timing offset (TO) and carrier frequency
/// offset (CFO). Variances are in s^2 and Hz^2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffsetModel {
    pub kind: OffsetKind,
    pub to_mean_s: f64,
    pub to_var_s2: f64,
    pub cfo_mean_hz: f64,
    pub cfo_var_hz2: f64,
}

impl OffsetModel {
    pub fn none() -> Self {
        OffsetModel {
            kind: OffsetKind::Constant,
            ..Default::default()
        }
    }

    pub fn constant(to_s: f64, cfo_hz: f64) -> Self {
        OffsetModel {
            kind: OffsetKind::Constant,
            to_mean_s: to_s,
            cfo_mean_hz: cfo_hz,
            ..Default::default()
        }
    }

    pub fn gaussian(to_mean_s: f64, to_var_s2: f64, cfo_mean_hz: f64, cfo_var_hz2: f64) -> Self {
        OffsetModel {
            kind: OffsetKind::Gaussian,
            to_mean_s,
            to_var_s2,
            cfo_mean_hz,
            cfo_var_hz2,
        }
    }

    /// True when every symbol sees the same timing offset.
    pub fn constant_timing(&self) -> bool {
        self.kind == OffsetKind::Constant || self.to_var_s2 == 0.0
    }
}

/// Per-symbol offsets `delta tau(m)` and `delta f(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTrack {
    pub to: Vec<f64>,
    pub cfo: Vec<f64>,
}

impl OffsetTrack {
    pub fn zero(n_symbols: usize) -> Self {
        OffsetTrack {
            to: vec![0.0; n_symbols],
            cfo: vec![0.0; n_symbols],
        }
    }

    pub fn len(&self) -> usize {
        self.to.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to.is_empty()
    }
}

/// Draws one TO and one CFO per symbol, i.i.d. under the Gaussian model.
pub fn sample_offsets(config: &SceneConfig, model: &OffsetModel) -> Result<OffsetTrack> {
    if !(model.to_var_s2 >= 0.0 && model.cfo_var_hz2 >= 0.0) {
        return Err(Error::DimensionMismatch(format!(
            "offset variances must be non-negative (TO {}, CFO {})",
            model.to_var_s2, model.cfo_var_hz2
        )));
    }
    let m = config.n_symbols;
    match model.kind {
        OffsetKind::Constant => Ok(OffsetTrack {
            to: vec![model.to_mean_s; m],
            cfo: vec![model.cfo_mean_hz; m],
        }),
        OffsetKind::Gaussian => {
            let mut rng = stream_rng(config.seed, stream::OFFSETS);
            let to_d = Normal::new(model.to_mean_s, model.to_var_s2.sqrt())
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            let cfo_d = Normal::new(model.cfo_mean_hz, model.cfo_var_hz2.sqrt())
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            let to = (0..m).map(|_| to_d.sample(&mut rng)).collect();
            let cfo = (0..m).map(|_| cfo_d.sample(&mut rng)).collect();
            Ok(OffsetTrack { to, cfo })
        }
    }
}

fn check_delay(which: &'static str, delay: f64, config: &SceneConfig) -> Result<()> {
    let max = config.max_delay();
    if !(0.0..max).contains(&delay) {
        return Err(Error::DelayAlias {
            which,
            delay_s: delay,
            max_s: max,
        });
    }
    Ok(())
}

/// `out(k,n,m) = tx(n,m) * extra(n,m) * sum_l a_l e^{j Omega_l k} e^{-j 2 pi n df tau_l} d_l(m)`.
fn separable_channel(
    tx: &SymbolGrid,
    config: &SceneConfig,
    paths: &[(Complex64, f64, f64, Vec<Complex64>)],
    extra: Option<&dyn Fn(usize, usize) -> Complex64>,
) -> SymbolGrid {
    let win = tx.window;
    let n_sc = config.n_subcarriers;
    let mut out = SymbolGrid::zeros(config.n_antennas, n_sc, win);
    let range_phasors: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|(_, _, tau, _)| {
            (0..n_sc)
                .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * config.subcarrier_spacing_hz * tau))
                .collect()
        })
        .collect();
    let mut tx_eff = tx.clone();
    if let Some(f) = extra {
        for n in 0..n_sc {
            for (j, v) in tx_eff.row_mut(0, n).iter_mut().enumerate() {
                *v *= f(n, win.first + j);
            }
        }
    }
    for k in 0..config.n_antennas {
        let spatial: Vec<Complex64> = paths
            .iter()
            .map(|(g, omega, _, _)| g * Complex64::from_polar(1.0, omega * k as f64))
            .collect();
        for n in 0..n_sc {
            let t = tx_eff.row(0, n).to_vec();
            let row = out.row_mut(k, n);
            for (l, (_, _, _, dop)) in paths.iter().enumerate() {
                let b = spatial[l] * range_phasors[l][n];
                for (o, d) in row.iter_mut().zip(dop) {
                    *o += b * d;
                }
            }
            for (o, tv) in row.iter_mut().zip(&t) {
                *o *= tv;
            }
        }
    }
    out
}

fn doppler_phasors(config: &SceneConfig, win: SymbolWindow, f: impl Fn(usize) -> f64) -> Vec<Complex64> {
    (win.first..win.first + win.count)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 * config.symbol_period_s * f(m)))
        .collect()
}

/// Monostatic echo received at SBS1.
pub fn apply_active_channel(
    tx: &SymbolGrid,
    truths: &[TruthParams],
    config: &SceneConfig,
) -> Result<SymbolGrid> {
    check_tx(tx, config)?;
    let mut paths = Vec::with_capacity(truths.len());
    for t in truths {
        check_delay("monostatic", t.delay_active, config)?;
        let dop = doppler_phasors(config, tx.window, |_| t.doppler_active);
        paths.push((t.gain_active, t.omega, t.delay_active, dop));
    }
    Ok(separable_channel(tx, config, &paths, None))
}

/// Bistatic echo (SBS2 -> target -> SBS1) including the clock offsets.
pub fn apply_passive_channel(
    tx: &SymbolGrid,
    truths: &[TruthParams],
    offsets: &OffsetTrack,
    config: &SceneConfig,
) -> Result<SymbolGrid> {
    check_tx(tx, config)?;
    let win = tx.window;
    if offsets.len() < win.first + win.count {
        return Err(Error::DimensionMismatch(format!(
            "offset track has {} symbols, window needs {}",
            offsets.len(),
            win.first + win.count
        )));
    }
    let mut paths = Vec::with_capacity(truths.len());
    for t in truths {
        for m in win.first..win.first + win.count {
            check_delay("bistatic", t.delay_passive + offsets.to[m], config)?;
        }
        let dop = doppler_phasors(config, win, |m| t.doppler_passive + offsets.cfo[m]);
        paths.push((t.gain_passive, t.omega, t.delay_passive, dop));
    }
    let df = config.subcarrier_spacing_hz;
    let timing = |n: usize, m: usize| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * df * offsets.to[m]);
    let varying = offsets.to.iter().any(|&x| x != 0.0);
    Ok(separable_channel(
        tx,
        config,
        &paths,
        if varying { Some(&timing) } else { None },
    ))
}

fn check_tx(tx: &SymbolGrid, config: &SceneConfig) -> Result<()> {
    if tx.antennas != 1 || tx.subcarriers != config.n_subcarriers {
        return Err(Error::DimensionMismatch(format!(
            "transmit grid is {}x{}, expected 1x{}",
            tx.antennas, tx.subcarriers, config.n_subcarriers
        )));
    }
    if tx.window.first + tx.window.count > config.n_symbols {
        return Err(Error::DimensionMismatch("symbol window exceeds the frame".into()));
    }
    Ok(())
}

/// Adds circular complex Gaussian noise of the given per-entry variance.
pub fn add_noise_variance<R: Rng>(grid: &mut SymbolGrid, variance: f64, rng: &mut R) {
    if variance <= 0.0 {
        return;
    }
    let s = (variance / 2.0).sqrt();
    for v in grid.data.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Complex64::new(re * s, im * s);
    }
}

/// Adds noise so that the measured signal power sits `snr_db` above the
/// noise. `snr_db = +inf` leaves the grid untouched.
pub fn add_noise(grid: &mut SymbolGrid, snr_db: f64, seed: u64) {
    if snr_db == f64::INFINITY {
        return;
    }
    let var = grid.mean_power() / 10f64.powf(snr_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_variance(grid, var, &mut rng);
}

const GRID_MAGIC: &str = "COOPSENSE-GRID 1";

/// Text header followed by little-endian interleaved `f64` re/im pairs in
/// (antenna, subcarrier, symbol) row-major order.
pub fn write_grid<W: Write>(w: &mut W, grid: &SymbolGrid) -> Result<()> {
    writeln!(w, "{GRID_MAGIC}")?;
    writeln!(w, "antennas {}", grid.antennas)?;
    writeln!(w, "subcarriers {}", grid.subcarriers)?;
    writeln!(w, "first_symbol {}", grid.window.first)?;
    writeln!(w, "symbols {}", grid.window.count)?;
    writeln!(w, "layout antenna,subcarrier,symbol f64le re,im")?;
    writeln!(w, "end")?;
    let mut buf = Vec::with_capacity(grid.data.len() * 16);
    for v in &grid.data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_grid<R: BufRead>(r: &mut R) -> Result<SymbolGrid> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::GridFormat("unexpected end of header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(r)? != GRID_MAGIC {
        return Err(Error::GridFormat("bad magic line".into()));
    }
    let mut field = |r: &mut R, key: &str| -> Result<usize> {
        let l = next_line(r)?;
        l.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::GridFormat(format!("expected `{key}`, found `{l}`")))
    };
    let antennas = field(r, "antennas")?;
    let subcarriers = field(r, "subcarriers")?;
    let first = field(r, "first_symbol")?;
    let count = field(r, "symbols")?;
    loop {
        if next_line(r)? == "end" {
            break;
        }
    }
    let mut grid = SymbolGrid::zeros(antennas, subcarriers, SymbolWindow { first, count });
    let mut bytes = vec![0u8; grid.data.len() * 16];
    r.read_exact(&mut bytes)?;
    for (v, chunk) in grid.data.iter_mut().zip(bytes.chunks_exact(16)) {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        *v = Complex64::new(re, im);
    }
    Ok(grid)
}
