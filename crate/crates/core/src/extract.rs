//! Removal of the transmitted symbols and extraction of the range, Doppler
//! and spatial steering vectors from the divided grid.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp::Taper;
use crate::error::{Error, Result};
use crate::scenario::SceneConfig;
use crate::synth::SymbolGrid;

/// Element-wise `rx / tx`. A single-antenna `tx` is broadcast over the
/// receive antennas.
pub fn divide(rx: &SymbolGrid, tx: &SymbolGrid) -> Result<SymbolGrid> {
    if tx.subcarriers != rx.subcarriers || tx.window != rx.window || (tx.antennas != 1 && tx.antennas != rx.antennas) {
        return Err(Error::DimensionMismatch(format!(
            "rx {}x{}x{} vs tx {}x{}x{}",
            rx.antennas, rx.subcarriers, rx.window.count, tx.antennas, tx.subcarriers, tx.window.count
        )));
    }
    let mut out = rx.clone();
    for k in 0..rx.antennas {
        let kt = if tx.antennas == 1 { 0 } else { k };
        for n in 0..rx.subcarriers {
            let t = tx.row(kt, n);
            if let Some(j) = t.iter().position(|v| v.norm_sqr() == 0.0) {
                return Err(Error::ZeroSymbol {
                    antenna: kt,
                    subcarrier: n,
                    symbol: rx.window.first + j,
                });
            }
            for (o, tv) in out.row_mut(k, n).iter_mut().zip(t) {
                *o /= tv;
            }
        }
    }
    Ok(out)
}

/// Per-antenna range vector `k_R` (symbol `m0`) and Doppler vector `k_D`
/// (subcarrier `n0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SteerVectors {
    pub range: Vec<Vec<Complex64>>,
    pub doppler: Vec<Vec<Complex64>>,
    pub ref_symbol: usize,
    pub ref_subcarrier: usize,
}

pub fn steer_from_grid(div: &SymbolGrid, m0: usize, n0: usize) -> Result<SteerVectors> {
    let range = range_vectors(div, m0)?;
    if n0 >= div.subcarriers {
        return Err(Error::DimensionMismatch(format!("subcarrier {n0} out of range")));
    }
    let doppler = (0..div.antennas).map(|k| div.row(k, n0).to_vec()).collect();
    Ok(SteerVectors {
        range,
        doppler,
        ref_symbol: m0,
        ref_subcarrier: n0,
    })
}

/// Column `m0` of every antenna.
pub fn range_vectors(div: &SymbolGrid, m0: usize) -> Result<Vec<Vec<Complex64>>> {
    if !div.window.contains(m0) {
        return Err(Error::DimensionMismatch(format!(
            "symbol {m0} not in window {:?}",
            div.window
        )));
    }
    Ok((0..div.antennas).map(|k| div.column(k, m0)).collect())
}

/// Coherent average of the range vectors over the symbol window. Only
/// meaningful when the timing offset is constant over the frame.
pub fn average_columns(div: &SymbolGrid) -> Vec<Vec<Complex64>> {
    let inv = 1.0 / div.window.count as f64;
    (0..div.antennas)
        .map(|k| {
            (0..div.subcarriers)
                .map(|n| div.row(k, n).iter().sum::<Complex64>() * inv)
                .collect()
        })
        .collect()
}

/// Range-gated slow-time vectors: for each antenna and symbol,
/// `g[m] = sum_n w[n] D(k;n,m) e^{+j 2 pi n df tau(m)} / sum w`.
///
/// `delays` holds either one delay for the whole window or one per symbol.
pub fn gated_doppler(
    div: &SymbolGrid,
    delays: &[f64],
    config: &SceneConfig,
    taper: Taper,
) -> Result<Vec<Vec<Complex64>>> {
    let mw = div.window.count;
    if delays.len() != 1 && delays.len() != mw {
        return Err(Error::DimensionMismatch(format!(
            "{} gate delays for a {mw}-symbol window",
            delays.len()
        )));
    }
    let n_sc = div.subcarriers;
    let w = taper.weights(n_sc);
    let norm = 1.0 / w.iter().sum::<f64>();
    let df = config.subcarrier_spacing_hz;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); mw]; div.antennas];
    if delays.len() == 1 {
        let ph: Vec<Complex64> = (0..n_sc)
            .map(|n| Complex64::from_polar(w[n] * norm, 2.0 * PI * n as f64 * df * delays[0]))
            .collect();
        for (k, g) in out.iter_mut().enumerate() {
            for (n, b) in ph.iter().enumerate() {
                for (o, v) in g.iter_mut().zip(div.row(k, n)) {
                    *o += b * v;
                }
            }
        }
    } else {
        // (subcarrier, symbol) phasor table shared by all antennas
        let mut ph = vec![Complex64::new(0.0, 0.0); n_sc * mw];
        for n in 0..n_sc {
            for (j, &d) in delays.iter().enumerate() {
                ph[n * mw + j] = Complex64::from_polar(w[n] * norm, 2.0 * PI * n as f64 * df * d);
            }
        }
        for (k, g) in out.iter_mut().enumerate() {
            for n in 0..n_sc {
                let p = &ph[n * mw..(n + 1) * mw];
                for ((o, v), b) in g.iter_mut().zip(div.row(k, n)).zip(p) {
                    *o += b * v;
                }
            }
        }
    }
    Ok(out)
}

/// Spatial snapshot of one target: the gated slow-time vectors are
/// evaluated at `doppler_hz`, or sampled at symbol `m0` when no Doppler
/// estimate is available.
pub fn gated_snapshot(
    gated: &[Vec<Complex64>],
    first_symbol: usize,
    doppler_hz: Option<f64>,
    m0: usize,
    config: &SceneConfig,
) -> Vec<Complex64> {
    match doppler_hz {
        Some(f) => gated
            .iter()
            .map(|g| {
                let s: Complex64 = g
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let m = (first_symbol + j) as f64;
                        v * Complex64::from_polar(1.0, -2.0 * PI * m * config.symbol_period_s * f)
                    })
                    .sum();
                s / g.len() as f64
            })
            .collect(),
        None => gated.iter().map(|g| g[m0 - first_symbol]).collect(),
    }
}
