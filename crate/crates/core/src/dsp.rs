//! Transform, taper and peak-picking helpers shared by the range, Doppler,
//! correlation and spatial stages.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Amplitude taper applied before a zero-padded transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    Rect,
    #[default]
    Hann,
}

impl Taper {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rect => vec![1.0; n],
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `sum x[n] e^{-j 2 pi n q / len}`
    Forward,
    /// `(1/len) sum x[n] e^{+j 2 pi n q / len}`
    Inverse,
}

/// Zero-padded DFT of `x` (optionally tapered) to `len` points.
pub fn padded_transform(
    x: &[Complex64],
    len: usize,
    weights: Option<&[f64]>,
    dir: Direction,
) -> Result<Vec<Complex64>> {
    if len < x.len() {
        return Err(Error::TransformTooShort {
            len,
            input: x.len(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    match weights {
        Some(w) => {
            for (b, (v, wi)) in buf.iter_mut().zip(x.iter().zip(w)) {
                *b = v * wi;
            }
        }
        None => buf[..x.len()].copy_from_slice(x),
    }
    let direction = match dir {
        Direction::Forward => FftDirection::Forward,
        Direction::Inverse => FftDirection::Inverse,
    };
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
    fft.process(&mut buf);
    if dir == Direction::Inverse {
        let s = 1.0 / len as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }
    Ok(buf)
}

/// Single-frequency evaluation `sum_n w[n] x[n] e^{-j 2 pi f n}` with `f` in
/// cycles per sample.
pub fn dtft(x: &[Complex64], weights: &[f64], f: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -2.0 * PI * f);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, (v, w)) in x.iter().zip(weights).enumerate() {
        // re-anchor periodically so the recursion cannot drift
        if n % 256 == 0 {
            rot = Complex64::from_polar(1.0, -2.0 * PI * f * n as f64);
        }
        acc += v * rot * w;
        rot *= step;
    }
    acc
}

/// `e^{j 2 pi f n}` for `n = 0..len`.
pub fn phase_ramp(len: usize, f: f64) -> Vec<Complex64> {
    (0..len)
        .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f * n as f64))
        .collect()
}

/// Vertex offset of the parabola through three equally spaced samples,
/// in `[-0.5, 0.5]` relative to the centre sample.
pub fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom >= 0.0 || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Fractional peak location around integer index `i`.
pub fn refine_peak(values: &[f64], i: usize, circular: bool) -> f64 {
    let n = values.len();
    if n < 3 {
        return i as f64;
    }
    let (l, r) = if circular {
        ((i + n - 1) % n, (i + 1) % n)
    } else if i == 0 || i + 1 == n {
        return i as f64;
    } else {
        (i - 1, i + 1)
    };
    i as f64 + parabolic_offset(values[l], values[i], values[r])
}

/// Indices that are strictly greater than their left neighbour and not
/// smaller than their right neighbour.
pub fn local_maxima(values: &[f64], circular: bool) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    for i in 0..n {
        let left = if i > 0 {
            Some(values[i - 1])
        } else if circular && n > 1 {
            Some(values[n - 1])
        } else {
            None
        };
        let right = if i + 1 < n {
            Some(values[i + 1])
        } else if circular && n > 1 {
            Some(values[0])
        } else {
            None
        };
        if left.is_none_or(|l| values[i] > l) && right.is_none_or(|r| values[i] >= r) {
            out.push(i);
        }
    }
    out
}

/// Greedy selection of up to `count` local maxima, strongest first, keeping
/// picks at least `min_sep` bins apart and above `floor`.
pub fn pick_peaks(
    values: &[f64],
    count: usize,
    min_sep: usize,
    floor: f64,
    circular: bool,
) -> Vec<usize> {
    let n = values.len();
    let mut cands = local_maxima(values, circular);
    cands.retain(|&i| values[i] > floor);
    cands.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    for c in cands {
        if picked.len() == count {
            break;
        }
        let far = picked.iter().all(|&p| {
            let d = p.abs_diff(c);
            let d = if circular { d.min(n - d) } else { d };
            d >= min_sep
        });
        if far {
            picked.push(c);
        }
    }
    picked
}

/// Map a (fractional) bin index onto `(-len/2, len/2]`.
pub fn wrap_signed(bin: f64, len: usize) -> f64 {
    let l = len as f64;
    let mut b = bin.rem_euclid(l);
    if b > l / 2.0 {
        b -= l;
    }
    b
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Root-mean-square combination across antennas of per-antenna spectra.
pub fn rms_combine(spectra: &[Vec<Complex64>]) -> Vec<f64> {
    let len = spectra.first().map_or(0, Vec::len);
    let k = spectra.len().max(1) as f64;
    (0..len)
        .map(|i| (spectra.iter().map(|s| s[i].norm_sqr()).sum::<f64>() / k).sqrt())
        .collect()
}
