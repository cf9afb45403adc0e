//! Closed-form and constructed-case oracles run through the public API.

use std::f64::consts::PI;

use coopsense::cccs::{self, Axis};
use coopsense::dsp::{self, Direction, Taper};
use coopsense::estimate;
use coopsense::extract;
use coopsense::harness::{apply_parameter, run_trial, Variant};
use coopsense::metrics::{self, Quantity, Source};
use coopsense::scenario::{derive_truth, Scene, SceneConfig, Target, TruthParams};
use coopsense::synth::{self, stream, OffsetModel, OffsetTrack, SymbolGrid, SymbolWindow};
use num_complex::Complex64;

fn noiseless(mut scene: Scene) -> Scene {
    scene.config.snr_active_db = f64::INFINITY;
    scene.config.snr_passive_db = f64::INFINITY;
    scene
}

/// Divided (channel-only) active and passive grids of a noiseless scene.
fn divided(config: &SceneConfig, truths: &[TruthParams], offsets: &OffsetTrack, window: SymbolWindow) -> (SymbolGrid, SymbolGrid) {
    let tx1 = synth::generate_tx(config, stream::TX_ACTIVE, window);
    let tx2 = synth::generate_tx(config, stream::TX_PASSIVE, window);
    let rx1 = synth::apply_active_channel(&tx1, truths, config).unwrap();
    let rx2 = synth::apply_passive_channel(&tx2, truths, offsets, config).unwrap();
    (extract::divide(&rx1, &tx1).unwrap(), extract::divide(&rx2, &tx2).unwrap())
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

#[test]
fn frozen_resolutions_and_bound() {
    let c = SceneConfig::default();
    assert!((c.range_resolution() - 1.2195).abs() < 1e-4);
    assert!((c.velocity_resolution() - 13.44).abs() < 0.01);
    let r = metrics::crlb_reference(&c, 10f64.powf(0.5));
    assert!((r.range_sigma - 0.485).abs() < 5e-4, "{}", r.range_sigma);
}

#[test]
fn correlation_peak_bin_for_100ns_lumped_offset() {
    let c = SceneConfig::default();
    let df = c.subcarrier_spacing_hz;
    let (tau1, lumped) = (4.0e-7, 100e-9);
    let k1: Vec<Complex64> = (0..c.n_subcarriers)
        .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * df * tau1))
        .collect();
    let k2: Vec<Complex64> = (0..c.n_subcarriers)
        .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * df * (tau1 + lumped)))
        .collect();
    let corr = cccs::correlate(&[k1], &[k2], Axis::Range).unwrap();
    let sum = cccs::antenna_vector_sum(&corr);
    let spec = dsp::padded_transform(&sum, c.processing.idft_points, None, Direction::Forward).unwrap();
    let mag: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
    // 10240 * 120 kHz * 100 ns = 122.88
    assert_eq!(argmax(&mag), 123);
}

#[test]
fn range_peak_bin_819_for_100m() {
    let c = SceneConfig::default();
    let t = derive_truth(&Target::polar(100.0, 30f64.to_radians(), 15.0), &c).unwrap();
    assert!((t.delay_active - 666.67e-9).abs() < 0.01e-9);
    assert!((t.doppler_active - 400.0).abs() < 1e-9);
    let (d1, _) = divided(&c, &[t], &OffsetTrack::zero(c.n_symbols), SymbolWindow::single(0));
    let prof = estimate::range_profile(&extract::range_vectors(&d1, 0).unwrap(), &c).unwrap();
    assert_eq!(argmax(&prof.values), 819);
    let est = estimate::read_estimates(&prof, 1, &c);
    let r = estimate::range_from_delay(est.peaks[0].coordinate);
    assert!((99.97..=100.09).contains(&r), "{r}");
}

#[test]
fn doppler_peak_for_400hz() {
    let c = SceneConfig::default();
    let t = derive_truth(&Target::polar(100.0, 30f64.to_radians(), 15.0), &c).unwrap();
    let (d1, _) = divided(&c, &[t], &OffsetTrack::zero(c.n_symbols), SymbolWindow::full(c.n_symbols));
    let g = extract::gated_doppler(&d1, &[t.delay_active], &c, Taper::Hann).unwrap();
    let prof = estimate::doppler_profile(&g, &c).unwrap();
    // 10.38 us * 2560 * 400 Hz = 10.63 bins: nearest bin 11
    assert_eq!(argmax(&prof.values), 11);
    let est = estimate::read_estimates(&prof, 1, &c);
    assert!((est.peaks[0].refined_bin - 10.63).abs() < 0.05, "{:?}", est.peaks[0]);
    let v = estimate::speed_from_doppler(est.peaks[0].coordinate, c.carrier_active_hz);
    assert!((v - 15.0).abs() < 0.1);
}

#[test]
fn doppler_offset_peak_sits_at_deviation_plus_cfo() {
    let c = SceneConfig::default();
    let t = derive_truth(&Target::polar(100.0, 30f64.to_radians(), 15.0), &c).unwrap();
    let cfo = 0.1 * c.subcarrier_spacing_hz;
    let offsets = synth::sample_offsets(&c, &OffsetModel::constant(0.0, cfo)).unwrap();
    let (d1, d2) = divided(&c, &[t], &offsets, SymbolWindow::full(c.n_symbols));
    let g1 = extract::gated_doppler(&d1, &[t.delay_active], &c, Taper::Hann).unwrap();
    let g2 = extract::gated_doppler(&d2, &[t.delay_passive], &c, Taper::Hann).unwrap();
    let corr = cccs::correlate(&g1, &g2, Axis::Doppler).unwrap();
    let set = cccs::extract_doppler_offsets(&corr, 1, &c).unwrap();
    let bin = 1.0 / (c.symbol_period_s * c.processing.dft_points as f64);
    assert!((set.peaks[0].offset - (t.doppler_deviation() + cfo)).abs() < bin, "{:?}", set.peaks);
}

/// Half-power width, in transform bins, of the antenna-summed Doppler
/// correlation spectrum around its peak.
fn doppler_correlation_width(c: &SceneConfig, t: &TruthParams, offsets: &OffsetTrack) -> usize {
    let (d1, d2) = divided(c, &[*t], offsets, SymbolWindow::full(c.n_symbols));
    let g1 = extract::gated_doppler(&d1, &[t.delay_active], c, Taper::Hann).unwrap();
    let g2 = extract::gated_doppler(&d2, &[t.delay_passive], c, Taper::Hann).unwrap();
    let corr = cccs::correlate(&g1, &g2, Axis::Doppler).unwrap();
    let sum = cccs::antenna_vector_sum(&corr);
    let w = Taper::Hann.weights(sum.len());
    let spec = dsp::padded_transform(&sum, c.processing.dft_points, Some(&w), Direction::Forward).unwrap();
    let p: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    let half = p[argmax(&p)] / 2.0;
    p.iter().filter(|&&v| v >= half).count()
}

#[test]
fn cfo_variance_widens_doppler_correlation_peak() {
    let base = SceneConfig::default();
    let df = base.subcarrier_spacing_hz;
    let t = derive_truth(&Target::polar(100.0, 30f64.to_radians(), 15.0), &base).unwrap();
    let trials = 100u64;
    let mean_width = |var: f64| {
        (0..trials)
            .map(|s| {
                let mut c = base.clone();
                c.seed = synth::derive_seed(11, &[s]);
                let off = synth::sample_offsets(&c, &OffsetModel::gaussian(0.0, 0.0, 0.2 * df, var * df)).unwrap();
                doppler_correlation_width(&c, &t, &off) as f64
            })
            .sum::<f64>()
            / trials as f64
    };
    let (calm, noisy) = (mean_width(0.0), mean_width(0.2));
    assert!(noisy > calm, "width {calm} -> {noisy}");
}

#[test]
fn reference_angles_fall_in_their_intervals() {
    let scene = noiseless(Scene::reference());
    let r = run_trial(&scene, Variant::PerfectSync, 3).unwrap();
    let est = r.values(Source::Fused, Quantity::Omega);
    assert_eq!(est.len(), 3);
    let half_bin = PI / (scene.config.n_antennas * scene.config.processing.spatial_oversampling) as f64;
    let truths: Vec<f64> = r.truths.iter().map(|t| t.omega).collect();
    for (i, j) in metrics::associate(&est, &truths, true) {
        assert!((est[i] - truths[j]).abs() <= half_bin + 1e-12, "{} vs {}", est[i], truths[j]);
    }
    assert!(metrics::rmse_aoa(&est, &truths) <= half_bin);
}

#[test]
fn noiseless_nmse_below_one_bin_bound() {
    let scene = noiseless(Scene::reference());
    let r = run_trial(&scene, Variant::PerfectSync, 3).unwrap();
    let c = &scene.config;
    let bin = c.range_resolution() * c.n_subcarriers as f64 / c.processing.idft_points as f64;
    let truths: Vec<f64> = r.truths.iter().map(|t| t.range_active).collect();
    let bound = (bin / 70.0f64).powi(2);
    for src in [Source::Active, Source::Fused] {
        let e = metrics::nmse(&r.values(src, Quantity::Range), &truths);
        assert_eq!(e.used, 3);
        assert!(e.value < bound, "{src}: {} >= {bound}", e.value);
    }
}

#[test]
fn passive_only_range_carries_timing_bias() {
    let mut scene = noiseless(Scene::reference());
    scene.offsets = OffsetModel::constant(100e-9, 0.0);
    let r = run_trial(&scene, Variant::PassiveOnly, 5).unwrap();
    let est = r.values(Source::Passive, Quantity::BistaticRange);
    // the 30 m bias exceeds the target spacing, so associate against the
    // shifted truths
    let truths: Vec<f64> = r.truths.iter().map(|t| t.bistatic_range() + 30.0).collect();
    let bin = scene.config.range_resolution() * 2.0 * scene.config.n_subcarriers as f64
        / scene.config.processing.idft_points as f64;
    for (i, j) in metrics::associate(&est, &truths, false) {
        assert!((est[i] - truths[j]).abs() < bin, "{} vs {}", est[i], truths[j]);
    }
}

#[test]
fn cooperative_matches_perfect_sync_under_constant_offsets() {
    let mut scene = noiseless(Scene::reference());
    let df = scene.config.subcarrier_spacing_hz;
    scene.offsets = OffsetModel::constant(100e-9, 0.2 * df);
    apply_parameter(&mut scene, "stage_aoa", 0.0).unwrap();
    let coop = run_trial(&scene, Variant::Cooperative, 9).unwrap();
    let genie = run_trial(&scene, Variant::PerfectSync, 9).unwrap();
    let c = &scene.config;
    let range_bin = c.range_resolution() * c.n_subcarriers as f64 / c.processing.idft_points as f64;
    let speed_bin = estimate::speed_from_doppler(1.0 / (c.symbol_period_s * c.processing.dft_points as f64), c.carrier_active_hz);
    assert_eq!(coop.diagnostics.matched, 3);
    for (q, bin) in [(Quantity::Range, range_bin), (Quantity::Speed, speed_bin)] {
        let a = coop.values(Source::Fused, q);
        let b = genie.values(Source::Fused, q);
        assert_eq!(a.len(), 3);
        for (i, j) in metrics::associate(&a, &b, false) {
            assert!((a[i] - b[j]).abs() <= 2.0 * bin, "{q}: {} vs {}", a[i], b[j]);
        }
    }
}

fn mean_direct_term(snr_m: f64, snr_r: f64, leakage_db: f64, trials: u64) -> (f64, f64) {
    let mut scene = Scene::reference();
    for (k, v) in [
        ("stage_doppler", 0.0),
        ("stage_aoa", 0.0),
        ("snr_m_db", snr_m),
        ("snr_r_db", snr_r),
        ("band_leakage_db", leakage_db),
    ] {
        apply_parameter(&mut scene, k, v).unwrap();
    }
    let (mut raw, mut norm) = (0.0, 0.0);
    for s in 0..trials {
        let r = run_trial(&scene, Variant::Cooperative, synth::derive_seed(21, &[s])).unwrap();
        let (a, b) = r.direct_term_mse.unwrap();
        raw += a;
        norm += b;
    }
    (raw / trials as f64, norm / trials as f64)
}

#[test]
fn direct_term_error_grows_when_passive_link_weakens() {
    let (_, at_0) = mean_direct_term(0.0, 0.0, f64::NEG_INFINITY, 100);
    let (_, at_m20) = mean_direct_term(0.0, -20.0, f64::NEG_INFINITY, 100);
    assert!(at_m20 > at_0, "{at_0} vs {at_m20}");
}

#[test]
fn direct_term_error_is_u_shaped_with_shared_band() {
    let trials = 30;
    let low = mean_direct_term(0.0, -20.0, 0.0, trials).1;
    let mid = mean_direct_term(0.0, 0.0, 0.0, trials).1;
    let high = mean_direct_term(0.0, 20.0, 0.0, trials).1;
    assert!(mid < low && mid < high, "{low} {mid} {high}");
}
