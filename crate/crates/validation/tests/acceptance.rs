//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use coopsense::aoa::{self, MulCounter};
use coopsense::cccs::{self, Axis};
use coopsense::estimate;
use coopsense::extract;
use coopsense::harness::{self, run_trial, trial_error, SweepKind, SweepSpec, Variant};
use coopsense::metrics::{self, Quantity, Source, TrialRecord};
use coopsense::scenario::{Scene, SceneConfig, Target, TruthParams};
use coopsense::synth::{self, stream, OffsetModel, SymbolWindow};
use num_complex::Complex64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn noiseless(mut scene: Scene) -> Scene {
    scene.config.snr_active_db = f64::INFINITY;
    scene.config.snr_passive_db = f64::INFINITY;
    scene
}

fn with(mut scene: Scene, params: &[(&str, f64)]) -> Scene {
    for (k, v) in params {
        harness::apply_parameter(&mut scene, k, *v).unwrap();
    }
    scene
}

const RANGE_ONLY: [(&str, f64); 2] = [("stage_doppler", 0.0), ("stage_aoa", 0.0)];

/// Interpolated range-transform bin in metres and Doppler-transform bin in
/// m/s at the active carrier.
fn bins(c: &SceneConfig) -> (f64, f64) {
    let range = c.range_resolution() * c.n_subcarriers as f64 / c.processing.idft_points as f64;
    let doppler_hz = 1.0 / (c.symbol_period_s * c.processing.dft_points as f64);
    (range, estimate::speed_from_doppler(doppler_hz, c.carrier_active_hz))
}

fn trials(scene: &Scene, variant: Variant, n: u64, base: u64) -> Vec<TrialRecord> {
    (0..n)
        .map(|t| run_trial(scene, variant, synth::derive_seed(base, &[t])).unwrap())
        .collect()
}

fn noiseless_end_to_end() -> Outcome {
    let scene = noiseless(Scene::reference());
    let (range_bin, speed_bin) = bins(&scene.config);
    let start = Instant::now();
    let rec = run_trial(&scene, Variant::PerfectSync, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for (q, truth, tol, slot) in [
        (Quantity::Range, [70.0, 100.0, 130.0], range_bin, 0),
        (Quantity::Speed, [15.0, 25.0, 35.0], speed_bin, 1),
    ] {
        let est = rec.values(Source::Fused, q);
        let pairs = metrics::associate(&est, &truth, false);
        ok &= est.len() == 3 && pairs.len() == 3;
        for (i, j) in pairs {
            let e = (est[i] - truth[j]).abs();
            ok &= e <= tol;
            if slot == 0 {
                worst.0 = worst.0.max(e);
            } else {
                worst.1 = worst.1.max(e);
            }
        }
    }
    ok &= secs < 10.0;
    outcome(
        ok,
        format!(
            "max range error {:.4} m (bin {range_bin:.4}), max speed error {:.3} m/s (bin {speed_bin:.3}), {secs:.2} s",
            worst.0, worst.1
        ),
    )
}

/// Brute-force list of correlation terms `(i, j, lag, antenna gain)`: the
/// passive echo of target `j` against the active echo of target `i`.
fn correlation_terms(truths: &[TruthParams], lag_offset: f64, n_t: usize) -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for (i, a) in truths.iter().enumerate() {
        for (j, b) in truths.iter().enumerate() {
            out.push((i, j, b.delay_passive + lag_offset - a.delay_active, cccs::antenna_gain(a.omega - b.omega, n_t)));
        }
    }
    out
}

fn offset_recovery() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    for l in [1usize, 3] {
        for to_ns in [10.0, 100.0, 1000.0] {
            cases += 1;
            let mut scene = noiseless(Scene::reference());
            scene.targets.truncate(l);
            let c = &scene.config;
            scene.offsets = OffsetModel::constant(to_ns * 1e-9, 0.2 * c.subcarrier_spacing_hz);
            let truths = scene.truths().unwrap();
            let offsets = synth::sample_offsets(c, &scene.offsets).unwrap();
            let window = SymbolWindow::single(0);
            let tx1 = synth::generate_tx(c, stream::TX_ACTIVE, window);
            let tx2 = synth::generate_tx(c, stream::TX_PASSIVE, window);
            let rx1 = synth::apply_active_channel(&tx1, &truths, c).unwrap();
            let rx2 = synth::apply_passive_channel(&tx2, &truths, &offsets, c).unwrap();
            let k1 = extract::range_vectors(&extract::divide(&rx1, &tx1).unwrap(), 0).unwrap();
            let k2 = extract::range_vectors(&extract::divide(&rx2, &tx2).unwrap(), 0).unwrap();
            let est1 = estimate::read_estimates(&estimate::range_profile(&k1, c).unwrap(), l, c).coordinates();
            let est2 = estimate::read_estimates(&estimate::range_profile(&k2, c).unwrap(), l, c).coordinates();
            let corr = cccs::correlate(&k1, &k2, Axis::Range).unwrap();
            let set = match cccs::extract_offsets(&corr, l, c) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("L={l} {to_ns}ns: {e}"));
                    continue;
                }
            };
            let offs = set.offsets();
            let bin = 1.0 / (c.processing.idft_points as f64 * c.subcarrier_spacing_hz);
            let dtau = offsets.to[0];
            let terms = correlation_terms(&truths, dtau, c.n_antennas);
            let direct: Vec<_> = terms.iter().filter(|t| (t.3 - c.n_antennas as f64).abs() < 1e-9).collect();
            let direct_ok = direct.len() == l
                && direct.iter().all(|t| t.0 == t.1)
                && direct.iter().all(|t| offs.iter().any(|o| (o - t.2).abs() <= bin))
                && offs.iter().all(|o| direct.iter().any(|t| (o - t.2).abs() <= bin));
            if !direct_ok || offs.len() != l {
                failures.push(format!("L={l} {to_ns}ns: offsets {offs:?}"));
                continue;
            }
            let m = cccs::match_peaks(&est1, &offs, &est2, Axis::Range, c);
            let owner = |v: f64, of: &dyn Fn(&TruthParams) -> f64| truths.iter().position(|t| (v - of(t)).abs() <= bin);
            let mut seen = vec![false; l];
            let mut match_ok = m.triples.len() == l;
            for t in &m.triples {
                let a = owner(est1[t.active], &|t| t.delay_active);
                let g = owner(offs[t.offset], &|t| t.delay_passive + dtau - t.delay_active);
                let p = owner(est2[t.passive], &|t| t.delay_passive + dtau);
                match (a, g, p) {
                    (Some(a), Some(g), Some(p)) if a == g && g == p && !seen[a] => seen[a] = true,
                    _ => match_ok = false,
                }
            }
            if !match_ok {
                failures.push(format!("L={l} {to_ns}ns: matching {:?}", m.triples));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases}/{cases} cases: direct terms within one bin, perfect matching")
        } else {
            failures.join("; ")
        },
    )
}

fn cooperative_dominance() -> Outcome {
    let scene = with(Scene::reference(), &[RANGE_ONLY[0], RANGE_ONLY[1], ("snr_m_db", 0.0), ("snr_r_db", 0.0)]);
    let n = 100;
    let err = |v: Variant, s: Source, q: Quantity| -> Vec<f64> {
        trials(&scene, v, n, 3)
            .iter()
            .map(|r| trial_error(r, s, q).unwrap_or(f64::INFINITY))
            .collect()
    };
    let coop = err(Variant::Cooperative, Source::Fused, Quantity::Range);
    let active = err(Variant::ActiveOnly, Source::Active, Quantity::Range);
    let passive = err(Variant::PassiveOnly, Source::Passive, Quantity::BistaticRange);
    let frac = metrics::bootstrap_fraction(n as usize, 2000, 17, |idx| {
        let c = metrics::resampled_median(&coop, idx);
        c <= metrics::resampled_median(&active, idx) && c <= metrics::resampled_median(&passive, idx)
    });
    let med = |v: &[f64]| metrics::resampled_median(v, &(0..v.len()).collect::<Vec<_>>());
    outcome(
        frac >= 0.8,
        format!(
            "median NMSE cooperative {:.3e}, active {:.3e}, passive {:.3e}; ordering holds on {:.3} of resamples",
            med(&coop),
            med(&active),
            med(&passive),
            frac
        ),
    )
}

fn cfo_variance_threshold() -> Outcome {
    let n = 100;
    let speed_nmse = |var: f64, source: Source| -> (f64, usize) {
        let scene = with(Scene::reference(), &[("snr_db", 10.0), ("stage_aoa", 0.0), ("cfo_var_df", var)]);
        let errs: Vec<f64> = trials(&scene, Variant::Cooperative, n, 4)
            .iter()
            .filter_map(|r| trial_error(r, source, Quantity::Speed))
            .collect();
        (errs.iter().sum::<f64>() / errs.len() as f64, errs.len())
    };
    let (low, n_low) = speed_nmse(0.1, Source::PassiveCompensated);
    let (high, n_high) = speed_nmse(0.4, Source::PassiveCompensated);
    let ratio = high / low;
    outcome(
        ratio >= 5.0,
        format!("compensated-passive velocity NMSE {low:.3e} ({n_low} trials) vs {high:.3e} ({n_high} trials), ratio {ratio:.1}"),
    )
}

fn crlb_proximity() -> Outcome {
    let scene = with(Scene::reference(), &[RANGE_ONLY[0], RANGE_ONLY[1], ("snr_db", 5.0)]);
    let c = &scene.config;
    let snr = 10f64.powf(c.snr_passive_db / 10.0);
    let bound = c.range_resolution() / (2.0 * snr).sqrt();
    let (mut sq, mut count, mut missing) = (0.0, 0usize, 0usize);
    for r in trials(&scene, Variant::Cooperative, 200, 5) {
        let est = r.values(Source::Fused, Quantity::Range);
        let truth: Vec<f64> = r.truths.iter().map(|t| t.range_active).collect();
        let pairs = metrics::associate(&est, &truth, false);
        missing += truth.len() - pairs.len();
        for (i, j) in pairs {
            sq += (est[i] - truth[j]).powi(2);
            count += 1;
        }
    }
    let rmse = (sq / count as f64).sqrt();
    outcome(
        rmse <= 3.0 * bound && missing == 0,
        format!("RMSE {rmse:.4} m vs 3 x {bound:.4} m over {count} estimates, {missing} missing"),
    )
}

fn antenna_sum_gains() -> Outcome {
    let mut rng = synth::stream_rng(6, 0);
    let n_t = 8;
    let steer = |omega: f64, g: Complex64| -> Vec<Vec<Complex64>> {
        (0..n_t).map(|k| vec![g * Complex64::from_polar(1.0, omega * k as f64)]).collect()
    };
    let mut worst_direct = 0.0f64;
    for _ in 0..1000 {
        let omega = PI * rng.random_range(0.0..PI).cos();
        let a = Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-PI..PI));
        let b = Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-PI..PI));
        let corr = cccs::correlate(&steer(omega, a), &steer(omega, b), Axis::Range).unwrap();
        let gain = cccs::antenna_vector_sum(&corr)[0].norm() / (a.norm() * b.norm());
        worst_direct = worst_direct.max((gain - n_t as f64).abs() / n_t as f64);
    }
    let mut worst_cross = 0.0f64;
    for _ in 0..1000 {
        let (t1, t2) = (rng.random_range(0.0..PI), rng.random_range(0.0..PI));
        let (o1, o2) = (PI * t1.cos(), PI * t2.cos());
        let corr = cccs::correlate(&steer(o1, Complex64::ONE), &steer(o2, Complex64::ONE), Axis::Range).unwrap();
        let g = cccs::antenna_vector_sum(&corr)[0].norm();
        let g_formula = cccs::antenna_gain(o1 - o2, n_t);
        if (g - g_formula).abs() > 1e-9 * n_t as f64 {
            return outcome(false, format!("closed-form cross gain {g_formula} disagrees with sum {g}"));
        }
        worst_cross = worst_cross.max(g);
    }
    let equal = cccs::antenna_gain(0.0, n_t);
    // two targets sharing an angle: the cross terms become antenna-invariant
    let c = SceneConfig::default();
    let df = c.subcarrier_spacing_hz;
    let vectors = |delays: &[f64]| -> Vec<Vec<Complex64>> {
        (0..n_t)
            .map(|k| {
                (0..c.n_subcarriers)
                    .map(|n| {
                        delays
                            .iter()
                            .map(|t| Complex64::from_polar(1.0, 0.9 * k as f64 - 2.0 * PI * n as f64 * df * t))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    };
    let corr = cccs::correlate(&vectors(&[4.0e-7, 9.0e-7]), &vectors(&[7.0e-7, 1.5e-6]), Axis::Range).unwrap();
    let flagged = cccs::extract_offsets(&corr, 2, &c).map(|s| s.ambiguous).unwrap_or(false);
    let ok = worst_direct <= 1e-9 && worst_cross < n_t as f64 && (equal - n_t as f64).abs() < 1e-12 && flagged;
    outcome(
        ok,
        format!(
            "direct gain rel. error {worst_direct:.1e}, max cross gain {worst_cross:.4} < {n_t}, equal-angle gain {equal}, equal-angle set flagged ambiguous: {flagged}"
        ),
    )
}

/// Random three-target scene with distinct ranges and bistatic ranges.
fn random_scene(rng: &mut impl Rng) -> Scene {
    let mut scene = noiseless(Scene::reference());
    loop {
        let targets: Vec<Target> = (0..3)
            .map(|_| Target::polar(rng.random_range(40.0..180.0), rng.random_range(15f64..165.0).to_radians(), 0.0))
            .collect();
        scene.targets = targets;
        let t = scene.truths().unwrap();
        let separated = (0..3).all(|i| {
            (i + 1..3).all(|j| {
                (t[i].range_active - t[j].range_active).abs() >= 3.0
                    && (t[i].bistatic_range() - t[j].bistatic_range()).abs() >= 3.0
            })
        });
        if separated {
            return scene;
        }
    }
}

fn restricted_transform() -> Outcome {
    let mut rng = synth::stream_rng(7, 0);
    let (n_t, n_f, w) = (8usize, 10usize, PI / 3.0);
    let mut worst = 0.0f64;
    let mut mults_ok = true;
    let mut ratio = 0.0;
    for _ in 0..1000 {
        let snap: Vec<Complex64> = (0..n_t)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let (cf, cr) = (MulCounter::default(), MulCounter::default());
        let full = aoa::full_spatial_spectrum(&snap, n_f, &cf);
        let part = aoa::restricted_spatial_spectrum(&snap, rng.random_range(-PI..PI), w, n_f, &cr).unwrap();
        let scale = full.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (j, v) in part.values.iter().enumerate() {
            let i = (part.start + j as i64).rem_euclid(full.len as i64) as usize;
            worst = worst.max((v - full.values[i]).norm() / scale);
        }
        let bound = (w / PI) * cf.get() as f64 + 2.0 * (n_t * n_f) as f64;
        mults_ok &= cr.get() as f64 <= bound;
        ratio = cr.get() as f64 / cf.get() as f64;
    }

    let half_bin = PI / (n_t * n_f) as f64;
    let (mut hits, mut total) = (0usize, 0usize);
    for t in 0..100u64 {
        let scene = with(random_scene(&mut rng), &[("stage_doppler", 0.0)]);
        let rec = run_trial(&scene, Variant::PerfectSync, synth::derive_seed(7, &[t])).unwrap();
        let est = rec.values(Source::Fused, Quantity::Omega);
        let truth: Vec<f64> = rec.truths.iter().map(|t| t.omega).collect();
        total += truth.len();
        hits += metrics::associate(&est, &truth, true)
            .into_iter()
            .filter(|&(i, j)| metrics::wrap_angle(est[i] - truth[j]).abs() <= half_bin * (1.0 + 1e-9))
            .count();
    }
    let coverage = hits as f64 / total as f64;
    outcome(
        worst <= 1e-12 && mults_ok && coverage >= 0.95,
        format!(
            "max subset deviation {worst:.1e}, multiply ratio {ratio:.3} within bound: {mults_ok}, interval coverage {hits}/{total} = {coverage:.3}"
        ),
    )
}

fn roc_ordering() -> Outcome {
    let pfa = vec![0.01, 0.05, 0.1];
    let spec = SweepSpec {
        label: "roc".into(),
        overrides: RANGE_ONLY.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        parameter: "snr_db".into(),
        values: vec![-27.0],
        trials: 2000,
        variants: vec![Variant::Cooperative],
        kind: SweepKind::Detection { pfa: pfa.clone() },
        seed: 8,
    };
    let rows = harness::run_sweep(&Scene::reference(), &spec, "roc").unwrap();
    let pd = |name: &str, p: f64| {
        rows.iter()
            .find(|r| r.metric == format!("pd_{name}@pfa={p}"))
            .map(|r| r.metric_value)
            .unwrap()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for p in pfa {
        let (f, a) = (pd("fused", p), pd("active", p));
        ok &= f >= a;
        parts.push(format!("PFA {p}: {f:.3} vs {a:.3}"));
    }
    outcome(ok, format!("SNR -27 dB, 2000 trials, PD cooperative vs active: {}", parts.join(", ")))
}

fn determinism() -> Outcome {
    let scene = Scene::reference();
    let mut bad = Vec::new();
    for name in harness::RECIPES {
        let mut spec = harness::recipe(name).unwrap().swap_remove(0);
        spec.values.truncate(2);
        spec.trials = 3;
        if let SweepKind::Detection { pfa } = &mut spec.kind {
            *pfa = vec![0.5];
            spec.trials = 20;
        }
        let csv = |workers| {
            let rows = harness::run_sweep_with_workers(&scene, &spec, name, workers).unwrap();
            let mut buf = Vec::new();
            harness::write_metrics_csv(&mut buf, &rows).unwrap();
            buf
        };
        let first = csv(1);
        if first != csv(1) || first != csv(2) {
            bad.push(name);
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} recipes byte-identical across reruns and worker counts", harness::RECIPES.len())
        } else {
            format!("differing output: {bad:?}")
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("noiseless end-to-end", noiseless_end_to_end),
        ("correlation offset recovery", offset_recovery),
        ("cooperative dominance", cooperative_dominance),
        ("CFO-variance threshold", cfo_variance_threshold),
        ("bound proximity", crlb_proximity),
        ("antenna-sum gains", antenna_sum_gains),
        ("restricted spatial transform", restricted_transform),
        ("ROC ordering", roc_ordering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !result.pass as usize;
        println!(
            "{} criterion {}: {name} -- {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
