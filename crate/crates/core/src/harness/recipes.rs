//! Named sweep recipes and the parameter vocabulary they use.

use std::f64::consts::PI;

use super::{run_sweep, MetricRow, SweepKind, SweepSpec, Variant};
use crate::error::{Error, Result};
use crate::scenario::Scene;
use crate::synth::OffsetKind;

/// Recipes shipped with the crate; `custom` reads its sweep from the
/// scene file instead.
pub const RECIPES: [&str; 6] = ["fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7-partial"];

const DEFAULT_TRIALS: usize = 100;
const DETECTION_TRIALS: usize = 2000;
const DEFAULT_SEED: u64 = 20_240_601;

/// Sets one named scalar parameter on the scene.
///
/// SNRs are in dB; `snr_r_db` moves the passive SNR relative to the active
/// one and `snr_db` sets both. Timing offsets are in ns and ns^2, CFO mean
/// and variance in multiples of the subcarrier spacing (Hz and Hz^2).
/// Boolean switches take 0 or 1.
pub fn apply_parameter(scene: &mut Scene, name: &str, value: f64) -> Result<()> {
    let c = &mut scene.config;
    let df = c.subcarrier_spacing_hz;
    let count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::ConfigParse(format!("`{name}` needs a non-negative integer, got {v}")))
        }
    };
    match name {
        "snr_m_db" => c.snr_active_db = value,
        "snr_b_db" => c.snr_passive_db = value,
        "snr_r_db" => c.snr_passive_db = c.snr_active_db + value,
        "snr_db" => {
            c.snr_active_db = value;
            c.snr_passive_db = value;
        }
        "to_mean_ns" => scene.offsets.to_mean_s = value * 1e-9,
        "to_var_ns2" => scene.offsets.to_var_s2 = value * 1e-18,
        "cfo_mean_df" => scene.offsets.cfo_mean_hz = value * df,
        "cfo_var_df" => scene.offsets.cfo_var_hz2 = value * df,
        "constant_offsets" => {
            scene.offsets.kind = if value != 0.0 {
                OffsetKind::Constant
            } else {
                OffsetKind::Gaussian
            }
        }
        "n_antennas" => c.n_antennas = count(value)?,
        "n_targets" => {
            let n = count(value)?;
            if n == 0 || n > scene.targets.len() {
                return Err(Error::ConfigParse(format!(
                    "`n_targets` = {n} but the scene defines {} target(s)",
                    scene.targets.len()
                )));
            }
            scene.targets.truncate(n);
        }
        "aoa_window_rad" => c.processing.aoa_window_rad = value,
        "spatial_oversampling" => c.processing.spatial_oversampling = count(value)?,
        "baseline_m" => c.baseline_m = value,
        "eps_extract" => c.processing.eps_extract = value,
        "band_leakage_db" => c.processing.band_leakage_db = value,
        "stage_doppler" => c.processing.stages.doppler = value != 0.0,
        "stage_aoa" => c.processing.stages.aoa = value != 0.0,
        _ => return Err(Error::UnknownParameter(name.to_string())),
    }
    Ok(())
}

fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

fn spec(label: &str, overrides: &[(&str, f64)], parameter: &str, values: Vec<f64>, variants: &[Variant]) -> SweepSpec {
    SweepSpec {
        label: label.to_string(),
        overrides: overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        parameter: parameter.to_string(),
        values,
        trials: DEFAULT_TRIALS,
        variants: variants.to_vec(),
        kind: SweepKind::Estimation,
        seed: DEFAULT_SEED,
    }
}

/// The sweeps behind a named recipe.
pub fn recipe(name: &str) -> Result<Vec<SweepSpec>> {
    use Variant::*;
    let range_only = [("stage_doppler", 0.0), ("stage_aoa", 0.0)];
    Ok(match name {
        // bistatic estimation under timing and frequency offsets
        "fig3" => {
            let mut v = Vec::new();
            for to in [10.0, 100.0, 1000.0] {
                v.push(spec(
                    &format!("to_mean_{to}ns"),
                    &[("to_mean_ns", to), ("to_var_ns2", 100.0), ("cfo_mean_df", 0.0), ("cfo_var_df", 0.0), ("stage_aoa", 0.0)],
                    "snr_b_db",
                    steps(-20.0, 20.0, 5.0),
                    &[PassiveOnly],
                ));
            }
            for cfo in [0.0, 0.1, 0.2] {
                for var in [0.01, 0.1] {
                    v.push(spec(
                        &format!("cfo_mean_{cfo}df_var_{var}df"),
                        &[("to_mean_ns", 0.0), ("to_var_ns2", 0.0), ("cfo_mean_df", cfo), ("cfo_var_df", var), ("stage_aoa", 0.0)],
                        "snr_b_db",
                        steps(-20.0, 20.0, 5.0),
                        &[PassiveOnly],
                    ));
                }
            }
            v
        }
        // correlation direct-term accuracy and range NMSE versus power ratio
        "fig4" => {
            let mut v = Vec::new();
            for snr_m in [0.0, 10.0] {
                for leak in [f64::NEG_INFINITY, 0.0] {
                    let tag = if leak.is_finite() { "shared_band" } else { "isolated" };
                    v.push(spec(
                        &format!("direct_term_snr_m_{snr_m}db_{tag}"),
                        &[range_only[0], range_only[1], ("snr_m_db", snr_m), ("band_leakage_db", leak)],
                        "snr_r_db",
                        steps(-30.0, 30.0, 5.0),
                        &[Cooperative],
                    ));
                }
            }
            for leak in [f64::NEG_INFINITY, 0.0] {
                let tag = if leak.is_finite() { "shared_band" } else { "isolated" };
                v.push(spec(
                    &format!("range_nmse_{tag}"),
                    &[range_only[0], range_only[1], ("snr_m_db", 0.0), ("band_leakage_db", leak)],
                    "snr_r_db",
                    steps(-20.0, 20.0, 5.0),
                    &[ActiveOnly, PassiveOnly, Cooperative],
                ));
            }
            v
        }
        // range and velocity NMSE versus SNR with the bound overlay
        "fig5" => [1.0, 3.0]
            .iter()
            .map(|&l| {
                spec(
                    &format!("targets_{l}"),
                    &[("n_targets", l), ("stage_aoa", 0.0)],
                    "snr_db",
                    steps(-20.0, 20.0, 5.0),
                    &[Cooperative, PerfectSync, PassiveOnly],
                )
            })
            .collect(),
        // velocity NMSE versus CFO variance
        "fig6a" => vec![spec(
            "cfo_variance",
            &[("snr_db", 10.0), ("stage_aoa", 0.0)],
            "cfo_var_df",
            vec![0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5],
            &[Cooperative, PassiveOnly],
        )],
        // detection probability at fixed false-alarm rates
        "fig6b" => vec![SweepSpec {
            kind: SweepKind::Detection {
                pfa: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            },
            trials: DETECTION_TRIALS,
            ..spec("roc", &range_only, "snr_db", vec![-30.0, -27.0, -24.0, -21.0], &[Cooperative])
        }],
        // restricted versus full spatial transform
        "fig7-partial" => vec![
            spec(
                "snr",
                &[("stage_doppler", 0.0)],
                "snr_db",
                steps(-20.0, 20.0, 5.0),
                &[Cooperative, PerfectSync],
            ),
            spec(
                "window",
                &[("stage_doppler", 0.0), ("snr_db", 10.0)],
                "aoa_window_rad",
                vec![PI / 12.0, PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0, PI],
                &[Cooperative, PerfectSync],
            ),
        ],
        _ => return Err(Error::UnknownRecipe(name.to_string())),
    })
}

/// Runs `specs` in order on top of `scene` and concatenates their rows.
pub fn run_recipe(scene: &Scene, name: &str, specs: &[SweepSpec]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for s in specs {
        rows.extend(run_sweep(scene, s, name)?);
    }
    Ok(rows)
}
