//! TOML scene files.
//!
//! ```toml
//! [scene]              # numerology, geometry, SNRs, [scene.processing]
//! n_antennas = 8
//!
//! [offsets]            # clock-offset model (s, s^2, Hz, Hz^2)
//! kind = "gaussian"
//! to_mean_s = 100e-9
//!
//! [[targets]]          # polar or Cartesian; omitted -> reference targets
//! range_m = 70.0
//! angle_deg = 25.0
//! radial_speed_mps = 15.0
//!
//! [sweep]              # optional, used by the `custom` recipe
//! parameter = "snr_db"
//! values = [0.0, 10.0]
//! ```
//!
//! Every section is optional and missing keys take their defaults.

use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{SweepKind, SweepSpec, Variant};
use crate::scenario::{reference_targets, validate_config, Scene, SceneConfig, Target};
use crate::synth::OffsetModel;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TargetEntry {
    Polar {
        range_m: f64,
        angle_deg: f64,
        #[serde(default)]
        radial_speed_mps: f64,
        #[serde(default)]
        gain_active: Option<[f64; 2]>,
        #[serde(default)]
        gain_passive: Option<[f64; 2]>,
    },
    Cartesian {
        position_m: [f64; 2],
        #[serde(default)]
        velocity_mps: [f64; 2],
        #[serde(default)]
        gain_active: Option<[f64; 2]>,
        #[serde(default)]
        gain_passive: Option<[f64; 2]>,
    },
}

impl TargetEntry {
    fn into_target(self) -> Target {
        let (mut t, ga, gp) = match self {
            TargetEntry::Polar {
                range_m,
                angle_deg,
                radial_speed_mps,
                gain_active,
                gain_passive,
            } => (
                Target::polar(range_m, angle_deg.to_radians(), radial_speed_mps),
                gain_active,
                gain_passive,
            ),
            TargetEntry::Cartesian {
                position_m,
                velocity_mps,
                gain_active,
                gain_passive,
            } => (Target::new(position_m, velocity_mps), gain_active, gain_passive),
        };
        if let Some([re, im]) = ga {
            t.gain_active = Complex64::new(re, im);
        }
        if let Some([re, im]) = gp {
            t.gain_passive = Complex64::new(re, im);
        }
        t
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    #[serde(default = "default_label")]
    label: String,
    parameter: String,
    values: Vec<f64>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_variants")]
    variants: Vec<String>,
    #[serde(default)]
    seed: u64,
    /// False-alarm grid; present means a detection sweep.
    #[serde(default)]
    pfa: Option<Vec<f64>>,
    #[serde(default)]
    overrides: std::collections::BTreeMap<String, f64>,
}

fn default_label() -> String {
    "custom".into()
}

fn default_trials() -> usize {
    100
}

fn default_variants() -> Vec<String> {
    vec!["cooperative".into()]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLayout {
    #[serde(default)]
    scene: Option<SceneConfig>,
    #[serde(default)]
    offsets: Option<OffsetModel>,
    #[serde(default)]
    targets: Option<Vec<TargetEntry>>,
    #[serde(default)]
    sweep: Option<SweepSection>,
}

/// A parsed and validated scene file.
#[derive(Debug, Clone)]
pub struct SceneFile {
    pub scene: Scene,
    /// Sweep for the `custom` recipe, if the file defines one.
    pub sweep: Option<SweepSpec>,
}

/// Parses a scene file from text. Syntax errors map to
/// [`Error::ConfigParse`], violated invariants to [`Error::InvalidConfig`].
pub fn parse_scene(text: &str) -> Result<SceneFile> {
    let layout: FileLayout = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let config = layout.scene.unwrap_or_default();
    let report = validate_config(&config);
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report));
    }
    let reference = Scene::reference();
    let targets = match layout.targets {
        Some(list) => list.into_iter().map(TargetEntry::into_target).collect(),
        None => reference_targets(),
    };
    if targets.is_empty() {
        return Err(Error::ConfigParse("`targets` is present but empty".into()));
    }
    let scene = Scene {
        config,
        offsets: layout.offsets.unwrap_or(reference.offsets),
        targets,
    };
    scene.truths()?;
    let sweep = layout.sweep.map(sweep_spec).transpose()?;
    Ok(SceneFile { scene, sweep })
}

fn sweep_spec(s: SweepSection) -> Result<SweepSpec> {
    if s.trials == 0 {
        return Err(Error::ConfigParse("sweep needs at least one trial".into()));
    }
    if s.values.is_empty() || s.variants.is_empty() {
        return Err(Error::ConfigParse("sweep needs at least one value and one variant".into()));
    }
    let variants = s.variants.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>>>()?;
    Ok(SweepSpec {
        label: s.label,
        overrides: s.overrides.into_iter().collect(),
        parameter: s.parameter,
        values: s.values,
        trials: s.trials,
        variants,
        kind: match s.pfa {
            Some(pfa) => SweepKind::Detection { pfa },
            None => SweepKind::Estimation,
        },
        seed: s.seed,
    })
}

/// Reads and parses a scene file.
pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text)
}
