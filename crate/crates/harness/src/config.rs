//! Experiment configuration (JSON) and its translation into core models.

use std::fmt;
use std::path::Path;

use glmb_core::filter::{FilterConfig, ModelSet};
use glmb_core::gaussian::{CovarianceCap, GaussianDensity, UtConfig};
use glmb_core::models::{
    AdaptiveBirth, BirthModel, ImageLikelihood, MaskProfile, MotionModel, SceneMask, SensorModel,
    SurvivalIntegration, SurvivalModel,
};
use glmb_core::ospa::OspaParams;
use glmb_core::sim::{SnrLayout, TruthScenario, TruthTrack};
use glmb_core::TrackLabel;
use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// A configuration problem tied to a key path such as `filter.clutter_rate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "glmb")]
    Glmb,
    #[serde(rename = "glmb-im")]
    GlmbIm,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Glmb, Variant::GlmbIm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Glmb => "glmb",
            Variant::GlmbIm => "glmb-im",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub ospa: OspaConfig,
}

fn default_runs() -> usize {
    20
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: default_runs(),
            scenario: ScenarioConfig::default(),
            filter: FilterSettings::default(),
            ospa: OspaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub width: usize,
    pub height: usize,
    pub duration: u32,
    pub noise_power: f64,
    pub psf_r: f64,
    pub psf_s: f64,
    pub sampling_period: f64,
    pub sigma_v: f64,
    pub snr: SnrConfig,
    /// Hard detection threshold on cell power.
    pub threshold: f64,
    /// Objects closer than this (pixels) count as mutually occluding.
    pub occlusion_distance: f64,
    pub tracks: Vec<TrackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub birth_frame: u32,
    pub death_frame: u32,
    /// `[x, vx, y, vy]`.
    pub state: [f64; 4],
    #[serde(default)]
    pub process_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrConfig {
    Uniform {
        db: f64,
    },
    HalfPlane {
        split_x: f64,
        left_db: f64,
        right_db: f64,
        period: u32,
    },
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let t = |birth_frame, death_frame, state| TrackConfig {
            birth_frame,
            death_frame,
            state,
            process_noise: false,
        };
        Self {
            width: 100,
            height: 100,
            duration: 100,
            noise_power: 1.0,
            psf_r: 1.0,
            psf_s: 1.0,
            sampling_period: 1.0,
            sigma_v: 1.0,
            snr: SnrConfig::HalfPlane {
                split_x: 50.0,
                left_db: 10.0,
                right_db: 7.0,
                period: 20,
            },
            threshold: 11.0,
            occlusion_distance: 4.0,
            // Starts on the birth means; pairs (1, 4) and (2, 5) cross
            // at frames 45 and 60.
            tracks: vec![
                t(1, 88, [5.0, 1.0227, 5.0, 0.7955]),
                t(5, 89, [90.0, -1.0, 30.0, 0.25]),
                t(10, 100, [5.0, 0.8, 25.0, 0.7]),
                t(15, 100, [5.0, 1.0, 90.0, -0.3]),
                t(25, 99, [80.0, -1.0, 90.0, -0.857]),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProfileConfig {
    Step,
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub detection_probability: f64,
    pub clutter_rate: f64,
    pub obs_std: f64,
    /// Constant survival probability of the standard variant.
    pub survival_probability: f64,
    pub survival_gamma: f64,
    pub mask_margin: f64,
    pub mask_profile: MaskProfileConfig,
    /// Optional PGM scene mask; overrides the border mask when set.
    pub mask_file: Option<String>,
    pub survival_sigma_points: bool,
    pub birth_existence: f64,
    /// Birth means `[x, vx, y, vy]`.
    pub birth_means: Vec<[f64; 4]>,
    pub birth_cov_diag: [f64; 4],
    pub adaptive_birth: Option<AdaptiveBirthConfig>,
    pub nominal_snr_db: f64,
    pub template_sigma: f64,
    pub patch_size: usize,
    pub template_rate: f64,
    pub confident_threshold: f64,
    pub h_max: usize,
    pub min_weight: f64,
    pub ut_alpha: f64,
    pub ut_beta: f64,
    pub ut_kappa: f64,
    /// Positional standard deviation cap on predicted covariances; `null` disables.
    pub max_position_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveBirthConfig {
    pub existence: f64,
    pub cov_diag: [f64; 4],
    pub association_threshold: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            detection_probability: 0.98,
            clutter_rate: 10.0,
            obs_std: 4.0,
            survival_probability: 0.98,
            survival_gamma: 0.1,
            mask_margin: 10.0,
            mask_profile: MaskProfileConfig::Ramp,
            mask_file: None,
            survival_sigma_points: false,
            birth_existence: 0.03,
            birth_means: vec![
                [5.0, 0.0, 5.0, 0.0],
                [5.0, 0.0, 25.0, 0.0],
                [5.0, 0.0, 90.0, 0.0],
                [90.0, 0.0, 30.0, 0.0],
                [80.0, 0.0, 90.0, 0.0],
            ],
            birth_cov_diag: [3.0, 2.0, 3.0, 2.0],
            adaptive_birth: None,
            nominal_snr_db: 10.0,
            template_sigma: 7.0,
            patch_size: 3,
            template_rate: 0.1,
            confident_threshold: 0.5,
            h_max: 200,
            min_weight: 1e-15,
            ut_alpha: 1.0,
            ut_beta: 2.0,
            ut_kappa: 1.0,
            max_position_std: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OspaConfig {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self {
            cutoff: 20.0,
            order: 1.0,
        }
    }
}

impl Config {
    /// Parses JSON, reporting the key path of the first offending entry.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let mut key = if path == "." { String::new() } else { path };
            let msg = inner.to_string();
            // Unknown and missing fields are reported by the parent path.
            if let Some(field) = backticked(&msg) {
                if msg.starts_with("unknown field") || msg.starts_with("missing field") {
                    if !key.is_empty() && !key.ends_with(&field) {
                        key.push('.');
                        key.push_str(&field);
                    } else if key.is_empty() {
                        key = field;
                    }
                }
            }
            ConfigError::new(if key.is_empty() { "<root>".into() } else { key }, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::from_json(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        let f = &self.filter;
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(key, msg))
            }
        };
        check(s.width > 0 && s.height > 0, "scenario.width", "image must be non-empty")?;
        check(s.noise_power > 0.0, "scenario.noise_power", "must be positive")?;
        check(s.psf_r > 0.0 && s.psf_s > 0.0, "scenario.psf_r", "point spread must be positive")?;
        check(s.threshold > 0.0, "scenario.threshold", "must be positive")?;
        check(s.sampling_period > 0.0, "scenario.sampling_period", "must be positive")?;
        for (i, t) in s.tracks.iter().enumerate() {
            check(
                t.birth_frame >= 1 && t.birth_frame <= t.death_frame && t.death_frame <= s.duration,
                &format!("scenario.tracks[{i}].death_frame"),
                "need 1 <= birth_frame <= death_frame <= duration",
            )?;
            let [x, _, y, _] = t.state;
            check(
                x >= 0.0 && y >= 0.0 && x <= (s.width - 1) as f64 && y <= (s.height - 1) as f64,
                &format!("scenario.tracks[{i}].state"),
                "initial position outside the image",
            )?;
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        check(prob(f.detection_probability), "filter.detection_probability", "must lie in [0, 1]")?;
        check(f.clutter_rate > 0.0, "filter.clutter_rate", "must be positive")?;
        check(f.obs_std > 0.0, "filter.obs_std", "must be positive")?;
        check(prob(f.survival_probability), "filter.survival_probability", "must lie in [0, 1]")?;
        check(f.survival_gamma >= 0.0, "filter.survival_gamma", "must be non-negative")?;
        check(f.mask_margin >= 0.0, "filter.mask_margin", "must be non-negative")?;
        check(
            f.birth_existence > 0.0 && f.birth_existence < 1.0,
            "filter.birth_existence",
            "must lie in (0, 1)",
        )?;
        check(f.birth_cov_diag.iter().all(|&v| v > 0.0), "filter.birth_cov_diag", "must be positive")?;
        if let Some(a) = &f.adaptive_birth {
            check(
                a.existence > 0.0 && a.existence < 1.0,
                "filter.adaptive_birth.existence",
                "must lie in (0, 1)",
            )?;
            check(a.cov_diag.iter().all(|&v| v > 0.0), "filter.adaptive_birth.cov_diag", "must be positive")?;
        }
        check(f.template_sigma > 0.0, "filter.template_sigma", "must be positive")?;
        check(f.patch_size % 2 == 1, "filter.patch_size", "must be odd")?;
        check(prob(f.template_rate), "filter.template_rate", "must lie in [0, 1]")?;
        check(f.h_max >= 1, "filter.h_max", "must be at least 1")?;
        check((0.0..1.0).contains(&f.min_weight), "filter.min_weight", "must lie in [0, 1)")?;
        check(
            UtConfig {
                alpha: f.ut_alpha,
                beta: f.ut_beta,
                kappa: f.ut_kappa,
            }
            .validate()
            .is_ok(),
            "filter.ut_kappa",
            "sigma-point weights must keep a positive centre weight",
        )?;
        check(
            f.max_position_std.is_none_or(|v| v > 0.0),
            "filter.max_position_std",
            "must be positive",
        )?;
        check(
            self.ospa.cutoff > 0.0 && self.ospa.order >= 1.0,
            "ospa.cutoff",
            "need cutoff > 0 and order >= 1",
        )?;
        Ok(())
    }

    pub fn ospa_params(&self) -> OspaParams {
        OspaParams {
            cutoff: self.ospa.cutoff,
            order: self.ospa.order,
        }
    }

    pub fn truth_scenario(&self) -> TruthScenario {
        let s = &self.scenario;
        // Labels follow birth order: (birth frame, index among same-frame births).
        let mut tracks = Vec::with_capacity(s.tracks.len());
        for t in &s.tracks {
            let index = tracks
                .iter()
                .filter(|o: &&TruthTrack| o.birth_frame == t.birth_frame)
                .count() as u32;
            tracks.push(TruthTrack {
                label: TrackLabel::new(t.birth_frame, index),
                birth_frame: t.birth_frame,
                death_frame: t.death_frame,
                initial: Vector4::from(t.state),
                process_noise: t.process_noise,
            });
        }
        TruthScenario {
            width: s.width,
            height: s.height,
            duration: s.duration,
            tracks,
            snr: match s.snr {
                SnrConfig::Uniform { db } => SnrLayout::Uniform(db),
                SnrConfig::HalfPlane {
                    split_x,
                    left_db,
                    right_db,
                    period,
                } => SnrLayout::HalfPlane {
                    split_x,
                    left_db,
                    right_db,
                    period,
                },
            },
            sampling_period: s.sampling_period,
            sigma_v: s.sigma_v,
            noise_power: s.noise_power,
            psf_r: s.psf_r,
            psf_s: s.psf_s,
        }
    }

    fn scene_mask(&self) -> anyhow::Result<SceneMask> {
        let s = &self.scenario;
        let f = &self.filter;
        match &f.mask_file {
            Some(path) => {
                let mask = crate::pgm::read_mask(Path::new(path))?;
                if mask.width() != s.width || mask.height() != s.height {
                    return Err(ConfigError::new("filter.mask_file", "mask size differs from the image").into());
                }
                Ok(mask)
            }
            None => {
                let profile = match f.mask_profile {
                    MaskProfileConfig::Step => MaskProfile::Step,
                    MaskProfileConfig::Ramp => MaskProfile::Ramp,
                };
                Ok(SceneMask::border(s.width, s.height, f.mask_margin, profile))
            }
        }
    }

    /// Models for one filter variant. The standard variant drops the image
    /// factor and uses the constant survival probability.
    pub fn model_set(&self, variant: Variant) -> anyhow::Result<ModelSet> {
        let s = &self.scenario;
        let f = &self.filter;
        let ut = UtConfig {
            alpha: f.ut_alpha,
            beta: f.ut_beta,
            kappa: f.ut_kappa,
        };
        let diag = |d: [f64; 4]| Matrix4::from_diagonal(&Vector4::from(d));
        let static_components = f
            .birth_means
            .iter()
            .map(|m| {
                GaussianDensity::new(Vector4::from(*m), diag(f.birth_cov_diag))
                    .map(|g| (f.birth_existence, g))
                    .map_err(|_| ConfigError::new("filter.birth_cov_diag", "not positive definite"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let birth = BirthModel {
            static_components,
            adaptive: f.adaptive_birth.as_ref().map(|a| AdaptiveBirth {
                existence: a.existence,
                covariance: diag(a.cov_diag),
                association_threshold: a.association_threshold,
            }),
        };
        let (survival, image) = match variant {
            Variant::Glmb => (SurvivalModel::Constant(f.survival_probability), None),
            Variant::GlmbIm => (
                SurvivalModel::AgeDependent {
                    mask: self.scene_mask()?,
                    gamma: f.survival_gamma,
                    integration: if f.survival_sigma_points {
                        SurvivalIntegration::SigmaPoints(ut)
                    } else {
                        SurvivalIntegration::Mean
                    },
                },
                Some(ImageLikelihood {
                    template_sigma: f.template_sigma,
                    patch_size: f.patch_size,
                    noise_power: s.noise_power,
                    nominal_snr_db: f.nominal_snr_db,
                    psf_r: s.psf_r,
                    psf_s: s.psf_s,
                }),
            ),
        };
        let models = ModelSet {
            motion: MotionModel::constant_velocity(s.sampling_period, s.sigma_v),
            birth,
            survival,
            sensor: SensorModel {
                detection_probability: f.detection_probability,
                clutter_rate: f.clutter_rate,
                clutter_area: (s.width * s.height) as f64,
                obs_matrix: SensorModel::position_obs_matrix(),
                obs_noise: Matrix2::identity() * (f.obs_std * f.obs_std),
                image,
            },
            ut,
            cov_cap: match f.max_position_std {
                Some(v) => CovarianceCap::position_std(v),
                None => CovarianceCap::NONE,
            },
        };
        models.validate()?;
        Ok(models)
    }

    pub fn filter_config(&self, h_max: Option<usize>) -> FilterConfig {
        FilterConfig {
            h_max: h_max.unwrap_or(self.filter.h_max),
            min_weight: self.filter.min_weight,
            template_rate: self.filter.template_rate,
            confident_threshold: self.filter.confident_threshold,
        }
    }
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}
