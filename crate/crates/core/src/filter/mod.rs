//! The joint prediction-update recursion and the tracking filter around it.

pub mod eta;
pub mod gibbs;
pub mod oracle;
pub mod update;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::density::{Association, GlmbDensity};
use crate::error::Result;
use crate::gaussian::{CovarianceCap, UtConfig};
use crate::image::Patch;
use crate::label::TrackLabel;
use crate::models::{
    update_reference_template, BirthComponent, BirthModel, MotionModel, Observation, SensorModel,
    SurvivalModel,
};

pub use update::{joint_predict_update, UpdateDiagnostics};

/// Everything the recursion needs to know about the world.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub motion: MotionModel,
    pub birth: BirthModel,
    pub survival: SurvivalModel,
    pub sensor: SensorModel,
    pub ut: UtConfig,
    pub cov_cap: CovarianceCap,
}

impl ModelSet {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.birth.validate()?;
        self.ut.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Cap on the number of hypotheses kept after each frame.
    pub h_max: usize,
    /// Hypotheses lighter than this are pruned.
    pub min_weight: f64,
    /// Learning rate of the per-label reference template.
    pub template_rate: f64,
    /// A label's template is refreshed when its detection probability in the
    /// posterior exceeds this.
    pub confident_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            h_max: 200,
            min_weight: 1e-15,
            template_rate: 0.1,
            confident_threshold: 0.5,
        }
    }
}

/// Read-only inputs shared by every component during one frame.
pub struct FrameContext<'a> {
    /// Index of the frame being processed.
    pub frame: u32,
    pub observation: &'a Observation,
    pub models: &'a ModelSet,
    pub births: Vec<BirthComponent>,
    pub templates: Option<&'a BTreeMap<TrackLabel, Patch>>,
    pub default_template: Option<&'a Patch>,
}

impl<'a> FrameContext<'a> {
    pub fn new(
        frame: u32,
        observation: &'a Observation,
        models: &'a ModelSet,
        births: Vec<BirthComponent>,
    ) -> Self {
        Self {
            frame,
            observation,
            models,
            births,
            templates: None,
            default_template: None,
        }
    }

    /// Reference template for `label`, or `None` when the image factor is off.
    pub fn template_for(&self, label: TrackLabel) -> Option<&'a Patch> {
        self.models.sensor.image.as_ref()?;
        self.templates
            .and_then(|t| t.get(&label))
            .or(self.default_template)
    }
}

/// Per-frame diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub frame: u32,
    pub births: usize,
    pub update: UpdateDiagnostics,
    pub templates_refreshed: usize,
}

/// A GLMB tracker carrying its posterior and per-label templates between frames.
#[derive(Debug, Clone)]
pub struct GlmbFilter {
    models: ModelSet,
    config: FilterConfig,
    density: GlmbDensity,
    templates: BTreeMap<TrackLabel, Patch>,
    nominal_template: Option<Patch>,
    /// Previous frame's detections with the probability that some track used them.
    previous_detections: Vec<(Vector2<f64>, f64)>,
}

impl GlmbFilter {
    pub fn new(models: ModelSet, config: FilterConfig) -> Result<Self> {
        models.validate()?;
        let nominal_template = models.sensor.image.as_ref().map(|m| m.nominal_template());
        Ok(Self {
            models,
            config,
            density: GlmbDensity::empty(0),
            templates: BTreeMap::new(),
            nominal_template,
            previous_detections: Vec::new(),
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn density(&self) -> &GlmbDensity {
        &self.density
    }

    pub fn templates(&self) -> &BTreeMap<TrackLabel, Patch> {
        &self.templates
    }

    /// Processes the next frame. Births for the frame are proposed from the
    /// birth model and the previous frame's unexplained detections.
    pub fn step(&mut self, observation: &Observation, seed: u64) -> Result<StepReport> {
        let frame = self.density.frame + 1;
        let births = self
            .models
            .birth
            .birth_components(frame, &self.previous_detections);
        let n_births = births.len();
        let ctx = FrameContext {
            frame,
            observation,
            models: &self.models,
            births,
            templates: Some(&self.templates),
            default_template: self.nominal_template.as_ref(),
        };
        let (density, update) = joint_predict_update(
            &self.density,
            &ctx,
            self.config.h_max,
            self.config.min_weight,
            seed,
        )?;
        self.density = density;
        self.previous_detections = detection_usage(&self.density, observation);
        let templates_refreshed = self.refresh_templates(observation);
        Ok(StepReport {
            frame,
            births: n_births,
            update,
            templates_refreshed,
        })
    }

    fn refresh_templates(&mut self, observation: &Observation) -> usize {
        let Some(nominal) = &self.nominal_template else {
            return 0;
        };
        let labels = self.density.labels();
        self.templates.retain(|l, _| labels.contains(l));
        let mut refreshed = 0;
        for label in labels {
            let mut detected = 0.0;
            for c in self.density.components() {
                if let Some(t) = c.track(label) {
                    if matches!(t.association, Association::Detection(_)) {
                        detected += c.weight();
                    }
                }
            }
            if detected <= self.config.confident_threshold {
                continue;
            }
            let Some(mixture) = self.density.track_density(label) else {
                continue;
            };
            let m = mixture.mean();
            let current = self.templates.get(&label).unwrap_or(nominal);
            let next = update_reference_template(
                current,
                &observation.image,
                Vector2::new(m[0], m[2]),
                true,
                self.config.template_rate,
            );
            self.templates.insert(label, next);
            refreshed += 1;
        }
        refreshed
    }
}

/// Probability mass of hypotheses in which each detection is assigned to a track.
pub fn detection_usage(density: &GlmbDensity, observation: &Observation) -> Vec<(Vector2<f64>, f64)> {
    let mut used = alloc::vec![0.0; observation.detections.len()];
    for c in density.components() {
        let w = c.weight();
        for t in c.tracks() {
            if let Association::Detection(j) = t.association {
                if let Some(u) = used.get_mut(j as usize) {
                    *u += w;
                }
            }
        }
    }
    observation
        .detections
        .iter()
        .copied()
        .zip(used)
        .collect()
}
