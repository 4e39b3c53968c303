//! Scenario-level models: motion, birth, survival, and the hybrid
//! detection/image sensor.

use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::gaussian::{
    kalman_update, sigma_points, unscented_update, GaussianDensity, StateVector, UtConfig,
};
use crate::image::{Image, Patch};
use crate::label::TrackLabel;

/// Constant-velocity motion, `F = I₂ ⊗ [1 T; 0 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub sampling_period: f64,
    pub sigma_v: f64,
    transition: Matrix4<f64>,
    noise: Matrix4<f64>,
    gain: Matrix4x2<f64>,
}

impl MotionModel {
    /// Process noise is `σ_v² G Gᵀ` with `G = I₂ ⊗ [T²/2; T]` (white
    /// acceleration, `σ_v` in pixels/frame).
    pub fn constant_velocity(sampling_period: f64, sigma_v: f64) -> Self {
        let t = sampling_period;
        let mut transition = Matrix4::identity();
        transition[(0, 1)] = t;
        transition[(2, 3)] = t;
        let g = Matrix4x2::new(t * t / 2.0, 0.0, t, 0.0, 0.0, t * t / 2.0, 0.0, t);
        let noise = g * g.transpose() * (sigma_v * sigma_v);
        Self {
            sampling_period,
            sigma_v,
            transition,
            noise,
            gain: g * sigma_v,
        }
    }

    pub fn transition(&self) -> &Matrix4<f64> {
        &self.transition
    }

    pub fn noise(&self) -> &Matrix4<f64> {
        &self.noise
    }

    /// `σ_v G`: maps a standard normal 2-vector to a process noise draw.
    pub fn noise_gain(&self) -> &Matrix4x2<f64> {
        &self.gain
    }
}

/// Shape of the scene mask inside the border margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskProfile {
    /// Zero everywhere inside the margin.
    Step,
    /// Rises linearly from zero at the image edge to one at the margin depth.
    Ramp,
}

/// Rasterised scene mask `b(x) ∈ [0, 1]`, one value per image cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SceneMask {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidParameter("mask size does not match dimensions"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("mask values must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_values(width, height, alloc::vec![value; width * height])
    }

    /// Mask that is one in the interior and follows `profile` within `margin`
    /// pixels of the image edge.
    pub fn border(width: usize, height: usize, margin: f64, profile: MaskProfile) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                // Distance from the cell centroid to the nearest outer pixel edge.
                let d = [
                    col as f64 + 0.5,
                    width as f64 - 0.5 - col as f64,
                    row as f64 + 0.5,
                    height as f64 - 0.5 - row as f64,
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
                let v = if d >= margin {
                    1.0
                } else {
                    match profile {
                        MaskProfile::Step => 0.0,
                        MaskProfile::Ramp => (d / margin).clamp(0.0, 1.0),
                    }
                };
                values.push(v);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the cell nearest to `(x, y)`; zero off the image.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let col = libm::round(x);
        let row = libm::round(y);
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return 0.0;
        }
        self.values[row as usize * self.width + col as usize]
    }
}

/// How the survival probability is integrated against a track density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalIntegration {
    /// Evaluate at the track mean.
    Mean,
    /// Average over the unscented sigma points of the density.
    SigmaPoints(UtConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurvivalModel {
    Constant(f64),
    /// `P_S(x, ℓ) = b(x) / (1 + exp(-γ (k - t_ℓ)))`, with `t_ℓ` the birth
    /// frame carried by the label.
    AgeDependent {
        mask: SceneMask,
        gamma: f64,
        integration: SurvivalIntegration,
    },
}

impl SurvivalModel {
    pub fn probability_at(&self, position: Vector2<f64>, label: TrackLabel, frame: u32) -> f64 {
        match self {
            SurvivalModel::Constant(p) => *p,
            SurvivalModel::AgeDependent { mask, gamma, .. } => {
                let age = label.age(frame) as f64;
                mask.value_at(position[0], position[1]) / (1.0 + libm::exp(-gamma * age))
            }
        }
    }

    /// Survival probability of a track density from `frame` to `frame + 1`.
    pub fn survival_probability(
        &self,
        density: &GaussianDensity,
        label: TrackLabel,
        frame: u32,
    ) -> f64 {
        match self {
            SurvivalModel::Constant(p) => *p,
            SurvivalModel::AgeDependent { integration, .. } => match integration {
                SurvivalIntegration::Mean => self.probability_at(density.position(), label, frame),
                SurvivalIntegration::SigmaPoints(cfg) => {
                    let Ok(pts) = sigma_points(density, cfg) else {
                        return self.probability_at(density.position(), label, frame);
                    };
                    let (w0, wi, _) = cfg.weights();
                    pts.iter()
                        .enumerate()
                        .map(|(i, p)| {
                            let w = if i == 0 { w0 } else { wi };
                            w * self.probability_at(Vector2::new(p[0], p[2]), label, frame)
                        })
                        .sum::<f64>()
                        .clamp(0.0, 1.0)
                }
            },
        }
    }
}

/// Template likelihood `g_T ∝ exp(-‖f(x) - f̄‖² / σ²)` on raw pixel patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLikelihood {
    pub template_sigma: f64,
    pub patch_size: usize,
    /// Per-component variance `σ_n²` of the complex pixel noise.
    pub noise_power: f64,
    /// SNR (dB) the tracker assumes when building nominal templates.
    pub nominal_snr_db: f64,
    pub psf_r: f64,
    pub psf_s: f64,
}

impl ImageLikelihood {
    /// Mean power of a pure-noise cell, `2σ_n²`.
    pub fn background_mean(&self) -> f64 {
        2.0 * self.noise_power
    }

    /// Variance of the power of a pure-noise cell, `4σ_n⁴`.
    pub fn background_variance(&self) -> f64 {
        4.0 * self.noise_power * self.noise_power
    }

    /// Expected patch of an object centred on a cell at the nominal SNR.
    pub fn nominal_template(&self) -> Patch {
        let amp2 = snr_db_to_amplitude2(self.nominal_snr_db, self.noise_power);
        let half = (self.patch_size as f64 - 1.0) / 2.0;
        let mut data = Vec::with_capacity(self.patch_size * self.patch_size);
        for r in 0..self.patch_size {
            for c in 0..self.patch_size {
                let dx = c as f64 - half;
                let dy = r as f64 - half;
                let h = point_spread(dx, dy, self.psf_r, self.psf_s);
                data.push(amp2 * h * h + self.background_mean());
            }
        }
        Patch::from_vec(self.patch_size, data).expect("square patch")
    }
}

/// `A²` giving `snr_db = 10 log10(A² / (2σ_n²))`.
pub fn snr_db_to_amplitude2(snr_db: f64, noise_power: f64) -> f64 {
    2.0 * noise_power * libm::pow(10.0, snr_db / 10.0)
}

/// Gaussian point-spread value at an offset from the object position.
pub fn point_spread(dr: f64, ds: f64, r: f64, s: f64) -> f64 {
    libm::exp(-(dr * dr) / (2.0 * r) - (ds * ds) / (2.0 * s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub detection_probability: f64,
    /// Expected clutter points per frame.
    pub clutter_rate: f64,
    /// Area (pixels²) over which clutter is uniform.
    pub clutter_area: f64,
    pub obs_matrix: Matrix2x4<f64>,
    pub obs_noise: Matrix2<f64>,
    /// `None` forces the image SNR to one, which recovers the standard
    /// detection-only likelihood.
    pub image: Option<ImageLikelihood>,
}

impl SensorModel {
    pub fn position_obs_matrix() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    }

    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.clutter_area
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return Err(Error::InvalidParameter("detection probability outside [0, 1]"));
        }
        if !(self.clutter_intensity() > 0.0) || !self.clutter_intensity().is_finite() {
            return Err(Error::InvalidParameter("clutter intensity must be positive"));
        }
        if let Some(img) = &self.image {
            if !(img.template_sigma > 0.0) || img.patch_size == 0 || !(img.noise_power > 0.0) {
                return Err(Error::InvalidParameter("invalid image likelihood parameters"));
            }
        }
        Ok(())
    }
}

/// One frame of sensor data: the raw image and the detections extracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image: Image,
    pub detections: Vec<Vector2<f64>>,
}

/// `log ⟨p̄, g_D(z|·)⟩ - log κ(z)` and the Kalman posterior for detection `z`.
pub fn detection_snr(
    z: &Vector2<f64>,
    prior: &GaussianDensity,
    sensor: &SensorModel,
) -> Result<(f64, GaussianDensity)> {
    let (post, log_lik) = kalman_update(prior, z, &sensor.obs_matrix, &sensor.obs_noise)?;
    Ok((log_lik - libm::log(sensor.clutter_intensity()), post))
}

/// `log σ_T`: log template likelihood at `state` minus the log likelihood of
/// the same patch under the no-object hypothesis.
///
/// The no-object term uses the expected squared distance between the
/// template and a pure-noise patch, so `log σ_T` has zero mean on background.
/// Cells of the patch that fall off the image are dropped and both distances
/// are rescaled by `cells / valid cells`. A patch entirely off the image
/// carries no information and returns zero.
pub fn image_snr_loglik(
    state: &StateVector,
    image: &Image,
    template: &Patch,
    model: &ImageLikelihood,
) -> Result<f64> {
    if template.data().iter().all(|&v| v == 0.0)
        || template.data().iter().any(|v| !v.is_finite())
        || template.size() != model.patch_size
    {
        return Err(Error::InvalidTemplate);
    }
    let sample = image.sample_patch(state[0], state[2], model.patch_size);
    let mu = model.background_mean();
    let var = model.background_variance();
    let mut dist = 0.0;
    let mut base = 0.0;
    let mut valid = 0usize;
    for (v, &t) in sample.values.iter().zip(template.data()) {
        if let Some((y, w2)) = v {
            dist += (y - t) * (y - t);
            base += (mu - t) * (mu - t) + var * w2;
            valid += 1;
        }
    }
    if valid == 0 {
        return Ok(0.0);
    }
    let scale = template.data().len() as f64 / valid as f64;
    let sigma2 = model.template_sigma * model.template_sigma;
    Ok(scale * (base - dist) / sigma2)
}

/// The hybrid per-track factor integrated against the predicted density.
///
/// `j = 0` is a mis-detection: `log(1 - P_D)` plus the sigma-point estimate
/// of the image SNR integral (zero when the image factor is disabled).
/// `j ≥ 1` associates detection `j`: `log P_D` plus the detection SNR.
/// Returns the log factor and the updated density.
pub fn hybrid_phi(
    j: usize,
    prior: &GaussianDensity,
    observation: &Observation,
    sensor: &SensorModel,
    template: Option<&Patch>,
    ut: &UtConfig,
) -> Result<(f64, GaussianDensity)> {
    let pd = sensor.detection_probability;
    if j == 0 {
        let log_miss = libm::log(1.0 - pd);
        match (&sensor.image, template) {
            (Some(model), Some(template)) => {
                let (post, log_int) = unscented_update(
                    prior,
                    |x| image_snr_loglik(x, &observation.image, template, model),
                    ut,
                )?;
                Ok((log_miss + log_int, post))
            }
            _ => Ok((log_miss, prior.clone())),
        }
    } else {
        let z = observation
            .detections
            .get(j - 1)
            .ok_or(Error::InvalidParameter("association index out of range"))?;
        let (log_snr, post) = detection_snr(z, prior, sensor)?;
        Ok((libm::log(pd) + log_snr, post))
    }
}

/// A birth hypothesis for the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent {
    pub label: TrackLabel,
    pub existence: f64,
    pub density: GaussianDensity,
}

/// Births placed on previous-frame detections that no track explained.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveBirth {
    pub existence: f64,
    pub covariance: Matrix4<f64>,
    /// Detections whose association weight is below this spawn a birth.
    pub association_threshold: f64,
}

/// Labeled multi-Bernoulli birth model.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthModel {
    pub static_components: Vec<(f64, GaussianDensity)>,
    pub adaptive: Option<AdaptiveBirth>,
}

impl BirthModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: f64| !(r > 0.0 && r < 1.0);
        if self.static_components.iter().any(|(r, _)| bad(*r))
            || self.adaptive.as_ref().is_some_and(|a| bad(a.existence))
        {
            return Err(Error::InvalidParameter("birth probabilities must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Birth components for `frame`. Static components come first, then one
    /// adaptive component per weakly associated detection of the previous
    /// frame, centred on the detection with zero velocity. Labels are
    /// `(frame, 0..)` in that order.
    pub fn birth_components(
        &self,
        frame: u32,
        previous_detections: &[(Vector2<f64>, f64)],
    ) -> Vec<BirthComponent> {
        let mut out: Vec<BirthComponent> = self
            .static_components
            .iter()
            .map(|(r, g)| (*r, g.clone()))
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, (r, g))| BirthComponent {
                label: TrackLabel::new(frame, i as u32),
                existence: r,
                density: g,
            })
            .collect();
        if let Some(ad) = &self.adaptive {
            for (z, w) in previous_detections {
                if *w < ad.association_threshold {
                    let density = GaussianDensity {
                        mean: Vector4::new(z[0], 0.0, z[1], 0.0),
                        cov: ad.covariance,
                    };
                    out.push(BirthComponent {
                        label: TrackLabel::new(frame, out.len() as u32),
                        existence: ad.existence,
                        density,
                    });
                }
            }
        }
        out
    }
}

/// Exponential moving average of the reference template toward the patch
/// observed at `position`, applied only for confident detections. Cells off
/// the image keep their previous value.
pub fn update_reference_template(
    template: &Patch,
    image: &Image,
    position: Vector2<f64>,
    confident: bool,
    rate: f64,
) -> Patch {
    if !confident {
        return template.clone();
    }
    let sample = image.sample_patch(position[0], position[1], template.size());
    let mut out = template.clone();
    for (t, v) in out.data_mut().iter_mut().zip(&sample.values) {
        if let Some((y, _)) = v {
            *t = (1.0 - rate) * *t + rate * y;
        }
    }
    out
}
