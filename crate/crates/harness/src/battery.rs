//! Random small update problems for checking the Gibbs path against exact
//! enumeration.

use glmb_core::density::{GlmbComponent, GlmbDensity, Track};
use glmb_core::filter::oracle::{captured_mass, exact_update_oracle, weight_l1};
use glmb_core::filter::{joint_predict_update, FrameContext, ModelSet};
use glmb_core::gaussian::GaussianDensity;
use glmb_core::models::Observation;
use glmb_core::sim::{render_image, Emitter};
use glmb_core::TrackLabel;
use nalgebra::{Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Variant};
use crate::runner::derive_seed;

/// A prior, one observation and the models to update with.
#[derive(Debug, Clone)]
pub struct Instance {
    pub prior: GlmbDensity,
    pub observation: Observation,
    pub models: ModelSet,
}

impl Instance {
    pub fn frame(&self) -> u32 {
        self.prior.frame + 1
    }

    pub fn context(&self) -> FrameContext<'_> {
        let frame = self.frame();
        FrameContext::new(
            frame,
            &self.observation,
            &self.models,
            self.models.birth.birth_components(frame, &[]),
        )
    }
}

/// How detection and birth probabilities are chosen for an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Configured defaults.
    Nominal,
    /// `P_D` drawn from [0.6, 0.98) and birth existence from [0.02, 0.3).
    /// Posteriors have long tails that 10^4 draws cannot cover.
    Stressed,
}

/// A random instance with up to `max_tracks` existing labels, exactly
/// `births` birth slots and up to `max_detections` detections. The image
/// factor is on and the survival model is age dependent.
pub fn random_instance(
    seed: u64,
    family: Family,
    max_tracks: usize,
    births: usize,
    max_detections: usize,
) -> Instance {
    let mut d = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = Config::default();
    cfg.filter.birth_means = (0..births)
        .map(|_| [d.random_range(20.0..80.0), 0.0, d.random_range(20.0..80.0), 0.0])
        .collect();
    if family == Family::Stressed {
        cfg.filter.birth_existence = d.random_range(0.02..0.3);
        cfg.filter.detection_probability = d.random_range(0.6..0.98);
    }
    let models = cfg.model_set(Variant::GlmbIm).expect("default-derived config is valid");

    let n_labels = d.random_range(0..max_tracks + 1);
    let labels: Vec<TrackLabel> = (0..n_labels)
        .map(|i| TrackLabel::new(d.random_range(0..3), i as u32))
        .collect();
    let means: Vec<Vector4<f64>> = (0..n_labels)
        .map(|_| {
            let (x, y) = (d.random_range(20.0..80.0), d.random_range(20.0..80.0));
            Vector4::new(x, d.random_range(-1.0..1.0), y, d.random_range(-1.0..1.0))
        })
        .collect();
    let n_comp = 1 + d.random_range(0..4);
    let mut comps = Vec::with_capacity(n_comp);
    for _ in 0..n_comp {
        let mut tracks = Vec::new();
        for (&l, &m) in labels.iter().zip(&means) {
            if d.random::<f64>() < 0.7 {
                let jitter = Vector4::new(d.random_range(-1.0..1.0), 0.0, d.random_range(-1.0..1.0), 0.0);
                let cov = Matrix4::from_diagonal(&Vector4::new(
                    d.random_range(1.0..6.0),
                    0.5,
                    d.random_range(1.0..6.0),
                    0.5,
                ));
                tracks.push(Track::new(l, GaussianDensity::new(m + jitter, cov).expect("diagonal positive")));
            }
        }
        comps.push(GlmbComponent::new(d.random_range(-3.0..0.0), tracks).expect("labels distinct"));
    }
    let prior = GlmbDensity::new(3, comps).normalize().expect("finite weights");

    // Objects near some of the predicted means, plus clutter.
    let mut emit = Vec::new();
    let mut detections = Vec::new();
    for m in &means {
        let p = Vector2::new(m[0] + m[1], m[2] + m[3]);
        if d.random::<f64>() < 0.7 {
            emit.push(Emitter { position: p, snr_db: if d.random::<f64>() < 0.5 { 10.0 } else { 7.0 } });
            if detections.len() < max_detections && d.random::<f64>() < 0.7 {
                detections.push(p + Vector2::new(d.random_range(-2.0..2.0), d.random_range(-2.0..2.0)));
            }
        }
    }
    while detections.len() < max_detections && d.random::<f64>() < 0.5 {
        detections.push(Vector2::new(d.random_range(0.0..99.0), d.random_range(0.0..99.0)));
    }
    let image = render_image(100, 100, &emit, 1.0, 1.0, 1.0, derive_seed(seed, &[9]));
    Instance {
        prior,
        observation: Observation { image, detections },
        models,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub l1: f64,
    pub captured_mass: f64,
    pub exact_components: usize,
    pub sampled_components: usize,
}

/// Gibbs-truncated update with `trials` against full enumeration.
pub fn compare(instance: &Instance, trials: usize, seed: u64) -> anyhow::Result<OracleComparison> {
    let ctx = instance.context();
    let exact = exact_update_oracle(&instance.prior, &ctx).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (approx, _) = joint_predict_update(&instance.prior, &ctx, trials, 0.0, seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(OracleComparison {
        l1: weight_l1(&approx, &exact),
        captured_mass: captured_mass(&approx, &exact),
        exact_components: exact.len(),
        sampled_components: approx.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySummary {
    pub family: Family,
    pub instances: usize,
    pub trials: usize,
    pub max_l1: f64,
    pub min_captured_mass: f64,
    pub results: Vec<OracleComparison>,
}

/// The standard battery: up to 3 tracks, 2 births, up to 4 detections.
pub fn run_battery(seed: u64, family: Family, instances: usize, trials: usize) -> anyhow::Result<BatterySummary> {
    let results = (0..instances)
        .map(|i| {
            let inst = random_instance(derive_seed(seed, &[i as u64]), family, 3, 2, 4);
            compare(&inst, trials, derive_seed(seed, &[i as u64, 1]))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(BatterySummary {
        family,
        instances,
        trials,
        max_l1: results.iter().map(|r| r.l1).fold(0.0, f64::max),
        min_captured_mass: results.iter().map(|r| r.captured_mass).fold(1.0, f64::min),
        results,
    })
}
