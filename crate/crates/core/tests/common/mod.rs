//! Model builders and an independent standard-GLMB reference shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use glmb_core::filter::{FrameContext, ModelSet};
use glmb_core::gaussian::{CovarianceCap, UtConfig};
use glmb_core::models::{
    BirthModel, ImageLikelihood, MaskProfile, MotionModel, Observation, SceneMask, SensorModel,
    SurvivalIntegration, SurvivalModel,
};
use glmb_core::{Association, GaussianDensity, GlmbComponent, GlmbDensity, Image, Track, TrackLabel};
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PD: f64 = 0.98;
pub const PS: f64 = 0.98;
pub const CLUTTER: f64 = 10.0;
pub const AREA: f64 = 10_000.0;

pub fn models(pd: f64, births: Vec<(f64, Vector4<f64>)>, image: bool) -> ModelSet {
    let static_components = births
        .into_iter()
        .map(|(r, m)| {
            let p = Matrix4::from_diagonal(&Vector4::new(3.0, 2.0, 3.0, 2.0));
            (r, GaussianDensity::new(m, p).unwrap())
        })
        .collect();
    let (survival, image) = if image {
        (
            SurvivalModel::AgeDependent {
                mask: SceneMask::border(100, 100, 10.0, MaskProfile::Ramp),
                gamma: 0.1,
                integration: SurvivalIntegration::Mean,
            },
            Some(ImageLikelihood {
                template_sigma: 7.0,
                patch_size: 3,
                noise_power: 1.0,
                nominal_snr_db: 10.0,
                psf_r: 1.0,
                psf_s: 1.0,
            }),
        )
    } else {
        (SurvivalModel::Constant(PS), None)
    };
    ModelSet {
        motion: MotionModel::constant_velocity(1.0, 1.0),
        birth: BirthModel {
            static_components,
            adaptive: None,
        },
        survival,
        sensor: SensorModel {
            detection_probability: pd,
            clutter_rate: CLUTTER,
            clutter_area: AREA,
            obs_matrix: SensorModel::position_obs_matrix(),
            obs_noise: Matrix2::identity() * 16.0,
            image,
        },
        ut: UtConfig::default(),
        cov_cap: CovarianceCap::NONE,
    }
}

pub fn gaussian(x: f64, y: f64, var: f64) -> GaussianDensity {
    GaussianDensity::new(
        Vector4::new(x, 0.5, y, -0.5),
        Matrix4::from_diagonal(&Vector4::new(var, 1.0, var, 1.0)),
    )
    .unwrap()
}

pub fn noise_image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..100 * 100)
        .map(|_| -2.0 * (1.0 - rng.random::<f64>()).ln())
        .collect();
    Image::from_vec(100, 100, data).unwrap()
}

pub fn context<'a>(frame: u32, obs: &'a Observation, models: &'a ModelSet) -> FrameContext<'a> {
    FrameContext::new(frame, obs, models, models.birth.birth_components(frame, &[]))
}

/// Summed weight per (label, association) set; ignores the densities.
pub fn by_association(d: &GlmbDensity) -> AssociationWeights {
    let mut out = BTreeMap::new();
    for c in d.components() {
        let key = c
            .tracks()
            .iter()
            .map(|t| {
                let a = match t.association {
                    Association::Missed => None,
                    Association::Detection(j) => Some(j),
                };
                (t.label, a)
            })
            .collect();
        *out.entry(key).or_insert(0.0) += c.weight();
    }
    out
}

/// Textbook standard-GLMB update written out from scratch: Kalman prediction
/// and update with constant survival and no image term, every positive 1-1
/// association enumerated.
pub fn reference_standard_glmb(
    prior: &GlmbDensity,
    births: &[(TrackLabel, f64, Vector4<f64>, Matrix4<f64>)],
    detections: &[Vector2<f64>],
    pd: f64,
) -> AssociationWeights {
    let f = Matrix4::new(
        1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0,
    );
    // q = G Gᵀ for G = [1/2 0; 1 0; 0 1/2; 0 1]
    let q = Matrix4::new(
        0.25, 0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.5, 0.0, 0.0, 0.5, 1.0,
    );
    let kappa = CLUTTER / AREA;
    let log_lik = |m: &Vector4<f64>, p: &Matrix4<f64>, z: &Vector2<f64>| {
        let s = Matrix2::new(p[(0, 0)] + 16.0, p[(0, 2)], p[(2, 0)], p[(2, 2)] + 16.0);
        let v = Vector2::new(z[0] - m[0], z[1] - m[2]);
        let det = s.determinant();
        let maha = (v.transpose() * s.try_inverse().unwrap() * v)[(0, 0)];
        -0.5 * maha - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
    };
    let mut out = BTreeMap::new();
    for c in prior.components() {
        // (label, log weight of -1, log weights of 0..=M)
        let mut rows: Vec<(TrackLabel, f64, Vec<f64>)> = Vec::new();
        for t in c.tracks() {
            let m = f * t.density.mean;
            let p = f * t.density.cov * f.transpose() + q;
            let mut w = vec![(PS * (1.0 - pd)).ln()];
            for z in detections {
                w.push((PS * pd).ln() + log_lik(&m, &p, z) - kappa.ln());
            }
            rows.push((t.label, (1.0 - PS).ln(), w));
        }
        for (l, r, m, p) in births {
            let mut w = vec![(r * (1.0 - pd)).ln()];
            for z in detections {
                w.push((r * pd).ln() + log_lik(m, p, z) - kappa.ln());
            }
            rows.push((*l, (1.0 - r).ln(), w));
        }
        fn rec(
            rows: &[(TrackLabel, f64, Vec<f64>)],
            i: usize,
            used: &mut Vec<bool>,
            acc: f64,
            key: &mut Vec<(TrackLabel, Option<u32>)>,
            out: &mut BTreeMap<Vec<(TrackLabel, Option<u32>)>, f64>,
        ) {
            if i == rows.len() {
                let mut k = key.clone();
                k.sort();
                *out.entry(k).or_insert(0.0) += acc.exp();
                return;
            }
            let (l, dead, w) = &rows[i];
            if dead.is_finite() {
                rec(rows, i + 1, used, acc + dead, key, out);
            }
            for (j, &lw) in w.iter().enumerate() {
                if !lw.is_finite() || (j > 0 && used[j - 1]) {
                    continue;
                }
                if j > 0 {
                    used[j - 1] = true;
                }
                key.push((*l, if j == 0 { None } else { Some(j as u32 - 1) }));
                rec(rows, i + 1, used, acc + lw, key, out);
                key.pop();
                if j > 0 {
                    used[j - 1] = false;
                }
            }
        }
        let mut used = vec![false; detections.len()];
        rec(&rows, 0, &mut used, c.log_weight(), &mut Vec::new(), &mut out);
    }
    let total: f64 = out.values().sum();
    out.values_mut().for_each(|v| *v /= total);
    out
}

pub type AssociationWeights = BTreeMap<Vec<(TrackLabel, Option<u32>)>, f64>;

/// Largest weight difference over the union of keys.
pub fn max_abs_diff(a: &AssociationWeights, b: &AssociationWeights) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

pub fn two_track_prior() -> GlmbDensity {
    let a = TrackLabel::new(1, 0);
    let b = TrackLabel::new(1, 1);
    GlmbDensity::new(
        3,
        vec![
            GlmbComponent::new(0.7f64.ln(), vec![Track::new(a, gaussian(30.0, 40.0, 4.0)), Track::new(b, gaussian(60.0, 50.0, 6.0))]).unwrap(),
            GlmbComponent::new(0.2f64.ln(), vec![Track::new(a, gaussian(31.0, 41.0, 5.0))]).unwrap(),
            GlmbComponent::empty(0.1f64.ln()),
        ],
    )
}
