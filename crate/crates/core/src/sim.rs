//! Synthetic scenes: constant-velocity truth, power images and a
//! threshold detector.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::StateVector;
use crate::image::Image;
use crate::label::TrackLabel;
use crate::models::{point_spread, snr_db_to_amplitude2, MotionModel};

/// Cells farther than this from an object receive none of its return.
pub const TEMPLATE_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub label: TrackLabel,
    /// First frame the object exists in.
    pub birth_frame: u32,
    /// Last frame the object exists in.
    pub death_frame: u32,
    pub initial: StateVector,
    pub process_noise: bool,
}

/// Spatial and temporal layout of the per-object SNR.
#[derive(Debug, Clone, PartialEq)]
pub enum SnrLayout {
    Uniform(f64),
    /// Objects left of `split_x` see `left_db`, right of it `right_db`.
    /// The two sides swap every `period` frames when `period > 0`.
    HalfPlane {
        split_x: f64,
        left_db: f64,
        right_db: f64,
        period: u32,
    },
}

impl SnrLayout {
    pub fn snr_db(&self, x: f64, frame: u32) -> f64 {
        match *self {
            SnrLayout::Uniform(s) => s,
            SnrLayout::HalfPlane {
                split_x,
                left_db,
                right_db,
                period,
            } => {
                let swapped = period > 0 && (frame.saturating_sub(1) / period) % 2 == 1;
                let left = x < split_x;
                if left != swapped {
                    left_db
                } else {
                    right_db
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthScenario {
    pub width: usize,
    pub height: usize,
    /// Number of frames, numbered `1..=duration`.
    pub duration: u32,
    pub tracks: Vec<TruthTrack>,
    pub snr: SnrLayout,
    pub sampling_period: f64,
    pub sigma_v: f64,
    /// Per-component variance of the complex pixel noise.
    pub noise_power: f64,
    pub psf_r: f64,
    pub psf_s: f64,
}

impl TruthScenario {
    pub fn validate(&self) -> Result<()> {
        for t in &self.tracks {
            if t.birth_frame == 0 || t.birth_frame > t.death_frame || t.death_frame > self.duration {
                return Err(Error::InvalidParameter("track frames must satisfy 1 <= birth <= death <= duration"));
            }
            if !self.inside(t.initial[0], t.initial[2]) {
                return Err(Error::InvalidParameter("track starts outside the image"));
            }
        }
        if !(self.noise_power > 0.0 && self.psf_r > 0.0 && self.psf_s > 0.0) {
            return Err(Error::InvalidParameter("noise power and point spread must be positive"));
        }
        Ok(())
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// The motion model used to propagate truth.
    pub fn motion(&self) -> MotionModel {
        MotionModel::constant_velocity(self.sampling_period, self.sigma_v)
    }
}

/// One object in one frame of ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthObject {
    pub label: TrackLabel,
    pub state: StateVector,
    /// Set when the position had to be clipped back into the image.
    pub clipped: bool,
}

impl TruthObject {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.state[0], self.state[2])
    }
}

/// Ground truth for frames `1..=duration`; entry `k - 1` holds frame `k`.
pub fn generate_truth(scenario: &TruthScenario, seed: u64) -> Result<Vec<Vec<TruthObject>>> {
    scenario.validate()?;
    let motion = scenario.motion();
    let mut frames = vec![Vec::new(); scenario.duration as usize];
    for (i, track) in scenario.tracks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let mut state = track.initial;
        for k in track.birth_frame..=track.death_frame {
            if k > track.birth_frame {
                state = motion.transition() * state;
                if track.process_noise {
                    let w = Vector2::from_fn(|_, _| StandardNormal.sample(&mut rng));
                    state += motion.noise_gain() * w;
                }
            }
            let mut clipped = false;
            for (axis, max) in [(0, scenario.width), (2, scenario.height)] {
                let hi = (max - 1) as f64;
                if state[axis] < 0.0 || state[axis] > hi {
                    state[axis] = state[axis].clamp(0.0, hi);
                    clipped = true;
                }
            }
            frames[(k - 1) as usize].push(TruthObject {
                label: track.label,
                state,
                clipped,
            });
        }
    }
    Ok(frames)
}

/// A point object to render: position and its SNR in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    pub position: Vector2<f64>,
    pub snr_db: f64,
}

/// Emitters for one frame of truth under the scenario's SNR layout.
pub fn emitters(scenario: &TruthScenario, truth: &[TruthObject], frame: u32) -> Vec<Emitter> {
    truth
        .iter()
        .map(|o| Emitter {
            position: o.position(),
            snr_db: scenario.snr.snr_db(o.state[0], frame),
        })
        .collect()
}

/// Power image `y = |Σ A h + w|²` with circular complex Gaussian noise of
/// per-component variance `noise_power`. `noise_power = 0` renders the
/// noiseless signal.
pub fn render_image(
    width: usize,
    height: usize,
    objects: &[Emitter],
    noise_power: f64,
    psf_r: f64,
    psf_s: f64,
    seed: u64,
) -> Image {
    let mut amp = vec![0.0; width * height];
    for o in objects {
        // A noiseless render keeps the unit-noise amplitude convention.
        let reference = if noise_power > 0.0 { noise_power } else { 1.0 };
        let a = libm::sqrt(snr_db_to_amplitude2(o.snr_db, reference));
        let (x, y) = (o.position[0], o.position[1]);
        let c0 = libm::ceil(x - TEMPLATE_RADIUS).max(0.0) as usize;
        let r0 = libm::ceil(y - TEMPLATE_RADIUS).max(0.0) as usize;
        let c1 = libm::floor(x + TEMPLATE_RADIUS).min(width as f64 - 1.0);
        let r1 = libm::floor(y + TEMPLATE_RADIUS).min(height as f64 - 1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        for r in r0..=r1 as usize {
            for c in c0..=c1 as usize {
                let (dx, dy) = (c as f64 - x, r as f64 - y);
                if dx * dx + dy * dy <= TEMPLATE_RADIUS * TEMPLATE_RADIUS {
                    amp[r * width + c] += a * point_spread(dx, dy, psf_r, psf_s);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = libm::sqrt(noise_power);
    let data = amp
        .into_iter()
        .map(|s| {
            if sd > 0.0 {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let (re, im) = (s + sd * re, sd * im);
                re * re + im * im
            } else {
                s * s
            }
        })
        .collect();
    Image::from_vec(width, height, data).expect("buffer matches dimensions")
}

/// Groups cells above `threshold` into 8-connected clusters and returns the
/// power-weighted centroid of each, ordered by each cluster's first cell in
/// row-major scan order.
pub fn detect(image: &Image, threshold: f64) -> Vec<Vector2<f64>> {
    let (w, h) = (image.width(), image.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !(image.data()[start] > threshold) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut sx, mut sy, mut sp) = (0.0, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            let p = image.data()[i];
            sx += p * c as f64;
            sy += p * r as f64;
            sp += p;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                    if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] && image.data()[j] > threshold {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(Vector2::new(sx / sp, sy / sp));
    }
    out
}
