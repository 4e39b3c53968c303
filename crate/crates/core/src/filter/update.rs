//! One step of the joint prediction-update recursion with Gibbs truncation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::density::{GlmbComponent, GlmbDensity};
use crate::error::Result;

use super::eta::{build_eta, RowCache};
use super::gibbs::{gibbs_sample, init_gamma};
use super::FrameContext;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateDiagnostics {
    /// Gibbs iterations given to each prior component.
    pub trials: Vec<usize>,
    /// Distinct auxiliary vectors kept over all components.
    pub unique_samples: usize,
    /// Candidate components before merging.
    pub candidates: usize,
    /// Components left after merging and pruning.
    pub components: usize,
    /// Rows whose scores hit a numeric failure.
    pub failed_rows: usize,
}

/// Splits `n` trials over `weights` by sequential binomial draws.
pub fn multinomial<R: Rng + ?Sized>(n: usize, weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut out = alloc::vec![0; weights.len()];
    let mut remaining = n as u64;
    let mut mass: f64 = weights.iter().sum();
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let k = if i + 1 == weights.len() || p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).map_or(0, |b| b.sample(rng))
        };
        out[i] = k as usize;
        remaining -= k;
        mass -= w;
    }
    out
}

/// Propagates `density` to `ctx.frame` and updates it with `ctx.observation`.
///
/// Trial counts come from stream 0 of a generator seeded with `seed`;
/// component `h` runs its chain on stream `h + 1`, so the result does not
/// depend on the order in which components are processed.
pub fn joint_predict_update(
    density: &GlmbDensity,
    ctx: &FrameContext<'_>,
    h_max: usize,
    min_weight: f64,
    seed: u64,
) -> Result<(GlmbDensity, UpdateDiagnostics)> {
    let weights = density.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = multinomial(h_max, &weights, &mut rng);
    for (t, &w) in trials.iter_mut().zip(&weights) {
        if *t == 0 && w > min_weight {
            *t = 1;
        }
    }

    let mut cache = RowCache::new();
    let mut candidates = Vec::new();
    let mut unique_samples = 0;
    for (h, (component, &t)) in density.components().iter().zip(&trials).enumerate() {
        if t == 0 {
            continue;
        }
        let eta = build_eta(component, ctx, &mut cache);
        let mut crng = ChaCha8Rng::seed_from_u64(seed);
        crng.set_stream(h as u64 + 1);
        let samples = gibbs_sample(&init_gamma(&eta), t, &eta, &mut crng);
        unique_samples += samples.len();
        for gamma in samples {
            let log_w = component.log_weight() + eta.log_score(&gamma.0);
            if log_w == f64::NEG_INFINITY {
                continue;
            }
            if let Some(tracks) = eta.hypothesis_tracks(&gamma.0) {
                candidates.push(GlmbComponent::new(log_w, tracks)?);
            }
        }
    }
    let failed_rows = cache.failed_rows();
    let n_candidates = candidates.len();
    let out = GlmbDensity::new(ctx.frame, candidates).prune_and_merge(h_max, min_weight)?;
    let diag = UpdateDiagnostics {
        trials,
        unique_samples,
        candidates: n_candidates,
        components: out.len(),
        failed_rows,
    };
    Ok((out, diag))
}
