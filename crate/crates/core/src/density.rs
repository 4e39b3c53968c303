//! Labeled multi-object densities: the GLMB component set, normalisation,
//! and state extraction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianDensity, StateCovariance, StateVector};
use crate::label::TrackLabel;

/// How a track was updated in the frame that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Association {
    /// Not associated with a detection; updated with the image (or not at all).
    Missed,
    /// Associated with the detection at this zero-based index.
    Detection(u32),
}

/// A labeled single-object density inside one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub label: TrackLabel,
    pub density: GaussianDensity,
    pub association: Association,
}

impl Track {
    pub fn new(label: TrackLabel, density: GaussianDensity) -> Self {
        Self {
            label,
            density,
            association: Association::Missed,
        }
    }
}

type TrackKey = (TrackLabel, [u64; 14], Association);

/// One GLMB hypothesis: a label set, its log weight, and one density per label.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmbComponent {
    log_weight: f64,
    tracks: Vec<Track>,
}

impl GlmbComponent {
    /// Sorts the tracks by label. Fails if a label repeats.
    pub fn new(log_weight: f64, mut tracks: Vec<Track>) -> Result<Self> {
        tracks.sort_by(|a, b| a.label.cmp(&b.label));
        if tracks.windows(2).any(|w| w[0].label == w[1].label) {
            return Err(Error::InvalidParameter("duplicate label in hypothesis"));
        }
        Ok(Self { log_weight, tracks })
    }

    pub fn empty(log_weight: f64) -> Self {
        Self {
            log_weight,
            tracks: Vec::new(),
        }
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn weight(&self) -> f64 {
        libm::exp(self.log_weight)
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn labels(&self) -> impl Iterator<Item = TrackLabel> + '_ {
        self.tracks.iter().map(|t| t.label)
    }

    pub fn cardinality(&self) -> usize {
        self.tracks.len()
    }

    pub fn track(&self, label: TrackLabel) -> Option<&Track> {
        self.tracks
            .binary_search_by(|t| t.label.cmp(&label))
            .ok()
            .map(|i| &self.tracks[i])
    }

    /// Identity used when merging duplicates: label set, bit-identical
    /// densities, and association outcome per label.
    pub fn merge_key(&self) -> Vec<TrackKey> {
        self.tracks
            .iter()
            .map(|t| (t.label, t.density.bit_key(), t.association))
            .collect()
    }

    fn label_cmp(&self, other: &Self) -> Ordering {
        self.labels().cmp(other.labels())
    }
}

/// Gaussian mixture returned by [`GlmbDensity::track_density`]. Weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<(f64, GaussianDensity)>,
}

impl GaussianMixture {
    pub fn mean(&self) -> StateVector {
        self.components
            .iter()
            .fold(StateVector::zeros(), |acc, (w, g)| acc + g.mean * *w)
    }

    pub fn covariance(&self) -> StateCovariance {
        let m = self.mean();
        self.components
            .iter()
            .fold(StateCovariance::zeros(), |acc, (w, g)| {
                let d = g.mean - m;
                acc + (g.cov + d * d.transpose()) * *w
            })
    }
}

/// A labeled state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub label: TrackLabel,
    pub state: StateVector,
    pub existence: f64,
}

/// Numerically stable `log Σ exp(x_i)`; `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// GLMB density at frame `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmbDensity {
    pub frame: u32,
    components: Vec<GlmbComponent>,
}

impl GlmbDensity {
    pub fn new(frame: u32, components: Vec<GlmbComponent>) -> Self {
        Self { frame, components }
    }

    /// The density with certainty of no objects.
    pub fn empty(frame: u32) -> Self {
        Self::new(frame, alloc::vec![GlmbComponent::empty(0.0)])
    }

    pub fn components(&self) -> &[GlmbComponent] {
        &self.components
    }

    pub fn into_components(self) -> Vec<GlmbComponent> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Rescales the weights to sum to one, in the log domain.
    pub fn normalize(mut self) -> Result<Self> {
        let total = log_sum_exp(self.components.iter().map(|c| c.log_weight));
        if !total.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        for c in &mut self.components {
            c.log_weight -= total;
        }
        Ok(self)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight()).collect()
    }

    /// Every label present in at least one component, in canonical order.
    pub fn labels(&self) -> BTreeSet<TrackLabel> {
        self.components.iter().flat_map(|c| c.labels()).collect()
    }

    /// `pmf[n]` is the total weight of components with `n` labels. The support
    /// ends at the largest cardinality present.
    pub fn cardinality_distribution(&self) -> Vec<f64> {
        let n_max = self
            .components
            .iter()
            .map(|c| c.cardinality())
            .max()
            .unwrap_or(0);
        let mut pmf = alloc::vec![0.0; n_max + 1];
        for c in &self.components {
            pmf[c.cardinality()] += c.weight();
        }
        pmf
    }

    /// Existence probability of `label`: total weight of the components that
    /// contain it.
    pub fn existence(&self, label: TrackLabel) -> f64 {
        self.components
            .iter()
            .filter(|c| c.track(label).is_some())
            .map(|c| c.weight())
            .sum()
    }

    /// Weighted mixture of the densities for `label`, normalised by its
    /// existence probability. `None` when no component carries the label.
    pub fn track_density(&self, label: TrackLabel) -> Option<GaussianMixture> {
        let mut components = Vec::new();
        let mut r = 0.0;
        for c in &self.components {
            if let Some(t) = c.track(label) {
                let w = c.weight();
                r += w;
                components.push((w, t.density.clone()));
            }
        }
        if components.is_empty() || !(r > 0.0) {
            return None;
        }
        for (w, _) in &mut components {
            *w /= r;
        }
        Some(GaussianMixture { components })
    }

    /// Labels whose existence exceeds `threshold`, each with its mixture mean.
    pub fn estimate_multi_bernoulli(&self, threshold: f64) -> Vec<Estimate> {
        self.labels()
            .into_iter()
            .filter_map(|label| {
                let r = self.existence(label);
                if r <= threshold {
                    return None;
                }
                let mix = self.track_density(label)?;
                Some(Estimate {
                    label,
                    state: mix.mean(),
                    existence: r,
                })
            })
            .collect()
    }

    /// Index of the highest-weight component at the MAP cardinality. Ties go
    /// to the lexicographically smallest label set.
    pub fn map_component(&self) -> Option<usize> {
        let pmf = self.cardinality_distribution();
        let n_star = argmax(&pmf)?;
        let mut best: Option<usize> = None;
        for (i, c) in self.components.iter().enumerate() {
            if c.cardinality() != n_star {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cb = &self.components[b];
                    let better = c.log_weight > cb.log_weight
                        || (c.log_weight == cb.log_weight
                            && c.label_cmp(cb) == Ordering::Less);
                    Some(if better { i } else { b })
                }
            };
        }
        best
    }

    /// Suboptimal marginal multi-object estimate: the best component at the
    /// MAP cardinality, with its own per-track means.
    pub fn estimate_mme(&self) -> Vec<Estimate> {
        let Some(i) = self.map_component() else {
            return Vec::new();
        };
        self.components[i]
            .tracks
            .iter()
            .map(|t| Estimate {
                label: t.label,
                state: t.density.mean,
                existence: self.existence(t.label),
            })
            .collect()
    }

    /// Merges duplicate components (summing weights), drops components whose
    /// normalised weight is below `min_weight`, keeps the `max_components`
    /// heaviest, and renormalises. Output is sorted by descending weight.
    pub fn prune_and_merge(self, max_components: usize, min_weight: f64) -> Result<Self> {
        let frame = self.frame;
        let merged = merge_duplicates(self.components);
        let mut d = GlmbDensity::new(frame, merged).normalize()?;
        let floor = if min_weight > 0.0 {
            libm::log(min_weight)
        } else {
            f64::NEG_INFINITY
        };
        let heaviest = d
            .components
            .iter()
            .map(|c| c.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        // Never prune the whole density away.
        d.components
            .retain(|c| c.log_weight >= floor || c.log_weight == heaviest);
        d.components
            .sort_by(|a, b| b.log_weight.partial_cmp(&a.log_weight).unwrap_or(Ordering::Equal));
        d.components.truncate(max_components.max(1));
        d.normalize()
    }

    /// Checks the structural invariants: distinct sorted labels, finite
    /// weights summing to one within `tol`.
    pub fn check_normalized(&self, tol: f64) -> bool {
        let total: f64 = self.weights().iter().sum();
        (total - 1.0).abs() <= tol
            && self.components.iter().all(|c| {
                c.log_weight.is_finite()
                    && c.tracks.windows(2).all(|w| w[0].label < w[1].label)
            })
    }
}

/// Sums the weights of components with equal [`GlmbComponent::merge_key`].
/// First-seen order is kept.
pub fn merge_duplicates(components: Vec<GlmbComponent>) -> Vec<GlmbComponent> {
    let mut index: BTreeMap<Vec<TrackKey>, usize> = BTreeMap::new();
    let mut out: Vec<GlmbComponent> = Vec::with_capacity(components.len());
    let mut logs: Vec<Vec<f64>> = Vec::with_capacity(components.len());
    for c in components {
        match index.get(&c.merge_key()) {
            Some(&i) => logs[i].push(c.log_weight),
            None => {
                index.insert(c.merge_key(), out.len());
                logs.push(alloc::vec![c.log_weight]);
                out.push(c);
            }
        }
    }
    for (c, l) in out.iter_mut().zip(logs) {
        if l.len() > 1 {
            c.log_weight = log_sum_exp(l);
        }
    }
    out
}

fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}
